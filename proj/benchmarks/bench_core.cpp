// Microbenchmarks for the hot paths: classifier logits, mask logits,
// per-class NMS, and average precision.

#include <benchmark/benchmark.h>

#include <vector>

#include "zsd/embedding.hpp"
#include "zsd/heads.hpp"
#include "zsd/infer.hpp"
#include "zsd/metrics.hpp"
#include "zsd/rng.hpp"

namespace {

zsd::HeadParams make_params(int d, int p, int t, zsd::Rng& rng) {
    zsd::HeadParams params;
    params.w_cls = zsd::Matrix::NullaryExpr(d, p, [&] { return rng.normal(); });
    for (auto& w : params.w_reg) w = zsd::Matrix::NullaryExpr(d, p, [&] { return rng.normal(); });
    params.w_seg = zsd::Matrix::NullaryExpr(d, t, [&] { return rng.normal(); });
    zsd::Vector b = zsd::Vector::NullaryExpr(d, [&] { return rng.normal(); });
    params.background = zsd::BackgroundMode::learned(b);
    return params;
}

zsd::Matrix random_unit_rows(int k, int d, zsd::Rng& rng) {
    zsd::Matrix rows = zsd::Matrix::NullaryExpr(k, d, [&] { return rng.normal(); });
    return zsd::row_normalize(rows);
}

void bm_cls_logits(benchmark::State& state) {
    const int d = 64, p = 256, seen = 48;
    zsd::Rng rng(7);
    zsd::HeadParams params = make_params(d, p, 8, rng);
    zsd::Matrix seen_aug = random_unit_rows(seen + 1, d, rng);
    zsd::Vector z = zsd::Vector::NullaryExpr(p, [&] { return rng.normal(); });
    for (auto _ : state) {
        zsd::Vector logits = zsd::cls_logits_seen(z, params, seen_aug);
        benchmark::DoNotOptimize(logits.data());
    }
}
BENCHMARK(bm_cls_logits);

void bm_seg_logits(benchmark::State& state) {
    const int d = 64, t = 32, seen = 48, n = 14;
    zsd::Rng rng(11);
    zsd::HeadParams params = make_params(d, 128, t, rng);
    zsd::Matrix rows = random_unit_rows(seen, d, rng);
    zsd::SpatialFeatures zm;
    zm.n = n;
    zm.t = t;
    zm.values = zsd::Matrix::NullaryExpr(n * n, t, [&] { return rng.normal(); });
    for (auto _ : state) {
        zsd::Matrix logits = zsd::seg_logits(zm, params, rows);
        benchmark::DoNotOptimize(logits.data());
    }
}
BENCHMARK(bm_seg_logits);

std::vector<zsd::Detection> random_detections(int count, zsd::Rng& rng) {
    std::vector<zsd::Detection> dets;
    dets.reserve(count);
    for (int i = 0; i < count; ++i) {
        zsd::Detection det;
        det.image_id = i % 4;
        det.category = "cat" + std::to_string(i % 6);
        det.score = rng.uniform();
        double x = rng.uniform(0.0, 200.0), y = rng.uniform(0.0, 200.0);
        det.box = {x, y, x + rng.uniform(10.0, 60.0), y + rng.uniform(10.0, 60.0)};
        dets.push_back(det);
    }
    return dets;
}

void bm_nms(benchmark::State& state) {
    zsd::Rng rng(13);
    auto dets = random_detections(512, rng);
    for (auto _ : state) {
        auto kept = zsd::per_class_nms(dets, 0.5);
        benchmark::DoNotOptimize(kept.size());
    }
}
BENCHMARK(bm_nms);

void bm_average_precision(benchmark::State& state) {
    zsd::Rng rng(17);
    std::vector<zsd::EvalDet> dets;
    std::vector<zsd::EvalGt> gts;
    for (int i = 0; i < 400; ++i) {
        double x = rng.uniform(0.0, 200.0), y = rng.uniform(0.0, 200.0);
        zsd::EvalDet det;
        det.image_id = i % 8;
        det.score = rng.uniform();
        det.box = {x, y, x + 30.0, y + 30.0};
        det.order = static_cast<std::size_t>(i);
        dets.push_back(det);
        if (i % 2 == 0) {
            zsd::EvalGt gt;
            gt.image_id = i % 8;
            gt.box = {x + rng.uniform(-5.0, 5.0), y + rng.uniform(-5.0, 5.0), x + 30.0, y + 30.0};
            gts.push_back(gt);
        }
    }
    for (auto _ : state) {
        auto ap = zsd::average_precision(dets, gts, 0.5, false);
        benchmark::DoNotOptimize(ap);
    }
}
BENCHMARK(bm_average_precision);

}  // namespace

BENCHMARK_MAIN();
