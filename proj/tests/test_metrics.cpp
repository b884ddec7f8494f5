#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <optional>
#include <vector>

#include "support/reference_eval.hpp"
#include "zsd/metrics.hpp"
#include "zsd/rng.hpp"

using namespace zsd;

namespace {

EvalDet edet(std::int64_t image, double score, Box box, std::size_t order) {
    EvalDet d;
    d.image_id = image;
    d.score = score;
    d.box = box;
    d.order = order;
    return d;
}

EvalGt egt(std::int64_t image, Box box) {
    EvalGt g;
    g.image_id = image;
    g.box = box;
    return g;
}

// random scene shared with the brute-force reference
struct Scene {
    std::vector<EvalDet> dets;
    std::vector<EvalGt> gts;
    std::vector<refeval::RDet> rdets;
    std::vector<refeval::RGt> rgts;
};

Scene random_scene(std::uint64_t seed) {
    Rng rng(seed);
    Scene scene;
    const int images = static_cast<int>(rng.uniform_int(1, 3));
    const int n_gt = static_cast<int>(rng.uniform_int(1, 20));
    const int n_det = static_cast<int>(rng.uniform_int(0, 20));
    auto random_box = [&] {
        const double x1 = rng.uniform(0.0, 80.0);
        const double y1 = rng.uniform(0.0, 80.0);
        return Box{x1, y1, x1 + rng.uniform(2.0, 20.0), y1 + rng.uniform(2.0, 20.0)};
    };
    for (int i = 0; i < n_gt; ++i) {
        const auto image = static_cast<std::int64_t>(rng.uniform_int(1, images));
        const Box b = random_box();
        scene.gts.push_back(egt(image, b));
        scene.rgts.push_back({image, {b.x1, b.y1, b.x2, b.y2}});
    }
    for (int i = 0; i < n_det; ++i) {
        const auto image = static_cast<std::int64_t>(rng.uniform_int(1, images));
        // half the detections perturb a ground-truth box, half are random;
        // coarse scores create plenty of ties
        Box b;
        if (rng.uniform() < 0.5 && !scene.gts.empty()) {
            const auto& g = scene.gts[static_cast<std::size_t>(rng.uniform_int(
                0, static_cast<std::int64_t>(scene.gts.size()) - 1))];
            const double dx = rng.uniform(-3.0, 3.0), dy = rng.uniform(-3.0, 3.0);
            b = Box{g.box.x1 + dx, g.box.y1 + dy, g.box.x2 + dx, g.box.y2 + dy};
        } else {
            b = random_box();
        }
        const double score = std::floor(rng.uniform() * 10.0) / 10.0;
        scene.dets.push_back(edet(image, score, b, static_cast<std::size_t>(i)));
        scene.rdets.push_back({image, score, {b.x1, b.y1, b.x2, b.y2}, static_cast<std::size_t>(i)});
    }
    return scene;
}

CanvasMask square_mask(int x0, int y0, int w, int h) {
    CanvasMask m;
    m.x0 = x0;
    m.y0 = y0;
    m.w = w;
    m.h = h;
    m.bits.assign(static_cast<std::size_t>(w * h), 1);
    return m;
}

}  // namespace

TEST_CASE("box_iou: identical, disjoint, and partial overlap") {
    const Box a{0.0, 0.0, 2.0, 2.0};
    CHECK(box_iou(a, a) == 1.0);
    CHECK(box_iou(a, Box{5.0, 5.0, 6.0, 6.0}) == 0.0);
    CHECK(box_iou(a, Box{1.0, 0.0, 3.0, 2.0}) == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
}

TEST_CASE("mask_iou: anchors and the bit-count oracle") {
    const CanvasMask a = square_mask(0, 0, 4, 4);
    CHECK(mask_iou(a, a) == 1.0);
    CHECK(mask_iou(a, square_mask(10, 10, 2, 2)) == 0.0);
    CHECK_FALSE(mask_iou(CanvasMask{}, CanvasMask{}).has_value());

    Rng rng(307);
    for (int trial = 0; trial < 20; ++trial) {
        CanvasMask m1, m2;
        m1.x0 = static_cast<int>(rng.uniform_int(0, 5));
        m1.y0 = static_cast<int>(rng.uniform_int(0, 5));
        m1.w = 6;
        m1.h = 5;
        for (int i = 0; i < 30; ++i) m1.bits.push_back(rng.uniform() < 0.5 ? 1 : 0);
        m2.x0 = static_cast<int>(rng.uniform_int(0, 5));
        m2.y0 = static_cast<int>(rng.uniform_int(0, 5));
        m2.w = 7;
        m2.h = 4;
        for (int i = 0; i < 28; ++i) m2.bits.push_back(rng.uniform() < 0.5 ? 1 : 0);

        // exhaustive per-pixel count over a fixed window
        int inter = 0, uni = 0;
        for (int y = -2; y < 16; ++y)
            for (int x = -2; x < 16; ++x) {
                auto on = [&](const CanvasMask& m) {
                    const int lx = x - m.x0, ly = y - m.y0;
                    if (lx < 0 || ly < 0 || lx >= m.w || ly >= m.h) return false;
                    return m.bits[static_cast<std::size_t>(ly * m.w + lx)] != 0;
                };
                const bool p1 = on(m1), p2 = on(m2);
                if (p1 && p2) ++inter;
                if (p1 || p2) ++uni;
            }
        const auto got = mask_iou(m1, m2);
        if (uni == 0) {
            CHECK((!got.has_value() || *got == 0.0));
        } else {
            REQUIRE(got.has_value());
            CHECK(*got == doctest::Approx(static_cast<double>(inter) / uni).epsilon(1e-12));
        }
    }
}

TEST_CASE("rasterize_mask: pixel centers sample their covering grid cell") {
    // 2x2 grid over a 4x4 box at the canvas origin: left half on
    const double values[4] = {1.0, 0.0, 1.0, 0.0};
    const CanvasMask m = rasterize_mask(8.0, 8.0, Box{0.0, 0.0, 4.0, 4.0}, 2, values, 0.5);
    CHECK(m.count() == 8);  // 2 columns x 4 rows of pixels
    // strictly-greater binarization: cells at exactly the threshold stay off
    const double at_thr[4] = {0.5, 0.5, 0.5, 0.5};
    const CanvasMask empty = rasterize_mask(8.0, 8.0, Box{0.0, 0.0, 4.0, 4.0}, 2, at_thr, 0.5);
    CHECK(empty.count() == 0);
}

TEST_CASE("harmonic_mean: reference table values and fixed points") {
    CHECK(harmonic_mean(47.3, 9.4) == doctest::Approx(15.7).epsilon(0.05 / 15.7));
    CHECK(harmonic_mean(68.5, 55.1) == doctest::Approx(61.1).epsilon(0.05 / 61.1));
    CHECK(harmonic_mean(0.42, 0.42) == doctest::Approx(0.42).epsilon(1e-15));
    CHECK(harmonic_mean(0.0, 0.0) == 0.0);
}

TEST_CASE("average_precision: anchor precision-recall shapes") {
    const Box g{0.0, 0.0, 10.0, 10.0};
    const std::vector<EvalGt> gts{egt(1, g)};

    SUBCASE("single correct detection scores 1.0") {
        const std::vector<EvalDet> dets{edet(1, 0.9, g, 0)};
        CHECK(average_precision(dets, gts, 0.5, false) == 1.0);
    }
    SUBCASE("true positive above a false positive still scores 1.0") {
        const std::vector<EvalDet> dets{edet(1, 0.9, g, 0), edet(1, 0.8, Box{50, 50, 60, 60}, 1)};
        CHECK(average_precision(dets, gts, 0.5, false) == 1.0);
    }
    SUBCASE("false positive above the true positive halves the envelope") {
        const std::vector<EvalDet> dets{edet(1, 0.95, Box{50, 50, 60, 60}, 0), edet(1, 0.9, g, 1)};
        CHECK(*average_precision(dets, gts, 0.5, false) == doctest::Approx(0.5).epsilon(1e-12));
    }
    SUBCASE("all false positives score 0.0") {
        const std::vector<EvalDet> dets{edet(1, 0.9, Box{50, 50, 60, 60}, 0)};
        CHECK(average_precision(dets, gts, 0.5, false) == 0.0);
    }
    SUBCASE("no ground truth, no value") {
        CHECK_FALSE(average_precision({}, {}, 0.5, false).has_value());
    }
    SUBCASE("a detection without a mask never matches in mask mode") {
        std::vector<EvalGt> masked = gts;
        masked[0].mask = square_mask(0, 0, 10, 10);
        const std::vector<EvalDet> dets{edet(1, 0.9, g, 0)};
        CHECK(average_precision(dets, masked, 0.5, true) == 0.0);
    }
}

TEST_CASE("average_precision: invariant under order-preserving score maps") {
    const Scene scene = random_scene(881);
    const auto base = average_precision(scene.dets, scene.gts, 0.5, false);
    std::vector<EvalDet> rescaled = scene.dets;
    for (auto& d : rescaled) d.score = d.score / 2.0 + 0.1;
    const auto mapped = average_precision(rescaled, scene.gts, 0.5, false);
    REQUIRE(base.has_value());
    REQUIRE(mapped.has_value());
    CHECK(*base == doctest::Approx(*mapped).epsilon(1e-12));
}

TEST_CASE("average_precision: a trailing low-score false positive never helps") {
    for (std::uint64_t seed : {911ULL, 913ULL, 917ULL}) {
        Scene scene = random_scene(seed);
        const auto base = average_precision(scene.dets, scene.gts, 0.5, false);
        std::vector<EvalDet> extra = scene.dets;
        extra.push_back(edet(1, -1.0, Box{500.0, 500.0, 501.0, 501.0}, extra.size()));
        const auto with_fp = average_precision(extra, scene.gts, 0.5, false);
        REQUIRE(base.has_value());
        REQUIRE(with_fp.has_value());
        CHECK(*with_fp <= *base + 1e-15);
    }
}

TEST_CASE("recall_at_k: anchors and threshold monotonicity") {
    const Box g1{0.0, 0.0, 10.0, 10.0};
    const Box g2{30.0, 30.0, 40.0, 40.0};
    const std::vector<EvalGt> gts{egt(1, g1), egt(1, g2)};

    SUBCASE("one of two matched gives 0.5") {
        const std::vector<EvalDet> dets{edet(1, 0.9, g1, 0)};
        CHECK(recall_at_k(dets, gts, 0.5, 100, false) == 0.5);
    }
    SUBCASE("recall is non-increasing in the IoU threshold") {
        const Scene scene = random_scene(919);
        const auto r4 = recall_at_k(scene.dets, scene.gts, 0.4, 100, false);
        const auto r5 = recall_at_k(scene.dets, scene.gts, 0.5, 100, false);
        const auto r6 = recall_at_k(scene.dets, scene.gts, 0.6, 100, false);
        REQUIRE(r4.has_value());
        CHECK(*r6 <= *r5);
        CHECK(*r5 <= *r4);
    }
    SUBCASE("the per-image budget limits matches") {
        const std::vector<EvalDet> dets{edet(1, 0.9, g1, 0), edet(1, 0.8, g2, 1)};
        CHECK(recall_at_k(dets, gts, 0.5, 1, false) == 0.5);
        CHECK(recall_at_k(dets, gts, 0.5, 2, false) == 1.0);
    }
}

TEST_CASE("ranking metrics agree with the brute-force reference on seeded scenes") {
    for (std::uint64_t seed = 1; seed <= 20; ++seed) {
        const Scene scene = random_scene(10000 + seed);
        for (double thr : {0.4, 0.5, 0.6}) {
            const auto got = average_precision(scene.dets, scene.gts, thr, false);
            const auto want = refeval::average_precision(scene.rdets, scene.rgts, thr);
            REQUIRE(got.has_value() == want.has_value());
            if (got) CHECK(std::abs(*got - *want) <= 1e-9);
        }
        for (int k : {3, 100}) {
            const auto got = recall_at_k(scene.dets, scene.gts, 0.5, k, false);
            const auto want = refeval::recall_at_k(scene.rdets, scene.rgts, 0.5, k);
            REQUIRE(got.has_value() == want.has_value());
            if (got) CHECK(std::abs(*got - *want) <= 1e-9);
        }
    }
}

// ------------------------------------------------------------- evaluate

namespace {

struct EvalFixture {
    std::vector<ImageInfo> images;
    CategorySplit split;
    std::vector<GroundTruthInstance> gts;
    std::vector<Detection> perfect;
};

MaskGrid full_grid(int n) {
    MaskGrid m;
    m.size = n;
    m.data.assign(static_cast<std::size_t>(n * n), 1);
    return m;
}

EvalFixture make_fixture() {
    EvalFixture f;
    f.images = {{1, 64.0, 64.0}, {2, 64.0, 64.0}};
    f.split.seen = {"s0", "s1"};
    f.split.unseen = {"u0"};
    f.gts.push_back({1, "s0", Box{5.0, 5.0, 20.0, 20.0}, full_grid(4)});
    f.gts.push_back({1, "u0", Box{30.0, 30.0, 50.0, 50.0}, full_grid(4)});
    f.gts.push_back({2, "s1", Box{10.0, 10.0, 30.0, 30.0}, full_grid(4)});
    for (const auto& g : f.gts) {
        Detection d;
        d.image_id = g.image_id;
        d.category = g.category;
        d.origin = g.category == "u0" ? Origin::Unseen : Origin::Seen;
        d.score = 0.9;
        d.box = g.bbox;
        MaskProbs probs;
        probs.size = 4;
        probs.probs.assign(16, 1.0);
        d.mask = probs;
        f.perfect.push_back(d);
    }
    return f;
}

}  // namespace

TEST_CASE("evaluate: perfect predictions score 1.0 everywhere") {
    const EvalFixture f = make_fixture();
    for (TaskMode mode : {TaskMode::GZSD, TaskMode::GZSI}) {
        const EvalReport report = evaluate(f.perfect, f.images, f.gts, f.split, mode);
        REQUIRE(report.map_seen.has_value());
        REQUIRE(report.map_unseen.has_value());
        CHECK(*report.map_seen == 1.0);
        CHECK(*report.map_unseen == 1.0);
        REQUIRE(report.hm_map.has_value());
        CHECK(*report.hm_map == doctest::Approx(1.0).epsilon(1e-12));
        for (const auto& r : report.recall_seen)
            if (r) CHECK(*r == 1.0);
    }
}

TEST_CASE("evaluate: empty predictions score zero") {
    const EvalFixture f = make_fixture();
    const EvalReport report = evaluate({}, f.images, f.gts, f.split, TaskMode::GZSD);
    REQUIRE(report.map_seen.has_value());
    CHECK(*report.map_seen == 0.0);
    CHECK(*report.map_unseen == 0.0);
    CHECK(*report.hm_map == 0.0);
}

TEST_CASE("evaluate: unseen-only modes carry no seen-category rows") {
    const EvalFixture f = make_fixture();
    const EvalReport report = evaluate(f.perfect, f.images, f.gts, f.split, TaskMode::ZSD);
    CHECK(!report.categories.empty());
    for (const auto& row : report.categories) CHECK_FALSE(row.seen);
    CHECK_FALSE(report.map_seen.has_value());
    CHECK_FALSE(report.hm_map.has_value());
    REQUIRE(report.map_unseen.has_value());
    CHECK(*report.map_unseen == 1.0);
}

TEST_CASE("evaluate: generalized reports include harmonic means") {
    const EvalFixture f = make_fixture();
    const EvalReport report = evaluate(f.perfect, f.images, f.gts, f.split, TaskMode::GZSD);
    REQUIRE(report.hm_map.has_value());
    CHECK(*report.hm_map == doctest::Approx(harmonic_mean(*report.map_seen, *report.map_unseen)).epsilon(1e-12));
    for (int i = 0; i < 3; ++i) REQUIRE(report.hm_recall[static_cast<std::size_t>(i)].has_value());
}

TEST_CASE("evaluate: categories without ground truth stay out of the averages") {
    EvalFixture f = make_fixture();
    f.split.unseen.push_back("u1");  // no GT, no detections
    const EvalReport report = evaluate(f.perfect, f.images, f.gts, f.split, TaskMode::GZSD);
    CHECK(*report.map_unseen == 1.0);
    for (const auto& row : report.categories)
        if (row.name == "u1") CHECK_FALSE(row.ap.has_value());
}

TEST_CASE("evaluate: unknown categories or images are data errors") {
    const EvalFixture f = make_fixture();
    std::vector<Detection> ghost = f.perfect;
    ghost[0].category = "ghost";
    CHECK_THROWS_AS(evaluate(ghost, f.images, f.gts, f.split, TaskMode::GZSD), DataError);
    std::vector<Detection> lost = f.perfect;
    lost[0].image_id = 99;
    CHECK_THROWS_AS(evaluate(lost, f.images, f.gts, f.split, TaskMode::GZSD), DataError);
}

TEST_CASE("evaluate: inputs are left untouched") {
    const EvalFixture f = make_fixture();
    auto dets = f.perfect;
    auto gts = f.gts;
    evaluate(dets, f.images, gts, f.split, TaskMode::GZSI);
    REQUIRE(dets.size() == f.perfect.size());
    for (std::size_t i = 0; i < dets.size(); ++i) {
        CHECK(dets[i].score == f.perfect[i].score);
        CHECK(dets[i].box.x1 == f.perfect[i].box.x1);
        CHECK(dets[i].category == f.perfect[i].category);
    }
    for (std::size_t i = 0; i < gts.size(); ++i) CHECK(gts[i].bbox.x1 == f.gts[i].bbox.x1);
}
