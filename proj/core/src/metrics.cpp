#include "zsd/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <unordered_map>
#include <unordered_set>

#include <json.hpp>

#include "zsd/error.hpp"

namespace zsd {

std::size_t CanvasMask::count() const {
    return static_cast<std::size_t>(std::count(bits.begin(), bits.end(), std::uint8_t{1}));
}

CanvasMask rasterize_mask(double width, double height, const Box& box, int n, const double* values,
                          double threshold) {
    CanvasMask out;
    if (n <= 0 || !(box.width() > 0.0) || !(box.height() > 0.0)) return out;
    const int px0 = std::max(0, static_cast<int>(std::floor(box.x1)));
    const int py0 = std::max(0, static_cast<int>(std::floor(box.y1)));
    const int px1 = std::min(static_cast<int>(std::ceil(box.x2)), static_cast<int>(std::ceil(width)));
    const int py1 = std::min(static_cast<int>(std::ceil(box.y2)), static_cast<int>(std::ceil(height)));
    if (px1 <= px0 || py1 <= py0) return out;
    out.x0 = px0;
    out.y0 = py0;
    out.w = px1 - px0;
    out.h = py1 - py0;
    out.bits.assign(static_cast<std::size_t>(out.w) * out.h, 0);
    const double bw = box.width();
    const double bh = box.height();
    for (int py = py0; py < py1; ++py) {
        const double cy = py + 0.5;
        if (cy < box.y1 || cy >= box.y2) continue;
        const int gy = std::min(n - 1, std::max(0, static_cast<int>((cy - box.y1) / bh * n)));
        for (int px = px0; px < px1; ++px) {
            const double cx = px + 0.5;
            if (cx < box.x1 || cx >= box.x2) continue;
            const int gx = std::min(n - 1, std::max(0, static_cast<int>((cx - box.x1) / bw * n)));
            if (values[static_cast<std::size_t>(gy) * n + gx] > threshold)
                out.bits[static_cast<std::size_t>(py - py0) * out.w + (px - px0)] = 1;
        }
    }
    return out;
}

CanvasMask rasterize_mask(double width, double height, const Box& box, const MaskGrid& grid) {
    std::vector<double> values(grid.data.size());
    for (std::size_t i = 0; i < grid.data.size(); ++i) values[i] = grid.data[i] ? 1.0 : 0.0;
    return rasterize_mask(width, height, box, grid.size, values.data(), 0.5);
}

CanvasMask rasterize_mask(double width, double height, const Box& box, const MaskProbs& probs, double threshold) {
    return rasterize_mask(width, height, box, probs.size, probs.probs.data(), threshold);
}

std::optional<double> mask_iou(const CanvasMask& a, const CanvasMask& b) {
    const std::size_t ca = a.count();
    const std::size_t cb = b.count();
    if (ca == 0 && cb == 0) return std::nullopt;
    if (ca == 0 || cb == 0) return 0.0;
    const int x0 = std::max(a.x0, b.x0);
    const int y0 = std::max(a.y0, b.y0);
    const int x1 = std::min(a.x0 + a.w, b.x0 + b.w);
    const int y1 = std::min(a.y0 + a.h, b.y0 + b.h);
    std::size_t inter = 0;
    for (int y = y0; y < y1; ++y)
        for (int x = x0; x < x1; ++x) {
            const bool in_a = a.bits[static_cast<std::size_t>(y - a.y0) * a.w + (x - a.x0)] != 0;
            const bool in_b = b.bits[static_cast<std::size_t>(y - b.y0) * b.w + (x - b.x0)] != 0;
            if (in_a && in_b) ++inter;
        }
    const std::size_t uni = ca + cb - inter;
    return static_cast<double>(inter) / static_cast<double>(uni);
}

double harmonic_mean(double seen, double unseen) {
    const double s = seen + unseen;
    if (s <= 0.0) return 0.0;
    return 2.0 * seen * unseen / s;
}

namespace {

// pairwise overlap under the selected matching geometry
double det_gt_iou(const EvalDet& det, const EvalGt& gt, bool by_mask) {
    if (!by_mask) return box_iou(det.box, gt.box);
    if (!det.mask.has_value() || !gt.mask.has_value()) return 0.0;
    return mask_iou(*det.mask, *gt.mask).value_or(0.0);
}

std::vector<std::size_t> ranked_order(const std::vector<EvalDet>& dets) {
    std::vector<std::size_t> idx(dets.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
        if (dets[a].score != dets[b].score) return dets[a].score > dets[b].score;
        return dets[a].order < dets[b].order;
    });
    return idx;
}

// greedy matcher shared by AP and recall; returns per-ranked-det hit flags
std::vector<char> greedy_match(const std::vector<EvalDet>& dets, const std::vector<std::size_t>& ranked,
                               const std::vector<EvalGt>& gts, double iou_threshold, bool by_mask) {
    std::unordered_map<std::int64_t, std::vector<std::size_t>> gt_by_image;
    for (std::size_t g = 0; g < gts.size(); ++g) gt_by_image[gts[g].image_id].push_back(g);
    std::vector<char> gt_used(gts.size(), 0);
    std::vector<char> hits(ranked.size(), 0);
    for (std::size_t r = 0; r < ranked.size(); ++r) {
        const EvalDet& det = dets[ranked[r]];
        auto it = gt_by_image.find(det.image_id);
        if (it == gt_by_image.end()) continue;
        double best = 0.0;
        std::size_t best_g = gts.size();
        for (std::size_t g : it->second) {
            if (gt_used[g]) continue;
            const double iou = det_gt_iou(det, gts[g], by_mask);
            if (iou >= iou_threshold && iou > best) {  // ties keep the lowest index
                best = iou;
                best_g = g;
            }
        }
        if (best_g < gts.size()) {
            gt_used[best_g] = 1;
            hits[r] = 1;
        }
    }
    return hits;
}

}  // namespace

std::optional<double> average_precision(const std::vector<EvalDet>& dets, const std::vector<EvalGt>& gts,
                                        double iou_threshold, bool by_mask) {
    if (gts.empty()) return std::nullopt;
    const auto ranked = ranked_order(dets);
    const auto hits = greedy_match(dets, ranked, gts, iou_threshold, by_mask);

    const double n_gt = static_cast<double>(gts.size());
    std::vector<double> precision(ranked.size());
    std::vector<double> recall(ranked.size());
    std::size_t tp = 0;
    for (std::size_t r = 0; r < ranked.size(); ++r) {
        if (hits[r]) ++tp;
        precision[r] = static_cast<double>(tp) / static_cast<double>(r + 1);
        recall[r] = static_cast<double>(tp) / n_gt;
    }
    // envelope: best precision at or beyond each rank
    for (std::size_t r = precision.size(); r-- > 1;) precision[r - 1] = std::max(precision[r - 1], precision[r]);

    double ap = 0.0;
    std::size_t j = 0;
    for (int g = 0; g <= 100; ++g) {
        const double r = static_cast<double>(g) / 100.0;
        while (j < recall.size() && recall[j] < r) ++j;
        if (j < recall.size()) ap += precision[j];
    }
    return ap / 101.0;
}

std::optional<double> recall_at_k(const std::vector<EvalDet>& dets, const std::vector<EvalGt>& gts,
                                  double iou_threshold, int k, bool by_mask) {
    if (gts.empty()) return std::nullopt;
    // keep the top-k detections per image
    std::unordered_map<std::int64_t, std::vector<std::size_t>> per_image;
    for (std::size_t i = 0; i < dets.size(); ++i) per_image[dets[i].image_id].push_back(i);
    std::vector<EvalDet> kept;
    kept.reserve(dets.size());
    for (auto& [image, idx] : per_image) {
        std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
            if (dets[a].score != dets[b].score) return dets[a].score > dets[b].score;
            return dets[a].order < dets[b].order;
        });
        for (std::size_t i = 0; i < idx.size() && i < static_cast<std::size_t>(std::max(k, 0)); ++i)
            kept.push_back(dets[idx[i]]);
    }
    const auto ranked = ranked_order(kept);
    const auto hits = greedy_match(kept, ranked, gts, iou_threshold, by_mask);
    const auto matched = static_cast<std::size_t>(std::count(hits.begin(), hits.end(), char{1}));
    return static_cast<double>(matched) / static_cast<double>(gts.size());
}

EvalReport evaluate(const std::vector<Detection>& dets, const std::vector<ImageInfo>& images,
                    const std::vector<GroundTruthInstance>& gts, const CategorySplit& split, TaskMode mode,
                    const EvalOptions& options) {
    EvalReport report;
    report.mode = mode;
    report.options = options;

    const bool generalized = mode_is_generalized(mode);
    const bool by_mask = mode_uses_masks(mode);

    std::unordered_map<std::int64_t, const ImageInfo*> image_by_id;
    for (const auto& im : images) {
        if (!image_by_id.emplace(im.id, &im).second)
            throw DataError("duplicate image id " + std::to_string(im.id));
    }
    std::unordered_set<std::string> seen_set(split.seen.begin(), split.seen.end());
    std::unordered_set<std::string> unseen_set(split.unseen.begin(), split.unseen.end());

    auto image_of = [&](std::int64_t id) -> const ImageInfo& {
        auto it = image_by_id.find(id);
        if (it == image_by_id.end()) throw DataError("unknown image id " + std::to_string(id));
        return *it->second;
    };

    // categories scored in this mode, in split order
    std::vector<std::pair<std::string, bool>> cats;  // (name, is_seen)
    if (generalized)
        for (const auto& name : split.seen) cats.emplace_back(name, true);
    for (const auto& name : split.unseen) cats.emplace_back(name, false);

    // bucket detections per category, keeping pipeline rank as tie-break
    std::map<std::string, std::vector<EvalDet>> dets_by_cat;
    for (std::size_t i = 0; i < dets.size(); ++i) {
        const Detection& det = dets[i];
        const bool is_seen = seen_set.count(det.category) > 0;
        if (!is_seen && unseen_set.count(det.category) == 0)
            throw DataError("detection uses unknown category '" + det.category + "'");
        if (!generalized && is_seen) continue;  // ZSD/ZSI score unseen only
        const ImageInfo& im = image_of(det.image_id);
        EvalDet e;
        e.image_id = det.image_id;
        e.score = det.score;
        e.box = det.box;
        e.order = i;
        if (by_mask && det.mask.has_value())
            e.mask = rasterize_mask(im.width, im.height, det.box, *det.mask, options.mask_threshold);
        dets_by_cat[det.category].push_back(std::move(e));
    }

    std::map<std::string, std::vector<EvalGt>> gts_by_cat;
    for (const auto& gt : gts) {
        const ImageInfo& im = image_of(gt.image_id);
        EvalGt e;
        e.image_id = gt.image_id;
        e.box = gt.bbox;
        if (by_mask && gt.mask.has_value()) e.mask = rasterize_mask(im.width, im.height, gt.bbox, *gt.mask);
        gts_by_cat[gt.category].push_back(std::move(e));
    }

    static const std::vector<EvalDet> kNoDets;
    static const std::vector<EvalGt> kNoGts;

    for (const auto& [name, is_seen] : cats) {
        const auto dit = dets_by_cat.find(name);
        const auto git = gts_by_cat.find(name);
        const std::vector<EvalDet>& cdets = dit == dets_by_cat.end() ? kNoDets : dit->second;
        const std::vector<EvalGt>& cgts = git == gts_by_cat.end() ? kNoGts : git->second;
        CategoryScore score;
        score.name = name;
        score.seen = is_seen;
        score.gt_count = static_cast<int>(cgts.size());
        score.ap = average_precision(cdets, cgts, options.map_iou, by_mask);
        for (std::size_t i = 0; i < options.recall_ious.size(); ++i)
            score.recall[i] = recall_at_k(cdets, cgts, options.recall_ious[i], options.recall_k, by_mask);
        report.categories.push_back(std::move(score));
    }

    auto partition_mean = [&](bool want_seen, auto&& field) -> std::optional<double> {
        double sum = 0.0;
        int n = 0;
        for (const auto& c : report.categories) {
            if (c.seen != want_seen) continue;
            const std::optional<double> v = field(c);
            if (!v.has_value()) continue;
            sum += *v;
            ++n;
        }
        if (n == 0) return std::nullopt;
        return sum / n;
    };

    report.map_unseen = partition_mean(false, [](const CategoryScore& c) { return c.ap; });
    for (std::size_t i = 0; i < options.recall_ious.size(); ++i)
        report.recall_unseen[i] = partition_mean(false, [i](const CategoryScore& c) { return c.recall[i]; });
    if (generalized) {
        report.map_seen = partition_mean(true, [](const CategoryScore& c) { return c.ap; });
        for (std::size_t i = 0; i < options.recall_ious.size(); ++i)
            report.recall_seen[i] = partition_mean(true, [i](const CategoryScore& c) { return c.recall[i]; });
        if (report.map_seen && report.map_unseen)
            report.hm_map = harmonic_mean(*report.map_seen, *report.map_unseen);
        for (std::size_t i = 0; i < options.recall_ious.size(); ++i)
            if (report.recall_seen[i] && report.recall_unseen[i])
                report.hm_recall[i] = harmonic_mean(*report.recall_seen[i], *report.recall_unseen[i]);
    }
    return report;
}

namespace {

nlohmann::ordered_json opt_json(const std::optional<double>& v) {
    if (!v.has_value()) return nullptr;
    return *v;
}

}  // namespace

void write_report_json(const std::string& path, const EvalReport& report) {
    nlohmann::ordered_json j;
    j["mode"] = to_string(report.mode);
    j["map_iou"] = report.options.map_iou;
    j["recall_ious"] = report.options.recall_ious;
    j["recall_k"] = report.options.recall_k;

    nlohmann::ordered_json map_j;
    if (mode_is_generalized(report.mode)) {
        map_j["seen"] = opt_json(report.map_seen);
        map_j["unseen"] = opt_json(report.map_unseen);
        map_j["hm"] = opt_json(report.hm_map);
    } else {
        map_j["unseen"] = opt_json(report.map_unseen);
    }
    j["map"] = map_j;

    nlohmann::ordered_json recalls = nlohmann::ordered_json::array();
    for (std::size_t i = 0; i < report.options.recall_ious.size(); ++i) {
        nlohmann::ordered_json r;
        r["iou"] = report.options.recall_ious[i];
        if (mode_is_generalized(report.mode)) {
            r["seen"] = opt_json(report.recall_seen[i]);
            r["unseen"] = opt_json(report.recall_unseen[i]);
            r["hm"] = opt_json(report.hm_recall[i]);
        } else {
            r["unseen"] = opt_json(report.recall_unseen[i]);
        }
        recalls.push_back(std::move(r));
    }
    j["recall"] = recalls;

    nlohmann::ordered_json cats = nlohmann::ordered_json::array();
    for (const auto& c : report.categories) {
        nlohmann::ordered_json cj;
        cj["name"] = c.name;
        cj["seen"] = c.seen;
        cj["gt_count"] = c.gt_count;
        cj["ap"] = opt_json(c.ap);
        nlohmann::ordered_json rc = nlohmann::ordered_json::array();
        for (const auto& r : c.recall) rc.push_back(opt_json(r));
        cj["recall"] = rc;
        cats.push_back(std::move(cj));
    }
    j["categories"] = cats;

    std::ofstream out(path);
    if (!out) throw ConfigError("cannot write report: " + path);
    out << j.dump(2) << '\n';
    if (!out) throw ConfigError("write failed: " + path);
}

void write_report_csv(const std::string& path, const EvalReport& report) {
    std::ofstream out(path);
    if (!out) throw ConfigError("cannot write report: " + path);
    auto cell = [](const std::optional<double>& v) -> std::string {
        if (!v.has_value()) return "";
        char buf[32];
        std::snprintf(buf, sizeof(buf), "%.6f", *v);
        return buf;
    };
    out << "mode,metric,iou,seen,unseen,hm\n";
    const std::string mode = to_string(report.mode);
    out << mode << ",map," << report.options.map_iou << ',' << cell(report.map_seen) << ','
        << cell(report.map_unseen) << ',' << cell(report.hm_map) << '\n';
    for (std::size_t i = 0; i < report.options.recall_ious.size(); ++i)
        out << mode << ",recall," << report.options.recall_ious[i] << ',' << cell(report.recall_seen[i]) << ','
            << cell(report.recall_unseen[i]) << ',' << cell(report.hm_recall[i]) << '\n';
    if (!out) throw ConfigError("write failed: " + path);
}

}  // namespace zsd
