#include "zsd/infer.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <tuple>
#include <unordered_set>

#include "zsd/error.hpp"

namespace zsd {

std::string to_string(Origin o) { return o == Origin::Seen ? "seen" : "unseen"; }

Origin parse_origin(const std::string& s) {
    if (s == "seen") return Origin::Seen;
    if (s == "unseen") return Origin::Unseen;
    throw DataError("unknown detection origin: '" + s + "'");
}

void validate(const InferConfig& config) {
    if (config.beta < 0.0 || !std::isfinite(config.beta))
        throw ConfigError("beta must be finite and non-negative");
    if (config.nms_iou < 0.0 || config.nms_iou > 1.0) throw ConfigError("nms_iou must lie in [0, 1]");
    if (config.max_detections < 0) throw ConfigError("max_detections must be non-negative");
    if (config.mask_threshold < 0.0 || config.mask_threshold > 1.0)
        throw ConfigError("mask_threshold must lie in [0, 1]");
}

Box decode_box(const Box& proposal, const Eigen::Vector4d& deltas,
               std::optional<std::pair<double, double>> bounds) {
    const double pw = proposal.width();
    const double ph = proposal.height();
    if (!(pw > 0.0) || !(ph > 0.0)) throw DataError("decode_box: proposal has non-positive extent");
    Box out;
    out.x1 = proposal.x1 + deltas(0) * pw;
    out.y1 = proposal.y1 + deltas(1) * ph;
    out.x2 = proposal.x2 + deltas(2) * pw;
    out.y2 = proposal.y2 + deltas(3) * ph;
    if (out.x1 > out.x2) std::swap(out.x1, out.x2);
    if (out.y1 > out.y2) std::swap(out.y1, out.y2);
    if (bounds.has_value()) {
        out.x1 = std::clamp(out.x1, 0.0, bounds->first);
        out.x2 = std::clamp(out.x2, 0.0, bounds->first);
        out.y1 = std::clamp(out.y1, 0.0, bounds->second);
        out.y2 = std::clamp(out.y2, 0.0, bounds->second);
    }
    return out;
}

std::vector<Detection> beta_filter(std::vector<Detection> dets, double beta) {
    std::vector<Detection> out;
    out.reserve(dets.size());
    for (auto& d : dets)
        if (!(d.origin == Origin::Seen && d.score < beta)) out.push_back(std::move(d));
    return out;
}

std::vector<Detection> per_class_nms(std::vector<Detection> dets, double iou_threshold) {
    std::map<std::pair<std::int64_t, std::string>, std::vector<std::size_t>> groups;
    for (std::size_t i = 0; i < dets.size(); ++i) groups[{dets[i].image_id, dets[i].category}].push_back(i);

    std::vector<char> keep(dets.size(), 0);
    for (auto& [key, idx] : groups) {
        std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
            if (dets[a].score != dets[b].score) return dets[a].score > dets[b].score;
            return a < b;
        });
        std::vector<char> dead(idx.size(), 0);
        for (std::size_t a = 0; a < idx.size(); ++a) {
            if (dead[a]) continue;
            keep[idx[a]] = 1;
            for (std::size_t b = a + 1; b < idx.size(); ++b) {
                if (dead[b]) continue;
                if (box_iou(dets[idx[a]].box, dets[idx[b]].box) > iou_threshold) dead[b] = 1;
            }
        }
    }

    std::vector<Detection> out;
    out.reserve(dets.size());
    for (std::size_t i = 0; i < dets.size(); ++i)
        if (keep[i]) out.push_back(std::move(dets[i]));
    return out;
}

std::vector<Detection> top_k_per_image(std::vector<Detection> dets, int k) {
    std::map<std::int64_t, std::vector<std::size_t>> groups;
    for (std::size_t i = 0; i < dets.size(); ++i) groups[dets[i].image_id].push_back(i);
    std::vector<Detection> out;
    out.reserve(dets.size());
    for (auto& [image, idx] : groups) {
        std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
            if (dets[a].score != dets[b].score) return dets[a].score > dets[b].score;
            return a < b;
        });
        const std::size_t take = std::min(idx.size(), static_cast<std::size_t>(std::max(k, 0)));
        for (std::size_t i = 0; i < take; ++i) out.push_back(std::move(dets[idx[i]]));
    }
    return out;
}

namespace {

// Re-register a sigmoid probability grid from the proposal box onto the
// final decoded box (nearest neighbor at destination cell centers; cells
// outside the proposal read 0).
MaskProbs register_mask(const Vector& logits, int n, const Box& src, const Box& dst) {
    MaskProbs out;
    out.size = n;
    out.probs.assign(static_cast<std::size_t>(n) * n, 0.0);
    const double sw = src.width();
    const double sh = src.height();
    const double dw = dst.width();
    const double dh = dst.height();
    if (!(dw > 0.0) || !(dh > 0.0)) return out;  // fully clipped box: empty mask
    for (int gy = 0; gy < n; ++gy) {
        const double cy = dst.y1 + (gy + 0.5) / n * dh;
        for (int gx = 0; gx < n; ++gx) {
            const double cx = dst.x1 + (gx + 0.5) / n * dw;
            if (cx < src.x1 || cx >= src.x2 || cy < src.y1 || cy >= src.y2) continue;
            auto sx = static_cast<int>((cx - src.x1) / sw * n);
            auto sy = static_cast<int>((cy - src.y1) / sh * n);
            sx = std::min(std::max(sx, 0), n - 1);
            sy = std::min(std::max(sy, 0), n - 1);
            const double l = logits(static_cast<Eigen::Index>(sy) * n + sx);
            out.probs[static_cast<std::size_t>(gy) * n + gx] = 1.0 / (1.0 + std::exp(-l));
        }
    }
    return out;
}

}  // namespace

std::vector<Detection> predict_image(const std::vector<ProposalRecord>& proposals, const HeadParams& params,
                                     const EmbeddingTable& table, const CategorySplit& split,
                                     const InferConfig& config,
                                     std::optional<std::pair<double, double>> bounds) {
    validate(config);
    validate_split(table, split);
    const auto s_count = static_cast<Eigen::Index>(split.seen.size());
    const auto u_count = static_cast<Eigen::Index>(split.unseen.size());

    const EmbeddingTable seen_raw = subtable(table, split.seen);
    const Matrix seen_aug_norm = augmented_seen_matrix(seen_raw, params.background);
    const Matrix seen_rows_norm = seen_aug_norm.topRows(s_count);
    Matrix unseen_norm(0, table.dim());
    if (u_count > 0) unseen_norm = row_normalize(subtable(table, split.unseen).vectors);

    const bool want_masks = mode_uses_masks(config.mode);

    std::vector<Detection> candidates;
    candidates.reserve(proposals.size() * static_cast<std::size_t>(s_count + u_count));
    for (const ProposalRecord& prop : proposals) {
        const Vector probs = class_probabilities(prop.z, params, seen_aug_norm, unseen_norm);
        const Matrix seen_deltas = reg_deltas(prop.z, params, seen_rows_norm);
        Matrix unseen_deltas;
        if (u_count > 0)
            unseen_deltas = unseen_reg_by_variant(prop.z, params, seen_rows_norm, unseen_norm, config.variant);

        Matrix seen_mask_logits;
        Matrix unseen_mask_logits;
        const bool have_zm = want_masks && prop.zm.has_value() && params.t() > 0;
        if (have_zm) {
            seen_mask_logits = seg_logits(*prop.zm, params, seen_rows_norm);
            if (u_count > 0)
                unseen_mask_logits =
                    unseen_seg_by_variant(*prop.zm, params, seen_rows_norm, unseen_norm, config.variant);
        }

        // background (row s_count of the softmax) never becomes a candidate
        for (Eigen::Index c = 0; c < s_count; ++c) {
            Detection det;
            det.image_id = prop.image_id;
            det.category = split.seen[static_cast<std::size_t>(c)];
            det.origin = Origin::Seen;
            det.score = probs(c);
            det.box = decode_box(prop.box, seen_deltas.row(c).transpose(), bounds);
            if (have_zm) det.mask = register_mask(seen_mask_logits.col(c), prop.zm->n, prop.box, det.box);
            candidates.push_back(std::move(det));
        }
        for (Eigen::Index u = 0; u < u_count; ++u) {
            Detection det;
            det.image_id = prop.image_id;
            det.category = split.unseen[static_cast<std::size_t>(u)];
            det.origin = Origin::Unseen;
            det.score = probs(s_count + 1 + u);
            det.box = decode_box(prop.box, unseen_deltas.row(u).transpose(), bounds);
            if (have_zm) det.mask = register_mask(unseen_mask_logits.col(u), prop.zm->n, prop.box, det.box);
            candidates.push_back(std::move(det));
        }
    }

    if (config.beta_after_nms) {
        candidates = per_class_nms(std::move(candidates), config.nms_iou);
        candidates = beta_filter(std::move(candidates), config.beta);
    } else {
        candidates = beta_filter(std::move(candidates), config.beta);
        candidates = per_class_nms(std::move(candidates), config.nms_iou);
    }
    return top_k_per_image(std::move(candidates), config.max_detections);
}

std::vector<Detection> predict_dataset(const std::vector<ProposalRecord>& proposals, const HeadParams& params,
                                       const EmbeddingTable& table, const CategorySplit& split,
                                       const InferConfig& config,
                                       const std::map<std::int64_t, std::pair<double, double>>& image_bounds) {
    // group per image in first-appearance order
    std::vector<std::int64_t> order;
    std::map<std::int64_t, std::vector<ProposalRecord>> groups;
    for (const auto& prop : proposals) {
        auto [it, inserted] = groups.try_emplace(prop.image_id);
        if (inserted) order.push_back(prop.image_id);
        it->second.push_back(prop);
    }
    std::vector<Detection> out;
    for (std::int64_t image : order) {
        std::optional<std::pair<double, double>> bounds;
        if (auto it = image_bounds.find(image); it != image_bounds.end()) bounds = it->second;
        auto dets = predict_image(groups.at(image), params, table, split, config, bounds);
        for (auto& d : dets) out.push_back(std::move(d));
    }
    return out;
}

}  // namespace zsd
