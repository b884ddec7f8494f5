#include "zsd/matching.hpp"

#include <unordered_map>

#include "zsd/error.hpp"

namespace zsd {

Eigen::Vector4d encode_box(const Box& proposal, const Box& target) {
    const double pw = proposal.width();
    const double ph = proposal.height();
    if (!(pw > 0.0) || !(ph > 0.0)) throw DataError("encode_box: proposal has non-positive extent");
    Eigen::Vector4d t;
    t(0) = (target.x1 - proposal.x1) / pw;
    t(1) = (target.y1 - proposal.y1) / ph;
    t(2) = (target.x2 - proposal.x2) / pw;
    t(3) = (target.y2 - proposal.y2) / ph;
    return t;
}

std::vector<std::uint8_t> resample_mask(const MaskGrid& src, const Box& src_box, const Box& dst_box, int n) {
    if (n <= 0) throw DataError("resample_mask: grid size must be positive");
    std::vector<std::uint8_t> out(static_cast<std::size_t>(n) * static_cast<std::size_t>(n), 0);
    if (src.empty()) return out;
    const double sw = src_box.width();
    const double sh = src_box.height();
    if (!(sw > 0.0) || !(sh > 0.0)) throw DataError("resample_mask: source box has non-positive extent");
    for (int gy = 0; gy < n; ++gy) {
        const double cy = dst_box.y1 + (gy + 0.5) / n * dst_box.height();
        for (int gx = 0; gx < n; ++gx) {
            const double cx = dst_box.x1 + (gx + 0.5) / n * dst_box.width();
            if (cx < src_box.x1 || cx >= src_box.x2 || cy < src_box.y1 || cy >= src_box.y2) continue;
            auto sx = static_cast<int>((cx - src_box.x1) / sw * src.size);
            auto sy = static_cast<int>((cy - src_box.y1) / sh * src.size);
            sx = std::min(std::max(sx, 0), src.size - 1);
            sy = std::min(std::max(sy, 0), src.size - 1);
            out[static_cast<std::size_t>(gy) * n + gx] =
                src.data[static_cast<std::size_t>(sy) * src.size + sx];
        }
    }
    return out;
}

std::vector<MatchedSample> match_proposals(const std::vector<ProposalRecord>& proposals,
                                           const std::vector<GroundTruthInstance>& gts, double iou_threshold,
                                           const std::vector<std::string>& seen_names) {
    std::unordered_map<std::string, int> seen_index;
    for (std::size_t i = 0; i < seen_names.size(); ++i) seen_index[seen_names[i]] = static_cast<int>(i);

    // group GT indices per image, preserving annotation order for tie-breaks
    std::unordered_map<std::int64_t, std::vector<std::size_t>> by_image;
    for (std::size_t g = 0; g < gts.size(); ++g) {
        if (seen_index.find(gts[g].category) == seen_index.end())
            throw DataError("training ground truth uses non-seen category '" + gts[g].category + "'");
        by_image[gts[g].image_id].push_back(g);
    }

    std::vector<MatchedSample> out;
    out.reserve(proposals.size());
    for (std::size_t pi = 0; pi < proposals.size(); ++pi) {
        const ProposalRecord& prop = proposals[pi];
        MatchedSample sample;
        sample.proposal_index = pi;
        double best = 0.0;
        int best_gt = -1;
        if (auto it = by_image.find(prop.image_id); it != by_image.end()) {
            for (std::size_t g : it->second) {
                const double iou = box_iou(prop.box, gts[g].bbox);
                if (iou > best) {  // strict: ties keep the lowest index
                    best = iou;
                    best_gt = static_cast<int>(g);
                }
            }
        }
        if (best_gt >= 0 && best >= iou_threshold) {
            const GroundTruthInstance& gt = gts[static_cast<std::size_t>(best_gt)];
            sample.is_background = false;
            sample.iou = best;
            sample.gt_index = best_gt;
            sample.target.category = seen_index.at(gt.category);
            sample.target.deltas = encode_box(prop.box, gt.bbox);
            if (prop.zm.has_value() && gt.mask.has_value())
                sample.target.mask = resample_mask(*gt.mask, gt.bbox, prop.box, prop.zm->n);
        }
        out.push_back(std::move(sample));
    }
    return out;
}

}  // namespace zsd
