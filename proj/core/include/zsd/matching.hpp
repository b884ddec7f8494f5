#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "zsd/heads.hpp"

namespace zsd {

// Binary instance mask on an n x n grid registered to its owning box,
// row-major by (y * n + x).
struct MaskGrid {
    int size = 0;
    std::vector<std::uint8_t> data;

    bool empty() const { return size == 0; }
};

// One annotated object.
struct GroundTruthInstance {
    std::int64_t image_id = 0;
    std::string category;
    Box bbox;
    std::optional<MaskGrid> mask;
};

// Training target attached to a positively matched proposal.
struct BoxTarget {
    int category = -1;  // index into the seen list
    Eigen::Vector4d deltas = Eigen::Vector4d::Zero();
    std::optional<std::vector<std::uint8_t>> mask;  // resampled to the proposal grid
};

// Matching outcome for one proposal; every proposal yields exactly one.
struct MatchedSample {
    std::size_t proposal_index = 0;
    bool is_background = true;
    double iou = 0.0;
    int gt_index = -1;  // into the gts list, -1 for background
    BoxTarget target;   // valid when !is_background
};

// Box-delta encoding of a target box against its proposal:
// ((gx1-px1)/pw, (gy1-py1)/ph, (gx2-px2)/pw, (gy2-py2)/ph).
// Zero-area proposals throw DataError.
Eigen::Vector4d encode_box(const Box& proposal, const Box& target);

// Resample a mask registered to src_box onto an n x n grid registered to
// dst_box: each destination cell takes the source cell under its center
// (nearest neighbor), 0 where the center falls outside src_box.
std::vector<std::uint8_t> resample_mask(const MaskGrid& src, const Box& src_box, const Box& dst_box, int n);

// Assign each proposal to its highest-IoU ground truth of the same image
// (ties to the lowest annotation index); below the threshold it becomes
// background. Positive samples carry the seen-category index, encoded box
// deltas, and, when both the proposal has spatial features and the GT has a
// mask, the GT mask resampled to the proposal grid. GT categories must all
// be seen names (DataError otherwise).
std::vector<MatchedSample> match_proposals(const std::vector<ProposalRecord>& proposals,
                                           const std::vector<GroundTruthInstance>& gts, double iou_threshold,
                                           const std::vector<std::string>& seen_names);

}  // namespace zsd
