#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "zsd/heads.hpp"
#include "zsd/task.hpp"

namespace zsd {

// Mask probabilities on an n x n grid registered to the detection box.
struct MaskProbs {
    int size = 0;
    std::vector<double> probs;  // row-major (y * size + x)
};

enum class Origin { Seen, Unseen };

std::string to_string(Origin o);
Origin parse_origin(const std::string& s);

struct Detection {
    std::int64_t image_id = 0;
    std::string category;
    Origin origin = Origin::Seen;
    double score = 0.0;
    Box box;
    std::optional<MaskProbs> mask;
};

struct InferConfig {
    double beta = 0.05;           // seen-score filter threshold
    double nms_iou = 0.5;         // per-class suppression threshold
    int max_detections = 100;     // per image
    double mask_threshold = 0.5;  // binarization for mask outputs
    TaskMode mode = TaskMode::GZSD;
    TransferVariant variant = TransferVariant::Learned;
    bool beta_after_nms = false;  // ablation switch: filter after suppression
};

void validate(const InferConfig& config);

// Apply box deltas to a proposal: x1' = x1 + t0*w, y1' = y1 + t1*h,
// x2' = x2 + t2*w, y2' = y2 + t3*h; corners re-ordered if they cross and
// clipped to [0, width] x [0, height] when bounds are given.
Box decode_box(const Box& proposal, const Eigen::Vector4d& deltas,
               std::optional<std::pair<double, double>> bounds = std::nullopt);

// Drop seen-origin detections with score < beta (strict); order preserved,
// unseen detections always kept.
std::vector<Detection> beta_filter(std::vector<Detection> dets, double beta);

// Greedy per-category NMS within each image: score-descending (input index
// breaks ties), suppress IoU > threshold (strict). Output keeps input order.
std::vector<Detection> per_class_nms(std::vector<Detection> dets, double iou_threshold);

// Keep the k highest-scoring detections per image (ties by input index);
// output ordered by (image id, score desc, input index).
std::vector<Detection> top_k_per_image(std::vector<Detection> dets, int k);

// Full pipeline for one image's proposals: candidate per (proposal,
// category) with class-specific decoded box, softmax score, and (mask
// modes) the mask re-registered to the final box; background candidates
// discarded; then beta filter, NMS, top-k (or NMS before beta when
// beta_after_nms). Unseen boxes/masks follow config.variant.
std::vector<Detection> predict_image(const std::vector<ProposalRecord>& proposals, const HeadParams& params,
                                     const EmbeddingTable& table, const CategorySplit& split,
                                     const InferConfig& config,
                                     std::optional<std::pair<double, double>> bounds = std::nullopt);

// predict_image over a whole proposal set, grouped by image in first-
// appearance order; bounds looked up per image when provided.
std::vector<Detection> predict_dataset(const std::vector<ProposalRecord>& proposals, const HeadParams& params,
                                       const EmbeddingTable& table, const CategorySplit& split,
                                       const InferConfig& config,
                                       const std::map<std::int64_t, std::pair<double, double>>& image_bounds = {});

}  // namespace zsd
