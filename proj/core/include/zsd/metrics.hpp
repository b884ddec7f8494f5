#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "zsd/infer.hpp"
#include "zsd/matching.hpp"
#include "zsd/task.hpp"

namespace zsd {

struct ImageInfo {
    std::int64_t id = 0;
    double width = 0.0;
    double height = 0.0;
};

// Binary mask on the image canvas, stored over its bounding pixel rect.
struct CanvasMask {
    int x0 = 0;
    int y0 = 0;
    int w = 0;
    int h = 0;
    std::vector<std::uint8_t> bits;  // w*h, row-major

    std::size_t count() const;
    bool empty() const { return count() == 0; }
};

// Rasterize an n x n grid registered to `box` onto a width x height canvas:
// pixel centers inside the box sample their grid cell; cells binarize as
// value > threshold (strict).
CanvasMask rasterize_mask(double width, double height, const Box& box, int n, const double* values,
                          double threshold);
CanvasMask rasterize_mask(double width, double height, const Box& box, const MaskGrid& grid);
CanvasMask rasterize_mask(double width, double height, const Box& box, const MaskProbs& probs, double threshold);

// Pixel IoU of two canvas masks; no value when both are empty.
std::optional<double> mask_iou(const CanvasMask& a, const CanvasMask& b);

double harmonic_mean(double seen, double unseen);  // 0 when seen + unseen == 0

// One category's detections/GT prepared for matching. Masks are present in
// mask-matching mode; `order` is the detection's input rank (tie-break).
struct EvalDet {
    std::int64_t image_id = 0;
    double score = 0.0;
    Box box;
    std::optional<CanvasMask> mask;
    std::size_t order = 0;
};

struct EvalGt {
    std::int64_t image_id = 0;
    Box box;
    std::optional<CanvasMask> mask;
};

// 101-point interpolated average precision. Detections are ranked by
// (score desc, order asc) and greedily matched to the highest-IoU unmatched
// GT of their image (ties to the lowest GT index) at IoU >= threshold.
// by_mask matches on mask IoU instead of box IoU (absent masks never
// match). No value when the category has no GT.
std::optional<double> average_precision(const std::vector<EvalDet>& dets, const std::vector<EvalGt>& gts,
                                        double iou_threshold, bool by_mask);

// Fraction of GT matched after keeping the top k detections per image;
// same matching rules as average_precision. No value when gts is empty.
std::optional<double> recall_at_k(const std::vector<EvalDet>& dets, const std::vector<EvalGt>& gts,
                                  double iou_threshold, int k, bool by_mask);

struct EvalOptions {
    double map_iou = 0.5;
    std::array<double, 3> recall_ious{0.4, 0.5, 0.6};
    int recall_k = 100;
    double mask_threshold = 0.5;  // detection mask binarization
};

struct CategoryScore {
    std::string name;
    bool seen = false;
    int gt_count = 0;
    std::optional<double> ap;
    std::array<std::optional<double>, 3> recall;
};

struct EvalReport {
    TaskMode mode = TaskMode::GZSD;
    EvalOptions options;
    std::vector<CategoryScore> categories;
    std::optional<double> map_seen;
    std::optional<double> map_unseen;
    std::optional<double> hm_map;
    std::array<std::optional<double>, 3> recall_seen;
    std::array<std::optional<double>, 3> recall_unseen;
    std::array<std::optional<double>, 3> hm_recall;
};

// Score detections against ground truth. ZSD/ZSI ignore seen-origin
// detections and score unseen categories only; generalized modes score
// both partitions and add harmonic means. ZSI/GZSI match by mask IoU.
// Category means skip categories without GT. Detections must use split
// categories and reference known images (DataError otherwise).
EvalReport evaluate(const std::vector<Detection>& dets, const std::vector<ImageInfo>& images,
                    const std::vector<GroundTruthInstance>& gts, const CategorySplit& split, TaskMode mode,
                    const EvalOptions& options = {});

void write_report_json(const std::string& path, const EvalReport& report);
void write_report_csv(const std::string& path, const EvalReport& report);

}  // namespace zsd
