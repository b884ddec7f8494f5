#pragma once

#include <cstdint>
#include <vector>

#include "zsd/heads.hpp"

namespace zsd {

// Which classifier objective trains w_cls (and b in Learned mode).
enum class LossKind { CrossEntropy, MaxMargin, L2Error };

std::string to_string(LossKind k);
LossKind parse_loss_kind(const std::string& s);

// Gradient accumulator shaped like HeadParams. b is only meaningful when
// the params use a Learned background.
struct HeadGrads {
    Matrix w_cls;
    std::array<Matrix, 4> w_reg;
    Matrix w_seg;
    Vector b;

    static HeadGrads zeros_like(const HeadParams& params);
    void add_scaled(const HeadGrads& other, double scale);
    void scale(double s);
};

struct ScalarLoss {
    double loss = 0.0;
    Vector grad;  // d loss / d logits
};

// Softmax cross-entropy over raw logits; grad = softmax(logits) - onehot.
ScalarLoss ce_loss_grad(const Vector& logits, int target);

struct DeltaLoss {
    double loss = 0.0;
    Eigen::Vector4d grad;  // d loss / d pred
};

// Smooth L1 summed over the 4 components: 0.5 x^2 for |x| < 1, |x| - 0.5
// otherwise, x = pred - target.
DeltaLoss smooth_l1_grad(const Eigen::Vector4d& pred, const Eigen::Vector4d& target);

// Mean binary cross-entropy over mask cells from raw logits;
// grad_i = (sigmoid(l_i) - target_i) / cells.
ScalarLoss bce_mask_grad(const Vector& logits, const std::vector<std::uint8_t>& target);

// A per-sample loss with gradients against every head parameter.
struct ParamLoss {
    double loss = 0.0;
    HeadGrads grads;
};

// Classifier loss for one sample. seen_rows_norm holds the unit seen rows
// WITHOUT the background row; the background row is derived from
// params.background here so its gradient (Learned mode) flows through the
// normalization b -> b/|b|. target in [0, S] with S = background.
//   CrossEntropy: softmax CE over the S+1 seen+background logits.
//   MaxMargin: sum_c max(0, margin - s_t + s_c) over cosine scores
//              s_c = (W^cls z . e_c)/|W^cls z|, background included.
//   L2Error: |W^cls z - e_target|^2 (background vector as target when
//            target == S).
ParamLoss classifier_loss_grad(const Vector& z, const HeadParams& params, const Matrix& seen_rows_norm, int target,
                               LossKind kind, double margin);

// Smooth-L1 box-delta loss against the target row's predicted deltas.
ParamLoss regression_loss_grad(const Vector& z, const HeadParams& params, const Matrix& rows_norm, int row,
                               const Eigen::Vector4d& target_deltas);

// Pixel BCE on the target category's mask channel.
ParamLoss mask_loss_grad(const SpatialFeatures& zm, const HeadParams& params, const Matrix& rows_norm, int row,
                         const std::vector<std::uint8_t>& target_mask);

}  // namespace zsd
