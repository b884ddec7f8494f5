#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>

#include "zsd/box.hpp"
#include "zsd/embedding.hpp"

namespace zsd {

// Per-pixel feature grid for one proposal: n x n cells, t channels,
// row-major by (y * n + x), one row per cell.
struct SpatialFeatures {
    int n = 0;
    int t = 0;
    Matrix values;  // (n*n) x t

    bool empty() const { return n == 0; }
};

// One region proposal with its frozen feature vectors.
struct ProposalRecord {
    std::int64_t image_id = 0;
    Box box;
    Vector z;                            // pooled feature, length p
    std::optional<SpatialFeatures> zm;   // per-pixel features, when available
};

// How unseen-category box deltas / mask logits are produced.
//   Learned           - apply the trained projection to the unseen embedding
//   MostSimilar       - copy the output of the highest-cosine seen category
//   LinearCombination - blend seen outputs with clipped, renormalized cosines
//   NoTransfer        - zero deltas / empty masks
enum class TransferVariant { Learned, MostSimilar, LinearCombination, NoTransfer };

std::string to_string(TransferVariant v);
TransferVariant parse_transfer_variant(const std::string& s);

// The learnable second-stage parameters. Feature extractors stay frozen;
// training touches nothing but these matrices and (in Learned mode) the
// background vector inside `background`.
struct HeadParams {
    Matrix w_cls;                 // d x p
    std::array<Matrix, 4> w_reg;  // d x p each; one per box delta component
    Matrix w_seg;                 // d x t
    BackgroundMode background;

    int d() const { return static_cast<int>(w_cls.rows()); }
    int p() const { return static_cast<int>(w_cls.cols()); }
    int t() const { return static_cast<int>(w_seg.cols()); }
};

// Classifier logits against an augmented seen matrix (rows unit-norm,
// background last): logit_c = (W^cls z) . e_c. Length rows(seen_aug_norm).
Vector cls_logits_seen(const Vector& z, const HeadParams& params, const Matrix& seen_aug_norm);

// Same projection against unseen rows (no background row).
Vector cls_logits_unseen(const Vector& z, const HeadParams& params, const Matrix& unseen_norm);

// Softmax over [seen+background || unseen] logits concatenated in that
// order. Length rows(seen_aug_norm) + rows(unseen_norm).
Vector class_probabilities(const Vector& z, const HeadParams& params, const Matrix& seen_aug_norm,
                           const Matrix& unseen_norm);

// Box deltas (t_x1, t_y1, t_x2, t_y2) per category row: k x 4 for k rows.
// Regression never uses a background row.
Matrix reg_deltas(const Vector& z, const HeadParams& params, const Matrix& rows_norm);

// Per-pixel mask logits: (n*n) x k; cell i depends only on zm row i.
Matrix seg_logits(const SpatialFeatures& zm, const HeadParams& params, const Matrix& rows_norm);

// Unseen-category box deltas under a transfer variant: |unseen| x 4.
// MostSimilar picks argmax cosine (lowest index on ties); LinearCombination
// weights seen outputs by max(0, cos)/sum, falling back to MostSimilar for
// rows whose cosines are all <= 0; NoTransfer returns zeros.
Matrix unseen_reg_by_variant(const Vector& z, const HeadParams& params, const Matrix& seen_rows_norm,
                             const Matrix& unseen_norm, TransferVariant variant);

// Unseen-category mask logits under a transfer variant: (n*n) x |unseen|.
// NoTransfer returns -inf logits (sigmoid 0 -> empty masks).
Matrix unseen_seg_by_variant(const SpatialFeatures& zm, const HeadParams& params, const Matrix& seen_rows_norm,
                             const Matrix& unseen_norm, TransferVariant variant);

}  // namespace zsd
