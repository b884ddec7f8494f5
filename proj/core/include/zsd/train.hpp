#pragma once

#include <functional>

#include "zsd/losses.hpp"
#include "zsd/matching.hpp"
#include "zsd/rng.hpp"

namespace zsd {

// Second-stage optimization settings. Only the projection matrices (and b
// in Learned mode) move; features and embeddings are inputs, never touched.
struct TrainConfig {
    double learning_rate = 0.005;
    double momentum = 0.9;
    int iterations = 1000;
    int batch_size = 32;
    std::uint64_t seed = 0;
    LossKind loss = LossKind::CrossEntropy;
    double margin = 0.2;  // max-margin only
    BackgroundKind background = BackgroundKind::Learned;
    double iou_threshold = 0.5;  // proposal-to-GT match threshold
};

struct TrainData {
    std::vector<ProposalRecord> proposals;
    std::vector<GroundTruthInstance> gts;
};

// One row of the training curve (averaged over the batch).
struct LossLogRow {
    int iteration = 0;
    double total = 0.0;
    double cls = 0.0;
    double reg = 0.0;
    double mask = 0.0;
};

// Uniform U[-1/sqrt(p), 1/sqrt(p)] matrices (w_seg uses its own fan-in t);
// b starts at the mean seen embedding. Draw order is fixed: w_cls, w_reg
// 0..3, w_seg, all row-major.
HeadParams init_head_params(int d, int p, int t, BackgroundKind background, const EmbeddingTable& seen_raw,
                            Rng& rng);

// Mini-batch SGD with momentum. Each epoch is a seeded shuffle of the
// positive matches plus an equal count of background samples drawn from a
// reshuffled background pool. Classifier loss applies to every sample;
// box-delta and mask losses only to positives. iterations == 0 returns the
// initialization unchanged. Deterministic: same inputs + seed, same bits.
HeadParams train_heads(const TrainData& data, const EmbeddingTable& table, const CategorySplit& split,
                       const TrainConfig& config, std::vector<LossLogRow>* log = nullptr);

// Central-difference gradient check against a loss that reports its own
// analytic gradients. Walks every entry of w_cls, w_reg[0..3], w_seg and
// (Learned) b; perturbed evaluations at kink points (per at_kink) are
// skipped. Relative error uses |fd - g| / max(1e-6, |fd| + |g|).
struct FdReport {
    double max_rel_err = 0.0;
    int checked = 0;
    int skipped = 0;
};

using LossWithGrads = std::function<ParamLoss(const HeadParams&)>;

FdReport finite_diff_check(const LossWithGrads& fn, const HeadParams& params, double epsilon,
                           const std::function<bool(const HeadParams&)>& at_kink = {});

// Randomized gradient verification across all five training losses
// (classifier CE / max-margin / embedding L2, box smooth-L1, mask BCE),
// points_per_loss seeded setups each with fresh shapes and background
// modes. Reports the max relative error per loss.
struct GradSuiteConfig {
    int points_per_loss = 100;
    std::uint64_t seed = 20240501;
    double epsilon = 1e-5;
};

struct GradSuiteReport {
    double ce = 0.0;
    double max_margin = 0.0;
    double l2 = 0.0;
    double smooth_l1 = 0.0;
    double mask_bce = 0.0;

    double worst() const;
};

GradSuiteReport gradient_check_suite(const GradSuiteConfig& config);

}  // namespace zsd
