#include "zsd/train.hpp"

#include <algorithm>
#include <cmath>

#include "zsd/error.hpp"

namespace zsd {

namespace {

// flat enumeration of the trainable entries, for the FD walker
struct EntryRef {
    int group;  // 0 w_cls, 1..4 w_reg, 5 w_seg, 6 b
    Eigen::Index i;
    Eigen::Index j;
};

std::vector<EntryRef> all_entries(const HeadParams& p) {
    std::vector<EntryRef> out;
    auto add_matrix = [&](int group, const Matrix& m) {
        for (Eigen::Index i = 0; i < m.rows(); ++i)
            for (Eigen::Index j = 0; j < m.cols(); ++j) out.push_back({group, i, j});
    };
    add_matrix(0, p.w_cls);
    for (int r = 0; r < 4; ++r) add_matrix(1 + r, p.w_reg[static_cast<std::size_t>(r)]);
    add_matrix(5, p.w_seg);
    if (p.background.kind == BackgroundKind::Learned)
        for (Eigen::Index i = 0; i < p.background.b.size(); ++i) out.push_back({6, i, 0});
    return out;
}

double grad_entry(const HeadGrads& g, const EntryRef& e) {
    switch (e.group) {
        case 0: return g.w_cls(e.i, e.j);
        case 5: return g.w_seg(e.i, e.j);
        case 6: return g.b.size() > e.i ? g.b(e.i) : 0.0;
        default: return g.w_reg[static_cast<std::size_t>(e.group - 1)](e.i, e.j);
    }
}

void bump_entry(HeadParams& p, const EntryRef& e, double delta) {
    switch (e.group) {
        case 0: p.w_cls(e.i, e.j) += delta; break;
        case 5: p.w_seg(e.i, e.j) += delta; break;
        case 6: p.background.b(e.i) += delta; break;
        default: p.w_reg[static_cast<std::size_t>(e.group - 1)](e.i, e.j) += delta; break;
    }
}

Matrix uniform_matrix(Eigen::Index rows, Eigen::Index cols, double bound, Rng& rng) {
    Matrix m(rows, cols);
    for (Eigen::Index i = 0; i < rows; ++i)
        for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = rng.uniform(-bound, bound);
    return m;
}

}  // namespace

HeadParams init_head_params(int d, int p, int t, BackgroundKind background, const EmbeddingTable& seen_raw,
                            Rng& rng) {
    if (d <= 0 || p <= 0 || t < 0) throw ConfigError("head dimensions must be positive (t may be zero)");
    HeadParams params;
    const double wb = 1.0 / std::sqrt(static_cast<double>(p));
    params.w_cls = uniform_matrix(d, p, wb, rng);
    for (auto& m : params.w_reg) m = uniform_matrix(d, p, wb, rng);
    const double sb = t > 0 ? 1.0 / std::sqrt(static_cast<double>(t)) : 0.0;
    params.w_seg = t > 0 ? uniform_matrix(d, t, sb, rng) : Matrix::Zero(d, 0);
    params.background.kind = background;
    if (background == BackgroundKind::Learned) {
        if (seen_raw.size() == 0) throw DataError("learned background init needs seen categories");
        params.background.b = seen_raw.vectors.colwise().mean().transpose();
        if (!(params.background.b.norm() > 0.0))
            throw NumericError("seen embedding mean is zero; cannot initialize the background vector");
    }
    return params;
}

HeadParams train_heads(const TrainData& data, const EmbeddingTable& table, const CategorySplit& split,
                       const TrainConfig& config, std::vector<LossLogRow>* log) {
    if (config.learning_rate <= 0.0 || config.batch_size <= 0 || config.iterations < 0 || config.momentum < 0.0 ||
        config.momentum >= 1.0)
        throw ConfigError("invalid training configuration");
    validate_split(table, split);
    if (data.proposals.empty()) throw DataError("training dataset has no proposals");
    if (config.iterations > 0 && data.gts.empty()) throw DataError("training dataset has no ground truth");

    const int d = table.dim();
    const int p = static_cast<int>(data.proposals.front().z.size());
    int t = 0;
    for (const auto& prop : data.proposals) {
        if (prop.z.size() != p) throw DataError("inconsistent pooled feature lengths across proposals");
        if (prop.zm.has_value()) {
            if (t == 0)
                t = prop.zm->t;
            else if (prop.zm->t != t)
                throw DataError("inconsistent spatial feature channel counts across proposals");
        }
    }

    const EmbeddingTable seen_raw = subtable(table, split.seen);
    const Matrix seen_rows_norm = row_normalize(seen_raw.vectors);

    Rng rng(config.seed);
    HeadParams params = init_head_params(d, p, t, config.background, seen_raw, rng);
    if (config.iterations == 0) return params;

    const auto samples = match_proposals(data.proposals, data.gts, config.iou_threshold, split.seen);
    std::vector<std::size_t> positives;
    std::vector<std::size_t> backgrounds;
    for (std::size_t i = 0; i < samples.size(); ++i)
        (samples[i].is_background ? backgrounds : positives).push_back(i);
    if (positives.empty())
        throw DataError("no proposal matched any ground truth at IoU >= " + std::to_string(config.iou_threshold));

    const int bg_index = static_cast<int>(split.seen.size());  // classifier background target

    // epoch stream: shuffled positives + an equal draw from the background
    // pool, shuffled together; the pool is cycled with reshuffles
    std::vector<std::size_t> bg_pool = backgrounds;
    std::size_t bg_cursor = bg_pool.size();  // force an initial shuffle
    std::vector<std::size_t> epoch;
    std::size_t epoch_cursor = 0;
    auto next_sample = [&]() -> const MatchedSample& {
        if (epoch_cursor >= epoch.size()) {
            epoch = positives;
            rng.shuffle(epoch);
            for (std::size_t k = 0; k < positives.size() && !bg_pool.empty(); ++k) {
                if (bg_cursor >= bg_pool.size()) {
                    rng.shuffle(bg_pool);
                    bg_cursor = 0;
                }
                epoch.push_back(bg_pool[bg_cursor++]);
            }
            rng.shuffle(epoch);
            epoch_cursor = 0;
        }
        return samples[epoch[epoch_cursor++]];
    };

    HeadGrads velocity = HeadGrads::zeros_like(params);
    const bool learned_bg = config.background == BackgroundKind::Learned;

    for (int it = 0; it < config.iterations; ++it) {
        HeadGrads grads = HeadGrads::zeros_like(params);
        double cls_loss = 0.0;
        double reg_loss = 0.0;
        double mask_loss = 0.0;
        int n_pos = 0;
        int n_mask = 0;

        for (int bi = 0; bi < config.batch_size; ++bi) {
            const MatchedSample& sample = next_sample();
            const ProposalRecord& prop = data.proposals[sample.proposal_index];
            const int cls_target = sample.is_background ? bg_index : sample.target.category;
            ParamLoss cl = classifier_loss_grad(prop.z, params, seen_rows_norm, cls_target, config.loss,
                                                config.margin);
            cls_loss += cl.loss;
            grads.w_cls += cl.grads.w_cls;
            if (learned_bg) grads.b += cl.grads.b;
            if (!sample.is_background) {
                ++n_pos;
                ParamLoss rl = regression_loss_grad(prop.z, params, seen_rows_norm, sample.target.category,
                                                    sample.target.deltas);
                reg_loss += rl.loss;
                for (std::size_t r = 0; r < 4; ++r) grads.w_reg[r] += rl.grads.w_reg[r];
                if (t > 0 && prop.zm.has_value() && sample.target.mask.has_value()) {
                    ++n_mask;
                    ParamLoss ml = mask_loss_grad(*prop.zm, params, seen_rows_norm, sample.target.category,
                                                  *sample.target.mask);
                    mask_loss += ml.loss;
                    grads.w_seg += ml.grads.w_seg;
                }
            }
        }

        const double inv_batch = 1.0 / config.batch_size;
        const double inv_pos = n_pos > 0 ? 1.0 / n_pos : 0.0;
        const double inv_mask = n_mask > 0 ? 1.0 / n_mask : 0.0;
        grads.w_cls *= inv_batch;
        if (learned_bg) grads.b *= inv_batch;
        for (auto& m : grads.w_reg) m *= inv_pos;
        grads.w_seg *= inv_mask;
        cls_loss *= inv_batch;
        reg_loss *= inv_pos;
        mask_loss *= inv_mask;

        const double total = cls_loss + reg_loss + mask_loss;
        if (!std::isfinite(total)) throw NumericError("non-finite loss at iteration " + std::to_string(it));
        if (log) log->push_back({it, total, cls_loss, reg_loss, mask_loss});

        velocity.scale(config.momentum);
        velocity.add_scaled(grads, -config.learning_rate);
        params.w_cls += velocity.w_cls;
        for (std::size_t r = 0; r < 4; ++r) params.w_reg[r] += velocity.w_reg[r];
        params.w_seg += velocity.w_seg;
        if (learned_bg) params.background.b += velocity.b;
    }
    return params;
}

FdReport finite_diff_check(const LossWithGrads& fn, const HeadParams& params, double epsilon,
                           const std::function<bool(const HeadParams&)>& at_kink) {
    if (!(epsilon > 0.0)) throw ConfigError("finite difference epsilon must be positive");
    const ParamLoss base = fn(params);
    if (!std::isfinite(base.loss)) throw NumericError("non-finite loss in finite-difference check");
    FdReport report;
    for (const EntryRef& e : all_entries(params)) {
        HeadParams plus = params;
        bump_entry(plus, e, epsilon);
        HeadParams minus = params;
        bump_entry(minus, e, -epsilon);
        if (at_kink && (at_kink(plus) || at_kink(minus))) {
            ++report.skipped;
            continue;
        }
        const double lp = fn(plus).loss;
        const double lm = fn(minus).loss;
        if (!std::isfinite(lp) || !std::isfinite(lm))
            throw NumericError("non-finite perturbed loss in finite-difference check");
        const double fd = (lp - lm) / (2.0 * epsilon);
        const double g = grad_entry(base.grads, e);
        const double rel = std::abs(fd - g) / std::max(1e-6, std::abs(fd) + std::abs(g));
        report.max_rel_err = std::max(report.max_rel_err, rel);
        ++report.checked;
    }
    return report;
}

double GradSuiteReport::worst() const {
    return std::max({ce, max_margin, l2, smooth_l1, mask_bce});
}

namespace {

Matrix random_unit_rows(Eigen::Index rows, Eigen::Index cols, Rng& rng) {
    Matrix m(rows, cols);
    for (Eigen::Index i = 0; i < rows; ++i) {
        do {
            for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = rng.normal();
        } while (m.row(i).norm() < 1e-3);
        m.row(i) /= m.row(i).norm();
    }
    return m;
}

HeadParams random_params(int d, int p, int t, BackgroundKind kind, Rng& rng) {
    HeadParams params;
    auto gauss = [&](Eigen::Index r, Eigen::Index c) {
        Matrix m(r, c);
        for (Eigen::Index i = 0; i < r; ++i)
            for (Eigen::Index j = 0; j < c; ++j) m(i, j) = 0.5 * rng.normal();
        return m;
    };
    params.w_cls = gauss(d, p);
    for (auto& m : params.w_reg) m = gauss(d, p);
    params.w_seg = gauss(d, t);
    params.background.kind = kind;
    if (kind == BackgroundKind::Learned) {
        Vector b(d);
        do {
            for (int i = 0; i < d; ++i) b(i) = rng.normal();
        } while (b.norm() < 0.2);
        params.background.b = b;
    }
    return params;
}

Vector random_vec(int n, Rng& rng) {
    Vector v(n);
    for (int i = 0; i < n; ++i) v(i) = rng.normal();
    return v;
}

constexpr BackgroundKind kBgCycle[3] = {BackgroundKind::Fixed, BackgroundKind::Mean, BackgroundKind::Learned};

}  // namespace

GradSuiteReport gradient_check_suite(const GradSuiteConfig& config) {
    Rng rng(config.seed);
    GradSuiteReport report;

    for (int point = 0; point < config.points_per_loss; ++point) {
        const int d = static_cast<int>(rng.uniform_int(3, 8));
        const int p = static_cast<int>(rng.uniform_int(2, 10));
        const int s = static_cast<int>(rng.uniform_int(1, 5));
        const BackgroundKind kind = kBgCycle[point % 3];
        const Matrix seen = random_unit_rows(s, d, rng);
        const Vector z = random_vec(p, rng);

        // classifier cross-entropy
        {
            const HeadParams params = random_params(d, p, 1, kind, rng);
            const int target = static_cast<int>(rng.uniform_int(0, s));
            auto fn = [&](const HeadParams& q) {
                return classifier_loss_grad(z, q, seen, target, LossKind::CrossEntropy, 0.0);
            };
            report.ce = std::max(report.ce, finite_diff_check(fn, params, config.epsilon).max_rel_err);
        }

        // classifier embedding L2
        {
            const HeadParams params = random_params(d, p, 1, kind, rng);
            const int target = static_cast<int>(rng.uniform_int(0, s));
            auto fn = [&](const HeadParams& q) {
                return classifier_loss_grad(z, q, seen, target, LossKind::L2Error, 0.0);
            };
            report.l2 = std::max(report.l2, finite_diff_check(fn, params, config.epsilon).max_rel_err);
        }

        // classifier max-margin; resample away from hinge kinks, then skip
        // any perturbation that still lands on one
        {
            const double margin = 0.2;
            const int target = static_cast<int>(rng.uniform_int(0, s));
            auto hinge_gap = [&](const HeadParams& q) {
                const Matrix aug = [&] {
                    Matrix m(s + 1, d);
                    m.topRows(s) = seen;
                    switch (q.background.kind) {
                        case BackgroundKind::Fixed: {
                            Vector e = Vector::Zero(d);
                            e(0) = 1.0;
                            m.row(s) = e.transpose();
                            break;
                        }
                        case BackgroundKind::Mean:
                            m.row(s) = (seen.colwise().mean()).normalized();
                            break;
                        case BackgroundKind::Learned:
                            m.row(s) = q.background.b.normalized().transpose();
                            break;
                    }
                    return m;
                }();
                const Vector v = q.w_cls * z;
                const double vn = v.norm();
                if (!(vn > 1e-6)) return 0.0;  // treat near-zero projections as kinks
                const Vector scores = aug * (v / vn);
                double gap = 1e9;
                for (int c = 0; c <= s; ++c) {
                    if (c == target) continue;
                    gap = std::min(gap, std::abs(margin - scores(target) + scores(c)));
                }
                return gap;
            };
            HeadParams params = random_params(d, p, 1, kind, rng);
            for (int tries = 0; tries < 64 && hinge_gap(params) < 1e-2; ++tries)
                params = random_params(d, p, 1, kind, rng);
            auto fn = [&](const HeadParams& q) {
                return classifier_loss_grad(z, q, seen, target, LossKind::MaxMargin, margin);
            };
            auto kink = [&](const HeadParams& q) { return hinge_gap(q) < 1e-3; };
            report.max_margin =
                std::max(report.max_margin, finite_diff_check(fn, params, config.epsilon, kink).max_rel_err);
        }

        // box-delta smooth L1; kinks live at |pred - target| == 1
        {
            const int row = static_cast<int>(rng.uniform_int(0, s - 1));
            Eigen::Vector4d target_deltas;
            for (int i = 0; i < 4; ++i) target_deltas(i) = rng.normal(0.0, 0.8);
            auto kink_gap = [&](const HeadParams& q) {
                const Matrix deltas = reg_deltas(z, q, seen);
                double gap = 1e9;
                for (int i = 0; i < 4; ++i)
                    gap = std::min(gap, std::abs(std::abs(deltas(row, i) - target_deltas(i)) - 1.0));
                return gap;
            };
            HeadParams params = random_params(d, p, 1, kBgCycle[point % 3], rng);
            for (int tries = 0; tries < 64 && kink_gap(params) < 1e-2; ++tries)
                params = random_params(d, p, 1, kBgCycle[point % 3], rng);
            auto fn = [&](const HeadParams& q) { return regression_loss_grad(z, q, seen, row, target_deltas); };
            auto kink = [&](const HeadParams& q) { return kink_gap(q) < 1e-3; };
            report.smooth_l1 =
                std::max(report.smooth_l1, finite_diff_check(fn, params, config.epsilon, kink).max_rel_err);
        }

        // mask BCE
        {
            const int t = static_cast<int>(rng.uniform_int(2, 6));
            const int n = static_cast<int>(rng.uniform_int(2, 4));
            const HeadParams params = random_params(d, p, t, kind, rng);
            SpatialFeatures zm;
            zm.n = n;
            zm.t = t;
            zm.values.resize(n * n, t);
            for (Eigen::Index i = 0; i < zm.values.rows(); ++i)
                for (Eigen::Index j = 0; j < zm.values.cols(); ++j) zm.values(i, j) = rng.normal();
            std::vector<std::uint8_t> target(static_cast<std::size_t>(n) * n);
            for (auto& cell : target) cell = rng.uniform() < 0.5 ? 0 : 1;
            const int row = static_cast<int>(rng.uniform_int(0, s - 1));
            auto fn = [&](const HeadParams& q) { return mask_loss_grad(zm, q, seen, row, target); };
            report.mask_bce = std::max(report.mask_bce, finite_diff_check(fn, params, config.epsilon).max_rel_err);
        }
    }
    return report;
}

}  // namespace zsd
