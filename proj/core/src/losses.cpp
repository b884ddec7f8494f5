#include "zsd/losses.hpp"

#include <cmath>

#include "zsd/error.hpp"

namespace zsd {

namespace {

// Unit background row for the loss path plus what it needs for the chain
// rule. For Fixed/Mean the row is a constant; only Learned carries a
// gradient back to b.
struct BackgroundRow {
    Vector unit;        // e_bg
    double norm = 1.0;  // |b| (Learned only)
    bool trainable = false;
};

BackgroundRow background_row(const HeadParams& params, const Matrix& seen_rows_norm) {
    const int d = params.d();
    BackgroundRow out;
    switch (params.background.kind) {
        case BackgroundKind::Fixed: {
            out.unit = Vector::Zero(d);
            out.unit(0) = 1.0;
            return out;
        }
        case BackgroundKind::Mean: {
            // mean of unit seen rows, renormalized; constant during training
            if (seen_rows_norm.rows() == 0) throw DataError("mean background needs seen rows");
            Vector m = seen_rows_norm.colwise().mean().transpose();
            const double n = m.norm();
            if (!(n > 0.0)) throw NumericError("mean background vector has zero norm");
            out.unit = m / n;
            return out;
        }
        case BackgroundKind::Learned: {
            const Vector& b = params.background.b;
            if (b.size() != d) throw ConfigError("learned background vector has the wrong dimension");
            const double n = b.norm();
            if (!(n > 0.0) || !std::isfinite(n)) throw NumericError("learned background vector has zero norm");
            out.unit = b / n;
            out.norm = n;
            out.trainable = true;
            return out;
        }
    }
    throw ConfigError("unknown background mode");
}

// chain dL/d(e_bg) back through e_bg = b/|b|
Vector through_normalization(const Vector& d_unit, const BackgroundRow& bg) {
    return (d_unit - bg.unit * bg.unit.dot(d_unit)) / bg.norm;
}

}  // namespace

std::string to_string(LossKind k) {
    switch (k) {
        case LossKind::CrossEntropy: return "cross-entropy";
        case LossKind::MaxMargin: return "max-margin";
        case LossKind::L2Error: return "l2-error";
    }
    return "cross-entropy";
}

LossKind parse_loss_kind(const std::string& s) {
    if (s == "cross-entropy") return LossKind::CrossEntropy;
    if (s == "max-margin") return LossKind::MaxMargin;
    if (s == "l2-error") return LossKind::L2Error;
    throw ConfigError("unknown classifier loss: '" + s + "' (expected cross-entropy|max-margin|l2-error)");
}

HeadGrads HeadGrads::zeros_like(const HeadParams& params) {
    HeadGrads g;
    g.w_cls = Matrix::Zero(params.w_cls.rows(), params.w_cls.cols());
    for (std::size_t r = 0; r < 4; ++r)
        g.w_reg[r] = Matrix::Zero(params.w_reg[r].rows(), params.w_reg[r].cols());
    g.w_seg = Matrix::Zero(params.w_seg.rows(), params.w_seg.cols());
    g.b = Vector::Zero(params.background.kind == BackgroundKind::Learned ? params.background.b.size() : 0);
    return g;
}

void HeadGrads::add_scaled(const HeadGrads& other, double s) {
    w_cls += s * other.w_cls;
    for (std::size_t r = 0; r < 4; ++r) w_reg[r] += s * other.w_reg[r];
    w_seg += s * other.w_seg;
    if (b.size() > 0 && other.b.size() == b.size()) b += s * other.b;
}

void HeadGrads::scale(double s) {
    w_cls *= s;
    for (auto& m : w_reg) m *= s;
    w_seg *= s;
    b *= s;
}

ScalarLoss ce_loss_grad(const Vector& logits, int target) {
    if (target < 0 || target >= logits.size()) throw DataError("cross-entropy target out of range");
    if (!logits.allFinite()) throw NumericError("non-finite logits in cross-entropy");
    const double m = logits.maxCoeff();
    Vector e = (logits.array() - m).exp().matrix();
    const double s = e.sum();
    ScalarLoss out;
    out.grad = e / s;
    // -log softmax(target), computed in shifted space for stability
    out.loss = std::log(s) - (logits(target) - m);
    out.grad(target) -= 1.0;
    return out;
}

DeltaLoss smooth_l1_grad(const Eigen::Vector4d& pred, const Eigen::Vector4d& target) {
    DeltaLoss out;
    out.loss = 0.0;
    for (int i = 0; i < 4; ++i) {
        const double x = pred(i) - target(i);
        const double a = std::abs(x);
        if (a < 1.0) {
            out.loss += 0.5 * x * x;
            out.grad(i) = x;
        } else {
            out.loss += a - 0.5;
            out.grad(i) = x > 0.0 ? 1.0 : -1.0;
        }
    }
    return out;
}

ScalarLoss bce_mask_grad(const Vector& logits, const std::vector<std::uint8_t>& target) {
    if (static_cast<std::size_t>(logits.size()) != target.size())
        throw DataError("mask target size does not match logit grid");
    if (logits.size() == 0) throw DataError("empty mask in BCE loss");
    if (!logits.allFinite()) throw NumericError("non-finite logits in mask BCE");
    const double inv_n = 1.0 / static_cast<double>(logits.size());
    ScalarLoss out;
    out.grad.resize(logits.size());
    out.loss = 0.0;
    for (Eigen::Index i = 0; i < logits.size(); ++i) {
        const double l = logits(i);
        const double t = target[static_cast<std::size_t>(i)] ? 1.0 : 0.0;
        // log(1 + e^-|l|) + max(l, 0) - l*t, the stable BCE-with-logits form
        out.loss += inv_n * (std::log1p(std::exp(-std::abs(l))) + std::max(l, 0.0) - l * t);
        const double sig = 1.0 / (1.0 + std::exp(-l));
        out.grad(i) = (sig - t) * inv_n;
    }
    return out;
}

ParamLoss classifier_loss_grad(const Vector& z, const HeadParams& params, const Matrix& seen_rows_norm, int target,
                               LossKind kind, double margin) {
    const Eigen::Index s_count = seen_rows_norm.rows();
    if (target < 0 || target > s_count) throw DataError("classifier target out of range");
    if (z.size() != params.p()) throw DataError("feature vector length does not match w_cls");
    const BackgroundRow bg = background_row(params, seen_rows_norm);

    const Vector v = params.w_cls * z;
    ParamLoss out;
    out.grads = HeadGrads::zeros_like(params);

    // dL/dv accumulates here; w_cls grad is dL/dv z^T at the end
    Vector dv = Vector::Zero(params.d());

    switch (kind) {
        case LossKind::CrossEntropy: {
            Vector logits(s_count + 1);
            logits.head(s_count) = seen_rows_norm * v;
            logits(s_count) = bg.unit.dot(v);
            const ScalarLoss ce = ce_loss_grad(logits, target);
            out.loss = ce.loss;
            dv = seen_rows_norm.transpose() * ce.grad.head(s_count) + ce.grad(s_count) * bg.unit;
            if (bg.trainable) out.grads.b = through_normalization(ce.grad(s_count) * v, bg);
            break;
        }
        case LossKind::MaxMargin: {
            const double vn = v.norm();
            if (!(vn > 0.0) || !std::isfinite(vn)) throw NumericError("zero projection in max-margin loss");
            const Vector vhat = v / vn;
            Vector scores(s_count + 1);
            scores.head(s_count) = seen_rows_norm * vhat;
            scores(s_count) = bg.unit.dot(vhat);
            auto unit_row = [&](Eigen::Index c) -> Vector {
                return c < s_count ? Vector(seen_rows_norm.row(c).transpose()) : bg.unit;
            };
            out.loss = 0.0;
            double d_bg_unit_coeff = 0.0;  // dL/d(e_bg) = coeff * vhat
            for (Eigen::Index c = 0; c <= s_count; ++c) {
                if (c == target) continue;
                const double h = margin - scores(target) + scores(c);
                if (h <= 0.0) continue;
                out.loss += h;
                // d s_c / dv = (e_c - s_c vhat)/|v|
                dv += (unit_row(c) - scores(c) * vhat) / vn;
                dv -= (unit_row(target) - scores(target) * vhat) / vn;
                if (bg.trainable) {
                    if (c == s_count) d_bg_unit_coeff += 1.0;
                    if (target == s_count) d_bg_unit_coeff -= 1.0;
                }
            }
            if (bg.trainable && d_bg_unit_coeff != 0.0)
                out.grads.b = through_normalization(d_bg_unit_coeff * vhat, bg);
            break;
        }
        case LossKind::L2Error: {
            const bool bg_target = target == s_count;
            const Vector e_t = bg_target ? bg.unit : Vector(seen_rows_norm.row(target).transpose());
            const Vector r = v - e_t;
            out.loss = r.squaredNorm();
            dv = 2.0 * r;
            if (bg_target && bg.trainable) out.grads.b = through_normalization(-2.0 * r, bg);
            break;
        }
    }

    out.grads.w_cls = dv * z.transpose();
    return out;
}

ParamLoss regression_loss_grad(const Vector& z, const HeadParams& params, const Matrix& rows_norm, int row,
                               const Eigen::Vector4d& target_deltas) {
    if (row < 0 || row >= rows_norm.rows()) throw DataError("regression target row out of range");
    const Matrix deltas = reg_deltas(z, params, rows_norm);
    const Eigen::Vector4d pred = deltas.row(row).transpose();
    const DeltaLoss sl = smooth_l1_grad(pred, target_deltas);
    ParamLoss out;
    out.loss = sl.loss;
    out.grads = HeadGrads::zeros_like(params);
    const Vector e_row = rows_norm.row(row).transpose();
    for (int r = 0; r < 4; ++r)
        out.grads.w_reg[static_cast<std::size_t>(r)] = sl.grad(r) * (e_row * z.transpose());
    return out;
}

ParamLoss mask_loss_grad(const SpatialFeatures& zm, const HeadParams& params, const Matrix& rows_norm, int row,
                         const std::vector<std::uint8_t>& target_mask) {
    if (row < 0 || row >= rows_norm.rows()) throw DataError("mask target row out of range");
    const Matrix logits = seg_logits(zm, params, rows_norm);
    const ScalarLoss bce = bce_mask_grad(logits.col(row), target_mask);
    ParamLoss out;
    out.loss = bce.loss;
    out.grads = HeadGrads::zeros_like(params);
    const Vector e_row = rows_norm.row(row).transpose();
    // d logit_i / d w_seg = e_row zm_i^T; summed with the BCE weights
    out.grads.w_seg = e_row * (bce.grad.transpose() * zm.values);
    return out;
}

}  // namespace zsd
