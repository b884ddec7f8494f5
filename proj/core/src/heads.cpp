#include "zsd/heads.hpp"

#include <cmath>
#include <limits>

#include "zsd/error.hpp"

namespace zsd {

namespace {

void check_z(const Vector& z, const HeadParams& params) {
    if (z.size() != params.p())
        throw DataError("feature vector has length " + std::to_string(z.size()) + ", heads expect " +
                        std::to_string(params.p()));
}

void check_rows(const Matrix& rows, const HeadParams& params, const char* what) {
    if (rows.cols() != params.d())
        throw DataError(std::string(what) + " rows have dimension " + std::to_string(rows.cols()) +
                        ", heads expect " + std::to_string(params.d()));
}

// softmax with max-shift; logits must be finite
Vector stable_softmax(const Vector& logits) {
    if (logits.size() == 0) return logits;
    if (!logits.allFinite()) throw NumericError("non-finite classifier logits");
    const double m = logits.maxCoeff();
    Vector e = (logits.array() - m).exp().matrix();
    const double s = e.sum();
    if (!(s > 0.0) || !std::isfinite(s)) throw NumericError("softmax normalization failed");
    return e / s;
}

// argmax over a row of cosines, lowest index wins ties
Eigen::Index argmax_first(const Eigen::RowVectorXd& row) {
    Eigen::Index best = 0;
    for (Eigen::Index j = 1; j < row.size(); ++j)
        if (row(j) > row(best)) best = j;
    return best;
}

}  // namespace

std::string to_string(TransferVariant v) {
    switch (v) {
        case TransferVariant::Learned: return "learned";
        case TransferVariant::MostSimilar: return "most-similar";
        case TransferVariant::LinearCombination: return "linear-combination";
        case TransferVariant::NoTransfer: return "no-transfer";
    }
    return "learned";
}

TransferVariant parse_transfer_variant(const std::string& s) {
    if (s == "learned") return TransferVariant::Learned;
    if (s == "most-similar") return TransferVariant::MostSimilar;
    if (s == "linear-combination") return TransferVariant::LinearCombination;
    if (s == "no-transfer") return TransferVariant::NoTransfer;
    throw ConfigError("unknown transfer variant: '" + s +
                      "' (expected learned|most-similar|linear-combination|no-transfer)");
}

Vector cls_logits_seen(const Vector& z, const HeadParams& params, const Matrix& seen_aug_norm) {
    check_z(z, params);
    check_rows(seen_aug_norm, params, "seen");
    return seen_aug_norm * (params.w_cls * z);
}

Vector cls_logits_unseen(const Vector& z, const HeadParams& params, const Matrix& unseen_norm) {
    check_z(z, params);
    check_rows(unseen_norm, params, "unseen");
    return unseen_norm * (params.w_cls * z);
}

Vector class_probabilities(const Vector& z, const HeadParams& params, const Matrix& seen_aug_norm,
                           const Matrix& unseen_norm) {
    Vector logits(seen_aug_norm.rows() + unseen_norm.rows());
    logits.head(seen_aug_norm.rows()) = cls_logits_seen(z, params, seen_aug_norm);
    if (unseen_norm.rows() > 0) logits.tail(unseen_norm.rows()) = cls_logits_unseen(z, params, unseen_norm);
    return stable_softmax(logits);
}

Matrix reg_deltas(const Vector& z, const HeadParams& params, const Matrix& rows_norm) {
    check_z(z, params);
    check_rows(rows_norm, params, "regression");
    Matrix out(rows_norm.rows(), 4);
    for (int r = 0; r < 4; ++r) {
        if (params.w_reg[static_cast<std::size_t>(r)].rows() != params.d() ||
            params.w_reg[static_cast<std::size_t>(r)].cols() != params.p())
            throw DataError("regression matrix " + std::to_string(r) + " has the wrong shape");
        out.col(r) = rows_norm * (params.w_reg[static_cast<std::size_t>(r)] * z);
    }
    return out;
}

Matrix seg_logits(const SpatialFeatures& zm, const HeadParams& params, const Matrix& rows_norm) {
    check_rows(rows_norm, params, "segmentation");
    if (zm.values.cols() != params.t())
        throw DataError("spatial features have " + std::to_string(zm.values.cols()) + " channels, heads expect " +
                        std::to_string(params.t()));
    // (n^2 x t) * (t x d) * (d x k)
    return (zm.values * params.w_seg.transpose()) * rows_norm.transpose();
}

Matrix unseen_reg_by_variant(const Vector& z, const HeadParams& params, const Matrix& seen_rows_norm,
                             const Matrix& unseen_norm, TransferVariant variant) {
    check_rows(unseen_norm, params, "unseen");
    const Eigen::Index u = unseen_norm.rows();
    if (variant == TransferVariant::NoTransfer) return Matrix::Zero(u, 4);
    if (variant == TransferVariant::Learned) return reg_deltas(z, params, unseen_norm);

    check_rows(seen_rows_norm, params, "seen");
    if (seen_rows_norm.rows() == 0) throw DataError("transfer variants need at least one seen category");
    const Matrix seen_deltas = reg_deltas(z, params, seen_rows_norm);
    const Matrix cos = unseen_norm * seen_rows_norm.transpose();  // u x s
    Matrix out(u, 4);
    for (Eigen::Index i = 0; i < u; ++i) {
        if (variant == TransferVariant::MostSimilar) {
            out.row(i) = seen_deltas.row(argmax_first(cos.row(i)));
            continue;
        }
        Eigen::RowVectorXd w = cos.row(i).cwiseMax(0.0);
        const double s = w.sum();
        if (s > 0.0)
            out.row(i) = (w / s) * seen_deltas;
        else  // all cosines <= 0: fall back to the most similar seen row
            out.row(i) = seen_deltas.row(argmax_first(cos.row(i)));
    }
    return out;
}

Matrix unseen_seg_by_variant(const SpatialFeatures& zm, const HeadParams& params, const Matrix& seen_rows_norm,
                             const Matrix& unseen_norm, TransferVariant variant) {
    check_rows(unseen_norm, params, "unseen");
    const Eigen::Index u = unseen_norm.rows();
    const Eigen::Index cells = zm.values.rows();
    if (variant == TransferVariant::NoTransfer)
        return Matrix::Constant(cells, u, -std::numeric_limits<double>::infinity());
    if (variant == TransferVariant::Learned) return seg_logits(zm, params, unseen_norm);

    check_rows(seen_rows_norm, params, "seen");
    if (seen_rows_norm.rows() == 0) throw DataError("transfer variants need at least one seen category");
    const Matrix seen_logits = seg_logits(zm, params, seen_rows_norm);  // cells x s
    const Matrix cos = unseen_norm * seen_rows_norm.transpose();
    Matrix out(cells, u);
    for (Eigen::Index i = 0; i < u; ++i) {
        if (variant == TransferVariant::MostSimilar) {
            out.col(i) = seen_logits.col(argmax_first(cos.row(i)));
            continue;
        }
        Eigen::RowVectorXd w = cos.row(i).cwiseMax(0.0);
        const double s = w.sum();
        if (s > 0.0)
            out.col(i) = seen_logits * (w / s).transpose();
        else
            out.col(i) = seen_logits.col(argmax_first(cos.row(i)));
    }
    return out;
}

}  // namespace zsd
