#include "zsd/synthgen.hpp"

#include <cmath>

#include "zsd/error.hpp"

namespace zsd {

namespace {

// weight of the common direction shared by every category embedding; the
// fixed share is what makes embedding-affine quantities reachable for the
// bilinear heads
constexpr double kCommonWeight = 0.3;
// perturbation radius of an unseen category around its seen parent
constexpr double kClusterRadius = 0.55;
// max |cosine| allowed between seen-category sphere components
constexpr double kSeenSeparation = 0.55;
// per-side box-delta magnitudes: delta = jitter * (base + amp * eta) with
// eta in [-1, 1]. At the default jitter 0.7 every proposal keeps an IoU
// with its object inside (0.25, 0.5): too loose to pass a 0.5-IoU match
// untouched, tight enough to train against a 0.25 match threshold.
constexpr double kExpandBase = 0.27;
constexpr double kExpandAmp = 0.045;

Vector gaussian_vector(int n, Rng& rng) {
    Vector v(n);
    for (int i = 0; i < n; ++i) v(i) = rng.normal();
    return v;
}

// unit vector orthogonal to mu
Vector unit_perp(const Vector& mu, Rng& rng) {
    for (int tries = 0; tries < 256; ++tries) {
        Vector v = gaussian_vector(static_cast<int>(mu.size()), rng);
        v -= mu * mu.dot(v);
        const double n = v.norm();
        if (n > 1e-6) return v / n;
    }
    throw NumericError("failed to draw a vector orthogonal to the common direction");
}

// thin QR with a canonical sign convention (positive R diagonal)
Matrix orthonormal_columns(int rows, int cols, Rng& rng) {
    Matrix a(rows, cols);
    for (int i = 0; i < rows; ++i)
        for (int j = 0; j < cols; ++j) a(i, j) = rng.normal();
    Eigen::HouseholderQR<Matrix> qr(a);
    Matrix q = qr.householderQ() * Matrix::Identity(rows, cols);
    const Matrix r = qr.matrixQR().topRows(cols).triangularView<Eigen::Upper>();
    for (int j = 0; j < cols; ++j)
        if (r(j, j) < 0.0) q.col(j) *= -1.0;
    return q;
}

Box sample_object_box(double image_size, double lo, double hi, Rng& rng) {
    const double cx = rng.uniform(0.25, 0.75) * image_size;
    const double cy = rng.uniform(0.25, 0.75) * image_size;
    const double w = rng.uniform(lo, hi) * image_size;
    const double h = rng.uniform(lo, hi) * image_size;
    return {cx - w / 2.0, cy - h / 2.0, cx + w / 2.0, cy + h / 2.0};
}

// inscribed-ellipse membership for a point in image coordinates
bool inside_ellipse(const Box& box, double x, double y) {
    const double u = (x - (box.x1 + box.x2) / 2.0) / (box.width() / 2.0);
    const double v = (y - (box.y1 + box.y2) / 2.0) / (box.height() / 2.0);
    return u * u + v * v <= 1.0;
}

MaskGrid ellipse_mask(const Box& box, int n) {
    MaskGrid mask;
    mask.size = n;
    mask.data.assign(static_cast<std::size_t>(n) * n, 0);
    for (int gy = 0; gy < n; ++gy) {
        const double cy = box.y1 + (gy + 0.5) / n * box.height();
        for (int gx = 0; gx < n; ++gx) {
            const double cx = box.x1 + (gx + 0.5) / n * box.width();
            if (inside_ellipse(box, cx, cy)) mask.data[static_cast<std::size_t>(gy) * n + gx] = 1;
        }
    }
    return mask;
}

}  // namespace

void validate(const SynthConfig& c) {
    if (c.d < 4) throw ConfigError("synth: d must be at least 4");
    if (c.p < 1 || c.t < 1 || c.mask_grid < 2) throw ConfigError("synth: p, t, mask_grid must be positive");
    if (c.p < c.d) throw ConfigError("synth: p must be >= d for an orthonormal planted map");
    if (c.d < c.t) throw ConfigError("synth: d must be >= t for an orthonormal planted map");
    if (!(c.image_size > 16.0)) throw ConfigError("synth: image_size too small");
    if (c.seen < 1 || c.unseen < 0) throw ConfigError("synth: need at least one seen category");
    if (c.images < 2 || c.objects_per_image < 1) throw ConfigError("synth: need images and objects per image");
    if (c.proposals_per_object < 1 || c.background_per_image < 0)
        throw ConfigError("synth: need at least one proposal per object");
    if (!(c.jitter > 0.0) || c.jitter > 1.0) throw ConfigError("synth: jitter must lie in (0, 1]");
    if (c.sigma < 0.0) throw ConfigError("synth: sigma must be non-negative");
    if (!(c.map_scale > 0.0)) throw ConfigError("synth: map_scale must be positive");
    if (!(c.train_fraction > 0.0) || !(c.train_fraction < 1.0))
        throw ConfigError("synth: train_fraction must lie in (0, 1)");
    const int train_images = static_cast<int>(std::floor(c.images * c.train_fraction));
    if (train_images < 1 || train_images >= c.images)
        throw ConfigError("synth: train_fraction leaves an empty partition");
}

SynthDataset generate(const SynthConfig& config) {
    validate(config);
    Rng rng(config.seed);
    SynthDataset out;

    const int d = config.d;
    const int total = config.seen + config.unseen;

    // --- embeddings -------------------------------------------------------
    Vector mu = gaussian_vector(d, rng);
    mu /= mu.norm();
    // hidden per-side expansion fields, orthogonal to the common direction
    std::array<Vector, 4> fields;
    for (auto& f : fields) f = unit_perp(mu, rng);

    const double cw = std::sqrt(kCommonWeight);
    const double pw = std::sqrt(1.0 - kCommonWeight);

    std::vector<Vector> spheres;  // the orthogonal components
    spheres.reserve(static_cast<std::size_t>(total));
    for (int i = 0; i < config.seen; ++i) {
        Vector xi;
        bool ok = false;
        for (int tries = 0; tries < 4096 && !ok; ++tries) {
            xi = unit_perp(mu, rng);
            ok = true;
            for (const auto& other : spheres)
                if (std::abs(xi.dot(other)) > kSeenSeparation) {
                    ok = false;
                    break;
                }
        }
        if (!ok) throw NumericError("synth: could not separate seen embeddings; increase d or reduce seen");
        spheres.push_back(xi);
    }
    for (int i = 0; i < config.unseen; ++i) {
        const Vector& parent = spheres[static_cast<std::size_t>(i % config.seen)];
        Vector xi = parent + kClusterRadius * unit_perp(mu, rng);
        xi -= mu * mu.dot(xi);
        xi /= xi.norm();
        spheres.push_back(xi);
    }

    out.table.names.reserve(static_cast<std::size_t>(total));
    out.table.vectors.resize(total, d);
    for (int i = 0; i < total; ++i) {
        const bool is_seen = i < config.seen;
        const int k = is_seen ? i : i - config.seen;
        std::string name = (is_seen ? "obj_s" : "obj_u") + std::to_string(k);
        out.table.names.push_back(name);
        out.table.vectors.row(i) = (cw * mu + pw * spheres[static_cast<std::size_t>(i)]).transpose();
        (is_seen ? out.split.seen : out.split.unseen).push_back(std::move(name));
    }

    // --- planted maps ------------------------------------------------------
    out.map_z = config.map_scale * orthonormal_columns(config.p, d, rng);
    out.map_m = config.map_scale * orthonormal_columns(d, config.t, rng).transpose();

    // Per-category, per-side box-delta magnitudes. Each hidden field is read
    // out on every embedding and rescaled into [-1, 1] by the table's own
    // min / max, so the magnitudes stay affine in the embedding (the
    // rescale is a fixed affine map once the table is drawn) while landing
    // in a guaranteed range no matter how the draws fall. An affine target
    // is exactly representable by a projection head read out against the
    // embedding, because the shared common direction contributes the same
    // constant to every category.
    Matrix expand(total, 4);
    for (int r = 0; r < 4; ++r) {
        Vector raw = out.table.vectors * fields[static_cast<std::size_t>(r)];
        const double lo = raw.minCoeff();
        const double hi = raw.maxCoeff();
        for (int c = 0; c < total; ++c) {
            const double eta = hi - lo > 1e-12 ? 2.0 * (raw(c) - lo) / (hi - lo) - 1.0 : 0.0;
            expand(c, r) = config.jitter * (kExpandBase + kExpandAmp * eta);
        }
    }

    // --- images ------------------------------------------------------------
    const int train_images = static_cast<int>(std::floor(config.images * config.train_fraction));
    out.train_gt.categories = out.table.names;
    out.test_gt.categories = out.table.names;

    for (int im = 0; im < config.images; ++im) {
        const bool is_train = im < train_images;
        GtFile& gt = is_train ? out.train_gt : out.test_gt;
        auto& proposals = is_train ? out.train_proposals : out.test_proposals;
        auto& provenance = is_train ? out.train_provenance : out.test_provenance;
        const std::int64_t image_id = im + 1;
        gt.images.push_back({image_id, config.image_size, config.image_size});

        std::vector<Box> gt_boxes;
        std::vector<int> gt_cats;
        for (int obj = 0; obj < config.objects_per_image; ++obj) {
            // train images only show seen categories
            const int cat = is_train ? static_cast<int>(rng.uniform_int(0, config.seen - 1))
                                     : static_cast<int>(rng.uniform_int(0, total - 1));
            Box box;
            bool placed = false;
            for (int tries = 0; tries < 256 && !placed; ++tries) {
                box = sample_object_box(config.image_size, 0.18, 0.28, rng);
                placed = true;
                for (const Box& other : gt_boxes)
                    if (box_iou(box, other) > 0.15) {
                        placed = false;
                        break;
                    }
            }
            if (!placed) throw NumericError("synth: could not place non-overlapping objects");
            gt_boxes.push_back(box);
            gt_cats.push_back(cat);

            GroundTruthInstance inst;
            inst.image_id = image_id;
            inst.category = out.table.names[static_cast<std::size_t>(cat)];
            inst.bbox = box;
            inst.mask = ellipse_mask(box, config.mask_grid);
            gt.annotations.push_back(std::move(inst));
        }

        for (std::size_t obj = 0; obj < gt_boxes.size(); ++obj) {
            const Box& box = gt_boxes[obj];
            const int cat = gt_cats[obj];
            const Vector embed = out.table.vectors.row(cat).transpose();
            const Vector z_clean = out.map_z * embed;
            const Vector m_clean = out.map_m * embed;
            const int ann_index = static_cast<int>(gt.annotations.size() - gt_boxes.size() + obj);

            for (int k = 0; k < config.proposals_per_object; ++k) {
                ProposalRecord rec;
                rec.image_id = image_id;
                // Per-side fractions of the *proposal* extent, so the box
                // regression target against this proposal is the fraction
                // itself: the category's affine readout times mild
                // per-proposal jitter.
                const double al = expand(cat, 0) * rng.uniform(0.95, 1.05);
                const double at = expand(cat, 1) * rng.uniform(0.95, 1.05);
                const double ar = expand(cat, 2) * rng.uniform(0.95, 1.05);
                const double ab = expand(cat, 3) * rng.uniform(0.95, 1.05);
                const double prop_w = box.width() / (1.0 - al - ar);
                const double prop_h = box.height() / (1.0 - at - ab);
                rec.box = {box.x1 - al * prop_w, box.y1 - at * prop_h, box.x2 + ar * prop_w,
                           box.y2 + ab * prop_h};

                rec.z = z_clean;
                if (config.sigma > 0.0)
                    for (int i = 0; i < config.p; ++i) rec.z(i) += config.sigma * rng.normal();

                SpatialFeatures zm;
                zm.n = config.mask_grid;
                zm.t = config.t;
                zm.values = Matrix::Zero(static_cast<Eigen::Index>(zm.n) * zm.n, config.t);
                for (int gy = 0; gy < zm.n; ++gy) {
                    const double cy = rec.box.y1 + (gy + 0.5) / zm.n * rec.box.height();
                    for (int gx = 0; gx < zm.n; ++gx) {
                        const double cx = rec.box.x1 + (gx + 0.5) / zm.n * rec.box.width();
                        const Eigen::Index cell = static_cast<Eigen::Index>(gy) * zm.n + gx;
                        if (inside_ellipse(box, cx, cy)) zm.values.row(cell) = m_clean.transpose();
                        if (config.sigma > 0.0)
                            for (int ch = 0; ch < config.t; ++ch)
                                zm.values(cell, ch) += config.sigma * rng.normal();
                    }
                }
                rec.zm = std::move(zm);

                proposals.push_back(std::move(rec));
                provenance.push_back(ann_index);
            }
        }

        for (int k = 0; k < config.background_per_image; ++k) {
            Box box;
            bool placed = false;
            for (int tries = 0; tries < 512 && !placed; ++tries) {
                box = sample_object_box(config.image_size, 0.15, 0.30, rng);
                placed = true;
                for (const Box& other : gt_boxes)
                    if (box_iou(box, other) > 0.2) {
                        placed = false;
                        break;
                    }
            }
            if (!placed) throw NumericError("synth: could not place background proposals");
            ProposalRecord rec;
            rec.image_id = image_id;
            rec.box = box;
            rec.z = Vector::Zero(config.p);
            if (config.sigma > 0.0)
                for (int i = 0; i < config.p; ++i) rec.z(i) = config.sigma * rng.normal();
            SpatialFeatures zm;
            zm.n = config.mask_grid;
            zm.t = config.t;
            zm.values = Matrix::Zero(static_cast<Eigen::Index>(zm.n) * zm.n, config.t);
            if (config.sigma > 0.0)
                for (Eigen::Index cell = 0; cell < zm.values.rows(); ++cell)
                    for (int ch = 0; ch < config.t; ++ch) zm.values(cell, ch) = config.sigma * rng.normal();
            rec.zm = std::move(zm);
            proposals.push_back(std::move(rec));
            provenance.push_back(-1);
        }
    }
    return out;
}

std::vector<int> bayes_reference(const EmbeddingTable& table, const Matrix& map_z,
                                 const std::vector<ProposalRecord>& proposals) {
    if (map_z.cols() != table.dim()) throw DataError("bayes reference: map and table dimensions disagree");
    std::vector<int> labels;
    labels.reserve(proposals.size());
    for (const auto& rec : proposals) {
        if (rec.z.size() != map_z.rows()) throw DataError("bayes reference: feature length does not match map");
        const Vector scores = table.vectors * (map_z.transpose() * rec.z);
        int best = 0;
        for (int c = 1; c < table.size(); ++c)
            if (scores(c) > scores(best)) best = c;
        labels.push_back(best);
    }
    return labels;
}

}  // namespace zsd
