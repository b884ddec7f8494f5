#pragma once

#include "zsd/dataset.hpp"
#include "zsd/rng.hpp"

namespace zsd {

// Seeded synthetic world with a planted linear feature map. Category
// embeddings live on the unit sphere sharing a fixed-weight common
// direction; pooled features are z = M_z e_c (+ noise), per-pixel features
// are M_m e_c inside the object's inscribed ellipse (+ noise) and pure
// noise outside. Proposals expand the ground-truth box outward so that the
// box-delta targets equal per-category, per-side fractions that are affine
// in the embedding (read out from hidden linear fields), times mild
// per-proposal jitter. Background proposals carry pure noise.
struct SynthConfig {
    std::uint64_t seed = 1;
    int d = 16;            // embedding dimension
    int p = 32;            // pooled feature dimension
    int t = 8;             // per-pixel feature channels
    int mask_grid = 12;    // n: mask / spatial grid resolution
    double image_size = 256.0;
    int seen = 8;
    int unseen = 4;
    int images = 200;
    int objects_per_image = 3;
    int proposals_per_object = 3;
    int background_per_image = 4;
    double jitter = 0.7;      // scales the per-side box-delta magnitudes
    double sigma = 0.0;       // additive feature noise
    double map_scale = 1.0;   // norm of the planted maps
    double train_fraction = 0.8;
};

void validate(const SynthConfig& config);

struct SynthDataset {
    EmbeddingTable table;  // unit-norm rows, seen then unseen
    CategorySplit split;
    GtFile train_gt;
    GtFile test_gt;
    std::vector<ProposalRecord> train_proposals;
    std::vector<ProposalRecord> test_proposals;
    // per proposal: index into the partition's annotations, -1 = background
    std::vector<int> train_provenance;
    std::vector<int> test_provenance;
    Matrix map_z;  // p x d, orthonormal columns times map_scale
    Matrix map_m;  // t x d, orthonormal rows times map_scale
};

// Deterministic for a given config; unseen-category objects appear only in
// the test partition (first floor(images * train_fraction) image indices
// are train).
SynthDataset generate(const SynthConfig& config);

// Oracle labels from the planted map alone: argmax_c e_c . (M_z^T z),
// lowest index on ties. Returns one table index per proposal; only object
// proposals are meaningful (background features are pure noise).
std::vector<int> bayes_reference(const EmbeddingTable& table, const Matrix& map_z,
                                 const std::vector<ProposalRecord>& proposals);

}  // namespace zsd
