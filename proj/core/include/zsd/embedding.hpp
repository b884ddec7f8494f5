#pragma once

#include <Eigen/Dense>
#include <string>
#include <unordered_map>
#include <vector>

namespace zsd {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

// Named category embeddings, one row per category.
struct EmbeddingTable {
    std::vector<std::string> names;
    Matrix vectors;  // |names| x d

    int size() const { return static_cast<int>(names.size()); }
    int dim() const { return static_cast<int>(vectors.cols()); }

    // -1 when absent
    int index_of(const std::string& name) const;
    bool contains(const std::string& name) const { return index_of(name) >= 0; }
};

// Disjoint seen / unseen category name lists.
struct CategorySplit {
    std::vector<std::string> seen;
    std::vector<std::string> unseen;
};

// How the background row of the classifier's category matrix is produced.
enum class BackgroundKind { Fixed, Mean, Learned };

struct BackgroundMode {
    BackgroundKind kind = BackgroundKind::Learned;
    Vector b;  // the learned vector; used only when kind == Learned

    static BackgroundMode fixed() { return {BackgroundKind::Fixed, {}}; }
    static BackgroundMode mean() { return {BackgroundKind::Mean, {}}; }
    static BackgroundMode learned(Vector v) { return {BackgroundKind::Learned, std::move(v)}; }
};

std::string to_string(BackgroundKind k);
BackgroundKind parse_background_kind(const std::string& s);

// Text format: header "<count> <dim>", then one "<name> <v1> ... <vd>" line
// per category. Throws DataError on malformed input (bad header, wrong row
// width, non-numeric or non-finite values, duplicate or missing names,
// all-zero rows).
EmbeddingTable load_embeddings(const std::string& path);
void save_embeddings(const std::string& path, const EmbeddingTable& table);

// Text format: two lines, "seen: a,b,c" and "unseen: x,y".
CategorySplit load_split(const std::string& path);
void save_split(const std::string& path, const CategorySplit& split);

// Every split name must exist in the table and the two lists must be
// disjoint and duplicate-free; throws DataError otherwise.
void validate_split(const EmbeddingTable& table, const CategorySplit& split);

// L2-normalize each row; a zero row throws NumericError.
Matrix row_normalize(const Matrix& rows);
EmbeddingTable row_normalize(const EmbeddingTable& table);

// Rows for the given names, in the given order (missing name -> DataError).
EmbeddingTable subtable(const EmbeddingTable& table, const std::vector<std::string>& names);

// The (unnormalized) background vector for a seen-category table:
// Fixed  -> (1, 0, ..., 0)
// Mean   -> arithmetic mean of the table rows
// Learned-> mode.b (must be finite and of matching dimension)
Vector background_vector(const BackgroundMode& mode, const EmbeddingTable& seen);

// Seen rows with the background row appended: (|seen|+1) x d, all rows
// L2-normalized. The table is expected unnormalized; normalization happens
// here so Mean backgrounds average raw rows first.
Matrix augmented_seen_matrix(const EmbeddingTable& seen, const BackgroundMode& mode);

}  // namespace zsd
