#include "zsd/embedding.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>
#include <unordered_set>

#include "zsd/error.hpp"

namespace zsd {

namespace {

std::vector<std::string> tokenize(const std::string& line) {
    std::vector<std::string> out;
    std::istringstream ss(line);
    std::string tok;
    while (ss >> tok) out.push_back(tok);
    return out;
}

double parse_double(const std::string& tok, const std::string& context) {
    double value = 0.0;
    const char* first = tok.data();
    const char* last = tok.data() + tok.size();
    auto [ptr, ec] = std::from_chars(first, last, value);
    if (ec != std::errc() || ptr != last)
        throw DataError(context + ": non-numeric value '" + tok + "'");
    if (!std::isfinite(value))
        throw DataError(context + ": non-finite value '" + tok + "'");
    return value;
}

long parse_count(const std::string& tok, const std::string& context) {
    long value = 0;
    const char* first = tok.data();
    const char* last = tok.data() + tok.size();
    auto [ptr, ec] = std::from_chars(first, last, value);
    if (ec != std::errc() || ptr != last || value < 0)
        throw DataError(context + ": expected a non-negative integer, got '" + tok + "'");
    return value;
}

std::string trim(const std::string& s) {
    std::size_t a = s.find_first_not_of(" \t\r\n");
    if (a == std::string::npos) return "";
    std::size_t b = s.find_last_not_of(" \t\r\n");
    return s.substr(a, b - a + 1);
}

std::vector<std::string> split_commas(const std::string& s) {
    std::vector<std::string> out;
    std::string cur;
    std::istringstream ss(s);
    while (std::getline(ss, cur, ',')) {
        cur = trim(cur);
        if (!cur.empty()) out.push_back(cur);
    }
    return out;
}

}  // namespace

int EmbeddingTable::index_of(const std::string& name) const {
    for (std::size_t i = 0; i < names.size(); ++i)
        if (names[i] == name) return static_cast<int>(i);
    return -1;
}

std::string to_string(BackgroundKind k) {
    switch (k) {
        case BackgroundKind::Fixed: return "fixed";
        case BackgroundKind::Mean: return "mean";
        case BackgroundKind::Learned: return "learned";
    }
    return "learned";
}

BackgroundKind parse_background_kind(const std::string& s) {
    if (s == "fixed") return BackgroundKind::Fixed;
    if (s == "mean") return BackgroundKind::Mean;
    if (s == "learned") return BackgroundKind::Learned;
    throw ConfigError("unknown background mode: '" + s + "' (expected fixed|mean|learned)");
}

EmbeddingTable load_embeddings(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open embedding file: " + path);

    std::string line;
    if (!std::getline(in, line)) throw DataError(path + ": empty file");
    const auto header = tokenize(line);
    if (header.size() != 2)
        throw DataError(path + ": header must be '<count> <dim>', got '" + line + "'");
    const long count = parse_count(header[0], path + ": header count");
    const long dim = parse_count(header[1], path + ": header dim");
    if (count <= 0 || dim <= 0) throw DataError(path + ": count and dim must be positive");

    EmbeddingTable table;
    table.names.reserve(static_cast<std::size_t>(count));
    table.vectors.resize(count, dim);

    std::unordered_set<std::string> seen_names;
    long row = 0;
    while (std::getline(in, line)) {
        if (trim(line).empty()) continue;
        const std::string ctx = path + ": row " + std::to_string(row + 1);
        if (row >= count) throw DataError(path + ": more rows than the declared count " + std::to_string(count));
        const auto toks = tokenize(line);
        if (static_cast<long>(toks.size()) != dim + 1)
            throw DataError(ctx + ": expected name plus " + std::to_string(dim) + " values, got " +
                            std::to_string(toks.size() - 1));
        const std::string& name = toks[0];
        if (!seen_names.insert(name).second) throw DataError(ctx + ": duplicate category name '" + name + "'");
        table.names.push_back(name);
        bool all_zero = true;
        for (long j = 0; j < dim; ++j) {
            const double v = parse_double(toks[static_cast<std::size_t>(j) + 1], ctx);
            table.vectors(row, j) = v;
            if (v != 0.0) all_zero = false;
        }
        if (all_zero) throw DataError(ctx + ": all-zero embedding for '" + name + "'");
        ++row;
    }
    if (row != count)
        throw DataError(path + ": declared " + std::to_string(count) + " rows, found " + std::to_string(row));
    return table;
}

void save_embeddings(const std::string& path, const EmbeddingTable& table) {
    std::ofstream out(path);
    if (!out) throw ConfigError("cannot write embedding file: " + path);
    out.precision(17);
    out << table.size() << ' ' << table.dim() << '\n';
    for (int i = 0; i < table.size(); ++i) {
        out << table.names[static_cast<std::size_t>(i)];
        for (int j = 0; j < table.dim(); ++j) out << ' ' << table.vectors(i, j);
        out << '\n';
    }
    if (!out) throw ConfigError("write failed: " + path);
}

CategorySplit load_split(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open split file: " + path);
    CategorySplit split;
    bool have_seen = false;
    bool have_unseen = false;
    std::string line;
    while (std::getline(in, line)) {
        const std::string t = trim(line);
        if (t.empty()) continue;
        const auto colon = t.find(':');
        if (colon == std::string::npos) throw DataError(path + ": expected 'seen:' or 'unseen:' line, got '" + t + "'");
        const std::string key = trim(t.substr(0, colon));
        const std::string rest = t.substr(colon + 1);
        if (key == "seen") {
            if (have_seen) throw DataError(path + ": duplicate 'seen:' line");
            split.seen = split_commas(rest);
            have_seen = true;
        } else if (key == "unseen") {
            if (have_unseen) throw DataError(path + ": duplicate 'unseen:' line");
            split.unseen = split_commas(rest);
            have_unseen = true;
        } else {
            throw DataError(path + ": unknown split key '" + key + "'");
        }
    }
    if (!have_seen || !have_unseen) throw DataError(path + ": need both 'seen:' and 'unseen:' lines");
    if (split.seen.empty()) throw DataError(path + ": seen list is empty");
    return split;
}

void save_split(const std::string& path, const CategorySplit& split) {
    std::ofstream out(path);
    if (!out) throw ConfigError("cannot write split file: " + path);
    auto join = [](const std::vector<std::string>& names) {
        std::string s;
        for (std::size_t i = 0; i < names.size(); ++i) {
            if (i) s += ",";
            s += names[i];
        }
        return s;
    };
    out << "seen: " << join(split.seen) << '\n';
    out << "unseen: " << join(split.unseen) << '\n';
    if (!out) throw ConfigError("write failed: " + path);
}

void validate_split(const EmbeddingTable& table, const CategorySplit& split) {
    std::unordered_set<std::string> all;
    for (const auto& lists : {&split.seen, &split.unseen}) {
        for (const auto& name : *lists) {
            if (!all.insert(name).second)
                throw DataError("split: category '" + name + "' appears more than once across seen/unseen");
            if (!table.contains(name)) throw DataError("split: category '" + name + "' not in the embedding table");
        }
    }
}

Matrix row_normalize(const Matrix& rows) {
    Matrix out = rows;
    for (Eigen::Index i = 0; i < out.rows(); ++i) {
        const double n = out.row(i).norm();
        if (!(n > 0.0) || !std::isfinite(n))
            throw NumericError("cannot normalize row " + std::to_string(i) + ": zero or non-finite norm");
        out.row(i) /= n;
    }
    return out;
}

EmbeddingTable row_normalize(const EmbeddingTable& table) {
    EmbeddingTable out;
    out.names = table.names;
    out.vectors = row_normalize(table.vectors);
    return out;
}

EmbeddingTable subtable(const EmbeddingTable& table, const std::vector<std::string>& names) {
    EmbeddingTable out;
    out.names = names;
    out.vectors.resize(static_cast<Eigen::Index>(names.size()), table.dim());
    for (std::size_t i = 0; i < names.size(); ++i) {
        const int idx = table.index_of(names[i]);
        if (idx < 0) throw DataError("subtable: category '" + names[i] + "' not in the embedding table");
        out.vectors.row(static_cast<Eigen::Index>(i)) = table.vectors.row(idx);
    }
    return out;
}

Vector background_vector(const BackgroundMode& mode, const EmbeddingTable& seen) {
    const int d = seen.dim();
    switch (mode.kind) {
        case BackgroundKind::Fixed: {
            Vector v = Vector::Zero(d);
            v(0) = 1.0;
            return v;
        }
        case BackgroundKind::Mean: {
            if (seen.size() == 0) throw DataError("mean background needs at least one seen category");
            return seen.vectors.colwise().mean().transpose();
        }
        case BackgroundKind::Learned: {
            if (mode.b.size() != d)
                throw ConfigError("learned background vector has dimension " + std::to_string(mode.b.size()) +
                                  ", expected " + std::to_string(d));
            if (!mode.b.allFinite()) throw NumericError("learned background vector is non-finite");
            return mode.b;
        }
    }
    throw ConfigError("unknown background mode");
}

Matrix augmented_seen_matrix(const EmbeddingTable& seen, const BackgroundMode& mode) {
    Matrix out(seen.size() + 1, seen.dim());
    out.topRows(seen.size()) = seen.vectors;
    out.row(seen.size()) = background_vector(mode, seen).transpose();
    return row_normalize(out);
}

}  // namespace zsd
