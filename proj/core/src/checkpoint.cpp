#include "zsd/checkpoint.hpp"

#include <fstream>

#include <json.hpp>

#include "zsd/error.hpp"

namespace zsd {

namespace {

using ojson = nlohmann::ordered_json;

constexpr int kVersion = 1;
constexpr const char* kFormat = "zsd-heads";

ojson matrix_to_json(const Matrix& m) {
    ojson rows = ojson::array();
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        ojson row = ojson::array();
        for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
        rows.push_back(std::move(row));
    }
    return rows;
}

Matrix matrix_from_json(const ojson& j, Eigen::Index rows, Eigen::Index cols, const std::string& what) {
    if (!j.is_array() || static_cast<Eigen::Index>(j.size()) != rows)
        throw DataError("checkpoint: " + what + " must have " + std::to_string(rows) + " rows");
    Matrix m(rows, cols);
    for (Eigen::Index i = 0; i < rows; ++i) {
        const auto& row = j[static_cast<std::size_t>(i)];
        if (!row.is_array() || static_cast<Eigen::Index>(row.size()) != cols)
            throw DataError("checkpoint: " + what + " row " + std::to_string(i) + " must have " +
                            std::to_string(cols) + " columns");
        for (Eigen::Index k = 0; k < cols; ++k) {
            const auto& v = row[static_cast<std::size_t>(k)];
            if (!v.is_number()) throw DataError("checkpoint: " + what + " has a non-numeric entry");
            m(i, k) = v.get<double>();
            if (!std::isfinite(m(i, k))) throw DataError("checkpoint: " + what + " has a non-finite entry");
        }
    }
    return m;
}

}  // namespace

std::uint64_t fnv1a64(std::string_view data) {
    std::uint64_t h = 14695981039346656037ULL;
    for (const char c : data) {
        h ^= static_cast<std::uint8_t>(c);
        h *= 1099511628211ULL;
    }
    return h;
}

std::string fnv1a64_hex(std::string_view data) {
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(fnv1a64(data)));
    return buf;
}

void save_checkpoint(const std::string& path, const HeadParams& params) {
    ojson payload;
    payload["d"] = params.d();
    payload["p"] = params.p();
    payload["t"] = params.t();
    ojson bg;
    bg["mode"] = to_string(params.background.kind);
    if (params.background.kind == BackgroundKind::Learned) {
        std::vector<double> b(params.background.b.data(), params.background.b.data() + params.background.b.size());
        bg["b"] = b;
    }
    payload["background"] = std::move(bg);
    payload["w_cls"] = matrix_to_json(params.w_cls);
    ojson regs = ojson::array();
    for (const auto& m : params.w_reg) regs.push_back(matrix_to_json(m));
    payload["w_reg"] = std::move(regs);
    payload["w_seg"] = matrix_to_json(params.w_seg);

    ojson root;
    root["format"] = kFormat;
    root["version"] = kVersion;
    root["checksum"] = fnv1a64_hex(payload.dump());
    root["payload"] = std::move(payload);

    std::ofstream out(path);
    if (!out) throw ConfigError("cannot write checkpoint: " + path);
    out << root.dump(1) << '\n';
    if (!out) throw ConfigError("write failed: " + path);
}

HeadParams load_checkpoint(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open checkpoint: " + path);
    std::string content((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    ojson root = ojson::parse(content, nullptr, false);
    if (root.is_discarded()) throw DataError(path + ": malformed JSON");

    if (!root.contains("format") || root["format"] != kFormat)
        throw DataError(path + ": not a heads checkpoint");
    if (!root.contains("version") || !root["version"].is_number_integer() ||
        root["version"].get<int>() != kVersion)
        throw DataError(path + ": unsupported checkpoint version");
    if (!root.contains("payload") || !root["payload"].is_object())
        throw DataError(path + ": missing payload");
    if (!root.contains("checksum") || !root["checksum"].is_string())
        throw DataError(path + ": missing checksum");

    const ojson& payload = root["payload"];
    if (root["checksum"].get<std::string>() != fnv1a64_hex(payload.dump()))
        throw DataError(path + ": checksum mismatch (corrupted checkpoint)");

    auto dim = [&](const char* key) {
        if (!payload.contains(key) || !payload[key].is_number_integer())
            throw DataError(path + ": payload missing dimension '" + std::string(key) + "'");
        const int v = payload[key].get<int>();
        if (v < 0) throw DataError(path + ": negative dimension");
        return v;
    };
    const int d = dim("d");
    const int p = dim("p");
    const int t = dim("t");
    if (d <= 0 || p <= 0) throw DataError(path + ": d and p must be positive");

    HeadParams params;
    params.w_cls = matrix_from_json(payload.at("w_cls"), d, p, "w_cls");
    const ojson& regs = payload.at("w_reg");
    if (!regs.is_array() || regs.size() != 4) throw DataError(path + ": w_reg must hold 4 matrices");
    for (std::size_t r = 0; r < 4; ++r)
        params.w_reg[r] = matrix_from_json(regs[r], d, p, "w_reg[" + std::to_string(r) + "]");
    params.w_seg = matrix_from_json(payload.at("w_seg"), d, t, "w_seg");

    const ojson& bg = payload.at("background");
    params.background.kind = parse_background_kind(bg.at("mode").get<std::string>());
    if (params.background.kind == BackgroundKind::Learned) {
        if (!bg.contains("b") || !bg["b"].is_array() || static_cast<int>(bg["b"].size()) != d)
            throw DataError(path + ": learned background must carry a d-length vector");
        Vector b(d);
        for (int i = 0; i < d; ++i) {
            const auto& v = bg["b"][static_cast<std::size_t>(i)];
            if (!v.is_number()) throw DataError(path + ": background vector has a non-numeric entry");
            b(i) = v.get<double>();
            if (!std::isfinite(b(i))) throw DataError(path + ": background vector has a non-finite entry");
        }
        params.background.b = std::move(b);
    }
    return params;
}

}  // namespace zsd
