#include "zsd/dataset.hpp"

#include <fstream>
#include <unordered_set>

#include <json.hpp>

#include "zsd/error.hpp"

namespace zsd {

namespace {

using json = nlohmann::json;
using ojson = nlohmann::ordered_json;

json parse_json(const std::string& text, const std::string& context) {
    json j = json::parse(text, nullptr, false);
    if (j.is_discarded()) throw DataError(context + ": malformed JSON");
    return j;
}

const json& field(const json& j, const char* key, const std::string& context) {
    auto it = j.find(key);
    if (it == j.end()) throw DataError(context + ": missing field '" + key + "'");
    return *it;
}

double number(const json& j, const char* key, const std::string& context) {
    const json& v = field(j, key, context);
    if (!v.is_number()) throw DataError(context + ": field '" + key + "' must be a number");
    return v.get<double>();
}

std::int64_t integer(const json& j, const char* key, const std::string& context) {
    const json& v = field(j, key, context);
    if (!v.is_number_integer()) throw DataError(context + ": field '" + key + "' must be an integer");
    return v.get<std::int64_t>();
}

std::string text(const json& j, const char* key, const std::string& context) {
    const json& v = field(j, key, context);
    if (!v.is_string()) throw DataError(context + ": field '" + key + "' must be a string");
    return v.get<std::string>();
}

Box parse_box(const json& j, const char* key, const std::string& context) {
    const json& v = field(j, key, context);
    if (!v.is_array() || v.size() != 4)
        throw DataError(context + ": field '" + key + "' must be [x1, y1, x2, y2]");
    Box b;
    double vals[4];
    for (std::size_t i = 0; i < 4; ++i) {
        if (!v[i].is_number()) throw DataError(context + ": box coordinate must be a number");
        vals[i] = v[i].get<double>();
        if (!std::isfinite(vals[i])) throw DataError(context + ": non-finite box coordinate");
    }
    b.x1 = vals[0];
    b.y1 = vals[1];
    b.x2 = vals[2];
    b.y2 = vals[3];
    if (!b.well_formed()) throw DataError(context + ": box is not well-formed (x1 < x2, y1 < y2)");
    return b;
}

std::vector<double> number_array(const json& v, const std::string& context) {
    if (!v.is_array()) throw DataError(context + ": expected an array of numbers");
    std::vector<double> out;
    out.reserve(v.size());
    for (const auto& x : v) {
        if (!x.is_number()) throw DataError(context + ": expected an array of numbers");
        const double d = x.get<double>();
        if (!std::isfinite(d)) throw DataError(context + ": non-finite value");
        out.push_back(d);
    }
    return out;
}

json mask_bits_to_json(const MaskGrid& mask) {
    std::string bits(mask.data.size(), '0');
    for (std::size_t i = 0; i < mask.data.size(); ++i)
        if (mask.data[i]) bits[i] = '1';
    json j;
    j["size"] = mask.size;
    j["data"] = bits;
    return j;
}

MaskGrid mask_bits_from_json(const json& j, const std::string& context) {
    MaskGrid mask;
    mask.size = static_cast<int>(integer(j, "size", context));
    if (mask.size <= 0) throw DataError(context + ": mask size must be positive");
    const std::string bits = text(j, "data", context);
    const auto cells = static_cast<std::size_t>(mask.size) * static_cast<std::size_t>(mask.size);
    if (bits.size() != cells) throw DataError(context + ": mask data length does not match size^2");
    mask.data.resize(cells);
    for (std::size_t i = 0; i < cells; ++i) {
        if (bits[i] != '0' && bits[i] != '1') throw DataError(context + ": mask data must be 0/1 characters");
        mask.data[i] = bits[i] == '1' ? 1 : 0;
    }
    return mask;
}

std::string read_file(const std::string& path, const char* what) {
    std::ifstream in(path);
    if (!in) throw DataError(std::string("cannot open ") + what + " file: " + path);
    std::string content((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return content;
}

}  // namespace

GtFile load_gt(const std::string& path) {
    const json j = parse_json(read_file(path, "ground-truth"), path);
    if (!j.is_object()) throw DataError(path + ": top level must be an object");
    GtFile gt;

    const json& images = field(j, "images", path);
    if (!images.is_array()) throw DataError(path + ": 'images' must be an array");
    std::unordered_set<std::int64_t> ids;
    for (const auto& im : images) {
        ImageInfo info;
        info.id = integer(im, "id", path + ": image");
        info.width = number(im, "width", path + ": image");
        info.height = number(im, "height", path + ": image");
        if (!(info.width > 0.0) || !(info.height > 0.0))
            throw DataError(path + ": image " + std::to_string(info.id) + " has non-positive extent");
        if (!ids.insert(info.id).second)
            throw DataError(path + ": duplicate image id " + std::to_string(info.id));
        gt.images.push_back(info);
    }

    const json& cats = field(j, "categories", path);
    if (!cats.is_array()) throw DataError(path + ": 'categories' must be an array");
    std::unordered_set<std::string> cat_set;
    for (const auto& c : cats) {
        if (!c.is_string()) throw DataError(path + ": category names must be strings");
        const auto name = c.get<std::string>();
        if (!cat_set.insert(name).second) throw DataError(path + ": duplicate category '" + name + "'");
        gt.categories.push_back(name);
    }

    const json& anns = field(j, "annotations", path);
    if (!anns.is_array()) throw DataError(path + ": 'annotations' must be an array");
    std::size_t index = 0;
    for (const auto& a : anns) {
        const std::string ctx = path + ": annotation " + std::to_string(index++);
        GroundTruthInstance inst;
        inst.image_id = integer(a, "image_id", ctx);
        if (ids.find(inst.image_id) == ids.end())
            throw DataError(ctx + ": unknown image id " + std::to_string(inst.image_id));
        inst.category = text(a, "category", ctx);
        if (cat_set.find(inst.category) == cat_set.end())
            throw DataError(ctx + ": unknown category '" + inst.category + "'");
        inst.bbox = parse_box(a, "bbox", ctx);
        if (auto it = a.find("mask"); it != a.end() && !it->is_null())
            inst.mask = mask_bits_from_json(*it, ctx);
        gt.annotations.push_back(std::move(inst));
    }
    return gt;
}

void save_gt(const std::string& path, const GtFile& gt) {
    ojson j;
    j["images"] = ojson::array();
    for (const auto& im : gt.images) {
        ojson o;
        o["id"] = im.id;
        o["width"] = im.width;
        o["height"] = im.height;
        j["images"].push_back(std::move(o));
    }
    j["categories"] = gt.categories;
    j["annotations"] = ojson::array();
    for (const auto& a : gt.annotations) {
        ojson o;
        o["image_id"] = a.image_id;
        o["category"] = a.category;
        o["bbox"] = {a.bbox.x1, a.bbox.y1, a.bbox.x2, a.bbox.y2};
        if (a.mask.has_value()) o["mask"] = ojson(mask_bits_to_json(*a.mask));
        j["annotations"].push_back(std::move(o));
    }
    std::ofstream out(path);
    if (!out) throw ConfigError("cannot write ground-truth file: " + path);
    out << j.dump(1) << '\n';
    if (!out) throw ConfigError("write failed: " + path);
}

std::vector<ProposalRecord> load_proposals(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open proposal file: " + path);
    std::vector<ProposalRecord> out;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        const std::string ctx = path + ":" + std::to_string(lineno);
        const json j = parse_json(line, ctx);
        ProposalRecord rec;
        rec.image_id = integer(j, "image_id", ctx);
        rec.box = parse_box(j, "box", ctx);
        const auto z = number_array(field(j, "z", ctx), ctx + ": z");
        if (z.empty()) throw DataError(ctx + ": z must be non-empty");
        rec.z = Eigen::Map<const Vector>(z.data(), static_cast<Eigen::Index>(z.size()));
        if (auto it = j.find("zm"); it != j.end() && !it->is_null()) {
            SpatialFeatures zm;
            zm.n = static_cast<int>(integer(*it, "n", ctx + ": zm"));
            zm.t = static_cast<int>(integer(*it, "t", ctx + ": zm"));
            if (zm.n <= 0 || zm.t <= 0) throw DataError(ctx + ": zm dimensions must be positive");
            const auto vals = number_array(field(*it, "values", ctx + ": zm"), ctx + ": zm values");
            const auto want = static_cast<std::size_t>(zm.n) * zm.n * zm.t;
            if (vals.size() != want)
                throw DataError(ctx + ": zm values length " + std::to_string(vals.size()) + ", expected " +
                                std::to_string(want));
            zm.values.resize(static_cast<Eigen::Index>(zm.n) * zm.n, zm.t);
            for (Eigen::Index cell = 0; cell < zm.values.rows(); ++cell)
                for (int ch = 0; ch < zm.t; ++ch)
                    zm.values(cell, ch) = vals[static_cast<std::size_t>(cell) * zm.t + ch];
            rec.zm = std::move(zm);
        }
        out.push_back(std::move(rec));
    }
    return out;
}

void save_proposals(const std::string& path, const std::vector<ProposalRecord>& proposals) {
    std::ofstream out(path);
    if (!out) throw ConfigError("cannot write proposal file: " + path);
    for (const auto& rec : proposals) {
        ojson j;
        j["image_id"] = rec.image_id;
        j["box"] = {rec.box.x1, rec.box.y1, rec.box.x2, rec.box.y2};
        std::vector<double> z(rec.z.data(), rec.z.data() + rec.z.size());
        j["z"] = z;
        if (rec.zm.has_value()) {
            ojson zm;
            zm["n"] = rec.zm->n;
            zm["t"] = rec.zm->t;
            std::vector<double> vals;
            vals.reserve(static_cast<std::size_t>(rec.zm->values.size()));
            for (Eigen::Index cell = 0; cell < rec.zm->values.rows(); ++cell)
                for (int ch = 0; ch < rec.zm->t; ++ch) vals.push_back(rec.zm->values(cell, ch));
            zm["values"] = vals;
            j["zm"] = std::move(zm);
        }
        out << j.dump() << '\n';
    }
    if (!out) throw ConfigError("write failed: " + path);
}

std::vector<Detection> load_detections(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open detections file: " + path);
    std::vector<Detection> out;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        const std::string ctx = path + ":" + std::to_string(lineno);
        const json j = parse_json(line, ctx);
        Detection det;
        det.image_id = integer(j, "image_id", ctx);
        det.category = text(j, "category", ctx);
        det.origin = parse_origin(text(j, "origin", ctx));
        det.score = number(j, "score", ctx);
        if (!std::isfinite(det.score) || det.score < 0.0)
            throw DataError(ctx + ": score must be finite and non-negative");
        det.box = parse_box(j, "box", ctx);
        if (auto it = j.find("mask"); it != j.end() && !it->is_null()) {
            MaskProbs mask;
            mask.size = static_cast<int>(integer(*it, "size", ctx + ": mask"));
            if (mask.size <= 0) throw DataError(ctx + ": mask size must be positive");
            mask.probs = number_array(field(*it, "probs", ctx + ": mask"), ctx + ": mask probs");
            if (mask.probs.size() != static_cast<std::size_t>(mask.size) * mask.size)
                throw DataError(ctx + ": mask probs length does not match size^2");
            det.mask = std::move(mask);
        }
        out.push_back(std::move(det));
    }
    return out;
}

void save_detections(const std::string& path, const std::vector<Detection>& dets) {
    std::ofstream out(path);
    if (!out) throw ConfigError("cannot write detections file: " + path);
    for (const auto& det : dets) {
        ojson j;
        j["image_id"] = det.image_id;
        j["category"] = det.category;
        j["origin"] = to_string(det.origin);
        j["score"] = det.score;
        j["box"] = {det.box.x1, det.box.y1, det.box.x2, det.box.y2};
        if (det.mask.has_value()) {
            ojson m;
            m["size"] = det.mask->size;
            m["probs"] = det.mask->probs;
            j["mask"] = std::move(m);
        }
        out << j.dump() << '\n';
    }
    if (!out) throw ConfigError("write failed: " + path);
}

}  // namespace zsd
