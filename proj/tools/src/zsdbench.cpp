// zsdbench: command-line harness around the zsdkit core library.
//
//   synth     generate a seeded synthetic detection dataset
//   train     fit projection heads on frozen proposal features
//   eval      run inference on a test split and score it
//   ablate    sweep one design axis and tabulate the scores
//   gradcheck verify analytic gradients against finite differences
//
// Exit codes: 0 success, 1 configuration / usage error, 2 data error,
// 3 numeric error.

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "zsd/checkpoint.hpp"
#include "zsd/dataset.hpp"
#include "zsd/error.hpp"
#include "zsd/infer.hpp"
#include "zsd/metrics.hpp"
#include "zsd/synthgen.hpp"
#include "zsd/train.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using nlohmann::ordered_json;

namespace {

// ---------------------------------------------------------------- helpers

std::string fmt(double v, const char* format = "%.17g") {
    char buf[64];
    std::snprintf(buf, sizeof buf, format, v);
    return buf;
}

std::string fmt6(double v) { return fmt(v, "%.6f"); }

std::string opt_cell(const std::optional<double>& v) { return v ? fmt6(*v) : std::string(); }

json read_json_object(const std::string& path, const char* what) {
    std::ifstream in(path);
    if (!in) throw zsd::ConfigError(std::string("cannot open ") + what + " file: " + path);
    json j = json::parse(in, nullptr, false);
    if (j.is_discarded()) throw zsd::ConfigError(std::string(what) + " file is not valid JSON: " + path);
    if (!j.is_object()) throw zsd::ConfigError(std::string(what) + " file must hold a JSON object: " + path);
    return j;
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path);
    if (!out) throw zsd::ConfigError("cannot write " + path.string());
    out << text;
    if (!out) throw zsd::ConfigError("write failed: " + path.string());
}

fs::path prepare_out_dir(const std::string& out) {
    fs::path dir(out);
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw zsd::ConfigError("cannot create output directory " + out + ": " + ec.message());
    if (!fs::is_directory(dir)) throw zsd::ConfigError("output path is not a directory: " + out);
    return dir;
}

void reject_unknown_keys(const json& j, std::initializer_list<const char*> allowed, const char* what) {
    for (auto it = j.begin(); it != j.end(); ++it) {
        bool known = false;
        for (const char* key : allowed) {
            if (it.key() == key) {
                known = true;
                break;
            }
        }
        if (!known) throw zsd::ConfigError(std::string(what) + " config: unknown key \"" + it.key() + "\"");
    }
}

void fetch(const json& j, const char* key, int& out, const char* what) {
    auto it = j.find(key);
    if (it == j.end()) return;
    if (!it->is_number_integer())
        throw zsd::ConfigError(std::string(what) + " config: \"" + key + "\" must be an integer");
    out = it->get<int>();
}

void fetch(const json& j, const char* key, std::uint64_t& out, const char* what) {
    auto it = j.find(key);
    if (it == j.end()) return;
    if (!it->is_number_unsigned() && !(it->is_number_integer() && it->get<std::int64_t>() >= 0))
        throw zsd::ConfigError(std::string(what) + " config: \"" + key + "\" must be a non-negative integer");
    out = it->get<std::uint64_t>();
}

void fetch(const json& j, const char* key, double& out, const char* what) {
    auto it = j.find(key);
    if (it == j.end()) return;
    if (!it->is_number()) throw zsd::ConfigError(std::string(what) + " config: \"" + key + "\" must be a number");
    out = it->get<double>();
}

void fetch(const json& j, const char* key, bool& out, const char* what) {
    auto it = j.find(key);
    if (it == j.end()) return;
    if (!it->is_boolean()) throw zsd::ConfigError(std::string(what) + " config: \"" + key + "\" must be a boolean");
    out = it->get<bool>();
}

void fetch(const json& j, const char* key, std::string& out, const char* what) {
    auto it = j.find(key);
    if (it == j.end()) return;
    if (!it->is_string()) throw zsd::ConfigError(std::string(what) + " config: \"" + key + "\" must be a string");
    out = it->get<std::string>();
}

ordered_json matrix_json(const zsd::Matrix& m) {
    ordered_json rows = ordered_json::array();
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
        ordered_json row = ordered_json::array();
        for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
        rows.push_back(std::move(row));
    }
    return rows;
}

void write_manifest(const fs::path& dir, const char* command, const ordered_json& config,
                    const std::vector<std::string>& outputs) {
    ordered_json m;
    m["tool"] = "zsdbench";
    m["command"] = command;
    m["config"] = config;
    m["config_hash"] = zsd::fnv1a64_hex(config.dump());
    m["outputs"] = outputs;
    write_text(dir / "manifest.json", m.dump(2) + "\n");
}

// ------------------------------------------------------------ synth config

zsd::SynthConfig synth_from_json(const json& j) {
    zsd::SynthConfig c;
    reject_unknown_keys(j,
                        {"seed", "embedding_dim", "feature_dim", "mask_channels", "mask_grid", "image_size",
                         "seen_categories", "unseen_categories", "images", "objects_per_image",
                         "proposals_per_object", "background_per_image", "jitter", "sigma", "map_scale",
                         "train_fraction"},
                        "synth");
    fetch(j, "seed", c.seed, "synth");
    fetch(j, "embedding_dim", c.d, "synth");
    fetch(j, "feature_dim", c.p, "synth");
    fetch(j, "mask_channels", c.t, "synth");
    fetch(j, "mask_grid", c.mask_grid, "synth");
    fetch(j, "image_size", c.image_size, "synth");
    fetch(j, "seen_categories", c.seen, "synth");
    fetch(j, "unseen_categories", c.unseen, "synth");
    fetch(j, "images", c.images, "synth");
    fetch(j, "objects_per_image", c.objects_per_image, "synth");
    fetch(j, "proposals_per_object", c.proposals_per_object, "synth");
    fetch(j, "background_per_image", c.background_per_image, "synth");
    fetch(j, "jitter", c.jitter, "synth");
    fetch(j, "sigma", c.sigma, "synth");
    fetch(j, "map_scale", c.map_scale, "synth");
    fetch(j, "train_fraction", c.train_fraction, "synth");
    return c;
}

ordered_json synth_to_json(const zsd::SynthConfig& c) {
    ordered_json j;
    j["seed"] = c.seed;
    j["embedding_dim"] = c.d;
    j["feature_dim"] = c.p;
    j["mask_channels"] = c.t;
    j["mask_grid"] = c.mask_grid;
    j["image_size"] = c.image_size;
    j["seen_categories"] = c.seen;
    j["unseen_categories"] = c.unseen;
    j["images"] = c.images;
    j["objects_per_image"] = c.objects_per_image;
    j["proposals_per_object"] = c.proposals_per_object;
    j["background_per_image"] = c.background_per_image;
    j["jitter"] = c.jitter;
    j["sigma"] = c.sigma;
    j["map_scale"] = c.map_scale;
    j["train_fraction"] = c.train_fraction;
    return j;
}

// ------------------------------------------------------------ train config

zsd::TrainConfig train_from_json(const json& j) {
    zsd::TrainConfig c;
    reject_unknown_keys(j,
                        {"learning_rate", "momentum", "iterations", "batch_size", "seed", "loss", "margin",
                         "background", "iou_threshold"},
                        "train");
    fetch(j, "learning_rate", c.learning_rate, "train");
    fetch(j, "momentum", c.momentum, "train");
    fetch(j, "iterations", c.iterations, "train");
    fetch(j, "batch_size", c.batch_size, "train");
    fetch(j, "seed", c.seed, "train");
    fetch(j, "margin", c.margin, "train");
    fetch(j, "iou_threshold", c.iou_threshold, "train");
    std::string loss = zsd::to_string(c.loss);
    fetch(j, "loss", loss, "train");
    c.loss = zsd::parse_loss_kind(loss);
    std::string background = zsd::to_string(c.background);
    fetch(j, "background", background, "train");
    c.background = zsd::parse_background_kind(background);
    return c;
}

ordered_json train_to_json(const zsd::TrainConfig& c) {
    ordered_json j;
    j["learning_rate"] = c.learning_rate;
    j["momentum"] = c.momentum;
    j["iterations"] = c.iterations;
    j["batch_size"] = c.batch_size;
    j["seed"] = c.seed;
    j["loss"] = zsd::to_string(c.loss);
    j["margin"] = c.margin;
    j["background"] = zsd::to_string(c.background);
    j["iou_threshold"] = c.iou_threshold;
    return j;
}

// ------------------------------------------------------------- eval config

struct EvalSettings {
    zsd::InferConfig infer;
    zsd::EvalOptions options;
};

EvalSettings eval_from_json(const json& j) {
    EvalSettings s;
    reject_unknown_keys(j,
                        {"beta", "nms_iou", "max_detections", "mask_threshold", "mode", "variant",
                         "beta_after_nms", "map_iou", "recall_ious", "recall_k"},
                        "eval");
    fetch(j, "beta", s.infer.beta, "eval");
    fetch(j, "nms_iou", s.infer.nms_iou, "eval");
    fetch(j, "max_detections", s.infer.max_detections, "eval");
    double mask_threshold = s.infer.mask_threshold;
    fetch(j, "mask_threshold", mask_threshold, "eval");
    s.infer.mask_threshold = mask_threshold;
    s.options.mask_threshold = mask_threshold;
    std::string mode = zsd::to_string(s.infer.mode);
    fetch(j, "mode", mode, "eval");
    s.infer.mode = zsd::parse_task_mode(mode);
    std::string variant = zsd::to_string(s.infer.variant);
    fetch(j, "variant", variant, "eval");
    s.infer.variant = zsd::parse_transfer_variant(variant);
    fetch(j, "beta_after_nms", s.infer.beta_after_nms, "eval");
    fetch(j, "map_iou", s.options.map_iou, "eval");
    if (auto it = j.find("recall_ious"); it != j.end()) {
        if (!it->is_array() || it->size() != 3)
            throw zsd::ConfigError("eval config: \"recall_ious\" must be an array of 3 numbers");
        for (int i = 0; i < 3; ++i) {
            if (!(*it)[i].is_number())
                throw zsd::ConfigError("eval config: \"recall_ious\" must be an array of 3 numbers");
            s.options.recall_ious[static_cast<std::size_t>(i)] = (*it)[i].get<double>();
        }
    }
    fetch(j, "recall_k", s.options.recall_k, "eval");
    return s;
}

ordered_json eval_to_json(const EvalSettings& s) {
    ordered_json j;
    j["beta"] = s.infer.beta;
    j["nms_iou"] = s.infer.nms_iou;
    j["max_detections"] = s.infer.max_detections;
    j["mask_threshold"] = s.options.mask_threshold;
    j["mode"] = zsd::to_string(s.infer.mode);
    j["variant"] = zsd::to_string(s.infer.variant);
    j["beta_after_nms"] = s.infer.beta_after_nms;
    j["map_iou"] = s.options.map_iou;
    j["recall_ious"] = s.options.recall_ious;
    j["recall_k"] = s.options.recall_k;
    return j;
}

void validate_eval(const EvalSettings& s) {
    zsd::validate(s.infer);
    if (s.options.map_iou <= 0.0 || s.options.map_iou > 1.0)
        throw zsd::ConfigError("map_iou must lie in (0, 1]");
    for (double iou : s.options.recall_ious)
        if (iou <= 0.0 || iou > 1.0) throw zsd::ConfigError("recall_ious must lie in (0, 1]");
    if (s.options.recall_k <= 0) throw zsd::ConfigError("recall_k must be positive");
    if (s.options.mask_threshold < 0.0 || s.options.mask_threshold > 1.0)
        throw zsd::ConfigError("mask_threshold must lie in [0, 1]");
}

// ----------------------------------------------------------------- dataset

struct LoadedData {
    zsd::EmbeddingTable table;
    zsd::CategorySplit split;
};

LoadedData load_table_and_split(const fs::path& src) {
    LoadedData d;
    d.table = zsd::load_embeddings((src / "embeddings.txt").string());
    d.split = zsd::load_split((src / "split.txt").string());
    zsd::validate_split(d.table, d.split);
    return d;
}

std::map<std::int64_t, std::pair<double, double>> image_bounds(const zsd::GtFile& gt) {
    std::map<std::int64_t, std::pair<double, double>> bounds;
    for (const auto& im : gt.images) bounds[im.id] = {im.width, im.height};
    return bounds;
}

void write_loss_log(const fs::path& path, const std::vector<zsd::LossLogRow>& rows) {
    std::ostringstream out;
    out << "iteration,total,cls,reg,mask\n";
    for (const auto& row : rows)
        out << row.iteration << ',' << fmt(row.total) << ',' << fmt(row.cls) << ',' << fmt(row.reg) << ','
            << fmt(row.mask) << '\n';
    write_text(path, out.str());
}

// ---------------------------------------------------------------- commands

void run_synth(const zsd::SynthConfig& cfg, const std::string& out) {
    zsd::validate(cfg);
    fs::path dir = prepare_out_dir(out);
    zsd::SynthDataset ds = zsd::generate(cfg);

    zsd::save_embeddings((dir / "embeddings.txt").string(), ds.table);
    zsd::save_split((dir / "split.txt").string(), ds.split);
    zsd::save_gt((dir / "gt_train.json").string(), ds.train_gt);
    zsd::save_gt((dir / "gt_test.json").string(), ds.test_gt);
    zsd::save_proposals((dir / "proposals_train.jsonl").string(), ds.train_proposals);
    zsd::save_proposals((dir / "proposals_test.jsonl").string(), ds.test_proposals);

    ordered_json oracle;
    oracle["categories"] = ds.table.names;
    oracle["map_z"] = matrix_json(ds.map_z);
    oracle["map_m"] = matrix_json(ds.map_m);
    oracle["provenance_train"] = ds.train_provenance;
    oracle["provenance_test"] = ds.test_provenance;
    write_text(dir / "oracle.json", oracle.dump(1) + "\n");

    write_manifest(dir, "synth", synth_to_json(cfg),
                   {"embeddings.txt", "split.txt", "gt_train.json", "gt_test.json", "proposals_train.jsonl",
                    "proposals_test.jsonl", "oracle.json"});

    std::cout << "synth: " << ds.train_gt.images.size() << " train / " << ds.test_gt.images.size()
              << " test images, " << ds.train_gt.annotations.size() << " / " << ds.test_gt.annotations.size()
              << " annotations, " << ds.train_proposals.size() << " / " << ds.test_proposals.size()
              << " proposals\n";
}

void run_train(const zsd::TrainConfig& cfg, const std::string& data, const std::string& out) {
    fs::path dir = prepare_out_dir(out);
    fs::path src(data);
    LoadedData d = load_table_and_split(src);
    zsd::GtFile gt = zsd::load_gt((src / "gt_train.json").string());
    zsd::TrainData td;
    td.proposals = zsd::load_proposals((src / "proposals_train.jsonl").string());
    td.gts = gt.annotations;

    std::vector<zsd::LossLogRow> log;
    zsd::HeadParams params = zsd::train_heads(td, d.table, d.split, cfg, &log);

    zsd::save_checkpoint((dir / "checkpoint.json").string(), params);
    write_loss_log(dir / "loss_log.csv", log);
    write_manifest(dir, "train", train_to_json(cfg), {"checkpoint.json", "loss_log.csv"});

    if (log.empty())
        std::cout << "train: 0 iterations (checkpoint holds the initialization)\n";
    else
        std::cout << "train: " << log.size() << " iterations, loss " << fmt6(log.front().total) << " -> "
                  << fmt6(log.back().total) << "\n";
}

std::size_t count_seen(const std::vector<zsd::Detection>& dets) {
    std::size_t n = 0;
    for (const auto& det : dets)
        if (det.origin == zsd::Origin::Seen) ++n;
    return n;
}

std::string report_summary(const zsd::EvalReport& report) {
    auto show = [](const std::optional<double>& v) { return v ? fmt6(*v) : std::string("-"); };
    std::ostringstream out;
    out << "mAP@" << fmt(report.options.map_iou, "%g");
    if (mode_is_generalized(report.mode))
        out << " seen " << show(report.map_seen) << ", unseen " << show(report.map_unseen) << ", hm "
            << show(report.hm_map);
    else
        out << " unseen " << show(report.map_unseen);
    return out.str();
}

zsd::EvalReport run_eval_once(const EvalSettings& s, const zsd::EmbeddingTable& table,
                              const zsd::CategorySplit& split, const zsd::GtFile& test_gt,
                              const std::vector<zsd::ProposalRecord>& proposals, const zsd::HeadParams& params,
                              const fs::path& dir, std::size_t* seen_count = nullptr) {
    auto dets = zsd::predict_dataset(proposals, params, table, split, s.infer, image_bounds(test_gt));
    if (seen_count) *seen_count = count_seen(dets);
    zsd::save_detections((dir / "detections.jsonl").string(), dets);
    zsd::EvalReport report =
        zsd::evaluate(dets, test_gt.images, test_gt.annotations, split, s.infer.mode, s.options);
    zsd::write_report_json((dir / "report.json").string(), report);
    zsd::write_report_csv((dir / "report.csv").string(), report);
    return report;
}

void run_eval(const EvalSettings& s, const std::string& data, const std::string& checkpoint,
              const std::string& out) {
    validate_eval(s);
    fs::path dir = prepare_out_dir(out);
    fs::path src(data);
    LoadedData d = load_table_and_split(src);
    zsd::GtFile test_gt = zsd::load_gt((src / "gt_test.json").string());
    auto proposals = zsd::load_proposals((src / "proposals_test.jsonl").string());
    zsd::HeadParams params = zsd::load_checkpoint(checkpoint);

    zsd::EvalReport report = run_eval_once(s, d.table, d.split, test_gt, proposals, params, dir);
    write_manifest(dir, "eval", eval_to_json(s), {"detections.jsonl", "report.json", "report.csv"});

    std::cout << "eval[" << zsd::to_string(report.mode) << "]: " << report_summary(report) << "\n";
}

struct AblationRow {
    std::string setting;
    std::string mode;
    std::optional<double> map_seen;
    std::optional<double> map_unseen;
    std::optional<double> hm_map;
    std::optional<double> unseen_recall_50;
    std::size_t seen_detections = 0;
};

void run_ablate(const std::string& axis, const zsd::TrainConfig& base_train, const EvalSettings& base_eval,
                const std::string& data, const std::string& out) {
    validate_eval(base_eval);
    fs::path dir = prepare_out_dir(out);
    fs::path src(data);
    LoadedData d = load_table_and_split(src);
    zsd::GtFile train_gt = zsd::load_gt((src / "gt_train.json").string());
    zsd::GtFile test_gt = zsd::load_gt((src / "gt_test.json").string());
    zsd::TrainData td;
    td.proposals = zsd::load_proposals((src / "proposals_train.jsonl").string());
    td.gts = train_gt.annotations;
    auto test_proposals = zsd::load_proposals((src / "proposals_test.jsonl").string());

    std::vector<AblationRow> rows;
    std::vector<std::string> outputs{"ablation.csv"};

    auto train_one = [&](const zsd::TrainConfig& cfg, const fs::path& subdir) {
        fs::create_directories(subdir);
        std::vector<zsd::LossLogRow> log;
        zsd::HeadParams params = zsd::train_heads(td, d.table, d.split, cfg, &log);
        zsd::save_checkpoint((subdir / "checkpoint.json").string(), params);
        write_loss_log(subdir / "loss_log.csv", log);
        return params;
    };
    auto eval_one = [&](const zsd::HeadParams& params, const EvalSettings& es, const fs::path& subdir,
                        const std::string& setting) {
        fs::create_directories(subdir);
        std::size_t seen_count = 0;
        zsd::EvalReport report =
            run_eval_once(es, d.table, d.split, test_gt, test_proposals, params, subdir, &seen_count);
        AblationRow row;
        row.setting = setting;
        row.mode = zsd::to_string(es.infer.mode);
        row.map_seen = report.map_seen;
        row.map_unseen = report.map_unseen;
        row.hm_map = report.hm_map;
        for (std::size_t i = 0; i < report.options.recall_ious.size(); ++i)
            if (report.options.recall_ious[i] == 0.5) {
                row.unseen_recall_50 = report.recall_unseen[i];
                break;
            }
        row.seen_detections = seen_count;
        rows.push_back(row);
        outputs.push_back(subdir.filename().string() + "/report.json");
    };

    if (axis == "background") {
        for (auto kind : {zsd::BackgroundKind::Fixed, zsd::BackgroundKind::Mean, zsd::BackgroundKind::Learned}) {
            zsd::TrainConfig cfg = base_train;
            cfg.background = kind;
            std::string setting = zsd::to_string(kind);
            fs::path sub = dir / ("background-" + setting);
            zsd::HeadParams params = train_one(cfg, sub);
            eval_one(params, base_eval, sub, setting);
        }
    } else if (axis == "classifier-loss") {
        for (auto kind : {zsd::LossKind::CrossEntropy, zsd::LossKind::MaxMargin, zsd::LossKind::L2Error}) {
            zsd::TrainConfig cfg = base_train;
            cfg.loss = kind;
            std::string setting = zsd::to_string(kind);
            fs::path sub = dir / ("loss-" + setting);
            zsd::HeadParams params = train_one(cfg, sub);
            eval_one(params, base_eval, sub, setting);
        }
    } else if (axis == "regressor-transfer" || axis == "segmentor-transfer") {
        zsd::HeadParams params = train_one(base_train, dir / "model");
        outputs.push_back("model/checkpoint.json");
        for (auto variant : {zsd::TransferVariant::Learned, zsd::TransferVariant::MostSimilar,
                             zsd::TransferVariant::LinearCombination, zsd::TransferVariant::NoTransfer}) {
            EvalSettings es = base_eval;
            es.infer.variant = variant;
            es.infer.mode = axis == "regressor-transfer" ? zsd::TaskMode::ZSD : zsd::TaskMode::ZSI;
            std::string setting = zsd::to_string(variant);
            eval_one(params, es, dir / (axis.substr(0, axis.find('-')) + "-" + setting), setting);
        }
    } else if (axis == "beta") {
        zsd::HeadParams params = train_one(base_train, dir / "model");
        outputs.push_back("model/checkpoint.json");
        for (double beta : {0.0, 0.05, 0.1, 0.2, 0.3}) {
            EvalSettings es = base_eval;
            es.infer.beta = beta;
            std::string setting = fmt(beta, "%g");
            eval_one(params, es, dir / ("beta-" + setting), setting);
        }
    } else {
        throw zsd::ConfigError("unknown ablation axis: '" + axis +
                               "' (expected background|classifier-loss|regressor-transfer|segmentor-transfer|beta)");
    }

    std::ostringstream csv;
    csv << "axis,setting,mode,map_seen,map_unseen,hm_map,unseen_recall_0.5,seen_detections\n";
    for (const auto& row : rows)
        csv << axis << ',' << row.setting << ',' << row.mode << ',' << opt_cell(row.map_seen) << ','
            << opt_cell(row.map_unseen) << ',' << opt_cell(row.hm_map) << ',' << opt_cell(row.unseen_recall_50)
            << ',' << row.seen_detections << '\n';
    write_text(dir / "ablation.csv", csv.str());

    ordered_json config;
    config["axis"] = axis;
    config["train"] = train_to_json(base_train);
    config["eval"] = eval_to_json(base_eval);
    write_manifest(dir, "ablate", config, outputs);

    std::cout << "ablate[" << axis << "]:\n";
    for (const auto& row : rows) {
        std::cout << "  " << row.setting << " (" << row.mode << "):";
        if (row.map_seen) std::cout << " seen " << fmt6(*row.map_seen);
        if (row.map_unseen) std::cout << " unseen " << fmt6(*row.map_unseen);
        if (row.hm_map) std::cout << " hm " << fmt6(*row.hm_map);
        std::cout << " [" << row.seen_detections << " seen detections]\n";
    }
}

void run_gradcheck(int points, std::uint64_t seed, double epsilon, double tolerance, const std::string& out) {
    if (points <= 0) throw zsd::ConfigError("--points must be positive");
    if (!(epsilon > 0.0)) throw zsd::ConfigError("--epsilon must be positive");
    if (!(tolerance > 0.0)) throw zsd::ConfigError("--tolerance must be positive");

    zsd::GradSuiteConfig cfg;
    cfg.points_per_loss = points;
    cfg.seed = seed;
    cfg.epsilon = epsilon;
    zsd::GradSuiteReport report = zsd::gradient_check_suite(cfg);

    auto line = [](const char* name, double v) {
        std::cout << "  " << name << std::string(16 - std::string(name).size(), ' ') << fmt(v, "%.3e") << "\n";
    };
    std::cout << "gradcheck: max relative error over " << points << " setups per loss\n";
    line("cross-entropy", report.ce);
    line("max-margin", report.max_margin);
    line("l2-error", report.l2);
    line("smooth-l1", report.smooth_l1);
    line("mask-bce", report.mask_bce);

    bool pass = report.worst() <= tolerance;
    if (!out.empty()) {
        fs::path dir = prepare_out_dir(out);
        ordered_json j;
        j["points_per_loss"] = points;
        j["seed"] = seed;
        j["epsilon"] = epsilon;
        j["tolerance"] = tolerance;
        j["cross_entropy"] = report.ce;
        j["max_margin"] = report.max_margin;
        j["l2_error"] = report.l2;
        j["smooth_l1"] = report.smooth_l1;
        j["mask_bce"] = report.mask_bce;
        j["worst"] = report.worst();
        j["pass"] = pass;
        write_text(dir / "gradcheck.json", j.dump(2) + "\n");
        ordered_json config;
        config["points_per_loss"] = points;
        config["seed"] = seed;
        config["epsilon"] = epsilon;
        config["tolerance"] = tolerance;
        write_manifest(dir, "gradcheck", config, {"gradcheck.json"});
    }
    std::cout << (pass ? "gradcheck: PASS" : "gradcheck: FAIL") << " (worst " << fmt(report.worst(), "%.3e")
              << ", tolerance " << fmt(tolerance, "%.3e") << ")\n";
    if (!pass)
        throw zsd::NumericError("gradient check exceeded tolerance: worst relative error " +
                                fmt(report.worst(), "%.3e"));
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Embedding-projection detection heads: synthesize, train, evaluate, ablate."};
    app.require_subcommand(1);

    // synth -------------------------------------------------------------
    std::string synth_out, synth_config;
    std::uint64_t synth_seed = 1;
    int synth_images = 200;
    double synth_sigma = 0.0, synth_jitter = 0.7;
    auto* synth = app.add_subcommand("synth", "Generate a seeded synthetic dataset");
    synth->add_option("--out", synth_out, "Output directory")->required();
    synth->add_option("--config", synth_config, "JSON config file");
    auto* synth_seed_opt = synth->add_option("--seed", synth_seed, "RNG seed");
    auto* synth_images_opt = synth->add_option("--images", synth_images, "Number of images");
    auto* synth_sigma_opt = synth->add_option("--sigma", synth_sigma, "Additive feature noise");
    auto* synth_jitter_opt = synth->add_option("--jitter", synth_jitter, "Base proposal expansion fraction");
    synth->callback([&] {
        json base = synth_config.empty() ? json::object() : read_json_object(synth_config, "synth");
        zsd::SynthConfig cfg = synth_from_json(base);
        if (synth_seed_opt->count() > 0) cfg.seed = synth_seed;
        if (synth_images_opt->count() > 0) cfg.images = synth_images;
        if (synth_sigma_opt->count() > 0) cfg.sigma = synth_sigma;
        if (synth_jitter_opt->count() > 0) cfg.jitter = synth_jitter;
        run_synth(cfg, synth_out);
    });

    // train -------------------------------------------------------------
    std::string train_data, train_out, train_config;
    std::uint64_t train_seed = 0;
    int train_iters = 1000, train_batch = 32;
    double train_lr = 0.005, train_momentum = 0.9, train_margin = 0.2, train_iou = 0.5;
    std::string train_loss = "cross-entropy", train_background = "learned";
    auto* train = app.add_subcommand("train", "Train projection heads on frozen features");
    train->add_option("--data", train_data, "Dataset directory (synth layout)")->required();
    train->add_option("--out", train_out, "Output directory")->required();
    train->add_option("--config", train_config, "JSON config file");
    auto* train_seed_opt = train->add_option("--seed", train_seed, "RNG seed");
    auto* train_iters_opt = train->add_option("--iterations", train_iters, "SGD iterations");
    auto* train_batch_opt = train->add_option("--batch-size", train_batch, "Samples per iteration");
    auto* train_lr_opt = train->add_option("--learning-rate", train_lr, "SGD step size");
    auto* train_momentum_opt = train->add_option("--momentum", train_momentum, "SGD momentum");
    auto* train_margin_opt = train->add_option("--margin", train_margin, "Max-margin loss margin");
    auto* train_iou_opt = train->add_option("--iou-threshold", train_iou, "Proposal-to-GT match threshold");
    auto* train_loss_opt =
        train->add_option("--loss", train_loss, "Classifier loss (cross-entropy|max-margin|l2-error)");
    auto* train_background_opt =
        train->add_option("--background", train_background, "Background row mode (fixed|mean|learned)");
    train->callback([&] {
        json base = train_config.empty() ? json::object() : read_json_object(train_config, "train");
        zsd::TrainConfig cfg = train_from_json(base);
        if (train_seed_opt->count() > 0) cfg.seed = train_seed;
        if (train_iters_opt->count() > 0) cfg.iterations = train_iters;
        if (train_batch_opt->count() > 0) cfg.batch_size = train_batch;
        if (train_lr_opt->count() > 0) cfg.learning_rate = train_lr;
        if (train_momentum_opt->count() > 0) cfg.momentum = train_momentum;
        if (train_margin_opt->count() > 0) cfg.margin = train_margin;
        if (train_iou_opt->count() > 0) cfg.iou_threshold = train_iou;
        if (train_loss_opt->count() > 0) cfg.loss = zsd::parse_loss_kind(train_loss);
        if (train_background_opt->count() > 0) cfg.background = zsd::parse_background_kind(train_background);
        run_train(cfg, train_data, train_out);
    });

    // eval --------------------------------------------------------------
    std::string eval_data, eval_ckpt, eval_out, eval_config;
    double eval_beta = 0.05, eval_nms = 0.5, eval_maskthr = 0.5, eval_map_iou = 0.5;
    int eval_maxdet = 100, eval_recall_k = 100;
    std::string eval_mode = "gzsd", eval_variant = "learned";
    auto* eval = app.add_subcommand("eval", "Run inference on the test split and score it");
    eval->add_option("--data", eval_data, "Dataset directory (synth layout)")->required();
    eval->add_option("--checkpoint", eval_ckpt, "Trained head checkpoint")->required();
    eval->add_option("--out", eval_out, "Output directory")->required();
    eval->add_option("--config", eval_config, "JSON config file");
    auto* eval_beta_opt = eval->add_option("--beta", eval_beta, "Seen-score filter threshold");
    auto* eval_nms_opt = eval->add_option("--nms-iou", eval_nms, "NMS suppression threshold");
    auto* eval_maxdet_opt = eval->add_option("--max-detections", eval_maxdet, "Detections kept per image");
    auto* eval_maskthr_opt = eval->add_option("--mask-threshold", eval_maskthr, "Mask binarization threshold");
    auto* eval_mode_opt = eval->add_option("--mode", eval_mode, "Task mode (zsd|gzsd|zsi|gzsi)");
    auto* eval_variant_opt = eval->add_option(
        "--variant", eval_variant, "Unseen transfer (learned|most-similar|linear-combination|no-transfer)");
    auto* eval_beta_after_opt = eval->add_flag("--beta-after-nms", "Apply the beta filter after NMS");
    auto* eval_map_iou_opt = eval->add_option("--map-iou", eval_map_iou, "IoU threshold for mAP");
    auto* eval_recall_k_opt = eval->add_option("--recall-k", eval_recall_k, "Detections per image for recall");
    eval->callback([&] {
        json base = eval_config.empty() ? json::object() : read_json_object(eval_config, "eval");
        EvalSettings s = eval_from_json(base);
        if (eval_beta_opt->count() > 0) s.infer.beta = eval_beta;
        if (eval_nms_opt->count() > 0) s.infer.nms_iou = eval_nms;
        if (eval_maxdet_opt->count() > 0) s.infer.max_detections = eval_maxdet;
        if (eval_maskthr_opt->count() > 0) {
            s.infer.mask_threshold = eval_maskthr;
            s.options.mask_threshold = eval_maskthr;
        }
        if (eval_mode_opt->count() > 0) s.infer.mode = zsd::parse_task_mode(eval_mode);
        if (eval_variant_opt->count() > 0) s.infer.variant = zsd::parse_transfer_variant(eval_variant);
        if (eval_beta_after_opt->count() > 0) s.infer.beta_after_nms = true;
        if (eval_map_iou_opt->count() > 0) s.options.map_iou = eval_map_iou;
        if (eval_recall_k_opt->count() > 0) s.options.recall_k = eval_recall_k;
        run_eval(s, eval_data, eval_ckpt, eval_out);
    });

    // ablate ------------------------------------------------------------
    std::string ablate_data, ablate_out, ablate_axis, ablate_train_config, ablate_eval_config;
    std::uint64_t ablate_seed = 0;
    int ablate_iters = 1000;
    double ablate_lr = 0.005, ablate_iou = 0.5;
    auto* ablate = app.add_subcommand("ablate", "Sweep one design axis and tabulate the scores");
    ablate->add_option("--data", ablate_data, "Dataset directory (synth layout)")->required();
    ablate->add_option("--out", ablate_out, "Output directory")->required();
    ablate
        ->add_option("--axis", ablate_axis,
                     "background|classifier-loss|regressor-transfer|segmentor-transfer|beta")
        ->required();
    ablate->add_option("--train-config", ablate_train_config, "JSON training config file");
    ablate->add_option("--eval-config", ablate_eval_config, "JSON evaluation config file");
    auto* ablate_seed_opt = ablate->add_option("--seed", ablate_seed, "Training RNG seed");
    auto* ablate_iters_opt = ablate->add_option("--iterations", ablate_iters, "SGD iterations");
    auto* ablate_lr_opt = ablate->add_option("--learning-rate", ablate_lr, "SGD step size");
    auto* ablate_iou_opt = ablate->add_option("--iou-threshold", ablate_iou, "Proposal-to-GT match threshold");
    ablate->callback([&] {
        json tbase = ablate_train_config.empty() ? json::object() : read_json_object(ablate_train_config, "train");
        zsd::TrainConfig tcfg = train_from_json(tbase);
        if (ablate_seed_opt->count() > 0) tcfg.seed = ablate_seed;
        if (ablate_iters_opt->count() > 0) tcfg.iterations = ablate_iters;
        if (ablate_lr_opt->count() > 0) tcfg.learning_rate = ablate_lr;
        if (ablate_iou_opt->count() > 0) tcfg.iou_threshold = ablate_iou;
        json ebase = ablate_eval_config.empty() ? json::object() : read_json_object(ablate_eval_config, "eval");
        EvalSettings ecfg = eval_from_json(ebase);
        run_ablate(ablate_axis, tcfg, ecfg, ablate_data, ablate_out);
    });

    // gradcheck ----------------------------------------------------------
    int grad_points = 100;
    std::uint64_t grad_seed = 20240501;
    double grad_eps = 1e-5, grad_tol = 1e-4;
    std::string grad_out;
    auto* grad = app.add_subcommand("gradcheck", "Check analytic gradients against finite differences");
    grad->add_option("--points", grad_points, "Setups per loss");
    grad->add_option("--seed", grad_seed, "RNG seed");
    grad->add_option("--epsilon", grad_eps, "Central-difference step");
    grad->add_option("--tolerance", grad_tol, "Maximum allowed relative error");
    grad->add_option("--out", grad_out, "Optional output directory for gradcheck.json");
    grad->callback([&] { run_gradcheck(grad_points, grad_seed, grad_eps, grad_tol, grad_out); });

    try {
        try {
            app.parse(argc, argv);
        } catch (const CLI::ParseError& e) {
            int code = app.exit(e);
            return code == 0 ? 0 : 1;
        }
    } catch (const zsd::ConfigError& e) {
        std::cerr << "zsdbench: config error: " << e.what() << "\n";
        return 1;
    } catch (const zsd::DataError& e) {
        std::cerr << "zsdbench: data error: " << e.what() << "\n";
        return 2;
    } catch (const zsd::NumericError& e) {
        std::cerr << "zsdbench: numeric error: " << e.what() << "\n";
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "zsdbench: error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
