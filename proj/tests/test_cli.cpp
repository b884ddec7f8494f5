#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <string>
#include <vector>

#include "support/test_support.hpp"
#include "zsd/checkpoint.hpp"
#include "zsd/dataset.hpp"
#include "zsd/embedding.hpp"
#include "zsd/train.hpp"

#ifndef ZSDBENCH_PATH
#error "ZSDBENCH_PATH must be defined to the harness executable"
#endif

using namespace zsd;
using testsup::CliResult;
using testsup::TempDir;
using testsup::run_cli;
using testsup::spit;

namespace {

const std::string kExe = ZSDBENCH_PATH;

CliResult bench(const TempDir& tmp, const std::vector<std::string>& args) {
    static int n = 0;
    return run_cli(kExe, args, tmp.str("cli-log-" + std::to_string(n++) + ".txt"));
}

// Small dataset shared by the pipeline tests: quick to generate and train on.
std::vector<std::string> synth_args(const std::string& out) {
    return {"synth", "--out", out, "--images", "40", "--seed", "5"};
}

}  // namespace

TEST_CASE("cli: synth, train, eval pipeline succeeds and writes its outputs") {
    TempDir tmp("zsd-cli");
    const std::string data = tmp.str("data");
    const std::string run = tmp.str("run");
    const std::string evald = tmp.str("eval");

    CliResult r = bench(tmp, synth_args(data));
    CAPTURE(r.output);
    REQUIRE(r.exit_code == 0);
    for (const char* name : {"embeddings.txt", "split.txt", "gt_train.json", "gt_test.json",
                             "proposals_train.jsonl", "proposals_test.jsonl", "oracle.json",
                             "manifest.json"}) {
        CHECK(std::filesystem::exists(std::filesystem::path(data) / name));
    }

    r = bench(tmp, {"train", "--data", data, "--out", run, "--iterations", "600",
                    "--learning-rate", "0.2", "--iou-threshold", "0.25"});
    CAPTURE(r.output);
    REQUIRE(r.exit_code == 0);
    for (const char* name : {"checkpoint.json", "loss_log.csv", "manifest.json"}) {
        CHECK(std::filesystem::exists(std::filesystem::path(run) / name));
    }

    r = bench(tmp, {"eval", "--data", data, "--checkpoint", run + "/checkpoint.json", "--out",
                    evald, "--mode", "gzsd"});
    CAPTURE(r.output);
    REQUIRE(r.exit_code == 0);
    for (const char* name : {"detections.jsonl", "report.json", "report.csv", "manifest.json"}) {
        CHECK(std::filesystem::exists(std::filesystem::path(evald) / name));
    }

    SUBCASE("rerunning synth with the same arguments is byte-identical") {
        const std::string data2 = tmp.str("data2");
        r = bench(tmp, synth_args(data2));
        REQUIRE(r.exit_code == 0);
        CHECK(testsup::dir_contents(data) == testsup::dir_contents(data2));
    }

    SUBCASE("eval accepts mask modes and the post-suppression filter switch") {
        const std::string evald2 = tmp.str("eval-zsi");
        r = bench(tmp, {"eval", "--data", data, "--checkpoint", run + "/checkpoint.json", "--out",
                        evald2, "--mode", "zsi", "--variant", "most-similar",
                        "--beta-after-nms"});
        CAPTURE(r.output);
        CHECK(r.exit_code == 0);
        CHECK(std::filesystem::exists(std::filesystem::path(evald2) / "report.json"));
    }

    SUBCASE("corrupted checkpoint exits with the data-error code") {
        const std::string broken = tmp.str("broken.json");
        std::string text = testsup::slurp(run + "/checkpoint.json");
        text[text.size() / 2] = text[text.size() / 2] == '3' ? '4' : '3';
        spit(broken, text);
        r = bench(tmp, {"eval", "--data", data, "--checkpoint", broken, "--out",
                        tmp.str("eval-broken")});
        CAPTURE(r.output);
        CHECK(r.exit_code == 2);
    }

    SUBCASE("train with zero iterations serializes the untouched initialization") {
        const std::string run0 = tmp.str("run0");
        r = bench(tmp, {"train", "--data", data, "--out", run0, "--iterations", "0", "--seed",
                        "11"});
        CAPTURE(r.output);
        REQUIRE(r.exit_code == 0);
        const HeadParams got = load_checkpoint(run0 + "/checkpoint.json");

        const EmbeddingTable table = load_embeddings(data + "/embeddings.txt");
        const CategorySplit split = load_split(data + "/split.txt");
        const auto props = load_proposals(data + "/proposals_train.jsonl");
        REQUIRE(!props.empty());
        REQUIRE(props.front().zm.has_value());
        Rng rng(11);
        const HeadParams want = init_head_params(
            static_cast<int>(table.vectors.cols()), static_cast<int>(props.front().z.size()),
            props.front().zm->t, BackgroundKind::Learned, subtable(table, split.seen), rng);
        CHECK((got.w_cls.array() == want.w_cls.array()).all());
        CHECK((got.w_seg.array() == want.w_seg.array()).all());
        for (std::size_t k = 0; k < 4; ++k)
            CHECK((got.w_reg[k].array() == want.w_reg[k].array()).all());
        REQUIRE(got.background.kind == BackgroundKind::Learned);
        CHECK((got.background.b.array() == want.background.b.array()).all());
    }

    SUBCASE("ablation over the seen-score filter writes one row per setting") {
        const std::string abl = tmp.str("ablate");
        r = bench(tmp, {"ablate", "--data", data, "--out", abl, "--axis", "beta",
                        "--iterations", "300", "--learning-rate", "0.2",
                        "--iou-threshold", "0.25"});
        CAPTURE(r.output);
        REQUIRE(r.exit_code == 0);
        const std::string csv = testsup::slurp(abl + "/ablation.csv");
        int lines = 0;
        for (char c : csv)
            if (c == '\n') ++lines;
        CHECK(lines >= 6);  // header + five settings
    }
}

TEST_CASE("cli: argument and configuration failures exit with code 1") {
    TempDir tmp("zsd-cli-bad");
    SUBCASE("missing required flag") {
        CHECK(bench(tmp, {"synth"}).exit_code == 1);
    }
    SUBCASE("unknown mode name") {
        const std::string data = tmp.str("d");
        REQUIRE(bench(tmp, synth_args(data)).exit_code == 0);
        CliResult r = bench(tmp, {"eval", "--data", data, "--checkpoint",
                                  tmp.str("missing.json"), "--out", tmp.str("e"), "--mode",
                                  "diagonal"});
        CHECK(r.exit_code == 1);
    }
    SUBCASE("invalid generator setting") {
        CliResult r = bench(tmp, {"synth", "--out", tmp.str("d"), "--sigma", "-1"});
        CAPTURE(r.output);
        CHECK(r.exit_code == 1);
    }
    SUBCASE("unknown key in a config file") {
        const std::string cfg = tmp.str("cfg.json");
        spit(cfg, R"({"iterations": 5, "warp_speed": 9})");
        CliResult r = bench(tmp, {"train", "--data", tmp.str("d"), "--out", tmp.str("o"),
                                  "--config", cfg});
        CAPTURE(r.output);
        CHECK(r.exit_code == 1);
    }
    SUBCASE("output directory nested under a regular file") {
        spit(tmp.str("blocker"), "plain file\n");
        CliResult r = bench(tmp, {"synth", "--out", tmp.str("blocker/out")});
        CAPTURE(r.output);
        CHECK(r.exit_code == 1);
    }
    SUBCASE("training data that does not exist is a data error") {
        CliResult r = bench(tmp, {"train", "--data", tmp.str("nowhere"), "--out", tmp.str("o")});
        CAPTURE(r.output);
        CHECK(r.exit_code == 2);
    }
}

TEST_CASE("cli: gradcheck reports pass and fail states") {
    TempDir tmp("zsd-cli-grad");
    CliResult ok = bench(tmp, {"gradcheck", "--points", "5", "--seed", "3"});
    CAPTURE(ok.output);
    CHECK(ok.exit_code == 0);
    CHECK(ok.output.find("PASS") != std::string::npos);

    CliResult bad = bench(tmp, {"gradcheck", "--points", "5", "--seed", "3", "--tolerance",
                                "1e-15"});
    CAPTURE(bad.output);
    CHECK(bad.exit_code == 3);
    CHECK(bad.output.find("FAIL") != std::string::npos);
}
