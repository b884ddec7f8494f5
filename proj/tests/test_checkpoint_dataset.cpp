#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <string>
#include <vector>

#include "support/test_support.hpp"
#include "zsd/checkpoint.hpp"
#include "zsd/dataset.hpp"
#include "zsd/infer.hpp"
#include "zsd/synthgen.hpp"
#include "zsd/train.hpp"

using namespace zsd;
using testsup::TempDir;
using testsup::slurp;
using testsup::spit;

namespace {

SynthConfig tiny_config() {
    SynthConfig c;
    c.seed = 9;
    c.d = 4;
    c.p = 4;
    c.t = 2;
    c.mask_grid = 4;
    c.image_size = 64.0;
    c.seen = 2;
    c.unseen = 1;
    c.images = 10;
    c.objects_per_image = 1;
    c.proposals_per_object = 2;
    c.background_per_image = 2;
    return c;
}

bool params_equal(const HeadParams& a, const HeadParams& b) {
    auto same = [](const Matrix& x, const Matrix& y) {
        return x.rows() == y.rows() && x.cols() == y.cols() && (x.array() == y.array()).all();
    };
    if (!same(a.w_cls, b.w_cls) || !same(a.w_seg, b.w_seg)) return false;
    for (std::size_t r = 0; r < 4; ++r)
        if (!same(a.w_reg[r], b.w_reg[r])) return false;
    if (a.background.kind != b.background.kind) return false;
    if (a.background.kind == BackgroundKind::Learned &&
        !(a.background.b.array() == b.background.b.array()).all())
        return false;
    return true;
}

}  // namespace

TEST_CASE("fnv1a64: published reference values") {
    CHECK(fnv1a64("") == 0xcbf29ce484222325ULL);
    CHECK(fnv1a64("a") == 0xaf63dc4c8601ec8cULL);
    CHECK(fnv1a64_hex("") == "cbf29ce484222325");
}

TEST_CASE("checkpoint: save/load round-trip preserves every parameter bit") {
    TempDir tmp("zsd-ckpt");
    Rng rng(77);
    EmbeddingTable seen;
    seen.names = {"a", "b"};
    seen.vectors = Matrix(2, 5);
    for (int i = 0; i < 2; ++i)
        for (int j = 0; j < 5; ++j) seen.vectors(i, j) = rng.normal();

    for (BackgroundKind kind : {BackgroundKind::Fixed, BackgroundKind::Mean, BackgroundKind::Learned}) {
        Rng init_rng(42);
        const HeadParams params = init_head_params(5, 7, 3, kind, seen, init_rng);
        const std::string path = tmp.str("ckpt.json");
        save_checkpoint(path, params);
        const HeadParams back = load_checkpoint(path);
        CHECK(params_equal(params, back));
    }
}

TEST_CASE("checkpoint: corruption and truncation are detected on load") {
    TempDir tmp("zsd-ckpt");
    Rng rng(78);
    EmbeddingTable seen;
    seen.names = {"a"};
    seen.vectors = Matrix::Ones(1, 4);
    Rng init_rng(1);
    const HeadParams params = init_head_params(4, 4, 2, BackgroundKind::Learned, seen, init_rng);
    const std::string path = tmp.str("ckpt.json");
    save_checkpoint(path, params);

    SUBCASE("flipped payload byte fails the checksum") {
        std::string text = slurp(path);
        const auto pos = text.find("0.1");
        if (pos != std::string::npos) text.replace(pos, 3, "0.2");
        else text[text.size() / 2] = text[text.size() / 2] == '1' ? '2' : '1';
        spit(path, text);
        CHECK_THROWS_AS(load_checkpoint(path), DataError);
    }
    SUBCASE("truncated file fails to parse") {
        const std::string text = slurp(path);
        spit(path, text.substr(0, text.size() / 2));
        CHECK_THROWS_AS(load_checkpoint(path), DataError);
    }
    SUBCASE("missing file") { CHECK_THROWS_AS(load_checkpoint(tmp.str("absent.json")), DataError); }
}

TEST_CASE("ground truth file: round-trip equality") {
    TempDir tmp("zsd-gt");
    const SynthDataset ds = generate(tiny_config());
    const std::string path = tmp.str("gt.json");
    save_gt(path, ds.train_gt);
    const GtFile back = load_gt(path);
    REQUIRE(back.images.size() == ds.train_gt.images.size());
    REQUIRE(back.annotations.size() == ds.train_gt.annotations.size());
    CHECK(back.categories == ds.train_gt.categories);
    for (std::size_t i = 0; i < back.annotations.size(); ++i) {
        const auto& a = back.annotations[i];
        const auto& b = ds.train_gt.annotations[i];
        CHECK(a.image_id == b.image_id);
        CHECK(a.category == b.category);
        CHECK(a.bbox.x1 == b.bbox.x1);
        CHECK(a.bbox.y2 == b.bbox.y2);
        REQUIRE(a.mask.has_value() == b.mask.has_value());
        if (a.mask) {
            CHECK(a.mask->size == b.mask->size);
            CHECK(a.mask->data == b.mask->data);
        }
    }
}

TEST_CASE("proposal file: round-trip equality including spatial features") {
    TempDir tmp("zsd-prop");
    const SynthDataset ds = generate(tiny_config());
    const std::string path = tmp.str("props.jsonl");
    save_proposals(path, ds.test_proposals);
    const auto back = load_proposals(path);
    REQUIRE(back.size() == ds.test_proposals.size());
    for (std::size_t i = 0; i < back.size(); ++i) {
        CHECK(back[i].image_id == ds.test_proposals[i].image_id);
        CHECK(back[i].box.x1 == ds.test_proposals[i].box.x1);
        CHECK((back[i].z.array() == ds.test_proposals[i].z.array()).all());
        REQUIRE(back[i].zm.has_value() == ds.test_proposals[i].zm.has_value());
        if (back[i].zm) {
            CHECK(back[i].zm->n == ds.test_proposals[i].zm->n);
            CHECK((back[i].zm->values.array() == ds.test_proposals[i].zm->values.array()).all());
        }
    }
}

TEST_CASE("detection file: round-trip equality including masks") {
    TempDir tmp("zsd-det");
    const SynthDataset ds = generate(tiny_config());
    TrainConfig tc;
    tc.iterations = 100;
    tc.learning_rate = 0.1;
    tc.iou_threshold = 0.25;
    const HeadParams params = train_heads({ds.train_proposals, ds.train_gt.annotations}, ds.table, ds.split, tc);
    InferConfig ic;
    ic.mode = TaskMode::GZSI;
    const auto dets = predict_dataset(ds.test_proposals, params, ds.table, ds.split, ic);
    REQUIRE(!dets.empty());

    const std::string path = tmp.str("dets.jsonl");
    save_detections(path, dets);
    const auto back = load_detections(path);
    REQUIRE(back.size() == dets.size());
    for (std::size_t i = 0; i < back.size(); ++i) {
        CHECK(back[i].image_id == dets[i].image_id);
        CHECK(back[i].category == dets[i].category);
        CHECK(back[i].origin == dets[i].origin);
        CHECK(back[i].score == dets[i].score);
        CHECK(back[i].box.x2 == dets[i].box.x2);
        REQUIRE(back[i].mask.has_value() == dets[i].mask.has_value());
        if (back[i].mask) {
            CHECK(back[i].mask->size == dets[i].mask->size);
            CHECK(back[i].mask->probs == dets[i].mask->probs);
        }
    }
}

TEST_CASE("dataset loaders: malformed inputs are data errors") {
    TempDir tmp("zsd-bad");
    SUBCASE("invalid json line in proposals") {
        spit(tmp.str("p.jsonl"), "{\"image_id\": 1, \"box\": [0,0,1,1], \"z\": [1,2]}\nnot json\n");
        CHECK_THROWS_AS(load_proposals(tmp.str("p.jsonl")), DataError);
    }
    SUBCASE("ground truth annotation with an unlisted category") {
        spit(tmp.str("g.json"),
             R"({"images":[{"id":1,"width":10,"height":10}],"categories":["a"],)"
             R"("annotations":[{"image_id":1,"category":"b","bbox":[0,0,5,5]}]})");
        CHECK_THROWS_AS(load_gt(tmp.str("g.json")), DataError);
    }
    SUBCASE("ground truth annotation with an unknown image id") {
        spit(tmp.str("g.json"),
             R"({"images":[{"id":1,"width":10,"height":10}],"categories":["a"],)"
             R"("annotations":[{"image_id":7,"category":"a","bbox":[0,0,5,5]}]})");
        CHECK_THROWS_AS(load_gt(tmp.str("g.json")), DataError);
    }
    SUBCASE("detections with a malformed origin") {
        spit(tmp.str("d.jsonl"),
             R"({"image_id":1,"category":"a","origin":"sideways","score":0.5,"box":[0,0,1,1]})"
             "\n");
        CHECK_THROWS_AS(load_detections(tmp.str("d.jsonl")), DataError);
    }
    SUBCASE("missing files") {
        CHECK_THROWS_AS(load_gt(tmp.str("none.json")), DataError);
        CHECK_THROWS_AS(load_proposals(tmp.str("none.jsonl")), DataError);
        CHECK_THROWS_AS(load_detections(tmp.str("none.jsonl")), DataError);
    }
}
