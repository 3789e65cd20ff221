#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>

#include "sg/datagen.hpp"
#include "sg/errors.hpp"
#include "sg/experiments.hpp"
#include "sg/trainer.hpp"

using namespace sg;

namespace {

ModelConfig tiny_model() {
  ModelConfig cfg;
  cfg.feature_dim = 6;
  cfg.video_dim = 8;
  cfg.text_dim = 8;
  cfg.image_dim = 8;
  cfg.segment_dim = 8;
  cfg.window_snippets = 8;
  cfg.fusion_attn_layers = 1;
  cfg.fusion_blocks = 1;
  cfg.anchor_attn_layers = 1;
  cfg.anchors.count = 3;
  cfg.anchors.longest_snippets = 8.0;
  cfg.validate();
  return cfg;
}

std::vector<DatasetRecord> tiny_dataset(int n = 3) {
  SyntheticSpec spec;
  spec.num_videos = n;
  spec.video_snippets = 12;
  spec.feature_dim = 8;
  spec.min_moment_len = 4;
  spec.max_moment_len = 6;
  spec.seed = 11;
  spec.validate();
  return generate(spec);
}

Checkpoint tiny_checkpoint(const std::vector<DatasetRecord>& data) {
  TrainConfig tc;
  tc.epochs = 1;
  tc.batch_size = 2;
  tc.learning_rate = 3e-3;
  tc.seed = 5;
  return train_expert(data, tiny_model(), LossConfig{}, tc).checkpoint;
}

}  // namespace

TEST_CASE("query composition names round-trip") {
  const EvalQuery all[] = {EvalQuery::kText, EvalQuery::kImage,
                           EvalQuery::kSegment, EvalQuery::kTextImage,
                           EvalQuery::kTextSegment};
  for (EvalQuery q : all) CHECK(eval_query_from_string(to_string(q)) == q);
  CHECK_THROWS_AS(eval_query_from_string("audio"), ConfigError);
}

TEST_CASE("eval query bundles contain the requested modalities") {
  auto data = tiny_dataset(1);
  QueryBundle both = make_eval_query(data[0], EvalQuery::kTextSegment);
  REQUIRE(both.parts.size() == 2);
  CHECK(both.parts[0].modality == Modality::kText);
  CHECK(both.parts[1].modality == Modality::kSegment);

  QueryBundle img = make_eval_query(data[0], EvalQuery::kImage);
  REQUIRE(img.parts.size() == 1);
  CHECK(img.parts[0].modality == Modality::kImage);

  DatasetRecord stripped = data[0];
  stripped.text_query = Matrix();
  CHECK_THROWS_AS(make_eval_query(stripped, EvalQuery::kText), ConfigError);
}

TEST_CASE("ground-truth extraction keeps ids aligned with streaming output") {
  auto data = tiny_dataset();
  auto ckpt = tiny_checkpoint(data);
  auto preds = stream_dataset(ckpt, data, EvalQuery::kTextSegment,
                              AdaptationMode::kFrozen);
  auto gts = dataset_ground_truth(data);
  REQUIRE(preds.size() == data.size());
  REQUIRE(gts.size() == data.size());
  for (std::size_t i = 0; i < data.size(); ++i) {
    CHECK(preds[i].id == data[i].video_id);
    CHECK(gts[i].id == data[i].video_id);
    CHECK(gts[i].moments.size() == data[i].moments.size());
  }
}

TEST_CASE("headline number averages oR@1 IoU=0.5 over decay thresholds") {
  std::vector<QueryGroundTruth> gts = {{"v", {{4.0, 8.0}}}};
  // Emitted 2 s late: weight 1/3 at t_s=3, 3/5 at t_s=5, 0 at t_s=1.
  std::vector<QueryPredictions> preds = {{"v", {{4.0, 8.0, 0.9, 10.0}}}};
  DecayConfig decay;
  const double want = (0.0 + 1.0 / 3.0 + 3.0 / 5.0) / 3.0;
  CHECK(headline_o_recall(preds, gts, decay) == doctest::Approx(want).epsilon(1e-12));
}

TEST_CASE("random baseline is seeded, clamped, and tunable") {
  auto data = tiny_dataset();
  ModelConfig cfg = tiny_model();
  auto a = random_baseline(data, cfg, 42);
  auto b = random_baseline(data, cfg, 42);
  REQUIRE(a.size() == b.size());
  std::size_t total = 0;
  for (std::size_t v = 0; v < a.size(); ++v) {
    CHECK(a[v].id == data[v].video_id);
    REQUIRE(a[v].predictions.size() == b[v].predictions.size());
    total += a[v].predictions.size();
    const double horizon =
        cfg.anchors.lengths_seconds(cfg.snippet_seconds).front();
    for (std::size_t i = 0; i < a[v].predictions.size(); ++i) {
      const Emission& p = a[v].predictions[i];
      CHECK(p.start == b[v].predictions[i].start);
      CHECK(p.score == b[v].predictions[i].score);
      CHECK(p.start >= 0.0);
      CHECK(p.start < p.end);
      CHECK(p.end <= p.emit_time + horizon + 1e-12);
    }
  }
  CHECK(total > 0);

  auto c = random_baseline(data, cfg, 43);
  bool differs = false;
  for (std::size_t v = 0; v < c.size(); ++v) {
    differs = differs || c[v].predictions.size() != a[v].predictions.size();
  }
  CHECK(differs);

  CHECK(random_baseline(data, cfg, 42, 0.0).front().predictions.empty());
  CHECK_THROWS_AS(random_baseline(data, cfg, 42, 1.5), ConfigError);
}

TEST_CASE("unknown experiment names are rejected") {
  RunConfig cfg;
  CHECK_THROWS_AS(run_experiment("coffee_break", cfg), ConfigError);
}

TEST_CASE("experiment tables and json share rows and verdict") {
  ExperimentResult r;
  r.name = "demo";
  r.rows = {{"arm/a", 0.25}, {"arm/b", 0.125}};
  r.directional_pass = true;
  r.summary = "a beats b";
  std::string table = format_experiment_table(r);
  CHECK(table.find("demo") != std::string::npos);
  CHECK(table.find("arm/a") != std::string::npos);
  CHECK(table.find("0.2500") != std::string::npos);
  CHECK(table.find("pass") != std::string::npos);

  auto path = std::filesystem::temp_directory_path() / "sg_test_exp.json";
  write_experiment_json(r, path.string());
  std::ifstream f(path);
  std::string blob((std::istreambuf_iterator<char>(f)),
                   std::istreambuf_iterator<char>());
  CHECK(blob.find("\"arm/b\"") != std::string::npos);
  CHECK(blob.find("\"directional_pass\": true") != std::string::npos);
  std::filesystem::remove(path);
}
