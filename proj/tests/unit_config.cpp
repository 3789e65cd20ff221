#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "sg/config.hpp"
#include "sg/errors.hpp"

using namespace sg;
using nlohmann::json;

TEST_CASE("defaults validate and round-trip through json") {
  RunConfig cfg;
  cfg.validate();
  json j = cfg;
  RunConfig back = j.get<RunConfig>();
  CHECK(back.model.feature_dim == cfg.model.feature_dim);
  CHECK(back.train.learning_rate == cfg.train.learning_rate);
  CHECK(back.data.num_videos == cfg.data.num_videos);
  CHECK(back.loss.cls_weight == cfg.loss.cls_weight);
  CHECK(back.decay.thresholds == cfg.decay.thresholds);
}

TEST_CASE("unknown keys are rejected, absent keys keep defaults") {
  json j = {{"model", {{"feature_dim", 8}}}};
  RunConfig cfg = j.get<RunConfig>();
  CHECK(cfg.model.feature_dim == 8);
  CHECK(cfg.model.window_snippets == ModelConfig{}.window_snippets);

  json bad = {{"model", {{"feature_dims", 8}}}};
  CHECK_THROWS_AS(bad.get<RunConfig>(), ConfigError);
  json bad_section = {{"models", json::object()}};
  CHECK_THROWS_AS(bad_section.get<RunConfig>(), ConfigError);
}

TEST_CASE("set-style overrides patch the raw json") {
  json j = json::object();
  apply_override(j, "train.epochs=3");
  apply_override(j, "model.mixer=recurrent");
  apply_override(j, "data.snr=1.25");
  RunConfig cfg = j.get<RunConfig>();
  CHECK(cfg.train.epochs == 3);
  CHECK(cfg.model.mixer == MixerKind::kRecurrent);
  CHECK(cfg.data.snr == doctest::Approx(1.25));

  CHECK_THROWS_AS(apply_override(j, "no_equals_sign"), ConfigError);
  CHECK_THROWS_AS(apply_override(j, "=3"), ConfigError);
  // A dotless override lands as an unknown top-level key, caught on parse.
  apply_override(j, "nodot=3");
  CHECK_THROWS_AS(j.get<RunConfig>(), ConfigError);
}

TEST_CASE("config files load, reject garbage, and distinguish missing files") {
  namespace fs = std::filesystem;
  auto path = fs::temp_directory_path() / "sg_test_config.json";
  {
    std::ofstream out(path);
    out << R"({"train": {"epochs": 2, "seed": 9}})";
  }
  RunConfig cfg = load_run_config(path.string());
  CHECK(cfg.train.epochs == 2);
  CHECK(cfg.train.seed == 9);

  RunConfig defaults = load_run_config("");
  CHECK(defaults.train.epochs == TrainConfig{}.epochs);

  {
    std::ofstream out(path);
    out << "{nope";
  }
  CHECK_THROWS_AS(load_run_config(path.string()), ConfigError);
  CHECK_THROWS_AS(load_run_config("/nonexistent/sg_cfg.json"), IoError);
  fs::remove(path);
}

TEST_CASE("resolved config snapshot is reloadable") {
  namespace fs = std::filesystem;
  auto path = fs::temp_directory_path() / "sg_test_resolved.json";
  RunConfig cfg;
  cfg.train.epochs = 5;
  cfg.model.feature_dim = 12;
  write_resolved_config(cfg, path.string());
  RunConfig back = load_run_config(path.string());
  CHECK(back.train.epochs == 5);
  CHECK(back.model.feature_dim == 12);
  fs::remove(path);
}

TEST_CASE("validation failures carry the offending section") {
  RunConfig cfg;
  cfg.train.learning_rate = 0.0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = RunConfig{};
  cfg.model.window_snippets = 4;  // default anchors need 8
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = RunConfig{};
  cfg.data.num_videos = -1;  // data problems surface as validation errors
  CHECK_THROWS_AS(cfg.validate(), ValidationError);
}
