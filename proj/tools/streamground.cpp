// Command-line surface: dataset generation, training, streaming inference,
// metric reports, gradient checking, and the canned comparison experiments.
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "sg/config.hpp"
#include "sg/datagen.hpp"
#include "sg/errors.hpp"
#include "sg/experiments.hpp"
#include "sg/gradcheck.hpp"
#include "sg/metrics.hpp"
#include "sg/streaming.hpp"
#include "sg/trainer.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

sg::RunConfig resolve_config(const std::string& config_path,
                             const std::vector<std::string>& overrides) {
  json j = json::object();
  if (!config_path.empty()) {
    std::ifstream f(config_path);
    if (!f) throw sg::IoError("cannot open config: " + config_path);
    try {
      f >> j;
    } catch (const json::exception& e) {
      throw sg::ConfigError(config_path + ": malformed JSON: " + e.what());
    }
  }
  for (const std::string& s : overrides) sg::apply_override(j, s);
  sg::RunConfig cfg;
  try {
    from_json(j, cfg);
  } catch (const json::exception& e) {
    throw sg::ConfigError("config: " + std::string(e.what()));
  }
  cfg.validate();
  return cfg;
}

void snapshot_config(const sg::RunConfig& cfg, const fs::path& near) {
  fs::path dir = near;
  if (!fs::is_directory(dir)) dir = dir.parent_path();
  if (dir.empty()) dir = ".";
  sg::write_resolved_config(cfg, (dir / "resolved_config.json").string());
}

void check_dataset_dims(const sg::ModelConfig& m, const sg::Dataset& ds) {
  if (m.video_dim != ds.spec.feature_dim || m.text_dim != ds.spec.feature_dim ||
      m.image_dim != ds.spec.feature_dim ||
      m.segment_dim != ds.spec.feature_dim) {
    throw sg::ConfigError(
        "dataset feature_dim is " + std::to_string(ds.spec.feature_dim) +
        "; model input dims must match (use --set model.video_dim=... etc.)");
  }
  if (m.snippet_seconds != ds.spec.snippet_seconds) {
    throw sg::ConfigError(
        "dataset snippet_seconds is " + std::to_string(ds.spec.snippet_seconds) +
        " but model.snippet_seconds is " + std::to_string(m.snippet_seconds));
  }
}

void cmd_datagen(const sg::RunConfig& cfg, const std::string& out_dir) {
  fs::create_directories(out_dir);
  const std::vector<sg::DatasetRecord> records = sg::generate(cfg.data);
  const fs::path dir(out_dir);
  sg::write_dataset(records, cfg.data, (dir / "dataset.jsonl").string());
  sg::write_ground_truth(records, (dir / "ground_truth.json").string());
  snapshot_config(cfg, dir);
  std::size_t moments = 0;
  for (const auto& r : records) moments += r.moments.size();
  std::printf("wrote %zu videos (%d snippets, dim %d, %zu moments) to %s\n",
              records.size(), cfg.data.video_snippets, cfg.data.feature_dim,
              moments, out_dir.c_str());
}

void cmd_train(const sg::RunConfig& cfg, const std::string& dataset_path,
               const std::string& mode, const std::string& teacher_path,
               const std::string& out_ckpt, bool no_distill) {
  const sg::Dataset ds = sg::read_dataset(dataset_path);
  check_dataset_dims(cfg.model, ds);

  sg::TrainResult result;
  if (mode == "expert") {
    result = sg::train_expert(ds.records, cfg.model, cfg.loss, cfg.train);
  } else if (mode == "student") {
    if (teacher_path.empty()) {
      throw sg::ConfigError("student training requires --teacher");
    }
    const sg::Checkpoint teacher = sg::load_checkpoint(teacher_path);
    result = sg::train_student(ds.records, teacher, cfg.model, cfg.loss,
                               cfg.train, !no_distill);
  } else {
    throw sg::ConfigError("train mode must be expert or student, got " + mode);
  }

  if (const fs::path dir = fs::path(out_ckpt).parent_path(); !dir.empty()) {
    fs::create_directories(dir);
  }
  sg::save_checkpoint(result.checkpoint, out_ckpt);
  snapshot_config(cfg, fs::path(out_ckpt));
  for (std::size_t e = 0; e < result.epoch_losses.size(); ++e) {
    std::printf("epoch %zu  mean loss %.6f\n", e + 1, result.epoch_losses[e]);
  }
  std::printf("saved %s checkpoint to %s\n", mode.c_str(), out_ckpt.c_str());
}

void cmd_stream(const sg::RunConfig& cfg, const std::string& ckpt_path,
                const std::string& dataset_path, const std::string& mode,
                const std::string& query, const std::string& out_dir) {
  const sg::Checkpoint ckpt = sg::load_checkpoint(ckpt_path);
  const sg::Dataset ds = sg::read_dataset(dataset_path);
  check_dataset_dims(ckpt.model, ds);
  const sg::AdaptationMode amode = sg::adaptation_mode_from_string(mode);
  const sg::EvalQuery equery = sg::eval_query_from_string(query);

  fs::create_directories(out_dir);
  std::size_t total = 0;
  for (const sg::DatasetRecord& rec : ds.records) {
    sg::StreamConfig scfg;
    scfg.stream_id = rec.video_id;
    scfg.mode = amode;
    sg::StreamSession session(&ckpt.weights, ckpt.model,
                              sg::make_eval_query(rec, equery), scfg);
    const auto log = sg::run_stream(session, rec.snippets);
    sg::write_emission_log(
        log, (fs::path(out_dir) / (rec.video_id + ".jsonl")).string());
    total += log.size();
  }
  snapshot_config(cfg, fs::path(out_dir));
  std::printf("streamed %zu videos (%s, %s queries), %zu emissions -> %s\n",
              ds.records.size(), mode.c_str(), query.c_str(), total,
              out_dir.c_str());
}

void cmd_metrics(const sg::RunConfig& cfg, const std::string& logs_dir,
                 const std::string& gt_path, const std::string& out_json,
                 const std::string& out_csv) {
  const std::vector<sg::QueryGroundTruth> gts = sg::read_ground_truth(gt_path);
  std::vector<sg::QueryPredictions> preds;
  for (const sg::QueryGroundTruth& gt : gts) {
    const fs::path log_path = fs::path(logs_dir) / (gt.id + ".jsonl");
    if (!fs::exists(log_path)) continue;  // missing log counts as no emissions
    preds.push_back({gt.id, sg::read_emission_log(log_path.string())});
  }
  const sg::MetricReport report =
      sg::evaluate(preds, gts, {1, 5}, {0.3, 0.5, 0.7}, cfg.decay);
  sg::write_report_json(report, out_json);
  sg::write_report_csv(report, out_csv);
  snapshot_config(cfg, fs::path(out_json));

  std::printf("evaluated %d queries (%d skipped, empty ground truth)\n",
              report.evaluated_queries, report.skipped_queries);
  for (const auto& c : report.online_recall) {
    if (c.t_s == 0.0) {
      std::printf("oR@%d IoU=%.1f (decay avg): %.4f\n", c.n, c.iou, c.value);
    }
  }
  for (const auto& c : report.online_map) {
    if (c.t_s == 0.0) {
      std::printf("omAP IoU=%.1f (decay avg): %.4f\n", c.iou, c.value);
    }
  }
}

int cmd_gradcheck(std::uint64_t seed) {
  const sg::GradSuiteResult result = sg::run_gradcheck(seed);
  std::fputs(sg::format_gradcheck(result).c_str(), stdout);
  return result.passed ? 0 : 2;
}

void cmd_experiment(const sg::RunConfig& cfg, const std::string& name,
                    const std::string& out_json) {
  const sg::ExperimentResult result = sg::run_experiment(name, cfg);
  std::fputs(sg::format_experiment_table(result).c_str(), stdout);
  if (!out_json.empty()) {
    if (const fs::path dir = fs::path(out_json).parent_path(); !dir.empty()) {
      fs::create_directories(dir);
    }
    sg::write_experiment_json(result, out_json);
    snapshot_config(cfg, fs::path(out_json));
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"streaming moment grounding over hybrid queries"};
  app.require_subcommand(1);

  std::string config_path;
  std::vector<std::string> overrides;
  app.add_option("--config", config_path, "JSON config file");
  app.add_option("--set", overrides,
                 "override a config entry, e.g. --set train.epochs=3");

  auto* dg = app.add_subcommand("datagen", "generate a synthetic dataset");
  std::string dg_out;
  dg->add_option("--out", dg_out, "output directory")->required();

  auto* tr = app.add_subcommand("train", "train an expert or student model");
  std::string tr_dataset, tr_mode = "expert", tr_teacher, tr_out;
  bool tr_no_distill = false;
  tr->add_option("--dataset", tr_dataset, "dataset.jsonl path")->required();
  tr->add_option("--mode", tr_mode, "expert | student");
  tr->add_option("--teacher", tr_teacher, "teacher checkpoint (student mode)");
  tr->add_option("--out", tr_out, "output checkpoint path")->required();
  tr->add_flag("--no-distill", tr_no_distill,
               "student mode: drop the distillation term");

  auto* st = app.add_subcommand("stream", "run online inference over a dataset");
  std::string st_ckpt, st_dataset, st_mode = "tune", st_query = "text+segment",
              st_out;
  st->add_option("--ckpt", st_ckpt, "model checkpoint")->required();
  st->add_option("--dataset", st_dataset, "dataset.jsonl path")->required();
  st->add_option("--mode", st_mode, "tune | frozen");
  st->add_option("--query", st_query,
                 "text | image | segment | text+image | text+segment");
  st->add_option("--out", st_out, "output directory for emission logs")
      ->required();

  auto* me = app.add_subcommand("metrics", "score emission logs");
  std::string me_logs, me_gt, me_json = "report.json", me_csv = "report.csv";
  me->add_option("--logs", me_logs, "directory of <video_id>.jsonl logs")
      ->required();
  me->add_option("--gt", me_gt, "ground_truth.json path")->required();
  me->add_option("--out-json", me_json, "JSON report path");
  me->add_option("--out-csv", me_csv, "CSV report path");

  auto* gc = app.add_subcommand("gradcheck", "finite-difference gradient suite");
  std::uint64_t gc_seed = 11;
  gc->add_option("--seed", gc_seed, "scenario seed");

  auto* ex = app.add_subcommand("experiment", "canned comparison pipelines");
  std::string ex_name, ex_json;
  ex->add_option("--name", ex_name,
                 "modality_matrix | distill_ablation | tune_vs_frozen | "
                 "memory_ablation")
      ->required();
  ex->add_option("--out-json", ex_json, "write the comparison table as JSON");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }

  try {
    const sg::RunConfig cfg = resolve_config(config_path, overrides);
    if (*dg) {
      cmd_datagen(cfg, dg_out);
    } else if (*tr) {
      cmd_train(cfg, tr_dataset, tr_mode, tr_teacher, tr_out, tr_no_distill);
    } else if (*st) {
      cmd_stream(cfg, st_ckpt, st_dataset, st_mode, st_query, st_out);
    } else if (*me) {
      cmd_metrics(cfg, me_logs, me_gt, me_json, me_csv);
    } else if (*gc) {
      return cmd_gradcheck(gc_seed);
    } else if (*ex) {
      cmd_experiment(cfg, ex_name, ex_json);
    }
    return 0;
  } catch (const sg::ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const sg::ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const sg::ProtocolError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const sg::UsageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const sg::IoError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const sg::IntegrityError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return 2;
  }
}
