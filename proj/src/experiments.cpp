#include "sg/experiments.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <random>

#include <json.hpp>

#include "sg/errors.hpp"
#include "sg/hash.hpp"

using nlohmann::json;

namespace sg {

const char* to_string(EvalQuery q) {
  switch (q) {
    case EvalQuery::kText: return "text";
    case EvalQuery::kImage: return "image";
    case EvalQuery::kSegment: return "segment";
    case EvalQuery::kTextImage: return "text+image";
    case EvalQuery::kTextSegment: return "text+segment";
  }
  return "?";
}

EvalQuery eval_query_from_string(std::string_view s) {
  if (s == "text") return EvalQuery::kText;
  if (s == "image") return EvalQuery::kImage;
  if (s == "segment") return EvalQuery::kSegment;
  if (s == "text+image") return EvalQuery::kTextImage;
  if (s == "text+segment") return EvalQuery::kTextSegment;
  throw ConfigError("unknown query composition: " + std::string(s));
}

QueryBundle make_eval_query(const DatasetRecord& r, EvalQuery q) {
  QueryBundle b;
  const auto add = [&](Modality m, const Matrix& feat, const char* what) {
    if (feat.rows() == 0) {
      throw ConfigError("dataset record " + r.video_id + " lacks " + what +
                        " features");
    }
    QueryPart p;
    p.modality = m;
    p.features = feat;
    b.parts.push_back(std::move(p));
  };
  if (q == EvalQuery::kText || q == EvalQuery::kTextImage ||
      q == EvalQuery::kTextSegment) {
    add(Modality::kText, r.text_query, "text query");
  }
  if (q == EvalQuery::kImage || q == EvalQuery::kTextImage) {
    add(Modality::kImage, r.image_query, "image query");
  }
  if (q == EvalQuery::kSegment || q == EvalQuery::kTextSegment) {
    add(Modality::kSegment, r.segment_query, "segment query");
  }
  return b;
}

std::vector<QueryPredictions> stream_dataset(
    const Checkpoint& ckpt, const std::vector<DatasetRecord>& records,
    EvalQuery query, AdaptationMode mode) {
  std::vector<QueryPredictions> out;
  out.reserve(records.size());
  for (const DatasetRecord& rec : records) {
    StreamConfig scfg;
    scfg.stream_id = rec.video_id;
    scfg.mode = mode;
    StreamSession session(&ckpt.weights, ckpt.model,
                          make_eval_query(rec, query), scfg);
    QueryPredictions qp;
    qp.id = rec.video_id;
    qp.predictions = run_stream(session, rec.snippets);
    out.push_back(std::move(qp));
  }
  return out;
}

std::vector<QueryGroundTruth> dataset_ground_truth(
    const std::vector<DatasetRecord>& records) {
  std::vector<QueryGroundTruth> out;
  out.reserve(records.size());
  for (const DatasetRecord& rec : records) {
    out.push_back({rec.video_id, rec.moments});
  }
  return out;
}

double headline_o_recall(const std::vector<QueryPredictions>& preds,
                         const std::vector<QueryGroundTruth>& gts,
                         const DecayConfig& decay) {
  decay.validate();
  double sum = 0.0;
  for (double t_s : decay.thresholds) sum += o_recall(preds, gts, 1, 0.5, t_s);
  return sum / static_cast<double>(decay.thresholds.size());
}

double eval_checkpoint(const Checkpoint& ckpt,
                       const std::vector<DatasetRecord>& records,
                       EvalQuery query, AdaptationMode mode,
                       const DecayConfig& decay) {
  return headline_o_recall(stream_dataset(ckpt, records, query, mode),
                           dataset_ground_truth(records), decay);
}

std::vector<QueryPredictions> random_baseline(
    const std::vector<DatasetRecord>& records, const ModelConfig& cfg,
    std::uint64_t seed, double emit_prob) {
  if (!(emit_prob >= 0.0 && emit_prob <= 1.0)) {
    throw ConfigError("random_baseline: emit_prob must lie in [0, 1]");
  }
  const std::vector<double> lengths =
      cfg.anchors.lengths_seconds(cfg.snippet_seconds);
  std::vector<QueryPredictions> out;
  out.reserve(records.size());
  for (std::size_t v = 0; v < records.size(); ++v) {
    Rng rng(derive_seed(seed, v));
    std::uniform_real_distribution<double> coin(0.0, 1.0);
    std::uniform_int_distribution<int> pick(0, static_cast<int>(lengths.size()) - 1);
    std::uniform_real_distribution<double> d_off(-0.25, 1.0);
    std::uniform_real_distribution<double> d_len(std::log(0.5), std::log(1.5));
    std::uniform_real_distribution<double> d_score(0.005, 1.0);

    QueryPredictions qp;
    qp.id = records[v].video_id;
    const int steps = records[v].snippets.rows();
    for (int i = 0; i < steps; ++i) {
      const double t = (i + 1) * cfg.snippet_seconds;
      if (coin(rng) > emit_prob) continue;
      const double len = lengths[pick(rng)];
      TimeInterval iv = anchor_interval(t, len, d_len(rng), d_off(rng));
      iv.end = std::min(iv.end, t + len);  // same lookahead clamp as the model
      iv.start = std::max(0.0, iv.start);
      if (!(iv.start < iv.end)) continue;
      qp.predictions.push_back({iv.start, iv.end, d_score(rng), t});
    }
    out.push_back(std::move(qp));
  }
  return out;
}

// --- canned experiment pipelines ----------------------------------------------

namespace {

// Ablations run several full training loops, so they pin the dataset and
// optimization budget. Generalization to the held-out draw is what limits
// these comparisons, not optimization: many videos with fewer epochs beats
// the reverse at equal wall cost.
SyntheticSpec ablation_spec(const SyntheticSpec& base, double drift,
                            std::uint64_t seed) {
  SyntheticSpec spec = base;
  spec.num_videos = 128;
  spec.video_snippets = 48;
  spec.drift_per_snippet = drift;
  spec.seed = seed;
  spec.validate();
  return spec;
}

TrainConfig ablation_train(const TrainConfig& base, std::uint64_t seed) {
  TrainConfig tc = base;
  tc.epochs = 48;
  tc.batch_size = 4;
  tc.learning_rate = 1e-2;
  tc.seed = seed;
  tc.validate();
  return tc;
}

struct Split {
  std::vector<DatasetRecord> train;
  std::vector<DatasetRecord> eval;
};

// The eval half may drift where the training half does not: adaptation
// experiments stress exactly that mismatch.
Split make_split(const SyntheticSpec& spec, double eval_drift) {
  Split s;
  s.train = generate(spec);
  SyntheticSpec eval_spec = spec;
  eval_spec.seed = derive_seed(spec.seed, 0xe7a1);
  eval_spec.num_videos = 32;
  eval_spec.drift_per_snippet = eval_drift;
  s.eval = generate(eval_spec);
  // keep ids disjoint from the training half
  for (DatasetRecord& r : s.eval) r.video_id = "eval_" + r.video_id;
  return s;
}

void add_row(ExperimentResult& r, const std::string& label, double value) {
  r.rows.push_back({label, value});
}

}  // namespace

ExperimentResult modality_matrix(const RunConfig& cfg) {
  ExperimentResult result;
  result.name = "modality_matrix";
  const SyntheticSpec spec = ablation_spec(cfg.data, 0.0, cfg.data.seed);
  const Split split = make_split(spec, 0.0);
  const TrainConfig tc = ablation_train(cfg.train, cfg.train.seed);

  const TrainResult expert = train_expert(split.train, cfg.model, cfg.loss, tc);
  const TrainResult student = train_student(split.train, expert.checkpoint,
                                            cfg.model, cfg.loss, tc, true);

  const EvalQuery queries[] = {EvalQuery::kText, EvalQuery::kImage,
                               EvalQuery::kSegment, EvalQuery::kTextImage,
                               EvalQuery::kTextSegment};
  bool all_finite = true;
  for (EvalQuery q : queries) {
    const double v = eval_checkpoint(student.checkpoint, split.eval, q,
                                     AdaptationMode::kTune, cfg.decay);
    all_finite = all_finite && std::isfinite(v);
    add_row(result, to_string(q), v);
  }
  result.directional_pass = all_finite;
  result.summary = "student oR@1 IoU=0.5 (decay-averaged) per query composition";
  return result;
}

ExperimentResult distill_ablation(const RunConfig& cfg) {
  ExperimentResult result;
  result.name = "distill_ablation";
  int wins = 0;
  const int n_seeds = 3;
  for (int s = 0; s < n_seeds; ++s) {
    const std::uint64_t seed = cfg.train.seed + static_cast<std::uint64_t>(s);
    const SyntheticSpec spec = ablation_spec(cfg.data, 0.0, cfg.data.seed + s);
    const Split split = make_split(spec, 0.0);
    const TrainConfig tc = ablation_train(cfg.train, seed);

    const TrainResult expert = train_expert(split.train, cfg.model, cfg.loss, tc);
    const TrainResult with = train_student(split.train, expert.checkpoint,
                                           cfg.model, cfg.loss, tc, true);
    const TrainResult without = train_student(split.train, expert.checkpoint,
                                              cfg.model, cfg.loss, tc, false);

    const double v_with =
        eval_checkpoint(with.checkpoint, split.eval, EvalQuery::kImage,
                        AdaptationMode::kTune, cfg.decay);
    const double v_without =
        eval_checkpoint(without.checkpoint, split.eval, EvalQuery::kImage,
                        AdaptationMode::kTune, cfg.decay);
    const std::string tag = "seed" + std::to_string(s) + "/";
    add_row(result, tag + "with_distill", v_with);
    add_row(result, tag + "no_distill", v_without);
    wins += v_with > v_without ? 1 : 0;
  }
  result.directional_pass = wins >= 2;
  result.summary = "image-only oR@1 IoU=0.5: distilled student wins on " +
                   std::to_string(wins) + "/" + std::to_string(n_seeds) +
                   " seeds";
  return result;
}

ExperimentResult tune_vs_frozen(const RunConfig& cfg) {
  ExperimentResult result;
  result.name = "tune_vs_frozen";
  const EvalQuery queries[] = {EvalQuery::kText, EvalQuery::kSegment,
                               EvalQuery::kTextSegment};
  int seed_wins = 0;
  const int n_seeds = 3;
  for (int s = 0; s < n_seeds; ++s) {
    const std::uint64_t seed = cfg.train.seed + static_cast<std::uint64_t>(s);
    // Clean training streams, drifting eval streams: the planted features
    // rotate away from what the queries captured, so only inference-time
    // writes can keep up.
    const SyntheticSpec spec = ablation_spec(cfg.data, 0.0, cfg.data.seed + s);
    const Split split = make_split(spec, 0.025);
    const TrainConfig tc = ablation_train(cfg.train, seed);
    const TrainResult expert = train_expert(split.train, cfg.model, cfg.loss, tc);

    bool all_geq = true;
    bool any_strict = false;
    for (EvalQuery q : queries) {
      const double tune = eval_checkpoint(expert.checkpoint, split.eval, q,
                                          AdaptationMode::kTune, cfg.decay);
      const double frozen = eval_checkpoint(expert.checkpoint, split.eval, q,
                                            AdaptationMode::kFrozen, cfg.decay);
      const std::string tag = "seed" + std::to_string(s) + "/" + to_string(q);
      add_row(result, tag + "/tune", tune);
      add_row(result, tag + "/frozen", frozen);
      all_geq = all_geq && tune >= frozen;
      any_strict = any_strict || tune > frozen;
    }
    seed_wins += (all_geq && any_strict) ? 1 : 0;
  }
  result.directional_pass = seed_wins >= 2;
  result.summary = "tune beats frozen (>= on all queries, strict on one) on " +
                   std::to_string(seed_wins) + "/" + std::to_string(n_seeds) +
                   " seeds";
  return result;
}

ExperimentResult memory_ablation(const RunConfig& cfg) {
  ExperimentResult result;
  result.name = "memory_ablation";
  const MixerKind kinds[] = {MixerKind::kParametricMemory, MixerKind::kRecurrent,
                             MixerKind::kWindowAttention};
  int seed_wins = 0;
  const int n_seeds = 3;
  for (int s = 0; s < n_seeds; ++s) {
    const std::uint64_t seed = cfg.train.seed + static_cast<std::uint64_t>(s);
    // Same clean-train / drift-eval setup as the adaptation experiment: the
    // mixers differ most in how well they track the shift.
    const SyntheticSpec spec = ablation_spec(cfg.data, 0.0, cfg.data.seed + s);
    const Split split = make_split(spec, 0.025);
    const TrainConfig tc = ablation_train(cfg.train, seed);

    double scores[3] = {0.0, 0.0, 0.0};
    for (int k = 0; k < 3; ++k) {
      ModelConfig mc = cfg.model;
      mc.mixer = kinds[k];
      const TrainResult expert = train_expert(split.train, mc, cfg.loss, tc);
      scores[k] =
          eval_checkpoint(expert.checkpoint, split.eval, EvalQuery::kTextSegment,
                          AdaptationMode::kTune, cfg.decay);
      add_row(result,
              "seed" + std::to_string(s) + "/" + to_string(kinds[k]),
              scores[k]);
    }
    seed_wins += (scores[0] >= scores[1] && scores[1] >= scores[2]) ? 1 : 0;
  }
  result.directional_pass = seed_wins >= 2;
  result.summary =
      "parametric memory >= recurrent >= attention ordering holds on " +
      std::to_string(seed_wins) + "/" + std::to_string(n_seeds) + " seeds";
  return result;
}

ExperimentResult run_experiment(const std::string& name, const RunConfig& cfg) {
  if (name == "modality_matrix") return modality_matrix(cfg);
  if (name == "distill_ablation") return distill_ablation(cfg);
  if (name == "tune_vs_frozen") return tune_vs_frozen(cfg);
  if (name == "memory_ablation") return memory_ablation(cfg);
  throw ConfigError("unknown experiment: " + name);
}

std::string format_experiment_table(const ExperimentResult& r) {
  std::string out = r.name + "\n";
  char line[160];
  for (const ExperimentRow& row : r.rows) {
    std::snprintf(line, sizeof(line), "  %-32s %.4f\n", row.label.c_str(),
                  row.value);
    out += line;
  }
  out += "  " + r.summary + "\n";
  out += std::string("  directional check: ") +
         (r.directional_pass ? "pass" : "FAIL") + "\n";
  return out;
}

void write_experiment_json(const ExperimentResult& r, const std::string& path) {
  json j;
  j["name"] = r.name;
  j["rows"] = json::array();
  for (const ExperimentRow& row : r.rows) {
    j["rows"].push_back({{"label", row.label}, {"value", row.value}});
  }
  j["directional_pass"] = r.directional_pass;
  j["summary"] = r.summary;
  std::ofstream f(path);
  if (!f) throw IoError("cannot open for writing: " + path);
  f << j.dump(2) << "\n";
  if (!f) throw IoError("short write: " + path);
}

}  // namespace sg
