// Acceptance harness: prints one pass/fail line per criterion and exits
// nonzero if any fails. The heavyweight criteria reuse the library's canned
// pipelines so the numbers here match what the CLI reports.
#include <chrono>
#include <cmath>
#include <cstdarg>
#include <cstdio>
#include <random>
#include <string>
#include <vector>

#include "sg/config.hpp"
#include "sg/datagen.hpp"
#include "sg/errors.hpp"
#include "sg/experiments.hpp"
#include "sg/gradcheck.hpp"
#include "sg/interval.hpp"
#include "sg/losses.hpp"
#include "sg/metrics.hpp"
#include "sg/model.hpp"
#include "sg/numerics.hpp"
#include "sg/param_memory.hpp"
#include "sg/streaming.hpp"
#include "sg/trainer.hpp"

using namespace sg;

namespace {

int g_failures = 0;

void report(int criterion, const char* label, bool pass, const std::string& detail) {
  std::printf("criterion %2d (%s): %s — %s\n", criterion, label,
              pass ? "PASS" : "FAIL", detail.c_str());
  std::fflush(stdout);
  if (!pass) ++g_failures;
}

std::string fmt(const char* f, ...) {
  va_list args;
  va_start(args, f);
  char buf[512];
  std::vsnprintf(buf, sizeof(buf), f, args);
  va_end(args);
  return buf;
}

double elapsed(const std::chrono::steady_clock::time_point& t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// --- criterion 1: gradient fidelity ---------------------------------------
void criterion_gradients() {
  GradSuiteResult r = run_gradcheck();
  double worst = 0.0;
  for (const auto& g : r.groups) worst = std::max(worst, g.max_rel_error / g.tolerance);
  report(1, "gradient fidelity", r.passed && r.seconds < 60.0,
         fmt("%zu groups, worst error at %.2f%% of tolerance, %.1fs",
             r.groups.size(), 100.0 * worst, r.seconds));
}

// --- criterion 2: memory write correctness ---------------------------------
void criterion_memory_writes() {
  Rng rng(77);
  std::uniform_real_distribution<double> u(-1.5, 1.5);
  std::uniform_int_distribution<int> dim(1, 8);
  int violations = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    int d_in = dim(rng), d_h = dim(rng);
    ParamMemoryLayer layer = ParamMemoryLayer::init(d_in, d_h, d_in, rng);
    ParamMemoryState state(d_h);
    for (int r = 0; r < d_h; ++r)
      for (double& x : state.memory.row(r)) x = u(rng);
    Vec input(d_in);
    for (double& x : input) x = u(rng);

    double before = reconstruction_loss(layer, state, input);
    memorize(layer, state, input);
    double after = reconstruction_loss(layer, state, input);
    if (after > before + 1e-6 || (before > 1e-10 && after >= before)) ++violations;
  }

  // Closed-form inner gradient vs finite differences.
  ParamMemoryLayer layer = ParamMemoryLayer::init(6, 5, 6, rng);
  ParamMemoryState state(5);
  Vec warm = gaussian_vec(6, 1.0, rng);
  memorize(layer, state, warm);
  Vec input = gaussian_vec(6, 1.0, rng);
  Matrix analytic = reconstruction_grad(layer, state, input);
  double max_err = 0.0;
  const Matrix base = state.memory;
  for (int r = 0; r < 5; ++r) {
    for (int c = 0; c < 5; ++c) {
      const double h = 1e-6;
      ParamMemoryState probe(5);
      probe.memory = base;
      probe.memory.at(r, c) += h;
      double up = reconstruction_loss(layer, probe, input);
      probe.memory.at(r, c) -= 2.0 * h;
      double down = reconstruction_loss(layer, probe, input);
      double numeric = (up - down) / (2.0 * h);
      double denom = std::max({std::abs(numeric), std::abs(analytic.at(r, c)), 1e-8});
      max_err = std::max(max_err, std::abs(numeric - analytic.at(r, c)) / denom);
    }
  }
  report(2, "memory write correctness", violations == 0 && max_err < 1e-6,
         fmt("0 of 1000 writes increased the loss: %s; inner gradient err %.2e",
             violations == 0 ? "yes" : "NO", max_err));
}

// --- criterion 3: metric reduction oracle ----------------------------------
void criterion_metric_reduction() {
  Rng rng(101);
  std::uniform_real_distribution<double> ut(0.0, 100.0);
  std::uniform_real_distribution<double> ulen(0.5, 20.0);
  std::uniform_real_distribution<double> uscore(0.01, 1.0);
  std::uniform_real_distribution<double> ufrac(0.0, 1.0);
  std::uniform_int_distribution<int> n_gt(1, 4);
  std::uniform_int_distribution<int> n_pred(0, 12);

  double worst = 0.0;
  for (int trial = 0; trial < 500; ++trial) {
    std::vector<TimeInterval> gts;
    double min_end = 1e30;
    for (int i = n_gt(rng); i > 0; --i) {
      double s = ut(rng);
      gts.push_back({s, s + ulen(rng)});
      min_end = std::min(min_end, gts.back().end);
    }
    std::vector<Emission> preds;
    for (int i = n_pred(rng); i > 0; --i) {
      double s = ut(rng);
      preds.push_back({s, s + ulen(rng), uscore(rng), min_end * ufrac(rng)});
    }
    for (double ts : {1.0, 3.0, 5.0}) {
      for (int n : {1, 5}) {
        worst = std::max(worst, std::abs(query_o_recall(preds, gts, n, 0.5, ts) -
                                         query_offline_recall(preds, gts, n, 0.5)));
      }
      worst = std::max(worst, std::abs(query_o_ap(preds, gts, 0.5, ts) -
                                       query_offline_ap(preds, gts, 0.5)));
    }
  }
  report(3, "metric reduction oracle", worst <= 1e-12,
         fmt("500 timely sets, max |online - offline| = %.2e", worst));
}

// --- criterion 4: decay properties -----------------------------------------
void criterion_decay_properties() {
  Rng rng(202);
  std::uniform_real_distribution<double> ut(0.0, 100.0);
  std::uniform_real_distribution<double> ulen(0.5, 20.0);
  std::uniform_real_distribution<double> uscore(0.01, 1.0);
  std::uniform_int_distribution<int> n_gt(1, 4);
  std::uniform_int_distribution<int> n_pred(0, 12);

  int counterexamples = 0;
  for (int trial = 0; trial < 500; ++trial) {
    std::vector<TimeInterval> gts;
    for (int i = n_gt(rng); i > 0; --i) {
      double s = ut(rng);
      gts.push_back({s, s + ulen(rng)});
    }
    std::vector<Emission> preds;
    for (int i = n_pred(rng); i > 0; --i) {
      double s = ut(rng);
      preds.push_back({s, s + ulen(rng), uscore(rng), ut(rng)});
    }
    std::vector<Emission> later = preds;
    double shift = 0.1 + 9.9 * uscore(rng);
    for (auto& p : later) p.emit_time += shift;

    for (double ts : {1.0, 3.0, 5.0}) {
      if (query_o_recall(later, gts, 1, 0.5, ts) >
          query_o_recall(preds, gts, 1, 0.5, ts) + 1e-15)
        ++counterexamples;  // delay monotonicity
      if (query_o_ap(preds, gts, 0.5, ts) >
          query_offline_ap(preds, gts, 0.5) + 1e-15)
        ++counterexamples;  // dominance
    }
    if (query_o_recall(preds, gts, 1, 0.5, 1.0) >
            query_o_recall(preds, gts, 1, 0.5, 3.0) + 1e-15 ||
        query_o_recall(preds, gts, 1, 0.5, 3.0) >
            query_o_recall(preds, gts, 1, 0.5, 5.0) + 1e-15 ||
        query_o_ap(preds, gts, 0.5, 1.0) > query_o_ap(preds, gts, 0.5, 3.0) + 1e-15 ||
        query_o_ap(preds, gts, 0.5, 3.0) > query_o_ap(preds, gts, 0.5, 5.0) + 1e-15)
      ++counterexamples;  // t_s monotonicity
  }
  report(4, "decay properties", counterexamples == 0,
         fmt("500 sets, %d counterexamples", counterexamples));
}

// --- criterion 5: interval round-trip ---------------------------------------
void criterion_round_trip() {
  Rng rng(303);
  std::uniform_real_distribution<double> ut(1.0, 200.0);
  std::uniform_real_distribution<double> ul(0.25, 32.0);
  double worst = 0.0;
  for (int trial = 0; trial < 1000; ++trial) {
    double t = ut(rng), len = ul(rng);
    double s = ut(rng) * 0.4;
    double e = s + ul(rng);
    double log_len = 0.0, end_offset = 0.0;
    interval_offsets(t, len, {s, e}, log_len, end_offset);
    TimeInterval back = anchor_interval(t, len, log_len, end_offset);
    worst = std::max({worst, std::abs(back.start - s), std::abs(back.end - e)});
  }
  report(5, "interval round-trip", worst < 1e-9,
         fmt("1000 cases, max endpoint drift %.2e", worst));
}

// --- criterion 6: streaming protocol ----------------------------------------
void criterion_streaming() {
  ModelConfig cfg;
  cfg.feature_dim = 8;
  cfg.video_dim = 6;
  cfg.text_dim = 5;
  cfg.image_dim = 4;
  cfg.segment_dim = 6;
  cfg.window_snippets = 8;
  cfg.anchors.count = 3;
  cfg.anchors.longest_snippets = 4.0;
  cfg.score_threshold = 0.0;
  cfg.validate();

  Rng rng(404);
  std::normal_distribution<double> g(0.0, 1.0);
  ModelWeights w = ModelWeights::init(cfg, rng);
  Matrix snippets(12, cfg.video_dim);
  for (int r = 0; r < 12; ++r)
    for (int c = 0; c < cfg.video_dim; ++c) snippets.at(r, c) = g(rng);
  QueryBundle q;
  Matrix text(1, cfg.text_dim);
  for (int c = 0; c < cfg.text_dim; ++c) text.at(0, c) = g(rng);
  q.parts.push_back({Modality::kText, text});

  bool ok = true;
  std::string why = "cache parity, causality, chain prefix, determinism";

  // Cache on/off parity.
  StreamConfig on, off;
  off.cache_enabled = false;
  StreamSession s_on(&w, cfg, q, on), s_off(&w, cfg, q, off);
  run_stream(s_on, snippets);
  run_stream(s_off, snippets);
  if (s_on.log().chain_hash() != s_off.log().chain_hash() ||
      s_on.state_hash() != s_off.state_hash() || s_on.cache_stats().reused == 0) {
    ok = false;
    why = "cache on/off results diverged";
  }

  // Causality: tamper with the future, compare the committed prefix.
  Matrix tampered = snippets;
  for (int r = 6; r < 12; ++r)
    for (int c = 0; c < cfg.video_dim; ++c) tampered.at(r, c) += 5.0;
  StreamSession s_base(&w, cfg, q), s_alt(&w, cfg, q);
  run_stream(s_base, snippets);
  run_stream(s_alt, tampered);
  auto prefix = [&](const std::vector<EmittedPrediction>& v) {
    std::vector<EmittedPrediction> out;
    for (const auto& p : v)
      if (p.emit_time <= 6.0 * cfg.snippet_seconds) out.push_back(p);
    return out;
  };
  if (emission_chain_hash(prefix(s_base.log().snapshot())) !=
      emission_chain_hash(prefix(s_alt.log().snapshot()))) {
    ok = false;
    why = "future snippets leaked into committed emissions";
  }

  // Append-only prefix property.
  EmissionLog log;
  std::vector<std::uint64_t> chain_at;
  std::vector<EmittedPrediction> entries;
  for (int i = 0; i < 16; ++i) {
    entries.push_back({i * 1.0, i * 1.0 + 2.0, 0.5, i * 1.0});
    log.append(entries.back());
    chain_at.push_back(log.chain_hash());
  }
  for (int k = 1; k <= 16; ++k) {
    std::vector<EmittedPrediction> head(entries.begin(), entries.begin() + k);
    if (emission_chain_hash(head) != chain_at[k - 1]) {
      ok = false;
      why = "chain hash is not a prefix invariant";
    }
  }

  // Protocol violations are rejected.
  StreamSession strict(&w, cfg, q);
  strict.advance(0, snippets.row_vec(0));
  bool threw = false;
  try {
    strict.advance(2, snippets.row_vec(2));
  } catch (const ProtocolError&) {
    threw = true;
  }
  if (!threw) {
    ok = false;
    why = "out-of-order snippet was accepted";
  }

  // Determinism under a fixed seed.
  StreamSession d1(&w, cfg, q), d2(&w, cfg, q);
  run_stream(d1, snippets);
  run_stream(d2, snippets);
  if (d1.log().chain_hash() != d2.log().chain_hash()) {
    ok = false;
    why = "two identical runs diverged";
  }

  report(6, "streaming protocol", ok, why);
}

// --- criterion 7: learnability ----------------------------------------------
void criterion_learnability() {
  auto t0 = std::chrono::steady_clock::now();

  SyntheticSpec spec;  // the default synthetic task
  spec.validate();
  std::vector<DatasetRecord> data = generate(spec);

  ModelConfig model;
  model.validate();
  LossConfig loss;
  TrainConfig tc;
  tc.epochs = 96;
  tc.batch_size = 4;
  tc.learning_rate = 1e-2;
  tc.seed = 7;

  TrainResult expert = train_expert(data, model, loss, tc);

  DecayConfig decay;
  std::vector<QueryGroundTruth> gts = dataset_ground_truth(data);
  double model_score = eval_checkpoint(expert.checkpoint, data,
                                       EvalQuery::kTextSegment,
                                       AdaptationMode::kTune, decay);
  double chance = headline_o_recall(random_baseline(data, model, 99), gts, decay);
  double secs = elapsed(t0);

  bool pass = model_score >= 0.5 && model_score >= 3.0 * chance && secs < 300.0;
  report(7, "learnability", pass,
         fmt("expert oR@1 IoU=0.5 (decay avg) %.3f vs chance %.3f (%.1fx, need 3x) "
             "and >= 0.5 absolute; %.0fs of 300s budget",
             model_score, chance, chance > 0 ? model_score / chance : 999.0, secs));
}

// --- criteria 8-10: directional reproductions --------------------------------
void criterion_directional(int number, const char* label, const char* name) {
  RunConfig cfg;
  ExperimentResult r = run_experiment(name, cfg);
  report(number, label, r.directional_pass, r.summary);
}

// --- criterion 11: hand-computed metric fixtures ------------------------------
void criterion_fixtures() {
  double worst = 0.0;
  auto track = [&](double got, double want) {
    worst = std::max(worst, std::abs(got - want));
  };

  // Fixture 1: high-scoring near miss blocks top-1, not top-2.
  {
    std::vector<TimeInterval> gts = {{10.0, 20.0}};
    std::vector<Emission> preds = {{12.0, 16.0, 0.9, 20.0},
                                   {10.5, 19.5, 0.8, 20.0}};
    track(query_o_recall(preds, gts, 1, 0.5, 3.0), 0.0);
    track(query_o_recall(preds, gts, 2, 0.5, 3.0), 1.0);
    track(query_o_recall(preds, gts, 1, 0.3, 3.0), 1.0);
  }
  // Fixture 2: late hit, false positive, exact hit; t_s = 4.
  {
    std::vector<TimeInterval> gts = {{0.0, 10.0}, {20.0, 30.0}};
    std::vector<Emission> preds = {{0.0, 10.0, 0.9, 12.0},
                                   {40.0, 50.0, 0.8, 41.0},
                                   {20.0, 30.0, 0.7, 30.0}};
    track(query_o_recall(preds, gts, 1, 0.5, 4.0), 0.5);
    track(query_o_recall(preds, gts, 3, 0.5, 4.0), 1.0);
    track(query_o_ap(preds, gts, 0.5, 4.0), 0.375);
  }
  // Fixture 3: threshold-and-corpus averaging with an empty prediction set.
  {
    std::vector<QueryGroundTruth> gts = {{"q1", {{4.0, 8.0}}},
                                         {"q2", {{0.0, 2.0}}}};
    std::vector<QueryPredictions> preds = {
        {"q1", {{4.0, 8.0, 0.7, 10.0}, {0.0, 4.0, 0.6, 4.0}}},
        {"q2", {}}};
    double r_avg = 0.0, ap_avg = 0.0;
    for (double ts : {1.0, 3.0, 5.0}) {
      r_avg += o_recall(preds, gts, 1, 0.5, ts) / 3.0;
      ap_avg += o_map(preds, gts, 0.5, ts) / 3.0;
    }
    track(r_avg, 7.0 / 45.0);
    track(ap_avg, 53.0 / 675.0);
  }
  report(11, "hand-computed fixtures", worst <= 1e-9,
         fmt("3 fixtures, max deviation %.2e", worst));
}

}  // namespace

int main() {
  auto t0 = std::chrono::steady_clock::now();
  criterion_gradients();
  criterion_memory_writes();
  criterion_metric_reduction();
  criterion_decay_properties();
  criterion_round_trip();
  criterion_streaming();
  criterion_learnability();
  criterion_directional(8, "distillation direction", "distill_ablation");
  criterion_directional(9, "tune-vs-frozen direction", "tune_vs_frozen");
  criterion_directional(10, "memory ablation direction", "memory_ablation");
  criterion_fixtures();
  std::printf("%s — %d/11 criteria passed in %.0fs\n",
              g_failures == 0 ? "ACCEPTANCE PASS" : "ACCEPTANCE FAIL",
              11 - g_failures, elapsed(t0));
  return g_failures == 0 ? 0 : 1;
}
