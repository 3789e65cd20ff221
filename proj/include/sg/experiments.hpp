#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "sg/config.hpp"
#include "sg/datagen.hpp"
#include "sg/metrics.hpp"
#include "sg/streaming.hpp"
#include "sg/trainer.hpp"

namespace sg {

// Fixed query compositions used for evaluation (training samples its vision
// modality; evaluation pins it so numbers are comparable across runs).
enum class EvalQuery { kText, kImage, kSegment, kTextImage, kTextSegment };

const char* to_string(EvalQuery q);
EvalQuery eval_query_from_string(std::string_view s);
QueryBundle make_eval_query(const DatasetRecord& r, EvalQuery q);

// Streams every record through a fresh session and collects the per-video
// emission logs, keyed by video id.
std::vector<QueryPredictions> stream_dataset(
    const Checkpoint& ckpt, const std::vector<DatasetRecord>& records,
    EvalQuery query, AdaptationMode mode);

std::vector<QueryGroundTruth> dataset_ground_truth(
    const std::vector<DatasetRecord>& records);

// Headline number used by every comparison: oR@1 at IoU 0.5, averaged over
// the decay thresholds.
double headline_o_recall(const std::vector<QueryPredictions>& preds,
                         const std::vector<QueryGroundTruth>& gts,
                         const DecayConfig& decay);

double eval_checkpoint(const Checkpoint& ckpt,
                       const std::vector<DatasetRecord>& records,
                       EvalQuery query, AdaptationMode mode,
                       const DecayConfig& decay);

// Protocol-matched chance floor: at every stream step, with probability
// `emit_prob`, emit one anchor-shaped interval with random refinement and a
// random score, under exactly the clamps the model's readout applies.
std::vector<QueryPredictions> random_baseline(
    const std::vector<DatasetRecord>& records, const ModelConfig& cfg,
    std::uint64_t seed, double emit_prob = 0.5);

struct ExperimentRow {
  std::string label;
  double value = 0.0;
};

struct ExperimentResult {
  std::string name;
  std::vector<ExperimentRow> rows;
  bool directional_pass = false;
  std::string summary;
};

// Canned pipelines over self-generated synthetic data. Each one derives its
// dataset/training budget from `cfg` but pins the sizes that keep a run in
// the minutes range; the emitted table records what actually ran.
ExperimentResult modality_matrix(const RunConfig& cfg);
ExperimentResult distill_ablation(const RunConfig& cfg);
ExperimentResult tune_vs_frozen(const RunConfig& cfg);
ExperimentResult memory_ablation(const RunConfig& cfg);

ExperimentResult run_experiment(const std::string& name, const RunConfig& cfg);

std::string format_experiment_table(const ExperimentResult& r);
void write_experiment_json(const ExperimentResult& r, const std::string& path);

}  // namespace sg
