#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "sg/datagen.hpp"
#include "sg/losses.hpp"
#include "sg/model.hpp"

namespace sg {

// Batch-level query alternation for the unified student: text, then vision,
// then vision+text, repeating.
enum class QueryKind { kText, kVision, kVisionText };

const char* to_string(QueryKind k);
QueryKind schedule_entry(int batch_index);

struct TrainConfig {
  double learning_rate = 1e-4;
  double weight_decay = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double clip_norm = 5.0;  // global-norm gradient clip
  int epochs = 30;
  int batch_size = 4;
  std::uint64_t seed = 7;

  void validate() const;
};

struct AdamState {
  ModelWeights m;
  ModelWeights v;
  std::int64_t step = 0;
};

AdamState make_adam_state(const ModelWeights& w);

// Scales gradients so their global norm is at most max_norm; returns the
// pre-clip norm.
double clip_gradients(ModelWeights& grads, double max_norm);

// Adaptive-moment update with bias correction and decoupled weight decay:
// w ← w − lr·(m̂/(√v̂+ε) + wd·w). Throws NumericError naming the parameter
// on a non-finite gradient.
void optimizer_step(ModelWeights& weights, ModelWeights& grads,
                    const TrainConfig& cfg, AdamState& adam);

struct Checkpoint {
  ModelConfig model;
  LossConfig loss;
  TrainConfig train;
  int epoch = 0;
  ModelWeights weights;
};

// Versioned binary container: magic, JSON header (configs + tensor table),
// little-endian doubles, trailing integrity hash. Byte-exact round trips.
std::string serialize_checkpoint(const Checkpoint& c);
Checkpoint deserialize_checkpoint(const std::string& bytes,
                                  const std::string& origin = "checkpoint");
void save_checkpoint(const Checkpoint& c, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

// ConfigError naming the first differing field; distillation and checkpoint
// loading both require structurally identical models.
void check_model_compatible(const ModelConfig& expected,
                            const ModelConfig& actual);

// Query assembly from one record. Vision batches draw image or segment
// uniformly; vision+text pairs the text with one vision modality.
QueryBundle make_text_query(const DatasetRecord& r);
QueryBundle make_expert_query(const DatasetRecord& r);  // text + segment
QueryBundle make_query(const DatasetRecord& r, QueryKind kind, Rng& rng);

struct SampleLosses {
  double total = 0.0;
  double cls = 0.0;
  double reg = 0.0;
  double distill = 0.0;
  int steps = 0;
};

// One record's full stream: per step, fuse/decode/refine, supervise both the
// raw and refined heads (half weight each), optionally distill against the
// teacher's expert-query pass on the same snippets, and accumulate analytic
// gradients into `grads` (skipped when null). Losses are means over steps.
SampleLosses train_sample(const ModelWeights& w, const ModelConfig& cfg,
                          const LossConfig& loss_cfg,
                          const DatasetRecord& record,
                          const QueryBundle& query, ModelWeights* grads,
                          const Checkpoint* teacher);

struct TrainResult {
  Checkpoint checkpoint;
  std::vector<double> epoch_losses;        // mean sample loss per epoch
  std::vector<QueryKind> schedule_trace;   // per batch (student runs only)
};

// Expert teacher: text+segment queries throughout, no distillation term.
TrainResult train_expert(const std::vector<DatasetRecord>& dataset,
                         const ModelConfig& model_cfg,
                         const LossConfig& loss_cfg,
                         const TrainConfig& train_cfg);

// Unified student: query kind cycles per batch; when `with_distill`, the
// frozen teacher supplies targets for the distillation term.
TrainResult train_student(const std::vector<DatasetRecord>& dataset,
                          const Checkpoint& teacher,
                          const ModelConfig& model_cfg,
                          const LossConfig& loss_cfg,
                          const TrainConfig& train_cfg,
                          bool with_distill = true);

}  // namespace sg
