#include "sg/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numbers>
#include <numeric>
#include <random>

#include <json.hpp>

#include "sg/config.hpp"
#include "sg/errors.hpp"
#include "sg/hash.hpp"
#include "sg/streaming.hpp"

using nlohmann::json;

namespace sg {

const char* to_string(QueryKind k) {
  switch (k) {
    case QueryKind::kText: return "text";
    case QueryKind::kVision: return "vision";
    case QueryKind::kVisionText: return "vision+text";
  }
  return "?";
}

QueryKind schedule_entry(int batch_index) {
  if (batch_index < 0) throw UsageError("schedule_entry: negative batch index");
  switch (batch_index % 3) {
    case 0: return QueryKind::kText;
    case 1: return QueryKind::kVision;
    default: return QueryKind::kVisionText;
  }
}

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0)) throw ConfigError("train: learning_rate must be > 0");
  if (weight_decay < 0.0) throw ConfigError("train: weight_decay must be >= 0");
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) {
    throw ConfigError("train: betas must lie in [0, 1)");
  }
  if (!(epsilon > 0.0)) throw ConfigError("train: epsilon must be > 0");
  if (!(clip_norm > 0.0)) throw ConfigError("train: clip_norm must be > 0");
  if (epochs < 1) throw ConfigError("train: epochs must be >= 1");
  if (batch_size < 1) throw ConfigError("train: batch_size must be >= 1");
}

AdamState make_adam_state(const ModelWeights& w) {
  AdamState s;
  s.m = ModelWeights::zeros_like(w);
  s.v = ModelWeights::zeros_like(w);
  return s;
}

double clip_gradients(ModelWeights& grads, double max_norm) {
  if (!(max_norm > 0.0)) throw ConfigError("clip_gradients: max_norm must be > 0");
  const auto refs = param_refs(grads);
  double sq = 0.0;
  for (const ParamRef& r : refs) {
    for (std::size_t i = 0; i < r.size; ++i) sq += r.data[i] * r.data[i];
  }
  const double norm = std::sqrt(sq);
  if (norm > max_norm) {
    const double scale = max_norm / norm;
    for (const ParamRef& r : refs) {
      for (std::size_t i = 0; i < r.size; ++i) r.data[i] *= scale;
    }
  }
  return norm;
}

void optimizer_step(ModelWeights& weights, ModelWeights& grads,
                    const TrainConfig& cfg, AdamState& adam) {
  const auto wr = param_refs(weights);
  const auto gr = param_refs(grads);
  const auto mr = param_refs(adam.m);
  const auto vr = param_refs(adam.v);
  if (wr.size() != gr.size() || wr.size() != mr.size() || wr.size() != vr.size()) {
    throw DimensionError("optimizer_step: parameter list mismatch");
  }
  ++adam.step;
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(adam.step));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(adam.step));
  for (std::size_t p = 0; p < wr.size(); ++p) {
    if (wr[p].size != gr[p].size) {
      throw DimensionError("optimizer_step: gradient shape mismatch for " + wr[p].name);
    }
    for (std::size_t i = 0; i < wr[p].size; ++i) {
      const double g = gr[p].data[i];
      if (!std::isfinite(g)) {
        throw NumericError("optimizer_step: non-finite gradient in " + wr[p].name);
      }
      double& m = mr[p].data[i];
      double& v = vr[p].data[i];
      m = cfg.beta1 * m + (1.0 - cfg.beta1) * g;
      v = cfg.beta2 * v + (1.0 - cfg.beta2) * g * g;
      const double m_hat = m / bc1;
      const double v_hat = v / bc2;
      double& w = wr[p].data[i];
      w -= cfg.learning_rate *
           (m_hat / (std::sqrt(v_hat) + cfg.epsilon) + cfg.weight_decay * w);
    }
  }
}

// --- checkpoint container ---------------------------------------------------

namespace {

constexpr char kMagic[8] = {'S', 'G', 'C', 'K', 'P', 'T', '0', '1'};

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_f64(std::string& out, double d) {
  std::uint64_t bits;
  std::memcpy(&bits, &d, sizeof(bits));
  put_u64(out, bits);
}

std::uint32_t get_u32(const std::string& in, std::size_t at) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) {
    v |= static_cast<std::uint32_t>(static_cast<unsigned char>(in[at + i])) << (8 * i);
  }
  return v;
}

std::uint64_t get_u64(const std::string& in, std::size_t at) {
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) {
    v |= static_cast<std::uint64_t>(static_cast<unsigned char>(in[at + i])) << (8 * i);
  }
  return v;
}

double get_f64(const std::string& in, std::size_t at) {
  const std::uint64_t bits = get_u64(in, at);
  double d;
  std::memcpy(&d, &bits, sizeof(d));
  return d;
}

}  // namespace

std::string serialize_checkpoint(const Checkpoint& c) {
  ModelWeights weights = c.weights;  // param_refs needs mutable access
  const auto refs = param_refs(weights);

  json header;
  header["version"] = 1;
  header["model"] = c.model;
  header["loss"] = c.loss;
  header["train"] = c.train;
  header["epoch"] = c.epoch;
  json tensors = json::array();
  for (const ParamRef& r : refs) {
    tensors.push_back(
        {{"name", r.name}, {"rows", r.rows}, {"cols", r.cols}, {"size", r.size}});
  }
  header["tensors"] = tensors;
  const std::string header_bytes = header.dump();

  std::string out(kMagic, sizeof(kMagic));
  put_u32(out, static_cast<std::uint32_t>(header_bytes.size()));
  out += header_bytes;
  for (const ParamRef& r : refs) {
    for (std::size_t i = 0; i < r.size; ++i) put_f64(out, r.data[i]);
  }
  put_u64(out, fnv1a64_bytes(out.data(), out.size()));
  return out;
}

Checkpoint deserialize_checkpoint(const std::string& bytes,
                                  const std::string& origin) {
  if (bytes.size() < sizeof(kMagic) + 4 + 8) {
    throw IntegrityError(origin + ": truncated checkpoint");
  }
  if (std::memcmp(bytes.data(), kMagic, sizeof(kMagic)) != 0) {
    throw IntegrityError(origin + ": bad checkpoint magic");
  }
  const std::uint64_t stored = get_u64(bytes, bytes.size() - 8);
  const std::uint64_t actual = fnv1a64_bytes(bytes.data(), bytes.size() - 8);
  if (stored != actual) {
    throw IntegrityError(origin + ": checkpoint hash mismatch");
  }

  const std::uint32_t header_len = get_u32(bytes, sizeof(kMagic));
  const std::size_t header_at = sizeof(kMagic) + 4;
  if (header_at + header_len + 8 > bytes.size()) {
    throw IntegrityError(origin + ": truncated checkpoint header");
  }
  json header;
  try {
    header = json::parse(bytes.substr(header_at, header_len));
  } catch (const json::exception& e) {
    throw IntegrityError(origin + ": unreadable checkpoint header: " + e.what());
  }

  Checkpoint c;
  try {
    if (header.at("version").get<int>() != 1) {
      throw ConfigError(origin + ": unsupported checkpoint version");
    }
    from_json(header.at("model"), c.model);
    from_json(header.at("loss"), c.loss);
    from_json(header.at("train"), c.train);
    c.epoch = header.at("epoch").get<int>();
  } catch (const json::exception& e) {
    throw IntegrityError(origin + ": bad checkpoint header: " + e.what());
  }
  c.model.validate();

  Rng rng(0);
  c.weights = ModelWeights::init(c.model, rng);
  const auto refs = param_refs(c.weights);
  const json& tensors = header.at("tensors");
  if (tensors.size() != refs.size()) {
    throw ConfigError(origin + ": checkpoint tensor count " +
                      std::to_string(tensors.size()) + " != expected " +
                      std::to_string(refs.size()));
  }
  std::size_t at = header_at + header_len;
  const std::size_t payload_end = bytes.size() - 8;
  for (std::size_t t = 0; t < refs.size(); ++t) {
    const json& entry = tensors[t];
    const ParamRef& r = refs[t];
    if (entry.at("name").get<std::string>() != r.name ||
        entry.at("rows").get<int>() != r.rows ||
        entry.at("cols").get<int>() != r.cols ||
        entry.at("size").get<std::size_t>() != r.size) {
      throw ConfigError(origin + ": checkpoint tensor mismatch at " + r.name);
    }
    if (at + 8 * r.size > payload_end) {
      throw IntegrityError(origin + ": truncated checkpoint payload");
    }
    for (std::size_t i = 0; i < r.size; ++i, at += 8) {
      r.data[i] = get_f64(bytes, at);
    }
  }
  if (at != payload_end) {
    throw IntegrityError(origin + ": checkpoint payload has trailing bytes");
  }
  return c;
}

void save_checkpoint(const Checkpoint& c, const std::string& path) {
  const std::string bytes = serialize_checkpoint(c);
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open for writing: " + path);
  f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw IoError("short write: " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open: " + path);
  std::string bytes((std::istreambuf_iterator<char>(f)),
                    std::istreambuf_iterator<char>());
  return deserialize_checkpoint(bytes, path);
}

void check_model_compatible(const ModelConfig& expected,
                            const ModelConfig& actual) {
  auto fail = [](const char* field) {
    throw ConfigError(std::string("model mismatch in field ") + field);
  };
  if (expected.feature_dim != actual.feature_dim) fail("feature_dim");
  if (expected.video_dim != actual.video_dim) fail("video_dim");
  if (expected.window_snippets != actual.window_snippets) fail("window_snippets");
  if (expected.snippet_seconds != actual.snippet_seconds) fail("snippet_seconds");
  if (expected.anchors.count != actual.anchors.count) fail("anchor_count");
  if (expected.anchors.longest_snippets != actual.anchors.longest_snippets) {
    fail("anchor_longest_snippets");
  }
}

// --- query assembly ----------------------------------------------------------

namespace {

void require_rows(const Matrix& m, const char* what, const std::string& video) {
  if (m.rows() == 0) {
    throw ConfigError("dataset record " + video + " lacks " + what + " features");
  }
}

QueryPart part(Modality m, const Matrix& features) {
  QueryPart p;
  p.modality = m;
  p.features = features;
  return p;
}

}  // namespace

QueryBundle make_text_query(const DatasetRecord& r) {
  require_rows(r.text_query, "text query", r.video_id);
  QueryBundle q;
  q.parts.push_back(part(Modality::kText, r.text_query));
  return q;
}

QueryBundle make_expert_query(const DatasetRecord& r) {
  require_rows(r.text_query, "text query", r.video_id);
  require_rows(r.segment_query, "segment query", r.video_id);
  QueryBundle q;
  q.parts.push_back(part(Modality::kText, r.text_query));
  q.parts.push_back(part(Modality::kSegment, r.segment_query));
  return q;
}

QueryBundle make_query(const DatasetRecord& r, QueryKind kind, Rng& rng) {
  QueryBundle q;
  const bool with_text = kind != QueryKind::kVision;
  const bool with_vision = kind != QueryKind::kText;
  if (with_text) {
    require_rows(r.text_query, "text query", r.video_id);
    q.parts.push_back(part(Modality::kText, r.text_query));
  }
  if (with_vision) {
    std::uniform_int_distribution<int> pick(0, 1);
    if (pick(rng) == 0) {
      require_rows(r.image_query, "image query", r.video_id);
      q.parts.push_back(part(Modality::kImage, r.image_query));
    } else {
      require_rows(r.segment_query, "segment query", r.video_id);
      q.parts.push_back(part(Modality::kSegment, r.segment_query));
    }
  }
  return q;
}

// --- training loops ----------------------------------------------------------

SampleLosses train_sample(const ModelWeights& w, const ModelConfig& cfg,
                          const LossConfig& loss_cfg,
                          const DatasetRecord& record,
                          const QueryBundle& query, ModelWeights* grads,
                          const Checkpoint* teacher) {
  const int steps = record.snippets.rows();
  if (steps == 0) {
    throw ValidationError("train_sample: empty video " + record.video_id);
  }
  ModelState state = make_state(cfg, w);
  ModelState teacher_state;
  QueryBundle teacher_query;
  if (teacher != nullptr) {
    check_model_compatible(cfg, teacher->model);
    teacher_state = make_state(teacher->model, teacher->weights);
    teacher_query = make_expert_query(record);
  }
  const std::vector<double> lengths =
      cfg.anchors.lengths_seconds(cfg.snippet_seconds);
  const int n_anchor = cfg.anchors.count;
  const double inv_steps = 1.0 / static_cast<double>(steps);

  SampleLosses out;
  out.steps = steps;
  for (int i = 0; i < steps; ++i) {
    const WindowFeatures window = make_window(record.snippets, i, cfg);
    StepCache cache;
    const StepOutput so = forward_step(w, cfg, query, window, state,
                                       grads != nullptr ? &cache : nullptr);

    const std::vector<AnchorTarget> targets = make_anchor_targets(
        window.window_end, lengths, record.moments, loss_cfg.pos_iou_threshold);

    Vec raw_fg(n_anchor), ref_fg(n_anchor);
    std::vector<std::array<double, 2>> raw_reg(n_anchor), ref_reg(n_anchor);
    for (int a = 0; a < n_anchor; ++a) {
      raw_fg[a] = so.raw.anchors[a].fg;
      ref_fg[a] = so.refined.anchors[a].fg;
      raw_reg[a] = {so.raw.anchors[a].log_len, so.raw.anchors[a].end_offset};
      ref_reg[a] = {so.refined.anchors[a].log_len, so.refined.anchors[a].end_offset};
    }
    Vec d_raw_fg, d_ref_fg;
    std::vector<std::array<double, 2>> d_raw_reg, d_ref_reg;
    Vec* draw = grads != nullptr ? &d_raw_fg : nullptr;
    Vec* dref = grads != nullptr ? &d_ref_fg : nullptr;
    const double cls_raw = focal_loss(raw_fg, targets, loss_cfg, draw);
    const double cls_ref = focal_loss(ref_fg, targets, loss_cfg, dref);
    const double reg_raw = regression_loss(
        raw_reg, targets, grads != nullptr ? &d_raw_reg : nullptr);
    const double reg_ref = regression_loss(
        ref_reg, targets, grads != nullptr ? &d_ref_reg : nullptr);
    const double cls = 0.5 * (cls_raw + cls_ref);
    const double reg = 0.5 * (reg_raw + reg_ref);

    double distill = 0.0;
    DistillGrads dg;
    if (teacher != nullptr) {
      const WindowFeatures teacher_window =
          make_window(record.snippets, i, teacher->model);
      const StepOutput to =
          forward_step(teacher->weights, teacher->model, teacher_query,
                       teacher_window, teacher_state);
      DistillSignals student_sig, teacher_sig;
      student_sig.anchor_feat = so.anchor_feat;
      teacher_sig.anchor_feat = to.anchor_feat;
      student_sig.cls.resize(n_anchor);
      student_sig.reg = raw_reg;
      teacher_sig.cls.resize(n_anchor);
      teacher_sig.reg.resize(n_anchor);
      for (int a = 0; a < n_anchor; ++a) {
        student_sig.cls[a] = {so.raw.anchors[a].fg, so.raw.anchors[a].bg};
        teacher_sig.cls[a] = {to.raw.anchors[a].fg, to.raw.anchors[a].bg};
        teacher_sig.reg[a] = {to.raw.anchors[a].log_len, to.raw.anchors[a].end_offset};
      }
      distill = distillation_loss(student_sig, teacher_sig, loss_cfg,
                                  grads != nullptr ? &dg : nullptr);
    }

    out.cls += cls * inv_steps;
    out.reg += reg * inv_steps;
    out.distill += distill * inv_steps;
    out.total += total_loss(distill, cls, reg, loss_cfg, teacher != nullptr) *
                 inv_steps;

    if (grads != nullptr) {
      StepGrad up;
      up.d_raw_cls.assign(n_anchor, {0.0, 0.0});
      up.d_raw_reg.assign(n_anchor, {0.0, 0.0});
      up.d_ref_cls.assign(n_anchor, {0.0, 0.0});
      up.d_ref_reg.assign(n_anchor, {0.0, 0.0});
      const double wc = loss_cfg.cls_weight * 0.5 * inv_steps;
      const double wr = 0.5 * inv_steps;
      for (int a = 0; a < n_anchor; ++a) {
        up.d_raw_cls[a][0] = wc * d_raw_fg[a];
        up.d_ref_cls[a][0] = wc * d_ref_fg[a];
        up.d_raw_reg[a] = {wr * d_raw_reg[a][0], wr * d_raw_reg[a][1]};
        up.d_ref_reg[a] = {wr * d_ref_reg[a][0], wr * d_ref_reg[a][1]};
      }
      if (teacher != nullptr) {
        up.d_anchor_feat = dg.d_anchor_feat;
        for (int r = 0; r < up.d_anchor_feat.rows(); ++r) {
          for (int c = 0; c < up.d_anchor_feat.cols(); ++c) {
            up.d_anchor_feat.at(r, c) *= inv_steps;
          }
        }
        for (int a = 0; a < n_anchor; ++a) {
          up.d_raw_cls[a][0] += inv_steps * dg.d_cls[a][0];
          up.d_raw_cls[a][1] += inv_steps * dg.d_cls[a][1];
          up.d_raw_reg[a][0] += inv_steps * dg.d_reg[a][0];
          up.d_raw_reg[a][1] += inv_steps * dg.d_reg[a][1];
        }
      }
      backward_step(w, cfg, cache, up, *grads);
    }
  }
  return out;
}

namespace {

TrainResult run_training(const std::vector<DatasetRecord>& dataset,
                         const ModelConfig& model_cfg,
                         const LossConfig& loss_cfg,
                         const TrainConfig& train_cfg,
                         const Checkpoint* teacher, bool scheduled) {
  model_cfg.validate();
  train_cfg.validate();
  if (dataset.empty()) throw ValidationError("train: empty dataset");

  Rng init_rng(train_cfg.seed);
  Rng data_rng(derive_seed(train_cfg.seed, 0x5a));

  TrainResult result;
  result.checkpoint.model = model_cfg;
  result.checkpoint.loss = loss_cfg;
  result.checkpoint.train = train_cfg;
  result.checkpoint.weights = ModelWeights::init(model_cfg, init_rng);
  ModelWeights& weights = result.checkpoint.weights;
  AdamState adam = make_adam_state(weights);

  std::vector<std::size_t> order(dataset.size());
  std::iota(order.begin(), order.end(), std::size_t{0});

  int batch_index = 0;
  for (int epoch = 0; epoch < train_cfg.epochs; ++epoch) {
    // Cosine decay from the configured initial rate down to 10% of it.
    TrainConfig step_cfg = train_cfg;
    const double frac =
        train_cfg.epochs > 1
            ? static_cast<double>(epoch) / static_cast<double>(train_cfg.epochs - 1)
            : 0.0;
    step_cfg.learning_rate =
        train_cfg.learning_rate * (0.55 + 0.45 * std::cos(std::numbers::pi * frac));
    std::shuffle(order.begin(), order.end(), data_rng);
    double epoch_loss = 0.0;
    std::size_t at = 0;
    while (at < order.size()) {
      const std::size_t batch_end =
          std::min(order.size(), at + static_cast<std::size_t>(train_cfg.batch_size));
      const QueryKind kind =
          scheduled ? schedule_entry(batch_index) : QueryKind::kText;
      if (scheduled) result.schedule_trace.push_back(kind);

      ModelWeights grads = ModelWeights::zeros_like(weights);
      const double inv_batch = 1.0 / static_cast<double>(batch_end - at);
      for (; at < batch_end; ++at) {
        const DatasetRecord& rec = dataset[order[at]];
        const QueryBundle query = scheduled
                                      ? make_query(rec, kind, data_rng)
                                      : make_expert_query(rec);
        const SampleLosses losses = train_sample(weights, model_cfg, loss_cfg,
                                                 rec, query, &grads, teacher);
        epoch_loss += losses.total;
      }
      for (const ParamRef& r : param_refs(grads)) {
        for (std::size_t i = 0; i < r.size; ++i) r.data[i] *= inv_batch;
      }
      clip_gradients(grads, train_cfg.clip_norm);
      optimizer_step(weights, grads, step_cfg, adam);
      ++batch_index;
    }
    result.epoch_losses.push_back(epoch_loss / static_cast<double>(order.size()));
    result.checkpoint.epoch = epoch + 1;
  }
  return result;
}

}  // namespace

TrainResult train_expert(const std::vector<DatasetRecord>& dataset,
                         const ModelConfig& model_cfg,
                         const LossConfig& loss_cfg,
                         const TrainConfig& train_cfg) {
  return run_training(dataset, model_cfg, loss_cfg, train_cfg, nullptr, false);
}

TrainResult train_student(const std::vector<DatasetRecord>& dataset,
                          const Checkpoint& teacher,
                          const ModelConfig& model_cfg,
                          const LossConfig& loss_cfg,
                          const TrainConfig& train_cfg, bool with_distill) {
  check_model_compatible(model_cfg, teacher.model);
  return run_training(dataset, model_cfg, loss_cfg, train_cfg,
                      with_distill ? &teacher : nullptr, true);
}

}  // namespace sg
