#include "sg/config.hpp"

#include <fstream>
#include <initializer_list>

#include "sg/errors.hpp"

using nlohmann::json;

namespace sg {
namespace {

void check_keys(const json& j, const char* where,
                std::initializer_list<const char*> allowed) {
  if (!j.is_object()) throw ConfigError(std::string(where) + ": expected an object");
  for (const auto& [key, value] : j.items()) {
    bool ok = false;
    for (const char* a : allowed) {
      if (key == a) {
        ok = true;
        break;
      }
    }
    if (!ok) throw ConfigError(std::string(where) + ": unknown key \"" + key + "\"");
  }
}

template <class T>
void maybe(const json& j, const char* key, T& out) {
  if (const auto it = j.find(key); it != j.end()) out = it->get<T>();
}

}  // namespace

void to_json(json& j, const ModelConfig& c) {
  j = json{{"feature_dim", c.feature_dim},
           {"video_dim", c.video_dim},
           {"text_dim", c.text_dim},
           {"image_dim", c.image_dim},
           {"segment_dim", c.segment_dim},
           {"window_snippets", c.window_snippets},
           {"snippet_seconds", c.snippet_seconds},
           {"fusion_attn_layers", c.fusion_attn_layers},
           {"fusion_blocks", c.fusion_blocks},
           {"anchor_attn_layers", c.anchor_attn_layers},
           {"anchor_count", c.anchors.count},
           {"anchor_longest_snippets", c.anchors.longest_snippets},
           {"score_threshold", c.score_threshold},
           {"mixer", to_string(c.mixer)},
           {"memory_hidden", c.memory_hidden}};
}

void from_json(const json& j, ModelConfig& c) {
  check_keys(j, "model",
             {"feature_dim", "video_dim", "text_dim", "image_dim",
              "segment_dim", "window_snippets", "snippet_seconds",
              "fusion_attn_layers", "fusion_blocks", "anchor_attn_layers",
              "anchor_count", "anchor_longest_snippets", "score_threshold",
              "mixer", "memory_hidden"});
  maybe(j, "feature_dim", c.feature_dim);
  maybe(j, "video_dim", c.video_dim);
  maybe(j, "text_dim", c.text_dim);
  maybe(j, "image_dim", c.image_dim);
  maybe(j, "segment_dim", c.segment_dim);
  maybe(j, "window_snippets", c.window_snippets);
  maybe(j, "snippet_seconds", c.snippet_seconds);
  maybe(j, "fusion_attn_layers", c.fusion_attn_layers);
  maybe(j, "fusion_blocks", c.fusion_blocks);
  maybe(j, "anchor_attn_layers", c.anchor_attn_layers);
  maybe(j, "anchor_count", c.anchors.count);
  maybe(j, "anchor_longest_snippets", c.anchors.longest_snippets);
  maybe(j, "score_threshold", c.score_threshold);
  if (const auto it = j.find("mixer"); it != j.end()) {
    c.mixer = mixer_kind_from_string(it->get<std::string>());
  }
  maybe(j, "memory_hidden", c.memory_hidden);
}

void to_json(json& j, const LossConfig& c) {
  j = json{{"focal_alpha", c.focal_alpha},
           {"focal_gamma", c.focal_gamma},
           {"cls_weight", c.cls_weight},
           {"kl_temperature", c.kl_temperature},
           {"pos_iou_threshold", c.pos_iou_threshold}};
}

void from_json(const json& j, LossConfig& c) {
  check_keys(j, "loss",
             {"focal_alpha", "focal_gamma", "cls_weight", "kl_temperature",
              "pos_iou_threshold"});
  maybe(j, "focal_alpha", c.focal_alpha);
  maybe(j, "focal_gamma", c.focal_gamma);
  maybe(j, "cls_weight", c.cls_weight);
  maybe(j, "kl_temperature", c.kl_temperature);
  maybe(j, "pos_iou_threshold", c.pos_iou_threshold);
}

void to_json(json& j, const TrainConfig& c) {
  j = json{{"learning_rate", c.learning_rate},
           {"weight_decay", c.weight_decay},
           {"beta1", c.beta1},
           {"beta2", c.beta2},
           {"epsilon", c.epsilon},
           {"clip_norm", c.clip_norm},
           {"epochs", c.epochs},
           {"batch_size", c.batch_size},
           {"seed", c.seed}};
}

void from_json(const json& j, TrainConfig& c) {
  check_keys(j, "train",
             {"learning_rate", "weight_decay", "beta1", "beta2", "epsilon",
              "clip_norm", "epochs", "batch_size", "seed"});
  maybe(j, "learning_rate", c.learning_rate);
  maybe(j, "weight_decay", c.weight_decay);
  maybe(j, "beta1", c.beta1);
  maybe(j, "beta2", c.beta2);
  maybe(j, "epsilon", c.epsilon);
  maybe(j, "clip_norm", c.clip_norm);
  maybe(j, "epochs", c.epochs);
  maybe(j, "batch_size", c.batch_size);
  maybe(j, "seed", c.seed);
}

void to_json(json& j, const SyntheticSpec& c) {
  j = json{{"num_videos", c.num_videos},
           {"video_snippets", c.video_snippets},
           {"feature_dim", c.feature_dim},
           {"min_moments", c.min_moments},
           {"max_moments", c.max_moments},
           {"min_moment_len", c.min_moment_len},
           {"max_moment_len", c.max_moment_len},
           {"snr", c.snr},
           {"image_noise_multiplier", c.image_noise_multiplier},
           {"drift_per_snippet", c.drift_per_snippet},
           {"segment_query_len", c.segment_query_len},
           {"snippet_seconds", c.snippet_seconds},
           {"seed", c.seed}};
}

void from_json(const json& j, SyntheticSpec& c) {
  check_keys(j, "data",
             {"num_videos", "video_snippets", "feature_dim", "min_moments",
              "max_moments", "min_moment_len", "max_moment_len", "snr",
              "image_noise_multiplier", "drift_per_snippet",
              "segment_query_len", "snippet_seconds", "seed"});
  maybe(j, "num_videos", c.num_videos);
  maybe(j, "video_snippets", c.video_snippets);
  maybe(j, "feature_dim", c.feature_dim);
  maybe(j, "min_moments", c.min_moments);
  maybe(j, "max_moments", c.max_moments);
  maybe(j, "min_moment_len", c.min_moment_len);
  maybe(j, "max_moment_len", c.max_moment_len);
  maybe(j, "snr", c.snr);
  maybe(j, "image_noise_multiplier", c.image_noise_multiplier);
  maybe(j, "drift_per_snippet", c.drift_per_snippet);
  maybe(j, "segment_query_len", c.segment_query_len);
  maybe(j, "snippet_seconds", c.snippet_seconds);
  maybe(j, "seed", c.seed);
}

void to_json(json& j, const DecayConfig& c) {
  j = json{{"thresholds", c.thresholds}};
}

void from_json(const json& j, DecayConfig& c) {
  check_keys(j, "decay", {"thresholds"});
  maybe(j, "thresholds", c.thresholds);
}

void RunConfig::validate() const {
  model.validate();
  train.validate();
  data.validate();
  decay.validate();
}

void to_json(json& j, const RunConfig& c) {
  j = json{{"model", c.model},
           {"loss", c.loss},
           {"train", c.train},
           {"data", c.data},
           {"decay", c.decay}};
}

void from_json(const json& j, RunConfig& c) {
  check_keys(j, "config", {"model", "loss", "train", "data", "decay"});
  if (const auto it = j.find("model"); it != j.end()) from_json(*it, c.model);
  if (const auto it = j.find("loss"); it != j.end()) from_json(*it, c.loss);
  if (const auto it = j.find("train"); it != j.end()) from_json(*it, c.train);
  if (const auto it = j.find("data"); it != j.end()) from_json(*it, c.data);
  if (const auto it = j.find("decay"); it != j.end()) from_json(*it, c.decay);
}

RunConfig load_run_config(const std::string& path) {
  RunConfig cfg;
  if (path.empty()) return cfg;
  std::ifstream f(path);
  if (!f) throw IoError("cannot open config: " + path);
  json j;
  try {
    f >> j;
  } catch (const json::exception& e) {
    throw ConfigError(path + ": malformed JSON: " + e.what());
  }
  try {
    from_json(j, cfg);
  } catch (const json::exception& e) {
    throw ConfigError(path + ": " + e.what());
  }
  return cfg;
}

void apply_override(json& j, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) {
    throw ConfigError("override must look like section.key=value: " + assignment);
  }
  const std::string path = assignment.substr(0, eq);
  const std::string value = assignment.substr(eq + 1);

  json* node = &j;
  std::size_t begin = 0;
  while (true) {
    const auto dot = path.find('.', begin);
    const std::string key = path.substr(begin, dot - begin);
    if (key.empty()) throw ConfigError("empty key in override: " + assignment);
    if (dot == std::string::npos) {
      json parsed = json::parse(value, nullptr, false);
      (*node)[key] = parsed.is_discarded() ? json(value) : parsed;
      return;
    }
    node = &(*node)[key];
    begin = dot + 1;
  }
}

void write_resolved_config(const RunConfig& c, const std::string& path) {
  std::ofstream f(path);
  if (!f) throw IoError("cannot open for writing: " + path);
  f << json(c).dump(2) << "\n";
  if (!f) throw IoError("short write: " + path);
}

}  // namespace sg
