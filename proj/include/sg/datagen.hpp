#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "sg/interval.hpp"
#include "sg/matrix.hpp"
#include "sg/model.hpp"

namespace sg {

// Synthetic stand-in for a grounding corpus: each video plants a latent
// direction inside its ground-truth moments; queries are views of that
// direction at modality-specific noise levels (image deliberately noisier
// than text). `drift_per_snippet` slowly rotates the planted direction along
// the stream so test-time adaptation has something to chase.
struct SyntheticSpec {
  int num_videos = 200;
  int video_snippets = 64;
  int feature_dim = 16;
  int min_moments = 1;
  int max_moments = 2;
  int min_moment_len = 4;   // snippets
  int max_moment_len = 12;  // snippets
  double snr = 2.0;
  double image_noise_multiplier = 3.0;
  double drift_per_snippet = 0.0;  // radians of basis rotation per snippet
  int segment_query_len = 4;       // snippets
  double snippet_seconds = 2.0;
  std::uint64_t seed = 1;

  void validate() const;
};

struct DatasetRecord {
  std::string video_id;
  Matrix snippets{0, 0};       // video_snippets × feature_dim, unit rows
  Matrix text_query{0, 0};     // 1 × feature_dim
  Matrix image_query{0, 0};    // segment_query_len × feature_dim (one view, repeated)
  Matrix segment_query{0, 0};  // segment_query_len × feature_dim
  std::vector<TimeInterval> moments;  // seconds

  void validate(int feature_dim, double snippet_seconds) const;
};

std::vector<DatasetRecord> generate(const SyntheticSpec& spec);

// JSON Lines container: a header line with format/version/dimensions, then
// one record per line, floats at full round-trip precision.
void write_dataset(const std::vector<DatasetRecord>& records,
                   const SyntheticSpec& spec, const std::string& path);

struct Dataset {
  SyntheticSpec spec;  // as recorded in the header
  std::vector<DatasetRecord> records;
};

Dataset read_dataset(const std::string& path);

// Ground-truth moments keyed by video id, for the metrics module.
void write_ground_truth(const std::vector<DatasetRecord>& records,
                        const std::string& path);

// Training-free reference detector: cosine similarity of the (normalized
// mean) query direction against every snippet, thresholded; contiguous
// above-threshold runs become intervals scored by their mean similarity.
// Certifies task separability independently of the model.
std::vector<ScoredInterval> matched_filter_predict(const Matrix& snippets,
                                                   const Matrix& query_rows,
                                                   double snippet_seconds,
                                                   double cosine_threshold = 0.5);

}  // namespace sg
