#include "sg/datagen.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "sg/errors.hpp"
#include "sg/hash.hpp"
#include "sg/numerics.hpp"

using nlohmann::json;

namespace sg {
namespace {

Vec normalized(Vec v) {
  double n = std::sqrt(norm_sq(v));
  if (n < 1e-12) {
    v.assign(v.size(), 0.0);
    v[0] = 1.0;
    return v;
  }
  for (double& x : v) x /= n;
  return v;
}

Vec unit_gaussian(int dim, Rng& rng) {
  return normalized(gaussian_vec(dim, 1.0, rng));
}

json matrix_to_json(const Matrix& m) {
  json rows = json::array();
  for (int r = 0; r < m.rows(); ++r) {
    json row = json::array();
    for (int c = 0; c < m.cols(); ++c) row.push_back(m.at(r, c));
    rows.push_back(std::move(row));
  }
  return rows;
}

Matrix matrix_from_json(const json& j, const std::string& what) {
  if (!j.is_array() || j.empty()) {
    throw ValidationError(what + ": expected a non-empty array of rows");
  }
  const int rows = static_cast<int>(j.size());
  const int cols = static_cast<int>(j[0].size());
  Matrix m(rows, cols);
  for (int r = 0; r < rows; ++r) {
    if (static_cast<int>(j[r].size()) != cols) {
      throw ValidationError(what + ": ragged rows");
    }
    for (int c = 0; c < cols; ++c) m.at(r, c) = j[r][c].get<double>();
  }
  return m;
}

}  // namespace

void SyntheticSpec::validate() const {
  if (num_videos < 1) throw ValidationError("spec: num_videos must be >= 1");
  if (video_snippets < 1) throw ValidationError("spec: video_snippets must be >= 1");
  if (feature_dim < 2) throw ValidationError("spec: feature_dim must be >= 2");
  if (min_moments < 1 || max_moments < min_moments) {
    throw ValidationError("spec: moment count range invalid");
  }
  if (min_moment_len < 1 || max_moment_len < min_moment_len) {
    throw ValidationError("spec: moment length range invalid");
  }
  if (max_moment_len > video_snippets) {
    throw ValidationError("spec: moment longer than the video");
  }
  if (max_moments * max_moment_len > video_snippets) {
    throw ValidationError("spec: moments cannot all fit in the video");
  }
  if (!(snr > 0.0)) throw ValidationError("spec: snr must be > 0");
  if (image_noise_multiplier < 1.0) {
    throw ValidationError("spec: image_noise_multiplier must be >= 1");
  }
  if (drift_per_snippet < 0.0) {
    throw ValidationError("spec: drift_per_snippet must be >= 0");
  }
  if (segment_query_len < 1 || segment_query_len > video_snippets) {
    throw ValidationError("spec: segment_query_len out of range");
  }
  if (!(snippet_seconds > 0.0)) {
    throw ValidationError("spec: snippet_seconds must be > 0");
  }
}

void DatasetRecord::validate(int feature_dim, double snippet_seconds) const {
  auto check_features = [&](const Matrix& m, const char* what, int min_rows) {
    if (m.rows() < min_rows || m.cols() != feature_dim) {
      throw ValidationError("record " + video_id + ": " + what +
                            " has wrong shape");
    }
    if (!m.all_finite()) {
      throw ValidationError("record " + video_id + ": " + what +
                            " has non-finite values");
    }
  };
  check_features(snippets, "snippets", 1);
  check_features(text_query, "text_query", 1);
  check_features(image_query, "image_query", 1);
  check_features(segment_query, "segment_query", 1);
  for (int r = 0; r < snippets.rows(); ++r) {
    double n = 0.0;
    for (double x : snippets.row(r)) n += x * x;
    if (std::abs(n - 1.0) > 1e-6) {
      throw ValidationError("record " + video_id +
                            ": snippet rows must be unit-norm");
    }
  }
  const double duration = snippets.rows() * snippet_seconds;
  if (moments.empty()) {
    throw ValidationError("record " + video_id + ": no ground-truth moments");
  }
  for (const TimeInterval& m : moments) {
    if (!(m.start < m.end)) {
      throw ValidationError("record " + video_id +
                            ": moment must have start < end");
    }
    if (m.start < -1e-9 || m.end > duration + 1e-9) {
      throw ValidationError("record " + video_id +
                            ": moment outside the video");
    }
  }
}

std::vector<DatasetRecord> generate(const SyntheticSpec& spec) {
  spec.validate();
  std::vector<DatasetRecord> out;
  out.reserve(spec.num_videos);
  const int dim = spec.feature_dim;
  const double in_noise = 1.0 / spec.snr;
  const double text_noise = 0.5 / spec.snr;
  const double image_noise = text_noise * spec.image_noise_multiplier;

  for (int v = 0; v < spec.num_videos; ++v) {
    Rng rng(derive_seed(spec.seed, static_cast<std::uint64_t>(v)));
    DatasetRecord rec;
    {
      std::ostringstream id;
      id << "v";
      id.width(4);
      id.fill('0');
      id << v;
      rec.video_id = id.str();
    }

    const Vec q = unit_gaussian(dim, rng);
    // companion axis spanning the drift plane
    Vec u = gaussian_vec(dim, 1.0, rng);
    axpy(u, -dot(u, q), q);
    u = normalized(u);

    // place non-overlapping moments (snippet units)
    std::uniform_int_distribution<int> count_dist(spec.min_moments,
                                                  spec.max_moments);
    std::uniform_int_distribution<int> len_dist(spec.min_moment_len,
                                                spec.max_moment_len);
    const int want = count_dist(rng);
    std::vector<std::pair<int, int>> spans;  // [start, end) snippets
    for (int tries = 0; static_cast<int>(spans.size()) < want && tries < 500;
         ++tries) {
      const int len = len_dist(rng);
      std::uniform_int_distribution<int> start_dist(0,
                                                    spec.video_snippets - len);
      const int start = start_dist(rng);
      bool overlaps = false;
      for (const auto& s : spans) {
        if (start < s.second && s.first < start + len) {
          overlaps = true;
          break;
        }
      }
      if (!overlaps) spans.emplace_back(start, start + len);
    }
    std::sort(spans.begin(), spans.end());

    std::vector<bool> in_moment(spec.video_snippets, false);
    for (const auto& s : spans) {
      for (int t = s.first; t < s.second; ++t) in_moment[t] = true;
      rec.moments.push_back({s.first * spec.snippet_seconds,
                             s.second * spec.snippet_seconds});
    }

    rec.snippets = Matrix(spec.video_snippets, dim);
    for (int t = 0; t < spec.video_snippets; ++t) {
      Vec g = gaussian_vec(dim, 1.0 / std::sqrt(dim), rng);
      Vec row;
      if (in_moment[t]) {
        const double angle = spec.drift_per_snippet * t;
        Vec qt(dim);
        for (int c = 0; c < dim; ++c) {
          qt[c] = std::cos(angle) * q[c] + std::sin(angle) * u[c];
        }
        axpy(qt, in_noise, g);
        row = normalized(std::move(qt));
      } else {
        row = normalized(std::move(g));
      }
      rec.snippets.set_row(t, row);
    }

    // queries view the undrifted direction (as captured "offline")
    {
      Vec tq = q;
      axpy(tq, text_noise, gaussian_vec(dim, 1.0 / std::sqrt(dim), rng));
      rec.text_query = Matrix(1, dim);
      rec.text_query.set_row(0, normalized(std::move(tq)));
    }
    {
      Vec iq = q;
      axpy(iq, image_noise, gaussian_vec(dim, 1.0 / std::sqrt(dim), rng));
      iq = normalized(std::move(iq));
      rec.image_query = Matrix(spec.segment_query_len, dim);
      for (int r = 0; r < spec.segment_query_len; ++r) {
        rec.image_query.set_row(r, iq);  // one view, repeated temporally
      }
    }
    {
      rec.segment_query = Matrix(spec.segment_query_len, dim);
      for (int r = 0; r < spec.segment_query_len; ++r) {
        Vec sq = q;
        axpy(sq, in_noise, gaussian_vec(dim, 1.0 / std::sqrt(dim), rng));
        rec.segment_query.set_row(r, normalized(std::move(sq)));
      }
    }

    rec.validate(dim, spec.snippet_seconds);
    out.push_back(std::move(rec));
  }
  return out;
}

void write_dataset(const std::vector<DatasetRecord>& records,
                   const SyntheticSpec& spec, const std::string& path) {
  std::ofstream f(path);
  if (!f) throw IoError("cannot open for writing: " + path);
  json header = {
      {"format", "sg-dataset"},
      {"version", 1},
      {"feature_dim", spec.feature_dim},
      {"snippet_seconds", spec.snippet_seconds},
      {"num_records", records.size()},
  };
  f << header.dump() << "\n";
  for (const DatasetRecord& rec : records) {
    json moments = json::array();
    for (const TimeInterval& m : rec.moments) {
      moments.push_back({m.start, m.end});
    }
    json line = {
        {"video_id", rec.video_id},
        {"snippets", matrix_to_json(rec.snippets)},
        {"text_query", matrix_to_json(rec.text_query)},
        {"image_query", matrix_to_json(rec.image_query)},
        {"segment_query", matrix_to_json(rec.segment_query)},
        {"moments", std::move(moments)},
    };
    f << line.dump() << "\n";
  }
  if (!f) throw IoError("short write: " + path);
}

Dataset read_dataset(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot open: " + path);
  std::string line;
  if (!std::getline(f, line)) throw ValidationError(path + ": empty file");

  Dataset ds;
  try {
    const json header = json::parse(line);
    if (header.at("format") != "sg-dataset" || header.at("version") != 1) {
      throw ValidationError(path + ": unrecognized dataset header");
    }
    ds.spec.feature_dim = header.at("feature_dim").get<int>();
    ds.spec.snippet_seconds = header.at("snippet_seconds").get<double>();
  } catch (const json::exception& e) {
    throw ValidationError(path + " line 1: bad header: " + e.what());
  }

  int line_no = 1;
  while (std::getline(f, line)) {
    ++line_no;
    if (line.empty()) continue;
    DatasetRecord rec;
    try {
      const json j = json::parse(line);
      rec.video_id = j.at("video_id").get<std::string>();
      rec.snippets = matrix_from_json(j.at("snippets"), "snippets");
      rec.text_query = matrix_from_json(j.at("text_query"), "text_query");
      rec.image_query = matrix_from_json(j.at("image_query"), "image_query");
      rec.segment_query =
          matrix_from_json(j.at("segment_query"), "segment_query");
      for (const auto& m : j.at("moments")) {
        rec.moments.push_back({m.at(0).get<double>(), m.at(1).get<double>()});
      }
    } catch (const json::exception& e) {
      throw ValidationError(path + " line " + std::to_string(line_no) +
                            ": malformed record: " + e.what());
    }
    rec.validate(ds.spec.feature_dim, ds.spec.snippet_seconds);
    ds.records.push_back(std::move(rec));
  }
  return ds;
}

void write_ground_truth(const std::vector<DatasetRecord>& records,
                        const std::string& path) {
  json queries = json::array();
  for (const DatasetRecord& rec : records) {
    json moments = json::array();
    for (const TimeInterval& m : rec.moments) {
      moments.push_back({m.start, m.end});
    }
    queries.push_back({{"id", rec.video_id}, {"moments", std::move(moments)}});
  }
  std::ofstream f(path);
  if (!f) throw IoError("cannot open for writing: " + path);
  f << json{{"queries", std::move(queries)}}.dump(2) << "\n";
  if (!f) throw IoError("short write: " + path);
}

std::vector<ScoredInterval> matched_filter_predict(const Matrix& snippets,
                                                   const Matrix& query_rows,
                                                   double snippet_seconds,
                                                   double cosine_threshold) {
  if (query_rows.cols() != snippets.cols()) {
    throw DimensionError("matched_filter: query/snippet width mismatch");
  }
  Vec dir(snippets.cols(), 0.0);
  for (int r = 0; r < query_rows.rows(); ++r) {
    const auto row = query_rows.row(r);
    for (int c = 0; c < snippets.cols(); ++c) dir[c] += row[c];
  }
  dir = normalized(std::move(dir));

  std::vector<ScoredInterval> out;
  int run_start = -1;
  double run_sum = 0.0;
  auto flush = [&](int end_snippet) {
    if (run_start < 0) return;
    const double score = run_sum / (end_snippet - run_start);
    out.push_back({run_start * snippet_seconds, end_snippet * snippet_seconds,
                   std::min(score, 1.0)});
    run_start = -1;
    run_sum = 0.0;
  };
  for (int t = 0; t < snippets.rows(); ++t) {
    const double sim = dot(dir, snippets.row_vec(t));
    if (sim > cosine_threshold) {
      if (run_start < 0) run_start = t;
      run_sum += sim;
    } else {
      flush(t);
    }
  }
  flush(snippets.rows());
  return out;
}

}  // namespace sg
