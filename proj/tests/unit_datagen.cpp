#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "sg/datagen.hpp"
#include "sg/errors.hpp"
#include "sg/interval.hpp"
#include "sg/metrics.hpp"

using namespace sg;

namespace {

SyntheticSpec small_spec(std::uint64_t seed = 3) {
  SyntheticSpec spec;
  spec.num_videos = 24;
  spec.video_snippets = 32;
  spec.seed = seed;
  spec.validate();
  return spec;
}

std::filesystem::path temp_file(const char* name) {
  return std::filesystem::temp_directory_path() / name;
}

}  // namespace

TEST_CASE("generation is deterministic per seed and shaped per spec") {
  SyntheticSpec spec = small_spec();
  auto a = generate(spec);
  auto b = generate(spec);
  REQUIRE(a.size() == 24);
  for (size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].video_id == b[i].video_id);
    CHECK(a[i].snippets == b[i].snippets);
    CHECK(a[i].text_query == b[i].text_query);
    CHECK(a[i].moments.size() == b[i].moments.size());
  }
  spec.seed = 4;
  auto c = generate(spec);
  CHECK(a[0].snippets != c[0].snippets);
}

TEST_CASE("records satisfy their own validation contract") {
  SyntheticSpec spec = small_spec();
  for (const auto& rec : generate(spec)) {
    rec.validate(spec.feature_dim, spec.snippet_seconds);
    CHECK(rec.snippets.rows() == spec.video_snippets);
    CHECK(rec.snippets.cols() == spec.feature_dim);
    CHECK(!rec.moments.empty());
    CHECK(static_cast<int>(rec.moments.size()) <= spec.max_moments);
    double horizon = spec.video_snippets * spec.snippet_seconds;
    for (const auto& m : rec.moments) {
      CHECK(m.start >= 0.0);
      CHECK(m.end <= horizon);
      CHECK(m.length() >= spec.min_moment_len * spec.snippet_seconds - 1e-9);
      CHECK(m.length() <= spec.max_moment_len * spec.snippet_seconds + 1e-9);
    }
    // Snippet rows are unit length.
    for (int r = 0; r < rec.snippets.rows(); ++r) {
      double n = 0.0;
      for (double v : rec.snippets.row(r)) n += v * v;
      CHECK(std::sqrt(n) == doctest::Approx(1.0).epsilon(1e-9));
    }
  }
}

TEST_CASE("dataset file round-trips bit for bit") {
  SyntheticSpec spec = small_spec(9);
  auto records = generate(spec);
  auto path = temp_file("sg_test_dataset.jsonl");
  write_dataset(records, spec, path.string());

  Dataset back = read_dataset(path.string());
  // The header carries only what a consumer needs, not the generation knobs.
  CHECK(back.spec.feature_dim == spec.feature_dim);
  CHECK(back.spec.snippet_seconds == spec.snippet_seconds);
  REQUIRE(back.records.size() == records.size());
  for (size_t i = 0; i < records.size(); ++i) {
    CHECK(back.records[i].video_id == records[i].video_id);
    CHECK(back.records[i].snippets == records[i].snippets);
    CHECK(back.records[i].image_query == records[i].image_query);
    CHECK(back.records[i].segment_query == records[i].segment_query);
    REQUIRE(back.records[i].moments.size() == records[i].moments.size());
    for (size_t m = 0; m < records[i].moments.size(); ++m) {
      CHECK(back.records[i].moments[m].start == records[i].moments[m].start);
      CHECK(back.records[i].moments[m].end == records[i].moments[m].end);
    }
  }
  std::filesystem::remove(path);
}

TEST_CASE("dataset reader rejects foreign or mangled headers") {
  auto path = temp_file("sg_test_badheader.jsonl");
  {
    std::ofstream out(path);
    out << "{\"format\":\"other\",\"version\":1}\n";
  }
  CHECK_THROWS_AS(read_dataset(path.string()), ValidationError);
  {
    std::ofstream out(path);
    out << "not json\n";
  }
  CHECK_THROWS(read_dataset(path.string()));
  CHECK_THROWS_AS(read_dataset("/nonexistent/sg_nope.jsonl"), IoError);
  std::filesystem::remove(path);
}

TEST_CASE("ground truth file matches the generated moments") {
  SyntheticSpec spec = small_spec(5);
  auto records = generate(spec);
  auto path = temp_file("sg_test_gt.json");
  write_ground_truth(records, path.string());
  auto gts = read_ground_truth(path.string());
  REQUIRE(gts.size() == records.size());
  for (size_t i = 0; i < records.size(); ++i) {
    CHECK(gts[i].id == records[i].video_id);
    REQUIRE(gts[i].moments.size() == records[i].moments.size());
    for (size_t m = 0; m < gts[i].moments.size(); ++m)
      CHECK(gts[i].moments[m].start ==
            doctest::Approx(records[i].moments[m].start).epsilon(1e-12));
  }
  std::filesystem::remove(path);
}

TEST_CASE("matched filter separates the planted signal") {
  SyntheticSpec spec = small_spec(7);
  auto records = generate(spec);
  int hits = 0;
  for (const auto& rec : records) {
    auto preds = matched_filter_predict(rec.snippets, rec.text_query,
                                        spec.snippet_seconds);
    const ScoredInterval* best = nullptr;
    for (const auto& p : preds)
      if (!best || p.score > best->score) best = &p;
    if (!best) continue;
    for (const auto& gt : rec.moments)
      if (temporal_iou({best->start, best->end}, gt) > 0.5) {
        ++hits;
        break;
      }
  }
  // The task must be solvable without any learning.
  CHECK(static_cast<double>(hits) / records.size() >= 0.9);
}

TEST_CASE("drift rotates the planted direction along the stream") {
  SyntheticSpec still = small_spec(11);
  SyntheticSpec moving = still;
  moving.drift_per_snippet = 0.05;
  auto a = generate(still);
  auto b = generate(moving);
  REQUIRE(a.size() == b.size());
  // Same seed, different geometry: the streams must genuinely differ.
  CHECK(a[0].snippets != b[0].snippets);
}

TEST_CASE("spec validation rejects nonsense") {
  SyntheticSpec spec;
  spec.num_videos = 0;
  CHECK_THROWS_AS(spec.validate(), ValidationError);
  spec = SyntheticSpec{};
  spec.min_moment_len = 20;
  spec.max_moment_len = 4;
  CHECK_THROWS_AS(spec.validate(), ValidationError);
  spec = SyntheticSpec{};
  spec.snr = 0.0;
  CHECK_THROWS_AS(spec.validate(), ValidationError);
}
