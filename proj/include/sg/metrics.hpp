#pragma once

#include <string>
#include <vector>

#include "sg/interval.hpp"

namespace sg {

// Timeliness weight: full credit up to the moment's end, linear falloff to
// zero over the following t_s seconds.
double timeliness_decay(double emit_time, double gt_end, double t_s);

struct DecayConfig {
  std::vector<double> thresholds = {1.0, 3.0, 5.0};  // seconds
  void validate() const;
};

// One logged prediction (matches the emission-log fields).
struct Emission {
  double start = 0.0;
  double end = 0.0;
  double score = 0.0;
  double emit_time = 0.0;
};

struct QueryPredictions {
  std::string id;
  std::vector<Emission> predictions;
};

struct QueryGroundTruth {
  std::string id;
  std::vector<TimeInterval> moments;
};

// Ranking shared by every metric: score descending, ties broken by earlier
// emit_time, then by input order. Returns indices into `preds`.
std::vector<std::size_t> rank_predictions(const std::vector<Emission>& preds);

// --- per-query primitives -------------------------------------------------
// Online recall for one query: 0 or the best timeliness weight among top-n
// predictions whose IoU with some ground-truth moment exceeds `iou`.
double query_o_recall(const std::vector<Emission>& preds,
                      const std::vector<TimeInterval>& gts, int n, double iou,
                      double t_s);

// Online average precision for one query: predictions are matched greedily
// in rank order (highest-IoU unmatched moment, IoU must exceed `iou`); true
// positives contribute their timeliness weight to both the recall numerator
// and the precision numerator.
double query_o_ap(const std::vector<Emission>& preds,
                  const std::vector<TimeInterval>& gts, double iou, double t_s);

// Undecayed counterparts, written independently as oracles.
double query_offline_recall(const std::vector<Emission>& preds,
                            const std::vector<TimeInterval>& gts, int n,
                            double iou);
double query_offline_ap(const std::vector<Emission>& preds,
                        const std::vector<TimeInterval>& gts, double iou);

// --- corpus-level metrics (means over queries with non-empty ground truth) -
double o_recall(const std::vector<QueryPredictions>& preds,
                const std::vector<QueryGroundTruth>& gts, int n, double iou,
                double t_s);
double o_map(const std::vector<QueryPredictions>& preds,
             const std::vector<QueryGroundTruth>& gts, double iou, double t_s);
double offline_recall(const std::vector<QueryPredictions>& preds,
                      const std::vector<QueryGroundTruth>& gts, int n,
                      double iou);
double offline_map(const std::vector<QueryPredictions>& preds,
                   const std::vector<QueryGroundTruth>& gts, double iou);

struct MetricReport {
  struct RecallCell {
    int n = 0;
    double iou = 0.0;
    double t_s = 0.0;  // 0 marks the average over thresholds
    double value = 0.0;
  };
  struct MapCell {
    double iou = 0.0;
    double t_s = 0.0;  // 0 marks the average over thresholds
    double value = 0.0;
  };
  struct OfflineRecallCell {
    int n = 0;
    double iou = 0.0;
    double value = 0.0;
  };
  struct OfflineMapCell {
    double iou = 0.0;
    double value = 0.0;
  };
  struct QueryRow {
    std::string id;
    double o_recall_1_05 = 0.0;  // n=1, IoU=0.5, averaged over thresholds
    double o_ap_05 = 0.0;        // IoU=0.5, averaged over thresholds
  };

  std::vector<RecallCell> online_recall;
  std::vector<MapCell> online_map;
  std::vector<OfflineRecallCell> off_recall;
  std::vector<OfflineMapCell> off_map;
  std::vector<QueryRow> per_query;
  int evaluated_queries = 0;
  int skipped_queries = 0;  // empty ground truth
};

// Full grid evaluation. Prediction sets are paired with ground truth by id;
// ids present in the ground truth but missing from `preds` count as empty
// prediction sets, unknown prediction ids are an error.
MetricReport evaluate(const std::vector<QueryPredictions>& preds,
                      const std::vector<QueryGroundTruth>& gts,
                      const std::vector<int>& recall_ns,
                      const std::vector<double>& ious,
                      const DecayConfig& decay);

void write_report_json(const MetricReport& report, const std::string& path);
void write_report_csv(const MetricReport& report, const std::string& path);

// Ground-truth JSON file (datagen writes it): {"queries":[{"id","moments"}]}.
std::vector<QueryGroundTruth> read_ground_truth(const std::string& path);

}  // namespace sg
