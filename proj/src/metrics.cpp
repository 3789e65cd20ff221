#include "sg/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <unordered_map>
#include <unordered_set>

#include <json.hpp>

#include "sg/errors.hpp"

using nlohmann::json;

namespace sg {

double timeliness_decay(double emit_time, double gt_end, double t_s) {
  if (!(t_s > 0.0)) throw ValidationError("decay: threshold must be > 0");
  if (emit_time <= gt_end) return 1.0;
  const double lag = emit_time - gt_end;
  if (lag >= t_s) return 0.0;
  return 1.0 - lag / t_s;
}

void DecayConfig::validate() const {
  if (thresholds.empty()) throw ValidationError("decay: no thresholds");
  double prev = 0.0;
  for (double t : thresholds) {
    if (!(t > 0.0)) throw ValidationError("decay: thresholds must be > 0");
    if (t <= prev && prev > 0.0) {
      throw ValidationError("decay: thresholds must be sorted ascending");
    }
    prev = t;
  }
}

std::vector<std::size_t> rank_predictions(const std::vector<Emission>& preds) {
  std::vector<std::size_t> order(preds.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (preds[a].score != preds[b].score) return preds[a].score > preds[b].score;
    if (preds[a].emit_time != preds[b].emit_time) {
      return preds[a].emit_time < preds[b].emit_time;
    }
    return a < b;
  });
  return order;
}

namespace {

TimeInterval as_interval(const Emission& e) { return {e.start, e.end}; }

// Greedy rank-order matching shared by the AP variants: each prediction
// takes the highest-IoU still-unmatched moment, provided IoU > iou.
// Returns, per rank position, the matched moment index or -1.
std::vector<int> greedy_match(const std::vector<Emission>& preds,
                              const std::vector<std::size_t>& order,
                              const std::vector<TimeInterval>& gts,
                              double iou) {
  std::vector<int> match(order.size(), -1);
  std::vector<bool> taken(gts.size(), false);
  for (std::size_t j = 0; j < order.size(); ++j) {
    const TimeInterval p = as_interval(preds[order[j]]);
    double best = iou;
    int best_idx = -1;
    for (std::size_t g = 0; g < gts.size(); ++g) {
      if (taken[g]) continue;
      const double v = temporal_iou(p, gts[g]);
      if (v > best) {
        best = v;
        best_idx = static_cast<int>(g);
      }
    }
    if (best_idx >= 0) {
      taken[best_idx] = true;
      match[j] = best_idx;
    }
  }
  return match;
}

}  // namespace

double query_o_recall(const std::vector<Emission>& preds,
                      const std::vector<TimeInterval>& gts, int n, double iou,
                      double t_s) {
  if (n < 1) throw ValidationError("o_recall: n must be >= 1");
  const std::vector<std::size_t> order = rank_predictions(preds);
  const std::size_t top = std::min<std::size_t>(n, order.size());
  double best = 0.0;
  bool hit = false;
  for (std::size_t j = 0; j < top; ++j) {
    const Emission& e = preds[order[j]];
    for (const TimeInterval& gt : gts) {
      if (temporal_iou(as_interval(e), gt) > iou) {
        hit = true;
        best = std::max(best, timeliness_decay(e.emit_time, gt.end, t_s));
      }
    }
  }
  return hit ? best : 0.0;
}

double query_o_ap(const std::vector<Emission>& preds,
                  const std::vector<TimeInterval>& gts, double iou,
                  double t_s) {
  if (gts.empty()) return 0.0;
  const std::vector<std::size_t> order = rank_predictions(preds);
  const std::vector<int> match = greedy_match(preds, order, gts, iou);
  const double g = static_cast<double>(gts.size());
  double cum_beta = 0.0;
  double prev_recall = 0.0;
  double ap = 0.0;
  for (std::size_t j = 0; j < order.size(); ++j) {
    if (match[j] < 0) continue;
    const Emission& e = preds[order[j]];
    cum_beta += timeliness_decay(e.emit_time, gts[match[j]].end, t_s);
    const double recall = cum_beta / g;
    const double precision = cum_beta / static_cast<double>(j + 1);
    ap += (recall - prev_recall) * precision;
    prev_recall = recall;
  }
  return ap;
}

double query_offline_recall(const std::vector<Emission>& preds,
                            const std::vector<TimeInterval>& gts, int n,
                            double iou) {
  if (n < 1) throw ValidationError("offline_recall: n must be >= 1");
  const std::vector<std::size_t> order = rank_predictions(preds);
  const std::size_t top = std::min<std::size_t>(n, order.size());
  for (std::size_t j = 0; j < top; ++j) {
    for (const TimeInterval& gt : gts) {
      if (temporal_iou(as_interval(preds[order[j]]), gt) > iou) return 1.0;
    }
  }
  return 0.0;
}

double query_offline_ap(const std::vector<Emission>& preds,
                        const std::vector<TimeInterval>& gts, double iou) {
  if (gts.empty()) return 0.0;
  const std::vector<std::size_t> order = rank_predictions(preds);
  const std::vector<int> match = greedy_match(preds, order, gts, iou);
  const double g = static_cast<double>(gts.size());
  int tp = 0;
  double prev_recall = 0.0;
  double ap = 0.0;
  for (std::size_t j = 0; j < order.size(); ++j) {
    if (match[j] < 0) continue;
    ++tp;
    const double recall = tp / g;
    const double precision = tp / static_cast<double>(j + 1);
    ap += (recall - prev_recall) * precision;
    prev_recall = recall;
  }
  return ap;
}

namespace {

// Pair prediction sets with ground truth by id; returns (preds-or-null, gt)
// for every ground-truth entry with at least one moment.
struct PairedQueries {
  std::vector<const std::vector<Emission>*> preds;  // null → none logged
  std::vector<const std::vector<TimeInterval>*> gts;
  int skipped = 0;
};

PairedQueries pair_queries(const std::vector<QueryPredictions>& preds,
                           const std::vector<QueryGroundTruth>& gts) {
  std::unordered_map<std::string, const std::vector<Emission>*> by_id;
  for (const QueryPredictions& p : preds) {
    if (!by_id.emplace(p.id, &p.predictions).second) {
      throw ValidationError("metrics: duplicate prediction set id " + p.id);
    }
  }
  std::unordered_set<std::string> known;
  PairedQueries out;
  for (const QueryGroundTruth& gt : gts) {
    if (!known.insert(gt.id).second) {
      throw ValidationError("metrics: duplicate ground-truth id " + gt.id);
    }
    if (gt.moments.empty()) {
      ++out.skipped;
      continue;
    }
    const auto it = by_id.find(gt.id);
    out.preds.push_back(it == by_id.end() ? nullptr : it->second);
    out.gts.push_back(&gt.moments);
  }
  for (const QueryPredictions& p : preds) {
    if (known.find(p.id) == known.end()) {
      throw ValidationError("metrics: predictions for unknown query " + p.id);
    }
  }
  return out;
}

const std::vector<Emission> kNoPredictions;

template <class PerQuery>
double mean_over_queries(const PairedQueries& paired, PerQuery&& fn) {
  if (paired.gts.empty()) return 0.0;
  double sum = 0.0;
  for (std::size_t i = 0; i < paired.gts.size(); ++i) {
    const std::vector<Emission>& p =
        paired.preds[i] ? *paired.preds[i] : kNoPredictions;
    sum += fn(p, *paired.gts[i]);
  }
  return sum / static_cast<double>(paired.gts.size());
}

}  // namespace

double o_recall(const std::vector<QueryPredictions>& preds,
                const std::vector<QueryGroundTruth>& gts, int n, double iou,
                double t_s) {
  const PairedQueries paired = pair_queries(preds, gts);
  return mean_over_queries(paired, [&](const auto& p, const auto& g) {
    return query_o_recall(p, g, n, iou, t_s);
  });
}

double o_map(const std::vector<QueryPredictions>& preds,
             const std::vector<QueryGroundTruth>& gts, double iou, double t_s) {
  const PairedQueries paired = pair_queries(preds, gts);
  return mean_over_queries(paired, [&](const auto& p, const auto& g) {
    return query_o_ap(p, g, iou, t_s);
  });
}

double offline_recall(const std::vector<QueryPredictions>& preds,
                      const std::vector<QueryGroundTruth>& gts, int n,
                      double iou) {
  const PairedQueries paired = pair_queries(preds, gts);
  return mean_over_queries(paired, [&](const auto& p, const auto& g) {
    return query_offline_recall(p, g, n, iou);
  });
}

double offline_map(const std::vector<QueryPredictions>& preds,
                   const std::vector<QueryGroundTruth>& gts, double iou) {
  const PairedQueries paired = pair_queries(preds, gts);
  return mean_over_queries(paired, [&](const auto& p, const auto& g) {
    return query_offline_ap(p, g, iou);
  });
}

MetricReport evaluate(const std::vector<QueryPredictions>& preds,
                      const std::vector<QueryGroundTruth>& gts,
                      const std::vector<int>& recall_ns,
                      const std::vector<double>& ious,
                      const DecayConfig& decay) {
  decay.validate();
  if (recall_ns.empty() || ious.empty()) {
    throw ValidationError("evaluate: empty metric grid");
  }
  const PairedQueries paired = pair_queries(preds, gts);
  MetricReport report;
  report.evaluated_queries = static_cast<int>(paired.gts.size());
  report.skipped_queries = paired.skipped;

  const double n_thresholds = static_cast<double>(decay.thresholds.size());
  for (int n : recall_ns) {
    for (double iou : ious) {
      double avg = 0.0;
      for (double t_s : decay.thresholds) {
        const double v = mean_over_queries(paired, [&](const auto& p, const auto& g) {
          return query_o_recall(p, g, n, iou, t_s);
        });
        report.online_recall.push_back({n, iou, t_s, v});
        avg += v;
      }
      report.online_recall.push_back({n, iou, 0.0, avg / n_thresholds});
      report.off_recall.push_back(
          {n, iou, mean_over_queries(paired, [&](const auto& p, const auto& g) {
             return query_offline_recall(p, g, n, iou);
           })});
    }
  }
  for (double iou : ious) {
    double avg = 0.0;
    for (double t_s : decay.thresholds) {
      const double v = mean_over_queries(paired, [&](const auto& p, const auto& g) {
        return query_o_ap(p, g, iou, t_s);
      });
      report.online_map.push_back({iou, t_s, v});
      avg += v;
    }
    report.online_map.push_back({iou, 0.0, avg / n_thresholds});
    report.off_map.push_back(
        {iou, mean_over_queries(paired, [&](const auto& p, const auto& g) {
           return query_offline_ap(p, g, iou);
         })});
  }

  // per-query snapshot at the headline setting (n=1, IoU=0.5)
  std::size_t pi = 0;
  for (const QueryGroundTruth& gt : gts) {
    if (gt.moments.empty()) continue;
    const std::vector<Emission>& p =
        paired.preds[pi] ? *paired.preds[pi] : kNoPredictions;
    MetricReport::QueryRow row;
    row.id = gt.id;
    for (double t_s : decay.thresholds) {
      row.o_recall_1_05 += query_o_recall(p, gt.moments, 1, 0.5, t_s);
      row.o_ap_05 += query_o_ap(p, gt.moments, 0.5, t_s);
    }
    row.o_recall_1_05 /= n_thresholds;
    row.o_ap_05 /= n_thresholds;
    report.per_query.push_back(std::move(row));
    ++pi;
  }
  return report;
}

namespace {

json report_to_json(const MetricReport& r) {
  json j;
  j["online_recall"] = json::array();
  for (const auto& c : r.online_recall) {
    j["online_recall"].push_back({{"n", c.n},
                                  {"iou", c.iou},
                                  {"t_s", c.t_s > 0.0 ? json(c.t_s) : json("avg")},
                                  {"value", c.value}});
  }
  j["online_map"] = json::array();
  for (const auto& c : r.online_map) {
    j["online_map"].push_back({{"iou", c.iou},
                               {"t_s", c.t_s > 0.0 ? json(c.t_s) : json("avg")},
                               {"value", c.value}});
  }
  j["offline_recall"] = json::array();
  for (const auto& c : r.off_recall) {
    j["offline_recall"].push_back({{"n", c.n}, {"iou", c.iou}, {"value", c.value}});
  }
  j["offline_map"] = json::array();
  for (const auto& c : r.off_map) {
    j["offline_map"].push_back({{"iou", c.iou}, {"value", c.value}});
  }
  j["per_query"] = json::array();
  for (const auto& q : r.per_query) {
    j["per_query"].push_back({{"id", q.id},
                              {"o_recall_1_0.5", q.o_recall_1_05},
                              {"o_ap_0.5", q.o_ap_05}});
  }
  j["evaluated_queries"] = r.evaluated_queries;
  j["skipped_queries"] = r.skipped_queries;
  return j;
}

}  // namespace

void write_report_json(const MetricReport& report, const std::string& path) {
  std::ofstream f(path);
  if (!f) throw IoError("cannot open for writing: " + path);
  f << report_to_json(report).dump(2) << "\n";
  if (!f) throw IoError("short write: " + path);
}

void write_report_csv(const MetricReport& report, const std::string& path) {
  std::ofstream f(path);
  if (!f) throw IoError("cannot open for writing: " + path);
  f << "metric,n,iou,t_s,value\n";
  auto t_s_str = [](double t) {
    return t > 0.0 ? std::to_string(t) : std::string("avg");
  };
  for (const auto& c : report.online_recall) {
    f << "o_recall," << c.n << "," << c.iou << "," << t_s_str(c.t_s) << ","
      << c.value << "\n";
  }
  for (const auto& c : report.online_map) {
    f << "o_map,," << c.iou << "," << t_s_str(c.t_s) << "," << c.value << "\n";
  }
  for (const auto& c : report.off_recall) {
    f << "recall," << c.n << "," << c.iou << ",," << c.value << "\n";
  }
  for (const auto& c : report.off_map) {
    f << "map,," << c.iou << ",," << c.value << "\n";
  }
  if (!f) throw IoError("short write: " + path);
}

std::vector<QueryGroundTruth> read_ground_truth(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot open: " + path);
  json j;
  try {
    f >> j;
  } catch (const json::exception& e) {
    throw ValidationError(path + ": malformed ground truth: " + e.what());
  }
  std::vector<QueryGroundTruth> out;
  try {
    for (const auto& q : j.at("queries")) {
      QueryGroundTruth gt;
      gt.id = q.at("id").get<std::string>();
      for (const auto& m : q.at("moments")) {
        const double s = m.at(0).get<double>();
        const double e = m.at(1).get<double>();
        if (!(s < e)) {
          throw ValidationError(path + ": query " + gt.id +
                                " has a degenerate moment");
        }
        gt.moments.push_back({s, e});
      }
      out.push_back(std::move(gt));
    }
  } catch (const json::exception& e) {
    throw ValidationError(path + ": bad ground-truth structure: " + e.what());
  }
  return out;
}

}  // namespace sg
