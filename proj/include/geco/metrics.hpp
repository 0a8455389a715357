// Copyright 2026 GeCo Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <string>
#include <utility>
#include <vector>

#include "geco/common.hpp"

namespace geco {

// ROC points at every distinct score threshold, descending. Ties collapse
// into a single vertex, so trapezoidal integration reproduces the
// midpoint-tie convention of the Mann-Whitney statistic.
inline std::vector<std::pair<double, double>> roc_points(const std::vector<double>& scores,
                                                         const std::vector<int>& labels) {
  if (scores.size() != labels.size())
    throw InvalidArgument("roc_points: scores and labels differ in length");
  size_t n_pos = 0, n_neg = 0;
  for (int l : labels) (l != 0 ? n_pos : n_neg)++;
  if (n_pos == 0) throw InvalidArgument("roc_points: no positive (anomaly) labels");
  if (n_neg == 0) throw InvalidArgument("roc_points: no negative (normal) labels");

  std::vector<size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](size_t a, size_t b) { return scores[a] > scores[b]; });

  std::vector<std::pair<double, double>> pts;
  pts.emplace_back(0.0, 0.0);
  size_t tp = 0, fp = 0;
  size_t i = 0;
  while (i < order.size()) {
    double s = scores[order[i]];
    while (i < order.size() && scores[order[i]] == s) {
      if (labels[order[i]] != 0)
        ++tp;
      else
        ++fp;
      ++i;
    }
    pts.emplace_back(static_cast<double>(fp) / n_neg, static_cast<double>(tp) / n_pos);
  }
  return pts;
}

// Area under the ROC polyline restricted to FPR in [0, fpr_max], with linear
// interpolation at the cut. This is the raw (non-standardized) integral.
inline double pauc_raw(const std::vector<double>& scores, const std::vector<int>& labels,
                       double fpr_max) {
  if (!(fpr_max > 0.0) || fpr_max > 1.0)
    throw InvalidArgument("pauc: fpr_max must lie in (0, 1]");
  auto pts = roc_points(scores, labels);
  double area = 0.0;
  for (size_t k = 1; k < pts.size(); ++k) {
    auto [x0, y0] = pts[k - 1];
    auto [x1, y1] = pts[k];
    if (x0 >= fpr_max) break;
    if (x1 > fpr_max) {
      // cut the segment at fpr_max
      double t = (fpr_max - x0) / (x1 - x0);
      x1 = fpr_max;
      y1 = y0 + t * (pts[k].second - y0);
    }
    area += 0.5 * (y0 + y1) * (x1 - x0);
    if (x1 == fpr_max) break;
  }
  return area;
}

// AUC with the midpoint convention for ties. Equals the Mann-Whitney pair
// statistic: P(anomaly scores strictly higher) + 0.5 P(tie).
inline double auc(const std::vector<double>& scores, const std::vector<int>& labels) {
  return pauc_raw(scores, labels, 1.0);
}

// Partial AUC standardized onto [0, 1] so that 0.5 corresponds to chance
// (McClish adjustment, matching the DCASE2020 evaluation protocol).
// pauc(scores, labels, 1.0) reduces to auc exactly.
inline double pauc(const std::vector<double>& scores, const std::vector<int>& labels,
                   double fpr_max = 0.1) {
  double area = pauc_raw(scores, labels, fpr_max);
  if (fpr_max == 1.0) return area;
  double min_area = 0.5 * fpr_max * fpr_max;
  double max_area = fpr_max;
  return 0.5 * (1.0 + (area - min_area) / (max_area - min_area));
}

// ---------------------------------------------------------------------------
// Grouped evaluation

struct GroupMetrics {
  std::string machine_type;
  int machine_id = 0;
  double auc = std::numeric_limits<double>::quiet_NaN();
  double pauc = std::numeric_limits<double>::quiet_NaN();
  bool defined = false;  // false when the group has a single class
  size_t n_clips = 0;
};

struct EvalResult {
  double fpr_max = 0.1;
  std::vector<GroupMetrics> per_id;
  // machine_type -> (mean auc, mean pauc) over that type's defined IDs
  std::map<std::string, std::pair<double, double>> per_type;
  double overall_auc = std::numeric_limits<double>::quiet_NaN();
  double overall_pauc = std::numeric_limits<double>::quiet_NaN();
  std::vector<std::string> warnings;
};

struct LabeledScore {
  std::string machine_type;
  int machine_id = 0;
  int label = 0;  // 1 = anomaly
  double score = 0.0;
};

// Per-ID AUC/pAUC, per-type means over IDs, and the overall mean of the
// machine-type means (not ID-weighted). Groups with a single class are
// reported as undefined and excluded from the means with a warning.
inline EvalResult evaluate(const std::vector<LabeledScore>& rows, double fpr_max = 0.1) {
  std::map<std::pair<std::string, int>, std::vector<size_t>> groups;
  for (size_t i = 0; i < rows.size(); ++i)
    groups[{rows[i].machine_type, rows[i].machine_id}].push_back(i);
  if (groups.empty()) throw InvalidArgument("evaluate: no scored clips");

  EvalResult res;
  res.fpr_max = fpr_max;
  std::map<std::string, std::vector<std::pair<double, double>>> by_type;
  for (const auto& [key, idx] : groups) {
    GroupMetrics g;
    g.machine_type = key.first;
    g.machine_id = key.second;
    g.n_clips = idx.size();
    std::vector<double> s;
    std::vector<int> l;
    s.reserve(idx.size());
    l.reserve(idx.size());
    for (size_t i : idx) {
      s.push_back(rows[i].score);
      l.push_back(rows[i].label);
    }
    bool has_pos = std::any_of(l.begin(), l.end(), [](int v) { return v != 0; });
    bool has_neg = std::any_of(l.begin(), l.end(), [](int v) { return v == 0; });
    if (has_pos && has_neg) {
      g.auc = auc(s, l);
      g.pauc = pauc(s, l, fpr_max);
      g.defined = true;
      by_type[g.machine_type].emplace_back(g.auc, g.pauc);
    } else {
      res.warnings.push_back(strformat("group (%s, id %02d) has a single class; metrics undefined",
                                       g.machine_type.c_str(), g.machine_id));
    }
    res.per_id.push_back(std::move(g));
  }

  double sum_a = 0.0, sum_p = 0.0;
  size_t n_types = 0;
  for (const auto& [type, vals] : by_type) {
    double a = 0.0, p = 0.0;
    for (auto [va, vp] : vals) {
      a += va;
      p += vp;
    }
    a /= vals.size();
    p /= vals.size();
    res.per_type[type] = {a, p};
    sum_a += a;
    sum_p += p;
    ++n_types;
  }
  if (n_types > 0) {
    res.overall_auc = sum_a / n_types;
    res.overall_pauc = sum_p / n_types;
  }
  return res;
}

}  // namespace geco
