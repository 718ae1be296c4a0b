// Copyright 2026 The mospred Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "mospred/common.hpp"
#include "mospred/dataset.hpp"

namespace mospred {

struct MetricSet {
  double mse = 0.0;
  double lcc = 0.0;
  double srcc = 0.0;
  double ktau = 0.0;
};

struct MetricReport {
  MetricSet utterance;
  MetricSet system;
  int n_utterances = 0;
  int n_systems = 0;
};

namespace detail {

inline void check_pair_lengths(std::span<const double> a,
                               std::span<const double> b, size_t min_len,
                               const char* who) {
  if (a.size() != b.size())
    throw std::invalid_argument(std::string(who) + ": length mismatch (" +
                                std::to_string(a.size()) + " vs " +
                                std::to_string(b.size()) + ")");
  if (a.size() < min_len)
    throw std::invalid_argument(std::string(who) + ": needs at least " +
                                std::to_string(min_len) + " elements");
}

inline bool is_constant(std::span<const double> v) {
  for (double x : v)
    if (x != v[0]) return false;
  return true;
}

// Average ranks (1-based); tied values share the mean of their positions.
inline std::vector<double> average_ranks(std::span<const double> v) {
  const size_t n = v.size();
  std::vector<size_t> order(n);
  std::iota(order.begin(), order.end(), size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](size_t a, size_t b) { return v[a] < v[b]; });
  std::vector<double> ranks(n);
  size_t i = 0;
  while (i < n) {
    size_t j = i;
    while (j + 1 < n && v[order[j + 1]] == v[order[i]]) ++j;
    const double r = 0.5 * (static_cast<double>(i + 1) + static_cast<double>(j + 1));
    for (size_t k = i; k <= j; ++k) ranks[order[k]] = r;
    i = j + 1;
  }
  return ranks;
}

// Counts inversions of `v` via mergesort; modifies `v` in place.
inline long long merge_count_inversions(std::vector<double>& v) {
  const size_t n = v.size();
  std::vector<double> tmp(n);
  long long inversions = 0;
  for (size_t width = 1; width < n; width *= 2) {
    for (size_t lo = 0; lo + width < n; lo += 2 * width) {
      const size_t mid = lo + width;
      const size_t hi = std::min(lo + 2 * width, n);
      size_t a = lo, b = mid, k = lo;
      while (a < mid && b < hi) {
        if (v[b] < v[a]) {
          inversions += static_cast<long long>(mid - a);
          tmp[k++] = v[b++];
        } else {
          tmp[k++] = v[a++];
        }
      }
      while (a < mid) tmp[k++] = v[a++];
      while (b < hi) tmp[k++] = v[b++];
      std::copy(tmp.begin() + lo, tmp.begin() + hi, v.begin() + lo);
    }
  }
  return inversions;
}

// Sum over groups of equal values of g*(g-1)/2. Expects sorted input.
inline long long tie_pair_count(const std::vector<double>& sorted) {
  long long t = 0;
  size_t i = 0;
  while (i < sorted.size()) {
    size_t j = i;
    while (j + 1 < sorted.size() && sorted[j + 1] == sorted[i]) ++j;
    const long long g = static_cast<long long>(j - i + 1);
    t += g * (g - 1) / 2;
    i = j + 1;
  }
  return t;
}

}  // namespace detail

inline double mse(std::span<const double> pred, std::span<const double> truth) {
  detail::check_pair_lengths(pred, truth, 1, "mse");
  double acc = 0.0;
  for (size_t i = 0; i < pred.size(); ++i) {
    const double d = pred[i] - truth[i];
    acc += d * d;
  }
  return acc / static_cast<double>(pred.size());
}

// Pearson linear correlation.
inline double lcc(std::span<const double> pred, std::span<const double> truth) {
  detail::check_pair_lengths(pred, truth, 2, "lcc");
  if (detail::is_constant(pred) || detail::is_constant(truth))
    throw UndefinedCorrelationError("lcc: correlation of a constant vector");
  const size_t n = pred.size();
  double mx = 0.0, my = 0.0;
  for (size_t i = 0; i < n; ++i) {
    mx += pred[i];
    my += truth[i];
  }
  mx /= static_cast<double>(n);
  my /= static_cast<double>(n);
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (size_t i = 0; i < n; ++i) {
    const double dx = pred[i] - mx;
    const double dy = truth[i] - my;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  return sxy / std::sqrt(sxx * syy);
}

// Spearman rank correlation: Pearson on average ranks.
inline double srcc(std::span<const double> pred, std::span<const double> truth) {
  detail::check_pair_lengths(pred, truth, 2, "srcc");
  if (detail::is_constant(pred) || detail::is_constant(truth))
    throw UndefinedCorrelationError("srcc: correlation of a constant vector");
  const auto rp = detail::average_ranks(pred);
  const auto rt = detail::average_ranks(truth);
  return lcc(rp, rt);
}

// Kendall tau-b. Discordant pairs are counted as inversions after sorting by
// (pred, truth), which keeps the whole computation in exact integers.
inline double ktau(std::span<const double> pred, std::span<const double> truth) {
  detail::check_pair_lengths(pred, truth, 2, "ktau");
  if (detail::is_constant(pred) || detail::is_constant(truth))
    throw UndefinedCorrelationError("ktau: correlation of a constant vector");
  const size_t n = pred.size();
  std::vector<size_t> order(n);
  std::iota(order.begin(), order.end(), size_t{0});
  std::sort(order.begin(), order.end(), [&](size_t a, size_t b) {
    if (pred[a] != pred[b]) return pred[a] < pred[b];
    return truth[a] < truth[b];
  });

  const long long n0 = static_cast<long long>(n) * (static_cast<long long>(n) - 1) / 2;

  // Ties in pred, and joint ties, from the sorted order.
  long long ties_pred = 0, ties_joint = 0;
  {
    size_t i = 0;
    while (i < n) {
      size_t j = i;
      while (j + 1 < n && pred[order[j + 1]] == pred[order[i]]) ++j;
      const long long g = static_cast<long long>(j - i + 1);
      ties_pred += g * (g - 1) / 2;
      size_t a = i;
      while (a <= j) {
        size_t b = a;
        while (b + 1 <= j && truth[order[b + 1]] == truth[order[a]]) ++b;
        const long long gj = static_cast<long long>(b - a + 1);
        ties_joint += gj * (gj - 1) / 2;
        a = b + 1;
      }
      i = j + 1;
    }
  }

  std::vector<double> t_sorted_by_pred(n);
  for (size_t i = 0; i < n; ++i) t_sorted_by_pred[i] = truth[order[i]];
  const long long discordant = detail::merge_count_inversions(t_sorted_by_pred);
  // t_sorted_by_pred is now sorted; reuse it for truth tie counting.
  const long long ties_truth = detail::tie_pair_count(t_sorted_by_pred);

  const long long concordant = n0 - ties_pred - ties_truth + ties_joint - discordant;
  const double denom = std::sqrt(static_cast<double>(n0 - ties_pred) *
                                 static_cast<double>(n0 - ties_truth));
  if (denom == 0.0)
    throw UndefinedCorrelationError("ktau: all pairs tied");
  return static_cast<double>(concordant - discordant) / denom;
}

// Per-system arithmetic means of predicted and true scores. Returns parallel
// vectors ordered by system id.
inline std::pair<std::vector<double>, std::vector<double>> system_aggregate(
    const std::map<std::string, double>& pred_by_utt,
    const std::map<std::string, double>& true_by_utt,
    const std::map<std::string, std::string>& system_of_utt) {
  std::map<std::string, std::pair<double, double>> sums;  // system -> (pred, true)
  std::map<std::string, int> counts;
  for (const auto& [utt, p] : pred_by_utt) {
    auto ts = true_by_utt.find(utt);
    if (ts == true_by_utt.end())
      throw std::invalid_argument("system_aggregate: no true score for " + utt);
    auto sys = system_of_utt.find(utt);
    if (sys == system_of_utt.end())
      throw std::invalid_argument("system_aggregate: no system for utterance " + utt);
    sums[sys->second].first += p;
    sums[sys->second].second += ts->second;
    counts[sys->second] += 1;
  }
  std::vector<double> pred_by_sys, true_by_sys;
  for (const auto& [sys, s] : sums) {
    pred_by_sys.push_back(s.first / counts[sys]);
    true_by_sys.push_back(s.second / counts[sys]);
  }
  return {pred_by_sys, true_by_sys};
}

// Utterance-level metrics against per-utterance mean listener scores, plus
// system-level metrics on the per-system aggregates.
inline MetricReport evaluate(const std::map<std::string, double>& predictions,
                             const MosDataset& ds) {
  const auto truths = mean_listener_targets(ds);
  std::vector<std::string> missing;
  for (const auto& [utt, t] : truths)
    if (!predictions.count(utt)) missing.push_back(utt);
  if (!missing.empty()) {
    std::string msg = "missing predictions for " +
                      std::to_string(missing.size()) + " utterance(s):";
    for (size_t i = 0; i < missing.size() && i < 10; ++i) msg += " " + missing[i];
    if (missing.size() > 10) msg += " ...";
    throw UsageError(msg);
  }

  std::vector<double> pred, truth;
  std::map<std::string, double> pred_map;
  std::map<std::string, std::string> sys_of;
  for (const auto& u : ds.utterances()) {
    pred.push_back(predictions.at(u.utterance_id));
    truth.push_back(truths.at(u.utterance_id));
    pred_map[u.utterance_id] = predictions.at(u.utterance_id);
    sys_of[u.utterance_id] = u.system_id;
  }

  MetricReport rep;
  rep.n_utterances = static_cast<int>(pred.size());
  rep.utterance = {mse(pred, truth), lcc(pred, truth), srcc(pred, truth),
                   ktau(pred, truth)};
  auto [ps, ts] = system_aggregate(pred_map, truths, sys_of);
  rep.n_systems = static_cast<int>(ps.size());
  rep.system = {mse(ps, ts), lcc(ps, ts), srcc(ps, ts), ktau(ps, ts)};
  return rep;
}

inline MetricReport evaluate_files(const std::filesystem::path& pred_csv,
                                   const std::filesystem::path& ratings_csv) {
  auto preds = read_predictions(pred_csv);
  auto ds = load_dataset(ratings_csv, ratings_csv.parent_path());
  return evaluate(preds, ds);
}

inline std::string format_report_table(const MetricReport& r) {
  char buf[256];
  std::string out;
  std::snprintf(buf, sizeof(buf), "%-10s %10s %10s %10s %10s\n", "level", "mse",
                "lcc", "srcc", "ktau");
  out += buf;
  std::snprintf(buf, sizeof(buf), "%-10s %10.4f %10.4f %10.4f %10.4f\n",
                "utterance", r.utterance.mse, r.utterance.lcc, r.utterance.srcc,
                r.utterance.ktau);
  out += buf;
  std::snprintf(buf, sizeof(buf), "%-10s %10.4f %10.4f %10.4f %10.4f\n", "system",
                r.system.mse, r.system.lcc, r.system.srcc, r.system.ktau);
  out += buf;
  return out;
}

inline std::string format_report_kv(const MetricReport& r) {
  char buf[512];
  std::snprintf(buf, sizeof(buf),
                "utterance_mse=%.10f\nutterance_lcc=%.10f\nutterance_srcc=%.10f\n"
                "utterance_ktau=%.10f\nsystem_mse=%.10f\nsystem_lcc=%.10f\n"
                "system_srcc=%.10f\nsystem_ktau=%.10f\nn_utterances=%d\n"
                "n_systems=%d\n",
                r.utterance.mse, r.utterance.lcc, r.utterance.srcc,
                r.utterance.ktau, r.system.mse, r.system.lcc, r.system.srcc,
                r.system.ktau, r.n_utterances, r.n_systems);
  return buf;
}

}  // namespace mospred
