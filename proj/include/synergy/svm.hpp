#pragma once

// Linear SVM (primal subgradient, Pegasos-style step sizes) plus evaluation
// metrics: accuracy, confusion counts, and average precision.

#include <algorithm>
#include <cmath>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "synergy/common.hpp"

namespace synergy {

struct SvmModel {
  std::vector<double> w;
  double b = 0.0;
  double c_reg = 1.0;
};

inline double svm_objective(const SvmModel& m, const RowMatrix& X,
                            const std::vector<int>& y) {
  double obj = 0.0;
  for (double wv : m.w) obj += wv * wv;
  obj *= 0.5;
  for (std::size_t i = 0; i < X.rows; ++i) {
    const double* row = X.row(i);
    double dec = m.b;
    for (std::size_t j = 0; j < X.cols; ++j) dec += m.w[j] * row[j];
    obj += m.c_reg * std::max(0.0, 1.0 - y[i] * dec);
  }
  return obj;
}

// Minimizes (1/2)||w||^2 + C * sum hinge via per-sample subgradient steps
// with eta_t = 1/(lambda t), lambda = 1/(nC). The bias rides along
// unregularized. The best full-data objective seen at any epoch boundary is
// snapshotted and returned, so the result is within tolerance of the best
// objective by construction.
inline SvmModel svm_train(const RowMatrix& X, const std::vector<int>& y,
                          double c_reg, int epochs, std::uint64_t seed) {
  if (X.rows < 2 || y.size() != X.rows)
    throw input_error("svm_train: need >= 2 labeled samples");
  bool has_pos = false, has_neg = false;
  for (int label : y) {
    if (label == 1) has_pos = true;
    else if (label == -1) has_neg = true;
    else throw input_error("svm_train: labels must be -1 or +1");
  }
  if (!has_pos || !has_neg)
    throw input_error("svm_train: both classes must be present");
  if (c_reg <= 0.0) throw input_error("svm_train: C must be > 0");
  if (epochs < 1) throw input_error("svm_train: epochs must be >= 1");

  const double lambda = 1.0 / (static_cast<double>(X.rows) * c_reg);
  SvmModel cur;
  cur.w.assign(X.cols, 0.0);
  cur.c_reg = c_reg;
  SvmModel best = cur;
  double best_obj = svm_objective(cur, X, y);

  Rng rng(seed);
  std::vector<int> order(X.rows);
  std::iota(order.begin(), order.end(), 0);

  long long t = 0;
  for (int epoch = 0; epoch < epochs; ++epoch) {
    deterministic_shuffle(order, rng);
    for (int i : order) {
      ++t;
      const double eta = 1.0 / (lambda * static_cast<double>(t));
      const double* row = X.row(i);
      double dec = cur.b;
      for (std::size_t j = 0; j < X.cols; ++j) dec += cur.w[j] * row[j];
      const double shrink = 1.0 - eta * lambda;
      if (y[i] * dec < 1.0) {
        const double step = eta * y[i];
        for (std::size_t j = 0; j < X.cols; ++j)
          cur.w[j] = shrink * cur.w[j] + step * row[j];
        cur.b += step;
      } else {
        for (double& wv : cur.w) wv *= shrink;
      }
    }
    const double obj = svm_objective(cur, X, y);
    if (obj < best_obj) {
      best_obj = obj;
      best = cur;
    }
  }
  return best;
}

inline double decision_value(const SvmModel& m, std::span<const double> x) {
  if (x.size() != m.w.size())
    throw input_error("decision_value: dimension mismatch");
  double dec = m.b;
  for (std::size_t j = 0; j < x.size(); ++j) dec += m.w[j] * x[j];
  return dec;
}

// Ties on the hyperplane go to +1.
inline int predict(const SvmModel& m, std::span<const double> x) {
  return decision_value(m, x) >= 0.0 ? 1 : -1;
}

// ---------------------------------------------------------------------------
// Metrics.
// ---------------------------------------------------------------------------

// Mean precision at each positive's rank, decisions sorted descending with
// stable tie order by original index. No positives -> 0.
inline double average_precision(const std::vector<int>& labels,
                                const std::vector<double>& decisions) {
  if (labels.size() != decisions.size())
    throw input_error("average_precision: length mismatch");
  std::vector<std::size_t> order(labels.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) {
                     return decisions[a] > decisions[b];
                   });
  double sum = 0.0;
  int positives = 0;
  for (std::size_t rank = 0; rank < order.size(); ++rank) {
    if (labels[order[rank]] == 1) {
      ++positives;
      sum += static_cast<double>(positives) / static_cast<double>(rank + 1);
    }
  }
  return positives > 0 ? sum / positives : 0.0;
}

struct EvalReport {
  struct Decision {
    std::string id;
    int label = 0;
    double value = 0.0;
    int predicted = 0;
  };
  double accuracy = 0.0;
  double average_precision = 0.0;
  long tp = 0, fp = 0, tn = 0, fn = 0;
  std::vector<Decision> decisions;
};

inline EvalReport evaluate(const SvmModel& m, const RowMatrix& X,
                           const std::vector<int>& y,
                           const std::vector<std::string>& ids) {
  if (X.rows == 0) throw input_error("evaluate: empty input");
  if (y.size() != X.rows || ids.size() != X.rows)
    throw input_error("evaluate: row count mismatch");
  EvalReport rep;
  std::vector<double> decs(X.rows);
  for (std::size_t i = 0; i < X.rows; ++i) {
    decs[i] = decision_value(m, X.row_span(i));
    const int pred = decs[i] >= 0.0 ? 1 : -1;
    rep.decisions.push_back({ids[i], y[i], decs[i], pred});
    if (y[i] == 1)
      (pred == 1 ? rep.tp : rep.fn)++;
    else
      (pred == 1 ? rep.fp : rep.tn)++;
  }
  rep.accuracy = static_cast<double>(rep.tp + rep.tn) /
                 static_cast<double>(X.rows);
  rep.average_precision = average_precision(y, decs);
  return rep;
}

// Best-accuracy threshold over a decision list (midpoint sweep); reported as
// a supplementary diagnostic, never used for the headline metric.
struct ThresholdChoice {
  double threshold = 0.0;
  double accuracy = 0.0;
};

inline double accuracy_at_threshold(const std::vector<int>& labels,
                                    const std::vector<double>& decisions,
                                    double thr) {
  if (labels.empty()) return 0.0;
  long correct = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const int pred = decisions[i] >= thr ? 1 : -1;
    if (pred == labels[i]) ++correct;
  }
  return static_cast<double>(correct) / labels.size();
}

inline ThresholdChoice choose_threshold(const std::vector<int>& labels,
                                        const std::vector<double>& decisions) {
  if (labels.empty()) return {};
  std::vector<double> cuts = decisions;
  std::sort(cuts.begin(), cuts.end());
  ThresholdChoice best;
  best.threshold = cuts[0] - 1.0;
  best.accuracy = accuracy_at_threshold(labels, decisions, best.threshold);
  for (std::size_t c = 1; c <= cuts.size(); ++c) {
    const double thr = c < cuts.size() ? (cuts[c - 1] + cuts[c]) / 2.0
                                       : cuts.back() + 1.0;
    const double acc = accuracy_at_threshold(labels, decisions, thr);
    if (acc > best.accuracy) {
      best.accuracy = acc;
      best.threshold = thr;
    }
  }
  return best;
}

// ---------------------------------------------------------------------------
// Per-dimension train-split standardization for SVM inputs.
// ---------------------------------------------------------------------------

struct FeatureScaler {
  std::vector<double> mean;
  std::vector<double> std;  // population std, floored at 1e-8
};

inline FeatureScaler scaler_fit(const RowMatrix& X,
                                const std::vector<std::size_t>& rows) {
  if (rows.empty()) throw input_error("scaler_fit: no rows selected");
  FeatureScaler sc;
  sc.mean.assign(X.cols, 0.0);
  sc.std.assign(X.cols, 0.0);
  for (std::size_t i : rows)
    for (std::size_t j = 0; j < X.cols; ++j) sc.mean[j] += X.at(i, j);
  for (double& m : sc.mean) m /= static_cast<double>(rows.size());
  for (std::size_t i : rows)
    for (std::size_t j = 0; j < X.cols; ++j) {
      const double d = X.at(i, j) - sc.mean[j];
      sc.std[j] += d * d;
    }
  for (double& s : sc.std)
    s = std::max(std::sqrt(s / static_cast<double>(rows.size())), 1e-8);
  return sc;
}

inline void scaler_apply(const FeatureScaler& sc, RowMatrix& X) {
  if (sc.mean.size() != X.cols) throw input_error("scaler_apply: dim mismatch");
  for (std::size_t i = 0; i < X.rows; ++i)
    for (std::size_t j = 0; j < X.cols; ++j)
      X.at(i, j) = (X.at(i, j) - sc.mean[j]) / sc.std[j];
}

inline std::vector<double> scaler_apply_row(const FeatureScaler& sc,
                                            std::span<const double> x) {
  if (sc.mean.size() != x.size())
    throw input_error("scaler_apply: dim mismatch");
  std::vector<double> out(x.size());
  for (std::size_t j = 0; j < x.size(); ++j)
    out[j] = (x[j] - sc.mean[j]) / sc.std[j];
  return out;
}

}  // namespace synergy
