#pragma once

// Feature-quality metrics.
//
// silhouette   mean over points of (b - a) / max(a, b) against the given
//              labels, Euclidean distance on L2-normalized features; a point
//              alone in its class scores 0
// ARI          pair-counting adjusted Rand index between two labelings
// homogeneity  1 - H(class | cluster) / H(class); 1 when H(class) = 0
// k-means      k-means++ seeding, Lloyd iterations, best inertia over restarts
// k-NN         leave-one-out 1-NN under cosine distance; ties go to the
//              lower index

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <vector>

#include "svt/error.hpp"
#include "svt/rng.hpp"

namespace svt {

using Matrix = std::vector<std::vector<double>>;

inline Matrix l2_normalize(const Matrix& x) {
  Matrix out = x;
  for (std::size_t i = 0; i < out.size(); ++i) {
    double n = 0.0;
    for (double v : out[i]) n += v * v;
    n = std::sqrt(n);
    if (n == 0.0) throw DataError(detail::concat("metrics: feature row ", i, " has zero norm"));
    for (double& v : out[i]) v /= n;
  }
  return out;
}

inline double squared_euclidean(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return s;
}

namespace detail {

inline void check_features(const Matrix& x, const std::vector<int>& labels) {
  if (x.size() != labels.size()) throw ShapeError("metrics: feature and label counts differ");
  if (x.empty()) throw DataError("metrics: no points");
  for (const auto& row : x) {
    if (row.size() != x[0].size()) throw ShapeError("metrics: ragged feature matrix");
  }
}

/// Labels remapped to 0..k-1 in order of first appearance of the sorted values.
inline std::vector<std::size_t> dense_labels(const std::vector<int>& labels, std::size_t* k) {
  std::map<int, std::size_t> ids;
  for (int l : labels) ids.emplace(l, 0);
  std::size_t n = 0;
  for (auto& [l, id] : ids) id = n++;
  std::vector<std::size_t> out;
  for (int l : labels) out.push_back(ids[l]);
  *k = n;
  return out;
}

}  // namespace detail

inline double silhouette(const Matrix& features, const std::vector<int>& labels) {
  detail::check_features(features, labels);
  std::size_t k = 0;
  const auto lab = detail::dense_labels(labels, &k);
  if (k < 2) throw DataError("silhouette: need at least 2 classes");
  const auto x = l2_normalize(features);
  const std::size_t n = x.size();
  std::vector<std::size_t> size(k, 0);
  for (auto l : lab) ++size[l];
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    if (size[lab[i]] == 1) continue;
    std::vector<double> sum(k, 0.0);
    for (std::size_t j = 0; j < n; ++j) {
      if (j != i) sum[lab[j]] += std::sqrt(squared_euclidean(x[i], x[j]));
    }
    const double a = sum[lab[i]] / static_cast<double>(size[lab[i]] - 1);
    double b = std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < k; ++c) {
      if (c != lab[i] && size[c] > 0) b = std::min(b, sum[c] / static_cast<double>(size[c]));
    }
    const double m = std::max(a, b);
    total += m > 0.0 ? (b - a) / m : 0.0;
  }
  return total / static_cast<double>(n);
}

inline double adjusted_rand_index(const std::vector<int>& truth, const std::vector<int>& pred) {
  if (truth.size() != pred.size()) throw ShapeError("ARI: labelings differ in length");
  if (truth.empty()) throw DataError("ARI: no points");
  std::size_t kt = 0, kp = 0;
  const auto a = detail::dense_labels(truth, &kt);
  const auto b = detail::dense_labels(pred, &kp);
  std::vector<std::vector<double>> table(kt, std::vector<double>(kp, 0.0));
  std::vector<double> rows(kt, 0.0), cols(kp, 0.0);
  for (std::size_t i = 0; i < a.size(); ++i) {
    table[a[i]][b[i]] += 1.0;
    rows[a[i]] += 1.0;
    cols[b[i]] += 1.0;
  }
  auto c2 = [](double v) { return v * (v - 1.0) / 2.0; };
  double index = 0.0, sr = 0.0, sc = 0.0;
  for (const auto& row : table) {
    for (double v : row) index += c2(v);
  }
  for (double v : rows) sr += c2(v);
  for (double v : cols) sc += c2(v);
  const double total = c2(static_cast<double>(a.size()));
  const double expected = total > 0.0 ? sr * sc / total : 0.0;
  const double max_index = 0.5 * (sr + sc);
  if (max_index == expected) return 1.0;  // both labelings trivial and identical up to naming
  return (index - expected) / (max_index - expected);
}

inline double homogeneity(const std::vector<int>& truth, const std::vector<int>& pred) {
  if (truth.size() != pred.size()) throw ShapeError("homogeneity: labelings differ in length");
  if (truth.empty()) throw DataError("homogeneity: no points");
  std::size_t kt = 0, kp = 0;
  const auto a = detail::dense_labels(truth, &kt);
  const auto b = detail::dense_labels(pred, &kp);
  const double n = static_cast<double>(a.size());
  std::vector<std::vector<double>> table(kt, std::vector<double>(kp, 0.0));
  std::vector<double> rows(kt, 0.0), cols(kp, 0.0);
  for (std::size_t i = 0; i < a.size(); ++i) {
    table[a[i]][b[i]] += 1.0;
    rows[a[i]] += 1.0;
    cols[b[i]] += 1.0;
  }
  double h_c = 0.0;
  for (double r : rows) h_c -= r / n * std::log(r / n);
  if (h_c == 0.0) return 1.0;
  double h_ck = 0.0;
  for (std::size_t c = 0; c < kt; ++c) {
    for (std::size_t k = 0; k < kp; ++k) {
      const double v = table[c][k];
      if (v > 0.0) h_ck -= v / n * std::log(v / cols[k]);
    }
  }
  return 1.0 - h_ck / h_c;
}

struct KMeansResult {
  std::vector<int> assignment;
  Matrix centroids;
  double inertia = 0.0;
};

inline KMeansResult kmeans(const Matrix& x, std::size_t k, std::uint64_t seed, std::size_t restarts = 10,
                           std::size_t max_iter = 300) {
  if (k == 0 || x.size() < k) {
    throw DataError(detail::concat("k-means: ", x.size(), " points cannot form ", k, " clusters"));
  }
  const std::size_t n = x.size();
  KMeansResult best;
  best.inertia = std::numeric_limits<double>::infinity();
  for (std::size_t r = 0; r < restarts; ++r) {
    Rng rng(mix_seed(seed, r));
    Matrix c;
    c.push_back(x[rng.index(n)]);
    std::vector<double> d2(n);
    while (c.size() < k) {
      double total = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        double m = std::numeric_limits<double>::infinity();
        for (const auto& cc : c) m = std::min(m, squared_euclidean(x[i], cc));
        d2[i] = m;
        total += m;
      }
      std::size_t pick = n - 1;
      if (total > 0.0) {
        double u = rng.uniform() * total;
        for (std::size_t i = 0; i < n; ++i) {
          if (u < d2[i]) {
            pick = i;
            break;
          }
          u -= d2[i];
        }
      } else {
        pick = rng.index(n);
      }
      c.push_back(x[pick]);
    }
    std::vector<int> assign(n, -1);
    for (std::size_t it = 0; it < max_iter; ++it) {
      bool changed = false;
      for (std::size_t i = 0; i < n; ++i) {
        int arg = 0;
        double m = squared_euclidean(x[i], c[0]);
        for (std::size_t j = 1; j < k; ++j) {
          const double d = squared_euclidean(x[i], c[j]);
          if (d < m) {
            m = d;
            arg = static_cast<int>(j);
          }
        }
        if (assign[i] != arg) {
          assign[i] = arg;
          changed = true;
        }
      }
      if (!changed) break;
      Matrix sum(k, std::vector<double>(x[0].size(), 0.0));
      std::vector<std::size_t> count(k, 0);
      for (std::size_t i = 0; i < n; ++i) {
        ++count[assign[i]];
        for (std::size_t d = 0; d < x[i].size(); ++d) sum[assign[i]][d] += x[i][d];
      }
      for (std::size_t j = 0; j < k; ++j) {
        if (count[j] == 0) continue;  // empty cluster keeps its centroid
        for (auto& v : sum[j]) v /= static_cast<double>(count[j]);
        c[j] = sum[j];
      }
    }
    double inertia = 0.0;
    for (std::size_t i = 0; i < n; ++i) inertia += squared_euclidean(x[i], c[assign[i]]);
    if (inertia < best.inertia) best = {assign, c, inertia};
  }
  return best;
}

inline double knn_accuracy(const Matrix& features, const std::vector<int>& labels) {
  detail::check_features(features, labels);
  if (features.size() < 2) throw DataError("k-NN: need at least 2 points");
  const auto x = l2_normalize(features);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    std::size_t arg = 0;
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < x.size(); ++j) {
      if (j == i) continue;
      double d = 0.0;
      for (std::size_t t = 0; t < x[i].size(); ++t) d += x[i][t] * x[j][t];
      d = 1.0 - d;
      if (d < best) {
        best = d;
        arg = j;
      }
    }
    correct += labels[arg] == labels[i];
  }
  return static_cast<double>(correct) / static_cast<double>(x.size());
}

struct FeatureQuality {
  double silhouette = 0.0;
  double ari = 0.0;
  double homogeneity = 0.0;
  double knn_accuracy = 0.0;
};

/// Clustering uses k = number of distinct labels on L2-normalized features.
inline FeatureQuality feature_quality(const Matrix& features, const std::vector<int>& labels,
                                      std::uint64_t seed = 0) {
  detail::check_features(features, labels);
  std::size_t k = 0;
  detail::dense_labels(labels, &k);
  if (k < 2) throw DataError("feature_quality: need at least 2 classes");
  if (features.size() < k) throw DataError("feature_quality: fewer points than clusters");
  FeatureQuality q;
  q.silhouette = silhouette(features, labels);
  const auto clusters = kmeans(l2_normalize(features), k, seed);
  q.ari = adjusted_rand_index(labels, clusters.assignment);
  q.homogeneity = homogeneity(labels, clusters.assignment);
  q.knn_accuracy = knn_accuracy(features, labels);
  return q;
}

}  // namespace svt
