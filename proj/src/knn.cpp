// SPDX-License-Identifier: Apache-2.0
#include "cellgrade/knn.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "cellgrade/errors.hpp"

namespace cellgrade::knn {

DistanceMetric DistanceMetric::minkowski(double p) {
  if (!(p >= 1.0)) {
    throw ConfigError("minkowski exponent must be >= 1, got " + std::to_string(p));
  }
  return {Kind::minkowski, p};
}

DistanceMetric DistanceMetric::parse(std::string_view name, double p) {
  if (name == "euclidean") return euclidean();
  if (name == "manhattan") return manhattan();
  if (name == "hamming") return hamming();
  if (name == "minkowski") return minkowski(p);
  throw ConfigError("unknown metric '" + std::string(name) + "'");
}

std::string_view DistanceMetric::name() const {
  switch (kind) {
    case Kind::euclidean: return "euclidean";
    case Kind::manhattan: return "manhattan";
    case Kind::hamming: return "hamming";
    case Kind::minkowski: return "minkowski";
  }
  return "?";
}

double distance(const DistanceMetric& metric, std::span<const double> a,
                std::span<const double> b) {
  if (a.size() != b.size() || a.empty()) {
    throw ShapeError("distance between vectors of dims " + std::to_string(a.size()) +
                     " and " + std::to_string(b.size()));
  }
  const std::size_t n = a.size();
  double acc = 0.0;
  switch (metric.kind) {
    case DistanceMetric::Kind::euclidean:
      for (std::size_t i = 0; i < n; ++i) {
        const double d = b[i] - a[i];
        acc += d * d;
      }
      return std::sqrt(acc);
    case DistanceMetric::Kind::manhattan:
      for (std::size_t i = 0; i < n; ++i) acc += std::abs(b[i] - a[i]);
      return acc;
    case DistanceMetric::Kind::hamming:
      for (std::size_t i = 0; i < n; ++i) acc += a[i] != b[i] ? 1.0 : 0.0;
      return acc;
    case DistanceMetric::Kind::minkowski:
      if (!(metric.p >= 1.0)) {
        throw ConfigError("minkowski exponent must be >= 1");
      }
      for (std::size_t i = 0; i < n; ++i) acc += std::pow(std::abs(b[i] - a[i]), metric.p);
      return std::pow(acc, 1.0 / metric.p);
  }
  return acc;
}

FeatureMatrix FeatureMatrix::from_vectors(
    std::span<const imaging::FeatureVector> rows) {
  if (rows.empty()) return {};
  FeatureMatrix m(rows.front().dims());
  for (const auto& r : rows) {
    if (r.kind != rows.front().kind) {
      throw ConfigError("feature matrix mixes feature kinds");
    }
    m.append(r.values);
  }
  return m;
}

void FeatureMatrix::append(std::span<const double> row) {
  if (dims_ == 0) dims_ = row.size();
  if (row.size() != dims_ || dims_ == 0) {
    throw ShapeError("feature row has dims " + std::to_string(row.size()) +
                     ", matrix has " + std::to_string(dims_));
  }
  values_.insert(values_.end(), row.begin(), row.end());
}

FeatureMatrix FeatureMatrix::select(std::span<const std::size_t> indices) const {
  FeatureMatrix out(dims_);
  out.values_.reserve(indices.size() * dims_);
  for (auto i : indices) out.append(row(i));
  return out;
}

FeatureMatrix FeatureMatrix::scaled(double s) const {
  FeatureMatrix out = *this;
  for (auto& v : out.values_) v *= s;
  return out;
}

KnnModel::KnnModel(FeatureMatrix features, std::vector<ClassId> labels,
                   std::size_t k, DistanceMetric metric)
    : features_(std::move(features)),
      labels_(std::move(labels)),
      k_(k),
      metric_(metric) {
  if (features_.rows() != labels_.size()) {
    throw ConfigError("kNN model has " + std::to_string(features_.rows()) +
                      " rows but " + std::to_string(labels_.size()) + " labels");
  }
  if (k_ < 1 || k_ > labels_.size()) {
    throw ConfigError("k = " + std::to_string(k_) + " needs 1 <= k <= N = " +
                      std::to_string(labels_.size()));
  }
  if (metric_.kind == DistanceMetric::Kind::minkowski && !(metric_.p >= 1.0)) {
    throw ConfigError("minkowski exponent must be >= 1");
  }
}

NeighborSet KnnModel::k_nearest(std::span<const double> query) const {
  return k_nearest(query, k_);
}

NeighborSet KnnModel::k_nearest(std::span<const double> query,
                                std::size_t k) const {
  if (k < 1 || k > labels_.size()) {
    throw ConfigError("k = " + std::to_string(k) + " needs 1 <= k <= N = " +
                      std::to_string(labels_.size()));
  }
  if (query.size() != dims()) {
    throw ShapeError("query has dims " + std::to_string(query.size()) +
                     ", model has " + std::to_string(dims()));
  }
  NeighborSet all(labels_.size());
  for (std::size_t i = 0; i < labels_.size(); ++i) {
    all[i] = {i, distance(metric_, features_.row(i), query), labels_[i]};
  }
  const auto before = [](const Neighbor& a, const Neighbor& b) {
    return a.distance < b.distance ||
           (a.distance == b.distance && a.index < b.index);
  };
  std::partial_sort(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(k),
                    all.end(), before);
  all.resize(k);
  return all;
}

ClassId KnnModel::classify(std::span<const double> query) const {
  return predict(k_nearest(query));
}

ClassId predict(const NeighborSet& neighbors) {
  if (neighbors.empty()) throw ConfigError("predict on an empty neighbour set");
  std::array<std::size_t, kNumClasses> counts{};
  std::array<std::size_t, kNumClasses> first_seen;
  first_seen.fill(neighbors.size());
  for (std::size_t i = 0; i < neighbors.size(); ++i) {
    const auto c = static_cast<std::size_t>(neighbors[i].label);
    ++counts[c];
    first_seen[c] = std::min(first_seen[c], i);
  }
  std::size_t best = 0;
  for (std::size_t c = 1; c < kNumClasses; ++c) {
    if (counts[c] > counts[best] ||
        (counts[c] == counts[best] && first_seen[c] < first_seen[best])) {
      best = c;
    }
  }
  return static_cast<ClassId>(best);
}

std::array<double, kNumClasses> class_probabilities(const NeighborSet& neighbors) {
  if (neighbors.empty()) {
    throw ConfigError("class probabilities of an empty neighbour set");
  }
  std::array<std::size_t, kNumClasses> counts{};
  for (const auto& n : neighbors) ++counts[static_cast<std::size_t>(n.label)];
  std::array<double, kNumClasses> p{};
  for (std::size_t c = 0; c < kNumClasses; ++c) {
    p[c] = static_cast<double>(counts[c]) / static_cast<double>(neighbors.size());
  }
  return p;
}

namespace {

void check_labels(const FeatureMatrix& features, std::span<const ClassId> labels) {
  if (features.rows() != labels.size()) {
    throw ConfigError("feature matrix has " + std::to_string(features.rows()) +
                      " rows but " + std::to_string(labels.size()) + " labels");
  }
}

std::vector<CvReport> sweep_on_folds(const FeatureMatrix& features,
                                     std::span<const ClassId> labels,
                                     std::span<const std::size_t> k_values,
                                     const data::FoldAssignment& folds,
                                     const DistanceMetric& metric) {
  check_labels(features, labels);
  if (k_values.empty()) throw ConfigError("k sweep needs at least one k");
  if (folds.folds < 2) throw ConfigError("cross-validation needs at least 2 folds");
  const std::size_t k_max = *std::max_element(k_values.begin(), k_values.end());
  if (*std::min_element(k_values.begin(), k_values.end()) < 1) {
    throw ConfigError("every k must be >= 1");
  }

  std::vector<CvReport> reports(k_values.size());
  for (std::size_t j = 0; j < k_values.size(); ++j) {
    reports[j].k = k_values[j];
    reports[j].fold_hash = folds.hash();
  }

  for (std::size_t f = 0; f < folds.folds; ++f) {
    const auto train_idx = folds.complement(f);
    const auto test_idx = folds.members(f);
    if (train_idx.size() < k_max) {
      throw ConfigError("fold " + std::to_string(f) + " leaves " +
                        std::to_string(train_idx.size()) +
                        " training samples, fewer than k = " + std::to_string(k_max));
    }
    if (test_idx.empty()) {
      throw ConfigError("fold " + std::to_string(f) + " is empty");
    }
    std::vector<ClassId> train_labels;
    train_labels.reserve(train_idx.size());
    for (auto i : train_idx) train_labels.push_back(labels[i]);
    const KnnModel model(features.select(train_idx), std::move(train_labels),
                         k_max, metric);

    std::vector<std::size_t> correct(k_values.size(), 0);
    for (auto q : test_idx) {
      const NeighborSet all = model.k_nearest(features.row(q), k_max);
      for (std::size_t j = 0; j < k_values.size(); ++j) {
        const NeighborSet prefix(all.begin(),
                                 all.begin() + static_cast<std::ptrdiff_t>(k_values[j]));
        if (predict(prefix) == labels[q]) ++correct[j];
      }
    }
    for (std::size_t j = 0; j < k_values.size(); ++j) {
      reports[j].fold_accuracies.push_back(static_cast<double>(correct[j]) /
                                           static_cast<double>(test_idx.size()));
    }
  }

  for (auto& r : reports) {
    double sum = 0.0;
    for (double a : r.fold_accuracies) sum += a;
    r.mean_accuracy = sum / static_cast<double>(r.fold_accuracies.size());
  }
  return reports;
}

}  // namespace

CvReport cross_validate(const FeatureMatrix& features,
                        std::span<const ClassId> labels, std::size_t k,
                        const data::FoldAssignment& folds,
                        const DistanceMetric& metric) {
  const std::size_t ks[] = {k};
  return sweep_on_folds(features, labels, ks, folds, metric).front();
}

CvReport cross_validate(const FeatureMatrix& features,
                        std::span<const ClassId> labels, std::size_t k,
                        std::size_t folds, const DistanceMetric& metric,
                        std::uint64_t seed) {
  check_labels(features, labels);
  return cross_validate(features, labels, k,
                        data::stratified_folds(labels, folds, seed), metric);
}

std::vector<CvReport> k_sweep(const FeatureMatrix& features,
                              std::span<const ClassId> labels,
                              std::span<const std::size_t> k_values,
                              std::size_t folds, const DistanceMetric& metric,
                              std::uint64_t seed) {
  check_labels(features, labels);
  return sweep_on_folds(features, labels, k_values,
                        data::stratified_folds(labels, folds, seed), metric);
}

}  // namespace cellgrade::knn
