// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "cellgrade/data.hpp"
#include "cellgrade/imaging.hpp"
#include "cellgrade/labels.hpp"

namespace cellgrade::knn {

struct DistanceMetric {
  enum class Kind { euclidean, manhattan, hamming, minkowski };

  Kind kind = Kind::euclidean;
  double p = 2.0;  // minkowski only

  static DistanceMetric euclidean() { return {Kind::euclidean, 2.0}; }
  static DistanceMetric manhattan() { return {Kind::manhattan, 1.0}; }
  static DistanceMetric hamming() { return {Kind::hamming, 0.0}; }
  // Throws ConfigError for p < 1 (not a metric).
  static DistanceMetric minkowski(double p);

  static DistanceMetric parse(std::string_view name, double p = 2.0);
  std::string_view name() const;
};

// Hamming counts positions with a != b exactly; it is meant for binary
// features and applies no thresholding.
double distance(const DistanceMetric& metric, std::span<const double> a,
                std::span<const double> b);

// Row-major N x D feature matrix with one label per row.
class FeatureMatrix {
 public:
  FeatureMatrix() = default;
  FeatureMatrix(std::size_t dims) : dims_(dims) {}
  static FeatureMatrix from_vectors(std::span<const imaging::FeatureVector> rows);

  void append(std::span<const double> row);
  std::size_t rows() const { return dims_ ? values_.size() / dims_ : 0; }
  std::size_t dims() const { return dims_; }
  std::span<const double> row(std::size_t i) const {
    return {values_.data() + i * dims_, dims_};
  }
  // Rows at the given indices, in that order.
  FeatureMatrix select(std::span<const std::size_t> indices) const;
  // Every value multiplied by s.
  FeatureMatrix scaled(double s) const;

 private:
  std::size_t dims_ = 0;
  std::vector<double> values_;
};

struct Neighbor {
  std::size_t index;
  double distance;
  ClassId label;
};

// Sorted ascending by (distance, index); length == k.
using NeighborSet = std::vector<Neighbor>;

// The training data is the model. Immutable once built.
class KnnModel {
 public:
  KnnModel(FeatureMatrix features, std::vector<ClassId> labels, std::size_t k,
           DistanceMetric metric);

  std::size_t size() const { return labels_.size(); }
  std::size_t dims() const { return features_.dims(); }
  std::size_t k() const { return k_; }
  const DistanceMetric& metric() const { return metric_; }

  // Exact search: the k smallest (distance, index) pairs.
  NeighborSet k_nearest(std::span<const double> query) const;
  NeighborSet k_nearest(std::span<const double> query, std::size_t k) const;
  ClassId classify(std::span<const double> query) const;

 private:
  FeatureMatrix features_;
  std::vector<ClassId> labels_;
  std::size_t k_;
  DistanceMetric metric_;
};

// Modal label; a tie goes to the tied class whose nearest member is closest.
ClassId predict(const NeighborSet& neighbors);

// count(c) / k for each class.
std::array<double, kNumClasses> class_probabilities(const NeighborSet& neighbors);

struct CvReport {
  std::size_t k = 0;
  std::vector<double> fold_accuracies;
  double mean_accuracy = 0.0;
  std::uint64_t fold_hash = 0;
};

CvReport cross_validate(const FeatureMatrix& features,
                        std::span<const ClassId> labels, std::size_t k,
                        const data::FoldAssignment& folds,
                        const DistanceMetric& metric);

CvReport cross_validate(const FeatureMatrix& features,
                        std::span<const ClassId> labels, std::size_t k,
                        std::size_t folds, const DistanceMetric& metric,
                        std::uint64_t seed);

// One report per k, all on the same fold assignment. Neighbours are searched
// once per query for max(k) and every smaller k is scored on the prefix, which
// gives exactly what separate cross_validate calls would.
std::vector<CvReport> k_sweep(const FeatureMatrix& features,
                              std::span<const ClassId> labels,
                              std::span<const std::size_t> k_values,
                              std::size_t folds, const DistanceMetric& metric,
                              std::uint64_t seed);

}  // namespace cellgrade::knn
