#pragma once
/** @file classifier.hpp
 *  @brief CART tree and 1-NN over circuit features, and confusion-matrix reports. */

#include <cstdint>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "circfp/adversary.hpp"

namespace circfp {

enum class ClassifierKind : std::uint8_t { DecisionTree, NearestNeighbor };

std::string_view classifier_name(ClassifierKind k) noexcept;
std::optional<ClassifierKind> parse_classifier(std::string_view s) noexcept;

struct TreeParams {
  unsigned max_depth = 20;
  unsigned min_leaf = 5;
};

struct ClassifierParams {
  TreeParams tree;
  bool use_duration = true;
};

class Model {
 public:
  int predict(const FeatureVector& f) const;
  std::vector<int> predict(std::span<const FeatureVector> rows) const;

  ClassifierKind kind() const noexcept { return kind_; }
  /// True when training saw a single class; the model then predicts that class.
  bool degenerate() const noexcept { return constant_.has_value(); }
  std::size_t n_train() const noexcept { return n_train_; }
  std::size_t node_count() const noexcept { return nodes_.size(); }

 private:
  friend Model train_classifier(ClassifierKind, std::span<const FeatureVector>,
                                const ClassifierParams&);
  struct Node {
    int feature = -1;  ///< -1 marks a leaf
    double threshold = 0.0;
    int left = -1;
    int right = -1;
    int label = 0;
  };

  void encode(const FeatureVector& f, std::vector<double>& out) const;

  ClassifierKind kind_ = ClassifierKind::DecisionTree;
  bool use_duration_ = true;
  std::size_t width_ = 0;
  std::size_t n_train_ = 0;
  std::optional<int> constant_;
  std::vector<Node> nodes_;
  std::vector<double> train_x_;  ///< 1-NN rows, row-major
  std::vector<int> train_y_;
};

/// Throws std::invalid_argument for an empty training set.
Model train_classifier(ClassifierKind kind, std::span<const FeatureVector> train,
                       const ClassifierParams& params);

struct ClassifierReport {
  double accuracy = 0.0;
  double tpr = 0.0;
  double fpr = 0.0;
  std::optional<double> precision;  ///< empty when nothing was predicted positive
  double leakage = 0.0;             ///< accuracy - max(c, 1-c), c = negative fraction of the test set
  std::size_t n_train = 0;
  std::size_t n_test = 0;
};

ClassifierReport evaluate_predictions(std::span<const int> predicted, std::span<const int> truth,
                                      int positive, std::size_t n_train);

ClassifierReport evaluate(const Model& model, std::span<const FeatureVector> test, int positive);

}  // namespace circfp
