#include "circfp/classifier.hpp"

#include <algorithm>
#include <limits>
#include <numeric>
#include <stdexcept>

namespace circfp {

namespace {

struct Split {
  int feature = -1;
  double threshold = 0.0;
  double impurity = std::numeric_limits<double>::infinity();
};

double gini(std::span<const double> counts, double n) {
  if (n <= 0) return 0.0;
  double s = 1.0;
  for (double c : counts) s -= (c / n) * (c / n);
  return s;
}

class TreeBuilder {
 public:
  TreeBuilder(std::size_t width, const std::vector<double>& x, const std::vector<int>& y,
              std::size_t n_classes, const TreeParams& params)
      : width_(width), x_(x), y_(y), k_(n_classes), params_(params), ternary_(width, true) {
    const std::size_t n = y.size();
    for (std::size_t j = 0; j < width_; ++j)
      for (std::size_t i = 0; i < n && ternary_[j]; ++i) {
        const double v = at(i, j);
        ternary_[j] = v == -1.0 || v == 0.0 || v == 1.0;
      }
  }

  template <class Node>
  int build(std::vector<std::size_t>& idx, unsigned depth, std::vector<Node>& nodes,
            const std::vector<int>& class_labels) {
    std::vector<double> counts(k_, 0.0);
    for (auto i : idx) counts[y_[i]] += 1.0;
    const int node_id = static_cast<int>(nodes.size());
    nodes.push_back({});
    nodes[node_id].label = class_labels[majority(counts)];

    const double n = static_cast<double>(idx.size());
    const double parent = gini(counts, n);
    if (depth >= params_.max_depth || idx.size() < 2 * static_cast<std::size_t>(params_.min_leaf) ||
        parent == 0.0)
      return node_id;

    Split best;
    for (std::size_t j = 0; j < width_; ++j) {
      Split s = ternary_[j] ? best_ternary(idx, j, counts) : best_sorted(idx, j, counts);
      if (s.impurity < best.impurity) best = s;
    }
    if (best.feature < 0 || !(best.impurity < parent - 1e-12)) return node_id;

    std::vector<std::size_t> left, right;
    for (auto i : idx) (at(i, best.feature) <= best.threshold ? left : right).push_back(i);
    idx.clear();
    idx.shrink_to_fit();
    nodes[node_id].feature = best.feature;
    nodes[node_id].threshold = best.threshold;
    const int l = build(left, depth + 1, nodes, class_labels);
    const int r = build(right, depth + 1, nodes, class_labels);
    nodes[node_id].left = l;
    nodes[node_id].right = r;
    return node_id;
  }

 private:
  double at(std::size_t i, std::size_t j) const { return x_[i * width_ + j]; }

  /// Highest count wins; ties go to the larger class index.
  static std::size_t majority(const std::vector<double>& counts) {
    std::size_t best = 0;
    for (std::size_t c = 1; c < counts.size(); ++c)
      if (counts[c] >= counts[best]) best = c;
    return best;
  }

  bool leaf_ok(double nl, double nr) const {
    return nl >= params_.min_leaf && nr >= params_.min_leaf;
  }

  double weighted(const std::vector<double>& left, const std::vector<double>& total, double nl,
                  double n) const {
    std::vector<double> right(k_);
    for (std::size_t c = 0; c < k_; ++c) right[c] = total[c] - left[c];
    return (nl * gini(left, nl) + (n - nl) * gini(right, n - nl)) / n;
  }

  Split best_ternary(const std::vector<std::size_t>& idx, std::size_t j,
                     const std::vector<double>& total) const {
    std::vector<double> by_value(3 * k_, 0.0);
    for (auto i : idx) by_value[static_cast<std::size_t>(at(i, j) + 1.0) * k_ + y_[i]] += 1.0;
    const double n = static_cast<double>(idx.size());
    Split best;
    std::vector<double> left(k_, 0.0);
    double nl = 0.0;
    for (int v = 0; v < 2; ++v) {
      for (std::size_t c = 0; c < k_; ++c) {
        left[c] += by_value[v * k_ + c];
        nl += by_value[v * k_ + c];
      }
      if (!leaf_ok(nl, n - nl)) continue;
      const double imp = weighted(left, total, nl, n);
      if (imp < best.impurity) best = {static_cast<int>(j), v - 0.5, imp};
    }
    return best;
  }

  Split best_sorted(const std::vector<std::size_t>& idx, std::size_t j,
                    const std::vector<double>& total) const {
    std::vector<std::pair<double, int>> v;
    v.reserve(idx.size());
    for (auto i : idx) v.emplace_back(at(i, j), y_[i]);
    std::sort(v.begin(), v.end());
    const double n = static_cast<double>(v.size());
    Split best;
    std::vector<double> left(k_, 0.0);
    for (std::size_t m = 0; m + 1 < v.size(); ++m) {
      left[v[m].second] += 1.0;
      if (v[m].first == v[m + 1].first) continue;
      const double nl = static_cast<double>(m + 1);
      if (!leaf_ok(nl, n - nl)) continue;
      const double imp = weighted(left, total, nl, n);
      if (imp < best.impurity) best = {static_cast<int>(j), 0.5 * (v[m].first + v[m + 1].first), imp};
    }
    return best;
  }

  std::size_t width_;
  const std::vector<double>& x_;
  const std::vector<int>& y_;
  std::size_t k_;
  TreeParams params_;
  std::vector<bool> ternary_;
};

}  // namespace

std::string_view classifier_name(ClassifierKind k) noexcept {
  return k == ClassifierKind::DecisionTree ? "tree" : "knn";
}

std::optional<ClassifierKind> parse_classifier(std::string_view s) noexcept {
  if (s == "tree") return ClassifierKind::DecisionTree;
  if (s == "knn") return ClassifierKind::NearestNeighbor;
  return std::nullopt;
}

void Model::encode(const FeatureVector& f, std::vector<double>& out) const {
  out.clear();
  if (use_duration_) out.push_back(f.duration);
  for (std::size_t i = 0; i < width_ - (use_duration_ ? 1 : 0); ++i)
    out.push_back(i < f.cell_seq.size() ? f.cell_seq[i] : 0.0);
}

int Model::predict(const FeatureVector& f) const {
  if (constant_) return *constant_;
  std::vector<double> x;
  encode(f, x);
  if (kind_ == ClassifierKind::DecisionTree) {
    int node = 0;
    while (nodes_[node].feature >= 0)
      node = x[nodes_[node].feature] <= nodes_[node].threshold ? nodes_[node].left : nodes_[node].right;
    return nodes_[node].label;
  }
  double best = std::numeric_limits<double>::infinity();
  int label = train_y_.front();
  for (std::size_t r = 0; r < train_y_.size(); ++r) {
    const double* row = &train_x_[r * width_];
    double d = 0.0;
    for (std::size_t j = 0; j < width_ && d < best; ++j) {
      const double diff = row[j] - x[j];
      d += diff * diff;
    }
    if (d < best) {
      best = d;
      label = train_y_[r];
    }
  }
  return label;
}

std::vector<int> Model::predict(std::span<const FeatureVector> rows) const {
  std::vector<int> out;
  out.reserve(rows.size());
  for (const auto& r : rows) out.push_back(predict(r));
  return out;
}

Model train_classifier(ClassifierKind kind, std::span<const FeatureVector> train,
                       const ClassifierParams& params) {
  if (train.empty()) throw std::invalid_argument("training set is empty");
  Model m;
  m.kind_ = kind;
  m.use_duration_ = params.use_duration;
  m.n_train_ = train.size();
  std::size_t len = 0;
  for (const auto& f : train) len = std::max(len, f.cell_seq.size());
  m.width_ = len + (params.use_duration ? 1 : 0);
  if (m.width_ == 0) m.width_ = 1, m.use_duration_ = true;

  std::vector<int> labels;
  for (const auto& f : train) labels.push_back(f.label);
  std::vector<int> classes = labels;
  std::sort(classes.begin(), classes.end());
  classes.erase(std::unique(classes.begin(), classes.end()), classes.end());
  if (classes.size() == 1) {
    m.constant_ = classes.front();
    return m;
  }

  std::vector<double> x;
  x.reserve(train.size() * m.width_);
  std::vector<double> row;
  for (const auto& f : train) {
    m.encode(f, row);
    x.insert(x.end(), row.begin(), row.end());
  }

  if (kind == ClassifierKind::NearestNeighbor) {
    m.train_x_ = std::move(x);
    m.train_y_ = std::move(labels);
    return m;
  }

  std::vector<int> y;
  y.reserve(labels.size());
  for (int l : labels)
    y.push_back(static_cast<int>(std::lower_bound(classes.begin(), classes.end(), l) - classes.begin()));
  std::vector<std::size_t> idx(train.size());
  std::iota(idx.begin(), idx.end(), 0);
  TreeBuilder builder(m.width_, x, y, classes.size(), params.tree);
  builder.build(idx, 0, m.nodes_, classes);
  return m;
}

ClassifierReport evaluate_predictions(std::span<const int> predicted, std::span<const int> truth,
                                      int positive, std::size_t n_train) {
  if (predicted.size() != truth.size()) throw std::invalid_argument("prediction/truth size mismatch");
  if (truth.empty()) throw std::invalid_argument("test set is empty");
  double tp = 0, fp = 0, tn = 0, fn = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    const bool p = predicted[i] == positive;
    const bool t = truth[i] == positive;
    if (t)
      ++(p ? tp : fn);
    else
      ++(p ? fp : tn);
  }
  ClassifierReport r;
  const double n = static_cast<double>(truth.size());
  r.n_test = truth.size();
  r.n_train = n_train;
  double correct = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) correct += predicted[i] == truth[i];
  r.accuracy = correct / n;
  r.tpr = tp + fn > 0 ? tp / (tp + fn) : 0.0;
  r.fpr = fp + tn > 0 ? fp / (fp + tn) : 0.0;
  if (tp + fp > 0) r.precision = tp / (tp + fp);
  const double c = (n - (tp + fn)) / n;
  r.leakage = r.accuracy - std::max(c, 1.0 - c);
  return r;
}

ClassifierReport evaluate(const Model& model, std::span<const FeatureVector> test, int positive) {
  std::vector<int> truth;
  truth.reserve(test.size());
  for (const auto& f : test) truth.push_back(f.label);
  const auto predicted = model.predict(test);
  return evaluate_predictions(predicted, truth, positive, model.n_train());
}

}  // namespace circfp
