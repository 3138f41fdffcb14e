#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "error.hpp"
#include "features.hpp"
#include "parallel.hpp"
#include "random.hpp"

namespace setmap {

enum class ModelKind { Logistic, LinearSvm, RandomForest };

inline std::string to_string(ModelKind k) {
    switch (k) {
    case ModelKind::Logistic: return "logistic";
    case ModelKind::LinearSvm: return "linear_svm";
    case ModelKind::RandomForest: return "random_forest";
    }
    return "unknown";
}

inline ModelKind parse_model_kind(const std::string& s) {
    for (auto k : {ModelKind::Logistic, ModelKind::LinearSvm, ModelKind::RandomForest})
        if (to_string(k) == s) return k;
    fail(ErrorCode::InvalidArgument, "unknown model kind '" + s + "'");
}

struct ForestParams {
    std::size_t n_trees = 800;
    std::size_t max_depth = 12;
    std::size_t min_samples_leaf = 2;
    std::size_t min_samples_split = 15;
    std::size_t features_per_split = 8; // round(sqrt(66))
    bool bootstrap = true;
};

struct LinearParams {
    double l2_lambda = 1e-4;
    double learning_rate = 0.1;
    std::size_t epochs = 100;
    double svm_c = 1.0;
};

struct ModelSpec {
    ModelKind kind = ModelKind::RandomForest;
    ForestParams forest;
    LinearParams linear;
    std::uint64_t seed = 0;

    void validate() const {
        if (kind == ModelKind::RandomForest) {
            const auto& f = forest;
            if (f.n_trees == 0 || f.max_depth == 0 || f.min_samples_leaf == 0 || f.min_samples_split == 0 ||
                f.features_per_split == 0)
                fail(ErrorCode::InvalidArgument, "random forest counts must be positive");
        } else {
            const auto& l = linear;
            if (l.epochs == 0 || !(l.learning_rate > 0.0) || l.l2_lambda < 0.0 || !(l.svm_c > 0.0))
                fail(ErrorCode::InvalidArgument, "linear model hyperparameters out of range");
        }
    }
};

inline nlohmann::json spec_to_json(const ModelSpec& s) {
    nlohmann::json j;
    j["kind"] = to_string(s.kind);
    j["seed"] = s.seed;
    if (s.kind == ModelKind::RandomForest) {
        j["n_trees"] = s.forest.n_trees;
        j["max_depth"] = s.forest.max_depth;
        j["min_samples_leaf"] = s.forest.min_samples_leaf;
        j["min_samples_split"] = s.forest.min_samples_split;
        j["criterion"] = "gini";
        j["features_per_split"] = s.forest.features_per_split;
        j["bootstrap"] = s.forest.bootstrap;
    } else {
        j["l2_lambda"] = s.linear.l2_lambda;
        j["learning_rate"] = s.linear.learning_rate;
        j["epochs"] = s.linear.epochs;
        if (s.kind == ModelKind::LinearSvm) j["svm_c"] = s.linear.svm_c;
    }
    return j;
}

/// Missing keys keep their defaults.
inline ModelSpec spec_from_json(const nlohmann::json& j) {
    ModelSpec s;
    try {
        s.kind = parse_model_kind(j.at("kind").get<std::string>());
        s.seed = j.value("seed", s.seed);
        auto& f = s.forest;
        f.n_trees = j.value("n_trees", f.n_trees);
        f.max_depth = j.value("max_depth", f.max_depth);
        f.min_samples_leaf = j.value("min_samples_leaf", f.min_samples_leaf);
        f.min_samples_split = j.value("min_samples_split", f.min_samples_split);
        f.features_per_split = j.value("features_per_split", f.features_per_split);
        f.bootstrap = j.value("bootstrap", f.bootstrap);
        if (j.contains("criterion") && j["criterion"] != "gini")
            fail(ErrorCode::InvalidArgument, "only the gini criterion is supported");
        auto& l = s.linear;
        l.l2_lambda = j.value("l2_lambda", l.l2_lambda);
        l.learning_rate = j.value("learning_rate", l.learning_rate);
        l.epochs = j.value("epochs", l.epochs);
        l.svm_c = j.value("svm_c", l.svm_c);
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorCode::InvalidArgument, std::string("malformed model spec: ") + e.what());
    }
    s.validate();
    return s;
}

// ---------------------------------------------------------------------------
// Training data

/// Column-major design matrix with 0/1 labels.
struct TrainingData {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> x; // x[col * rows + row]
    std::vector<std::uint8_t> y;

    double at(std::size_t row, std::size_t col) const { return x[col * rows + row]; }
    std::size_t positives() const { return static_cast<std::size_t>(std::count(y.begin(), y.end(), 1)); }
};

inline TrainingData make_training_data(const FeatureTable& table, std::span<const std::size_t> row_indices) {
    TrainingData d;
    d.rows = row_indices.size();
    d.cols = kFeatureCount;
    d.x.resize(d.rows * d.cols);
    d.y.resize(d.rows);
    for (std::size_t i = 0; i < d.rows; ++i) {
        const auto& r = table.at(row_indices[i]);
        d.y[i] = static_cast<std::uint8_t>(r.label);
        for (std::size_t f = 0; f < d.cols; ++f) d.x[f * d.rows + i] = r.features[f];
    }
    return d;
}

inline TrainingData make_training_data(const FeatureTable& table) {
    std::vector<std::size_t> all(table.size());
    for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
    return make_training_data(table, all);
}

inline void check_training_data(const TrainingData& d) {
    if (d.rows == 0) fail(ErrorCode::InvalidArgument, "empty training set");
    if (d.x.size() != d.rows * d.cols || d.y.size() != d.rows)
        fail(ErrorCode::InvalidArgument, "training matrix shape mismatch");
    for (double v : d.x)
        if (!std::isfinite(v)) fail(ErrorCode::NonFinite, "non-finite training feature");
    const auto pos = d.positives();
    if (pos == 0 || pos == d.rows) fail(ErrorCode::SingleClass, "training data must contain both classes");
}

// ---------------------------------------------------------------------------
// Gini split search

/// 1 - p0^2 - p1^2 for a node with `positives` of `n` labels equal to 1.
inline double gini_from_counts(std::size_t n, std::size_t positives) {
    const double p1 = static_cast<double>(positives) / static_cast<double>(n);
    const double p0 = 1.0 - p1;
    return 1.0 - p0 * p0 - p1 * p1;
}

inline double gini_impurity(std::span<const std::uint8_t> labels) {
    if (labels.empty()) fail(ErrorCode::InvalidArgument, "gini impurity of an empty label set");
    return gini_from_counts(labels.size(), static_cast<std::size_t>(std::count(labels.begin(), labels.end(), 1)));
}

/// Weighted gini decrease of splitting (n, positives) into a left child of
/// (left_n, left_positives) and the complement.
inline double split_decrease(std::size_t n, std::size_t positives, std::size_t left_n, std::size_t left_positives) {
    const std::size_t right_n = n - left_n;
    const std::size_t right_positives = positives - left_positives;
    const double weighted = (static_cast<double>(left_n) * gini_from_counts(left_n, left_positives) +
                             static_cast<double>(right_n) * gini_from_counts(right_n, right_positives)) /
                            static_cast<double>(n);
    return gini_from_counts(n, positives) - weighted;
}

/// Gini strictly decreases iff the children's class proportions differ from
/// the parent's; decided on integers so rounding cannot fake a gain.
inline bool split_reduces_impurity(std::size_t n, std::size_t positives, std::size_t left_n,
                                   std::size_t left_positives) {
    return left_positives * n != positives * left_n;
}

struct Split {
    std::size_t feature = 0;
    double threshold = 0.0; // rows with x <= threshold go left
    double decrease = 0.0;
};

/// Best gini split over thresholds at midpoints of consecutive distinct values.
/// Ties keep the lowest feature index, then the lowest threshold. Splits that
/// leave fewer than `min_leaf` rows on either side are not considered.
inline std::optional<Split> find_best_split(const TrainingData& data, std::span<const std::uint32_t> rows,
                                            std::span<const std::size_t> features, std::size_t min_leaf = 1) {
    const std::size_t n = rows.size();
    if (n < 2) return std::nullopt;
    std::size_t positives = 0;
    for (auto r : rows) positives += data.y[r];
    if (positives == 0 || positives == n) return std::nullopt;

    std::vector<std::pair<double, std::uint8_t>> sorted(n);
    std::vector<std::size_t> ordered(features.begin(), features.end());
    std::sort(ordered.begin(), ordered.end());

    std::optional<Split> best;
    for (std::size_t f : ordered) {
        const double* column = data.x.data() + f * data.rows;
        for (std::size_t i = 0; i < n; ++i) sorted[i] = {column[rows[i]], data.y[rows[i]]};
        std::sort(sorted.begin(), sorted.end(),
                  [](const auto& a, const auto& b) { return a.first < b.first; });
        std::size_t left_positives = 0;
        for (std::size_t i = 0; i + 1 < n; ++i) {
            left_positives += sorted[i].second;
            if (!(sorted[i].first < sorted[i + 1].first)) continue;
            const std::size_t left_n = i + 1;
            if (left_n < min_leaf || n - left_n < min_leaf) continue;
            if (!split_reduces_impurity(n, positives, left_n, left_positives)) continue;
            const double gain = split_decrease(n, positives, left_n, left_positives);
            if (!best || gain > best->decrease)
                best = Split{f, (sorted[i].first + sorted[i + 1].first) / 2.0, gain};
        }
    }
    return best;
}

// ---------------------------------------------------------------------------
// Decision trees

/// Flat node arrays; feature < 0 marks a leaf. `value` is the positive
/// fraction of the training rows reaching the node.
struct Tree {
    std::vector<std::int32_t> feature;
    std::vector<double> threshold;
    std::vector<std::int32_t> left;
    std::vector<std::int32_t> right;
    std::vector<double> value;

    std::size_t size() const { return feature.size(); }

    double predict(const double* x) const {
        std::size_t node = 0;
        while (feature[node] >= 0)
            node = static_cast<std::size_t>(x[feature[node]] <= threshold[node] ? left[node] : right[node]);
        return value[node];
    }

    std::size_t depth() const {
        std::size_t deepest = 0;
        std::vector<std::pair<std::size_t, std::size_t>> stack{{0, 0}};
        while (!stack.empty()) {
            auto [node, d] = stack.back();
            stack.pop_back();
            deepest = std::max(deepest, d);
            if (feature[node] >= 0) {
                stack.push_back({static_cast<std::size_t>(left[node]), d + 1});
                stack.push_back({static_cast<std::size_t>(right[node]), d + 1});
            }
        }
        return deepest;
    }

    bool operator==(const Tree&) const = default;
};

namespace detail {

class TreeBuilder {
public:
    TreeBuilder(const TrainingData& data, const ForestParams& params, Rng& rng)
        : data_(data), params_(params), rng_(rng) {}

    Tree build(std::vector<std::uint32_t> rows) {
        rows_ = std::move(rows);
        grow(0, rows_.size(), 0);
        return std::move(tree_);
    }

private:
    std::size_t add_node(double value) {
        tree_.feature.push_back(-1);
        tree_.threshold.push_back(0.0);
        tree_.left.push_back(-1);
        tree_.right.push_back(-1);
        tree_.value.push_back(value);
        return tree_.size() - 1;
    }

    std::vector<std::size_t> candidate_features() {
        const std::size_t d = data_.cols;
        std::vector<std::size_t> all(d);
        for (std::size_t i = 0; i < d; ++i) all[i] = i;
        const std::size_t k = std::min(params_.features_per_split, d);
        if (k == d) return all;
        for (std::size_t i = 0; i < k; ++i) std::swap(all[i], all[i + uniform_index(rng_, d - i)]);
        all.resize(k);
        std::sort(all.begin(), all.end());
        return all;
    }

    std::size_t grow(std::size_t begin, std::size_t end, std::size_t depth) {
        const std::size_t n = end - begin;
        std::size_t positives = 0;
        for (std::size_t i = begin; i < end; ++i) positives += data_.y[rows_[i]];
        const std::size_t node = add_node(static_cast<double>(positives) / static_cast<double>(n));
        if (depth >= params_.max_depth || n < params_.min_samples_split || positives == 0 || positives == n)
            return node;
        const auto features = candidate_features();
        const std::span<const std::uint32_t> span(rows_.data() + begin, n);
        const auto split = find_best_split(data_, span, features, params_.min_samples_leaf);
        if (!split) return node;

        const double* column = data_.x.data() + split->feature * data_.rows;
        const auto mid = std::stable_partition(rows_.begin() + static_cast<std::ptrdiff_t>(begin),
                                               rows_.begin() + static_cast<std::ptrdiff_t>(end),
                                               [&](std::uint32_t r) { return column[r] <= split->threshold; });
        const auto middle = static_cast<std::size_t>(mid - rows_.begin());
        tree_.feature[node] = static_cast<std::int32_t>(split->feature);
        tree_.threshold[node] = split->threshold;
        const std::size_t l = grow(begin, middle, depth + 1);
        tree_.left[node] = static_cast<std::int32_t>(l);
        const std::size_t r = grow(middle, end, depth + 1);
        tree_.right[node] = static_cast<std::int32_t>(r);
        return node;
    }

    const TrainingData& data_;
    const ForestParams& params_;
    Rng& rng_;
    std::vector<std::uint32_t> rows_;
    Tree tree_;
};

} // namespace detail

/// CART tree on all rows (no bootstrap); features_per_split candidates per node.
inline Tree fit_tree(const TrainingData& data, const ForestParams& params, Rng& rng) {
    std::vector<std::uint32_t> rows(data.rows);
    for (std::size_t i = 0; i < data.rows; ++i) rows[i] = static_cast<std::uint32_t>(i);
    return detail::TreeBuilder(data, params, rng).build(std::move(rows));
}

// ---------------------------------------------------------------------------
// Linear models

struct Standardization {
    std::vector<double> mean;
    std::vector<double> scale; // standard deviation, 1 where a column is constant
};

inline Standardization fit_standardization(const TrainingData& d) {
    Standardization s;
    s.mean.resize(d.cols);
    s.scale.resize(d.cols);
    for (std::size_t f = 0; f < d.cols; ++f) {
        const double* col = d.x.data() + f * d.rows;
        double sum = 0.0;
        for (std::size_t i = 0; i < d.rows; ++i) sum += col[i];
        const double mean = sum / static_cast<double>(d.rows);
        double ss = 0.0;
        for (std::size_t i = 0; i < d.rows; ++i) ss += (col[i] - mean) * (col[i] - mean);
        const double sd = std::sqrt(ss / static_cast<double>(d.rows));
        s.mean[f] = mean;
        s.scale[f] = sd > 0.0 ? sd : 1.0;
    }
    return s;
}

/// Row-major standardized design matrix.
struct LinearProblem {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> z;
    std::vector<double> y; // 0/1
};

inline LinearProblem standardize(const TrainingData& d, const Standardization& s) {
    LinearProblem p{d.rows, d.cols, std::vector<double>(d.rows * d.cols), std::vector<double>(d.rows)};
    for (std::size_t i = 0; i < d.rows; ++i) {
        p.y[i] = d.y[i];
        for (std::size_t f = 0; f < d.cols; ++f) p.z[i * d.cols + f] = (d.at(i, f) - s.mean[f]) / s.scale[f];
    }
    return p;
}

inline double sigmoid(double t) {
    if (t >= 0.0) return 1.0 / (1.0 + std::exp(-t));
    const double e = std::exp(t);
    return e / (1.0 + e);
}

/// Mean log-loss plus (lambda / 2) * |w|^2.
inline double logistic_objective(const LinearProblem& p, std::span<const double> w, double b, double lambda) {
    double loss = 0.0;
    for (std::size_t i = 0; i < p.rows; ++i) {
        double t = b;
        for (std::size_t f = 0; f < p.cols; ++f) t += w[f] * p.z[i * p.cols + f];
        // log(1 + e^t) - y t, computed without overflow
        loss += std::max(t, 0.0) + std::log1p(std::exp(-std::abs(t))) - p.y[i] * t;
    }
    double norm = 0.0;
    for (double v : w) norm += v * v;
    return loss / static_cast<double>(p.rows) + 0.5 * lambda * norm;
}

/// Gradient of logistic_objective; grad_w has p.cols entries.
inline void logistic_gradient(const LinearProblem& p, std::span<const double> w, double b, double lambda,
                              std::span<double> grad_w, double& grad_b) {
    std::fill(grad_w.begin(), grad_w.end(), 0.0);
    grad_b = 0.0;
    for (std::size_t i = 0; i < p.rows; ++i) {
        const double* zi = p.z.data() + i * p.cols;
        double t = b;
        for (std::size_t f = 0; f < p.cols; ++f) t += w[f] * zi[f];
        const double residual = sigmoid(t) - p.y[i];
        for (std::size_t f = 0; f < p.cols; ++f) grad_w[f] += residual * zi[f];
        grad_b += residual;
    }
    const double inv_n = 1.0 / static_cast<double>(p.rows);
    for (std::size_t f = 0; f < p.cols; ++f) grad_w[f] = grad_w[f] * inv_n + lambda * w[f];
    grad_b *= inv_n;
}

/// Mean hinge loss (labels mapped to +-1) plus |w|^2 / (2 C n), the usual
/// C-SVM primal divided by C n. Returns a subgradient.
inline void hinge_subgradient(const LinearProblem& p, std::span<const double> w, double b, double c,
                              std::span<double> grad_w, double& grad_b) {
    std::fill(grad_w.begin(), grad_w.end(), 0.0);
    grad_b = 0.0;
    for (std::size_t i = 0; i < p.rows; ++i) {
        const double* zi = p.z.data() + i * p.cols;
        const double sign = p.y[i] > 0.5 ? 1.0 : -1.0;
        double t = b;
        for (std::size_t f = 0; f < p.cols; ++f) t += w[f] * zi[f];
        if (sign * t < 1.0) {
            for (std::size_t f = 0; f < p.cols; ++f) grad_w[f] -= sign * zi[f];
            grad_b -= sign;
        }
    }
    const double n = static_cast<double>(p.rows);
    const double reg = 1.0 / (c * n);
    for (std::size_t f = 0; f < p.cols; ++f) grad_w[f] = grad_w[f] / n + reg * w[f];
    grad_b /= n;
}

// ---------------------------------------------------------------------------
// Artifacts

struct TrainingDigest {
    std::size_t rows = 0;
    std::size_t positives = 0;
    std::size_t negatives = 0;
    bool operator==(const TrainingDigest&) const = default;
};

struct ModelArtifact {
    ModelSpec spec;
    std::vector<std::string> feature_names;
    Standardization standardization; // linear kinds only
    std::vector<double> weights;
    double bias = 0.0;
    std::vector<Tree> trees; // random forest only
    TrainingDigest digest;

    /// Probability for a vector already known to hold kFeatureCount finite values.
    double score(const double* x) const {
        if (spec.kind == ModelKind::RandomForest) {
            double sum = 0.0;
            for (const auto& t : trees) sum += t.predict(x);
            return sum / static_cast<double>(trees.size());
        }
        double t = bias;
        for (std::size_t f = 0; f < weights.size(); ++f)
            t += weights[f] * (x[f] - standardization.mean[f]) / standardization.scale[f];
        return sigmoid(t);
    }
};

inline ModelArtifact fit(const ModelSpec& spec, const TrainingData& data) {
    spec.validate();
    check_training_data(data);
    ModelArtifact m;
    m.spec = spec;
    m.feature_names = feature_names();
    if (data.cols != kFeatureCount) m.feature_names.resize(data.cols);
    m.digest = {data.rows, data.positives(), data.rows - data.positives()};

    if (spec.kind == ModelKind::RandomForest) {
        m.trees.resize(spec.forest.n_trees);
        parallel_for(spec.forest.n_trees, [&](std::size_t t) {
            Rng rng(spec.seed + t);
            std::vector<std::uint32_t> rows(data.rows);
            if (spec.forest.bootstrap) {
                for (auto& r : rows) r = static_cast<std::uint32_t>(uniform_index(rng, data.rows));
            } else {
                for (std::size_t i = 0; i < data.rows; ++i) rows[i] = static_cast<std::uint32_t>(i);
            }
            m.trees[t] = detail::TreeBuilder(data, spec.forest, rng).build(std::move(rows));
        });
        return m;
    }

    m.standardization = fit_standardization(data);
    const LinearProblem p = standardize(data, m.standardization);
    m.weights.assign(data.cols, 0.0);
    std::vector<double> grad(data.cols);
    double grad_b = 0.0;
    const auto& lp = spec.linear;
    for (std::size_t epoch = 0; epoch < lp.epochs; ++epoch) {
        if (spec.kind == ModelKind::Logistic)
            logistic_gradient(p, m.weights, m.bias, lp.l2_lambda, grad, grad_b);
        else
            hinge_subgradient(p, m.weights, m.bias, lp.svm_c, grad, grad_b);
        for (std::size_t f = 0; f < data.cols; ++f) m.weights[f] -= lp.learning_rate * grad[f];
        m.bias -= lp.learning_rate * grad_b;
    }
    return m;
}

inline ModelArtifact fit(const ModelSpec& spec, const FeatureTable& table) {
    return fit(spec, make_training_data(table));
}

/// Logistic: sigmoid(w.x + b). SVM: sigmoid of the signed margin. Forest: mean
/// leaf positive fraction over trees.
inline double predict_proba(const ModelArtifact& model, std::span<const double> features) {
    if (features.size() != model.feature_names.size())
        fail(ErrorCode::FeatureMismatch, "expected " + std::to_string(model.feature_names.size()) + " features, got " +
                                             std::to_string(features.size()));
    for (double v : features)
        if (!std::isfinite(v)) fail(ErrorCode::NonFinite, "non-finite feature value");
    return model.score(features.data());
}

// ---------------------------------------------------------------------------
// Serialization

inline constexpr int kModelFormatVersion = 1;

inline nlohmann::json model_to_json(const ModelArtifact& m) {
    nlohmann::json j;
    j["format_version"] = kModelFormatVersion;
    j["spec"] = spec_to_json(m.spec);
    j["feature_names"] = m.feature_names;
    if (m.spec.kind == ModelKind::RandomForest) {
        j["standardization"] = nullptr;
        nlohmann::json trees = nlohmann::json::array();
        for (const auto& t : m.trees)
            trees.push_back({{"feature", t.feature},
                             {"threshold", t.threshold},
                             {"left", t.left},
                             {"right", t.right},
                             {"value", t.value}});
        j["parameters"] = {{"trees", std::move(trees)}};
    } else {
        j["standardization"] = {{"mean", m.standardization.mean}, {"std", m.standardization.scale}};
        j["parameters"] = {{"weights", m.weights}, {"bias", m.bias}};
    }
    j["training_digest"] = {{"rows", m.digest.rows}, {"positives", m.digest.positives}, {"negatives", m.digest.negatives}};
    return j;
}

inline void check_model(const ModelArtifact& m) {
    auto corrupt = [](const std::string& why) { fail(ErrorCode::CorruptModel, why); };
    const std::size_t d = m.feature_names.size();
    if (d == 0) corrupt("no feature names");
    if (m.spec.kind == ModelKind::RandomForest) {
        if (m.trees.empty()) corrupt("forest without trees");
        for (const auto& t : m.trees) {
            const std::size_t n = t.size();
            if (n == 0 || t.threshold.size() != n || t.left.size() != n || t.right.size() != n || t.value.size() != n)
                corrupt("tree arrays disagree in length");
            for (std::size_t i = 0; i < n; ++i) {
                if (!(t.value[i] >= 0.0 && t.value[i] <= 1.0)) corrupt("leaf fraction outside [0, 1]");
                if (t.feature[i] < 0) continue;
                if (static_cast<std::size_t>(t.feature[i]) >= d) corrupt("split feature index out of range");
                // Children always follow their parent in preorder storage.
                for (auto child : {t.left[i], t.right[i]})
                    if (child <= static_cast<std::int32_t>(i) || static_cast<std::size_t>(child) >= n)
                        corrupt("child index out of range");
            }
            if (t.depth() > m.spec.forest.max_depth) corrupt("tree deeper than max_depth");
        }
    } else {
        if (m.weights.size() != d || m.standardization.mean.size() != d || m.standardization.scale.size() != d)
            corrupt("linear parameters disagree with the feature count");
        for (double s : m.standardization.scale)
            if (!(s > 0.0)) corrupt("non-positive standardization scale");
    }
}

inline ModelArtifact model_from_json(const nlohmann::json& j) {
    ModelArtifact m;
    try {
        if (!j.contains("format_version") || j["format_version"] != kModelFormatVersion)
            fail(ErrorCode::VersionMismatch, "model format_version must be " + std::to_string(kModelFormatVersion));
        m.spec = spec_from_json(j.at("spec"));
        m.feature_names = j.at("feature_names").get<std::vector<std::string>>();
        const auto& params = j.at("parameters");
        if (m.spec.kind == ModelKind::RandomForest) {
            for (const auto& t : params.at("trees")) {
                Tree tree;
                tree.feature = t.at("feature").get<std::vector<std::int32_t>>();
                tree.threshold = t.at("threshold").get<std::vector<double>>();
                tree.left = t.at("left").get<std::vector<std::int32_t>>();
                tree.right = t.at("right").get<std::vector<std::int32_t>>();
                tree.value = t.at("value").get<std::vector<double>>();
                m.trees.push_back(std::move(tree));
            }
        } else {
            const auto& s = j.at("standardization");
            m.standardization.mean = s.at("mean").get<std::vector<double>>();
            m.standardization.scale = s.at("std").get<std::vector<double>>();
            m.weights = params.at("weights").get<std::vector<double>>();
            m.bias = params.at("bias").get<double>();
        }
        const auto& dg = j.at("training_digest");
        m.digest = {dg.at("rows").get<std::size_t>(), dg.at("positives").get<std::size_t>(),
                    dg.at("negatives").get<std::size_t>()};
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorCode::CorruptModel, e.what());
    } catch (const Error& e) {
        if (e.code() == ErrorCode::VersionMismatch) throw;
        fail(ErrorCode::CorruptModel, e.detail());
    }
    check_model(m);
    return m;
}

inline void save_model(const ModelArtifact& m, const std::filesystem::path& path) {
    write_file_bytes(path, model_to_json(m).dump() + "\n");
}

inline ModelArtifact load_model(const std::filesystem::path& path) {
    const auto bytes = read_file_bytes(path);
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(bytes.begin(), bytes.end());
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorCode::CorruptModel, path.string() + ": " + e.what());
    }
    return model_from_json(j);
}

} // namespace setmap
