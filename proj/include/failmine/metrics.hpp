#pragma once

// Evaluation harness: confusion-matrix classification scores and the
// clustering metrics homogeneity, completeness, and V-measure.
//
// Entropies use natural log. Conventions for degenerate inputs:
//   H(C) = 0  =>  homogeneity = 1
//   H(K) = 0  =>  completeness = 1
//   h = c = 0 =>  V = 0
// Degenerate classification denominators yield "undefined" (nullopt), never 0.

#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace failmine {

struct ConfusionMatrix {
    std::int64_t tp = 0;
    std::int64_t fp = 0;
    std::int64_t fn = 0;
    std::int64_t tn = 0;

    std::int64_t total() const { return tp + fp + fn + tn; }
    friend bool operator==(const ConfusionMatrix&, const ConfusionMatrix&) = default;
};

inline ConfusionMatrix confusion(const std::vector<bool>& ground,
                                 const std::vector<bool>& predicted) {
    if (ground.size() != predicted.size())
        throw std::invalid_argument("confusion: ground and predicted lengths differ");
    ConfusionMatrix m;
    for (size_t i = 0; i < ground.size(); ++i) {
        if (ground[i] && predicted[i])
            ++m.tp;
        else if (!ground[i] && predicted[i])
            ++m.fp;
        else if (ground[i] && !predicted[i])
            ++m.fn;
        else
            ++m.tn;
    }
    return m;
}

struct ClassificationScores {
    std::optional<double> accuracy;
    std::optional<double> precision;
    std::optional<double> recall;
    std::optional<double> f1;
};

inline ClassificationScores classification_scores(const ConfusionMatrix& m) {
    ClassificationScores s;
    const double tp = static_cast<double>(m.tp);
    if (m.total() > 0) s.accuracy = (tp + static_cast<double>(m.tn)) / static_cast<double>(m.total());
    if (m.tp + m.fp > 0) s.precision = tp / static_cast<double>(m.tp + m.fp);
    if (m.tp + m.fn > 0) s.recall = tp / static_cast<double>(m.tp + m.fn);
    if (s.precision && s.recall && (*s.precision + *s.recall) > 0)
        s.f1 = 2.0 * (*s.precision) * (*s.recall) / (*s.precision + *s.recall);
    return s;
}

// ---------------------------------------------------------------------------
// Clustering metrics

struct Labeling {
    std::vector<std::string> ground;     // class label per item
    std::vector<std::string> predicted;  // cluster label per item

    size_t size() const { return ground.size(); }
    bool valid() const { return !ground.empty() && ground.size() == predicted.size(); }
};

struct ClusteringScores {
    double homogeneity = 0.0;
    double completeness = 0.0;
    double v_measure = 0.0;
};

namespace detail {

struct Contingency {
    std::map<std::pair<std::string, std::string>, std::int64_t> joint;  // (class, cluster) -> n
    std::map<std::string, std::int64_t> by_class;
    std::map<std::string, std::int64_t> by_cluster;
    std::int64_t n = 0;
};

inline Contingency contingency(const Labeling& l) {
    if (!l.valid()) throw std::invalid_argument("labeling must be non-empty and of equal lengths");
    Contingency c;
    c.n = static_cast<std::int64_t>(l.size());
    for (size_t i = 0; i < l.size(); ++i) {
        ++c.joint[{l.ground[i], l.predicted[i]}];
        ++c.by_class[l.ground[i]];
        ++c.by_cluster[l.predicted[i]];
    }
    return c;
}

template <typename Map>
double entropy(const Map& counts, std::int64_t n) {
    double h = 0.0;
    for (const auto& [key, cnt] : counts) {
        if (cnt == 0) continue;
        const double p = static_cast<double>(cnt) / static_cast<double>(n);
        h -= p * std::log(p);
    }
    return h;
}

inline double clamp01(double v) { return v < 0.0 ? 0.0 : (v > 1.0 ? 1.0 : v); }

}  // namespace detail

inline double homogeneity(const Labeling& l) {
    auto c = detail::contingency(l);
    const double h_class = detail::entropy(c.by_class, c.n);
    if (h_class == 0.0) return 1.0;
    const double h_joint = detail::entropy(c.joint, c.n);
    const double h_cluster = detail::entropy(c.by_cluster, c.n);
    const double h_class_given_cluster = h_joint - h_cluster;
    return detail::clamp01(1.0 - h_class_given_cluster / h_class);
}

inline double completeness(const Labeling& l) {
    auto c = detail::contingency(l);
    const double h_cluster = detail::entropy(c.by_cluster, c.n);
    if (h_cluster == 0.0) return 1.0;
    const double h_joint = detail::entropy(c.joint, c.n);
    const double h_class = detail::entropy(c.by_class, c.n);
    const double h_cluster_given_class = h_joint - h_class;
    return detail::clamp01(1.0 - h_cluster_given_class / h_cluster);
}

inline ClusteringScores v_measure(const Labeling& l) {
    ClusteringScores s;
    s.homogeneity = homogeneity(l);
    s.completeness = completeness(l);
    const double sum = s.homogeneity + s.completeness;
    s.v_measure = sum > 0.0 ? 2.0 * s.homogeneity * s.completeness / sum : 0.0;
    return s;
}

}  // namespace failmine
