#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <map>
#include <random>

#include "failmine/metrics.hpp"

using namespace failmine;

namespace {

// Independent entropy oracle: computes H(C|K) the long way, from per-cluster
// class distributions, instead of the joint-entropy identity the library
// uses.
double oracle_entropy(const std::map<std::string, std::int64_t>& counts, double n) {
    double h = 0.0;
    for (const auto& [label, c] : counts) {
        double p = static_cast<double>(c) / n;
        if (p > 0) h -= p * std::log(p);
    }
    return h;
}

struct OracleScores {
    double h, c, v;
};

OracleScores oracle_v_measure(const Labeling& l) {
    const double n = static_cast<double>(l.size());
    std::map<std::string, std::map<std::string, std::int64_t>> per_cluster, per_class;
    std::map<std::string, std::int64_t> cluster_sizes, class_sizes;
    for (size_t i = 0; i < l.size(); ++i) {
        ++per_cluster[l.predicted[i]][l.ground[i]];
        ++per_class[l.ground[i]][l.predicted[i]];
        ++cluster_sizes[l.predicted[i]];
        ++class_sizes[l.ground[i]];
    }
    double h_class = oracle_entropy(class_sizes, n);
    double h_cluster = oracle_entropy(cluster_sizes, n);
    double h_class_given_cluster = 0.0;
    for (const auto& [cluster, classes] : per_cluster) {
        double weight = static_cast<double>(cluster_sizes[cluster]) / n;
        h_class_given_cluster +=
            weight * oracle_entropy(classes, static_cast<double>(cluster_sizes[cluster]));
    }
    double h_cluster_given_class = 0.0;
    for (const auto& [klass, clusters] : per_class) {
        double weight = static_cast<double>(class_sizes[klass]) / n;
        h_cluster_given_class +=
            weight * oracle_entropy(clusters, static_cast<double>(class_sizes[klass]));
    }
    OracleScores s{};
    s.h = h_class == 0.0 ? 1.0 : 1.0 - h_class_given_cluster / h_class;
    s.c = h_cluster == 0.0 ? 1.0 : 1.0 - h_cluster_given_class / h_cluster;
    s.v = (s.h + s.c) > 0 ? 2.0 * s.h * s.c / (s.h + s.c) : 0.0;
    return s;
}

Labeling random_labeling(std::mt19937& rng) {
    std::uniform_int_distribution<int> size_dist(1, 50);
    const int n = size_dist(rng);
    std::uniform_int_distribution<int> label_dist(0, 6);
    Labeling l;
    for (int i = 0; i < n; ++i) {
        l.ground.push_back("g" + std::to_string(label_dist(rng)));
        l.predicted.push_back("p" + std::to_string(label_dist(rng)));
    }
    return l;
}

}  // namespace

TEST_CASE("confusion matrix counting") {
    // Step-2 shape: 50 relevant all predicted relevant, 26 irrelevant of
    // which 11 predicted relevant.
    std::vector<bool> ground, predicted;
    for (int i = 0; i < 50; ++i) {
        ground.push_back(true);
        predicted.push_back(true);
    }
    for (int i = 0; i < 11; ++i) {
        ground.push_back(false);
        predicted.push_back(true);
    }
    for (int i = 0; i < 15; ++i) {
        ground.push_back(false);
        predicted.push_back(false);
    }
    ConfusionMatrix m = confusion(ground, predicted);
    CHECK(m.tp == 50);
    CHECK(m.fp == 11);
    CHECK(m.fn == 0);
    CHECK(m.tn == 15);

    SECTION("all correct has no errors") {
        ConfusionMatrix perfect = confusion({true, false, true}, {true, false, true});
        CHECK(perfect.fp == 0);
        CHECK(perfect.fn == 0);
    }
    SECTION("inverted predictions on all-true ground") {
        ConfusionMatrix inverted = confusion({true, true, true}, {false, false, false});
        CHECK(inverted.tp == 0);
        CHECK(inverted.fn == 3);
    }
    SECTION("length mismatch throws") {
        CHECK_THROWS(confusion({true}, {true, false}));
    }
}

TEST_CASE("classification scores on the reference matrices") {
    SECTION("relevance screening matrix") {
        ClassificationScores s = classification_scores({50, 11, 0, 15});
        REQUIRE(s.precision);
        REQUIRE(s.recall);
        REQUIRE(s.f1);
        REQUIRE(s.accuracy);
        CHECK_THAT(*s.precision, Catch::Matchers::WithinAbs(0.8197, 1e-4));
        CHECK_THAT(*s.recall, Catch::Matchers::WithinAbs(1.0000, 1e-4));
        CHECK_THAT(*s.f1, Catch::Matchers::WithinAbs(0.9009, 1e-4));
        CHECK_THAT(*s.accuracy, Catch::Matchers::WithinAbs(0.8553, 1e-4));
    }
    SECTION("analyzability screening matrix") {
        ClassificationScores s = classification_scores({39, 1, 6, 4});
        REQUIRE(s.precision);
        REQUIRE(s.recall);
        REQUIRE(s.f1);
        CHECK_THAT(*s.precision, Catch::Matchers::WithinAbs(0.9750, 1e-4));
        CHECK_THAT(*s.recall, Catch::Matchers::WithinAbs(0.8667, 1e-4));
        CHECK_THAT(*s.f1, Catch::Matchers::WithinAbs(0.9176, 1e-4));
    }
    SECTION("degenerate denominators are undefined, not zero") {
        ClassificationScores s = classification_scores({0, 0, 3, 5});
        CHECK_FALSE(s.precision);
        CHECK(s.recall);
        CHECK_FALSE(s.f1);
    }
}

TEST_CASE("clustering metrics on hand-computed labelings") {
    SECTION("relabeled perfect clustering") {
        Labeling l{{"0", "0", "1", "1"}, {"1", "1", "0", "0"}};
        ClusteringScores s = v_measure(l);
        CHECK_THAT(s.homogeneity, Catch::Matchers::WithinAbs(1.0, 1e-9));
        CHECK_THAT(s.completeness, Catch::Matchers::WithinAbs(1.0, 1e-9));
        CHECK_THAT(s.v_measure, Catch::Matchers::WithinAbs(1.0, 1e-9));
    }
    SECTION("single mixed cluster") {
        Labeling l{{"0", "0", "1", "1"}, {"0", "0", "0", "0"}};
        ClusteringScores s = v_measure(l);
        CHECK_THAT(s.homogeneity, Catch::Matchers::WithinAbs(0.0, 1e-9));
        CHECK_THAT(s.completeness, Catch::Matchers::WithinAbs(1.0, 1e-9));
        CHECK_THAT(s.v_measure, Catch::Matchers::WithinAbs(0.0, 1e-9));
    }
    SECTION("singleton split: h=1, c=0.5, V=2/3") {
        // H(K|C) = ln 2, H(K) = 2 ln 2, so completeness is exactly 1/2.
        Labeling l{{"0", "0", "1", "1"}, {"0", "1", "2", "3"}};
        ClusteringScores s = v_measure(l);
        CHECK_THAT(s.homogeneity, Catch::Matchers::WithinAbs(1.0, 1e-9));
        CHECK_THAT(s.completeness, Catch::Matchers::WithinAbs(0.5, 1e-9));
        CHECK_THAT(s.v_measure, Catch::Matchers::WithinAbs(2.0 / 3.0, 1e-9));
    }
    SECTION("empty labeling throws") {
        CHECK_THROWS(v_measure(Labeling{}));
    }
}

TEST_CASE("clustering metrics agree with the brute-force oracle") {
    std::mt19937 rng(20240817);
    for (int trial = 0; trial < 200; ++trial) {
        Labeling l = random_labeling(rng);
        ClusteringScores s = v_measure(l);
        OracleScores o = oracle_v_measure(l);
        CAPTURE(trial, l.size());
        CHECK_THAT(s.homogeneity, Catch::Matchers::WithinAbs(o.h, 1e-9));
        CHECK_THAT(s.completeness, Catch::Matchers::WithinAbs(o.c, 1e-9));
        CHECK_THAT(s.v_measure, Catch::Matchers::WithinAbs(o.v, 1e-9));

        // Symmetry: h(g, p) == c(p, g).
        Labeling swapped{l.predicted, l.ground};
        CHECK_THAT(homogeneity(l), Catch::Matchers::WithinAbs(completeness(swapped), 1e-12));
        CHECK_THAT(completeness(l), Catch::Matchers::WithinAbs(homogeneity(swapped), 1e-12));

        // Label-permutation invariance: renaming cluster ids changes nothing.
        Labeling renamed = l;
        for (auto& p : renamed.predicted) p = "renamed-" + p + "-x";
        ClusteringScores r = v_measure(renamed);
        CHECK_THAT(r.homogeneity, Catch::Matchers::WithinAbs(s.homogeneity, 1e-12));
        CHECK_THAT(r.completeness, Catch::Matchers::WithinAbs(s.completeness, 1e-12));

        CHECK(s.homogeneity >= 0.0);
        CHECK(s.homogeneity <= 1.0);
        CHECK(s.completeness >= 0.0);
        CHECK(s.completeness <= 1.0);
        CHECK(s.v_measure >= 0.0);
        CHECK(s.v_measure <= 1.0);
    }
}

TEST_CASE("refinement monotonicity") {
    std::mt19937 rng(7);
    for (int trial = 0; trial < 50; ++trial) {
        Labeling l = random_labeling(rng);

        // Splitting a predicted cluster never decreases homogeneity.
        Labeling split = l;
        std::uniform_int_distribution<size_t> pick(0, split.size() - 1);
        const std::string victim = split.predicted[pick(rng)];
        bool toggle = false;
        for (auto& p : split.predicted) {
            if (p == victim) {
                p = toggle ? victim + "-a" : victim + "-b";
                toggle = !toggle;
            }
        }
        CHECK(homogeneity(split) >= homogeneity(l) - 1e-12);

        // Merging all predicted clusters into one never decreases completeness.
        Labeling merged = l;
        for (auto& p : merged.predicted) p = "all";
        CHECK(completeness(merged) >= completeness(l) - 1e-12);
    }
}

TEST_CASE("classification scores invariant under pair permutation") {
    std::mt19937 rng(99);
    std::vector<bool> g, p;
    std::bernoulli_distribution coin(0.6);
    for (int i = 0; i < 40; ++i) {
        g.push_back(coin(rng));
        p.push_back(coin(rng));
    }
    ConfusionMatrix before = confusion(g, p);
    std::vector<size_t> order(g.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::shuffle(order.begin(), order.end(), rng);
    std::vector<bool> g2, p2;
    for (size_t i : order) {
        g2.push_back(g[i]);
        p2.push_back(p[i]);
    }
    CHECK(confusion(g2, p2) == before);
}
