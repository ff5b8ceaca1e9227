#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace mtlforge {

// K x K count matrix, rows = gold label, columns = predicted label.
class ConfusionMatrix {
public:
    explicit ConfusionMatrix(int num_classes);

    void add(int gold, int predicted);
    long long at(int gold, int predicted) const;
    int num_classes() const { return k_; }
    long long total() const;

    std::string to_string(const std::vector<std::string>& labels) const;

private:
    int k_;
    std::vector<long long> counts_;
};

struct ClassScore {
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
    long long support = 0;
};

std::vector<ClassScore> per_class_scores(const ConfusionMatrix& cm);

// Unweighted mean of per-class F1; a class with no predicted and no gold
// instances (or zero precision+recall) contributes 0.
double macro_f1(const ConfusionMatrix& cm);

// Per-seed metric values for one system on one dataset.
struct SeedRunSet {
    std::vector<std::pair<uint64_t, double>> runs;  // (seed, metric)
};

inline const std::vector<uint64_t>& default_seeds() {
    static const std::vector<uint64_t> seeds = {69556, 79719, 30010, 46921, 25577};
    return seeds;
}

// (arithmetic mean, sample standard deviation); stddev of a single run is 0.
std::pair<double, double> aggregate(const SeedRunSet& runs);

// Table-style percentage with two decimals, e.g. 0.8182 -> "81.82".
std::string format_percent(double fraction);

struct WilcoxonResult {
    double w = 0.0;             // min(W+, W-)
    double p_two_sided = 1.0;
    int n_used = 0;             // pairs after dropping zero differences
    bool degenerate = false;    // all differences were zero
    std::string method;         // "exact" or "normal-approx"
};

// Signed-rank test with midrank ties and drop-zeros handling. Exact p by
// enumerating all 2^n sign assignments for n <= 25, normal approximation
// with tie correction above that.
WilcoxonResult wilcoxon_signed_rank(const std::vector<std::pair<double, double>>& pairs);

struct ComparisonReport {
    std::string label;
    int n_pairs = 0;
    double baseline_mean = 0.0;
    double baseline_stddev = 0.0;
    double candidate_mean = 0.0;
    double candidate_stddev = 0.0;
    double delta = 0.0;
    std::string direction;  // "up", "down" or "flat"
    WilcoxonResult wilcoxon;
    bool significant = false;  // p < 0.05
    // Smallest exact p reachable with this many pairs (2^(1-n)); with 5
    // seed pairs that floor is 0.0625, so per-cell significance at 0.05 is
    // out of reach and pooling across cells is the only route there.
    double min_attainable_p = 0.0;
    std::vector<std::pair<double, double>> pairs;  // (baseline, candidate) by seed

    std::string direction_arrow() const;
    std::string to_table_row() const;
};

// Pairs the two run sets by seed (seed lists must match) and reports means,
// delta, direction and Wilcoxon significance.
ComparisonReport compare_systems(const SeedRunSet& baseline, const SeedRunSet& candidate,
                                 const std::string& label = "");

// Pooled reading: concatenates the per-cell seed pairs of several
// comparisons into one signed-rank test.
ComparisonReport pooled_comparison(const std::vector<ComparisonReport>& cells);

std::string comparison_table(const std::vector<ComparisonReport>& rows);

}  // namespace mtlforge
