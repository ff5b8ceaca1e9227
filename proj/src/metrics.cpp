#include "mtlforge/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <sstream>

#include "mtlforge/error.hpp"

namespace mtlforge {

ConfusionMatrix::ConfusionMatrix(int num_classes) : k_(num_classes) {
    if (num_classes < 1) throw ValueError("ConfusionMatrix: need at least one class");
    counts_.assign(static_cast<size_t>(k_) * k_, 0);
}

void ConfusionMatrix::add(int gold, int predicted) {
    if (gold < 0 || gold >= k_ || predicted < 0 || predicted >= k_) {
        throw ValueError("ConfusionMatrix::add: class index out of range");
    }
    ++counts_[static_cast<size_t>(gold) * k_ + predicted];
}

long long ConfusionMatrix::at(int gold, int predicted) const {
    return counts_[static_cast<size_t>(gold) * k_ + predicted];
}

long long ConfusionMatrix::total() const {
    long long t = 0;
    for (long long c : counts_) t += c;
    return t;
}

std::string ConfusionMatrix::to_string(const std::vector<std::string>& labels) const {
    std::ostringstream os;
    os << "gold\\pred";
    for (int j = 0; j < k_; ++j) os << "\t" << (j < static_cast<int>(labels.size()) ? labels[j] : std::to_string(j));
    os << "\n";
    for (int i = 0; i < k_; ++i) {
        os << (i < static_cast<int>(labels.size()) ? labels[i] : std::to_string(i));
        for (int j = 0; j < k_; ++j) os << "\t" << at(i, j);
        os << "\n";
    }
    return os.str();
}

std::vector<ClassScore> per_class_scores(const ConfusionMatrix& cm) {
    const int k = cm.num_classes();
    std::vector<ClassScore> scores(static_cast<size_t>(k));
    for (int c = 0; c < k; ++c) {
        long long tp = cm.at(c, c), fp = 0, fn = 0;
        for (int j = 0; j < k; ++j) {
            if (j != c) {
                fp += cm.at(j, c);
                fn += cm.at(c, j);
            }
        }
        ClassScore& s = scores[static_cast<size_t>(c)];
        s.support = tp + fn;
        s.precision = (tp + fp) > 0 ? static_cast<double>(tp) / (tp + fp) : 0.0;
        s.recall = (tp + fn) > 0 ? static_cast<double>(tp) / (tp + fn) : 0.0;
        s.f1 = (s.precision + s.recall) > 0.0
                   ? 2.0 * s.precision * s.recall / (s.precision + s.recall)
                   : 0.0;
    }
    return scores;
}

double macro_f1(const ConfusionMatrix& cm) {
    if (cm.total() == 0) throw ValueError("macro_f1: empty confusion matrix");
    auto scores = per_class_scores(cm);
    double total = 0.0;
    for (const auto& s : scores) total += s.f1;
    return total / static_cast<double>(scores.size());
}

std::pair<double, double> aggregate(const SeedRunSet& runs) {
    if (runs.runs.empty()) throw ValueError("aggregate: no runs");
    double mean = 0.0;
    for (const auto& [seed, v] : runs.runs) {
        (void)seed;
        mean += v;
    }
    mean /= static_cast<double>(runs.runs.size());
    double stddev = 0.0;
    if (runs.runs.size() > 1) {
        double ss = 0.0;
        for (const auto& [seed, v] : runs.runs) {
            (void)seed;
            ss += (v - mean) * (v - mean);
        }
        stddev = std::sqrt(ss / static_cast<double>(runs.runs.size() - 1));
    }
    return {mean, stddev};
}

std::string format_percent(double fraction) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.2f", fraction * 100.0);
    return buf;
}

namespace {

double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }

}  // namespace

WilcoxonResult wilcoxon_signed_rank(const std::vector<std::pair<double, double>>& pairs) {
    if (pairs.empty()) throw ValueError("wilcoxon_signed_rank: no pairs");

    std::vector<double> diffs;
    diffs.reserve(pairs.size());
    for (const auto& [a, b] : pairs) {
        const double d = b - a;
        if (d != 0.0) diffs.push_back(d);
    }

    WilcoxonResult res;
    res.n_used = static_cast<int>(diffs.size());
    if (diffs.empty()) {
        res.degenerate = true;
        res.w = 0.0;
        res.p_two_sided = 1.0;
        res.method = "degenerate";
        return res;
    }

    // Midranks of |d|, doubled so tied midranks stay integral.
    const int n = static_cast<int>(diffs.size());
    std::vector<int> order(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i) order[static_cast<size_t>(i)] = i;
    std::sort(order.begin(), order.end(), [&](int x, int y) {
        return std::fabs(diffs[static_cast<size_t>(x)]) < std::fabs(diffs[static_cast<size_t>(y)]);
    });
    std::vector<long long> rank2(static_cast<size_t>(n), 0);
    std::vector<long long> tie_sizes;
    int i = 0;
    while (i < n) {
        int j = i;
        while (j < n && std::fabs(diffs[static_cast<size_t>(order[static_cast<size_t>(j)])]) ==
                            std::fabs(diffs[static_cast<size_t>(order[static_cast<size_t>(i)])])) {
            ++j;
        }
        // positions i..j-1 share midrank (i+1 + j) / 2; doubled: (i+1)+(j)
        const long long doubled = static_cast<long long>(i + 1) + j;
        for (int t = i; t < j; ++t) rank2[static_cast<size_t>(order[static_cast<size_t>(t)])] = doubled;
        tie_sizes.push_back(j - i);
        i = j;
    }

    long long wplus2 = 0, total2 = 0;
    for (int t = 0; t < n; ++t) {
        total2 += rank2[static_cast<size_t>(t)];
        if (diffs[static_cast<size_t>(t)] > 0) wplus2 += rank2[static_cast<size_t>(t)];
    }
    const long long wminus2 = total2 - wplus2;
    const long long wmin2 = std::min(wplus2, wminus2);
    res.w = static_cast<double>(wmin2) / 2.0;

    if (n <= 25) {
        // Exact: P(min(W+, W-) <= observed) over all 2^n sign assignments.
        const uint64_t count = uint64_t{1} << n;
        uint64_t hits = 0;
        uint64_t prev = 0;
        long long s = 0;  // W+ (doubled) for the current Gray-coded subset
        for (uint64_t m = 0; m < count; ++m) {
            const uint64_t g = m ^ (m >> 1);
            const uint64_t changed = g ^ prev;
            if (changed) {
                int bit = __builtin_ctzll(changed);
                if (g & changed) {
                    s += rank2[static_cast<size_t>(bit)];
                } else {
                    s -= rank2[static_cast<size_t>(bit)];
                }
            }
            prev = g;
            if (std::min(s, total2 - s) <= wmin2) ++hits;
        }
        res.p_two_sided = static_cast<double>(hits) / static_cast<double>(count);
        res.method = "exact";
    } else {
        const double nn = static_cast<double>(n);
        const double mean = nn * (nn + 1.0) / 4.0;
        double var = nn * (nn + 1.0) * (2.0 * nn + 1.0) / 24.0;
        for (long long t : tie_sizes) {
            const double td = static_cast<double>(t);
            var -= (td * td * td - td) / 48.0;
        }
        const double z = (res.w - mean) / std::sqrt(var);
        res.p_two_sided = std::min(1.0, 2.0 * normal_cdf(z));
        res.method = "normal-approx";
    }
    if (res.p_two_sided <= 0.0) res.p_two_sided = std::nextafter(0.0, 1.0);
    return res;
}

std::string ComparisonReport::direction_arrow() const {
    if (direction == "up") return "↑";
    if (direction == "down") return "↓";
    return "=";
}

std::string ComparisonReport::to_table_row() const {
    char buf[256];
    std::snprintf(buf, sizeof(buf), "%-28s %8s %8s %+7.2f  %s  p=%.4f%s%s",
                  label.c_str(), format_percent(baseline_mean).c_str(),
                  format_percent(candidate_mean).c_str(), delta * 100.0,
                  direction_arrow().c_str(), wilcoxon.p_two_sided,
                  significant ? " *" : "", wilcoxon.degenerate ? " (degenerate)" : "");
    return buf;
}

ComparisonReport compare_systems(const SeedRunSet& baseline, const SeedRunSet& candidate,
                                 const std::string& label) {
    if (baseline.runs.empty() || candidate.runs.empty()) {
        throw ValueError("compare_systems: empty run set");
    }
    std::map<uint64_t, double> base_by_seed, cand_by_seed;
    for (const auto& [seed, v] : baseline.runs) {
        if (!base_by_seed.emplace(seed, v).second) {
            throw ValueError("compare_systems: duplicate baseline seed " + std::to_string(seed));
        }
    }
    for (const auto& [seed, v] : candidate.runs) {
        if (!cand_by_seed.emplace(seed, v).second) {
            throw ValueError("compare_systems: duplicate candidate seed " + std::to_string(seed));
        }
    }
    if (base_by_seed.size() != cand_by_seed.size()) {
        throw ValueError("compare_systems: run sets differ in size");
    }
    for (const auto& [seed, v] : base_by_seed) {
        (void)v;
        if (!cand_by_seed.count(seed)) {
            throw ValueError("compare_systems: seed " + std::to_string(seed) +
                             " present only in the baseline set");
        }
    }

    ComparisonReport rep;
    rep.label = label;
    rep.n_pairs = static_cast<int>(base_by_seed.size());
    std::tie(rep.baseline_mean, rep.baseline_stddev) = aggregate(baseline);
    std::tie(rep.candidate_mean, rep.candidate_stddev) = aggregate(candidate);
    rep.delta = rep.candidate_mean - rep.baseline_mean;
    rep.direction = rep.delta > 0 ? "up" : (rep.delta < 0 ? "down" : "flat");
    for (const auto& [seed, base_v] : base_by_seed) {
        rep.pairs.emplace_back(base_v, cand_by_seed.at(seed));
    }
    rep.wilcoxon = wilcoxon_signed_rank(rep.pairs);
    rep.significant = !rep.wilcoxon.degenerate && rep.wilcoxon.p_two_sided < 0.05;
    if (rep.wilcoxon.n_used > 0 && rep.wilcoxon.n_used <= 25) {
        rep.min_attainable_p = std::ldexp(2.0, -rep.wilcoxon.n_used);
    }
    return rep;
}

ComparisonReport pooled_comparison(const std::vector<ComparisonReport>& cells) {
    if (cells.empty()) throw ValueError("pooled_comparison: no cells");
    ComparisonReport rep;
    rep.label = "pooled(" + std::to_string(cells.size()) + " cells)";
    double bsum = 0.0, csum = 0.0;
    for (const auto& cell : cells) {
        for (const auto& pr : cell.pairs) {
            rep.pairs.push_back(pr);
            bsum += pr.first;
            csum += pr.second;
        }
    }
    rep.n_pairs = static_cast<int>(rep.pairs.size());
    rep.baseline_mean = bsum / rep.n_pairs;
    rep.candidate_mean = csum / rep.n_pairs;
    rep.delta = rep.candidate_mean - rep.baseline_mean;
    rep.direction = rep.delta > 0 ? "up" : (rep.delta < 0 ? "down" : "flat");
    rep.wilcoxon = wilcoxon_signed_rank(rep.pairs);
    rep.significant = !rep.wilcoxon.degenerate && rep.wilcoxon.p_two_sided < 0.05;
    if (rep.wilcoxon.n_used > 0 && rep.wilcoxon.n_used <= 25) {
        rep.min_attainable_p = std::ldexp(2.0, -rep.wilcoxon.n_used);
    }
    return rep;
}

std::string comparison_table(const std::vector<ComparisonReport>& rows) {
    std::ostringstream os;
    char buf[256];
    std::snprintf(buf, sizeof(buf), "%-28s %8s %8s %7s  dir  p", "comparison", "base", "cand", "delta");
    os << buf << "\n";
    os << std::string(72, '-') << "\n";
    bool at_floor = false;
    for (const auto& r : rows) {
        os << r.to_table_row() << "\n";
        at_floor = at_floor || (r.min_attainable_p > 0.0 &&
                                r.wilcoxon.p_two_sided == r.min_attainable_p);
    }
    if (at_floor) {
        os << "note: an exact two-sided p over n pairs cannot fall below 2^(1-n); "
              "with 5 seeds that floor is 0.0625, so pool cells (--pool) to test "
              "significance at 0.05\n";
    }
    return os.str();
}

}  // namespace mtlforge
