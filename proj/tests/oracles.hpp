#pragma once

// Reference implementations used only by the tests. They share no code with
// the library paths they check: the CART oracle re-sorts and re-counts at
// every node with exact fractions, and the binomial interval is found by
// bisecting on directly summed binomial tail probabilities.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <memory>
#include <numeric>
#include <set>
#include <vector>

namespace oracle {

// --------------------------------------------------------------------------
// Exhaustive greedy CART.

struct Frac {
    long long num = 0;
    long long den = 1;

    static Frac make(long long n, long long d) {
        if (d < 0) n = -n, d = -d;
        const long long g = std::gcd(n < 0 ? -n : n, d);
        return {n / (g ? g : 1), d / (g ? g : 1)};
    }
    friend Frac operator-(Frac a, Frac b) { return make(a.num * b.den - b.num * a.den, a.den * b.den); }
    friend Frac operator+(Frac a, Frac b) { return make(a.num * b.den + b.num * a.den, a.den * b.den); }
    friend bool operator<(Frac a, Frac b) { return a.num * b.den < b.num * a.den; }
    friend bool operator>(Frac a, Frac b) { return b < a; }
};

/// Gini impurity of a label multiset as an exact fraction.
inline Frac gini(const std::vector<int>& labels, int k) {
    const long long n = static_cast<long long>(labels.size());
    long long sq = 0;
    for (int c = 0; c < k; ++c) {
        const long long m = std::count(labels.begin(), labels.end(), c);
        sq += m * m;
    }
    return Frac::make(n * n - sq, n * n);
}

struct Node {
    bool leaf = true;
    int feature = -1;
    double threshold = 0.0;
    int majority = 0;
    std::unique_ptr<Node> left, right;

    int predict(const std::vector<int>& x) const {
        if (leaf) return majority;
        return x[static_cast<std::size_t>(feature)] <= threshold ? left->predict(x) : right->predict(x);
    }
    int count() const { return leaf ? 1 : 1 + left->count() + right->count(); }
};

inline std::unique_ptr<Node> grow(const std::vector<std::vector<int>>& rows, const std::vector<int>& labels, int k,
                                  int depth = 0, int max_depth = -1) {
    auto node = std::make_unique<Node>();
    std::vector<int> counts(static_cast<std::size_t>(k), 0);
    for (int y : labels) ++counts[static_cast<std::size_t>(y)];
    node->majority = static_cast<int>(std::max_element(counts.begin(), counts.end()) - counts.begin());
    const Frac parent = gini(labels, k);
    if (parent.num == 0 || rows.size() < 2 || depth == max_depth) return node;

    const int p = static_cast<int>(rows.front().size());
    const long long n = static_cast<long long>(rows.size());
    bool found = false;
    Frac best_gain;
    int best_feature = -1;
    double best_threshold = 0.0;
    for (int f = 0; f < p; ++f) {
        std::set<int> values;
        for (const auto& r : rows) values.insert(r[static_cast<std::size_t>(f)]);
        std::vector<int> sorted(values.begin(), values.end());
        for (std::size_t i = 0; i + 1 < sorted.size(); ++i) {
            const double t = (sorted[i] + sorted[i + 1]) / 2.0;
            std::vector<int> l, r;
            for (std::size_t s = 0; s < rows.size(); ++s) {
                (rows[s][static_cast<std::size_t>(f)] <= t ? l : r).push_back(labels[s]);
            }
            const Frac gl = gini(l, k), gr = gini(r, k);
            const Frac wl = Frac::make(gl.num * static_cast<long long>(l.size()), gl.den * n);
            const Frac wr = Frac::make(gr.num * static_cast<long long>(r.size()), gr.den * n);
            const Frac gain = parent - (wl + wr);
            if (gain.num <= 0) continue;
            if (!found || gain > best_gain) {
                found = true;
                best_gain = gain;
                best_feature = f;
                best_threshold = t;
            }
        }
    }
    if (!found) return node;

    std::vector<std::vector<int>> lrows, rrows;
    std::vector<int> llab, rlab;
    for (std::size_t s = 0; s < rows.size(); ++s) {
        if (rows[s][static_cast<std::size_t>(best_feature)] <= best_threshold) {
            lrows.push_back(rows[s]);
            llab.push_back(labels[s]);
        } else {
            rrows.push_back(rows[s]);
            rlab.push_back(labels[s]);
        }
    }
    node->leaf = false;
    node->feature = best_feature;
    node->threshold = best_threshold;
    node->left = grow(lrows, llab, k, depth + 1, max_depth);
    node->right = grow(rrows, rlab, k, depth + 1, max_depth);
    return node;
}

// --------------------------------------------------------------------------
// Exact binomial interval by bisection on the binomial CDF.

inline double binom_pmf(long long k, long long n, double p) {
    if (p <= 0.0) return k == 0 ? 1.0 : 0.0;
    if (p >= 1.0) return k == n ? 1.0 : 0.0;
    const double log_choose = std::lgamma(n + 1.0) - std::lgamma(k + 1.0) - std::lgamma(n - k + 1.0);
    return std::exp(log_choose + k * std::log(p) + (n - k) * std::log1p(-p));
}

/// P(X <= k) for X ~ Binomial(n, p).
inline double binom_cdf(long long k, long long n, double p) {
    double s = 0.0;
    for (long long i = 0; i <= k; ++i) s += binom_pmf(i, n, p);
    return std::min(1.0, s);
}

/// P(X >= k).
inline double binom_upper_tail(long long k, long long n, double p) {
    double s = 0.0;
    for (long long i = k; i <= n; ++i) s += binom_pmf(i, n, p);
    return std::min(1.0, s);
}

struct Interval {
    double lower, upper;
};

inline Interval clopper_pearson(long long x, long long n, double level = 0.95) {
    const double half = (1.0 - level) / 2.0;
    Interval out{0.0, 1.0};
    if (x > 0) {
        // P(X >= x; p) increases with p; find where it equals half.
        double lo = 0.0, hi = 1.0;
        for (int it = 0; it < 200; ++it) {
            const double mid = 0.5 * (lo + hi);
            (binom_upper_tail(x, n, mid) < half ? lo : hi) = mid;
        }
        out.lower = 0.5 * (lo + hi);
    }
    if (x < n) {
        // P(X <= x; p) decreases with p.
        double lo = 0.0, hi = 1.0;
        for (int it = 0; it < 200; ++it) {
            const double mid = 0.5 * (lo + hi);
            (binom_cdf(x, n, mid) > half ? lo : hi) = mid;
        }
        out.upper = 0.5 * (lo + hi);
    }
    return out;
}

}  // namespace oracle
