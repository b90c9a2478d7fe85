#pragma once

// Statistical toolkit: Student-t confidence intervals, one-way ANOVA,
// and Tukey HSD post-hoc comparisons, with the distribution functions
// implemented from first principles. t and F CDFs go through the
// regularized incomplete beta function (continued fraction, relative
// tolerance 1e-12); quantiles use bracketed bisection to 1e-10; the
// studentized range CDF is the classic double integral evaluated with
// fixed-order Gauss-Legendre quadrature.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace tutorbench::stats {

inline double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }

inline double normal_pdf(double z) {
    static const double inv_sqrt_2pi = 0.3989422804014327;
    return inv_sqrt_2pi * std::exp(-0.5 * z * z);
}

namespace detail {

// Continued-fraction evaluation of the incomplete beta (modified
// Lentz), convergent for x < (a+1)/(a+b+2).
inline double beta_cf(double a, double b, double x) {
    constexpr int max_iter = 500;
    constexpr double eps = 1e-14;
    constexpr double tiny = 1e-300;
    double qab = a + b, qap = a + 1.0, qam = a - 1.0;
    double c = 1.0;
    double d = 1.0 - qab * x / qap;
    if (std::fabs(d) < tiny) d = tiny;
    d = 1.0 / d;
    double h = d;
    for (int m = 1; m <= max_iter; ++m) {
        int m2 = 2 * m;
        double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if (std::fabs(d) < tiny) d = tiny;
        c = 1.0 + aa / c;
        if (std::fabs(c) < tiny) c = tiny;
        d = 1.0 / d;
        h *= d * c;
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if (std::fabs(d) < tiny) d = tiny;
        c = 1.0 + aa / c;
        if (std::fabs(c) < tiny) c = tiny;
        d = 1.0 / d;
        double del = d * c;
        h *= del;
        if (std::fabs(del - 1.0) < eps) return h;
    }
    return h;
}

// Gauss-Legendre nodes/weights on [-1, 1], computed once by Newton
// iteration on the Legendre recurrence.
template <int N>
struct GaussLegendre {
    std::array<double, N> node{}, weight{};
    GaussLegendre() {
        for (int i = 0; i < (N + 1) / 2; ++i) {
            double x = std::cos(M_PI * (i + 0.75) / (N + 0.5));
            double pp = 0.0;
            for (int it = 0; it < 100; ++it) {
                double p0 = 1.0, p1 = 0.0;
                for (int j = 0; j < N; ++j) {
                    double p2 = p1;
                    p1 = p0;
                    p0 = ((2.0 * j + 1.0) * x * p1 - j * p2) / (j + 1.0);
                }
                pp = N * (x * p0 - p1) / (x * x - 1.0);
                double dx = p0 / pp;
                x -= dx;
                if (std::fabs(dx) < 1e-15) break;
            }
            node[i] = -x;
            node[N - 1 - i] = x;
            weight[i] = 2.0 / ((1.0 - x * x) * pp * pp);
            weight[N - 1 - i] = weight[i];
        }
    }
};

inline const GaussLegendre<32>& gl32() {
    static const GaussLegendre<32> g;
    return g;
}

template <class F>
double integrate_gl32(F&& f, double lo, double hi, int panels) {
    const auto& g = gl32();
    double total = 0.0;
    double width = (hi - lo) / panels;
    for (int p = 0; p < panels; ++p) {
        double a = lo + p * width;
        double mid = a + 0.5 * width, half = 0.5 * width;
        double acc = 0.0;
        for (int i = 0; i < 32; ++i) acc += g.weight[i] * f(mid + half * g.node[i]);
        total += acc * half;
    }
    return total;
}

}  // namespace detail

// Regularized incomplete beta I_x(a, b).
inline double regularized_incomplete_beta(double a, double b, double x) {
    if (!(a > 0.0) || !(b > 0.0))
        throw std::invalid_argument("incomplete beta: a, b must be positive");
    if (x <= 0.0) return 0.0;
    if (x >= 1.0) return 1.0;
    double ln_front = std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) +
                      a * std::log(x) + b * std::log1p(-x);
    double front = std::exp(ln_front);
    if (x < (a + 1.0) / (a + b + 2.0))
        return front * detail::beta_cf(a, b, x) / a;
    return 1.0 - front * detail::beta_cf(b, a, 1.0 - x) / b;
}

inline double t_cdf(double t, double df) {
    if (df <= 0.0) throw std::invalid_argument("t_cdf: df must be positive");
    if (std::isinf(t)) return t > 0 ? 1.0 : 0.0;
    double x = df / (df + t * t);
    double half_tail = 0.5 * regularized_incomplete_beta(df / 2.0, 0.5, x);
    return t >= 0.0 ? 1.0 - half_tail : half_tail;
}

inline double f_cdf(double x, double df1, double df2) {
    if (df1 <= 0.0 || df2 <= 0.0)
        throw std::invalid_argument("f_cdf: degrees of freedom must be positive");
    if (x <= 0.0) return 0.0;
    return regularized_incomplete_beta(df1 / 2.0, df2 / 2.0,
                                       df1 * x / (df1 * x + df2));
}

inline double t_quantile(double p, double df) {
    if (!(p > 0.0 && p < 1.0))
        throw std::invalid_argument("t_quantile: p must be in (0, 1)");
    double hi = 1.0;
    while (t_cdf(hi, df) < p && hi < 1e12) hi *= 2.0;
    double lo = -1.0;
    while (t_cdf(lo, df) > p && lo > -1e12) lo *= 2.0;
    for (int i = 0; i < 200 && hi - lo > 1e-10; ++i) {
        double mid = 0.5 * (lo + hi);
        (t_cdf(mid, df) < p ? lo : hi) = mid;
    }
    return 0.5 * (lo + hi);
}

// P(range of k iid standard normals <= w), the inner layer of the
// studentized range distribution. The z integral runs over a truncated
// normal domain; the per-node factor is a normal-CDF difference.
inline double normal_range_cdf(double w, int k) {
    if (w <= 0.0) return 0.0;
    if (k < 2) throw std::invalid_argument("normal_range_cdf: k must be >= 2");
    auto f = [&](double z) {
        return normal_pdf(z) *
               std::pow(normal_cdf(z + w) - normal_cdf(z), k - 1);
    };
    return k * detail::integrate_gl32(f, -8.5, 8.5, 4);
}

// P(Q <= q) for the studentized range with k groups and df degrees of
// freedom: the outer integral weights the range CDF by the density of
// s = sqrt(chi^2_df / df), truncated where the density is negligible.
inline double studentized_range_cdf(double q, int k, double df) {
    if (k < 2) throw std::invalid_argument("studentized_range_cdf: k must be >= 2");
    if (df <= 0.0)
        throw std::invalid_argument("studentized_range_cdf: df must be positive");
    if (q <= 0.0) return 0.0;
    if (df > 1e6) return normal_range_cdf(q, k);
    double ln_norm = (1.0 - df / 2.0) * std::log(2.0) +
                     (df / 2.0) * std::log(df) - std::lgamma(df / 2.0);
    auto density = [&](double s) {
        if (s <= 0.0) return 0.0;
        return std::exp(ln_norm + (df - 1.0) * std::log(s) - df * s * s / 2.0);
    };
    double spread = 12.0 / std::sqrt(2.0 * df);
    double lo = std::max(0.0, 1.0 - spread);
    double hi = 1.0 + spread;
    auto f = [&](double s) { return density(s) * normal_range_cdf(q * s, k); };
    double v = detail::integrate_gl32(f, lo, hi, 4);
    return std::clamp(v, 0.0, 1.0);
}

inline double studentized_range_quantile(double p, int k, double df) {
    if (!(p > 0.0 && p < 1.0))
        throw std::invalid_argument("studentized_range_quantile: p must be in (0, 1)");
    double lo = 0.0, hi = 4.0;
    while (studentized_range_cdf(hi, k, df) < p && hi < 1e6) hi *= 2.0;
    for (int i = 0; i < 200 && hi - lo > 1e-10; ++i) {
        double mid = 0.5 * (lo + hi);
        (studentized_range_cdf(mid, k, df) < p ? lo : hi) = mid;
    }
    return 0.5 * (lo + hi);
}

struct SampleGroup {
    std::string label;
    std::vector<double> values;
};

struct CiEstimate {
    double mean = 0.0;
    double ci_low = 0.0;
    double ci_high = 0.0;
};

inline double mean_of(std::span<const double> v) {
    return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

inline double sample_variance(std::span<const double> v) {
    double m = mean_of(v);
    double ss = 0.0;
    for (double x : v) ss += (x - m) * (x - m);
    return ss / static_cast<double>(v.size() - 1);
}

// mean +/- t(1-(1-confidence)/2, n-1) * s/sqrt(n). Zero variance gives
// a zero-width interval.
inline CiEstimate mean_ci_t(std::span<const double> values, double confidence) {
    if (values.size() < 2)
        throw std::invalid_argument("mean_ci_t: need at least 2 values");
    if (!(confidence > 0.0 && confidence < 1.0))
        throw std::invalid_argument("mean_ci_t: confidence must be in (0, 1)");
    for (double x : values)
        if (!std::isfinite(x))
            throw std::invalid_argument("mean_ci_t: values must be finite");
    double n = static_cast<double>(values.size());
    double m = mean_of(values);
    double s = std::sqrt(sample_variance(values));
    double t = t_quantile(1.0 - (1.0 - confidence) / 2.0, n - 1.0);
    double half = t * s / std::sqrt(n);
    return {m, m - half, m + half};
}

struct AnovaResult {
    double f_stat = 0.0;
    double p_value = 1.0;
    int df_between = 0;
    int df_within = 0;
    std::vector<double> group_means;
    double grand_mean = 0.0;
    double ss_between = 0.0;
    double ss_within = 0.0;
    // Zero within-group variance with distinct means: p pinned to 0.
    bool degenerate = false;
    // Classic equal-variance ANOVA; flags variance ratios > 10 so the
    // caller can judge applicability (Welch is intentionally not applied).
    bool variance_ratio_warning = false;
};

namespace detail {

inline void check_groups(std::span<const SampleGroup> groups) {
    if (groups.size() < 2)
        throw std::invalid_argument("need at least 2 groups");
    for (const auto& g : groups) {
        if (g.values.size() < 2)
            throw std::invalid_argument("group \"" + g.label +
                                        "\" needs at least 2 values");
        for (double x : g.values)
            if (!std::isfinite(x))
                throw std::invalid_argument("group \"" + g.label +
                                            "\" contains a non-finite value");
    }
}

}  // namespace detail

inline AnovaResult one_way_anova(std::span<const SampleGroup> groups) {
    detail::check_groups(groups);
    AnovaResult r;
    std::size_t total_n = 0;
    double grand_sum = 0.0;
    for (const auto& g : groups) {
        total_n += g.values.size();
        grand_sum += std::accumulate(g.values.begin(), g.values.end(), 0.0);
    }
    r.grand_mean = grand_sum / static_cast<double>(total_n);
    double min_var = std::numeric_limits<double>::infinity(), max_var = 0.0;
    for (const auto& g : groups) {
        double m = mean_of(g.values);
        r.group_means.push_back(m);
        double n = static_cast<double>(g.values.size());
        r.ss_between += n * (m - r.grand_mean) * (m - r.grand_mean);
        double ss = 0.0;
        for (double x : g.values) ss += (x - m) * (x - m);
        r.ss_within += ss;
        double var = ss / (n - 1.0);
        min_var = std::min(min_var, var);
        max_var = std::max(max_var, var);
    }
    r.df_between = static_cast<int>(groups.size()) - 1;
    r.df_within = static_cast<int>(total_n) - static_cast<int>(groups.size());
    if (max_var > 0.0 && (min_var == 0.0 || max_var / min_var > 10.0))
        r.variance_ratio_warning = true;
    if (r.ss_between == 0.0) {
        r.f_stat = 0.0;
        r.p_value = 1.0;
        r.degenerate = r.ss_within == 0.0;
        return r;
    }
    if (r.ss_within == 0.0) {
        r.f_stat = std::numeric_limits<double>::infinity();
        r.p_value = 0.0;
        r.degenerate = true;
        return r;
    }
    // (ssb * df_w) / (ssw * df_b) keeps exact-rational cases exact.
    r.f_stat = (r.ss_between * r.df_within) / (r.ss_within * r.df_between);
    r.p_value = 1.0 - f_cdf(r.f_stat, r.df_between, r.df_within);
    return r;
}

struct TukeyPair {
    std::string label_a, label_b;
    double mean_diff = 0.0;  // mean_a - mean_b
    double q_stat = 0.0;
    double p_value = 1.0;
    bool significant = false;
    bool degenerate = false;
};

struct TukeyResult {
    std::vector<TukeyPair> pairs;
    double ms_within = 0.0;
    int df_within = 0;
    double alpha = 0.05;
};

// Tukey-Kramer: q = |m_i - m_j| / sqrt(MSW/2 * (1/n_i + 1/n_j)), with p
// from the studentized range distribution (k groups, df_within).
inline TukeyResult tukey_hsd(std::span<const SampleGroup> groups, double alpha) {
    detail::check_groups(groups);
    if (!(alpha > 0.0 && alpha < 1.0))
        throw std::invalid_argument("tukey_hsd: alpha must be in (0, 1)");
    TukeyResult r;
    r.alpha = alpha;
    int k = static_cast<int>(groups.size());
    std::size_t total_n = 0;
    double ssw = 0.0;
    std::vector<double> means;
    for (const auto& g : groups) {
        total_n += g.values.size();
        double m = mean_of(g.values);
        means.push_back(m);
        for (double x : g.values) ssw += (x - m) * (x - m);
    }
    r.df_within = static_cast<int>(total_n) - k;
    r.ms_within = ssw / r.df_within;
    for (int i = 0; i < k; ++i) {
        for (int j = i + 1; j < k; ++j) {
            TukeyPair pr;
            pr.label_a = groups[i].label;
            pr.label_b = groups[j].label;
            pr.mean_diff = means[i] - means[j];
            double ni = static_cast<double>(groups[i].values.size());
            double nj = static_cast<double>(groups[j].values.size());
            double se = std::sqrt(r.ms_within / 2.0 * (1.0 / ni + 1.0 / nj));
            if (se == 0.0) {
                if (pr.mean_diff == 0.0) {
                    pr.q_stat = 0.0;
                    pr.p_value = 1.0;
                } else {
                    pr.q_stat = std::numeric_limits<double>::infinity();
                    pr.p_value = 0.0;
                    pr.degenerate = true;
                }
            } else {
                pr.q_stat = std::fabs(pr.mean_diff) / se;
                pr.p_value =
                    1.0 - studentized_range_cdf(pr.q_stat, k, r.df_within);
            }
            pr.significant = pr.p_value < alpha;
            r.pairs.push_back(std::move(pr));
        }
    }
    return r;
}

struct DescriptiveCompare {
    double mean_a = 0.0;
    double mean_b = 0.0;
    double diff = 0.0;  // mean_a - mean_b
};

inline DescriptiveCompare descriptive_compare(const SampleGroup& a,
                                              const SampleGroup& b) {
    if (a.values.empty() || b.values.empty())
        throw std::invalid_argument("descriptive_compare: empty group");
    DescriptiveCompare d;
    d.mean_a = mean_of(a.values);
    d.mean_b = mean_of(b.values);
    d.diff = d.mean_a - d.mean_b;
    return d;
}

}  // namespace tutorbench::stats
