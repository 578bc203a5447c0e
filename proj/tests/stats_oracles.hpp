#pragma once

// Independent statistical reference computations shared by the test binaries.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <vector>

namespace oracle {

struct Moments {
    double n = 0.0;
    double mean = 0.0;
    double variance = 0.0;  // divisor n
    double m4 = 0.0;        // fourth central moment
};

inline Moments moments(const std::vector<double>& v) {
    Moments m;
    m.n = static_cast<double>(v.size());
    for (double x : v) m.mean += x;
    m.mean /= m.n;
    for (double x : v) {
        const double d2 = (x - m.mean) * (x - m.mean);
        m.variance += d2;
        m.m4 += d2 * d2;
    }
    m.variance /= m.n;
    m.m4 /= m.n;
    return m;
}

/// Asymptotic Kolmogorov tail probability Q(lambda) = 2 sum (-1)^{k-1} exp(-2 k^2 lambda^2).
inline double kolmogorov_q(double lambda) {
    if (lambda < 0.2) return 1.0;
    double sum = 0.0;
    for (int k = 1; k <= 100; ++k) {
        const double term = std::exp(-2.0 * k * k * lambda * lambda);
        sum += (k % 2 == 1 ? term : -term);
        if (term < 1e-16) break;
    }
    return std::clamp(2.0 * sum, 0.0, 1.0);
}

inline double ks_statistic(std::vector<double> a, std::vector<double> b) {
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    std::size_t i = 0;
    std::size_t j = 0;
    double d = 0.0;
    while (i < a.size() && j < b.size()) {
        const double x = std::min(a[i], b[j]);
        while (i < a.size() && a[i] <= x) ++i;
        while (j < b.size() && b[j] <= x) ++j;
        d = std::max(d, std::abs(static_cast<double>(i) / a.size() - static_cast<double>(j) / b.size()));
    }
    return d;
}

/// Two-sample Kolmogorov-Smirnov p-value with the Stephens small-sample correction.
inline double ks_two_sample_pvalue(const std::vector<double>& a, const std::vector<double>& b) {
    const double d = ks_statistic(a, b);
    const double ne = static_cast<double>(a.size()) * b.size() / (a.size() + b.size());
    const double root = std::sqrt(ne);
    return kolmogorov_q((root + 0.12 + 0.11 / root) * d);
}

}  // namespace oracle
