// SPDX-License-Identifier: Apache-2.0
#include "counselforge/statistics.hpp"

#include "counselforge/errors.hpp"

#include <boost/math/distributions/students_t.hpp>
#include <fmt/core.h>

#include <algorithm>
#include <cmath>

namespace counselforge {

double mean(const std::vector<double>& xs) {
    if (xs.empty()) {
        throw PreconditionError("mean of an empty sample");
    }
    double sum = 0.0;
    for (double x : xs) {
        sum += x;
    }
    return sum / static_cast<double>(xs.size());
}

double student_t_two_sided_p(double t, double df) {
    const boost::math::students_t dist(df);
    return 2.0 * boost::math::cdf(boost::math::complement(dist, std::abs(t)));
}

TTestResult paired_t_test(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() != b.size()) {
        throw LengthMismatchError(fmt::format("paired samples differ in length ({} vs {})", a.size(), b.size()));
    }
    const std::size_t n = a.size();
    if (n < 2) {
        throw PreconditionError("paired t-test needs at least two pairs");
    }
    std::vector<double> d(n);
    for (std::size_t i = 0; i < n; ++i) {
        d[i] = a[i] - b[i];
    }
    const double md = mean(d);
    double ss = 0.0;
    for (double x : d) {
        ss += (x - md) * (x - md);
    }
    const double sd = std::sqrt(ss / static_cast<double>(n - 1));
    if (!(sd > 0.0)) {
        throw DegenerateVarianceError("paired differences have zero variance");
    }
    TTestResult r;
    r.df = n - 1;
    r.t = md / (sd / std::sqrt(static_cast<double>(n)));
    r.p_two_sided = student_t_two_sided_p(r.t, static_cast<double>(r.df));
    return r;
}

double pearson_r(const std::vector<double>& x, const std::vector<double>& y) {
    if (x.size() != y.size()) {
        throw LengthMismatchError(fmt::format("correlation inputs differ in length ({} vs {})", x.size(), y.size()));
    }
    if (x.size() < 3) {
        throw PreconditionError("correlation needs at least three points");
    }
    const double mx = mean(x);
    const double my = mean(y);
    double sxy = 0.0;
    double sxx = 0.0;
    double syy = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double dx = x[i] - mx;
        const double dy = y[i] - my;
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if (!(sxx > 0.0) || !(syy > 0.0)) {
        throw DegenerateVarianceError("correlation input has zero variance");
    }
    return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

double cosine(const std::vector<double>& u, const std::vector<double>& v) {
    if (u.size() != v.size()) {
        throw DimensionMismatchError(fmt::format("vector dimensions differ ({} vs {})", u.size(), v.size()));
    }
    double dot = 0.0;
    for (std::size_t i = 0; i < u.size(); ++i) {
        dot += u[i] * v[i];
    }
    return std::clamp(dot, -1.0, 1.0);
}

} // namespace counselforge
