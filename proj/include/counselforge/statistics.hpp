// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <vector>

namespace counselforge {

struct TTestResult {
    double t = 0.0;
    double p_two_sided = 1.0;
    std::size_t df = 0;
};

/// Paired t-test on d = a - b with the n-1 standard deviation and a two-sided p-value.
/// Throws LengthMismatchError, PreconditionError (n < 2) or DegenerateVarianceError (sd = 0).
TTestResult paired_t_test(const std::vector<double>& a, const std::vector<double>& b);

/// Pearson product-moment correlation. Needs n >= 3 and non-zero variance on both sides.
double pearson_r(const std::vector<double>& x, const std::vector<double>& y);

/// Dot product of two unit vectors clamped to [-1, 1]. Throws DimensionMismatchError.
double cosine(const std::vector<double>& u, const std::vector<double>& v);

double mean(const std::vector<double>& xs);

/// Two-sided tail probability of Student's t with `df` degrees of freedom.
double student_t_two_sided_p(double t, double df);

} // namespace counselforge
