#pragma once

#include <vector>

namespace mab {

struct KsResult {
    double d = 0.0;  // max |ECDF_a - ECDF_b|
    double p = 1.0;  // two-tailed asymptotic p-value
};

/// Two-sample Kolmogorov-Smirnov test. D is the exact supremum ECDF gap;
/// the p-value uses the asymptotic Kolmogorov distribution at effective
/// sample size n*m/(n+m), series truncated at 100 terms.
KsResult ks_two_sample(std::vector<double> a, std::vector<double> b);

double median(std::vector<double> v);

/// Inter-quartile range (linear-interpolation quartiles).
double iqr(std::vector<double> v);

}  // namespace mab
