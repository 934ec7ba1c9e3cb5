#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace threedpm::bounds {

/// Probability of confidence exp(-2 eps^2 n).
double poc(double epsilon, std::uint64_t n);

/// Smallest n with 2 exp(-2 eps^2 n) <= alpha: ceil(ln(2/alpha) / (2 eps^2)).
/// Throws DomainError unless eps in (0, 1) and alpha in (0, 2].
std::uint64_t min_samples(double epsilon, double alpha);

/// Bootstrap estimate of Pr(|mean(nu) - true_error| >= eps) from resampled means.
/// Throws DomainError on an empty list or non-binary entries.
double empirical_point_probability(const std::vector<int>& results, double true_error, double epsilon,
                                   int resamples = 2000, std::uint64_t seed = 0);

/// Frequency with which the mean of n Bernoulli(p) draws deviates from p by >= eps.
double deviation_frequency(double p, std::uint64_t n, double epsilon, int trials, std::uint64_t seed);

struct PocRow {
    std::uint64_t n = 0;
    double poc = 0.0;
    double epsilon = 0.0;
};

std::vector<PocRow> poc_curve(const std::vector<double>& epsilons, std::uint64_t n_max, std::uint64_t n_step = 1);

/// CSV with header `n,poc,epsilon`.
std::string poc_curve_csv(const std::vector<PocRow>& rows);

}  // namespace threedpm::bounds
