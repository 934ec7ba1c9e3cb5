#include "threedpm/bounds.hpp"

#include <cmath>
#include <cstdio>

#include "threedpm/errors.hpp"
#include "threedpm/random.hpp"

namespace threedpm::bounds {

double poc(double epsilon, std::uint64_t n) {
    if (!(epsilon > 0.0)) throw DomainError("poc: epsilon must be > 0");
    return std::exp(-2.0 * epsilon * epsilon * static_cast<double>(n));
}

std::uint64_t min_samples(double epsilon, double alpha) {
    if (!(epsilon > 0.0 && epsilon < 1.0)) throw DomainError("min_samples: epsilon must lie in (0, 1)");
    if (!(alpha > 0.0 && alpha <= 2.0)) throw DomainError("min_samples: alpha must lie in (0, 2]");
    const double bound = std::log(2.0 / alpha) / (2.0 * epsilon * epsilon);
    auto n = static_cast<std::uint64_t>(std::ceil(bound));
    // ceil of a value that is an integer up to rounding noise
    if (n > 0 && 2.0 * std::exp(-2.0 * epsilon * epsilon * static_cast<double>(n - 1)) <= alpha) --n;
    return n;
}

double empirical_point_probability(const std::vector<int>& results, double true_error, double epsilon,
                                   int resamples, std::uint64_t seed) {
    if (results.empty()) throw DomainError("empirical_point_probability: empty result list");
    if (resamples < 1) throw DomainError("empirical_point_probability: resamples must be >= 1");
    for (int r : results)
        if (r != 0 && r != 1) throw DomainError("empirical_point_probability: results must be 0 or 1");
    const std::size_t n = results.size();
    Rng rng(seed);
    int hits = 0;
    for (int b = 0; b < resamples; ++b) {
        std::uint64_t s = 0;
        for (std::size_t i = 0; i < n; ++i) s += static_cast<std::uint64_t>(results[rng.below(n)]);
        const double mean = static_cast<double>(s) / static_cast<double>(n);
        if (std::abs(mean - true_error) >= epsilon) ++hits;
    }
    return static_cast<double>(hits) / resamples;
}

double deviation_frequency(double p, std::uint64_t n, double epsilon, int trials, std::uint64_t seed) {
    if (!(p >= 0.0 && p <= 1.0)) throw DomainError("deviation_frequency: p must lie in [0, 1]");
    if (n == 0 || trials < 1) throw DomainError("deviation_frequency: n and trials must be >= 1");
    Rng rng(seed);
    int hits = 0;
    for (int t = 0; t < trials; ++t) {
        std::uint64_t s = 0;
        for (std::uint64_t i = 0; i < n; ++i) s += rng.uniform() < p ? 1 : 0;
        if (std::abs(static_cast<double>(s) / static_cast<double>(n) - p) >= epsilon) ++hits;
    }
    return static_cast<double>(hits) / trials;
}

std::vector<PocRow> poc_curve(const std::vector<double>& epsilons, std::uint64_t n_max, std::uint64_t n_step) {
    if (n_step == 0) throw DomainError("poc_curve: step must be >= 1");
    std::vector<PocRow> rows;
    for (double eps : epsilons)
        for (std::uint64_t n = 0; n <= n_max; n += n_step) rows.push_back({n, poc(eps, n), eps});
    return rows;
}

std::string poc_curve_csv(const std::vector<PocRow>& rows) {
    std::string out = "n,poc,epsilon\n";
    char buf[96];
    for (const auto& r : rows) {
        std::snprintf(buf, sizeof buf, "%llu,%.10g,%.6g\n", static_cast<unsigned long long>(r.n), r.poc, r.epsilon);
        out += buf;
    }
    return out;
}

}  // namespace threedpm::bounds
