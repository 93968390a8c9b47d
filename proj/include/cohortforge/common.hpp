#ifndef COHORTFORGE_COMMON_HPP
#define COHORTFORGE_COMMON_HPP

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace cohortforge {

using Mat2D = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic>;
using Vec1D = Eigen::Matrix<double, Eigen::Dynamic, 1>;
using Arr1D = Eigen::Array<double, Eigen::Dynamic, 1>;
using IntArr1D = Eigen::Array<int, Eigen::Dynamic, 1>;
using IntArr2D = Eigen::Array<int, Eigen::Dynamic, Eigen::Dynamic>;
using BoolArr1D = Eigen::Array<bool, Eigen::Dynamic, 1>;

inline double expit(double z) { return 1.0 / (1.0 + std::exp(-z)); }

// log(1 + exp(z)) without overflow for large |z|
inline double log1pexp(double z)
{
    return std::max(z, 0.0) + std::log1p(std::exp(-std::abs(z)));
}

inline double logit(double p) { return std::log(p / (1.0 - p)); }

// standard normal CDF
inline double norm_cdf(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }

inline std::uint64_t splitmix64_next(std::uint64_t& state)
{
    std::uint64_t z = (state += 0x9E3779B97F4A7C15ULL);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

// Deterministic RNG wrapper. All randomness in the library flows through
// this type so that a run is a pure function of the user-supplied seed.
// Derived streams (per cohort, per replication, per bootstrap resample)
// come from derive(), which mixes a tag into the seed instead of sharing
// the parent stream; sweeps stay reproducible independently of scheduling.
class Rng {
  public:
    explicit Rng(std::uint64_t seed) : base_(seed)
    {
        std::uint64_t st = seed;
        engine_.seed(splitmix64_next(st));
    }

    // uniform double in [0, 1) with 53 random bits
    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    bool bernoulli(double p) { return uniform() < p; }

    // uniform integer in [0, n)
    std::size_t uniform_index(std::size_t n)
    {
        return static_cast<std::size_t>(uniform() * static_cast<double>(n));
    }

    Rng derive(std::uint64_t tag) const
    {
        std::uint64_t st = base_;
        std::uint64_t mixed = splitmix64_next(st);
        return Rng(mixed ^ (tag * 0x9E3779B97F4A7C15ULL + 0x632BE59BD9B4E019ULL));
    }

  private:
    std::uint64_t base_ = 0;
    std::mt19937_64 engine_;
};

struct ValidationIssue {
    std::string code;
    std::string detail;
};

struct ValidationReport {
    std::vector<ValidationIssue> violations;
    std::vector<ValidationIssue> warnings;
    bool ok() const { return violations.empty(); }
};

// Thrown on precondition violations named in the operation contracts.
class DomainError : public std::runtime_error {
  public:
    explicit DomainError(const std::string& what) : std::runtime_error(what) {}
};

} // namespace cohortforge

#endif
