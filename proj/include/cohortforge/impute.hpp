#ifndef COHORTFORGE_IMPUTE_HPP
#define COHORTFORGE_IMPUTE_HPP

#include <string>
#include <vector>

#include "cohortforge/dataset.hpp"

namespace cohortforge {

enum class ImputeScope { PerCohort, PooledWithIndicator };

// Multiple imputation by chained equations over the analysis columns
// (all columns when empty). Each of the m imputations runs an independent
// chain: variables ordered by ascending missingness fraction, 10 burn-in
// cycles, models fit on an approximate-Bayesian-bootstrap resample of the
// observed rows so that parameter uncertainty propagates into the draws.
// PooledWithIndicator adds the cohort indicator to every imputation model;
// PerCohort runs the whole chain inside each cohort. Deterministic given
// the seed.
std::vector<MultiCohortDataset> multiple_impute(const MultiCohortDataset& data, int m,
                                                ImputeScope scope, std::uint64_t seed,
                                                const std::vector<std::string>& analysis_columns = {});

} // namespace cohortforge

#endif
