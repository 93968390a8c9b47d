#ifndef COHORTFORGE_ESTIMATORS_HPP
#define COHORTFORGE_ESTIMATORS_HPP

#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "cohortforge/common.hpp"
#include "cohortforge/dataset.hpp"
#include "cohortforge/scm.hpp"

namespace cohortforge {

struct FitResult {
    Vec1D coef;
    Mat2D cov; // inverse observed information
    bool converged = false;
    int iterations = 0;
    double log_lik = 0.0;
};

// Maximum-likelihood logistic regression by iteratively reweighted least
// squares. Converges when max |score| < 1e-8 or the relative log-likelihood
// change drops below 1e-10; suspected separation (50 iterations or any
// |coefficient| > 30) sets converged = false instead of throwing. Optional
// per-row weights support IPW; `init` warm-starts bootstrap refits.
FitResult fit_logistic(const Mat2D& X, const Vec1D& y, const Vec1D& weights = Vec1D(),
                       const Vec1D& init = Vec1D());

struct EffectEstimate {
    EffectMeasure measure = EffectMeasure::OddsRatio;
    EstimandScope scope = EstimandScope::Marginal;
    std::string arm;
    double point = 0.0;     // natural scale
    double log_point = 0.0; // OR/RR only
    double se_log = 0.0;    // SE of log(point); for RD the SE of the difference
    double ci_low = 0.0;
    double ci_high = 0.0;
    Eigen::Index n_used = 0;
    std::string method;
    std::string cohort = "pooled";
    std::vector<std::string> warnings;
};

struct EstimatorOptions {
    int bootstrap = 200; // resamples for marginal-estimator SEs; 0 skips CIs
    std::uint64_t seed = 0;
    bool include_cohort_indicator = false;
    bool stabilized = true;    // IPW
    bool interactions = false; // g-computation arm x covariate terms
    EffectMeasure measure = EffectMeasure::OddsRatio;
    Vec1D base_weights; // external row weights (e.g. participation IPW)
    // aipw only: covariate sets per nuisance model when they should differ
    // from the shared `covariates` argument (misspecification experiments)
    std::optional<std::vector<std::string>> aipw_outcome_covariates;
    std::optional<std::vector<std::string>> aipw_propensity_covariates;
};

// Conditional odds ratios from a logistic fit of the outcome on arm
// indicators plus covariates; Wald CIs. Rows must be complete in the
// analysis columns (apply complete_case or multiple_impute first).
std::vector<EffectEstimate> conditional_or(const MultiCohortDataset& data, const std::string& exposure,
                                           const std::string& outcome,
                                           const std::vector<std::string>& covariates,
                                           const EstimatorOptions& opts = {});

// Marginal contrasts from inverse-probability weighting. Propensities by
// logistic regression (one-vs-rest with normalization for > 2 arms),
// trimmed at the 1st/99th percentile; weighted per-arm outcome means.
std::vector<EffectEstimate> ipw_marginal(const MultiCohortDataset& data, const std::string& exposure,
                                         const std::string& outcome,
                                         const std::vector<std::string>& propensity_covariates,
                                         bool stabilized, const EstimatorOptions& opts = {});

// Marginal contrasts by g-computation: outcome regression, then predictions
// averaged over the empirical covariate distribution under each arm.
std::vector<EffectEstimate> g_computation(const MultiCohortDataset& data, const std::string& exposure,
                                          const std::string& outcome,
                                          const std::vector<std::string>& covariates,
                                          const EstimatorOptions& opts = {});

// Augmented IPW (doubly robust, binary exposure): consistent when either the
// outcome model or the propensity model is correct.
std::vector<EffectEstimate> aipw(const MultiCohortDataset& data, const std::string& exposure,
                                 const std::string& outcome, const std::vector<std::string>& covariates,
                                 const EstimatorOptions& opts = {});

enum class AdjustMethod { Conditional, IPW, GComp, AIPW };
std::string to_string(AdjustMethod m);
AdjustMethod adjust_method_from_string(const std::string& s);

// One-step pooled analysis on stacked data; the cohort indicator joins the
// covariate and propensity sets iff include_cohort_indicator.
std::vector<EffectEstimate> pooled_analysis(const MultiCohortDataset& pooled,
                                            bool include_cohort_indicator, AdjustMethod method,
                                            const std::string& exposure, const std::string& outcome,
                                            const std::vector<std::string>& covariates,
                                            const EstimatorOptions& opts = {});

struct CohortResult {
    std::string cohort_id;
    bool sufficient = true; // false: < 10 exposed or unexposed rows
    std::vector<EffectEstimate> estimates;
};

// Per-cohort replication of the chosen method, deterministic cohort order.
std::vector<CohortResult> replication_analysis(const MultiCohortDataset& pooled, AdjustMethod method,
                                               const std::string& exposure, const std::string& outcome,
                                               const std::vector<std::string>& covariates,
                                               const EstimatorOptions& opts = {});

struct MetaInput {
    double log_effect = 0.0;
    double se = 0.0;
};

struct MetaResult {
    double fixed = 0.0;
    double fixed_se = 0.0;
    double random = 0.0;
    double random_se = 0.0;
    double q = 0.0;
    double tau2 = 0.0; // DerSimonian-Laird
    double i2 = 0.0;   // percent
    std::vector<double> fixed_weights;
    std::vector<double> random_weights;
};

MetaResult meta_fixed_random(const std::vector<MetaInput>& inputs);

struct InteractionResult {
    std::string arm;
    double log_or = 0.0; // arm x cohort interaction coefficient
    double se = 0.0;
    double wald_p = 1.0;
};

// Pooled logistic model with arm, cohort, and arm x cohort terms (plus
// covariates); Wald tests of the interaction coefficients. Exactly two
// cohorts.
std::vector<InteractionResult> heterogeneity_interaction(const MultiCohortDataset& pooled,
                                                         const std::string& exposure,
                                                         const std::string& outcome,
                                                         const std::vector<std::string>& covariates,
                                                         const EstimatorOptions& opts = {});

struct RubinInput {
    double theta = 0.0;    // log scale
    double variance = 0.0; // within-imputation variance of theta
};

struct RubinResult {
    double pooled = 0.0;
    double within = 0.0;
    double between = 0.0;
    double total = 0.0; // W + (1 + 1/m) B
    double df = 0.0;    // Barnard-Rubin; infinity when B = 0 and nu_com is infinite
};

RubinResult rubin_pool(const std::vector<RubinInput>& inputs,
                       double nu_complete = std::numeric_limits<double>::infinity());

// External interface: estimate records as JSON and CSV rows.
std::string estimates_to_json(const std::vector<EffectEstimate>& estimates);
std::string estimates_to_csv(const std::vector<EffectEstimate>& estimates);

} // namespace cohortforge

#endif
