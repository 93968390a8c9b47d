#ifndef COHORTFORGE_BENCH_HPP
#define COHORTFORGE_BENCH_HPP

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "cohortforge/estimators.hpp"
#include "cohortforge/impute.hpp"
#include "cohortforge/scm.hpp"

namespace cohortforge {

struct MissingHandling {
    enum class Kind { None, CompleteCase, MultipleImputation } kind = Kind::None;
    ImputeScope scope = ImputeScope::PooledWithIndicator;
    int m = 20;
};

struct BenchEstimatorConfig {
    std::string label;
    enum class Method { Crude, Conditional, IPW, GComp, AIPW } method = Method::Crude;
    std::vector<std::string> covariates;
    bool include_cohort_indicator = false;
    MissingHandling missing;
    bool participation_ipw = false; // weight the restricted analysis by 1/P(selected | ...)
    std::vector<std::string> participation_covariates;
    int bootstrap = 0; // per-replication CI resamples; 0 skips CIs
    std::optional<std::string> exposure_override;
};

std::string to_string(BenchEstimatorConfig::Method m);

// A benchmark run: R replications of simulate -> restrict -> handle
// missingness -> estimate, aggregated against the enumeration oracle.
struct ScenarioSpec {
    std::string scenario_id; // S-1A..S-3B, or "custom" with model+cohorts
    std::optional<StructuralModel> custom_model;
    std::optional<std::vector<CohortConfig>> custom_cohorts;
    std::optional<std::string> custom_analysis_exposure;
    std::map<std::string, Missingness> missingness; // applied to every cohort
    std::vector<BenchEstimatorConfig> estimators;
    int replications = 200;
    int n_per_cohort = 20000;
    std::uint64_t base_seed = 0;
    bool keep_replication_log = false;
};

struct BiasRow {
    std::string label;
    std::string method;
    EstimandScope scope = EstimandScope::Marginal;
    double oracle_log_or = 0.0;
    double mean_log_or = 0.0;
    double bias = 0.0;
    double mc_se = 0.0;                  // sd over replications / sqrt(R_used)
    std::optional<double> coverage;      // 95% CI coverage, when CIs were produced
    std::optional<double> mean_ci_width; // log scale
    int nonconverged = 0;
    int replications_used = 0;
    std::vector<std::string> warnings;
    std::vector<double> replication_log; // per-replication log-OR (when kept)
};

struct BiasReport {
    std::string scenario_id;
    int replications = 0;
    int n_per_cohort = 0;
    std::uint64_t seed = 0;
    double true_marginal_log_or = 0.0;
    double true_conditional_log_or = 0.0;
    std::vector<BiasRow> rows;
};

BiasReport run_scenario(const ScenarioSpec& spec);

struct PoolingContrast {
    std::string label;
    BiasRow without_remedy;
    BiasRow with_remedy;
    double reduction_ratio = 0.0; // 1 - |bias_with| / |bias_without|
};

struct PoolingContrastReport {
    std::string scenario_id;
    std::vector<PoolingContrast> contrasts;
};

// The same estimator with and without the cohort-indicator remedy: the
// indicator joins the adjustment sets, and a MultipleImputation config is
// contrasted against its complete-case counterpart.
PoolingContrastReport pooling_contrast(const ScenarioSpec& spec);

struct TwoByTwo {
    double exposed_cases = 0;
    double exposed_noncases = 0;
    double unexposed_cases = 0;
    double unexposed_noncases = 0;

    double odds_ratio() const;
};

struct MisclassificationCorrection {
    TwoByTwo corrected;
    double corrected_or = 0.0;
};

// Matrix-inversion correction of the observed exposure margins within each
// outcome stratum. Requires sensitivity + specificity > 1; corrected cells
// must remain non-negative.
MisclassificationCorrection misclassification_correct(const TwoByTwo& observed, double sensitivity,
                                                      double specificity);

// External interface: report emission plus scenario-spec files.
std::string bias_report_to_csv(const BiasReport& report);
std::string bias_report_to_json(const BiasReport& report);
std::string replication_log_to_csv(const BiasReport& report);
std::string bias_report_summary(const BiasReport& report); // aligned table
std::string pooling_contrast_to_json(const PoolingContrastReport& report);
std::string pooling_contrast_summary(const PoolingContrastReport& report);

ScenarioSpec scenario_spec_from_json_string(const std::string& text);
ScenarioSpec load_scenario_spec(const std::string& path);

// Ready-made estimator configurations for the built-in scenarios.
std::vector<BenchEstimatorConfig> default_bench_configs(const std::string& scenario_id);

} // namespace cohortforge

#endif
