#ifndef COHORTFORGE_SCM_HPP
#define COHORTFORGE_SCM_HPP

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "cohortforge/common.hpp"
#include "cohortforge/dag.hpp"
#include "cohortforge/dataset.hpp"

namespace cohortforge {

enum class MechanismFamily { BernoulliLogit, Deterministic, Misclassify };

// Generative mechanism for one non-root node. Logit coefficients reference
// DAG parents of the node; Deterministic carries a truth table over the
// parent value combinations; Misclassify flips a binary source parent with
// the stated sensitivity/specificity.
struct Mechanism {
    std::string node;
    MechanismFamily family = MechanismFamily::BernoulliLogit;

    double intercept = 0.0;
    std::map<std::string, double> coefficients;

    std::vector<std::string> table_parents; // Deterministic: parent order for the table
    std::vector<int> table;                 // row-major over parent domains

    std::string source;       // Misclassify
    double sensitivity = 1.0; // P(X* = 1 | source = 1)
    double specificity = 1.0; // P(X* = 0 | source = 0)
};

struct StructuralModel {
    CausalDag dag;
    std::map<std::string, Mechanism> mechanisms; // one per non-root node
    std::map<std::string, double> root_priors;   // Bernoulli p per root
    std::string exposure;
    std::string outcome;

    int domain_size(const std::string& node) const;
    ValidationReport validate() const;
};

// Returns a copy with `node` deleted: its mechanism and prior go away and
// coefficients referencing it are dropped from other mechanisms. Used for
// oracle-covariate variants of the benchmark scenarios.
StructuralModel without_node(const StructuralModel& model, const std::string& node);

struct Missingness {
    enum class Kind { MCAR, MAR } kind = Kind::MCAR;
    double rate = 0.0;                        // MCAR
    double intercept = 0.0;                   // MAR logit on fully observed variables
    std::map<std::string, double> predictors; // variable -> coefficient
};

struct MechanismOverride {
    std::optional<double> intercept;
    std::map<std::string, double> coefficients;
    std::optional<double> sensitivity;
    std::optional<double> specificity;
    std::optional<double> root_prior;
};

struct CohortConfig {
    std::string id;
    int n = 0;
    std::map<std::string, MechanismOverride> overrides;
    std::map<std::string, Missingness> missingness;
    std::optional<std::string> selection_node;
};

// Ancestral sampling in topological order, per-cohort overrides applied,
// missingness masked after generation. Bit-reproducible for a given
// (model, cohorts, seed); each cohort draws from a derived stream.
MultiCohortDataset simulate(const StructuralModel& model, const std::vector<CohortConfig>& cohorts,
                            std::uint64_t seed);

enum class EffectMeasure { OddsRatio, RiskRatio, RiskDifference };
enum class EstimandScope { Marginal, Conditional };

std::string to_string(EffectMeasure m);
std::string to_string(EstimandScope s);

struct Estimand {
    EstimandScope scope = EstimandScope::Marginal;
    std::map<std::string, int> strata; // Conditional: variable -> stratum value
};

struct TrueEffect {
    double comparator_risk = 0.0;
    double arm_risk = 0.0;
    double value = 0.0; // requested contrast on its natural scale
};

// Exact potential-outcome computation: P(Y = 1 | do(X = a)) by summing the
// joint over every configuration with the exposure mechanism replaced by the
// constant a. This is the target-trial oracle for bias benchmarking.
TrueEffect true_effect(const StructuralModel& model, const Estimand& estimand, EffectMeasure measure,
                       int arm = 1, int comparator = 0);

struct ScenarioBundle {
    std::string id;
    std::string description;
    StructuralModel model;
    std::vector<CohortConfig> cohorts;
    CausalDag dag_fixture;
    double true_marginal_log_or = 0.0; // frozen from the enumeration oracle
    std::optional<std::string> analysis_exposure; // measured exposure when != model exposure
};

// The six benchmark scenarios S-1A..S-3B under parameter set P1.
std::vector<ScenarioBundle> scenario_library();
const ScenarioBundle& find_scenario(const std::vector<ScenarioBundle>& library, const std::string& id);

// Scenario/model spec files.
StructuralModel model_from_json_string(const std::string& text);
std::string model_to_json_string(const StructuralModel& model);
std::vector<CohortConfig> cohorts_from_json(const std::string& text);
std::string cohorts_to_json(const std::vector<CohortConfig>& cohorts);

} // namespace cohortforge

#endif
