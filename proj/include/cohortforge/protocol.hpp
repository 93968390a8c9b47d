#ifndef COHORTFORGE_PROTOCOL_HPP
#define COHORTFORGE_PROTOCOL_HPP

#include <map>
#include <string>
#include <vector>

#include "cohortforge/common.hpp"
#include "cohortforge/dag.hpp"
#include "cohortforge/impute.hpp"
#include "cohortforge/scm.hpp"

namespace cohortforge {

enum class ProtocolComponent { Eligibility, Treatment, Assignment, FollowUp, Outcome };

std::string to_string(ProtocolComponent c);
ProtocolComponent protocol_component_from_string(const std::string& s);

struct PopulationDescriptor {
    std::string age_at_entry;
    std::string setting;
    std::string epoch;
};

struct ArmDescriptor {
    std::string id;
    std::string description;
    bool comparator = false;
    std::string intervention_mechanism; // empty: imprecisely defined intervention
};

struct FollowUpSpec {
    std::string start_event;
    std::string end_event;
    int start_ordinal = 0; // asserts the semantic ordering of the free text
    int end_ordinal = 1;
};

struct OutcomeSpec {
    std::string construct;
    std::string scale;
    std::string threshold;
};

// The ideal hypothetical randomized trial the emulations are measured
// against (protocol components A-F).
struct TargetTrialProtocol {
    std::string name;
    std::string eligibility_text;
    PopulationDescriptor population;
    std::vector<ArmDescriptor> arms; // >= 2, exactly one comparator
    std::string assignment;
    FollowUpSpec follow_up;
    OutcomeSpec outcome;
    EffectMeasure effect_measure = EffectMeasure::OddsRatio;
    EstimandScope effect_scope = EstimandScope::Marginal;
};

struct ExposureMeasure {
    std::vector<std::string> instruments;
    std::vector<std::string> waves;
    std::string threshold_rule;
};

struct ConfounderSpec {
    std::string name;
    std::string measure; // differs from name when measured by proxy
    std::vector<std::string> coding;
};

enum class AdjustmentApproach { None, Regression, IPW, GComputation, AIPW };
std::string to_string(AdjustmentApproach a);
AdjustmentApproach adjustment_from_string(const std::string& s);

struct TimingSpec {
    std::string start;
    std::string end;
};

struct OutcomeMeasureSpec {
    std::string instrument;
    std::string reporter;
    std::string threshold;
};

struct MissingDataStrategy {
    enum class Kind { CompleteCase, MultipleImputation } kind = Kind::CompleteCase;
    ImputeScope scope = ImputeScope::PerCohort;
    int m = 0; // >= 2 when MultipleImputation
};

struct PlanNote {
    ProtocolComponent component = ProtocolComponent::Eligibility;
    std::string text;
};

// One cohort's emulation of the protocol. Comparison against the protocol is
// field-structural: the flags (epoch, geography, instrument and wave ids)
// decide mismatches, the free text rides along as annotation.
struct EmulationPlan {
    std::string cohort;
    std::string sample_selection_text;
    std::string recruitment_epoch;
    std::string geography;
    std::string screening_window;
    std::map<std::string, ExposureMeasure> exposure_measures; // arm id ->
    std::vector<ConfounderSpec> confounders;
    AdjustmentApproach adjustment = AdjustmentApproach::None;
    TimingSpec timing;
    OutcomeMeasureSpec outcome_measure;
    MissingDataStrategy missing_data;
    std::vector<PlanNote> notes;
};

struct BiasRiskEntry {
    ProtocolComponent component = ProtocolComponent::Eligibility;
    BiasClass bias_kind = BiasClass::Selection; // never Causal
    bool across = false;
    std::string cohort;                        // Within scope
    std::pair<std::string, std::string> pair;  // Across scope, sorted
    std::string description;
};

// Table 1 consistency: Confounding arises at Assignment; Selection at
// Eligibility; Measurement at Treatment, Assignment, FollowUp, or Outcome.
bool component_bias_consistent(ProtocolComponent component, BiasClass kind);

ValidationReport validate_protocol(const TargetTrialProtocol& p);

// Per-cohort comparison against the protocol (Within entries), then pairwise
// cross-plan comparison (Across entries). Ordered by component, then scope,
// then cohort.
std::vector<BiasRiskEntry> emulation_gap_report(const TargetTrialProtocol& p,
                                                const std::vector<EmulationPlan>& plans);

struct HarmonizationEntry {
    std::string variable;
    std::map<std::string, std::vector<std::string>> native_coding; // cohort ->
    std::vector<std::string> common_coding;                        // fewest categories wins
    std::vector<std::string> loss_flags;     // cohorts whose categories collapse
    std::vector<std::string> present_in;     // cohorts carrying the variable
    bool subset_only = false;                // absent from at least one cohort
};

struct HarmonizationAudit {
    std::vector<HarmonizationEntry> entries; // sorted by variable
};

HarmonizationAudit harmonization_audit(const std::vector<EmulationPlan>& plans);

enum class ReportFormat { Text, Json, Markdown };
ReportFormat report_format_from_string(const std::string& s);

// Byte-deterministic rendering; the Markdown layout mirrors the
// component-by-component emulation table (target trial x per-cohort
// emulation x remaining risks).
std::string render_report(const TargetTrialProtocol& p, const std::vector<EmulationPlan>& plans,
                          const std::vector<BiasRiskEntry>& entries, const HarmonizationAudit& audit,
                          ReportFormat format);

struct ProtocolBundle {
    TargetTrialProtocol protocol;
    std::vector<EmulationPlan> plans;
};

ProtocolBundle protocol_bundle_from_json_string(const std::string& text);
ProtocolBundle load_protocol_bundle(const std::string& path);
EmulationPlan plan_from_json_string(const std::string& text);
std::string protocol_bundle_to_json_string(const ProtocolBundle& bundle);

} // namespace cohortforge

#endif
