#include "cohortforge/protocol.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

namespace cohortforge {

using json = nlohmann::ordered_json;

std::string to_string(ProtocolComponent c)
{
    switch (c) {
        case ProtocolComponent::Eligibility: return "Eligibility";
        case ProtocolComponent::Treatment: return "Treatment";
        case ProtocolComponent::Assignment: return "Assignment";
        case ProtocolComponent::FollowUp: return "FollowUp";
        case ProtocolComponent::Outcome: return "Outcome";
    }
    return "Eligibility";
}

ProtocolComponent protocol_component_from_string(const std::string& s)
{
    if (s == "Eligibility") return ProtocolComponent::Eligibility;
    if (s == "Treatment") return ProtocolComponent::Treatment;
    if (s == "Assignment") return ProtocolComponent::Assignment;
    if (s == "FollowUp") return ProtocolComponent::FollowUp;
    if (s == "Outcome") return ProtocolComponent::Outcome;
    throw DomainError("unknown protocol component '" + s + "'");
}

std::string to_string(AdjustmentApproach a)
{
    switch (a) {
        case AdjustmentApproach::None: return "None";
        case AdjustmentApproach::Regression: return "Regression";
        case AdjustmentApproach::IPW: return "IPW";
        case AdjustmentApproach::GComputation: return "GComputation";
        case AdjustmentApproach::AIPW: return "AIPW";
    }
    return "None";
}

AdjustmentApproach adjustment_from_string(const std::string& s)
{
    if (s == "None") return AdjustmentApproach::None;
    if (s == "Regression") return AdjustmentApproach::Regression;
    if (s == "IPW") return AdjustmentApproach::IPW;
    if (s == "GComputation") return AdjustmentApproach::GComputation;
    if (s == "AIPW") return AdjustmentApproach::AIPW;
    throw DomainError("unknown adjustment approach '" + s + "'");
}

bool component_bias_consistent(ProtocolComponent component, BiasClass kind)
{
    switch (kind) {
        case BiasClass::Confounding: return component == ProtocolComponent::Assignment;
        case BiasClass::Selection: return component == ProtocolComponent::Eligibility;
        case BiasClass::Measurement:
            return component == ProtocolComponent::Treatment ||
                   component == ProtocolComponent::Assignment ||
                   component == ProtocolComponent::FollowUp || component == ProtocolComponent::Outcome;
        case BiasClass::Causal: return false;
    }
    return false;
}

ValidationReport validate_protocol(const TargetTrialProtocol& p)
{
    ValidationReport report;
    if (p.eligibility_text.empty() && p.population.age_at_entry.empty() && p.population.setting.empty())
        report.violations.push_back({"missing-component", "eligibility criteria are empty"});
    if (p.assignment.empty())
        report.violations.push_back({"missing-component", "assignment procedure is empty"});
    if (p.follow_up.start_event.empty() || p.follow_up.end_event.empty())
        report.violations.push_back({"missing-component", "follow-up period is incomplete"});
    if (p.outcome.construct.empty())
        report.violations.push_back({"missing-component", "outcome construct is empty"});

    if (p.arms.size() < 2)
        report.violations.push_back(
            {"arms", "treatment strategies need a comparator and at least one intervention arm"});
    std::set<std::string> ids;
    int comparators = 0;
    for (const ArmDescriptor& arm : p.arms) {
        if (!ids.insert(arm.id).second)
            report.violations.push_back({"duplicate-arm", "arm id '" + arm.id + "' declared twice"});
        comparators += arm.comparator;
        if (arm.intervention_mechanism.empty())
            report.warnings.push_back(
                {"imprecise-intervention",
                 "arm '" + arm.id +
                     "' does not name an intervention mechanism; the implied intervention is "
                     "imprecisely defined, which complicates interpretation and confounder selection"});
    }
    if (!p.arms.empty() && comparators != 1)
        report.violations.push_back({"comparator", "exactly one comparator arm is required"});
    if (p.follow_up.start_ordinal >= p.follow_up.end_ordinal)
        report.violations.push_back({"follow-up-order", "follow-up start must precede its end"});
    return report;
}

namespace {

std::string join(const std::vector<std::string>& items, const std::string& sep = ", ")
{
    std::string out;
    for (const std::string& s : items) out += (out.empty() ? "" : sep) + s;
    return out;
}

BiasRiskEntry within_entry(ProtocolComponent component, BiasClass kind, const std::string& cohort,
                           const std::string& description)
{
    BiasRiskEntry e;
    e.component = component;
    e.bias_kind = kind;
    e.across = false;
    e.cohort = cohort;
    e.description = description;
    return e;
}

BiasRiskEntry across_entry(ProtocolComponent component, BiasClass kind, std::string a, std::string b,
                           const std::string& description)
{
    if (b < a) std::swap(a, b);
    BiasRiskEntry e;
    e.component = component;
    e.bias_kind = kind;
    e.across = true;
    e.pair = {a, b};
    e.description = description;
    return e;
}

int component_rank(ProtocolComponent c) { return static_cast<int>(c); }

} // namespace

std::vector<BiasRiskEntry> emulation_gap_report(const TargetTrialProtocol& p,
                                                const std::vector<EmulationPlan>& plans)
{
    if (plans.empty()) throw DomainError("emulation_gap_report requires at least one plan");
    for (const EmulationPlan& plan : plans) {
        for (const auto& [arm_id, measure] : plan.exposure_measures) {
            (void)measure;
            bool known = false;
            for (const ArmDescriptor& arm : p.arms) known = known || arm.id == arm_id;
            if (!known)
                throw DomainError("plan '" + plan.cohort + "' references unknown arm id '" + arm_id + "'");
        }
        for (const ArmDescriptor& arm : p.arms)
            if (!plan.exposure_measures.count(arm.id))
                throw DomainError("plan '" + plan.cohort + "' does not cover arm '" + arm.id + "'");
        if (plan.missing_data.kind == MissingDataStrategy::Kind::MultipleImputation &&
            plan.missing_data.m < 2)
            throw DomainError("plan '" + plan.cohort + "': multiple imputation needs m >= 2");
    }

    std::vector<BiasRiskEntry> entries;

    // within-cohort entries: each plan against the target trial
    for (const EmulationPlan& plan : plans) {
        std::vector<std::string> selection_gaps;
        if (plan.recruitment_epoch != p.population.epoch)
            selection_gaps.push_back("recruitment epoch '" + plan.recruitment_epoch +
                                     "' differs from the target population epoch '" +
                                     p.population.epoch + "'");
        if (plan.geography != p.population.setting)
            selection_gaps.push_back("geography '" + plan.geography + "' narrows the setting '" +
                                     p.population.setting + "'");
        if (!plan.screening_window.empty())
            selection_gaps.push_back("sample restricted by screening window (" + plan.screening_window +
                                     ")");
        if (plan.missing_data.kind == MissingDataStrategy::Kind::CompleteCase)
            selection_gaps.push_back(
                "analysis restricted to complete cases; missingness acts like a participation collider");
        if (!selection_gaps.empty())
            entries.push_back(within_entry(ProtocolComponent::Eligibility, BiasClass::Selection,
                                           plan.cohort, join(selection_gaps, "; ")));

        std::vector<std::string> proxy_arms;
        for (const ArmDescriptor& arm : p.arms) {
            const ExposureMeasure& em = plan.exposure_measures.at(arm.id);
            bool direct = em.instruments.size() == 1 && em.instruments.front() == arm.description;
            if (!direct)
                proxy_arms.push_back(arm.id + " via " +
                                     (em.instruments.empty() ? "(unstated)" : join(em.instruments, "/")));
        }
        if (!proxy_arms.empty())
            entries.push_back(within_entry(
                ProtocolComponent::Treatment, BiasClass::Measurement, plan.cohort,
                "exposure measured by instruments approximating the construct: " + join(proxy_arms, "; ")));

        if (!plan.confounders.empty() || plan.adjustment != AdjustmentApproach::None) {
            std::vector<std::string> names;
            for (const ConfounderSpec& c : plan.confounders) names.push_back(c.name);
            entries.push_back(within_entry(
                ProtocolComponent::Assignment, BiasClass::Confounding, plan.cohort,
                "randomisation emulated by " + to_string(plan.adjustment) + " adjustment for {" +
                    join(names) + "}; residual risk from unmeasured confounders remains"));
        }
        std::vector<std::string> proxy_confounders;
        for (const ConfounderSpec& c : plan.confounders)
            if (!c.measure.empty() && c.measure != c.name)
                proxy_confounders.push_back(c.name + " measured as '" + c.measure + "'");
        if (!proxy_confounders.empty())
            entries.push_back(within_entry(ProtocolComponent::Assignment, BiasClass::Measurement,
                                           plan.cohort,
                                           "confounders measured by proxy: " + join(proxy_confounders, "; ")));

        std::vector<std::string> timing_gaps;
        if (plan.timing.start != p.follow_up.start_event)
            timing_gaps.push_back("follow-up starts at '" + plan.timing.start + "' instead of '" +
                                  p.follow_up.start_event + "'");
        if (plan.timing.end != p.follow_up.end_event)
            timing_gaps.push_back("follow-up ends at '" + plan.timing.end + "' instead of '" +
                                  p.follow_up.end_event + "'");
        if (!timing_gaps.empty())
            entries.push_back(within_entry(ProtocolComponent::FollowUp, BiasClass::Measurement,
                                           plan.cohort, join(timing_gaps, "; ")));

        if (plan.outcome_measure.instrument != p.outcome.construct)
            entries.push_back(within_entry(ProtocolComponent::Outcome, BiasClass::Measurement,
                                           plan.cohort,
                                           "outcome measured with '" + plan.outcome_measure.instrument +
                                               "' as a proxy for '" + p.outcome.construct + "'"));
    }

    // across-cohort entries: pairwise systematic differences
    for (std::size_t i = 0; i < plans.size(); ++i) {
        for (std::size_t j = i + 1; j < plans.size(); ++j) {
            const EmulationPlan& a = plans[i];
            const EmulationPlan& b = plans[j];

            std::vector<std::string> eligibility_diffs;
            if (a.recruitment_epoch != b.recruitment_epoch)
                eligibility_diffs.push_back("recruitment epochs " + a.recruitment_epoch + " vs " +
                                            b.recruitment_epoch);
            if (a.geography != b.geography)
                eligibility_diffs.push_back("geographies " + a.geography + " vs " + b.geography);
            if (a.screening_window != b.screening_window)
                eligibility_diffs.push_back("screening windows differ");
            if (!eligibility_diffs.empty())
                entries.push_back(across_entry(
                    ProtocolComponent::Eligibility, BiasClass::Selection, a.cohort, b.cohort,
                    "cohort differences can drive participation and the outcome: " +
                        join(eligibility_diffs, "; ")));

            std::vector<std::string> treatment_diffs;
            for (const ArmDescriptor& arm : p.arms) {
                const ExposureMeasure& ea = a.exposure_measures.at(arm.id);
                const ExposureMeasure& eb = b.exposure_measures.at(arm.id);
                if (ea.instruments != eb.instruments)
                    treatment_diffs.push_back(arm.id + ": " + join(ea.instruments, "/") + " vs " +
                                              join(eb.instruments, "/"));
                else if (ea.waves != eb.waves)
                    treatment_diffs.push_back(arm.id + ": assessment waves differ");
            }
            if (!treatment_diffs.empty())
                entries.push_back(across_entry(
                    ProtocolComponent::Treatment, BiasClass::Measurement, a.cohort, b.cohort,
                    "different exposure instruments or timings require harmonisation: " +
                        join(treatment_diffs, "; ")));

            std::set<std::string> names_a, names_b;
            for (const ConfounderSpec& c : a.confounders) names_a.insert(c.name);
            for (const ConfounderSpec& c : b.confounders) names_b.insert(c.name);
            if (names_a != names_b) {
                std::vector<std::string> only;
                for (const std::string& n : names_a)
                    if (!names_b.count(n)) only.push_back(n + " only in " + a.cohort);
                for (const std::string& n : names_b)
                    if (!names_a.count(n)) only.push_back(n + " only in " + b.cohort);
                entries.push_back(across_entry(ProtocolComponent::Assignment, BiasClass::Confounding,
                                               a.cohort, b.cohort,
                                               "confounder availability differs, so the harmonised "
                                               "adjustment set shrinks: " +
                                                   join(only, "; ")));
            }
            std::vector<std::string> coding_diffs;
            for (const ConfounderSpec& ca : a.confounders) {
                for (const ConfounderSpec& cb : b.confounders) {
                    if (ca.name != cb.name) continue;
                    if (ca.coding != cb.coding)
                        coding_diffs.push_back(ca.name + " coded {" + join(ca.coding) + "} vs {" +
                                               join(cb.coding) + "}");
                    else if (ca.measure != cb.measure)
                        coding_diffs.push_back(ca.name + " measured as '" + ca.measure + "' vs '" +
                                               cb.measure + "'");
                }
            }
            if (!coding_diffs.empty())
                entries.push_back(across_entry(ProtocolComponent::Assignment, BiasClass::Measurement,
                                               a.cohort, b.cohort,
                                               "confounder measurement or coding differs: " +
                                                   join(coding_diffs, "; ")));

            if (a.timing.start != b.timing.start || a.timing.end != b.timing.end)
                entries.push_back(across_entry(ProtocolComponent::FollowUp, BiasClass::Measurement,
                                               a.cohort, b.cohort,
                                               "measurement timings differ (" + a.timing.start + " - " +
                                                   a.timing.end + " vs " + b.timing.start + " - " +
                                                   b.timing.end + ")"));

            if (a.outcome_measure.instrument != b.outcome_measure.instrument ||
                a.outcome_measure.reporter != b.outcome_measure.reporter ||
                a.outcome_measure.threshold != b.outcome_measure.threshold)
                entries.push_back(across_entry(ProtocolComponent::Outcome, BiasClass::Measurement,
                                               a.cohort, b.cohort, "outcome measurement differs"));
        }
    }

    std::stable_sort(entries.begin(), entries.end(), [](const BiasRiskEntry& x, const BiasRiskEntry& y) {
        if (component_rank(x.component) != component_rank(y.component))
            return component_rank(x.component) < component_rank(y.component);
        if (x.across != y.across) return !x.across;
        if (!x.across) return x.cohort < y.cohort;
        return x.pair < y.pair;
    });
    for (const BiasRiskEntry& e : entries) {
        if (!component_bias_consistent(e.component, e.bias_kind))
            throw DomainError("internal: inconsistent bias entry for component " + to_string(e.component));
    }
    return entries;
}

HarmonizationAudit harmonization_audit(const std::vector<EmulationPlan>& plans)
{
    if (plans.size() < 2) throw DomainError("harmonization_audit requires at least two plans");

    std::set<std::string> variables;
    for (const EmulationPlan& plan : plans)
        for (const ConfounderSpec& c : plan.confounders) variables.insert(c.name);

    HarmonizationAudit audit;
    for (const std::string& var : variables) {
        HarmonizationEntry entry;
        entry.variable = var;
        for (const EmulationPlan& plan : plans) {
            for (const ConfounderSpec& c : plan.confounders) {
                if (c.name != var) continue;
                entry.native_coding[plan.cohort] = c.coding;
                entry.present_in.push_back(plan.cohort);
            }
        }
        entry.subset_only = entry.present_in.size() < plans.size();

        // minimal common coding: the coarsest native coding (fewest
        // categories); ties resolved by plan order
        bool first = true;
        for (const EmulationPlan& plan : plans) {
            auto it = entry.native_coding.find(plan.cohort);
            if (it == entry.native_coding.end()) continue;
            if (first || it->second.size() < entry.common_coding.size()) {
                entry.common_coding = it->second;
                first = false;
            }
        }
        for (const EmulationPlan& plan : plans) {
            auto it = entry.native_coding.find(plan.cohort);
            if (it != entry.native_coding.end() && it->second.size() > entry.common_coding.size())
                entry.loss_flags.push_back(plan.cohort);
        }
        audit.entries.push_back(std::move(entry));
    }
    return audit;
}

ReportFormat report_format_from_string(const std::string& s)
{
    if (s == "text") return ReportFormat::Text;
    if (s == "json") return ReportFormat::Json;
    if (s == "markdown") return ReportFormat::Markdown;
    throw DomainError("unknown report format '" + s + "' (expected text|json|markdown)");
}

namespace {

std::string scope_string(const BiasRiskEntry& e)
{
    return e.across ? "Across(" + e.pair.first + ", " + e.pair.second + ")" : "Within(" + e.cohort + ")";
}

json entry_to_json(const BiasRiskEntry& e)
{
    json j;
    j["component"] = to_string(e.component);
    j["bias_kind"] = to_string(e.bias_kind);
    j["scope"] = e.across ? "Across" : "Within";
    if (e.across) {
        j["cohorts"] = json::array({e.pair.first, e.pair.second});
    } else {
        j["cohort"] = e.cohort;
    }
    j["description"] = e.description;
    return j;
}

std::string render_text(const std::vector<BiasRiskEntry>& entries, const HarmonizationAudit& audit)
{
    std::ostringstream os;
    os << "EMULATION GAP REPORT\n";
    if (entries.empty()) {
        os << "no findings\n";
    } else {
        std::size_t w0 = 9, w1 = 11, w2 = 5;
        for (const BiasRiskEntry& e : entries) {
            w0 = std::max(w0, to_string(e.component).size());
            w1 = std::max(w1, to_string(e.bias_kind).size());
            w2 = std::max(w2, scope_string(e).size());
        }
        auto pad = [](const std::string& s, std::size_t w) { return s + std::string(w - s.size() + 2, ' '); };
        os << pad("COMPONENT", w0) << pad("BIAS", w1) << pad("SCOPE", w2) << "DESCRIPTION\n";
        for (const BiasRiskEntry& e : entries)
            os << pad(to_string(e.component), w0) << pad(to_string(e.bias_kind), w1)
               << pad(scope_string(e), w2) << e.description << "\n";
    }
    os << "\nHARMONIZATION AUDIT\n";
    if (audit.entries.empty()) {
        os << "no shared variables\n";
    } else {
        for (const HarmonizationEntry& h : audit.entries) {
            os << h.variable << ": common coding {" << join(h.common_coding) << "}";
            if (!h.loss_flags.empty()) os << "; information loss in " << join(h.loss_flags);
            if (h.subset_only) os << "; available only in " << join(h.present_in);
            os << "\n";
            for (const auto& [cohort, coding] : h.native_coding)
                os << "  " << cohort << ": {" << join(coding) << "}\n";
        }
    }
    return os.str();
}

const char* component_letter(ProtocolComponent c)
{
    switch (c) {
        case ProtocolComponent::Eligibility: return "A";
        case ProtocolComponent::Treatment: return "B";
        case ProtocolComponent::Assignment: return "C";
        case ProtocolComponent::FollowUp: return "D";
        case ProtocolComponent::Outcome: return "E";
    }
    return "?";
}

std::string markdown_escape(std::string s)
{
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (s[i] == '|') {
            s.replace(i, 1, "\\|");
            ++i;
        } else if (s[i] == '\n') {
            s.replace(i, 1, " ");
        }
    }
    return s;
}

std::string render_markdown(const TargetTrialProtocol& p, const std::vector<EmulationPlan>& plans,
                            const std::vector<BiasRiskEntry>& entries, const HarmonizationAudit& audit)
{
    std::ostringstream os;
    os << "# Target trial emulation report: " << p.name << "\n\n";
    os << "| Protocol component | Target trial |";
    for (const EmulationPlan& plan : plans) os << " Emulation: " << plan.cohort << " |";
    os << " Remaining bias risks |\n";
    os << "|---|---|";
    for (std::size_t i = 0; i < plans.size(); ++i) os << "---|";
    os << "---|\n";

    auto risks_for = [&](ProtocolComponent c) {
        std::vector<std::string> cell;
        for (const BiasRiskEntry& e : entries)
            if (e.component == c)
                cell.push_back(to_string(e.bias_kind) + " " + scope_string(e) + ": " + e.description);
        for (const EmulationPlan& plan : plans)
            for (const PlanNote& note : plan.notes)
                if (note.component == c) cell.push_back("Note (" + plan.cohort + "): " + note.text);
        return markdown_escape(join(cell, " • "));
    };

    // A. Eligibility
    os << "| " << component_letter(ProtocolComponent::Eligibility) << ". Eligibility criteria | "
       << markdown_escape(p.eligibility_text) << " |";
    for (const EmulationPlan& plan : plans) os << " " << markdown_escape(plan.sample_selection_text) << " |";
    os << " " << risks_for(ProtocolComponent::Eligibility) << " |\n";

    // B. Treatment strategies
    std::string arms_cell;
    for (const ArmDescriptor& arm : p.arms)
        arms_cell += (arms_cell.empty() ? "" : " • ") + std::string(arm.comparator ? "Comparator: " : "") +
                     arm.id + ": " + arm.description;
    os << "| " << component_letter(ProtocolComponent::Treatment) << ". Treatment strategies | "
       << markdown_escape(arms_cell) << " |";
    for (const EmulationPlan& plan : plans) {
        std::string cell;
        for (const auto& [arm_id, em] : plan.exposure_measures)
            cell += (cell.empty() ? "" : " • ") + arm_id + ": " + join(em.instruments, "/") +
                    (em.waves.empty() ? "" : " at " + join(em.waves, "; ")) +
                    (em.threshold_rule.empty() ? "" : " (" + em.threshold_rule + ")");
        os << " " << markdown_escape(cell) << " |";
    }
    os << " " << risks_for(ProtocolComponent::Treatment) << " |\n";

    // C. Assignment procedures
    os << "| " << component_letter(ProtocolComponent::Assignment) << ". Assignment procedures | "
       << markdown_escape(p.assignment) << " |";
    for (const EmulationPlan& plan : plans) {
        std::string cell = to_string(plan.adjustment) + " adjustment for: ";
        std::vector<std::string> names;
        for (const ConfounderSpec& c : plan.confounders)
            names.push_back(c.name + (c.measure.empty() || c.measure == c.name ? "" : " (" + c.measure + ")"));
        cell += names.empty() ? "(none)" : join(names, "; ");
        os << " " << markdown_escape(cell) << " |";
    }
    os << " " << risks_for(ProtocolComponent::Assignment) << " |\n";

    // D. Follow-up period
    os << "| " << component_letter(ProtocolComponent::FollowUp) << ". Follow-up period | Start: "
       << markdown_escape(p.follow_up.start_event) << "; End: " << markdown_escape(p.follow_up.end_event)
       << " |";
    for (const EmulationPlan& plan : plans)
        os << " Start: " << markdown_escape(plan.timing.start)
           << "; End: " << markdown_escape(plan.timing.end) << " |";
    os << " " << risks_for(ProtocolComponent::FollowUp) << " |\n";

    // E. Outcome
    os << "| " << component_letter(ProtocolComponent::Outcome) << ". Outcome | "
       << markdown_escape(p.outcome.construct + (p.outcome.threshold.empty() ? "" : " (" + p.outcome.threshold + ")"))
       << " |";
    for (const EmulationPlan& plan : plans)
        os << " "
           << markdown_escape(plan.outcome_measure.instrument +
                              (plan.outcome_measure.reporter.empty() ? ""
                                                                     : " via " + plan.outcome_measure.reporter) +
                              (plan.outcome_measure.threshold.empty() ? ""
                                                                      : ", " + plan.outcome_measure.threshold))
           << " |";
    os << " " << risks_for(ProtocolComponent::Outcome) << " |\n";

    // F. Causal effect of interest
    os << "| F. Causal effect of interest | " << to_string(p.effect_scope) << " "
       << to_string(p.effect_measure) << " vs the comparator arm |";
    for (std::size_t i = 0; i < plans.size(); ++i) os << " as per target trial |";
    os << "  |\n";

    if (!audit.entries.empty()) {
        os << "\n## Harmonization audit\n\n";
        os << "| Variable | Native codings | Common coding | Information loss | Availability |\n";
        os << "|---|---|---|---|---|\n";
        for (const HarmonizationEntry& h : audit.entries) {
            std::string native;
            for (const auto& [cohort, coding] : h.native_coding)
                native += (native.empty() ? "" : " • ") + cohort + ": {" + join(coding) + "}";
            os << "| " << h.variable << " | " << markdown_escape(native) << " | {"
               << markdown_escape(join(h.common_coding)) << "} | "
               << (h.loss_flags.empty() ? "none" : markdown_escape(join(h.loss_flags))) << " | "
               << (h.subset_only ? "subset only: " + markdown_escape(join(h.present_in)) : "all cohorts")
               << " |\n";
        }
    }
    return os.str();
}

} // namespace

std::string render_report(const TargetTrialProtocol& p, const std::vector<EmulationPlan>& plans,
                          const std::vector<BiasRiskEntry>& entries, const HarmonizationAudit& audit,
                          ReportFormat format)
{
    switch (format) {
        case ReportFormat::Text: return render_text(entries, audit);
        case ReportFormat::Json: {
            json doc;
            doc["protocol"] = p.name;
            doc["entries"] = json::array();
            for (const BiasRiskEntry& e : entries) doc["entries"].push_back(entry_to_json(e));
            doc["harmonization"] = json::array();
            for (const HarmonizationEntry& h : audit.entries) {
                json jh;
                jh["variable"] = h.variable;
                jh["native_coding"] = json::object();
                for (const auto& [cohort, coding] : h.native_coding) jh["native_coding"][cohort] = coding;
                jh["common_coding"] = h.common_coding;
                jh["loss_flags"] = h.loss_flags;
                jh["subset_only"] = h.subset_only;
                jh["present_in"] = h.present_in;
                doc["harmonization"].push_back(jh);
            }
            json jnotes = json::array();
            for (const EmulationPlan& plan : plans)
                for (const PlanNote& note : plan.notes)
                    jnotes.push_back(json{{"cohort", plan.cohort},
                                          {"component", to_string(note.component)},
                                          {"text", note.text}});
            doc["notes"] = jnotes;
            return doc.dump(2) + "\n";
        }
        case ReportFormat::Markdown: return render_markdown(p, plans, entries, audit);
    }
    throw DomainError("unknown report format");
}

// ---------------------------------------------------------------------------
// JSON interface

namespace {

TargetTrialProtocol protocol_from_json(const json& doc)
{
    TargetTrialProtocol p;
    p.name = doc.value("name", "");
    if (doc.contains("eligibility")) {
        const json& e = doc["eligibility"];
        p.eligibility_text = e.value("text", "");
        if (e.contains("population")) {
            p.population.age_at_entry = e["population"].value("age_at_entry", "");
            p.population.setting = e["population"].value("setting", "");
            p.population.epoch = e["population"].value("epoch", "");
        }
    }
    for (const auto& ja : doc.value("arms", json::array())) {
        ArmDescriptor arm;
        arm.id = ja.at("id").get<std::string>();
        arm.description = ja.value("description", "");
        arm.comparator = ja.value("comparator", false);
        arm.intervention_mechanism = ja.value("intervention_mechanism", "");
        p.arms.push_back(std::move(arm));
    }
    p.assignment = doc.value("assignment", "");
    if (doc.contains("follow_up")) {
        p.follow_up.start_event = doc["follow_up"].value("start", "");
        p.follow_up.end_event = doc["follow_up"].value("end", "");
        p.follow_up.start_ordinal = doc["follow_up"].value("start_ordinal", 0);
        p.follow_up.end_ordinal = doc["follow_up"].value("end_ordinal", 1);
    }
    if (doc.contains("outcome")) {
        p.outcome.construct = doc["outcome"].value("construct", "");
        p.outcome.scale = doc["outcome"].value("scale", "");
        p.outcome.threshold = doc["outcome"].value("threshold", "");
    }
    if (doc.contains("effect_measure")) {
        std::string m = doc["effect_measure"].value("measure", "OddsRatio");
        if (m == "OddsRatio")
            p.effect_measure = EffectMeasure::OddsRatio;
        else if (m == "RiskRatio")
            p.effect_measure = EffectMeasure::RiskRatio;
        else if (m == "RiskDifference")
            p.effect_measure = EffectMeasure::RiskDifference;
        else
            throw DomainError("unknown effect measure '" + m + "'");
        std::string s = doc["effect_measure"].value("scope", "Marginal");
        p.effect_scope = s == "Conditional" ? EstimandScope::Conditional : EstimandScope::Marginal;
    }
    return p;
}

EmulationPlan plan_from_json(const json& doc)
{
    EmulationPlan plan;
    plan.cohort = doc.at("cohort").get<std::string>();
    if (doc.contains("sample_selection")) {
        const json& s = doc["sample_selection"];
        plan.sample_selection_text = s.value("text", "");
        plan.recruitment_epoch = s.value("recruitment_epoch", "");
        plan.geography = s.value("geography", "");
        plan.screening_window = s.value("screening_window", "");
    }
    const json exposure_measures = doc.value("exposure_measures", json::object());
    for (const auto& [arm_id, jm] : exposure_measures.items()) {
        ExposureMeasure em;
        for (const auto& v : jm.value("instruments", json::array())) em.instruments.push_back(v);
        for (const auto& v : jm.value("waves", json::array())) em.waves.push_back(v);
        em.threshold_rule = jm.value("threshold_rule", "");
        plan.exposure_measures[arm_id] = std::move(em);
    }
    for (const auto& jc : doc.value("confounders", json::array())) {
        ConfounderSpec c;
        c.name = jc.at("name").get<std::string>();
        c.measure = jc.value("measure", "");
        for (const auto& v : jc.value("coding", json::array())) c.coding.push_back(v);
        plan.confounders.push_back(std::move(c));
    }
    plan.adjustment = adjustment_from_string(doc.value("adjustment_approach", "None"));
    if (doc.contains("timing")) {
        plan.timing.start = doc["timing"].value("start", "");
        plan.timing.end = doc["timing"].value("end", "");
    }
    if (doc.contains("outcome_measure")) {
        plan.outcome_measure.instrument = doc["outcome_measure"].value("instrument", "");
        plan.outcome_measure.reporter = doc["outcome_measure"].value("reporter", "");
        plan.outcome_measure.threshold = doc["outcome_measure"].value("threshold", "");
    }
    if (doc.contains("missing_data_strategy")) {
        const json& m = doc["missing_data_strategy"];
        std::string kind = m.value("kind", "CompleteCase");
        if (kind == "CompleteCase") {
            plan.missing_data.kind = MissingDataStrategy::Kind::CompleteCase;
        } else if (kind == "MultipleImputation") {
            plan.missing_data.kind = MissingDataStrategy::Kind::MultipleImputation;
            plan.missing_data.m = m.value("m", 0);
            std::string scope = m.value("scope", "PerCohort");
            plan.missing_data.scope =
                scope == "PooledWithIndicator" ? ImputeScope::PooledWithIndicator : ImputeScope::PerCohort;
        } else {
            throw DomainError("unknown missing data strategy '" + kind + "'");
        }
    }
    for (const auto& jn : doc.value("notes", json::array())) {
        PlanNote note;
        note.component = protocol_component_from_string(jn.at("component").get<std::string>());
        note.text = jn.at("text").get<std::string>();
        plan.notes.push_back(std::move(note));
    }
    return plan;
}

json protocol_to_json(const TargetTrialProtocol& p)
{
    json doc;
    doc["name"] = p.name;
    doc["eligibility"] = json{{"text", p.eligibility_text},
                              {"population",
                               json{{"age_at_entry", p.population.age_at_entry},
                                    {"setting", p.population.setting},
                                    {"epoch", p.population.epoch}}}};
    doc["arms"] = json::array();
    for (const ArmDescriptor& arm : p.arms) {
        json ja{{"id", arm.id}, {"description", arm.description}, {"comparator", arm.comparator}};
        if (!arm.intervention_mechanism.empty()) ja["intervention_mechanism"] = arm.intervention_mechanism;
        doc["arms"].push_back(ja);
    }
    doc["assignment"] = p.assignment;
    doc["follow_up"] = json{{"start", p.follow_up.start_event},
                            {"end", p.follow_up.end_event},
                            {"start_ordinal", p.follow_up.start_ordinal},
                            {"end_ordinal", p.follow_up.end_ordinal}};
    doc["outcome"] = json{{"construct", p.outcome.construct},
                          {"scale", p.outcome.scale},
                          {"threshold", p.outcome.threshold}};
    doc["effect_measure"] = json{{"measure", p.effect_measure == EffectMeasure::OddsRatio ? "OddsRatio"
                                             : p.effect_measure == EffectMeasure::RiskRatio
                                                 ? "RiskRatio"
                                                 : "RiskDifference"},
                                 {"scope", to_string(p.effect_scope)}};
    return doc;
}

json plan_to_json(const EmulationPlan& plan)
{
    json doc;
    doc["cohort"] = plan.cohort;
    doc["sample_selection"] = json{{"text", plan.sample_selection_text},
                                   {"recruitment_epoch", plan.recruitment_epoch},
                                   {"geography", plan.geography},
                                   {"screening_window", plan.screening_window}};
    doc["exposure_measures"] = json::object();
    for (const auto& [arm_id, em] : plan.exposure_measures)
        doc["exposure_measures"][arm_id] = json{
            {"instruments", em.instruments}, {"waves", em.waves}, {"threshold_rule", em.threshold_rule}};
    doc["confounders"] = json::array();
    for (const ConfounderSpec& c : plan.confounders)
        doc["confounders"].push_back(json{{"name", c.name}, {"measure", c.measure}, {"coding", c.coding}});
    doc["adjustment_approach"] = to_string(plan.adjustment);
    doc["timing"] = json{{"start", plan.timing.start}, {"end", plan.timing.end}};
    doc["outcome_measure"] = json{{"instrument", plan.outcome_measure.instrument},
                                  {"reporter", plan.outcome_measure.reporter},
                                  {"threshold", plan.outcome_measure.threshold}};
    if (plan.missing_data.kind == MissingDataStrategy::Kind::CompleteCase) {
        doc["missing_data_strategy"] = json{{"kind", "CompleteCase"}};
    } else {
        doc["missing_data_strategy"] =
            json{{"kind", "MultipleImputation"},
                 {"scope", plan.missing_data.scope == ImputeScope::PooledWithIndicator
                               ? "PooledWithIndicator"
                               : "PerCohort"},
                 {"m", plan.missing_data.m}};
    }
    if (!plan.notes.empty()) {
        doc["notes"] = json::array();
        for (const PlanNote& note : plan.notes)
            doc["notes"].push_back(json{{"component", to_string(note.component)}, {"text", note.text}});
    }
    return doc;
}

} // namespace

ProtocolBundle protocol_bundle_from_json_string(const std::string& text)
{
    json doc;
    try {
        doc = json::parse(text);
    } catch (const json::parse_error& e) {
        throw DomainError(std::string("protocol spec: malformed JSON: ") + e.what());
    }
    ProtocolBundle bundle;
    bundle.protocol = protocol_from_json(doc.at("protocol"));
    for (const auto& jp : doc.value("plans", json::array())) bundle.plans.push_back(plan_from_json(jp));
    return bundle;
}

ProtocolBundle load_protocol_bundle(const std::string& path)
{
    std::ifstream in(path);
    if (!in) throw DomainError("cannot open protocol file '" + path + "'");
    std::stringstream buf;
    buf << in.rdbuf();
    return protocol_bundle_from_json_string(buf.str());
}

EmulationPlan plan_from_json_string(const std::string& text)
{
    json doc;
    try {
        doc = json::parse(text);
    } catch (const json::parse_error& e) {
        throw DomainError(std::string("plan spec: malformed JSON: ") + e.what());
    }
    return plan_from_json(doc);
}

std::string protocol_bundle_to_json_string(const ProtocolBundle& bundle)
{
    json doc;
    doc["protocol"] = protocol_to_json(bundle.protocol);
    doc["plans"] = json::array();
    for (const EmulationPlan& plan : bundle.plans) doc["plans"].push_back(plan_to_json(plan));
    return doc.dump(2) + "\n";
}

} // namespace cohortforge
