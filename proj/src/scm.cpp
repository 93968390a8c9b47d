#include "cohortforge/scm.hpp"

#include <algorithm>
#include <fstream>
#include <functional>
#include <sstream>

#include <nlohmann/json.hpp>

namespace cohortforge {

using json = nlohmann::ordered_json;

std::string to_string(EffectMeasure m)
{
    switch (m) {
        case EffectMeasure::OddsRatio: return "OR";
        case EffectMeasure::RiskRatio: return "RR";
        case EffectMeasure::RiskDifference: return "RD";
    }
    return "OR";
}

std::string to_string(EstimandScope s)
{
    return s == EstimandScope::Marginal ? "Marginal" : "Conditional";
}

int StructuralModel::domain_size(const std::string& node) const
{
    auto it = mechanisms.find(node);
    if (it == mechanisms.end()) return 2; // roots are Bernoulli
    const Mechanism& m = it->second;
    if (m.family != MechanismFamily::Deterministic) return 2;
    int max_v = 1;
    for (int v : m.table) max_v = std::max(max_v, v);
    return max_v + 1;
}

ValidationReport StructuralModel::validate() const
{
    ValidationReport report = validate_dag(dag);
    std::vector<std::string> topo = dag.topological_order();
    if (topo.empty() && !dag.nodes.empty()) return report; // cycle already reported

    for (const Node& n : dag.nodes) {
        bool is_root = dag.parents(n.id).empty();
        bool has_mech = mechanisms.count(n.id) > 0;
        bool has_prior = root_priors.count(n.id) > 0;
        if (is_root) {
            if (!has_prior)
                report.violations.push_back({"missing-prior", "root '" + n.id + "' needs a Bernoulli prior"});
            if (has_mech)
                report.violations.push_back({"root-mechanism", "root '" + n.id + "' cannot carry a mechanism"});
            if (has_prior) {
                double p = root_priors.at(n.id);
                if (p < 0.0 || p > 1.0)
                    report.violations.push_back({"bad-prior", "prior for '" + n.id + "' outside [0,1]"});
            }
        } else {
            if (!has_mech)
                report.violations.push_back({"missing-mechanism", "non-root '" + n.id + "' needs a mechanism"});
            if (has_prior)
                report.violations.push_back({"prior-on-nonroot", "'" + n.id + "' has parents and a prior"});
        }
    }

    for (const auto& [id, m] : mechanisms) {
        if (!dag.find(id)) {
            report.violations.push_back({"unknown-node", "mechanism for unknown node '" + id + "'"});
            continue;
        }
        std::vector<std::string> parents = dag.parents(id);
        std::set<std::string> parent_set(parents.begin(), parents.end());
        switch (m.family) {
            case MechanismFamily::BernoulliLogit:
                for (const auto& [p, coef] : m.coefficients) {
                    (void)coef;
                    if (!parent_set.count(p))
                        report.violations.push_back(
                            {"coefficient-not-parent", "'" + id + "' references non-parent '" + p + "'"});
                }
                break;
            case MechanismFamily::Deterministic: {
                std::set<std::string> tset(m.table_parents.begin(), m.table_parents.end());
                if (tset != parent_set)
                    report.violations.push_back(
                        {"table-parents", "'" + id + "' truth table must cover exactly the DAG parents"});
                std::size_t expect = 1;
                for (const std::string& p : m.table_parents)
                    expect *= static_cast<std::size_t>(domain_size(p));
                if (m.table.size() != expect)
                    report.violations.push_back(
                        {"table-size", "'" + id + "' truth table needs " + std::to_string(expect) + " entries"});
                for (int v : m.table)
                    if (v < 0)
                        report.violations.push_back({"table-value", "'" + id + "' table values must be >= 0"});
                break;
            }
            case MechanismFamily::Misclassify:
                if (!parent_set.count(m.source))
                    report.violations.push_back(
                        {"misclassify-source", "'" + id + "' source '" + m.source + "' is not a parent"});
                else if (domain_size(m.source) != 2)
                    report.violations.push_back(
                        {"misclassify-source", "'" + id + "' source '" + m.source + "' must be binary"});
                if (m.sensitivity <= 0.0 || m.sensitivity > 1.0 || m.specificity <= 0.0 || m.specificity > 1.0)
                    report.violations.push_back(
                        {"misclassify-rates", "'" + id + "' sensitivity/specificity must lie in (0,1]"});
                break;
        }
    }

    if (!exposure.empty() && !dag.find(exposure))
        report.violations.push_back({"unknown-exposure", "exposure '" + exposure + "' not in DAG"});
    if (!outcome.empty() && !dag.find(outcome))
        report.violations.push_back({"unknown-outcome", "outcome '" + outcome + "' not in DAG"});

    double log_states = 0.0;
    for (const Node& n : dag.nodes) log_states += std::log2(static_cast<double>(domain_size(n.id)));
    if (log_states > 20.0)
        report.violations.push_back({"state-space", "joint state space exceeds 2^20; exact enumeration infeasible"});
    return report;
}

StructuralModel without_node(const StructuralModel& model, const std::string& node)
{
    model.dag.at(node);
    StructuralModel out = model;
    out.dag.nodes.erase(std::remove_if(out.dag.nodes.begin(), out.dag.nodes.end(),
                                       [&](const Node& n) { return n.id == node; }),
                        out.dag.nodes.end());
    out.dag.edges.erase(std::remove_if(out.dag.edges.begin(), out.dag.edges.end(),
                                       [&](const auto& e) { return e.first == node || e.second == node; }),
                        out.dag.edges.end());
    out.dag.conditioned.erase(node);
    out.mechanisms.erase(node);
    out.root_priors.erase(node);
    for (auto& [id, m] : out.mechanisms) {
        (void)id;
        m.coefficients.erase(node);
    }
    return out;
}

namespace {

struct ResolvedModel {
    std::vector<std::string> topo;                 // generation / column order
    std::map<std::string, int> col_of;             // node -> column
    std::map<std::string, Mechanism> mechanisms;   // after overrides
    std::map<std::string, double> priors;          // after overrides
};

ResolvedModel resolve(const StructuralModel& model, const CohortConfig* cohort)
{
    ResolvedModel r;
    r.topo = model.dag.topological_order();
    for (std::size_t i = 0; i < r.topo.size(); ++i) r.col_of[r.topo[i]] = static_cast<int>(i);
    r.mechanisms = model.mechanisms;
    r.priors = model.root_priors;
    if (!cohort) return r;

    for (const auto& [node, ov] : cohort->overrides) {
        bool is_root = r.priors.count(node) > 0;
        bool is_mech = r.mechanisms.count(node) > 0;
        if (!is_root && !is_mech)
            throw DomainError("cohort '" + cohort->id + "': override references unknown node '" + node + "'");
        if (ov.root_prior) {
            if (!is_root)
                throw DomainError("cohort '" + cohort->id + "': root prior override on non-root '" + node + "'");
            r.priors[node] = *ov.root_prior;
        }
        if (is_mech) {
            Mechanism& m = r.mechanisms[node];
            if (ov.intercept) m.intercept = *ov.intercept;
            for (const auto& [p, c] : ov.coefficients) {
                if (!m.coefficients.count(p))
                    throw DomainError("cohort '" + cohort->id + "': override coefficient '" + p +
                                      "' not in mechanism of '" + node + "'");
                m.coefficients[p] = c;
            }
            if (ov.sensitivity) m.sensitivity = *ov.sensitivity;
            if (ov.specificity) m.specificity = *ov.specificity;
        } else if (ov.intercept || !ov.coefficients.empty() || ov.sensitivity || ov.specificity) {
            throw DomainError("cohort '" + cohort->id + "': mechanism override on root '" + node + "'");
        }
    }
    return r;
}

int deterministic_value(const Mechanism& m, const StructuralModel& model,
                        const std::function<int(const std::string&)>& value_of)
{
    std::size_t idx = 0;
    for (const std::string& p : m.table_parents)
        idx = idx * static_cast<std::size_t>(model.domain_size(p)) +
              static_cast<std::size_t>(value_of(p));
    return m.table[idx];
}

} // namespace

MultiCohortDataset simulate(const StructuralModel& model, const std::vector<CohortConfig>& cohorts,
                            std::uint64_t seed)
{
    ValidationReport vr = model.validate();
    if (!vr.ok()) throw DomainError("invalid structural model: " + vr.violations.front().detail);
    if (cohorts.empty()) throw DomainError("simulate requires at least one cohort");

    ResolvedModel base = resolve(model, nullptr);
    MultiCohortDataset out;
    for (const std::string& node : base.topo) {
        Column col{node, {}};
        int d = model.domain_size(node);
        if (d > 2)
            for (int v = 0; v < d; ++v) col.levels.push_back(std::to_string(v));
        out.columns.push_back(col);
    }

    Eigen::Index total = 0;
    for (const CohortConfig& c : cohorts) {
        if (c.n < 1) throw DomainError("cohort '" + c.id + "': n must be >= 1");
        total += c.n;
    }
    out.values.resize(total, static_cast<Eigen::Index>(out.columns.size()));
    out.cohort.resize(total);
    out.selected.resize(total);
    out.selected.setConstant(true);

    Rng master(seed);
    Eigen::Index at = 0;
    for (std::size_t ci = 0; ci < cohorts.size(); ++ci) {
        const CohortConfig& cohort = cohorts[ci];
        out.cohort_ids.push_back(cohort.id);
        ResolvedModel rm = resolve(model, &cohort);

        // missingness sanity: MAR predictors must stay fully observed
        for (const auto& [var, miss] : cohort.missingness) {
            if (!rm.col_of.count(var))
                throw DomainError("cohort '" + cohort.id + "': missingness on unknown node '" + var + "'");
            if (cohort.selection_node && var == *cohort.selection_node)
                throw DomainError("cohort '" + cohort.id + "': selection node cannot be set missing");
            if (miss.kind == Missingness::Kind::MCAR) {
                if (miss.rate < 0.0 || miss.rate > 1.0)
                    throw DomainError("cohort '" + cohort.id + "': MCAR rate outside [0,1]");
            } else {
                for (const auto& [pred, coef] : miss.predictors) {
                    (void)coef;
                    if (!rm.col_of.count(pred))
                        throw DomainError("cohort '" + cohort.id + "': MAR predictor '" + pred + "' unknown");
                    if (cohort.missingness.count(pred))
                        throw DomainError("cohort '" + cohort.id + "': MAR predictor '" + pred +
                                          "' is itself incomplete");
                }
            }
        }
        int sel_col = -1;
        if (cohort.selection_node) {
            auto it = rm.col_of.find(*cohort.selection_node);
            if (it == rm.col_of.end())
                throw DomainError("cohort '" + cohort.id + "': unknown selection node '" +
                                  *cohort.selection_node + "'");
            sel_col = it->second;
        }

        Rng rng = master.derive(ci);
        Eigen::Index start = at;
        std::vector<int> row(rm.topo.size(), 0);
        for (int i = 0; i < cohort.n; ++i, ++at) {
            for (std::size_t k = 0; k < rm.topo.size(); ++k) {
                const std::string& node = rm.topo[k];
                auto mech_it = rm.mechanisms.find(node);
                int value = 0;
                if (mech_it == rm.mechanisms.end()) {
                    value = rng.bernoulli(rm.priors.at(node)) ? 1 : 0;
                } else {
                    const Mechanism& m = mech_it->second;
                    switch (m.family) {
                        case MechanismFamily::BernoulliLogit: {
                            double eta = m.intercept;
                            for (const auto& [p, coef] : m.coefficients)
                                eta += coef * row[static_cast<std::size_t>(rm.col_of.at(p))];
                            value = rng.bernoulli(expit(eta)) ? 1 : 0;
                            break;
                        }
                        case MechanismFamily::Deterministic:
                            value = deterministic_value(m, model, [&](const std::string& p) {
                                return row[static_cast<std::size_t>(rm.col_of.at(p))];
                            });
                            break;
                        case MechanismFamily::Misclassify: {
                            int src = row[static_cast<std::size_t>(rm.col_of.at(m.source))];
                            double p1 = src == 1 ? m.sensitivity : 1.0 - m.specificity;
                            value = rng.bernoulli(p1) ? 1 : 0;
                            break;
                        }
                    }
                }
                row[k] = value;
                out.values(at, static_cast<Eigen::Index>(k)) = value;
            }
            out.cohort(at) = static_cast<int>(ci);
            if (sel_col >= 0) out.selected(at) = out.values(at, sel_col) == 1;
        }

        // mask values after generation, variable by variable in name order
        for (const auto& [var, miss] : cohort.missingness) {
            int col = rm.col_of.at(var);
            for (Eigen::Index r = start; r < at; ++r) {
                double p;
                if (miss.kind == Missingness::Kind::MCAR) {
                    p = miss.rate;
                } else {
                    double eta = miss.intercept;
                    for (const auto& [pred, coef] : miss.predictors)
                        eta += coef * out.values(r, rm.col_of.at(pred));
                    p = expit(eta);
                }
                if (rng.bernoulli(p)) out.values(r, col) = kMissing;
            }
        }
    }
    return out;
}

TrueEffect true_effect(const StructuralModel& model, const Estimand& estimand, EffectMeasure measure,
                       int arm, int comparator)
{
    ValidationReport vr = model.validate();
    if (!vr.ok()) throw DomainError("invalid structural model: " + vr.violations.front().detail);
    if (model.exposure.empty() || model.outcome.empty())
        throw DomainError("true_effect requires exposure and outcome node ids");
    for (const auto& [var, value] : estimand.strata) {
        model.dag.at(var);
        if (value < 0 || value >= model.domain_size(var))
            throw DomainError("stratum value out of range for '" + var + "'");
    }

    ResolvedModel rm = resolve(model, nullptr);
    const std::size_t k = rm.topo.size();
    std::vector<int> domain(k);
    double log_states = 0.0;
    for (std::size_t i = 0; i < k; ++i) {
        domain[i] = model.domain_size(rm.topo[i]);
        log_states += std::log2(static_cast<double>(domain[i]));
    }
    if (log_states > 20.0) throw DomainError("state space too large for exact enumeration");

    const int x_col = rm.col_of.at(model.exposure);
    const int y_col = rm.col_of.at(model.outcome);

    auto risk_under_do = [&](int x_value) {
        std::vector<int> config(k, 0);
        config[static_cast<std::size_t>(x_col)] = x_value;
        double mass_strata = 0.0, mass_y1 = 0.0;

        // odometer over every node except the intervened exposure
        std::vector<std::size_t> free;
        for (std::size_t i = 0; i < k; ++i)
            if (static_cast<int>(i) != x_col) free.push_back(i);

        while (true) {
            double prob = 1.0;
            for (std::size_t i = 0; i < k && prob > 0.0; ++i) {
                const std::string& node = rm.topo[i];
                int v = config[i];
                if (static_cast<int>(i) == x_col) continue; // intervention, probability 1
                auto mech_it = rm.mechanisms.find(node);
                if (mech_it == rm.mechanisms.end()) {
                    double p = rm.priors.at(node);
                    prob *= v == 1 ? p : (v == 0 ? 1.0 - p : 0.0);
                } else {
                    const Mechanism& m = mech_it->second;
                    switch (m.family) {
                        case MechanismFamily::BernoulliLogit: {
                            double eta = m.intercept;
                            for (const auto& [p, coef] : m.coefficients)
                                eta += coef * config[static_cast<std::size_t>(rm.col_of.at(p))];
                            double p1 = expit(eta);
                            prob *= v == 1 ? p1 : 1.0 - p1;
                            break;
                        }
                        case MechanismFamily::Deterministic: {
                            int want = deterministic_value(m, model, [&](const std::string& p) {
                                return config[static_cast<std::size_t>(rm.col_of.at(p))];
                            });
                            if (want != v) prob = 0.0;
                            break;
                        }
                        case MechanismFamily::Misclassify: {
                            int src = config[static_cast<std::size_t>(rm.col_of.at(m.source))];
                            double p1 = src == 1 ? m.sensitivity : 1.0 - m.specificity;
                            prob *= v == 1 ? p1 : 1.0 - p1;
                            break;
                        }
                    }
                }
            }
            if (prob > 0.0) {
                bool in_strata = true;
                for (const auto& [var, value] : estimand.strata)
                    if (config[static_cast<std::size_t>(rm.col_of.at(var))] != value) in_strata = false;
                if (in_strata) {
                    mass_strata += prob;
                    if (config[static_cast<std::size_t>(y_col)] == 1) mass_y1 += prob;
                }
            }
            // advance odometer
            std::size_t d = 0;
            for (; d < free.size(); ++d) {
                std::size_t i = free[d];
                if (++config[i] < domain[i]) break;
                config[i] = 0;
            }
            if (d == free.size()) break;
        }
        if (mass_strata <= 0.0) throw DomainError("conditional estimand: stratum has probability zero");
        return mass_y1 / mass_strata;
    };

    TrueEffect eff;
    eff.comparator_risk = risk_under_do(comparator);
    eff.arm_risk = risk_under_do(arm);
    switch (measure) {
        case EffectMeasure::OddsRatio: {
            if (eff.arm_risk <= 0.0 || eff.arm_risk >= 1.0 || eff.comparator_risk <= 0.0 ||
                eff.comparator_risk >= 1.0)
                throw DomainError("odds ratio undefined: degenerate risk");
            double o1 = eff.arm_risk / (1.0 - eff.arm_risk);
            double o0 = eff.comparator_risk / (1.0 - eff.comparator_risk);
            eff.value = o1 / o0;
            break;
        }
        case EffectMeasure::RiskRatio:
            if (eff.comparator_risk <= 0.0) throw DomainError("risk ratio undefined: zero comparator risk");
            eff.value = eff.arm_risk / eff.comparator_risk;
            break;
        case EffectMeasure::RiskDifference:
            eff.value = eff.arm_risk - eff.comparator_risk;
            break;
    }
    return eff;
}

// ---------------------------------------------------------------------------
// Benchmark scenario library (parameter set P1)

namespace {

Node make_node(const std::string& id, NodeKind kind, bool observed = true, const std::string& label = "")
{
    return Node{id, kind, observed, label};
}

Mechanism logit_mech(const std::string& node, double intercept,
                     std::map<std::string, double> coefficients)
{
    Mechanism m;
    m.node = node;
    m.family = MechanismFamily::BernoulliLogit;
    m.intercept = intercept;
    m.coefficients = std::move(coefficients);
    return m;
}

constexpr int kDefaultCohortN = 20000;

std::vector<CohortConfig> plain_cohorts()
{
    return {{"cohort1", kDefaultCohortN, {}, {}, std::nullopt},
            {"cohort2", kDefaultCohortN, {}, {}, std::nullopt}};
}

std::vector<CohortConfig> indicator_cohorts(const std::optional<std::string>& selection = std::nullopt)
{
    MechanismOverride s0, s1;
    s0.root_prior = 0.0;
    s1.root_prior = 1.0;
    return {{"cohort1", kDefaultCohortN, {{"S", s0}}, {}, selection},
            {"cohort2", kDefaultCohortN, {{"S", s1}}, {}, selection}};
}

} // namespace

std::vector<ScenarioBundle> scenario_library()
{
    std::vector<ScenarioBundle> lib;

    // S-1A: within-cohort confounding
    {
        ScenarioBundle s;
        s.id = "S-1A";
        s.description = "within-cohort confounding bias (measured C, unmeasured U)";
        StructuralModel& m = s.model;
        m.dag.nodes = {make_node("X", NodeKind::Exposure), make_node("Y", NodeKind::Outcome),
                       make_node("C", NodeKind::MeasuredConfounder),
                       make_node("U", NodeKind::UnmeasuredConfounder, false)};
        m.dag.edges = {{"X", "Y"}, {"C", "X"}, {"C", "Y"}, {"U", "X"}, {"U", "Y"}};
        m.root_priors = {{"C", 0.5}, {"U", 0.5}};
        m.mechanisms["X"] = logit_mech("X", -0.5, {{"C", 0.8}, {"U", 0.8}});
        m.mechanisms["Y"] = logit_mech("Y", -1.0, {{"X", 0.7}, {"C", 0.8}, {"U", 0.8}});
        m.exposure = "X";
        m.outcome = "Y";
        s.cohorts = plain_cohorts();
        s.dag_fixture = m.dag;
        s.true_marginal_log_or = 0.6500869946907576;
        lib.push_back(std::move(s));
    }

    // S-1B: S-1A plus across-cohort confounding through the cohort indicator
    {
        ScenarioBundle s;
        s.id = "S-1B";
        s.description = "across-cohort confounding bias (cohort indicator a common cause)";
        StructuralModel& m = s.model;
        m.dag.nodes = {make_node("X", NodeKind::Exposure), make_node("Y", NodeKind::Outcome),
                       make_node("C", NodeKind::MeasuredConfounder),
                       make_node("U", NodeKind::UnmeasuredConfounder, false),
                       make_node("S", NodeKind::CohortIndicator)};
        m.dag.edges = {{"X", "Y"}, {"C", "X"}, {"C", "Y"}, {"U", "X"}, {"U", "Y"}, {"S", "X"}, {"S", "Y"}};
        m.root_priors = {{"C", 0.5}, {"U", 0.5}, {"S", 0.5}};
        m.mechanisms["X"] = logit_mech("X", -0.5, {{"C", 0.8}, {"U", 0.8}, {"S", 0.6}});
        m.mechanisms["Y"] = logit_mech("Y", -1.0, {{"X", 0.7}, {"C", 0.8}, {"U", 0.8}, {"S", 0.6}});
        m.exposure = "X";
        m.outcome = "Y";
        s.cohorts = indicator_cohorts();
        s.dag_fixture = m.dag;
        s.true_marginal_log_or = 0.6404175096393333;
        lib.push_back(std::move(s));
    }

    // S-2A: within-cohort selection via participation collider
    {
        ScenarioBundle s;
        s.id = "S-2A";
        s.description = "within-cohort selection bias (restriction to participants)";
        StructuralModel& m = s.model;
        m.dag.nodes = {make_node("X", NodeKind::Exposure), make_node("Y", NodeKind::Outcome),
                       make_node("P", NodeKind::Selection), make_node("A", NodeKind::Auxiliary)};
        m.dag.edges = {{"X", "Y"}, {"X", "P"}, {"A", "P"}, {"A", "Y"}};
        m.dag.conditioned = {"P"};
        m.root_priors = {{"X", 0.5}, {"A", 0.5}};
        m.mechanisms["P"] = logit_mech("P", 0.5, {{"X", -0.7}, {"A", -0.9}});
        m.mechanisms["Y"] = logit_mech("Y", -1.0, {{"X", 0.7}, {"A", 0.8}});
        m.exposure = "X";
        m.outcome = "Y";
        auto cohorts = plain_cohorts();
        for (auto& c : cohorts) c.selection_node = "P";
        s.cohorts = cohorts;
        s.dag_fixture = m.dag;
        s.true_marginal_log_or = 0.6734092212562993;
        lib.push_back(std::move(s));
    }

    // S-2B: S-2A plus cohort-dependent participation and outcome
    {
        ScenarioBundle s;
        s.id = "S-2B";
        s.description = "across-cohort selection bias (cohort indicator drives participation)";
        StructuralModel& m = s.model;
        m.dag.nodes = {make_node("X", NodeKind::Exposure), make_node("Y", NodeKind::Outcome),
                       make_node("P", NodeKind::Selection), make_node("A", NodeKind::Auxiliary),
                       make_node("S", NodeKind::CohortIndicator)};
        m.dag.edges = {{"X", "Y"}, {"X", "P"}, {"A", "P"}, {"A", "Y"}, {"S", "P"}, {"S", "Y"}};
        m.dag.conditioned = {"P"};
        m.root_priors = {{"X", 0.5}, {"A", 0.5}, {"S", 0.5}};
        m.mechanisms["P"] = logit_mech("P", 0.5, {{"X", -0.7}, {"A", -0.9}, {"S", 0.6}});
        m.mechanisms["Y"] = logit_mech("Y", -1.0, {{"X", 0.7}, {"A", 0.8}, {"S", 0.6}});
        m.exposure = "X";
        m.outcome = "Y";
        s.cohorts = indicator_cohorts(std::string("P"));
        s.dag_fixture = m.dag;
        s.true_marginal_log_or = 0.6598881140186524;
        lib.push_back(std::move(s));
    }

    // S-3A: within-cohort measurement bias via nondifferential misclassification
    {
        ScenarioBundle s;
        s.id = "S-3A";
        s.description = "within-cohort measurement bias (nondifferential exposure misclassification)";
        StructuralModel& m = s.model;
        m.dag.nodes = {make_node("X", NodeKind::Exposure), make_node("Y", NodeKind::Outcome),
                       make_node("X*", NodeKind::MeasuredProxy),
                       make_node("U_X", NodeKind::Auxiliary, false)};
        m.dag.edges = {{"X", "Y"}, {"X", "X*"}, {"U_X", "X*"}};
        m.root_priors = {{"X", 0.5}, {"U_X", 0.5}};
        Mechanism mis;
        mis.node = "X*";
        mis.family = MechanismFamily::Misclassify;
        mis.source = "X";
        mis.sensitivity = 0.85;
        mis.specificity = 0.95;
        m.mechanisms["X*"] = mis;
        m.mechanisms["Y"] = logit_mech("Y", -1.0, {{"X", 0.7}});
        m.exposure = "X";
        m.outcome = "Y";
        s.cohorts = plain_cohorts();
        s.dag_fixture = m.dag;
        s.true_marginal_log_or = 0.7;
        s.analysis_exposure = "X*";
        lib.push_back(std::move(s));
    }

    // S-3B: S-3A plus cohort-dependent misclassification and harmonized measure
    {
        ScenarioBundle s;
        s.id = "S-3B";
        s.description = "across-cohort measurement bias (cohort-dependent misclassification)";
        StructuralModel& m = s.model;
        m.dag.nodes = {make_node("X", NodeKind::Exposure),  make_node("Y", NodeKind::Outcome),
                       make_node("X*", NodeKind::MeasuredProxy),
                       make_node("U_X", NodeKind::Auxiliary, false),
                       make_node("S", NodeKind::CohortIndicator),
                       make_node("X**", NodeKind::MeasuredProxy)};
        m.dag.edges = {{"X", "Y"}, {"X", "X*"}, {"U_X", "X*"}, {"S", "X*"}, {"X*", "X**"}, {"S", "X**"}};
        m.root_priors = {{"X", 0.5}, {"U_X", 0.5}, {"S", 0.5}};
        Mechanism mis;
        mis.node = "X*";
        mis.family = MechanismFamily::Misclassify;
        mis.source = "X";
        mis.sensitivity = 0.85;
        mis.specificity = 0.95;
        m.mechanisms["X*"] = mis;
        Mechanism harm;
        harm.node = "X**";
        harm.family = MechanismFamily::Deterministic;
        harm.table_parents = {"X*", "S"};
        harm.table = {0, 0, 1, 1}; // harmonization keeps the per-cohort measure
        m.mechanisms["X**"] = harm;
        m.mechanisms["Y"] = logit_mech("Y", -1.0, {{"X", 0.7}});
        m.exposure = "X";
        m.outcome = "Y";
        auto cohorts = indicator_cohorts();
        MechanismOverride worse;
        worse.sensitivity = 0.75;
        worse.specificity = 0.90;
        cohorts[1].overrides["X*"] = worse;
        s.cohorts = cohorts;
        s.dag_fixture = m.dag;
        s.true_marginal_log_or = 0.7;
        s.analysis_exposure = "X**";
        lib.push_back(std::move(s));
    }

    return lib;
}

const ScenarioBundle& find_scenario(const std::vector<ScenarioBundle>& library, const std::string& id)
{
    for (const ScenarioBundle& s : library)
        if (s.id == id) return s;
    throw DomainError("unknown scenario id '" + id + "'");
}

// ---------------------------------------------------------------------------
// JSON interface

namespace {

Mechanism mechanism_from_json(const std::string& node, const json& jm)
{
    Mechanism m;
    m.node = node;
    std::string family = jm.at("family").get<std::string>();
    if (family == "BernoulliLogit") {
        m.family = MechanismFamily::BernoulliLogit;
        m.intercept = jm.value("intercept", 0.0);
        if (jm.contains("coefficients"))
            for (const auto& [p, c] : jm["coefficients"].items()) m.coefficients[p] = c.get<double>();
    } else if (family == "Deterministic") {
        m.family = MechanismFamily::Deterministic;
        for (const auto& p : jm.at("parents")) m.table_parents.push_back(p.get<std::string>());
        for (const auto& v : jm.at("table")) m.table.push_back(v.get<int>());
    } else if (family == "Misclassify") {
        m.family = MechanismFamily::Misclassify;
        m.source = jm.at("source").get<std::string>();
        m.sensitivity = jm.at("sensitivity").get<double>();
        m.specificity = jm.at("specificity").get<double>();
    } else {
        throw DomainError("unknown mechanism family '" + family + "'");
    }
    return m;
}

json mechanism_to_json(const Mechanism& m)
{
    json jm;
    switch (m.family) {
        case MechanismFamily::BernoulliLogit:
            jm["family"] = "BernoulliLogit";
            jm["intercept"] = m.intercept;
            jm["coefficients"] = json(m.coefficients);
            break;
        case MechanismFamily::Deterministic:
            jm["family"] = "Deterministic";
            jm["parents"] = json(m.table_parents);
            jm["table"] = json(m.table);
            break;
        case MechanismFamily::Misclassify:
            jm["family"] = "Misclassify";
            jm["source"] = m.source;
            jm["sensitivity"] = m.sensitivity;
            jm["specificity"] = m.specificity;
            break;
    }
    return jm;
}

} // namespace

StructuralModel model_from_json_string(const std::string& text)
{
    json doc;
    try {
        doc = json::parse(text);
    } catch (const json::parse_error& e) {
        throw DomainError(std::string("model spec: malformed JSON: ") + e.what());
    }
    StructuralModel m;
    m.dag = dag_from_json_string(doc.at("dag").dump());
    if (doc.contains("root_priors"))
        for (const auto& [node, p] : doc["root_priors"].items()) m.root_priors[node] = p.get<double>();
    if (doc.contains("mechanisms"))
        for (const auto& [node, jm] : doc["mechanisms"].items())
            m.mechanisms[node] = mechanism_from_json(node, jm);
    m.exposure = doc.value("exposure", "");
    m.outcome = doc.value("outcome", "");
    return m;
}

std::string model_to_json_string(const StructuralModel& model)
{
    json doc;
    doc["dag"] = json::parse(dag_to_json_string(model.dag));
    doc["root_priors"] = json(model.root_priors);
    doc["mechanisms"] = json::object();
    for (const auto& [node, m] : model.mechanisms) doc["mechanisms"][node] = mechanism_to_json(m);
    doc["exposure"] = model.exposure;
    doc["outcome"] = model.outcome;
    return doc.dump(2) + "\n";
}

std::vector<CohortConfig> cohorts_from_json(const std::string& text)
{
    json doc;
    try {
        doc = json::parse(text);
    } catch (const json::parse_error& e) {
        throw DomainError(std::string("cohort spec: malformed JSON: ") + e.what());
    }
    std::vector<CohortConfig> out;
    for (const auto& jc : doc) {
        CohortConfig c;
        c.id = jc.at("id").get<std::string>();
        c.n = jc.at("n").get<int>();
        if (jc.contains("overrides")) {
            for (const auto& [node, jo] : jc["overrides"].items()) {
                MechanismOverride ov;
                if (jo.contains("intercept")) ov.intercept = jo["intercept"].get<double>();
                if (jo.contains("coefficients"))
                    for (const auto& [p, v] : jo["coefficients"].items())
                        ov.coefficients[p] = v.get<double>();
                if (jo.contains("sensitivity")) ov.sensitivity = jo["sensitivity"].get<double>();
                if (jo.contains("specificity")) ov.specificity = jo["specificity"].get<double>();
                if (jo.contains("root_prior")) ov.root_prior = jo["root_prior"].get<double>();
                c.overrides[node] = ov;
            }
        }
        if (jc.contains("missingness")) {
            for (const auto& [var, jm] : jc["missingness"].items()) {
                Missingness miss;
                std::string kind = jm.at("kind").get<std::string>();
                if (kind == "MCAR") {
                    miss.kind = Missingness::Kind::MCAR;
                    miss.rate = jm.at("rate").get<double>();
                } else if (kind == "MAR") {
                    miss.kind = Missingness::Kind::MAR;
                    miss.intercept = jm.value("intercept", 0.0);
                    if (jm.contains("predictors"))
                        for (const auto& [p, v] : jm["predictors"].items())
                            miss.predictors[p] = v.get<double>();
                } else {
                    throw DomainError("unknown missingness kind '" + kind + "'");
                }
                c.missingness[var] = miss;
            }
        }
        if (jc.contains("selection_node")) c.selection_node = jc["selection_node"].get<std::string>();
        out.push_back(std::move(c));
    }
    return out;
}

std::string cohorts_to_json(const std::vector<CohortConfig>& cohorts)
{
    json doc = json::array();
    for (const CohortConfig& c : cohorts) {
        json jc{{"id", c.id}, {"n", c.n}};
        if (!c.overrides.empty()) {
            json jo = json::object();
            for (const auto& [node, ov] : c.overrides) {
                json j;
                if (ov.intercept) j["intercept"] = *ov.intercept;
                if (!ov.coefficients.empty()) j["coefficients"] = json(ov.coefficients);
                if (ov.sensitivity) j["sensitivity"] = *ov.sensitivity;
                if (ov.specificity) j["specificity"] = *ov.specificity;
                if (ov.root_prior) j["root_prior"] = *ov.root_prior;
                jo[node] = j;
            }
            jc["overrides"] = jo;
        }
        if (!c.missingness.empty()) {
            json jm = json::object();
            for (const auto& [var, miss] : c.missingness) {
                json j;
                if (miss.kind == Missingness::Kind::MCAR) {
                    j["kind"] = "MCAR";
                    j["rate"] = miss.rate;
                } else {
                    j["kind"] = "MAR";
                    j["intercept"] = miss.intercept;
                    j["predictors"] = json(miss.predictors);
                }
                jm[var] = j;
            }
            jc["missingness"] = jm;
        }
        if (c.selection_node) jc["selection_node"] = *c.selection_node;
        doc.push_back(jc);
    }
    return doc.dump(2) + "\n";
}

} // namespace cohortforge
