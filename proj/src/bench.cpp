#include "cohortforge/bench.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

namespace cohortforge {

using json = nlohmann::ordered_json;

std::string to_string(BenchEstimatorConfig::Method m)
{
    switch (m) {
        case BenchEstimatorConfig::Method::Crude: return "crude";
        case BenchEstimatorConfig::Method::Conditional: return "conditional";
        case BenchEstimatorConfig::Method::IPW: return "ipw";
        case BenchEstimatorConfig::Method::GComp: return "gcomp";
        case BenchEstimatorConfig::Method::AIPW: return "aipw";
    }
    return "crude";
}

namespace {

BenchEstimatorConfig::Method bench_method_from_string(const std::string& s)
{
    if (s == "crude") return BenchEstimatorConfig::Method::Crude;
    if (s == "conditional") return BenchEstimatorConfig::Method::Conditional;
    if (s == "ipw") return BenchEstimatorConfig::Method::IPW;
    if (s == "gcomp") return BenchEstimatorConfig::Method::GComp;
    if (s == "aipw") return BenchEstimatorConfig::Method::AIPW;
    throw DomainError("unknown estimator method '" + s + "'");
}

struct ResolvedScenario {
    StructuralModel model;
    std::vector<CohortConfig> cohorts;
    std::string analysis_exposure; // measured exposure used by default
    double true_marginal_log_or = 0.0;
    double true_conditional_log_or = 0.0; // given every other parent of the outcome
    bool has_selection = false;
};

ResolvedScenario resolve_scenario(const ScenarioSpec& spec)
{
    ResolvedScenario rs;
    if (spec.custom_model) {
        rs.model = *spec.custom_model;
        if (!spec.custom_cohorts) throw DomainError("custom scenario needs custom_cohorts");
        rs.cohorts = *spec.custom_cohorts;
        rs.analysis_exposure =
            spec.custom_analysis_exposure ? *spec.custom_analysis_exposure : rs.model.exposure;
    } else {
        auto lib = scenario_library();
        const ScenarioBundle& bundle = find_scenario(lib, spec.scenario_id);
        rs.model = bundle.model;
        rs.cohorts = bundle.cohorts;
        rs.analysis_exposure =
            bundle.analysis_exposure ? *bundle.analysis_exposure : rs.model.exposure;
    }
    for (CohortConfig& c : rs.cohorts) {
        if (spec.n_per_cohort > 0) c.n = spec.n_per_cohort;
        for (const auto& [var, miss] : spec.missingness) c.missingness[var] = miss;
        rs.has_selection = rs.has_selection || c.selection_node.has_value();
    }

    TrueEffect marginal = true_effect(rs.model, {EstimandScope::Marginal, {}}, EffectMeasure::OddsRatio);
    rs.true_marginal_log_or = std::log(marginal.value);
    Estimand conditional{EstimandScope::Conditional, {}};
    for (const std::string& parent : rs.model.dag.parents(rs.model.outcome))
        if (parent != rs.model.exposure) conditional.strata[parent] = 0;
    TrueEffect cond = true_effect(rs.model, conditional, EffectMeasure::OddsRatio);
    rs.true_conditional_log_or = std::log(cond.value);
    return rs;
}

std::vector<std::string> config_columns(const BenchEstimatorConfig& config, const std::string& exposure,
                                        const std::string& outcome)
{
    std::vector<std::string> cols = config.covariates;
    cols.push_back(exposure);
    cols.push_back(outcome);
    return cols;
}

bool has_missing(const MultiCohortDataset& data, const std::vector<std::string>& cols)
{
    for (const std::string& name : cols) {
        int c = data.require_col(name);
        for (Eigen::Index r = 0; r < data.n_rows(); ++r)
            if (data.values(r, c) == kMissing) return true;
    }
    return false;
}

// per-replication estimate for one configuration
struct RepEstimate {
    double log_or = std::numeric_limits<double>::quiet_NaN();
    double ci_low = std::numeric_limits<double>::quiet_NaN();  // log scale
    double ci_high = std::numeric_limits<double>::quiet_NaN(); // log scale
    bool nonconverged = false;
    bool failed = false;
};

EffectEstimate run_method(const BenchEstimatorConfig& config, const MultiCohortDataset& data,
                          const std::string& exposure, const std::string& outcome,
                          const EstimatorOptions& opts)
{
    std::vector<EffectEstimate> est;
    switch (config.method) {
        case BenchEstimatorConfig::Method::Crude:
            est = conditional_or(data, exposure, outcome, {}, opts);
            for (EffectEstimate& e : est) {
                e.method = "crude";
                e.scope = EstimandScope::Marginal; // a crude contrast targets the marginal OR
            }
            break;
        case BenchEstimatorConfig::Method::Conditional:
            est = conditional_or(data, exposure, outcome, config.covariates, opts);
            break;
        case BenchEstimatorConfig::Method::IPW:
            est = ipw_marginal(data, exposure, outcome, config.covariates, opts.stabilized, opts);
            break;
        case BenchEstimatorConfig::Method::GComp:
            est = g_computation(data, exposure, outcome, config.covariates, opts);
            break;
        case BenchEstimatorConfig::Method::AIPW:
            est = aipw(data, exposure, outcome, config.covariates, opts);
            break;
    }
    if (est.empty()) throw DomainError("estimator produced no arm estimates");
    return est.front(); // arm 1 vs comparator in the binary benchmarks
}

RepEstimate estimate_once(const BenchEstimatorConfig& config, const ResolvedScenario& rs,
                          const MultiCohortDataset& full, const MultiCohortDataset& analysis,
                          std::uint64_t seed, std::vector<std::string>& config_warnings, bool first_rep)
{
    const std::string exposure =
        config.exposure_override ? *config.exposure_override : rs.analysis_exposure;
    const std::string outcome = rs.model.outcome;
    std::vector<std::string> needed = config_columns(config, exposure, outcome);

    EstimatorOptions opts;
    opts.bootstrap = config.bootstrap;
    opts.seed = seed;
    opts.include_cohort_indicator = config.include_cohort_indicator && analysis.cohort_ids.size() > 1;

    RepEstimate rep;
    try {
        MultiCohortDataset working = analysis;

        if (config.participation_ipw) {
            // participation model on the pre-restriction data, weights applied
            // to the restricted rows
            std::vector<std::string> pc = config.participation_covariates;
            {
                Eigen::Index width = 1;
                for (const std::string& name : pc)
                    width += full.columns[static_cast<std::size_t>(full.require_col(name))].n_levels() - 1;
                bool add_cohort = config.include_cohort_indicator && full.cohort_ids.size() > 1;
                if (add_cohort) width += static_cast<Eigen::Index>(full.cohort_ids.size()) - 1;
                Mat2D W(full.n_rows(), width);
                W.col(0).setOnes();
                Eigen::Index at = 1;
                for (const std::string& name : pc) {
                    int c = full.require_col(name);
                    int levels = full.columns[static_cast<std::size_t>(c)].n_levels();
                    for (int lv = 1; lv < levels; ++lv) {
                        for (Eigen::Index r = 0; r < full.n_rows(); ++r)
                            W(r, at) = full.values(r, c) == lv ? 1.0 : 0.0;
                        ++at;
                    }
                }
                if (add_cohort) {
                    for (int lv = 1; lv < static_cast<int>(full.cohort_ids.size()); ++lv) {
                        for (Eigen::Index r = 0; r < full.n_rows(); ++r)
                            W(r, at) = full.cohort(r) == lv ? 1.0 : 0.0;
                        ++at;
                    }
                }
                Vec1D sel(full.n_rows());
                for (Eigen::Index r = 0; r < full.n_rows(); ++r) sel(r) = full.selected(r) ? 1.0 : 0.0;
                FitResult pfit = fit_logistic(W, sel);
                if (!pfit.converged) rep.nonconverged = true;
                Vec1D eta = W * pfit.coef;
                Vec1D weights(working.n_rows());
                Eigen::Index at_row = 0;
                for (Eigen::Index r = 0; r < full.n_rows(); ++r) {
                    if (!full.selected(r)) continue;
                    weights(at_row++) = 1.0 / std::max(expit(eta(r)), 1e-6);
                }
                opts.base_weights = weights;
            }
        }

        if (config.missing.kind == MissingHandling::Kind::MultipleImputation) {
            if (!has_missing(working, needed)) {
                if (first_rep)
                    config_warnings.push_back(
                        "multiple imputation requested but the scenario produced no missing values");
            } else {
                // impute using the analysis variables; pooled scope adds the
                // cohort indicator inside the imputation models
                std::vector<std::string> mi_cols = needed;
                auto imputations =
                    multiple_impute(working, config.missing.m, config.missing.scope,
                                    seed ^ 0x313C3ULL, mi_cols);
                std::vector<RubinInput> inputs;
                bool all_finite_var = true;
                bool flagged = false;
                for (const auto& imp : imputations) {
                    EffectEstimate e = run_method(config, imp, exposure, outcome, opts);
                    double v = std::isfinite(e.se_log) ? e.se_log * e.se_log : 0.0;
                    all_finite_var = all_finite_var && std::isfinite(e.se_log) && e.se_log > 0;
                    for (const std::string& w : e.warnings)
                        flagged = flagged || w.find("non-converge") != std::string::npos ||
                                  w.find("separation") != std::string::npos;
                    inputs.push_back({e.log_point, v});
                }
                RubinResult pooled = rubin_pool(inputs);
                rep.log_or = pooled.pooled;
                rep.nonconverged = rep.nonconverged || flagged;
                if (all_finite_var) {
                    double se = std::sqrt(pooled.total);
                    double z = 1.959963984540054;
                    rep.ci_low = pooled.pooled - z * se;
                    rep.ci_high = pooled.pooled + z * se;
                }
                return rep;
            }
        }

        if (config.missing.kind == MissingHandling::Kind::CompleteCase) {
            working = complete_case(working, needed);
        } else if (has_missing(working, needed)) {
            if (first_rep)
                config_warnings.push_back(
                    "missing values present without an imputation strategy; complete cases used");
            working = complete_case(working, needed);
        }

        EffectEstimate e = run_method(config, working, exposure, outcome, opts);
        rep.log_or = e.log_point;
        for (const std::string& w : e.warnings)
            rep.nonconverged = rep.nonconverged || w.find("non-converge") != std::string::npos ||
                               w.find("separation") != std::string::npos;
        if (std::isfinite(e.se_log) && std::isfinite(e.ci_low) && e.ci_low > 0) {
            rep.ci_low = std::log(e.ci_low);
            rep.ci_high = std::log(e.ci_high);
        }
    } catch (const DomainError& err) {
        rep.failed = true;
        if (first_rep) config_warnings.push_back(std::string("replication failed: ") + err.what());
    }
    return rep;
}

} // namespace

BiasReport run_scenario(const ScenarioSpec& spec)
{
    if (spec.replications < 1) throw DomainError("run_scenario requires R >= 1");
    if (spec.estimators.empty()) throw DomainError("run_scenario requires at least one estimator config");
    ResolvedScenario rs = resolve_scenario(spec);

    BiasReport report;
    report.scenario_id = spec.scenario_id;
    report.replications = spec.replications;
    report.n_per_cohort = spec.n_per_cohort;
    report.seed = spec.base_seed;
    report.true_marginal_log_or = rs.true_marginal_log_or;
    report.true_conditional_log_or = rs.true_conditional_log_or;

    struct Accumulator {
        std::vector<double> estimates;
        std::vector<double> widths;
        int covered = 0, with_ci = 0, nonconverged = 0;
        std::vector<std::string> warnings;
    };
    std::vector<Accumulator> acc(spec.estimators.size());

    for (int r = 0; r < spec.replications; ++r) {
        std::uint64_t rep_seed = spec.base_seed + static_cast<std::uint64_t>(r);
        MultiCohortDataset full = simulate(rs.model, rs.cohorts, rep_seed);
        MultiCohortDataset analysis = rs.has_selection ? restrict_to_selected(full) : full;

        for (std::size_t k = 0; k < spec.estimators.size(); ++k) {
            const BenchEstimatorConfig& config = spec.estimators[k];
            RepEstimate rep = estimate_once(config, rs, full, analysis,
                                            rep_seed ^ (0xE57 + k), acc[k].warnings, r == 0);
            if (rep.failed) {
                ++acc[k].nonconverged;
                continue;
            }
            if (rep.nonconverged) ++acc[k].nonconverged;
            if (std::isfinite(rep.log_or)) acc[k].estimates.push_back(rep.log_or);
            if (std::isfinite(rep.ci_low) && std::isfinite(rep.ci_high)) {
                ++acc[k].with_ci;
                acc[k].widths.push_back(rep.ci_high - rep.ci_low);
                double target = config.method == BenchEstimatorConfig::Method::Conditional
                                    ? rs.true_conditional_log_or
                                    : rs.true_marginal_log_or;
                if (rep.ci_low <= target && target <= rep.ci_high) ++acc[k].covered;
            }
            if (spec.keep_replication_log) {
                // stored after aggregation below
            }
        }
    }

    for (std::size_t k = 0; k < spec.estimators.size(); ++k) {
        const BenchEstimatorConfig& config = spec.estimators[k];
        BiasRow row;
        row.label = config.label.empty() ? to_string(config.method) : config.label;
        row.method = to_string(config.method);
        row.scope = config.method == BenchEstimatorConfig::Method::Conditional
                        ? EstimandScope::Conditional
                        : EstimandScope::Marginal;
        row.oracle_log_or = row.scope == EstimandScope::Conditional ? rs.true_conditional_log_or
                                                                    : rs.true_marginal_log_or;
        const Accumulator& a = acc[k];
        row.replications_used = static_cast<int>(a.estimates.size());
        row.nonconverged = a.nonconverged;
        row.warnings = a.warnings;
        if (!a.estimates.empty()) {
            double mean = 0;
            for (double v : a.estimates) mean += v;
            mean /= static_cast<double>(a.estimates.size());
            double ss = 0;
            for (double v : a.estimates) ss += (v - mean) * (v - mean);
            row.mean_log_or = mean;
            row.bias = mean - row.oracle_log_or;
            row.mc_se = a.estimates.size() > 1
                            ? std::sqrt(ss / static_cast<double>(a.estimates.size() - 1)) /
                                  std::sqrt(static_cast<double>(a.estimates.size()))
                            : 0.0;
        }
        if (a.with_ci > 0) {
            row.coverage = static_cast<double>(a.covered) / static_cast<double>(a.with_ci);
            double w = 0;
            for (double v : a.widths) w += v;
            row.mean_ci_width = w / static_cast<double>(a.widths.size());
        }
        if (spec.keep_replication_log) row.replication_log = a.estimates;
        report.rows.push_back(std::move(row));
    }
    return report;
}

PoolingContrastReport pooling_contrast(const ScenarioSpec& spec)
{
    ResolvedScenario rs = resolve_scenario(spec);
    if (rs.cohorts.size() < 2)
        throw DomainError("pooling_contrast requires a scenario with at least two cohorts");

    PoolingContrastReport out;
    out.scenario_id = spec.scenario_id;
    for (const BenchEstimatorConfig& config : spec.estimators) {
        BenchEstimatorConfig without = config;
        BenchEstimatorConfig with = config;
        if (config.missing.kind == MissingHandling::Kind::MultipleImputation) {
            without.missing.kind = MissingHandling::Kind::CompleteCase;
            with.missing.scope = ImputeScope::PooledWithIndicator;
            without.label = config.label + " [complete-case]";
            with.label = config.label + " [mi-pooled-with-indicator]";
        } else {
            without.include_cohort_indicator = false;
            with.include_cohort_indicator = true;
            without.label = config.label + " [no cohort indicator]";
            with.label = config.label + " [cohort indicator]";
        }
        ScenarioSpec pair_spec = spec;
        pair_spec.estimators = {without, with};
        BiasReport report = run_scenario(pair_spec);

        PoolingContrast contrast;
        contrast.label = config.label.empty() ? to_string(config.method) : config.label;
        contrast.without_remedy = report.rows[0];
        contrast.with_remedy = report.rows[1];
        double denom = std::abs(contrast.without_remedy.bias);
        contrast.reduction_ratio =
            denom > 0 ? 1.0 - std::abs(contrast.with_remedy.bias) / denom : 0.0;
        out.contrasts.push_back(std::move(contrast));
    }
    return out;
}

double TwoByTwo::odds_ratio() const
{
    return (exposed_cases * unexposed_noncases) / (exposed_noncases * unexposed_cases);
}

MisclassificationCorrection misclassification_correct(const TwoByTwo& observed, double sensitivity,
                                                      double specificity)
{
    if (!(sensitivity + specificity > 1.0))
        throw DomainError("misclassification_correct: non-invertible (sensitivity + specificity <= 1)");

    auto correct_stratum = [&](double a_obs, double c_obs, double& a_true, double& c_true) {
        double total = a_obs + c_obs;
        a_true = (a_obs - (1.0 - specificity) * total) / (sensitivity + specificity - 1.0);
        c_true = total - a_true;
        if (a_true < 0.0 || c_true < 0.0)
            throw DomainError("misclassification_correct: parameters inconsistent with data "
                              "(negative corrected cell)");
    };

    MisclassificationCorrection res;
    correct_stratum(observed.exposed_cases, observed.unexposed_cases, res.corrected.exposed_cases,
                    res.corrected.unexposed_cases);
    correct_stratum(observed.exposed_noncases, observed.unexposed_noncases,
                    res.corrected.exposed_noncases, res.corrected.unexposed_noncases);
    res.corrected_or = res.corrected.odds_ratio();
    return res;
}

// ---------------------------------------------------------------------------
// emission

namespace {

std::string num(double v, int precision = 12)
{
    if (std::isnan(v)) return "";
    std::ostringstream os;
    os.precision(precision);
    os << v;
    return os.str();
}

json row_to_json(const BiasRow& row)
{
    json j;
    j["label"] = row.label;
    j["method"] = row.method;
    j["scope"] = to_string(row.scope);
    j["oracle_log_or"] = row.oracle_log_or;
    j["mean_log_or"] = row.mean_log_or;
    j["bias"] = row.bias;
    j["mc_se"] = row.mc_se;
    if (row.coverage) j["coverage"] = *row.coverage;
    if (row.mean_ci_width) j["mean_ci_width"] = *row.mean_ci_width;
    j["nonconverged"] = row.nonconverged;
    j["replications_used"] = row.replications_used;
    j["warnings"] = json(row.warnings);
    return j;
}

} // namespace

std::string bias_report_to_csv(const BiasReport& report)
{
    std::ostringstream os;
    os << "scenario,label,method,scope,oracle_log_or,mean_log_or,bias,mc_se,coverage,mean_ci_width,"
          "nonconverged,replications_used,warnings\n";
    for (const BiasRow& row : report.rows) {
        std::string warn;
        for (const std::string& w : row.warnings) warn += (warn.empty() ? "" : "; ") + w;
        os << report.scenario_id << "," << row.label << "," << row.method << "," << to_string(row.scope)
           << "," << num(row.oracle_log_or) << "," << num(row.mean_log_or) << "," << num(row.bias) << ","
           << num(row.mc_se) << "," << (row.coverage ? num(*row.coverage) : "") << ","
           << (row.mean_ci_width ? num(*row.mean_ci_width) : "") << "," << row.nonconverged << ","
           << row.replications_used << ",\"" << warn << "\"\n";
    }
    return os.str();
}

std::string bias_report_to_json(const BiasReport& report)
{
    json doc;
    doc["scenario"] = report.scenario_id;
    doc["replications"] = report.replications;
    doc["n_per_cohort"] = report.n_per_cohort;
    doc["seed"] = report.seed;
    doc["true_marginal_log_or"] = report.true_marginal_log_or;
    doc["true_conditional_log_or"] = report.true_conditional_log_or;
    doc["bias_convention"] =
        "bias present when |bias| > 4 MC-SE; bias absent when |bias| < 3 MC-SE";
    doc["rows"] = json::array();
    for (const BiasRow& row : report.rows) doc["rows"].push_back(row_to_json(row));
    return doc.dump(2) + "\n";
}

std::string replication_log_to_csv(const BiasReport& report)
{
    std::ostringstream os;
    os << "scenario,label,replication,log_or\n";
    for (const BiasRow& row : report.rows)
        for (std::size_t i = 0; i < row.replication_log.size(); ++i)
            os << report.scenario_id << "," << row.label << "," << i << ","
               << num(row.replication_log[i]) << "\n";
    return os.str();
}

std::string bias_report_summary(const BiasReport& report)
{
    struct Cells {
        std::string label, mean, bias, mcse, cover, nonc;
    };
    std::vector<Cells> rows;
    for (const BiasRow& row : report.rows)
        rows.push_back({row.label, num(row.mean_log_or, 4), num(row.bias, 4), num(row.mc_se, 4),
                        row.coverage ? num(*row.coverage, 3) : "-", std::to_string(row.nonconverged)});
    Cells header{"ESTIMATOR", "MEAN LOG-OR", "BIAS", "MC-SE", "COVERAGE", "NONCONV"};
    std::size_t w[6] = {header.label.size(), header.mean.size(), header.bias.size(),
                        header.mcse.size(), header.cover.size(), header.nonc.size()};
    for (const Cells& r : rows) {
        w[0] = std::max(w[0], r.label.size());
        w[1] = std::max(w[1], r.mean.size());
        w[2] = std::max(w[2], r.bias.size());
        w[3] = std::max(w[3], r.mcse.size());
        w[4] = std::max(w[4], r.cover.size());
        w[5] = std::max(w[5], r.nonc.size());
    }
    std::ostringstream os;
    os << "scenario " << report.scenario_id << ": R=" << report.replications
       << ", n/cohort=" << report.n_per_cohort << ", seed=" << report.seed
       << ", true marginal log-OR=" << num(report.true_marginal_log_or, 6) << "\n";
    auto emit = [&](const Cells& r) {
        auto pad = [](const std::string& s, std::size_t width) {
            return s + std::string(width - s.size() + 2, ' ');
        };
        os << pad(r.label, w[0]) << pad(r.mean, w[1]) << pad(r.bias, w[2]) << pad(r.mcse, w[3])
           << pad(r.cover, w[4]) << r.nonc << "\n";
    };
    emit(header);
    for (const Cells& r : rows) emit(r);
    return os.str();
}

std::string pooling_contrast_to_json(const PoolingContrastReport& report)
{
    json doc;
    doc["scenario"] = report.scenario_id;
    doc["contrasts"] = json::array();
    for (const PoolingContrast& c : report.contrasts) {
        json jc;
        jc["label"] = c.label;
        jc["without_remedy"] = row_to_json(c.without_remedy);
        jc["with_remedy"] = row_to_json(c.with_remedy);
        jc["bias_reduction_ratio"] = c.reduction_ratio;
        doc["contrasts"].push_back(jc);
    }
    return doc.dump(2) + "\n";
}

std::string pooling_contrast_summary(const PoolingContrastReport& report)
{
    std::ostringstream os;
    os << "pooling contrast on " << report.scenario_id << "\n";
    for (const PoolingContrast& c : report.contrasts) {
        os << c.label << ": bias " << num(c.without_remedy.bias, 4) << " -> "
           << num(c.with_remedy.bias, 4) << " (reduction " << num(c.reduction_ratio * 100.0, 3)
           << "%)\n";
    }
    return os.str();
}

// ---------------------------------------------------------------------------
// scenario-spec files

ScenarioSpec scenario_spec_from_json_string(const std::string& text)
{
    json doc;
    try {
        doc = json::parse(text);
    } catch (const json::parse_error& e) {
        throw DomainError(std::string("scenario spec: malformed JSON: ") + e.what());
    }
    ScenarioSpec spec;
    spec.scenario_id = doc.value("scenario", "custom");
    if (doc.contains("custom_model"))
        spec.custom_model = model_from_json_string(doc["custom_model"].dump());
    if (doc.contains("custom_cohorts"))
        spec.custom_cohorts = cohorts_from_json(doc["custom_cohorts"].dump());
    if (doc.contains("custom_analysis_exposure"))
        spec.custom_analysis_exposure = doc["custom_analysis_exposure"].get<std::string>();
    if (doc.contains("missingness")) {
        json wrapper = json::array();
        wrapper.push_back(json{{"id", "tmp"}, {"n", 1}, {"missingness", doc["missingness"]}});
        std::vector<CohortConfig> tmp = cohorts_from_json(wrapper.dump());
        spec.missingness = tmp.front().missingness;
    }
    spec.replications = doc.value("replications", 200);
    spec.n_per_cohort = doc.value("n_per_cohort", 20000);
    spec.base_seed = doc.value("seed", 0ull);
    spec.keep_replication_log = doc.value("replication_log", false);
    const json estimators = doc.value("estimators", json::array());
    for (const auto& je : estimators) {
        BenchEstimatorConfig config;
        config.label = je.value("label", "");
        config.method = bench_method_from_string(je.value("method", "crude"));
        const json covs = je.value("covariates", json::array());
        for (const auto& c : covs) config.covariates.push_back(c.get<std::string>());
        config.include_cohort_indicator = je.value("cohort_indicator", false);
        if (je.contains("missing")) {
            std::string kind = je["missing"].value("kind", "None");
            if (kind == "None") {
                config.missing.kind = MissingHandling::Kind::None;
            } else if (kind == "CompleteCase") {
                config.missing.kind = MissingHandling::Kind::CompleteCase;
            } else if (kind == "MultipleImputation") {
                config.missing.kind = MissingHandling::Kind::MultipleImputation;
                config.missing.m = je["missing"].value("m", 20);
                config.missing.scope = je["missing"].value("scope", "PooledWithIndicator") ==
                                               std::string("PerCohort")
                                           ? ImputeScope::PerCohort
                                           : ImputeScope::PooledWithIndicator;
            } else {
                throw DomainError("unknown missing-data kind '" + kind + "'");
            }
        }
        config.participation_ipw = je.value("participation_ipw", false);
        const json pcovs = je.value("participation_covariates", json::array());
        for (const auto& c : pcovs) config.participation_covariates.push_back(c.get<std::string>());
        config.bootstrap = je.value("bootstrap", 0);
        if (je.contains("exposure_override"))
            config.exposure_override = je["exposure_override"].get<std::string>();
        spec.estimators.push_back(std::move(config));
    }
    return spec;
}

ScenarioSpec load_scenario_spec(const std::string& path)
{
    std::ifstream in(path);
    if (!in) throw DomainError("cannot open scenario spec '" + path + "'");
    std::stringstream buf;
    buf << in.rdbuf();
    return scenario_spec_from_json_string(buf.str());
}

std::vector<BenchEstimatorConfig> default_bench_configs(const std::string& scenario_id)
{
    using Method = BenchEstimatorConfig::Method;
    std::vector<BenchEstimatorConfig> configs;
    auto add = [&](const std::string& label, Method method, std::vector<std::string> covs,
                   bool indicator) {
        BenchEstimatorConfig c;
        c.label = label;
        c.method = method;
        c.covariates = std::move(covs);
        c.include_cohort_indicator = indicator;
        configs.push_back(std::move(c));
    };
    if (scenario_id == "S-1A") {
        add("crude", Method::Crude, {}, false);
        add("conditional C,U", Method::Conditional, {"C", "U"}, false);
        add("gcomp C,U", Method::GComp, {"C", "U"}, false);
    } else if (scenario_id == "S-1B") {
        add("gcomp C,U", Method::GComp, {"C", "U"}, false);
        add("gcomp C,U + cohort", Method::GComp, {"C", "U"}, true);
    } else if (scenario_id == "S-2A") {
        add("crude restricted", Method::Crude, {}, false);
        BenchEstimatorConfig ipw;
        ipw.label = "participation-ipw";
        ipw.method = Method::Crude;
        ipw.participation_ipw = true;
        ipw.participation_covariates = {"X", "A"};
        configs.push_back(ipw);
    } else if (scenario_id == "S-2B") {
        add("crude restricted", Method::Crude, {}, false);
        BenchEstimatorConfig ipw;
        ipw.label = "participation-ipw + cohort";
        ipw.method = Method::Crude;
        ipw.participation_ipw = true;
        ipw.participation_covariates = {"X", "A"};
        ipw.include_cohort_indicator = true;
        configs.push_back(ipw);
    } else if (scenario_id == "S-3A") {
        add("crude on measured exposure", Method::Crude, {}, false);
        BenchEstimatorConfig truth;
        truth.label = "crude on true exposure";
        truth.method = Method::Crude;
        truth.exposure_override = "X";
        configs.push_back(truth);
    } else if (scenario_id == "S-3B") {
        add("crude on harmonized exposure", Method::Crude, {}, false);
        add("conditional + cohort", Method::Conditional, {}, true);
    } else {
        throw DomainError("unknown scenario id '" + scenario_id + "'");
    }
    return configs;
}

} // namespace cohortforge
