#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "cohortforge/scm.hpp"
#include "oracles.hpp"

using namespace cohortforge;

namespace {

StructuralModel null_model()
{
    StructuralModel m;
    m.dag.nodes = {{"X", NodeKind::Exposure, true, ""},
                   {"Y", NodeKind::Outcome, true, ""},
                   {"C", NodeKind::MeasuredConfounder, true, ""}};
    m.dag.edges = {{"X", "Y"}, {"C", "X"}, {"C", "Y"}};
    m.root_priors = {{"C", 0.5}};
    Mechanism mx;
    mx.node = "X";
    mx.intercept = 0.0;
    mx.coefficients = {{"C", 0.0}};
    Mechanism my;
    my.node = "Y";
    my.intercept = 0.0;
    my.coefficients = {{"X", 0.0}, {"C", 0.0}};
    m.mechanisms = {{"X", mx}, {"Y", my}};
    m.exposure = "X";
    m.outcome = "Y";
    return m;
}

double column_mean(const MultiCohortDataset& d, const std::string& name)
{
    int c = d.require_col(name);
    double sum = 0;
    Eigen::Index n = 0;
    for (Eigen::Index r = 0; r < d.n_rows(); ++r) {
        if (d.values(r, c) == kMissing) continue;
        sum += d.values(r, c);
        ++n;
    }
    return sum / static_cast<double>(n);
}

} // namespace

TEST_CASE("null model draws are balanced Bernoullis")
{
    StructuralModel m = null_model();
    std::vector<CohortConfig> cohorts{{"c1", 20000, {}, {}, std::nullopt}};
    MultiCohortDataset d = simulate(m, cohorts, 99);
    double tol = 3.0 * std::sqrt(0.25 / 20000.0);
    for (const char* col : {"X", "Y", "C"}) CHECK(std::abs(column_mean(d, col) - 0.5) < tol);
}

TEST_CASE("simulation is bit-reproducible for a fixed seed")
{
    auto lib = scenario_library();
    const ScenarioBundle& s = find_scenario(lib, "S-2B");
    std::vector<CohortConfig> cohorts = s.cohorts;
    for (auto& c : cohorts) c.n = 1000;
    MultiCohortDataset a = simulate(s.model, cohorts, 1234);
    MultiCohortDataset b = simulate(s.model, cohorts, 1234);
    CHECK(a.equals(b));
    CHECK(to_csv(a) == to_csv(b));
    MultiCohortDataset c = simulate(s.model, cohorts, 1235);
    CHECK_FALSE(a.equals(c));
}

TEST_CASE("selected fraction falls as the negative participation driver rises")
{
    auto lib = scenario_library();
    StructuralModel m = find_scenario(lib, "S-2A").model;
    std::vector<CohortConfig> cohorts{{"c1", 40000, {}, {}, std::string("P")}};

    auto selected_fraction = [&](double a_prior) {
        StructuralModel variant = m;
        variant.root_priors["A"] = a_prior;
        MultiCohortDataset d = simulate(variant, cohorts, 7);
        double frac = 0;
        for (Eigen::Index r = 0; r < d.n_rows(); ++r) frac += d.selected(r);
        return frac / static_cast<double>(d.n_rows());
    };
    CHECK(selected_fraction(0.2) > selected_fraction(0.8) + 0.05);
}

TEST_CASE("misclassification reproduces sensitivity and specificity empirically")
{
    auto lib = scenario_library();
    const ScenarioBundle& s = find_scenario(lib, "S-3A");
    std::vector<CohortConfig> cohorts{{"c1", 100000, {}, {}, std::nullopt}};
    MultiCohortDataset d = simulate(s.model, cohorts, 31);
    int cx = d.require_col("X"), cs = d.require_col("X*");
    double n1 = 0, hit1 = 0, n0 = 0, hit0 = 0;
    for (Eigen::Index r = 0; r < d.n_rows(); ++r) {
        if (d.values(r, cx) == 1) {
            ++n1;
            hit1 += d.values(r, cs) == 1;
        } else {
            ++n0;
            hit0 += d.values(r, cs) == 0;
        }
    }
    double sens = hit1 / n1, spec = hit0 / n0;
    CHECK(std::abs(sens - 0.85) < 3.0 * std::sqrt(0.85 * 0.15 / n1));
    CHECK(std::abs(spec - 0.95) < 3.0 * std::sqrt(0.95 * 0.05 / n0));
}

TEST_CASE("true_effect is exactly null without causal or biasing paths")
{
    StructuralModel m = null_model();
    // zero coefficients everywhere: no X -> Y effect, no open backdoor
    TrueEffect e = true_effect(m, {EstimandScope::Marginal, {}}, EffectMeasure::OddsRatio);
    CHECK(e.value == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("true_effect conditional on all outcome parents returns the generator coefficient")
{
    auto lib = scenario_library();
    const ScenarioBundle& s = find_scenario(lib, "S-1A");
    Estimand cond{EstimandScope::Conditional, {{"C", 0}, {"U", 0}}};
    TrueEffect e = true_effect(s.model, cond, EffectMeasure::OddsRatio);
    CHECK(std::log(e.value) == doctest::Approx(0.7).epsilon(1e-12));
    Estimand cond11{EstimandScope::Conditional, {{"C", 1}, {"U", 1}}};
    TrueEffect e11 = true_effect(s.model, cond11, EffectMeasure::OddsRatio);
    CHECK(std::log(e11.value) == doctest::Approx(0.7).epsilon(1e-12));
}

TEST_CASE("intervening on the exposure in S-2A leaves participation untouched when X->P is cut")
{
    auto lib = scenario_library();
    StructuralModel m = find_scenario(lib, "S-2A").model;
    m.mechanisms["P"].coefficients["X"] = 0.0;
    // with randomization-by-intervention and no X->P arrow the conditional
    // association given P equals the do-effect
    Estimand sel{EstimandScope::Conditional, {{"P", 1}}};
    TrueEffect cond = true_effect(m, sel, EffectMeasure::OddsRatio);
    TrueEffect marg = true_effect(m, {EstimandScope::Marginal, {}}, EffectMeasure::OddsRatio);
    // P depends on A which also drives Y, so the selected stratum differs from
    // the population; but the structural check is that do(X) never moves P
    StructuralModel probe = m;
    probe.outcome = "P";
    TrueEffect p_effect = true_effect(probe, {EstimandScope::Marginal, {}}, EffectMeasure::RiskDifference);
    CHECK(p_effect.value == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(cond.value > 1.0);
    CHECK(marg.value > 1.0);
}

TEST_CASE("true_effect matches the Monte Carlo do-operator oracle on all six scenarios")
{
    const long long n = 10000000;
    Rng rng(5150);
    for (const ScenarioBundle& s : scenario_library()) {
        TrueEffect e = true_effect(s.model, {EstimandScope::Marginal, {}}, EffectMeasure::OddsRatio);
        Rng r0 = rng.derive(std::hash<std::string>{}(s.id));
        Rng r1 = r0.derive(1);
        double mc0 = oracles::mc_do_risk(s.model, 0, n, r0);
        double mc1 = oracles::mc_do_risk(s.model, 1, n, r1);
        double se0 = std::sqrt(mc0 * (1 - mc0) / static_cast<double>(n));
        double se1 = std::sqrt(mc1 * (1 - mc1) / static_cast<double>(n));
        INFO("scenario ", s.id);
        CHECK(std::abs(e.comparator_risk - mc0) < 3.0 * se0);
        CHECK(std::abs(e.arm_risk - mc1) < 3.0 * se1);
        // agreement within 0.5% on the OR scale
        double mc_or = (mc1 / (1 - mc1)) / (mc0 / (1 - mc0));
        CHECK(std::abs(mc_or - e.value) / e.value < 0.005);
    }
}

TEST_CASE("scenario library carries six scenarios with frozen oracle truths")
{
    auto lib = scenario_library();
    REQUIRE(lib.size() == 6);
    std::vector<std::string> ids;
    for (const auto& s : lib) ids.push_back(s.id);
    CHECK(ids == std::vector<std::string>{"S-1A", "S-1B", "S-2A", "S-2B", "S-3A", "S-3B"});
    for (const auto& s : lib) {
        TrueEffect e = true_effect(s.model, {EstimandScope::Marginal, {}}, EffectMeasure::OddsRatio);
        INFO("scenario ", s.id);
        CHECK(std::log(e.value) == doctest::Approx(s.true_marginal_log_or).epsilon(1e-9));
        ValidationReport vr = s.model.validate();
        CHECK(vr.ok());
        CHECK(validate_dag(s.dag_fixture).ok());
    }
}

TEST_CASE("S-1B differs from S-1A only by the cohort-indicator mechanisms")
{
    auto lib = scenario_library();
    const StructuralModel& a = find_scenario(lib, "S-1A").model;
    const StructuralModel& b = find_scenario(lib, "S-1B").model;
    StructuralModel b_reduced = without_node(b, "S");
    CHECK(b_reduced.mechanisms.at("X").coefficients == a.mechanisms.at("X").coefficients);
    CHECK(b_reduced.mechanisms.at("Y").coefficients == a.mechanisms.at("Y").coefficients);
    CHECK(b_reduced.mechanisms.at("X").intercept == a.mechanisms.at("X").intercept);
    CHECK(b_reduced.root_priors == a.root_priors);
    CHECK(b_reduced.dag.edges.size() == a.dag.edges.size());
}

TEST_CASE("without_node drops the node, its prior, and referencing coefficients")
{
    auto lib = scenario_library();
    StructuralModel m = without_node(find_scenario(lib, "S-1A").model, "U");
    CHECK_FALSE(m.dag.find("U"));
    CHECK(m.root_priors.count("U") == 0);
    CHECK(m.mechanisms.at("X").coefficients.count("U") == 0);
    CHECK(m.mechanisms.at("Y").coefficients.count("U") == 0);
    CHECK(m.validate().ok());
    TrueEffect e = true_effect(m, {EstimandScope::Marginal, {}}, EffectMeasure::OddsRatio);
    CHECK(std::log(e.value) == doctest::Approx(0.6734092212562993).epsilon(1e-9));
}

TEST_CASE("pool stacks cohorts and keeps the cohort tag")
{
    auto lib = scenario_library();
    const ScenarioBundle& s = find_scenario(lib, "S-1A");
    std::vector<CohortConfig> c1{{"vihcs", 500, {}, {}, std::nullopt}};
    std::vector<CohortConfig> c2{{"atpg3", 700, {}, {}, std::nullopt}};
    MultiCohortDataset d1 = simulate(s.model, c1, 11);
    MultiCohortDataset d2 = simulate(s.model, c2, 12);
    MultiCohortDataset pooled = pool({d1, d2});
    CHECK(pooled.n_rows() == 1200);
    REQUIRE(pooled.cohort_ids == std::vector<std::string>{"vihcs", "atpg3"});
    CHECK(to_csv(pooled).substr(0, 16) == "cohort,selected,");

    // per-cohort filtering recovers the originals (round-trip)
    MultiCohortDataset back1 = pooled.filter_rows(pooled.rows_of_cohort(0));
    back1.cohort_ids = {"vihcs"};
    for (Eigen::Index r = 0; r < back1.n_rows(); ++r) back1.cohort(r) = 0;
    CHECK(back1.equals(d1));
    MultiCohortDataset back2 = pooled.filter_rows(pooled.rows_of_cohort(1));
    back2.cohort_ids = {"atpg3"};
    for (Eigen::Index r = 0; r < back2.n_rows(); ++r) back2.cohort(r) = 0;
    CHECK(back2.equals(d2));
}

TEST_CASE("pool coarsens codings through a merge map and rejects unmapped levels")
{
    MultiCohortDataset a;
    a.columns = {{"education", {"none", "partial", "complete"}}};
    a.values.resize(3, 1);
    a.values << 0, 1, 2;
    a.cohort.resize(3);
    a.cohort.setZero();
    a.selected.resize(3);
    a.selected.setConstant(true);
    a.cohort_ids = {"c1"};

    MultiCohortDataset b;
    b.columns = {{"education", {"never", "ever"}}};
    b.values.resize(2, 1);
    b.values << 0, 1;
    b.cohort.resize(2);
    b.cohort.setZero();
    b.selected.resize(2);
    b.selected.setConstant(true);
    b.cohort_ids = {"c2"};

    CHECK_THROWS_AS(pool({a, b}), DomainError); // disjoint codings, no merge map

    Coarsen merge{"education",
                  {{"none", "never"}, {"partial", "never"}, {"complete", "ever"},
                   {"never", "never"}, {"ever", "ever"}}};
    MultiCohortDataset pooled = pool({a, b}, {merge});
    REQUIRE(pooled.columns[0].levels == std::vector<std::string>{"never", "ever"});
    CHECK(pooled.values(0, 0) == 0);
    CHECK(pooled.values(1, 0) == 0);
    CHECK(pooled.values(2, 0) == 1);
    CHECK(pooled.values(3, 0) == 0);
    CHECK(pooled.values(4, 0) == 1);

    Coarsen incomplete{"education", {{"none", "never"}, {"partial", "never"}}};
    CHECK_THROWS_AS(pool({a, b}, {incomplete}), DomainError);
}

TEST_CASE("restrict_to_selected keeps exactly the selected rows in order")
{
    auto lib = scenario_library();
    const ScenarioBundle& s = find_scenario(lib, "S-2A");
    std::vector<CohortConfig> cohorts = s.cohorts;
    for (auto& c : cohorts) c.n = 5000;
    MultiCohortDataset d = simulate(s.model, cohorts, 77);
    MultiCohortDataset r = restrict_to_selected(d);
    Eigen::Index count = 0;
    for (Eigen::Index i = 0; i < d.n_rows(); ++i) count += d.selected(i);
    CHECK(r.n_rows() == count);
    CHECK(r.n_rows() < d.n_rows());
    for (Eigen::Index i = 0; i < r.n_rows(); ++i) CHECK(r.selected(i));

    // no selection node: identity
    const ScenarioBundle& s1 = find_scenario(lib, "S-1A");
    std::vector<CohortConfig> c1 = s1.cohorts;
    for (auto& c : c1) c.n = 500;
    MultiCohortDataset full = simulate(s1.model, c1, 78);
    CHECK(restrict_to_selected(full).equals(full));
}

TEST_CASE("restriction to participants manufactures an X-A association")
{
    auto lib = scenario_library();
    const ScenarioBundle& s = find_scenario(lib, "S-2A");
    std::vector<CohortConfig> cohorts{{"c1", 200000, {}, {}, std::string("P")}};
    MultiCohortDataset d = simulate(s.model, cohorts, 4242);

    auto chi2_xa = [&](const MultiCohortDataset& data) {
        int cx = data.require_col("X"), ca = data.require_col("A");
        double cell[2][2] = {{0, 0}, {0, 0}};
        for (Eigen::Index r = 0; r < data.n_rows(); ++r)
            cell[data.values(r, cx)][data.values(r, ca)] += 1.0;
        double n = data.n_rows();
        double chi2 = 0;
        for (int i = 0; i < 2; ++i) {
            for (int j = 0; j < 2; ++j) {
                double expect = (cell[i][0] + cell[i][1]) * (cell[0][j] + cell[1][j]) / n;
                chi2 += (cell[i][j] - expect) * (cell[i][j] - expect) / expect;
            }
        }
        return chi2;
    };
    CHECK(chi2_xa(d) < 20.0);                          // independent in the full data
    CHECK(chi2_xa(restrict_to_selected(d)) > 40.0);    // collider conditioning opens X-A
}

TEST_CASE("missingness masks values per mechanism")
{
    auto lib = scenario_library();
    const ScenarioBundle& s = find_scenario(lib, "S-1A");
    CohortConfig cfg{"c1", 40000, {}, {}, std::nullopt};
    cfg.missingness["C"] = {Missingness::Kind::MCAR, 0.2, 0.0, {}};
    Missingness mar;
    mar.kind = Missingness::Kind::MAR;
    mar.intercept = -2.0;
    mar.predictors = {{"X", 1.5}};
    cfg.missingness["Y"] = mar;
    MultiCohortDataset d = simulate(s.model, {cfg}, 5);

    int cc = d.require_col("C"), cy = d.require_col("Y"), cx = d.require_col("X");
    double miss_c = 0;
    double miss_y_x1 = 0, n_x1 = 0, miss_y_x0 = 0, n_x0 = 0;
    for (Eigen::Index r = 0; r < d.n_rows(); ++r) {
        miss_c += d.values(r, cc) == kMissing;
        if (d.values(r, cx) == 1) {
            ++n_x1;
            miss_y_x1 += d.values(r, cy) == kMissing;
        } else {
            ++n_x0;
            miss_y_x0 += d.values(r, cy) == kMissing;
        }
    }
    CHECK(std::abs(miss_c / static_cast<double>(d.n_rows()) - 0.2) < 0.01);
    CHECK(std::abs(miss_y_x1 / n_x1 - expit(-0.5)) < 0.02);
    CHECK(std::abs(miss_y_x0 / n_x0 - expit(-2.0)) < 0.02);
}

TEST_CASE("simulate rejects bad overrides and missingness configs")
{
    auto lib = scenario_library();
    const ScenarioBundle& s = find_scenario(lib, "S-1A");

    CohortConfig bad{"c1", 100, {}, {}, std::nullopt};
    bad.overrides["nope"] = MechanismOverride{};
    bad.overrides["nope"].intercept = 1.0;
    CHECK_THROWS_AS(simulate(s.model, {bad}, 1), DomainError);

    CohortConfig mar_on_missing{"c1", 100, {}, {}, std::nullopt};
    Missingness m1;
    m1.kind = Missingness::Kind::MAR;
    m1.predictors = {{"C", 1.0}};
    mar_on_missing.missingness["Y"] = m1;
    mar_on_missing.missingness["C"] = {Missingness::Kind::MCAR, 0.5, 0.0, {}};
    CHECK_THROWS_AS(simulate(s.model, {mar_on_missing}, 1), DomainError);

    CohortConfig zero{"c1", 0, {}, {}, std::nullopt};
    CHECK_THROWS_AS(simulate(s.model, {zero}, 1), DomainError);
}

TEST_CASE("model JSON round-trips the benchmark scenarios")
{
    for (const ScenarioBundle& s : scenario_library()) {
        StructuralModel back = model_from_json_string(model_to_json_string(s.model));
        CHECK(back.exposure == s.model.exposure);
        CHECK(back.outcome == s.model.outcome);
        CHECK(back.root_priors == s.model.root_priors);
        REQUIRE(back.mechanisms.size() == s.model.mechanisms.size());
        for (const auto& [node, m] : s.model.mechanisms) {
            const Mechanism& bm = back.mechanisms.at(node);
            CHECK(bm.family == m.family);
            CHECK(bm.coefficients == m.coefficients);
            CHECK(bm.table == m.table);
            CHECK(bm.sensitivity == m.sensitivity);
        }
        TrueEffect e = true_effect(back, {EstimandScope::Marginal, {}}, EffectMeasure::OddsRatio);
        CHECK(std::log(e.value) == doctest::Approx(s.true_marginal_log_or).epsilon(1e-9));

        std::vector<CohortConfig> cohorts = cohorts_from_json(cohorts_to_json(s.cohorts));
        REQUIRE(cohorts.size() == s.cohorts.size());
        for (std::size_t i = 0; i < cohorts.size(); ++i) {
            CHECK(cohorts[i].id == s.cohorts[i].id);
            CHECK(cohorts[i].n == s.cohorts[i].n);
            CHECK(cohorts[i].selection_node == s.cohorts[i].selection_node);
        }
    }
}

TEST_CASE("state-space guard rejects oversized models")
{
    StructuralModel m;
    for (int i = 0; i < 22; ++i) {
        std::string id = "n" + std::to_string(i);
        m.dag.nodes.push_back({id, NodeKind::Auxiliary, true, ""});
        m.root_priors[id] = 0.5;
    }
    m.dag.nodes.push_back({"X", NodeKind::Exposure, true, ""});
    m.dag.nodes.push_back({"Y", NodeKind::Outcome, true, ""});
    m.root_priors["X"] = 0.5;
    Mechanism my;
    my.node = "Y";
    my.coefficients = {{"X", 0.5}};
    my.intercept = 0.0;
    m.mechanisms["Y"] = my;
    m.dag.edges = {{"X", "Y"}};
    m.exposure = "X";
    m.outcome = "Y";
    CHECK_THROWS_AS(true_effect(m, {EstimandScope::Marginal, {}}, EffectMeasure::OddsRatio), DomainError);
}
