#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <fstream>

#include "cohortforge/dag.hpp"
#include "oracles.hpp"

using namespace cohortforge;

namespace {

CausalDag fixture(const std::string& name)
{
    return load_dag(std::string(COHORTFORGE_FIXTURE_DIR) + "/" + name);
}

const BiasPath* find_path(const std::vector<BiasPath>& paths, const std::vector<std::string>& seq)
{
    for (const BiasPath& p : paths)
        if (p.path == seq) return &p;
    return nullptr;
}

} // namespace

TEST_CASE("validate_dag accepts the DAG-1A fixture")
{
    ValidationReport r = validate_dag(fixture("dag_1a.json"));
    CHECK(r.ok());
}

TEST_CASE("validate_dag reports the smallest cycle with a witness")
{
    CausalDag dag;
    dag.nodes = {{"X", NodeKind::Exposure, true, ""}, {"Y", NodeKind::Outcome, true, ""}};
    dag.edges = {{"X", "Y"}, {"Y", "X"}};
    ValidationReport r = validate_dag(dag);
    REQUIRE_FALSE(r.ok());
    CHECK(r.violations[0].code == "cycle");
    CHECK(r.violations[0].detail.find("X") != std::string::npos);
    CHECK(r.violations[0].detail.find("Y") != std::string::npos);
}

TEST_CASE("validate_dag flags conditioning on an unobservable node")
{
    CausalDag dag = fixture("dag_1a.json");
    dag.conditioned = {"U"};
    ValidationReport r = validate_dag(dag);
    REQUIRE_FALSE(r.ok());
    CHECK(r.violations[0].code == "conditioning-on-unobservable");
}

TEST_CASE("validate_dag reports duplicates and dangling edges")
{
    CausalDag dag;
    dag.nodes = {{"X", NodeKind::Exposure, true, ""}, {"X", NodeKind::Outcome, true, ""}};
    dag.edges = {{"X", "Z"}};
    ValidationReport r = validate_dag(dag);
    bool dup = false, dangling = false;
    for (const auto& v : r.violations) {
        dup = dup || v.code == "duplicate-id";
        dangling = dangling || v.code == "dangling-edge";
    }
    CHECK(dup);
    CHECK(dangling);
}

TEST_CASE("d_separated handles the fork and collider rules")
{
    CausalDag fork;
    fork.nodes = {{"X", NodeKind::Exposure, true, ""},
                  {"Y", NodeKind::Outcome, true, ""},
                  {"C", NodeKind::MeasuredConfounder, true, ""}};
    fork.edges = {{"C", "X"}, {"C", "Y"}};
    CHECK(d_separated(fork, {"X"}, {"Y"}, {"C"}));
    CHECK_FALSE(d_separated(fork, {"X"}, {"Y"}, {}));

    CausalDag collider;
    collider.nodes = {{"X", NodeKind::Exposure, true, ""},
                      {"Y", NodeKind::Outcome, true, ""},
                      {"P", NodeKind::Selection, true, ""},
                      {"A", NodeKind::Auxiliary, true, ""}};
    collider.edges = {{"X", "P"}, {"A", "P"}, {"A", "Y"}};
    CHECK(d_separated(collider, {"X"}, {"Y"}, {}));
    CHECK_FALSE(d_separated(collider, {"X"}, {"Y"}, {"P"}));
}

TEST_CASE("d_separated opens a collider through a conditioned descendant")
{
    CausalDag dag;
    dag.nodes = {{"X", NodeKind::Exposure, true, ""},
                 {"Y", NodeKind::Outcome, true, ""},
                 {"P", NodeKind::Selection, true, ""},
                 {"D", NodeKind::Auxiliary, true, ""},
                 {"A", NodeKind::Auxiliary, true, ""}};
    dag.edges = {{"X", "P"}, {"A", "P"}, {"A", "Y"}, {"P", "D"}};
    CHECK(d_separated(dag, {"X"}, {"Y"}, {}));
    CHECK_FALSE(d_separated(dag, {"X"}, {"Y"}, {"D"}));
}

TEST_CASE("d_separated rejects unknown ids and overlapping sets")
{
    CausalDag dag = fixture("dag_1a.json");
    CHECK_THROWS_AS(d_separated(dag, {"nope"}, {"Y"}, {}), DomainError);
    CHECK_THROWS_AS(d_separated(dag, {"X"}, {"X"}, {}), DomainError);
}

TEST_CASE("d_separated agrees with brute-force path enumeration on random DAGs")
{
    Rng rng(20240521);
    int queries = 0;
    for (int rep = 0; rep < 200; ++rep) {
        CausalDag dag = oracles::random_dag(rng, 8, 0.3);
        const std::size_t k = dag.nodes.size();
        for (std::size_t i = 0; i < k; ++i) {
            for (std::size_t j = i + 1; j < k; ++j) {
                std::vector<std::string> rest;
                for (std::size_t l = 0; l < k; ++l)
                    if (l != i && l != j) rest.push_back(dag.nodes[l].id);
                for (std::size_t mask = 0; mask < (1u << rest.size()); ++mask) {
                    std::set<std::string> given;
                    for (std::size_t b = 0; b < rest.size(); ++b)
                        if (mask & (1u << b)) given.insert(rest[b]);
                    bool impl = d_separated(dag, {dag.nodes[i].id}, {dag.nodes[j].id}, given);
                    bool want = oracles::oracle_d_separated(dag, dag.nodes[i].id, dag.nodes[j].id, given);
                    ++queries;
                    REQUIRE_MESSAGE(impl == want, "node pair (", dag.nodes[i].id, ",", dag.nodes[j].id,
                                    ") mask ", mask);
                }
            }
        }
    }
    CHECK(queries > 10000);
}

TEST_CASE("enumerate_paths lists the DAG-1A paths with status and class")
{
    CausalDag dag = fixture("dag_1a.json");
    std::vector<BiasPath> paths = enumerate_paths(dag, PathMode::TrueExposure);
    REQUIRE(paths.size() == 3);

    const BiasPath* causal = find_path(paths, {"X", "Y"});
    REQUIRE(causal);
    CHECK(causal->classification == BiasClass::Causal);
    CHECK(causal->status == PathStatus::Open);

    const BiasPath* via_c = find_path(paths, {"X", "C", "Y"});
    REQUIRE(via_c);
    CHECK(via_c->classification == BiasClass::Confounding);
    CHECK(via_c->status == PathStatus::Open);

    const BiasPath* via_u = find_path(paths, {"X", "U", "Y"});
    REQUIRE(via_u);
    CHECK(via_u->classification == BiasClass::Confounding);
    CHECK(via_u->status == PathStatus::Open);

    dag.conditioned = {"C"};
    paths = enumerate_paths(dag, PathMode::TrueExposure);
    CHECK(find_path(paths, {"X", "C", "Y"})->status == PathStatus::Blocked);
    CHECK(find_path(paths, {"X", "U", "Y"})->status == PathStatus::Open);
}

TEST_CASE("enumerate_paths marks the conditioned collider as opener on DAG-2A")
{
    CausalDag dag = fixture("dag_2a.json");
    std::vector<BiasPath> paths = enumerate_paths(dag, PathMode::TrueExposure);
    const BiasPath* sel = find_path(paths, {"X", "P", "A", "Y"});
    REQUIRE(sel);
    CHECK(sel->status == PathStatus::Open);
    CHECK(sel->openers == std::set<std::string>{"P"});
    CHECK(sel->classification == BiasClass::Selection);
}

TEST_CASE("enumerate_paths output is exactly the set of simple paths (oracle)")
{
    Rng rng(7261);
    for (int rep = 0; rep < 100; ++rep) {
        CausalDag dag = oracles::random_dag(rng, 8, 0.3);
        dag.nodes.front().kind = NodeKind::Exposure;
        dag.nodes.back().kind = NodeKind::Outcome;
        auto expected = oracles::all_simple_paths(dag, dag.nodes.front().id, dag.nodes.back().id);
        std::sort(expected.begin(), expected.end());
        std::vector<BiasPath> got = enumerate_paths(dag, PathMode::TrueExposure);
        REQUIRE(got.size() == expected.size());
        for (std::size_t i = 0; i < got.size(); ++i) CHECK(got[i].path == expected[i]);
    }
}

TEST_CASE("classify_path follows the precedence rules")
{
    CausalDag dag = fixture("dag_2a.json");
    CHECK(classify_path({"X", "P", "A", "Y"}, dag) == BiasClass::Selection);
    dag.conditioned.clear();
    // inactive collider still reads as a selection-pattern path
    CHECK(classify_path({"X", "P", "A", "Y"}, dag) == BiasClass::Selection);

    CausalDag onea = fixture("dag_1a.json");
    CHECK(classify_path({"X", "C", "Y"}, onea) == BiasClass::Confounding);
    CHECK(classify_path({"X", "Y"}, onea) == BiasClass::Causal);

    CausalDag threea = fixture("dag_3a.json");
    CHECK(classify_path({"X*", "X", "Y"}, threea, PathMode::ProxyExposure) == BiasClass::Measurement);

    // conditioned collider on a backdoor path outranks the backdoor reading
    CausalDag mixed;
    mixed.nodes = {{"X", NodeKind::Exposure, true, ""},  {"Y", NodeKind::Outcome, true, ""},
                   {"C", NodeKind::MeasuredConfounder, true, ""}, {"M", NodeKind::Auxiliary, true, ""},
                   {"A", NodeKind::Auxiliary, true, ""}};
    mixed.edges = {{"C", "X"}, {"C", "M"}, {"A", "M"}, {"A", "Y"}};
    mixed.conditioned = {"M"};
    CHECK(classify_path({"X", "C", "M", "A", "Y"}, mixed) == BiasClass::Selection);
    mixed.conditioned.clear();
    CHECK(classify_path({"X", "C", "M", "A", "Y"}, mixed) == BiasClass::Confounding);
}

TEST_CASE("classify_path rejects non-adjacent sequences")
{
    CausalDag dag = fixture("dag_1a.json");
    CHECK_THROWS_AS(classify_path({"X", "U", "C"}, dag), DomainError); // U and C not adjacent
    CHECK_THROWS_AS(classify_path({"U", "C"}, dag), DomainError);
}

TEST_CASE("backdoor_valid on the figure fixtures")
{
    CausalDag onea = fixture("dag_1a.json");
    CHECK_FALSE(backdoor_valid(onea, {"C"})); // X <- U -> Y stays open

    CausalDag no_u = onea;
    no_u.nodes.erase(std::remove_if(no_u.nodes.begin(), no_u.nodes.end(),
                                    [](const Node& n) { return n.id == "U"; }),
                     no_u.nodes.end());
    no_u.edges.erase(std::remove_if(no_u.edges.begin(), no_u.edges.end(),
                                    [](const auto& e) { return e.first == "U" || e.second == "U"; }),
                     no_u.edges.end());
    CHECK(backdoor_valid(no_u, {"C"}));

    CausalDag oneb = fixture("dag_1b.json");
    CausalDag oneb_no_u = oneb;
    oneb_no_u.nodes.erase(std::remove_if(oneb_no_u.nodes.begin(), oneb_no_u.nodes.end(),
                                         [](const Node& n) { return n.id == "U"; }),
                          oneb_no_u.nodes.end());
    oneb_no_u.edges.erase(std::remove_if(oneb_no_u.edges.begin(), oneb_no_u.edges.end(),
                                         [](const auto& e) { return e.first == "U" || e.second == "U"; }),
                          oneb_no_u.edges.end());
    CHECK_FALSE(backdoor_valid(oneb_no_u, {"C"}));
    CHECK(backdoor_valid(oneb_no_u, {"C", "S"}));
}

TEST_CASE("backdoor_valid rejects exposure descendants by name")
{
    CausalDag dag = fixture("dag_2a.json");
    try {
        backdoor_valid(dag, {"P"});
        FAIL("expected DomainError");
    } catch (const DomainError& e) {
        CHECK(std::string(e.what()).find("P") != std::string::npos);
    }
}

TEST_CASE("expand_with_cohort_indicator reproduces DAG-1B from DAG-1A")
{
    CausalDag onea = fixture("dag_1a.json");
    CausalDag expanded = expand_with_cohort_indicator(onea, {"X", "Y"});
    CausalDag oneb = fixture("dag_1b.json");

    REQUIRE(expanded.find("S"));
    CHECK(expanded.at("S").kind == NodeKind::CohortIndicator);
    auto sorted_edges = [](CausalDag d) {
        std::sort(d.edges.begin(), d.edges.end());
        return d.edges;
    };
    CHECK(sorted_edges(expanded) == sorted_edges(oneb));

    CHECK_THROWS_AS(expand_with_cohort_indicator(expanded, {"X"}), DomainError);
    CHECK_THROWS_AS(expand_with_cohort_indicator(onea, {}), DomainError);
}

TEST_CASE("expand_with_cohort_indicator preserves pre-existing path status")
{
    Rng rng(991);
    for (int rep = 0; rep < 60; ++rep) {
        CausalDag dag = oracles::random_dag(rng, 7, 0.35);
        dag.nodes.front().kind = NodeKind::Exposure;
        dag.nodes.back().kind = NodeKind::Outcome;
        if (dag.nodes.size() > 3 && rng.bernoulli(0.5)) dag.conditioned.insert(dag.nodes[1].id);

        std::set<std::string> targets{dag.nodes.front().id, dag.nodes.back().id};
        CausalDag expanded = expand_with_cohort_indicator(dag, targets);

        std::map<std::vector<std::string>, PathStatus> before;
        for (const BiasPath& p : enumerate_paths(dag, PathMode::TrueExposure)) before[p.path] = p.status;
        int matched = 0;
        for (const BiasPath& p : enumerate_paths(expanded, PathMode::TrueExposure)) {
            auto it = before.find(p.path);
            if (it != before.end()) {
                CHECK(it->second == p.status);
                ++matched;
            }
        }
        CHECK(matched == static_cast<int>(before.size()));
    }
}

TEST_CASE("bias_audit_report on DAG-1B groups paths and searches adjustment sets")
{
    CausalDag oneb = fixture("dag_1b.json");
    BiasAuditReport report = bias_audit_report(oneb);

    REQUIRE(report.groups.size() == 1);
    const BiasAuditGroup& g = report.groups[0];
    CHECK(g.classification == BiasClass::Confounding);
    REQUIRE(g.within.size() == 2);
    CHECK(g.within[0].path == std::vector<std::string>{"X", "C", "Y"});
    CHECK(g.within[1].path == std::vector<std::string>{"X", "U", "Y"});
    REQUIRE(g.across.size() == 1);
    CHECK(g.across[0].path == std::vector<std::string>{"X", "S", "Y"});
    CHECK(report.minimal_adjustment_sets.empty()); // U unmeasured, nothing restores validity

    CausalDag no_u = oneb;
    no_u.nodes.erase(std::remove_if(no_u.nodes.begin(), no_u.nodes.end(),
                                    [](const Node& n) { return n.id == "U"; }),
                     no_u.nodes.end());
    no_u.edges.erase(std::remove_if(no_u.edges.begin(), no_u.edges.end(),
                                    [](const auto& e) { return e.first == "U" || e.second == "U"; }),
                     no_u.edges.end());
    BiasAuditReport r2 = bias_audit_report(no_u);
    REQUIRE(r2.minimal_adjustment_sets.size() == 1);
    CHECK(r2.minimal_adjustment_sets[0] == std::set<std::string>{"C", "S"});
}

TEST_CASE("bias_audit_report on DAG-2B separates within and across selection paths")
{
    BiasAuditReport report = bias_audit_report(fixture("dag_2b.json"));
    REQUIRE(report.groups.size() == 1);
    const BiasAuditGroup& g = report.groups[0];
    CHECK(g.classification == BiasClass::Selection);
    REQUIRE(g.within.size() == 1);
    CHECK(g.within[0].path == std::vector<std::string>{"X", "P", "A", "Y"});
    REQUIRE(g.across.size() == 1);
    CHECK(g.across[0].path == std::vector<std::string>{"X", "P", "S", "Y"});
}

TEST_CASE("bias_audit_report is empty for a bias-free DAG")
{
    CausalDag dag;
    dag.nodes = {{"X", NodeKind::Exposure, true, ""}, {"Y", NodeKind::Outcome, true, ""}};
    dag.edges = {{"X", "Y"}};
    BiasAuditReport report = bias_audit_report(dag);
    CHECK(report.groups.empty());
    CHECK_FALSE(report.has_open_bias());
    CHECK(report.open_causal.size() == 1);
}

TEST_CASE("bias_audit_report uses proxy mode on the measurement fixtures")
{
    BiasAuditReport r3a = bias_audit_report(fixture("dag_3a.json"));
    CHECK(r3a.mode == PathMode::ProxyExposure);
    REQUIRE(r3a.groups.size() == 1);
    CHECK(r3a.groups[0].classification == BiasClass::Measurement);
    REQUIRE(r3a.groups[0].within.size() == 1);
    CHECK(r3a.groups[0].within[0].path == std::vector<std::string>{"X*", "X", "Y"});

    BiasAuditReport r3b = bias_audit_report(fixture("dag_3b.json"));
    CHECK(r3b.mode == PathMode::ProxyExposure);
    REQUIRE(r3b.groups.size() == 1);
    REQUIRE(r3b.groups[0].within.size() == 1);
    CHECK(r3b.groups[0].within[0].path == std::vector<std::string>{"X**", "X*", "X", "Y"});
    CHECK(r3b.groups[0].across.empty()); // the S path holds an inactive collider at X*
}

TEST_CASE("backdoor_valid(Z) implies every confounding path is blocked under Z")
{
    Rng rng(440);
    int checked = 0;
    for (int rep = 0; rep < 150; ++rep) {
        CausalDag dag = oracles::random_dag(rng, 7, 0.35);
        // a mid-index exposure so backdoor paths can exist at all
        const std::string x_id = dag.nodes[dag.nodes.size() / 2].id;
        dag.at(x_id); // sanity
        for (Node& n : dag.nodes)
            if (n.id == x_id) n.kind = NodeKind::Exposure;
        dag.nodes.back().kind = NodeKind::Outcome;
        if (dag.nodes.back().id == x_id) continue;
        std::set<std::string> desc = dag.descendants(x_id);
        std::vector<std::string> candidates;
        for (const Node& n : dag.nodes)
            if (n.id != x_id && n.id != dag.nodes.back().id && !desc.count(n.id))
                candidates.push_back(n.id);
        for (std::size_t mask = 0; mask < (1u << candidates.size()); ++mask) {
            std::set<std::string> z;
            for (std::size_t b = 0; b < candidates.size(); ++b)
                if (mask & (1u << b)) z.insert(candidates[b]);
            if (!backdoor_valid(dag, z)) continue;
            CausalDag conditioned = dag;
            conditioned.conditioned = z;
            for (const BiasPath& p : enumerate_paths(conditioned, PathMode::TrueExposure)) {
                if (p.classification == BiasClass::Confounding) {
                    CHECK(p.status == PathStatus::Blocked);
                    ++checked;
                }
            }
        }
    }
    CHECK(checked > 50);
}

TEST_CASE("dag JSON rejects malformed input with a line anchor")
{
    try {
        dag_from_json_string("{\n  \"nodes\": [\n    {\"id\": }\n  ]\n}");
        FAIL("expected DomainError");
    } catch (const DomainError& e) {
        CHECK(std::string(e.what()).find("line 3") != std::string::npos);
    }
    CHECK_THROWS_AS(dag_from_json_string("{\"nodes\": [{\"id\": \"X\", \"knid\": \"Exposure\"}]}"),
                    DomainError);
}

TEST_CASE("dag JSON round-trips the fixtures")
{
    for (const char* name : {"dag_1a.json", "dag_1b.json", "dag_2a.json", "dag_2b.json",
                             "dag_3a.json", "dag_3b.json"}) {
        CausalDag dag = fixture(name);
        CausalDag back = dag_from_json_string(dag_to_json_string(dag));
        CHECK(back.nodes.size() == dag.nodes.size());
        CHECK(back.edges == dag.edges);
        CHECK(back.conditioned == dag.conditioned);
        for (const Node& n : dag.nodes) {
            REQUIRE(back.find(n.id));
            CHECK(back.at(n.id).kind == n.kind);
            CHECK(back.at(n.id).observed == n.observed);
        }
    }
}

TEST_CASE("audit rendering is deterministic")
{
    CausalDag dag = fixture("dag_1b.json");
    BiasAuditReport report = bias_audit_report(dag);
    CHECK(render_audit_json(report, dag) == render_audit_json(report, dag));
    CHECK(render_audit_text(report, dag) == render_audit_text(report, dag));
    CHECK(render_audit_text(report, dag).find("Across") != std::string::npos);
}
