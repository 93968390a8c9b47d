#ifndef COHORTFORGE_DAG_HPP
#define COHORTFORGE_DAG_HPP

#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "cohortforge/common.hpp"

namespace cohortforge {

enum class NodeKind {
    Exposure,
    Outcome,
    MeasuredConfounder,
    UnmeasuredConfounder,
    Selection,
    MeasuredProxy,
    CohortIndicator,
    Auxiliary
};

std::string to_string(NodeKind kind);
NodeKind node_kind_from_string(const std::string& s);

struct Node {
    std::string id;
    NodeKind kind = NodeKind::Auxiliary;
    bool observed = true;
    std::string label;
};

// Typed causal DAG under audit. `conditioned` is the set of node ids the
// analysis conditions on (restriction to participants, covariate adjustment,
// complete-case filtering), which is what opens or blocks paths.
struct CausalDag {
    std::vector<Node> nodes;
    std::vector<std::pair<std::string, std::string>> edges; // (parent, child)
    std::set<std::string> conditioned;

    const Node* find(const std::string& id) const;
    const Node& at(const std::string& id) const; // throws DomainError when absent
    bool has_edge(const std::string& parent, const std::string& child) const;

    std::vector<std::string> parents(const std::string& id) const;
    std::vector<std::string> children(const std::string& id) const;
    std::set<std::string> descendants(const std::string& id) const; // excludes id itself
    std::set<std::string> ancestors(const std::string& id) const;   // excludes id itself

    // empty when the graph has a cycle
    std::vector<std::string> topological_order() const;

    std::optional<std::string> exposure() const; // id of the unique Exposure, if any
    std::optional<std::string> outcome() const;
};

enum class PathStatus { Open, Blocked };
enum class BiasClass { Confounding, Selection, Measurement, Causal };

std::string to_string(PathStatus s);
std::string to_string(BiasClass c);

struct BiasPath {
    std::vector<std::string> path; // node ids, analysis exposure first, analysis outcome last
    PathStatus status = PathStatus::Blocked;
    std::set<std::string> openers; // colliders activated by conditioning
    BiasClass classification = BiasClass::Causal;

    std::string arrow_string(const CausalDag& dag) const; // e.g. "X <- C -> Y"
};

enum class PathMode { TrueExposure, ProxyExposure };

ValidationReport validate_dag(const CausalDag& dag);

// Standard d-separation: every path between `a` and `b` is blocked given
// `given` (chain/fork blocked when the middle node is conditioned on;
// collider blocked unless it or one of its descendants is conditioned on).
bool d_separated(const CausalDag& dag, const std::set<std::string>& a,
                 const std::set<std::string>& b, const std::set<std::string>& given);

// All simple paths between the analysis exposure and outcome. Under
// ProxyExposure mode the endpoints are the most-derived MeasuredProxy
// descendants of the exposure (required) and outcome (used when present).
std::vector<BiasPath> enumerate_paths(const CausalDag& dag, PathMode mode);

BiasClass classify_path(const std::vector<std::string>& path, const CausalDag& dag,
                        PathMode mode = PathMode::TrueExposure);

// True iff `adjustment` blocks every backdoor path from exposure to outcome,
// checked by d-separation on the graph with the exposure's outgoing edges
// removed. Throws when the adjustment set contains an exposure descendant
// or an unobserved node.
bool backdoor_valid(const CausalDag& dag, const std::set<std::string>& adjustment);

// New DAG with a CohortIndicator source node "S" and edges S -> t for each
// target. Throws when a CohortIndicator already exists or targets are empty.
CausalDag expand_with_cohort_indicator(const CausalDag& dag, const std::set<std::string>& targets);

struct BiasAuditGroup {
    BiasClass classification = BiasClass::Confounding;
    std::vector<BiasPath> within; // no CohortIndicator on the path
    std::vector<BiasPath> across; // CohortIndicator on the path
};

struct BiasAuditReport {
    PathMode mode = PathMode::TrueExposure;
    std::vector<BiasPath> open_causal;
    std::vector<BiasAuditGroup> groups; // ordered Confounding, Selection, Measurement
    // Inclusion-minimal observed adjustment sets restoring backdoor validity,
    // searched exhaustively up to max_adjustment_size. Empty when none exist.
    std::vector<std::set<std::string>> minimal_adjustment_sets;
    int max_adjustment_size = 6;

    bool has_open_bias() const;
};

BiasAuditReport bias_audit_report(const CausalDag& dag, int max_adjustment_size = 6);

// External interface: DAG spec files and report rendering.
CausalDag dag_from_json_string(const std::string& text);
CausalDag load_dag(const std::string& path);
std::string dag_to_json_string(const CausalDag& dag);

std::string render_audit_json(const BiasAuditReport& report, const CausalDag& dag);
std::string render_audit_text(const BiasAuditReport& report, const CausalDag& dag);

} // namespace cohortforge

#endif
