#include "cohortforge/dag.hpp"

#include <algorithm>
#include <deque>
#include <fstream>
#include <functional>
#include <sstream>

#include <nlohmann/json.hpp>

namespace cohortforge {

using json = nlohmann::ordered_json;

std::string to_string(NodeKind kind)
{
    switch (kind) {
        case NodeKind::Exposure: return "Exposure";
        case NodeKind::Outcome: return "Outcome";
        case NodeKind::MeasuredConfounder: return "MeasuredConfounder";
        case NodeKind::UnmeasuredConfounder: return "UnmeasuredConfounder";
        case NodeKind::Selection: return "Selection";
        case NodeKind::MeasuredProxy: return "MeasuredProxy";
        case NodeKind::CohortIndicator: return "CohortIndicator";
        case NodeKind::Auxiliary: return "Auxiliary";
    }
    return "Auxiliary";
}

NodeKind node_kind_from_string(const std::string& s)
{
    if (s == "Exposure") return NodeKind::Exposure;
    if (s == "Outcome") return NodeKind::Outcome;
    if (s == "MeasuredConfounder") return NodeKind::MeasuredConfounder;
    if (s == "UnmeasuredConfounder") return NodeKind::UnmeasuredConfounder;
    if (s == "Selection") return NodeKind::Selection;
    if (s == "MeasuredProxy") return NodeKind::MeasuredProxy;
    if (s == "CohortIndicator") return NodeKind::CohortIndicator;
    if (s == "Auxiliary") return NodeKind::Auxiliary;
    throw DomainError("unknown node kind '" + s + "'");
}

std::string to_string(PathStatus s)
{
    return s == PathStatus::Open ? "Open" : "Blocked";
}

std::string to_string(BiasClass c)
{
    switch (c) {
        case BiasClass::Confounding: return "Confounding";
        case BiasClass::Selection: return "Selection";
        case BiasClass::Measurement: return "Measurement";
        case BiasClass::Causal: return "Causal";
    }
    return "Causal";
}

const Node* CausalDag::find(const std::string& id) const
{
    for (const Node& n : nodes)
        if (n.id == id) return &n;
    return nullptr;
}

const Node& CausalDag::at(const std::string& id) const
{
    const Node* n = find(id);
    if (!n) throw DomainError("unknown node id '" + id + "'");
    return *n;
}

bool CausalDag::has_edge(const std::string& parent, const std::string& child) const
{
    for (const auto& e : edges)
        if (e.first == parent && e.second == child) return true;
    return false;
}

std::vector<std::string> CausalDag::parents(const std::string& id) const
{
    std::vector<std::string> out;
    for (const auto& e : edges)
        if (e.second == id) out.push_back(e.first);
    std::sort(out.begin(), out.end());
    return out;
}

std::vector<std::string> CausalDag::children(const std::string& id) const
{
    std::vector<std::string> out;
    for (const auto& e : edges)
        if (e.first == id) out.push_back(e.second);
    std::sort(out.begin(), out.end());
    return out;
}

std::set<std::string> CausalDag::descendants(const std::string& id) const
{
    std::set<std::string> seen;
    std::deque<std::string> queue{id};
    while (!queue.empty()) {
        std::string v = queue.front();
        queue.pop_front();
        for (const auto& e : edges) {
            if (e.first == v && !seen.count(e.second)) {
                seen.insert(e.second);
                queue.push_back(e.second);
            }
        }
    }
    seen.erase(id);
    return seen;
}

std::set<std::string> CausalDag::ancestors(const std::string& id) const
{
    std::set<std::string> seen;
    std::deque<std::string> queue{id};
    while (!queue.empty()) {
        std::string v = queue.front();
        queue.pop_front();
        for (const auto& e : edges) {
            if (e.second == v && !seen.count(e.first)) {
                seen.insert(e.first);
                queue.push_back(e.first);
            }
        }
    }
    seen.erase(id);
    return seen;
}

std::vector<std::string> CausalDag::topological_order() const
{
    std::map<std::string, int> indegree;
    for (const Node& n : nodes) indegree[n.id] = 0;
    for (const auto& e : edges) {
        if (indegree.count(e.second)) ++indegree[e.second];
    }
    // Kahn's algorithm with lexicographic tie-breaking for determinism
    std::set<std::string> ready;
    for (const auto& [id, deg] : indegree)
        if (deg == 0) ready.insert(id);
    std::vector<std::string> order;
    while (!ready.empty()) {
        std::string v = *ready.begin();
        ready.erase(ready.begin());
        order.push_back(v);
        for (const auto& e : edges) {
            if (e.first == v && indegree.count(e.second) && --indegree[e.second] == 0)
                ready.insert(e.second);
        }
    }
    if (order.size() != nodes.size()) return {};
    return order;
}

std::optional<std::string> CausalDag::exposure() const
{
    std::optional<std::string> found;
    for (const Node& n : nodes) {
        if (n.kind == NodeKind::Exposure) {
            if (found) return std::nullopt; // ambiguous
            found = n.id;
        }
    }
    return found;
}

std::optional<std::string> CausalDag::outcome() const
{
    std::optional<std::string> found;
    for (const Node& n : nodes) {
        if (n.kind == NodeKind::Outcome) {
            if (found) return std::nullopt;
            found = n.id;
        }
    }
    return found;
}

namespace {

// nodes of a cycle, found by walking back through nodes left out of the
// topological order
std::vector<std::string> cycle_witness(const CausalDag& dag)
{
    std::set<std::string> in_order;
    for (const std::string& id : dag.topological_order()) in_order.insert(id);
    std::set<std::string> leftover;
    for (const Node& n : dag.nodes)
        if (!in_order.count(n.id)) leftover.insert(n.id);
    if (leftover.empty()) return {};

    // follow edges within the leftover set until a node repeats
    std::string v = *leftover.begin();
    std::vector<std::string> trail{v};
    std::set<std::string> on_trail{v};
    while (true) {
        std::string next;
        for (const auto& e : dag.edges) {
            if (e.first == v && leftover.count(e.second)) {
                next = e.second;
                break;
            }
        }
        if (next.empty()) return std::vector<std::string>(leftover.begin(), leftover.end());
        if (on_trail.count(next)) {
            std::vector<std::string> cycle;
            bool in_cycle = false;
            for (const std::string& t : trail) {
                if (t == next) in_cycle = true;
                if (in_cycle) cycle.push_back(t);
            }
            return cycle;
        }
        trail.push_back(next);
        on_trail.insert(next);
        v = next;
    }
}

bool activated_collider(const CausalDag& dag, const std::string& v, const std::set<std::string>& given)
{
    if (given.count(v)) return true;
    std::set<std::string> desc = dag.descendants(v);
    for (const std::string& d : desc)
        if (given.count(d)) return true;
    return false;
}

} // namespace

ValidationReport validate_dag(const CausalDag& dag)
{
    ValidationReport report;
    std::set<std::string> ids;
    for (const Node& n : dag.nodes) {
        if (!ids.insert(n.id).second)
            report.violations.push_back({"duplicate-id", "node id '" + n.id + "' declared more than once"});
        if (n.kind == NodeKind::UnmeasuredConfounder && n.observed)
            report.violations.push_back({"unmeasured-observed",
                                         "node '" + n.id + "' is an UnmeasuredConfounder but flagged observed"});
    }
    for (const auto& e : dag.edges) {
        if (!ids.count(e.first))
            report.violations.push_back({"dangling-edge", "edge references unknown parent '" + e.first + "'"});
        if (!ids.count(e.second))
            report.violations.push_back({"dangling-edge", "edge references unknown child '" + e.second + "'"});
        if (e.first == e.second)
            report.violations.push_back({"self-loop", "node '" + e.first + "' has a self edge"});
    }
    if (report.violations.empty() && dag.topological_order().empty() && !dag.nodes.empty()) {
        std::vector<std::string> cycle = cycle_witness(dag);
        std::string detail = "cycle involving [";
        for (std::size_t i = 0; i < cycle.size(); ++i)
            detail += (i ? ", " : "") + cycle[i];
        detail += "]";
        report.violations.push_back({"cycle", detail});
    }
    for (const std::string& c : dag.conditioned) {
        if (!ids.count(c)) {
            report.violations.push_back({"unknown-conditioned", "conditioned set names unknown node '" + c + "'"});
            continue;
        }
        const Node& n = dag.at(c);
        if (!n.observed && n.kind != NodeKind::Selection)
            report.violations.push_back({"conditioning-on-unobservable",
                                         "conditioning on unobservable node '" + c + "'"});
    }
    int n_exposure = 0, n_outcome = 0;
    for (const Node& n : dag.nodes) {
        n_exposure += n.kind == NodeKind::Exposure;
        n_outcome += n.kind == NodeKind::Outcome;
    }
    if (n_exposure > 1)
        report.violations.push_back({"multiple-exposures", "analysis operations require exactly one Exposure"});
    if (n_outcome > 1)
        report.violations.push_back({"multiple-outcomes", "analysis operations require exactly one Outcome"});
    if (n_exposure == 0)
        report.warnings.push_back({"no-exposure", "no Exposure node; path analysis unavailable"});
    if (n_outcome == 0)
        report.warnings.push_back({"no-outcome", "no Outcome node; path analysis unavailable"});
    return report;
}

bool d_separated(const CausalDag& dag, const std::set<std::string>& a,
                 const std::set<std::string>& b, const std::set<std::string>& given)
{
    for (const auto& s : {a, b, given})
        for (const std::string& id : s) dag.at(id);
    for (const std::string& x : a)
        if (b.count(x) || given.count(x))
            throw DomainError("d_separated requires pairwise disjoint node sets");
    for (const std::string& x : b)
        if (given.count(x)) throw DomainError("d_separated requires pairwise disjoint node sets");

    // reachability over (node, direction) states; direction records whether
    // the trail entered the node along an incoming edge (down) or an
    // outgoing edge traversed backward (up)
    enum Dir { Up = 0, Down = 1 };
    std::set<std::pair<std::string, int>> visited;
    std::deque<std::pair<std::string, int>> queue;
    for (const std::string& x : a) queue.push_back({x, Up});

    while (!queue.empty()) {
        auto [v, dir] = queue.front();
        queue.pop_front();
        if (!visited.insert({v, dir}).second) continue;
        if (b.count(v)) return false;

        if (dir == Up) {
            // entered from a child: v acts as a chain or fork
            if (!given.count(v)) {
                for (const std::string& p : dag.parents(v)) queue.push_back({p, Up});
                for (const std::string& c : dag.children(v)) queue.push_back({c, Down});
            }
        } else {
            // entered from a parent: chain through children, collider toward parents
            if (!given.count(v)) {
                for (const std::string& c : dag.children(v)) queue.push_back({c, Down});
            }
            if (activated_collider(dag, v, given)) {
                for (const std::string& p : dag.parents(v)) queue.push_back({p, Up});
            }
        }
    }
    return true;
}

namespace {

// the most-derived MeasuredProxy descendant of `base`, e.g. the harmonized
// measure derived from a per-cohort measure
std::optional<std::string> analysis_proxy(const CausalDag& dag, const std::string& base)
{
    std::set<std::string> desc = dag.descendants(base);
    std::vector<std::string> candidates;
    for (const std::string& d : desc)
        if (dag.at(d).kind == NodeKind::MeasuredProxy) candidates.push_back(d);
    if (candidates.empty()) return std::nullopt;
    std::vector<std::string> leaves;
    for (const std::string& c : candidates) {
        std::set<std::string> cd = dag.descendants(c);
        bool has_proxy_descendant = false;
        for (const std::string& other : candidates)
            if (other != c && cd.count(other)) has_proxy_descendant = true;
        if (!has_proxy_descendant) leaves.push_back(c);
    }
    if (leaves.size() > 1)
        throw DomainError("ambiguous analysis proxy for '" + base + "': multiple most-derived MeasuredProxy nodes");
    return leaves.front();
}

struct PathEndpoints {
    std::string source;
    std::string target;
};

PathEndpoints path_endpoints(const CausalDag& dag, PathMode mode)
{
    std::optional<std::string> x = dag.exposure();
    std::optional<std::string> y = dag.outcome();
    if (!x || !y) throw DomainError("path analysis requires exactly one Exposure and one Outcome");
    if (mode == PathMode::TrueExposure) return {*x, *y};
    std::optional<std::string> px = analysis_proxy(dag, *x);
    if (!px) throw DomainError("ProxyExposure mode requires a MeasuredProxy of the exposure");
    std::optional<std::string> py = analysis_proxy(dag, *y);
    return {*px, py ? *py : *y};
}

std::vector<std::vector<std::string>> simple_paths(const CausalDag& dag, const std::string& src,
                                                   const std::string& dst)
{
    // undirected adjacency with sorted neighbors for deterministic output
    std::map<std::string, std::vector<std::string>> adj;
    for (const Node& n : dag.nodes) adj[n.id];
    for (const auto& e : dag.edges) {
        adj[e.first].push_back(e.second);
        adj[e.second].push_back(e.first);
    }
    for (auto& [id, nb] : adj) {
        std::sort(nb.begin(), nb.end());
        nb.erase(std::unique(nb.begin(), nb.end()), nb.end());
    }

    std::vector<std::vector<std::string>> out;
    std::vector<std::string> current{src};
    std::set<std::string> on_path{src};
    std::function<void(const std::string&)> dfs = [&](const std::string& v) {
        if (v == dst) {
            out.push_back(current);
            return;
        }
        for (const std::string& w : adj[v]) {
            if (on_path.count(w)) continue;
            current.push_back(w);
            on_path.insert(w);
            dfs(w);
            current.pop_back();
            on_path.erase(w);
        }
    };
    dfs(src);
    std::sort(out.begin(), out.end());
    return out;
}

std::set<std::string> path_colliders(const CausalDag& dag, const std::vector<std::string>& path)
{
    std::set<std::string> out;
    for (std::size_t i = 1; i + 1 < path.size(); ++i) {
        if (dag.has_edge(path[i - 1], path[i]) && dag.has_edge(path[i + 1], path[i]))
            out.insert(path[i]);
    }
    return out;
}

} // namespace

BiasClass classify_path(const std::vector<std::string>& path, const CausalDag& dag, PathMode mode)
{
    if (path.size() < 2) throw DomainError("path must have at least two nodes");
    for (std::size_t i = 0; i + 1 < path.size(); ++i) {
        if (!dag.has_edge(path[i], path[i + 1]) && !dag.has_edge(path[i + 1], path[i]))
            throw DomainError("'" + path[i] + "' and '" + path[i + 1] + "' are not adjacent in the DAG");
    }

    if (mode == PathMode::ProxyExposure) return BiasClass::Measurement;
    for (const std::string& id : path)
        if (dag.at(id).kind == NodeKind::MeasuredProxy) return BiasClass::Measurement;

    std::set<std::string> colliders = path_colliders(dag, path);
    bool any_opener = false;
    for (const std::string& c : colliders)
        if (activated_collider(dag, c, dag.conditioned)) any_opener = true;
    if (any_opener) return BiasClass::Selection;

    if (dag.has_edge(path[1], path[0])) return BiasClass::Confounding; // backdoor

    bool all_forward = true;
    for (std::size_t i = 0; i + 1 < path.size(); ++i)
        if (!dag.has_edge(path[i], path[i + 1])) all_forward = false;
    if (all_forward) return BiasClass::Causal;

    // front-door start with a direction change: the path holds an inactive
    // collider and can only ever open through conditioning
    return BiasClass::Selection;
}

std::vector<BiasPath> enumerate_paths(const CausalDag& dag, PathMode mode)
{
    PathEndpoints ends = path_endpoints(dag, mode);
    std::vector<BiasPath> out;
    for (const auto& path : simple_paths(dag, ends.source, ends.target)) {
        BiasPath bp;
        bp.path = path;
        std::set<std::string> colliders = path_colliders(dag, path);
        bool open = true;
        for (std::size_t i = 1; i + 1 < path.size(); ++i) {
            const std::string& v = path[i];
            if (colliders.count(v)) {
                if (activated_collider(dag, v, dag.conditioned))
                    bp.openers.insert(v);
                else
                    open = false;
            } else if (dag.conditioned.count(v)) {
                open = false;
            }
        }
        bp.status = open ? PathStatus::Open : PathStatus::Blocked;
        bp.classification = classify_path(path, dag, mode);
        out.push_back(std::move(bp));
    }
    return out;
}

std::string BiasPath::arrow_string(const CausalDag& dag) const
{
    std::string out = path.empty() ? "" : path.front();
    for (std::size_t i = 0; i + 1 < path.size(); ++i) {
        out += dag.has_edge(path[i], path[i + 1]) ? " -> " : " <- ";
        out += path[i + 1];
    }
    return out;
}

bool backdoor_valid(const CausalDag& dag, const std::set<std::string>& adjustment)
{
    std::optional<std::string> x = dag.exposure();
    std::optional<std::string> y = dag.outcome();
    if (!x || !y) throw DomainError("backdoor check requires exactly one Exposure and one Outcome");
    std::set<std::string> desc = dag.descendants(*x);
    for (const std::string& id : adjustment) {
        const Node& n = dag.at(id);
        if (!n.observed)
            throw DomainError("adjustment set contains unobserved node '" + id + "'");
        if (desc.count(id))
            throw DomainError("adjustment set contains exposure descendant '" + id + "'");
    }

    CausalDag pruned = dag;
    pruned.edges.clear();
    for (const auto& e : dag.edges)
        if (e.first != *x) pruned.edges.push_back(e);
    pruned.conditioned.clear();
    return d_separated(pruned, {*x}, {*y}, adjustment);
}

CausalDag expand_with_cohort_indicator(const CausalDag& dag, const std::set<std::string>& targets)
{
    for (const Node& n : dag.nodes)
        if (n.kind == NodeKind::CohortIndicator)
            throw DomainError("DAG already has a CohortIndicator node ('" + n.id + "')");
    if (targets.empty()) throw DomainError("cohort-indicator expansion requires at least one target");
    for (const std::string& t : targets) dag.at(t);
    if (dag.find("S")) throw DomainError("node id 'S' already in use; cannot add cohort indicator");

    CausalDag out = dag;
    out.nodes.push_back({"S", NodeKind::CohortIndicator, true, "cohort indicator"});
    for (const std::string& t : targets) out.edges.push_back({"S", t});
    return out;
}

bool BiasAuditReport::has_open_bias() const
{
    for (const auto& g : groups)
        if (!g.within.empty() || !g.across.empty()) return true;
    return false;
}

BiasAuditReport bias_audit_report(const CausalDag& dag, int max_adjustment_size)
{
    std::optional<std::string> x = dag.exposure();
    if (!x) throw DomainError("bias audit requires exactly one Exposure and one Outcome");
    BiasAuditReport report;
    report.max_adjustment_size = max_adjustment_size;
    bool has_proxy = false;
    try {
        has_proxy = analysis_proxy(dag, *x).has_value();
    } catch (const DomainError&) {
        has_proxy = true; // ambiguous proxies still force proxy-mode error below
    }
    report.mode = has_proxy ? PathMode::ProxyExposure : PathMode::TrueExposure;

    std::map<BiasClass, BiasAuditGroup> grouped;
    for (const BiasPath& p : enumerate_paths(dag, report.mode)) {
        if (p.status != PathStatus::Open) continue;
        if (p.classification == BiasClass::Causal) {
            report.open_causal.push_back(p);
            continue;
        }
        BiasAuditGroup& g = grouped[p.classification];
        g.classification = p.classification;
        bool across = false;
        for (const std::string& id : p.path)
            if (dag.at(id).kind == NodeKind::CohortIndicator) across = true;
        (across ? g.across : g.within).push_back(p);
    }
    for (BiasClass c : {BiasClass::Confounding, BiasClass::Selection, BiasClass::Measurement})
        if (grouped.count(c)) report.groups.push_back(grouped[c]);

    bool has_confounding = grouped.count(BiasClass::Confounding) > 0;
    if (has_confounding) {
        // exhaustive search over observed, non-descendant candidates
        std::set<std::string> desc = dag.descendants(*x);
        std::optional<std::string> y = dag.outcome();
        std::vector<std::string> candidates;
        for (const Node& n : dag.nodes) {
            if (n.id == *x || (y && n.id == *y)) continue;
            if (!n.observed || desc.count(n.id)) continue;
            candidates.push_back(n.id);
        }
        std::sort(candidates.begin(), candidates.end());

        // by increasing size so that every recorded set is inclusion-minimal
        // (backdoor validity is not monotone: adding a collider can open paths)
        const std::size_t k = candidates.size();
        const std::size_t bound = std::min<std::size_t>(k, static_cast<std::size_t>(std::max(0, max_adjustment_size)));
        std::vector<std::set<std::string>> minimal;
        for (std::size_t size = 0; size <= bound; ++size) {
            std::vector<std::size_t> pick;
            std::function<void(std::size_t)> combos = [&](std::size_t start) {
                if (pick.size() == size) {
                    std::set<std::string> trial;
                    for (std::size_t i : pick) trial.insert(candidates[i]);
                    for (const auto& m : minimal)
                        if (std::includes(trial.begin(), trial.end(), m.begin(), m.end())) return;
                    if (backdoor_valid(dag, trial)) minimal.push_back(trial);
                    return;
                }
                for (std::size_t i = start; i + (size - pick.size()) <= k; ++i) {
                    pick.push_back(i);
                    combos(i + 1);
                    pick.pop_back();
                }
            };
            combos(0);
        }
        report.minimal_adjustment_sets = std::move(minimal);
    }
    return report;
}

// ---------------------------------------------------------------------------
// JSON interface

namespace {

std::string line_anchor(const std::string& text, std::size_t byte)
{
    std::size_t line = 1, col = 1;
    for (std::size_t i = 0; i < byte && i < text.size(); ++i) {
        if (text[i] == '\n') {
            ++line;
            col = 1;
        } else {
            ++col;
        }
    }
    std::ostringstream os;
    os << "line " << line << ", column " << col;
    return os.str();
}

} // namespace

CausalDag dag_from_json_string(const std::string& text)
{
    json doc;
    try {
        doc = json::parse(text);
    } catch (const json::parse_error& e) {
        throw DomainError("dag spec: malformed JSON at " + line_anchor(text, e.byte) + ": " + e.what());
    }
    if (!doc.is_object() || !doc.contains("nodes") || !doc["nodes"].is_array())
        throw DomainError("dag spec: top-level object with a 'nodes' array is required");

    CausalDag dag;
    for (const auto& jn : doc["nodes"]) {
        Node n;
        if (!jn.contains("id") || !jn["id"].is_string())
            throw DomainError("dag spec: every node needs a string 'id'");
        n.id = jn["id"].get<std::string>();
        n.kind = jn.contains("kind") ? node_kind_from_string(jn["kind"].get<std::string>())
                                     : NodeKind::Auxiliary;
        n.observed = n.kind != NodeKind::UnmeasuredConfounder;
        if (jn.contains("observed")) n.observed = jn["observed"].get<bool>();
        if (jn.contains("label")) n.label = jn["label"].get<std::string>();
        for (const auto& [key, value] : jn.items()) {
            (void)value;
            if (key != "id" && key != "kind" && key != "observed" && key != "label")
                throw DomainError("dag spec: node '" + n.id + "': unknown key '" + key + "'");
        }
        dag.nodes.push_back(std::move(n));
    }
    if (doc.contains("edges")) {
        for (const auto& je : doc["edges"]) {
            if (!je.is_array() || je.size() != 2)
                throw DomainError("dag spec: edges must be [parent, child] pairs");
            dag.edges.push_back({je[0].get<std::string>(), je[1].get<std::string>()});
        }
    }
    if (doc.contains("conditioned"))
        for (const auto& jc : doc["conditioned"]) dag.conditioned.insert(jc.get<std::string>());
    for (const auto& [key, value] : doc.items()) {
        (void)value;
        if (key != "nodes" && key != "edges" && key != "conditioned")
            throw DomainError("dag spec: unknown key '" + key + "'");
    }
    return dag;
}

CausalDag load_dag(const std::string& path)
{
    std::ifstream in(path);
    if (!in) throw DomainError("cannot open DAG spec file '" + path + "'");
    std::stringstream buf;
    buf << in.rdbuf();
    return dag_from_json_string(buf.str());
}

std::string dag_to_json_string(const CausalDag& dag)
{
    json doc;
    doc["nodes"] = json::array();
    for (const Node& n : dag.nodes) {
        json jn{{"id", n.id}, {"kind", to_string(n.kind)}, {"observed", n.observed}};
        if (!n.label.empty()) jn["label"] = n.label;
        doc["nodes"].push_back(jn);
    }
    doc["edges"] = json::array();
    for (const auto& e : dag.edges) doc["edges"].push_back(json::array({e.first, e.second}));
    doc["conditioned"] = json(dag.conditioned);
    return doc.dump(2) + "\n";
}

namespace {

json path_to_json(const BiasPath& p, const CausalDag& dag)
{
    return json{{"path", p.path},
                {"display", p.arrow_string(dag)},
                {"status", to_string(p.status)},
                {"openers", json(p.openers)},
                {"classification", to_string(p.classification)}};
}

} // namespace

std::string render_audit_json(const BiasAuditReport& report, const CausalDag& dag)
{
    json doc;
    doc["mode"] = report.mode == PathMode::ProxyExposure ? "ProxyExposure" : "TrueExposure";
    doc["open_causal_paths"] = json::array();
    for (const BiasPath& p : report.open_causal) doc["open_causal_paths"].push_back(path_to_json(p, dag));
    doc["bias_groups"] = json::array();
    for (const BiasAuditGroup& g : report.groups) {
        json jg;
        jg["classification"] = to_string(g.classification);
        jg["within"] = json::array();
        for (const BiasPath& p : g.within) jg["within"].push_back(path_to_json(p, dag));
        jg["across"] = json::array();
        for (const BiasPath& p : g.across) jg["across"].push_back(path_to_json(p, dag));
        doc["bias_groups"].push_back(jg);
    }
    doc["max_adjustment_size"] = report.max_adjustment_size;
    doc["minimal_adjustment_sets"] = json::array();
    for (const auto& s : report.minimal_adjustment_sets) doc["minimal_adjustment_sets"].push_back(json(s));
    return doc.dump(2) + "\n";
}

std::string render_audit_text(const BiasAuditReport& report, const CausalDag& dag)
{
    struct Row {
        std::string cls, scope, status, openers, path;
    };
    std::vector<Row> rows;
    for (const BiasPath& p : report.open_causal)
        rows.push_back({"Causal", "-", to_string(p.status), "-", p.arrow_string(dag)});
    for (const BiasAuditGroup& g : report.groups) {
        auto add = [&](const BiasPath& p, const std::string& scope) {
            std::string openers = "-";
            if (!p.openers.empty()) {
                openers.clear();
                for (const std::string& o : p.openers) openers += (openers.empty() ? "" : ",") + o;
            }
            rows.push_back({to_string(g.classification), scope, to_string(p.status), openers,
                            p.arrow_string(dag)});
        };
        for (const BiasPath& p : g.within) add(p, "Within");
        for (const BiasPath& p : g.across) add(p, "Across");
    }

    Row header{"CLASS", "SCOPE", "STATUS", "OPENERS", "PATH"};
    std::size_t w0 = header.cls.size(), w1 = header.scope.size(), w2 = header.status.size(),
                w3 = header.openers.size();
    for (const Row& r : rows) {
        w0 = std::max(w0, r.cls.size());
        w1 = std::max(w1, r.scope.size());
        w2 = std::max(w2, r.status.size());
        w3 = std::max(w3, r.openers.size());
    }
    std::ostringstream os;
    auto emit = [&](const Row& r) {
        os << r.cls << std::string(w0 - r.cls.size() + 2, ' ') << r.scope
           << std::string(w1 - r.scope.size() + 2, ' ') << r.status
           << std::string(w2 - r.status.size() + 2, ' ') << r.openers
           << std::string(w3 - r.openers.size() + 2, ' ') << r.path << "\n";
    };
    emit(header);
    if (rows.empty()) {
        os << "(no open paths)\n";
    } else {
        for (const Row& r : rows) emit(r);
    }
    if (report.has_open_bias()) {
        os << "\nminimal observed adjustment sets (size <= " << report.max_adjustment_size << "): ";
        bool confounding_group = false;
        for (const auto& g : report.groups)
            if (g.classification == BiasClass::Confounding && (!g.within.empty() || !g.across.empty()))
                confounding_group = true;
        if (!confounding_group) {
            os << "n/a (no open confounding paths)\n";
        } else if (report.minimal_adjustment_sets.empty()) {
            os << "none found\n";
        } else {
            bool first_set = true;
            for (const auto& s : report.minimal_adjustment_sets) {
                os << (first_set ? "" : "; ") << "{";
                bool first = true;
                for (const std::string& id : s) {
                    os << (first ? "" : ", ") << id;
                    first = false;
                }
                os << "}";
                first_set = false;
            }
            os << "\n";
        }
    }
    return os.str();
}

} // namespace cohortforge
