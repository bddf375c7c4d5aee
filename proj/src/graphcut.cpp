#include "wmseg/graphcut.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <queue>

#include "wmseg/error.hpp"

namespace wmseg {

FlowGraph build_flow_graph(std::span<const double> unaries, std::span<const Edge> adjacency) {
    FlowGraph g;
    g.node_count = unaries.size();
    g.source_cap.assign(g.node_count, 0.0);
    g.sink_cap.assign(g.node_count, 0.0);
    for (std::size_t v = 0; v < g.node_count; ++v) {
        const double u = unaries[v];
        if (!std::isfinite(u)) throw Error("graph.invalid", "unaries must be finite");
        if (u > 0.0) g.sink_cap[v] = u;
        if (u < 0.0) {
            g.source_cap[v] = -u;
            g.unary_offset += u;
        }
    }
    for (const Edge& e : adjacency) {
        if (e.a >= g.node_count || e.b >= g.node_count) throw Error("graph.invalid", "edge endpoint out of range");
        if (!(e.weight >= 0.0) || !std::isfinite(e.weight)) {
            throw Error("graph.invalid", "edge weights must be finite and >= 0");
        }
        if (e.weight > 0.0 && e.a != e.b) g.neighbours.push_back(e);
    }
    return g;
}

namespace {

struct Arc {
    std::size_t to;
    std::size_t rev;
    double cap;
};

class Dinic {
  public:
    explicit Dinic(std::size_t n) : adj_(n), level_(n), it_(n) {}

    void add(std::size_t a, std::size_t b, double cap_ab, double cap_ba) {
        adj_[a].push_back({b, adj_[b].size(), cap_ab});
        adj_[b].push_back({a, adj_[a].size() - 1, cap_ba});
    }

    double run(std::size_t s, std::size_t t, double eps) {
        eps_ = eps;
        double flow = 0.0;
        while (bfs(s, t)) {
            std::fill(it_.begin(), it_.end(), 0);
            while (true) {
                const double f = dfs(s, t, std::numeric_limits<double>::infinity());
                if (f <= 0.0) break;
                flow += f;
            }
        }
        return flow;
    }

    std::vector<char> reachable(std::size_t s) const {
        std::vector<char> seen(adj_.size(), 0);
        std::vector<std::size_t> stack{s};
        seen[s] = 1;
        while (!stack.empty()) {
            const std::size_t u = stack.back();
            stack.pop_back();
            for (const Arc& a : adj_[u]) {
                if (a.cap > eps_ && !seen[a.to]) {
                    seen[a.to] = 1;
                    stack.push_back(a.to);
                }
            }
        }
        return seen;
    }

  private:
    std::vector<std::vector<Arc>> adj_;
    std::vector<int> level_;
    std::vector<std::size_t> it_;
    double eps_ = 0.0;

    bool bfs(std::size_t s, std::size_t t) {
        std::fill(level_.begin(), level_.end(), -1);
        std::queue<std::size_t> q;
        level_[s] = 0;
        q.push(s);
        while (!q.empty()) {
            const std::size_t u = q.front();
            q.pop();
            for (const Arc& a : adj_[u]) {
                if (a.cap > eps_ && level_[a.to] < 0) {
                    level_[a.to] = level_[u] + 1;
                    q.push(a.to);
                }
            }
        }
        return level_[t] >= 0;
    }

    double dfs(std::size_t u, std::size_t t, double pushed) {
        if (u == t) return pushed;
        for (std::size_t& k = it_[u]; k < adj_[u].size(); ++k) {
            Arc& a = adj_[u][k];
            if (a.cap <= eps_ || level_[a.to] != level_[u] + 1) continue;
            const double f = dfs(a.to, t, std::min(pushed, a.cap));
            if (f > 0.0) {
                a.cap -= f;
                adj_[a.to][a.rev].cap += f;
                return f;
            }
        }
        return 0.0;
    }
};

} // namespace

CutResult min_cut(const FlowGraph& graph) {
    const std::size_t n = graph.node_count;
    const std::size_t s = n, t = n + 1;
    Dinic d(n + 2);
    double scale = 0.0;
    for (std::size_t v = 0; v < n; ++v) {
        if (graph.source_cap[v] > 0.0) d.add(s, v, graph.source_cap[v], 0.0);
        if (graph.sink_cap[v] > 0.0) d.add(v, t, graph.sink_cap[v], 0.0);
        scale = std::max({scale, graph.source_cap[v], graph.sink_cap[v]});
    }
    for (const Edge& e : graph.neighbours) {
        d.add(e.a, e.b, e.weight, e.weight);
        scale = std::max(scale, e.weight);
    }
    CutResult res;
    res.cut_value = d.run(s, t, 1e-13 * scale);
    const auto seen = d.reachable(s);
    res.labels.assign(n, 0);
    for (std::size_t v = 0; v < n; ++v) res.labels[v] = seen[v] ? 1 : 0;
    res.energy = res.cut_value + graph.unary_offset;
    return res;
}

double labeling_energy(std::span<const double> unaries, std::span<const Edge> adjacency,
                       std::span<const std::uint8_t> labels) {
    if (labels.size() != unaries.size()) throw Error("graph.invalid", "one label per node required");
    double e = 0.0;
    for (std::size_t v = 0; v < unaries.size(); ++v) {
        if (labels[v]) e += unaries[v];
    }
    for (const Edge& a : adjacency) {
        if (a.a >= labels.size() || a.b >= labels.size()) throw Error("graph.invalid", "edge endpoint out of range");
        if (labels[a.a] != labels[a.b]) e += a.weight;
    }
    return e;
}

} // namespace wmseg
