#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "wmseg/measure.hpp"

namespace wmseg {

// s-t graph of a binary labeling problem. Label 1 is the source side.
struct FlowGraph {
    std::size_t node_count = 0;
    std::vector<double> source_cap;  // per node, from negative unaries
    std::vector<double> sink_cap;    // per node, from positive unaries
    std::vector<Edge> neighbours;    // undirected, capacity = weight
    double unary_offset = 0.0;       // sum of min(0, unary)
};

// Throws Error("graph.invalid") on non-finite unaries or negative/non-finite weights.
FlowGraph build_flow_graph(std::span<const double> unaries, std::span<const Edge> adjacency);

struct CutResult {
    std::vector<std::uint8_t> labels;
    double cut_value = 0.0;
    double energy = 0.0;  // cut_value + unary_offset
};

// Maximum flow by shortest augmenting paths in BFS level graphs (Dinic). The
// labels are the residual source set, i.e. the minimal optimal foreground.
CutResult min_cut(const FlowGraph& graph);

// sum unary_y * l_y + sum a |l_y - l_y'|
double labeling_energy(std::span<const double> unaries, std::span<const Edge> adjacency,
                       std::span<const std::uint8_t> labels);

} // namespace wmseg
