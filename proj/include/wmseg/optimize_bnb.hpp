#pragma once

#include <cstddef>
#include <optional>
#include <ostream>
#include <queue>
#include <span>
#include <vector>

#include "wmseg/energy.hpp"
#include "wmseg/optimize_alt.hpp"

namespace wmseg {

struct BnbOptions {
    double stop_px = 1.0;          // stop once the best box moves template points by at most this much
    std::size_t budget = 20000;    // maximum number of bound evaluations
    std::vector<std::size_t> grid; // initial cells per axis; empty means one cell
    bool bisect_longest = false;   // split only the widest axis instead of all 2^n
    bool prune = true;             // drop boxes whose bound exceeds the incumbent
    bool parallel = true;          // evaluate sibling bounds on several threads
    std::ostream* report = nullptr;  // JSONL stream of evaluated boxes
};

struct CoverBox {
    LambdaBox box;  // bound always set
    std::size_t id = 0;
    std::size_t parent = 0;
    std::size_t depth = 0;
};

// Boxes ordered by (bound, creation id) plus the best exactly evaluated point.
class CoverList {
  public:
    void push(CoverBox b);
    CoverBox pop();
    const CoverBox& top() const { return heap_.front(); }
    bool empty() const { return heap_.empty(); }
    std::size_t size() const { return heap_.size(); }
    double min_bound() const;
    const std::vector<CoverBox>& boxes() const { return heap_; }

    std::size_t next_id() { return created_++; }
    bool offer(std::span<const double> lambda, double value, Coupling plan);

    bool has_incumbent() const { return has_incumbent_; }
    const std::vector<double>& best_lambda() const { return best_lambda_; }
    double best_value() const { return best_value_; }
    const Coupling& best_plan() const { return best_plan_; }

    std::size_t bounds_evaluated = 0;
    std::size_t max_depth = 0;
    std::vector<double> axis_tolerance;  // coefficient width below which an axis is not split

  private:
    std::vector<CoverBox> heap_;
    std::size_t created_ = 0;
    bool has_incumbent_ = false;
    std::vector<double> best_lambda_;
    double best_value_ = 0.0;
    Coupling best_plan_;
};

// Sum over axes of (u_k - l_k) * max_x |t_k(x)|: the largest displacement of a template point within the box.
double displacement_width(const LambdaBox& box, const Problem& problem);

// Splits the region into the given grid and bounds every cell.
CoverList init_cover(const LambdaBox& region, std::span<const std::size_t> grid, const Problem& problem,
                     const BnbOptions& options = {});

// Pops the box with the smallest bound, evaluates E1 at its centre, and
// replaces it by its children with fresh bounds. Returns false when the box
// had no axis left to split (it is then pushed back unchanged).
bool refine(CoverList& cover, const Problem& problem, const BnbOptions& options = {});

struct BnbResult {
    std::vector<double> lambda;
    double value = 0.0;
    Coupling plan;
    double lower_bound = 0.0;  // certified: the global minimum over the region is at least this
    double gap = 0.0;          // value - lower_bound (>= 0)
    bool budget_exhausted = false;
    std::size_t bounds_evaluated = 0;
    std::size_t max_depth = 0;
    std::size_t open_boxes = 0;
};

BnbResult bnb_optimize(const LambdaBox& region, const Problem& problem, const BnbOptions& options = {});

struct CombinedResult {
    BnbResult bnb;
    AltResult alt;
    std::vector<double> lambda;
    double energy = 0.0;
    Segmentation segmentation;
};

// Branch-and-bound over the modes flagged in `bnb_modes` (the others fixed at 0,
// with TV switched off), then alternating minimization over all modes from that start.
CombinedResult combined_optimize(const LambdaBox& region, const Problem& problem, const std::vector<bool>& bnb_modes,
                                 const BnbOptions& bnb_options = {}, const AltOptions& alt_options = {});

} // namespace wmseg
