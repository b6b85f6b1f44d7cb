#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "qcb/covering.hpp"
#include "qcb/frame.hpp"
#include "qcb/maps.hpp"

namespace qcb::branch {

using covering::FrameWindow;
using frame::FramePoint;
using linalg::Mat;

// Raised when a branch cannot be continued (no generator keeps the frame
// inside the window); carries the step index and the stranded frame point.
class BranchError : public std::runtime_error {
  public:
    BranchError(const std::string& what, int step, std::string witness)
        : std::runtime_error(what), step(step), witness(std::move(witness)) {}
    int step;
    std::string witness;
};

// One orbit branch: the chosen generator indices plus per-step diagnostics of
// the accumulated normalized derivative product.  The product itself is kept
// renormalized internally, so histories stay finite for long random products
// whose extreme stretches overflow doubles.
struct Branch {
    std::vector<int> map_indices;
    // Conformality of the accumulated product after each step (+inf when the
    // smallest stretch underflows completely).
    std::vector<double> kappa_history;
    // Smallest singular value of the single-step normalized derivative.
    std::vector<double> expansion_history;
    // log of the largest singular value of the accumulated product.
    std::vector<double> log_norm_history;
    // start plus every visited frame point, retained only on request
    std::vector<FramePoint> points;

    int length() const { return static_cast<int>(map_indices.size()); }
};

enum class TieBreak { first_index, seeded };

struct GreedyOptions {
    int n_steps = 1000;
    bool keep_points = false;
    TieBreak tie_break = TieBreak::first_index;
    std::uint64_t seed = 0;        // only consulted for seeded tie-breaking
    double tie_tolerance = 0.0;    // margins this close count as tied
};

// Follows the maximal-margin generator at every step and throws BranchError
// the moment no generator keeps the frame strictly inside the window.
Branch greedy_conformal_branch(const maps::GeneratorFamily& family,
                               const FrameWindow& window,
                               const FramePoint& start,
                               const GreedyOptions& options);

struct RandomOptions {
    int n_steps = 1000;
    bool keep_points = false;
    std::vector<double> weights;   // empty = uniform over the family
    std::uint64_t seed = 0;
};

// Samples generator indices independently by weight; no window is enforced.
Branch random_branch(const maps::GeneratorFamily& family,
                     const FramePoint& start, const RandomOptions& options);

struct BranchStats {
    double max_kappa = 0.0;
    double min_expansion = 0.0;
    // Least-squares slope of log_norm_history against the step index, with
    // the usual standard error of the slope estimate.
    double lyapunov_slope = 0.0;
    double slope_stderr = 0.0;
    int length = 0;
};

BranchStats branch_stats(const Branch& b);

}  // namespace qcb::branch
