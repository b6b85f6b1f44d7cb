#include "qcb/branch.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "qcb/rng.hpp"

namespace qcb::branch {

using linalg::hs_norm;
using linalg::svd;
using linalg::Vec;

namespace {

// Product bookkeeping: p is kept at Frobenius size 1 and log_scale absorbs
// the growth, so kappa and log-norm stay meaningful over 10^5-step products.
struct RunningProduct {
    Mat p;
    double log_scale = 0.0;

    explicit RunningProduct(int d) : p(Mat::identity(d) * (1.0 / std::sqrt(static_cast<double>(d)))) {
        log_scale = 0.5 * std::log(static_cast<double>(d));
    }

    void push(const Mat& step) {
        p = step * p;
        double h = hs_norm(p);
        p = p * (1.0 / h);
        log_scale += std::log(h);
    }
};

void record_step(Branch& b, const RunningProduct& prod, const Mat& step_dhat) {
    auto full = svd(prod.p);
    int d = prod.p.dim();
    double smallest = full.s[d - 1];
    b.kappa_history.push_back(smallest > 0.0 ? full.s[0] / smallest
                                             : std::numeric_limits<double>::infinity());
    b.log_norm_history.push_back(std::log(full.s[0]) + prod.log_scale);
    b.expansion_history.push_back(linalg::co_norm(step_dhat));
}

}  // namespace

Branch greedy_conformal_branch(const maps::GeneratorFamily& family,
                               const FrameWindow& window,
                               const FramePoint& start,
                               const GreedyOptions& options) {
    if (family.size() == 0) throw BranchError("empty generator family", 0, "");
    if (options.n_steps < 1) throw BranchError("step count must be >= 1", 0, "");
    frame::validate(start);
    if (covering::window_margin(window, start) <= 0.0)
        throw BranchError("start frame lies outside the window", 0, frame::to_json(start));

    Branch b;
    b.map_indices.reserve(static_cast<std::size_t>(options.n_steps));
    if (options.keep_points) b.points.push_back(start);

    qcb::Rng tie_rng(options.seed);
    FramePoint w = start;
    RunningProduct prod(w.frame.dim());
    std::vector<FramePoint> pushed(static_cast<std::size_t>(family.size()));
    std::vector<double> margins(static_cast<std::size_t>(family.size()));

    for (int step = 0; step < options.n_steps; ++step) {
        double best = -std::numeric_limits<double>::infinity();
        for (int j = 0; j < family.size(); ++j) {
            pushed[static_cast<std::size_t>(j)] =
                frame::push_frame(family.maps[static_cast<std::size_t>(j)], w);
            margins[static_cast<std::size_t>(j)] =
                covering::window_margin(window, pushed[static_cast<std::size_t>(j)]);
            best = std::max(best, margins[static_cast<std::size_t>(j)]);
        }
        if (!(best > 0.0))
            throw BranchError("branch stuck: no generator stays inside the window",
                              step, frame::to_json(w));
        int choice = -1;
        if (options.tie_break == TieBreak::first_index) {
            for (int j = 0; j < family.size(); ++j) {
                if (margins[static_cast<std::size_t>(j)] >= best - options.tie_tolerance) {
                    choice = j;
                    break;
                }
            }
        } else {
            std::vector<int> tied;
            for (int j = 0; j < family.size(); ++j)
                if (margins[static_cast<std::size_t>(j)] >= best - options.tie_tolerance)
                    tied.push_back(j);
            choice = tied[static_cast<std::size_t>(tie_rng.below(tied.size()))];
        }
        Mat step_dhat = family.maps[static_cast<std::size_t>(choice)]
                            .normalized_tangent_derivative(w.base.coords);
        w = pushed[static_cast<std::size_t>(choice)];
        prod.push(step_dhat);
        b.map_indices.push_back(choice);
        record_step(b, prod, step_dhat);
        if (options.keep_points) b.points.push_back(w);
    }
    return b;
}

Branch random_branch(const maps::GeneratorFamily& family,
                     const FramePoint& start, const RandomOptions& options) {
    if (family.size() == 0) throw BranchError("empty generator family", 0, "");
    if (options.n_steps < 1) throw BranchError("step count must be >= 1", 0, "");
    frame::validate(start);
    std::vector<double> cumulative;
    if (!options.weights.empty()) {
        if (static_cast<int>(options.weights.size()) != family.size())
            throw BranchError("weight count does not match the family", 0, "");
        double total = 0.0;
        for (double weight : options.weights) {
            if (weight < 0.0) throw BranchError("negative branch weight", 0, "");
            total += weight;
            cumulative.push_back(total);
        }
        if (!(total > 0.0)) throw BranchError("branch weights sum to zero", 0, "");
    }

    Branch b;
    b.map_indices.reserve(static_cast<std::size_t>(options.n_steps));
    if (options.keep_points) b.points.push_back(start);

    // Unwindowed products grow without bound, so the frame is carried only in
    // renormalized form; retained points hold that renormalized frame (unit
    // Frobenius size, not unimodular) next to the exact base point.
    qcb::Rng gen(options.seed);
    frame::AmbientPoint base = start.base;
    RunningProduct prod(start.frame.dim());
    for (int step = 0; step < options.n_steps; ++step) {
        int choice;
        if (cumulative.empty()) {
            choice = static_cast<int>(gen.below(static_cast<std::uint64_t>(family.size())));
        } else {
            double u = gen.uniform() * cumulative.back();
            choice = static_cast<int>(
                std::lower_bound(cumulative.begin(), cumulative.end(), u) - cumulative.begin());
            choice = std::min(choice, family.size() - 1);
        }
        const auto& f = family.maps[static_cast<std::size_t>(choice)];
        Mat step_dhat = f.normalized_tangent_derivative(base.coords);
        base.coords = f.apply(base.coords);
        prod.push(step_dhat);
        b.map_indices.push_back(choice);
        record_step(b, prod, step_dhat);
        if (options.keep_points) {
            Mat pushed = prod.p * start.frame;
            b.points.push_back(FramePoint{base, pushed * (1.0 / hs_norm(pushed))});
        }
    }
    return b;
}

BranchStats branch_stats(const Branch& b) {
    BranchStats stats;
    stats.length = b.length();
    if (b.length() == 0) return stats;
    stats.max_kappa = *std::max_element(b.kappa_history.begin(), b.kappa_history.end());
    stats.min_expansion =
        *std::min_element(b.expansion_history.begin(), b.expansion_history.end());

    const std::size_t n = b.log_norm_history.size();
    double mean_x = 0.5 * (1.0 + static_cast<double>(n));
    double mean_y = 0.0;
    for (double y : b.log_norm_history) mean_y += y / static_cast<double>(n);
    double sxx = 0.0, sxy = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        double dx = static_cast<double>(i + 1) - mean_x;
        sxx += dx * dx;
        sxy += dx * (b.log_norm_history[i] - mean_y);
    }
    if (sxx > 0.0) {
        stats.lyapunov_slope = sxy / sxx;
        if (n > 2) {
            double ss_resid = 0.0;
            for (std::size_t i = 0; i < n; ++i) {
                double fit = mean_y + stats.lyapunov_slope * (static_cast<double>(i + 1) - mean_x);
                double resid = b.log_norm_history[i] - fit;
                ss_resid += resid * resid;
            }
            stats.slope_stderr = std::sqrt(ss_resid / (static_cast<double>(n) - 2.0) / sxx);
        }
    }
    return stats;
}

}  // namespace qcb::branch
