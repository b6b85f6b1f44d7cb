#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "qcb/branch.hpp"
#include "qcb/covering.hpp"
#include "qcb/frame.hpp"
#include "qcb/maps.hpp"

namespace qcb::geometry {

using branch::Branch;
using frame::FramePoint;
using linalg::Mat;
using linalg::Vec;

class GeometryError : public std::runtime_error {
  public:
    explicit GeometryError(const std::string& what) : std::runtime_error(what) {}
};

// Hypothesis bundle for contracting Hölder sequences.  Construction enforces
// 0 < lambda_lo < lambda_hi < 1, kappa >= 1, alpha in (0, 1], c > 0.
struct ContractionSpec {
    double lambda_lo;
    double lambda_hi;
    double kappa;
    double alpha;
    double c;

    ContractionSpec(double lambda_lo, double lambda_hi, double kappa,
                    double alpha, double c);
};

enum class NoisePolicy { none, adversarial_radial, seeded_uniform };

struct KeyLemmaResult {
    // ratio after each step: |y_n - x_n| / (|det of the product|^(1/d) * |y0|^(1+alpha))
    std::vector<double> ratios;
    double max_ratio = 0.0;
    double xi_prime = 0.0;    // admissibility radius the start was checked against
    double lambda_hi = 0.0;   // largest step norm encountered
};

// Pseudo-orbit experiment: y_{i+1} = D_{i+1} y_i + eps_i with |eps_i| just
// below c|y_i|^(1+alpha), against the exact product orbit computed by the
// same recursion.  The adversarial policy aligns the noise with the top
// input-singular direction of the remaining product and the sign that grows
// the current error.
KeyLemmaResult key_lemma_ratio(const std::vector<Mat>& d_seq, const Vec& y0,
                               double c, double alpha, NoisePolicy policy,
                               std::uint64_t seed);

struct ContractingSequence {
    std::vector<Mat> maps;
    double kappa_bound = 0.0;       // max conformality over accumulated products
    double lambda_lo_measured = 0.0;
    double lambda_hi_measured = 0.0;
};

// Scalar contractions times greedy window-branch steps: every accumulated
// product is the scalar part times a window-bounded frame product, so the
// sequence is conformal with the branch's kappa bound.
ContractingSequence conformal_contracting_sequence(int d, int n, double scale_lo,
                                                   double scale_hi,
                                                   std::uint64_t seed);

struct RoundnessResult {
    double r_inner = 0.0;
    double r_outer = 0.0;
    double theta = 0.0;
    std::vector<double> radii;  // per probed direction
};

// Per-direction bisection for the radius whose image displacement equals xi
// after n_steps of the branch's maps.  An optional domain makes every probe
// orbit stay inside or the whole call fails.
RoundnessResult ball_roundness(const maps::GeneratorFamily& family, const Branch& b,
                               const FramePoint& start, double xi, int n_steps,
                               int n_directions, std::uint64_t seed,
                               int n_threads = 1,
                               const std::optional<covering::BallDomain>& domain = {});

struct DistortionResult {
    double l1 = 0.0;               // max over samples of max(rho, 1/rho)
    double bound = 0.0;            // exp(L' R^alpha / (1 - lambda_bar^alpha))
    double lambda_bar = 0.0;       // largest sampled step norm
    double holder_constant = 0.0;  // measured for log|det Dh| at exponent alpha
};

// Jacobian distortion of the n-step composition over a sampled ball of the
// given radius, with the Hölder-series bound computed from measured data.
DistortionResult distortion_ratio(const std::vector<maps::LocalMap>& h_seq,
                                  const Vec& center, double radius, int n_steps,
                                  int n_samples, double alpha, std::uint64_t seed,
                                  int n_threads = 1);

struct InfiltrationResult {
    double kappa_bar = 0.0;
    std::vector<double> per_step_max;  // max sampled conformality after each step
};

// Max conformality of D_x h^k over sampled x in the xi0-ball and k <= n_steps.
InfiltrationResult infiltration_check(const std::vector<maps::LocalMap>& h_seq,
                                      const Vec& center, double xi0, int n_samples,
                                      int n_steps, std::uint64_t seed,
                                      int n_threads = 1);

struct GrowthResult {
    int n = 0;                       // first step with certified inner radius >= rho
    double eta = 0.0;                // smallest single-step expansion seen
    int bound_steps = 0;             // ceil(log(rho/s0)/log eta) + 1
    std::vector<double> inner_radii; // certified value after each step
};

// Tracks the certified inner radius of the image of B(start, s0) step by
// step: boundary samples minus the adjacent-sample variation slack.
GrowthResult ball_growth_steps(const maps::GeneratorFamily& family, const Branch& b,
                               const FramePoint& start, double s0, double rho,
                               int n_directions, std::uint64_t seed,
                               int n_threads = 1, int max_steps = 200);

}  // namespace qcb::geometry
