#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "qcb/covering.hpp"
#include "qcb/linalg.hpp"
#include "qcb/maps.hpp"

namespace qcb::blender {

using linalg::Mat;
using linalg::Vec;

class BlenderError : public std::runtime_error {
  public:
    explicit BlenderError(const std::string& what, std::string witness = "")
        : std::runtime_error(what), witness_(std::move(witness)) {}
    const std::string& witness() const { return witness_; }

  private:
    std::string witness_;
};

// One contracting generator x -> lambda * D^{-1} x + v.  The linear part is
// stored explicitly; d_index names the unimodular generator it inverts.
struct AffineMap {
    Mat linear;
    Vec offset;
    int d_index = 0;
    double lambda = 0.0;

    Vec apply(const Vec& x) const { return linear * x + offset; }
};

// The full two-scale family: d^2 shape generators crossed with a cubic offset
// lattice.  Geometry bookkeeping travels with the maps so the assumption
// checker and the probes agree on V, its inner radius and the lattice.
struct BlenderFamily {
    int d = 0;
    double epsilon = 0.0;
    double lambda = 0.0;           // 1 - epsilon
    double v_radius = 0.0;         // epsilon^2
    double v_inner = 0.0;          // epsilon^2 (1 - epsilon)^2
    double lattice_spacing = 0.0;
    covering::SimplexFamily simplex;
    std::vector<Vec> lattice;      // offsets J, lexicographic in the integer keys
    std::vector<AffineMap> maps;   // D-major: maps[i * |J| + j] pairs D_i with J_j

    int size() const { return static_cast<int>(maps.size()); }
    // Affine LocalMap view in family order, labels "D<i>+J<j>".
    maps::GeneratorFamily local_maps() const;
};

// Constructs the family at contraction 1 - epsilon.  The shape generators are
// retuned (scale halving) until each is (1 + epsilon)-conformal, the lattice
// spacing keeps the covering of V̄ by translated inner balls with a one
// percent reserve, and the covering, forward-invariance and fixed-point
// properties are all checked numerically before returning.
BlenderFamily build_affine_blender(int d, double epsilon);
BlenderFamily build_affine_blender(int d, double epsilon, double t, double r);

struct AssumptionOptions {
    int n_base_samples = 4000;   // (point of V̄, frame) pairs for the joint check
    int n_fiber_samples = 800;   // frames for the standalone window covering check
    std::uint64_t seed = 0;
    int n_threads = 1;
};

// Hypotheses of the blender criterion, each with its margin:
//   covering     - every sampled (point, frame) admits a generator pulling the
//                  point into V while keeping the frame inside the window;
//   invariance   - every map sends the closed unit ball into the open one;
//   contraction  - every map derivative is a strict contraction on it.
struct AssumptionReport {
    bool covering_pass = false;
    bool invariance_pass = false;
    bool contraction_pass = false;
    double worst_base_margin = 0.0;   // length units inside V, over joint pairs
    double worst_fiber_margin = 0.0;  // barycentric membership, standalone frames
    double invariance_margin = 0.0;   // 1 - sup |image| over the unit ball
    double contraction_modulus = 0.0; // sup of step derivative norms
    int n_base_samples = 0;
    int n_fiber_samples = 0;
    std::string witness;              // first failing sample, empty when passing

    bool passed() const { return covering_pass && invariance_pass && contraction_pass; }
};

AssumptionReport verify_blender_assumptions(const BlenderFamily& fam,
                                            const AssumptionOptions& options);
// Same bookkeeping with the maps replaced one for one (e.g. a perturbed
// family); non-affine maps are handled by sampled bounds and Newton inversion.
AssumptionReport verify_blender_assumptions(const BlenderFamily& fam,
                                            const maps::GeneratorFamily& replacement,
                                            const AssumptionOptions& options);

// Chaos-game cloud: each point is an independent particle driven n_iterations
// steps from the origin by seeded uniform map choices.
std::vector<Vec> hutchinson_attractor(const std::vector<AffineMap>& maps,
                                      int n_iterations, int n_points,
                                      std::uint64_t seed, int n_threads = 1);
// Same chaos game over arbitrary local maps (e.g. a perturbed family); the
// affine view of a family reproduces the AffineMap cloud bit for bit.
std::vector<Vec> hutchinson_attractor(const maps::GeneratorFamily& family,
                                      int n_iterations, int n_points,
                                      std::uint64_t seed, int n_threads = 1);

struct OccupancyResult {
    int n_cells = 0;
    int n_hit = 0;
    double fraction = 0.0;
    double cell_size = 0.0;
};

// Occupancy of the cubic cells of the given size that lie entirely inside the
// centered ball; a cell is hit when some cloud point falls in it.
OccupancyResult grid_occupancy(const std::vector<Vec>& cloud, double ball_radius,
                               double cell_size);

struct MinimalityResult {
    bool covered = false;
    long steps = 0;          // applied maps when the last target was reached
    int n_targets = 0;
    int n_uncovered = 0;
    std::vector<Vec> uncovered;  // at most eight sample centers
};

// Chaos-game orbit from x0 until every rho-grid center of V̄ has been visited
// within rho.  The start point itself does not count as a visit.  Budget
// exhaustion reports failure instead of throwing.
MinimalityResult minimality_probe(const BlenderFamily& fam, const Vec& x0, double rho,
                                  long max_steps, std::uint64_t seed);

struct ErgodicityResult {
    double occupancy = 0.0;
    int n_cells = 0;
    int n_hit = 0;
    int n_steps = 0;
    int n_particles = 0;
    // The probe is a grid surrogate for the measure statement, never a proof.
    bool surrogate = true;
};

// Particle ensemble from a seed ball inside V; occupancy counts the V-cells
// visited by any particle at any step up to n_steps (step 0 included).
ErgodicityResult ergodicity_probe(const BlenderFamily& fam, const Vec& seed_center,
                                  double seed_radius, int n_steps, int n_particles,
                                  double rho_grid, std::uint64_t seed,
                                  int n_threads = 1);
// Same probe with the family maps replaced one for one.
ErgodicityResult ergodicity_probe(const BlenderFamily& fam,
                                  const maps::GeneratorFamily& replacement,
                                  const Vec& seed_center, double seed_radius,
                                  int n_steps, int n_particles, double rho_grid,
                                  std::uint64_t seed, int n_threads = 1);

// Adds a seeded quadratic bump to every map, scaled so the C1 deviation
// measured over a fixed grid on the closed unit ball is exactly c1_size.
maps::GeneratorFamily perturbed_family(const BlenderFamily& fam, double c1_size,
                                       std::uint64_t seed);

// {"d": ..., "epsilon": ..., "t": ..., "r": ..., "lambda": ..., "lattice":
// [...], "generators": [[[...]]]} with round-trip precision; reload rebuilds
// the family and cross-checks the stored generators.
std::string to_json(const BlenderFamily& fam);
BlenderFamily blender_from_json(const std::string& text);

}  // namespace qcb::blender
