#pragma once

#include <stdexcept>
#include <string>
#include <vector>

#include "qcb/covering.hpp"
#include "qcb/linalg.hpp"

namespace qcb::sphere {

using linalg::Mat;
using linalg::Vec;

// Raised on malformed inputs (non-special-linear matrices, orthogonal input
// to the normal form, a scan that is not total where totality is required).
// The witness carries the offending quantity when there is one.
class SphereError : public std::runtime_error {
  public:
    explicit SphereError(const std::string& what, std::string witness = "")
        : std::runtime_error(what), witness(std::move(witness)) {}
    std::string witness;
};

// An element of SL(d+1, R) acting on the unit sphere S^d by x -> Ax/|Ax|.
// Construction enforces |det - 1| <= 1e-8.
class ProjectiveMap {
  public:
    explicit ProjectiveMap(Mat matrix);

    const Mat& matrix() const { return matrix_; }
    int ambient_dim() const { return matrix_.dim(); }
    int sphere_dim() const { return matrix_.dim() - 1; }

  private:
    Mat matrix_;
};

// Ax / |Ax| for unit x; the result is unit within 1e-12.  Throws when x is
// not unit within 1e-9.
Vec sphere_map(const ProjectiveMap& a, const Vec& x);

// Tangent map of sphere_map at unit x, as the d x d matrix taking canonical
// tangent coordinates at x to canonical tangent coordinates at the image:
//   v -> (I - f(x) f(x)^T) A v / |Ax|.
// The canonical bases are the Householder gauge from the frame module.
Mat sphere_derivative(const ProjectiveMap& a, const Vec& x);

// Strict contraction condition on a positive diagonal r_1..r_{d+1}:
//   r_{d+1} < min_{i <= d} r_i   and   max_{1 < i <= d} r_i^d < r_1...r_d.
// The second inequality is vacuous for d = 1.  Throws on a nonpositive
// entry.
bool check_diagonal_condition(const std::vector<double>& r);

// Word R_0 D^{a_1} R_1 ... D^{a_n} R_n over a fixed matrix D: n + 1
// rotations in SO(d+1) and n exponents, each +1 or -1.  The stored result is
// the diagonal value of the word; reconstruct() multiplies the word out so
// the two can be compared.
struct NormalFormWord {
    std::vector<Mat> rotations;
    std::vector<int> exponents;
    Mat result;

    Mat reconstruct(const Mat& d) const;
};

// Reduces a non-orthogonal D in SL(d+1, R) to a diagonal matrix passing
// check_diagonal_condition, recording every step as a word over D itself:
// SVD splits D = R D' R^' with R, R^' special orthogonal, signed
// permutations sort and symmetrize D' into D_1 = prod_{sigma(1)=1}
// R_sigma D' R_sigma^{-1}, one commutator D_2 = D_1 R_rev D_1^{-1}
// R_rev^{-1} clears the middle entries, and the output is D_2^2.  Signed
// permutations flip the sign of the last moved coordinate so every rotation
// has determinant +1.  Throws SphereError when kappa(D) <= 1 + tol, and
// reports the residual when the reconstructed word drifts from the result
// by more than 1e-8.
NormalFormWord normal_form(const Mat& d_input, double tol = 1e-6);

// One unit-tangent-bundle sample: unit base x in R^(d+1), unit v with
// <x, v> = 0.
struct ScanSample {
    Vec x;
    Vec v;
};

// Deterministic sample set of T^1 S^d: n_base base points from the
// direction set, each carrying n_angles tangent directions (d = 1 supports
// at most the two unit tangents per base point).  The spacings are the
// largest nearest-neighbour gaps of the base grid and the angular step of
// the tangent grid; the certificate uses them to size refinement cells.
struct TangentGrid {
    int d = 0;
    std::vector<ScanSample> samples;
    double x_spacing = 0.0;
    double v_spacing = 0.0;
};
TangentGrid build_tangent_grid(int d, int n_base, int n_angles);

// Angular radius of the target neighbourhood of e_{d+1}.  Validated by the
// measured margins of diag(2, 1, ..., 1, 1/2) at the pole.
inline constexpr double target_angle = 0.1;

struct SampleOutcome {
    bool covered = false;
    // Generator indices, first applied first; empty when the sample already
    // sits in the target cone (or when not covered).
    std::vector<int> word;
    double expansion_margin = 0.0;    // co_norm(D_x g) - 1
    double contraction_margin = 0.0;  // 1 - |Dhat_x g restricted to v-perp|
};

struct ScanReport {
    int n_samples = 0;
    int n_covered = 0;
    double coverage = 0.0;
    double worst_expansion = 0.0;    // min over covered samples
    double worst_contraction = 0.0;  // min over covered samples
    std::vector<long> word_lengths;  // histogram indexed by word length
    std::vector<SampleOutcome> samples;
};

// For every grid sample (x, v), breadth-first search over words in the
// rotation generators (acting as (x, v) -> (Rx, Rv)) for a word R with
// angle(Rx, e_{d+1}) < target_angle and angle(Rv, +-e_1) < epsilon_cone
// such that g = f_{A_hat} after R expands at x (co_norm of the derivative
// above 1) and the normalized derivative contracts the orthocomplement of
// v.  The cone is around the e_1 axis rather than the vector: v and -v span
// the same orthocomplement, and rotation words preserve the tangent
// orientation class, so a one-sided cone would cut T^1 S^1 in half.
// Visited (x, v) states are cached per sample on a product grid with cells
// at half the target tolerances, so the search is finite.  A sample whose
// search space is exhausted within max_word_len stays uncovered; the report
// is partial rather than an error.  Generators must be orthogonal with
// determinant 1 and should be closed under inverses for the search to reach
// the whole group.
ScanReport directional_contraction_scan(const std::vector<Mat>& rot_generators,
                                        const ProjectiveMap& a_hat,
                                        const TangentGrid& grid,
                                        int max_word_len, double epsilon_cone,
                                        int n_threads = 1);

// Re-verifies a total scan on a finer grid: each sample cell is subdivided
// refinement times per axis (two base axes and one angle axis on S^2) and
// the sample's own word is re-evaluated at every refined point.  The
// expansion and contraction inequalities are certified as separate
// channels; every sample must dominate its own measured neighbour slack in
// both channels, and the stored margin and slack belong to the sample and
// channel with the least headroom, so the pass test on the stored pair
// decides all of them.  Throws SphereError when the scan is not total.
covering::CoveringCertificate certify_directional_contraction(
    const ScanReport& scan, const std::vector<Mat>& rot_generators,
    const ProjectiveMap& a_hat, const TangentGrid& grid, int refinement,
    int n_threads = 1);

}  // namespace qcb::sphere
