#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include "qcb/frame.hpp"
#include "qcb/linalg.hpp"
#include "qcb/maps.hpp"

namespace qcb::covering {

using frame::FramePoint;
using linalg::Mat;
using linalg::Vec;
using maps::GeneratorFamily;
using maps::LocalMap;

// Raised when a covering check cannot even be evaluated (degenerate regions,
// no admissible generator at a sample, tuning failure).  Ordinary "check ran
// and failed" is reported through the certificate instead.
class CoveringError : public std::runtime_error {
  public:
    explicit CoveringError(const std::string& what, std::string witness = "")
        : std::runtime_error(what), witness(std::move(witness)) {}
    std::string witness;
};

// Fixed orthonormal basis of the traceless d x d matrices under the
// Frobenius inner product: the diagonal Gram-Schmidt chain first, then for
// each i < j the symmetric and antisymmetric unit pair scaled by 1/sqrt(2).
// The order is pinned; coordinates below refer to it.
std::vector<Mat> algebra_basis(int d);

// Coordinates of a (near-)traceless matrix in algebra_basis(d); throws when
// the residual outside the span exceeds 1e-8 * (1 + |X|).
std::vector<double> algebra_coords(const Mat& x);
Mat from_algebra_coords(int d, const std::vector<double>& coords);

// Closed simplex r * conv(v_1..v_N) in R^(N-1) with the origin strictly
// inside and unit vertices.  Stores the inverse of the affine vertex system,
// so barycentric coordinates are a single matrix-vector product.
class SimplexRegion {
  public:
    SimplexRegion(std::vector<std::vector<double>> vertices, double scale);

    // The regular N-simplex: unit vertices, centroid at the origin.
    static SimplexRegion regular(int n_vertices, double scale);

    int n_vertices() const { return n_; }
    int ambient_dim() const { return n_ - 1; }
    double scale() const { return scale_; }
    const std::vector<double>& vertex(int i) const { return vertices_[static_cast<std::size_t>(i)]; }

    // Unique affine coordinates of y (given in simplex coordinates, already
    // divided by nothing: y is a raw point of R^(N-1)).
    std::vector<double> barycentric(const std::vector<double>& y) const;

    // min_i barycentric_i(y / scale): positive strictly inside, <= 0 outside
    // or on the boundary of the scaled simplex.
    double membership(const std::vector<double>& y) const;

    // Length of the edge between any two vertices (they are all equal for
    // the regular simplex; the maximum is used otherwise).
    double edge_length() const { return edge_; }

  private:
    int n_;
    double scale_;
    double edge_;
    std::vector<std::vector<double>> vertices_;
    std::vector<double> affine_inverse_;  // N x N row-major
};

// Membership margin of a traceless matrix in the scaled simplex, through the
// pinned algebra coordinates.  Units: barycentric.
double region_membership(const Mat& x, const SimplexRegion& region);

struct CoveringCertificate {
    std::string kind;
    int n_samples = 0;
    double worst_margin = 0.0;
    // Empirical Lipschitz rate of the margin: max |margin difference| per
    // unit distance over adjacent sample pairs.
    double lipschitz_slack = 0.0;
    double grid_resolution = 0.0;
    bool passed = false;
    // Per-sample index of the generator that realized the best margin.
    std::vector<int> witness_map;
    // Human-readable description of any failing sample (empty when passed).
    std::string failure_witness;
};

inline bool certificate_consistent(const CoveringCertificate& c) {
    return c.passed == (c.worst_margin > c.lipschitz_slack * c.grid_resolution);
}

// The d^2 generators exp(-t * r * v_j) of the algebraic covering method,
// where v_j are the vertices of the regular d^2-simplex embedded in the
// traceless algebra.  Returns the family together with its region exp-domain.
struct SimplexFamily {
    GeneratorFamily family;
    SimplexRegion region;
    double t;
    double r;
};
SimplexFamily build_simplex_generators(int d, double t, double r);

// Sweeps mat_exp of a barycentric grid over the closed region (boundary
// faces included) and certifies that some generator pulls every sample back
// strictly inside.  grid_per_axis is the number of subdivisions per
// barycentric axis.
CoveringCertificate verify_covering_group(const GeneratorFamily& family,
                                          const SimplexRegion& region,
                                          int grid_per_axis, int n_threads = 1);

struct TuneResult {
    double t = 0.0;
    double r = 0.0;
    CoveringCertificate certificate;
};

// Coarse-to-fine deterministic search maximizing the certified worst margin
// over (t, r).  Throws CoveringError when the ranges are empty or no
// positive-margin parameters exist in them.
TuneResult auto_tune_parameters(int d, double t_lo, double t_hi, double r_lo,
                                double r_hi, int grid_per_axis,
                                int n_threads = 1);

// Ball-shaped base domains; on the sphere the radius is geodesic and any
// radius >= pi means the whole sphere.
struct BallDomain {
    frame::Model model = frame::Model::euclidean;
    Vec center;
    double radius = 1.0;

    bool contains(const Vec& x) const { return margin(x) > 0.0; }
    // Positive inside, length units (euclidean distance / geodesic angle).
    double margin(const Vec& x) const;
};

// Frame windows: the region of the frame bundle a branch must stay inside.
//   SimplexWindow  - log of the frame lies in a simplex region, base free.
//   SizeWindow     - base in a ball, frame Frobenius size below a bound.
//   ProductWindow  - base in a ball and log-frame in a simplex region.
struct SimplexWindow {
    SimplexRegion region;
};
struct SizeWindow {
    BallDomain base;
    double size_bound = 0.0;
};
struct ProductWindow {
    BallDomain base;
    SimplexRegion region;
};
using FrameWindow = std::variant<SimplexWindow, SizeWindow, ProductWindow>;

// Dimensionless inner margin: positive iff the frame point is strictly
// inside the window.  Simplex margins are barycentric; size and base margins
// are normalized by their bounds so the min is comparable.
double window_margin(const FrameWindow& window, const FramePoint& w);

// sup of frame_size over the window closure (exact for size windows, a
// fixed-grid estimate for simplex windows).
double window_size_bound(const FrameWindow& window);

struct AnalyticWindow {
    double theta = 0.0;    // max normalized-derivative norm over samples
    double epsilon = 0.0;  // directional contraction margin
    double size_bound = 0.0;  // theta^4 / epsilon
    BallDomain base;
    int n_base_samples = 0;
    int n_direction_samples = 0;
};

// Checks that for every sampled (x, v) with x in closed V some family map
// keeps the base in V and contracts the directions orthogonal to v by at
// least epsilon, then returns the window bound theta^4 / epsilon.  Throws
// CoveringError carrying the witness (x, v) when a sample has no such map.
AnalyticWindow build_analytic_window(const GeneratorFamily& family,
                                     const BallDomain& v, double epsilon,
                                     int n_base_samples, int n_dir_samples,
                                     std::uint64_t seed, int n_threads = 1);

// Norm of the normalized derivative restricted to the orthocomplement of v
// inside the tangent space (zero when the manifold is one-dimensional).
double restricted_norm(const Mat& dhat, const Vec& v_tangent);

// Samples frame points from the window closure (boundary values included on
// a fixed sample stride) and certifies that some family map pushes each one
// strictly inside the window.
CoveringCertificate verify_covering_frames(const GeneratorFamily& family,
                                           const FrameWindow& window,
                                           int n_samples, std::uint64_t seed,
                                           int n_threads = 1);

}  // namespace qcb::covering
