#pragma once

#include <string>

#include "qcb/linalg.hpp"

namespace qcb::maps {
class LocalMap;
}

namespace qcb::frame {

using linalg::Mat;
using linalg::Vec;

enum class Model { euclidean, sphere };

// A point of the base manifold: R^d carries d coordinates, S^d lives in
// R^(d+1) with unit-norm coordinates.
struct AmbientPoint {
    Model model = Model::euclidean;
    Vec coords;

    int manifold_dim() const {
        return model == Model::euclidean ? coords.dim() : coords.dim() - 1;
    }
};

// A frame over a base point.  The frame is stored as a d x d coefficient
// matrix in the canonical tangent basis at the base, so pushing a frame
// forward is a plain matrix product; |det frame| = 1 within 1e-8.
struct FramePoint {
    AmbientPoint base;
    Mat frame;
};

// Frobenius size of the frame coefficient matrix.  An orthonormal frame in
// dimension d has size sqrt(d).
double frame_size(const FramePoint& w);

// Throws linalg::KernelError when the unimodular-frame or unit-base
// invariants fail.
void validate(const FramePoint& w);

namespace tol {
inline constexpr double frame_det = 1e-8;
inline constexpr double sphere_unit = 1e-10;
inline constexpr double basis_orthonormal = 1e-12;
inline constexpr double antipodal = 1e-12;
inline constexpr double push_chain = 1e-8;
}  // namespace tol

// Canonical tangent basis at unit x in S^d, as the (d+1) x (d+1) Householder
// reflection sending e_{d+1} to x; the basis vectors are its first d columns.
// At x = e_{d+1} exactly it degenerates to the identity, so the basis is
// exactly e_1..e_d there.  Within 1e-12 of the antipode the reflection
// sending -e_{d+1} to x is used instead with the first basis vector negated;
// this keeps the formula stable on the whole sphere and is a documented gauge
// choice, not a geometric invariant.
Mat tangent_basis_householder(const Vec& x);

// Coordinates of an ambient tangent vector in the canonical basis at x, and
// back.  These are the only two places the gauge enters.
Vec ambient_to_tangent(const Vec& x, const Vec& ambient);
Vec tangent_to_ambient(const Vec& x, const Vec& tangent_coords);

// Transports a frame along a map: new base = f(base), new frame coefficients
// = normalized tangent derivative times old coefficients.
FramePoint push_frame(const maps::LocalMap& f, const FramePoint& w);

// {"model": ..., "base": [...], "frame": [[...]]} with round-trip precision.
std::string to_json(const FramePoint& w);
FramePoint frame_point_from_json(const std::string& text);

}  // namespace qcb::frame
