#pragma once

#include <map>
#include <memory>
#include <string>
#include <vector>

#include "qcb/frame.hpp"
#include "qcb/linalg.hpp"

namespace qcb::maps {

using frame::Model;
using linalg::Mat;
using linalg::Vec;

// Coefficients of one smooth perturbation term: per output component i a
// symmetric matrix Q_i giving the homogeneous quadratic x^T Q_i x, multiplied
// by a C-infinity radial cutoff supported in |x| < support_radius.
struct QuadBumpData {
    std::vector<Mat> quad;  // one symmetric matrix per component
    double support_radius = 2.0;
};

// Closed union of the map kinds the experiments use.  Affine and quad-bump
// maps act on R^d; rotations act on either model; projective maps act on S^d
// by x -> Ax/|Ax|.  Composition applies parts front to back.
class LocalMap {
  public:
    enum class Kind { affine, rotation, sphere_projective, quad_bump, composed };

    static LocalMap affine(const Mat& linear, const Vec& offset);
    static LocalMap rotation(const Mat& ortho, Model model);
    static LocalMap sphere_projective(const Mat& matrix);
    static LocalMap quad_bump(const Mat& linear, const Vec& offset,
                              std::shared_ptr<const QuadBumpData> data);
    static LocalMap composed(std::vector<LocalMap> parts);

    Kind kind() const { return kind_; }
    Model model() const { return model_; }
    // Dimension of the manifold the map acts on.
    int manifold_dim() const;

    const Mat& matrix() const { return a_; }
    const Vec& offset() const { return b_; }
    const std::vector<LocalMap>& parts() const { return parts_; }

    Vec apply(const Vec& x) const;
    // d x d derivative in the canonical tangent bases at x and f(x).
    Mat tangent_derivative(const Vec& x) const;
    Mat normalized_tangent_derivative(const Vec& x) const;

  private:
    LocalMap() = default;

    Kind kind_ = Kind::affine;
    Model model_ = Model::euclidean;
    Mat a_;
    Vec b_;
    std::shared_ptr<const QuadBumpData> bump_;
    std::vector<LocalMap> parts_;
};

// An ordered, labeled family of maps.  Order is part of the identity: indices
// appear in branches, certificates and serialized output.
struct GeneratorFamily {
    std::vector<LocalMap> maps;
    std::vector<std::string> labels;
    std::map<std::string, double> metadata;

    int size() const { return static_cast<int>(maps.size()); }
};

// Deterministic direction sets for probing spheres and balls: exact uniform
// angles in dimension 2, a Fibonacci sphere in dimension 3, seeded uniform
// directions above that.
std::vector<Vec> direction_set(int dim, int count, std::uint64_t seed);

// Seeded orthogonal matrix with det +1 (QR of a Gaussian draw, signs fixed).
Mat random_rotation(int dim, std::uint64_t seed);

}  // namespace qcb::maps
