#include "qcb/maps.hpp"

#include <cmath>

#include "qcb/rng.hpp"

namespace qcb::maps {

using frame::ambient_to_tangent;
using frame::tangent_basis_householder;

LocalMap LocalMap::affine(const Mat& linear, const Vec& offset) {
    LocalMap m;
    m.kind_ = Kind::affine;
    m.model_ = Model::euclidean;
    m.a_ = linear;
    m.b_ = offset;
    return m;
}

LocalMap LocalMap::rotation(const Mat& ortho, Model model) {
    LocalMap m;
    m.kind_ = Kind::rotation;
    m.model_ = model;
    m.a_ = ortho;
    return m;
}

LocalMap LocalMap::sphere_projective(const Mat& matrix) {
    LocalMap m;
    m.kind_ = Kind::sphere_projective;
    m.model_ = Model::sphere;
    m.a_ = matrix;
    return m;
}

LocalMap LocalMap::quad_bump(const Mat& linear, const Vec& offset,
                             std::shared_ptr<const QuadBumpData> data) {
    LocalMap m;
    m.kind_ = Kind::quad_bump;
    m.model_ = Model::euclidean;
    m.a_ = linear;
    m.b_ = offset;
    m.bump_ = std::move(data);
    return m;
}

LocalMap LocalMap::composed(std::vector<LocalMap> parts) {
    if (parts.empty())
        throw linalg::KernelError("composed map: empty part list");
    LocalMap m;
    m.kind_ = Kind::composed;
    m.model_ = parts.front().model();
    m.parts_ = std::move(parts);
    return m;
}

int LocalMap::manifold_dim() const {
    switch (kind_) {
        case Kind::affine:
        case Kind::quad_bump:
            return a_.dim();
        case Kind::rotation:
            return model_ == Model::euclidean ? a_.dim() : a_.dim() - 1;
        case Kind::sphere_projective:
            return a_.dim() - 1;
        case Kind::composed:
            return parts_.front().manifold_dim();
    }
    return 0;
}

namespace {

// Smooth cutoff in s = (|x| / radius)^2: exp(1 - 1/(1 - s)) inside, 0 outside.
double cutoff(double s) {
    if (s >= 1.0) return 0.0;
    return std::exp(1.0 - 1.0 / (1.0 - s));
}

double cutoff_ds(double s) {
    if (s >= 1.0) return 0.0;
    const double inv = 1.0 / (1.0 - s);
    return -cutoff(s) * inv * inv;
}

Vec bump_value(const QuadBumpData& bump, const Vec& x) {
    const int d = x.dim();
    const double s = x.dot(x) / (bump.support_radius * bump.support_radius);
    const double chi = cutoff(s);
    Vec q(d);
    if (chi == 0.0) return q;
    for (int i = 0; i < d; ++i) q[i] = chi * x.dot(bump.quad[static_cast<std::size_t>(i)] * x);
    return q;
}

Mat bump_jacobian(const QuadBumpData& bump, const Vec& x) {
    const int d = x.dim();
    const double r2 = bump.support_radius * bump.support_radius;
    const double s = x.dot(x) / r2;
    Mat jac(d);
    const double chi = cutoff(s);
    if (chi == 0.0 && cutoff_ds(s) == 0.0) return jac;
    const double dchi = cutoff_ds(s);
    for (int i = 0; i < d; ++i) {
        const Vec qx = bump.quad[static_cast<std::size_t>(i)] * x;
        const double qi = x.dot(qx);
        for (int j = 0; j < d; ++j)
            jac.at(i, j) = dchi * (2.0 * x[j] / r2) * qi + chi * 2.0 * qx[j];
    }
    return jac;
}

}  // namespace

Vec LocalMap::apply(const Vec& x) const {
    switch (kind_) {
        case Kind::affine:
            return a_ * x + b_;
        case Kind::quad_bump:
            return a_ * x + b_ + bump_value(*bump_, x);
        case Kind::rotation:
            return a_ * x;  // linear on R^d, orthogonal action on S^d
        case Kind::sphere_projective: {
            const Vec y = a_ * x;
            const double nrm = y.norm();
            if (nrm == 0.0)
                throw linalg::KernelError("projective map: Ax vanished");
            return y * (1.0 / nrm);
        }
        case Kind::composed: {
            Vec y = x;
            for (const auto& part : parts_) y = part.apply(y);
            return y;
        }
    }
    throw linalg::KernelError("unreachable map kind");
}

Mat LocalMap::tangent_derivative(const Vec& x) const {
    switch (kind_) {
        case Kind::affine:
            return a_;
        case Kind::quad_bump:
            return a_ + bump_jacobian(*bump_, x);
        case Kind::rotation: {
            if (model_ == Model::euclidean) return a_;
            // Orthogonal ambient action; conjugate into tangent coordinates.
            const Vec fx = a_ * x;
            const Mat hx = tangent_basis_householder(x);
            const Mat hf = tangent_basis_householder(fx);
            const int d = x.dim() - 1;
            Mat out(d);
            for (int j = 0; j < d; ++j) {
                Vec col(x.dim());
                for (int i = 0; i < x.dim(); ++i) col[i] = hx.at(i, j);
                const Vec img = a_ * col;
                for (int i = 0; i < d; ++i) {
                    double s = 0.0;
                    for (int k = 0; k < x.dim(); ++k) s += hf.at(k, i) * img[k];
                    out.at(i, j) = s;
                }
            }
            return out;
        }
        case Kind::sphere_projective: {
            // D_x f (v) = P_{f(x)} (A v) / |Ax| with P_y = I - y y^T.
            const Vec ax = a_ * x;
            const double nrm = ax.norm();
            if (nrm == 0.0)
                throw linalg::KernelError("projective map: Ax vanished");
            const Vec fx = ax * (1.0 / nrm);
            const Mat hx = tangent_basis_householder(x);
            const Mat hf = tangent_basis_householder(fx);
            const int d = x.dim() - 1;
            Mat out(d);
            for (int j = 0; j < d; ++j) {
                Vec col(x.dim());
                for (int i = 0; i < x.dim(); ++i) col[i] = hx.at(i, j);
                Vec img = a_ * col;
                const double along = img.dot(fx);
                img = (img - fx * along) * (1.0 / nrm);
                for (int i = 0; i < d; ++i) {
                    double s = 0.0;
                    for (int k = 0; k < x.dim(); ++k) s += hf.at(k, i) * img[k];
                    out.at(i, j) = s;
                }
            }
            return out;
        }
        case Kind::composed: {
            Vec y = x;
            Mat acc = Mat::identity(manifold_dim());
            for (const auto& part : parts_) {
                acc = part.tangent_derivative(y) * acc;
                y = part.apply(y);
            }
            return acc;
        }
    }
    throw linalg::KernelError("unreachable map kind");
}

Mat LocalMap::normalized_tangent_derivative(const Vec& x) const {
    return linalg::normalized(tangent_derivative(x));
}

std::vector<Vec> direction_set(int dim, int count, std::uint64_t seed) {
    std::vector<Vec> dirs;
    dirs.reserve(static_cast<std::size_t>(count));
    if (dim == 1) {
        Vec plus(1), minus(1);
        plus[0] = 1.0;
        minus[0] = -1.0;
        for (int i = 0; i < count; ++i) dirs.push_back(i % 2 == 0 ? plus : minus);
        return dirs;
    }
    if (dim == 2) {
        const double two_pi = 6.283185307179586476925286766559;
        for (int i = 0; i < count; ++i) {
            Vec v(2);
            const double a = two_pi * i / count;
            v[0] = std::cos(a);
            v[1] = std::sin(a);
            dirs.push_back(v);
        }
        return dirs;
    }
    if (dim == 3) {
        // Fibonacci sphere.
        const double golden = (1.0 + std::sqrt(5.0)) / 2.0;
        const double two_pi = 6.283185307179586476925286766559;
        for (int i = 0; i < count; ++i) {
            const double z = 1.0 - (2.0 * i + 1.0) / count;
            const double r = std::sqrt(std::max(0.0, 1.0 - z * z));
            const double phi = two_pi * std::fmod(i / golden, 1.0);
            Vec v(3);
            v[0] = r * std::cos(phi);
            v[1] = r * std::sin(phi);
            v[2] = z;
            dirs.push_back(v);
        }
        return dirs;
    }
    Rng rng(child_seed(seed, 0x6469726563ull));
    for (int i = 0; i < count; ++i) {
        Vec v(dim);
        double nrm = 0.0;
        while (nrm < 1e-6) {
            for (int k = 0; k < dim; ++k) v[k] = rng.normal();
            nrm = v.norm();
        }
        dirs.push_back(v * (1.0 / nrm));
    }
    return dirs;
}

Mat random_rotation(int dim, std::uint64_t seed) {
    Rng rng(seed);
    Mat g(dim);
    for (int i = 0; i < dim; ++i)
        for (int j = 0; j < dim; ++j) g.at(i, j) = rng.normal();
    // Gram-Schmidt on columns with positive-diagonal sign fix.
    for (int j = 0; j < dim; ++j) {
        for (int k = 0; k < j; ++k) {
            double proj = 0.0;
            for (int i = 0; i < dim; ++i) proj += g.at(i, k) * g.at(i, j);
            for (int i = 0; i < dim; ++i) g.at(i, j) -= proj * g.at(i, k);
        }
        double nrm = 0.0;
        for (int i = 0; i < dim; ++i) nrm += g.at(i, j) * g.at(i, j);
        nrm = std::sqrt(nrm);
        if (nrm < 1e-12)
            throw linalg::KernelError("random_rotation: degenerate draw");
        const double sign = g.at(j, j) >= 0.0 ? 1.0 : -1.0;
        for (int i = 0; i < dim; ++i) g.at(i, j) *= sign / nrm;
    }
    if (linalg::determinant(g) < 0.0) {
        for (int i = 0; i < dim; ++i) g.at(i, dim - 1) = -g.at(i, dim - 1);
    }
    return g;
}

}  // namespace qcb::maps
