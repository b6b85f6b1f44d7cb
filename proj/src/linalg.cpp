#include "qcb/linalg.hpp"

#include <algorithm>
#include <cmath>

namespace qcb::linalg {

namespace {

constexpr int kJacobiSweepCap = 100;
constexpr int kSqrtIterationCap = 60;

bool entry_finite(double x) { return std::isfinite(x); }

}  // namespace

void Vec::check_dim(int n) {
    if (n < 1 || n > kMaxDim) throw KernelError("vector dimension out of range");
}

Vec Vec::operator+(const Vec& o) const {
    Vec r(n_);
    for (int i = 0; i < n_; ++i) r[i] = (*this)[i] + o[i];
    return r;
}

Vec Vec::operator-(const Vec& o) const {
    Vec r(n_);
    for (int i = 0; i < n_; ++i) r[i] = (*this)[i] - o[i];
    return r;
}

Vec Vec::operator*(double c) const {
    Vec r(n_);
    for (int i = 0; i < n_; ++i) r[i] = (*this)[i] * c;
    return r;
}

Vec& Vec::operator+=(const Vec& o) {
    for (int i = 0; i < n_; ++i) (*this)[i] += o[i];
    return *this;
}

double Vec::dot(const Vec& o) const {
    double s = 0.0;
    for (int i = 0; i < n_; ++i) s += (*this)[i] * o[i];
    return s;
}

double Vec::norm() const { return std::sqrt(dot(*this)); }

bool Vec::finite() const {
    for (int i = 0; i < n_; ++i)
        if (!entry_finite((*this)[i])) return false;
    return true;
}

void Mat::check_dim(int n) {
    if (n < 1 || n > kMaxDim) throw KernelError("matrix dimension out of range");
}

Mat Mat::identity(int n) {
    Mat m(n);
    for (int i = 0; i < n; ++i) m.at(i, i) = 1.0;
    return m;
}

Mat Mat::diagonal(const Vec& d) {
    Mat m(d.dim());
    for (int i = 0; i < d.dim(); ++i) m.at(i, i) = d[i];
    return m;
}

Mat Mat::plane_rotation(int n, int i, int j, double theta) {
    Mat m = identity(n);
    const double c = std::cos(theta);
    const double s = std::sin(theta);
    m.at(i, i) = c;
    m.at(j, j) = c;
    m.at(i, j) = -s;
    m.at(j, i) = s;
    return m;
}

Mat Mat::operator+(const Mat& o) const {
    Mat r(n_);
    for (int i = 0; i < n_ * n_; ++i) r.a_[i] = a_[i] + o.a_[i];
    return r;
}

Mat Mat::operator-(const Mat& o) const {
    Mat r(n_);
    for (int i = 0; i < n_ * n_; ++i) r.a_[i] = a_[i] - o.a_[i];
    return r;
}

Mat Mat::operator*(const Mat& o) const {
    Mat r(n_);
    for (int i = 0; i < n_; ++i) {
        for (int k = 0; k < n_; ++k) {
            const double aik = at(i, k);
            if (aik == 0.0) continue;
            for (int j = 0; j < n_; ++j) r.at(i, j) += aik * o.at(k, j);
        }
    }
    return r;
}

Mat Mat::operator*(double c) const {
    Mat r(n_);
    for (int i = 0; i < n_ * n_; ++i) r.a_[i] = a_[i] * c;
    return r;
}

Vec Mat::operator*(const Vec& v) const {
    Vec r(n_);
    for (int i = 0; i < n_; ++i) {
        double s = 0.0;
        for (int j = 0; j < n_; ++j) s += at(i, j) * v[j];
        r[i] = s;
    }
    return r;
}

Mat Mat::transposed() const {
    Mat r(n_);
    for (int i = 0; i < n_; ++i)
        for (int j = 0; j < n_; ++j) r.at(j, i) = at(i, j);
    return r;
}

double Mat::trace() const {
    double s = 0.0;
    for (int i = 0; i < n_; ++i) s += at(i, i);
    return s;
}

bool Mat::finite() const {
    for (int i = 0; i < n_ * n_; ++i)
        if (!entry_finite(a_[i])) return false;
    return true;
}

Traceless::Traceless(const Mat& m) : m_(m) {
    const double bound = tol::traceless * (hs_norm(m) + 1.0);
    if (std::abs(m.trace()) > bound)
        throw KernelError("traceless invariant violated: |trace| = " +
                          std::to_string(std::abs(m.trace())));
}

double hs_norm(const Mat& m) {
    double s = 0.0;
    for (int i = 0; i < m.dim(); ++i)
        for (int j = 0; j < m.dim(); ++j) s += m.at(i, j) * m.at(i, j);
    return std::sqrt(s);
}

SvdResult svd(const Mat& m) {
    if (!m.finite()) throw KernelError("svd: non-finite input");
    const int n = m.dim();
    Mat w = m;                  // becomes U * diag(S)
    Mat v = Mat::identity(n);   // accumulates right rotations

    // Column-pair convergence test relative to the column norms, with a tiny
    // absolute floor so exactly-zero columns terminate.
    const double rel_eps = 1e-14;
    int sweep = 0;
    for (; sweep < kJacobiSweepCap; ++sweep) {
        bool rotated = false;
        for (int p = 0; p < n - 1; ++p) {
            for (int q = p + 1; q < n; ++q) {
                double alpha = 0.0, beta = 0.0, gamma = 0.0;
                for (int i = 0; i < n; ++i) {
                    alpha += w.at(i, p) * w.at(i, p);
                    beta += w.at(i, q) * w.at(i, q);
                    gamma += w.at(i, p) * w.at(i, q);
                }
                if (std::abs(gamma) <= rel_eps * std::sqrt(alpha * beta) ||
                    gamma == 0.0)
                    continue;
                rotated = true;
                const double zeta = (beta - alpha) / (2.0 * gamma);
                const double t = (zeta >= 0.0 ? 1.0 : -1.0) /
                                 (std::abs(zeta) + std::sqrt(1.0 + zeta * zeta));
                const double c = 1.0 / std::sqrt(1.0 + t * t);
                const double s = c * t;
                for (int i = 0; i < n; ++i) {
                    const double wp = w.at(i, p);
                    const double wq = w.at(i, q);
                    w.at(i, p) = c * wp - s * wq;
                    w.at(i, q) = s * wp + c * wq;
                    const double vp = v.at(i, p);
                    const double vq = v.at(i, q);
                    v.at(i, p) = c * vp - s * vq;
                    v.at(i, q) = s * vp + c * vq;
                }
            }
        }
        if (!rotated) break;
    }
    if (sweep == kJacobiSweepCap)
        throw IterationLimitError("svd: Jacobi sweep cap reached", sweep);

    SvdResult r{Mat(n), Vec(n), v, sweep + 1};
    // Column norms are the singular values; zero columns get a basis vector
    // orthogonal to the others (deterministic Gram-Schmidt over unit axes).
    std::array<int, kMaxDim> order{};
    for (int j = 0; j < n; ++j) {
        double nrm = 0.0;
        for (int i = 0; i < n; ++i) nrm += w.at(i, j) * w.at(i, j);
        r.s[j] = std::sqrt(nrm);
        order[static_cast<std::size_t>(j)] = j;
    }
    std::stable_sort(order.begin(), order.begin() + n,
                     [&](int a, int b) { return r.s[a] > r.s[b]; });

    Mat u(n);
    Vec s_sorted(n);
    Mat v_sorted(n);
    for (int jj = 0; jj < n; ++jj) {
        const int j = order[static_cast<std::size_t>(jj)];
        s_sorted[jj] = r.s[j];
        for (int i = 0; i < n; ++i) v_sorted.at(i, jj) = r.v.at(i, j);
        if (r.s[j] > 0.0) {
            for (int i = 0; i < n; ++i) u.at(i, jj) = w.at(i, j) / r.s[j];
        }
    }
    // Complete any zero columns of U.
    for (int jj = 0; jj < n; ++jj) {
        if (s_sorted[jj] > 0.0) continue;
        for (int axis = 0; axis < n; ++axis) {
            Vec cand = Vec::unit(n, axis);
            for (int k = 0; k < n; ++k) {
                if (k == jj) continue;
                double proj = 0.0;
                for (int i = 0; i < n; ++i) proj += u.at(i, k) * cand[i];
                for (int i = 0; i < n; ++i) cand[i] -= proj * u.at(i, k);
            }
            const double nrm = cand.norm();
            if (nrm > 0.5) {
                for (int i = 0; i < n; ++i) u.at(i, jj) = cand[i] / nrm;
                break;
            }
        }
    }
    r.u = u;
    r.s = s_sorted;
    r.v = v_sorted;
    return r;
}

double operator_norm(const Mat& m) { return svd(m).s[0]; }

double co_norm(const Mat& m) { return svd(m).s[m.dim() - 1]; }

double conformality(const Mat& m) {
    const SvdResult d = svd(m);
    const double smin = d.s[m.dim() - 1];
    if (smin <= tol::near_singular_floor)
        throw NearSingularError(
            "conformality: smallest singular value " + std::to_string(smin) +
                " at or below floor 1e-30",
            smin);
    return d.s[0] / smin;
}

namespace {

// LU with partial pivoting; returns false on (numerically) singular input.
struct Lu {
    Mat lu;
    std::array<int, kMaxDim> perm;
    int sign;
    bool ok;
};

Lu lu_factor(const Mat& m) {
    const int n = m.dim();
    Lu f{m, {}, 1, true};
    for (int i = 0; i < n; ++i) f.perm[static_cast<std::size_t>(i)] = i;
    for (int col = 0; col < n; ++col) {
        int pivot = col;
        double best = std::abs(f.lu.at(col, col));
        for (int i = col + 1; i < n; ++i) {
            const double a = std::abs(f.lu.at(i, col));
            if (a > best) {
                best = a;
                pivot = i;
            }
        }
        if (best == 0.0) {
            f.ok = false;
            return f;
        }
        if (pivot != col) {
            for (int j = 0; j < n; ++j)
                std::swap(f.lu.at(col, j), f.lu.at(pivot, j));
            std::swap(f.perm[static_cast<std::size_t>(col)],
                      f.perm[static_cast<std::size_t>(pivot)]);
            f.sign = -f.sign;
        }
        for (int i = col + 1; i < n; ++i) {
            const double factor = f.lu.at(i, col) / f.lu.at(col, col);
            f.lu.at(i, col) = factor;
            for (int j = col + 1; j < n; ++j)
                f.lu.at(i, j) -= factor * f.lu.at(col, j);
        }
    }
    return f;
}

Vec lu_solve(const Lu& f, const Vec& rhs) {
    const int n = rhs.dim();
    Vec x(n);
    for (int i = 0; i < n; ++i) x[i] = rhs[f.perm[static_cast<std::size_t>(i)]];
    for (int i = 1; i < n; ++i)
        for (int j = 0; j < i; ++j) x[i] -= f.lu.at(i, j) * x[j];
    for (int i = n - 1; i >= 0; --i) {
        for (int j = i + 1; j < n; ++j) x[i] -= f.lu.at(i, j) * x[j];
        x[i] /= f.lu.at(i, i);
    }
    return x;
}

}  // namespace

double determinant(const Mat& m) {
    if (!m.finite()) throw KernelError("determinant: non-finite input");
    const Lu f = lu_factor(m);
    if (!f.ok) return 0.0;
    double det = static_cast<double>(f.sign);
    for (int i = 0; i < m.dim(); ++i) det *= f.lu.at(i, i);
    return det;
}

Mat inverse(const Mat& m) {
    const Lu f = lu_factor(m);
    if (!f.ok) throw KernelError("inverse: singular matrix");
    const int n = m.dim();
    Mat inv(n);
    for (int j = 0; j < n; ++j) {
        const Vec col = lu_solve(f, Vec::unit(n, j));
        for (int i = 0; i < n; ++i) inv.at(i, j) = col[i];
    }
    return inv;
}

Vec solve(const Mat& m, const Vec& rhs) {
    const Lu f = lu_factor(m);
    if (!f.ok) throw KernelError("solve: singular matrix");
    return lu_solve(f, rhs);
}

Mat mat_exp_general(const Mat& x) {
    if (!x.finite()) throw KernelError("mat_exp: non-finite input");
    const int n = x.dim();
    // Scale so the Taylor core sees norm <= 0.5; remainder after 18 terms is
    // below 1e-22 there.
    const double nrm = hs_norm(x);
    int squarings = 0;
    double scale = 1.0;
    while (nrm * scale > 0.5 && squarings < 64) {
        scale *= 0.5;
        ++squarings;
    }
    const Mat xs = x * scale;
    Mat term = Mat::identity(n);
    Mat sum = term;
    for (int k = 1; k <= 18; ++k) {
        term = term * xs * (1.0 / k);
        sum = sum + term;
    }
    for (int k = 0; k < squarings; ++k) sum = sum * sum;
    return sum;
}

Mat mat_exp(const Traceless& x) { return mat_exp_general(x.mat()); }

namespace {

// Denman-Beavers principal square root.
Mat db_sqrt(const Mat& a) {
    Mat y = a;
    Mat z = Mat::identity(a.dim());
    for (int it = 0; it < kSqrtIterationCap; ++it) {
        const Mat yn = (y + inverse(z)) * 0.5;
        const Mat zn = (z + inverse(y)) * 0.5;
        const double step = hs_norm(yn - y);
        y = yn;
        z = zn;
        if (step <= 1e-15 * (hs_norm(y) + 1.0)) return y;
    }
    throw IterationLimitError("mat_log: Denman-Beavers square root stalled",
                              kSqrtIterationCap);
}

}  // namespace

Traceless mat_log(const Mat& a) {
    if (!a.finite()) throw KernelError("mat_log: non-finite input");
    // Renormalize so the principal log is traceless (log|det| = 0).
    Mat b = normalized(a);
    const int n = b.dim();
    const Mat id = Mat::identity(n);

    int halvings = 0;
    bool checked_radius = false;
    while (hs_norm(b - id) > 0.25) {
        if (halvings >= 40)
            throw IterationLimitError("mat_log: square-root stage stalled",
                                      halvings);
        b = db_sqrt(b);
        ++halvings;
        if (!checked_radius) {
            // Operator norm bounds the spectral radius from above, so this
            // check can only over-reject.
            checked_radius = true;
            if (operator_norm(b - id) > tol::log_spectral_radius)
                throw KernelError(
                    "mat_log: spectral radius of sqrt(A) - I exceeds "
                    "threshold 0.9; input is outside the principal-log "
                    "domain handled here");
        }
    }

    // Mercator series for log(I + E), ||E|| <= 0.25.
    const Mat e = b - id;
    Mat power = e;
    Mat sum(n);
    for (int k = 1; k <= 40; ++k) {
        const double coeff = (k % 2 == 1 ? 1.0 : -1.0) / k;
        sum = sum + power * coeff;
        power = power * e;
    }
    Mat result = sum * std::pow(2.0, halvings);
    // The series trace drifts at roundoff level only; recenter so downstream
    // Traceless construction never trips on accumulated 1e-15s.
    const double tr = result.trace();
    for (int i = 0; i < n; ++i) result.at(i, i) -= tr / n;
    return Traceless(result);
}

Mat normalized(const Mat& m) {
    const double det = determinant(m);
    if (det == 0.0 || !std::isfinite(det))
        throw KernelError("normalized: zero or non-finite determinant");
    const double factor = std::pow(std::abs(det), -1.0 / m.dim());
    return m * factor;
}

}  // namespace qcb::linalg
