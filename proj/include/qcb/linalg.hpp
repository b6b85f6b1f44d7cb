#pragma once

#include <array>
#include <cstddef>
#include <stdexcept>
#include <string>

namespace qcb::linalg {

// Every matrix in the pipeline is a small dense square: ambient dimensions
// run 2..5 and sphere actions add one row/column.  Fixed inline storage keeps
// the hot loops (branch steps, scan nodes) allocation-free.
inline constexpr int kMaxDim = 6;

class KernelError : public std::runtime_error {
  public:
    explicit KernelError(const std::string& what) : std::runtime_error(what) {}
};

// Raised when an iterative kernel hits its sweep cap; carries the count so
// callers can report how far it got.
class IterationLimitError : public KernelError {
  public:
    IterationLimitError(const std::string& what, int iterations)
        : KernelError(what), iterations(iterations) {}
    int iterations;
};

// Raised by conformality() when the smallest singular value is below the
// representable floor; carries the offending value.
class NearSingularError : public KernelError {
  public:
    NearSingularError(const std::string& what, double smallest_singular_value)
        : KernelError(what), smallest_singular_value(smallest_singular_value) {}
    double smallest_singular_value;
};

class Vec {
  public:
    Vec() : n_(0), a_{} {}
    explicit Vec(int n) : n_(n), a_{} { check_dim(n); }

    static Vec unit(int n, int axis) {
        Vec v(n);
        v[axis] = 1.0;
        return v;
    }

    int dim() const { return n_; }
    double& operator[](int i) { return a_[static_cast<std::size_t>(i)]; }
    double operator[](int i) const { return a_[static_cast<std::size_t>(i)]; }

    Vec operator+(const Vec& o) const;
    Vec operator-(const Vec& o) const;
    Vec operator*(double c) const;
    Vec& operator+=(const Vec& o);

    double dot(const Vec& o) const;
    double norm() const;
    // All entries finite (rejects NaN/inf).
    bool finite() const;

  private:
    static void check_dim(int n);
    int n_;
    std::array<double, kMaxDim> a_;
};

// Row-major square matrix of dimension 2..kMaxDim.
class Mat {
  public:
    Mat() : n_(0), a_{} {}
    explicit Mat(int n) : n_(n), a_{} { check_dim(n); }

    static Mat identity(int n);
    static Mat diagonal(const Vec& d);
    // Plane rotation by angle theta acting on coordinates (i, j).
    static Mat plane_rotation(int n, int i, int j, double theta);

    int dim() const { return n_; }
    double& at(int i, int j) { return a_[static_cast<std::size_t>(i * n_ + j)]; }
    double at(int i, int j) const { return a_[static_cast<std::size_t>(i * n_ + j)]; }

    Mat operator+(const Mat& o) const;
    Mat operator-(const Mat& o) const;
    Mat operator*(const Mat& o) const;
    Mat operator*(double c) const;
    Vec operator*(const Vec& v) const;
    Mat transposed() const;

    double trace() const;
    bool finite() const;

  private:
    static void check_dim(int n);
    int n_;
    std::array<double, kMaxDim * kMaxDim> a_;
};

inline Mat operator*(double c, const Mat& m) { return m * c; }
inline Vec operator*(double c, const Vec& v) { return v * c; }

// Traceless matrices tag Lie-algebra elements; construction enforces
// |trace| <= 1e-12 * (hs_norm + 1).
class Traceless {
  public:
    explicit Traceless(const Mat& m);
    const Mat& mat() const { return m_; }

  private:
    Mat m_;
};

struct SvdResult {
    Mat u;   // orthogonal
    Vec s;   // singular values, descending, nonnegative
    Mat v;   // orthogonal; input = u * diag(s) * v^T
    int sweeps;
};

// One-sided cyclic Jacobi.  Unconditionally stable at these dimensions; the
// sweep order is fixed so results are bit-reproducible.  Throws
// IterationLimitError after 100 sweeps without convergence.
SvdResult svd(const Mat& m);

double hs_norm(const Mat& m);        // Frobenius
double operator_norm(const Mat& m);  // largest singular value
double co_norm(const Mat& m);        // smallest singular value

// kappa(M) = operator_norm * norm of inverse = s_max / s_min.
// Throws NearSingularError when s_min <= 1e-30.
double conformality(const Mat& m);

double determinant(const Mat& m);  // LU with partial pivoting
Mat inverse(const Mat& m);         // throws KernelError on singular input

// Solves m * x = rhs via the same LU factorization.
Vec solve(const Mat& m, const Vec& rhs);

// Scaling-and-squaring exponential (Taylor core after 2^-k scaling).  For
// traceless input the determinant of the result is 1 within 1e-10.
Mat mat_exp(const Traceless& x);
Mat mat_exp_general(const Mat& x);

// Principal logarithm by inverse scaling and squaring: Denman-Beavers square
// roots until the iterate is close to I, then a Mercator series.  The input
// is renormalized to |det| = 1 first, so the result is genuinely traceless.
// Throws KernelError naming the spectral-radius threshold (default 0.9) when
// the first square root fails to bring A - I under it, and
// IterationLimitError if the square-root stage stalls.
Traceless mat_log(const Mat& a);

// |det M|^(-1/d) * M: determinant becomes +-1.  Throws on zero determinant.
Mat normalized(const Mat& m);

// Named tolerances.  Tests pin the defaults; experiment configs may widen
// them explicitly.
namespace tol {
inline constexpr double svd_residual = 1e-10;        // scaled by (hs + 1)
inline constexpr double special_linear = 1e-8;       // |det - 1| for SL tags
inline constexpr double traceless = 1e-12;           // scaled by (hs + 1)
inline constexpr double exp_det = 1e-10;             // |det(exp X) - 1|
inline constexpr double log_roundtrip = 1e-8;        // ||log(exp X) - X||
inline constexpr double near_singular_floor = 1e-30;
inline constexpr double log_spectral_radius = 0.9;   // after square-rooting
}  // namespace tol

}  // namespace qcb::linalg
