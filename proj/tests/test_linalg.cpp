#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "qcb/linalg.hpp"
#include "qcb/rng.hpp"

using namespace qcb;
using namespace qcb::linalg;

namespace {

Mat gaussian(Rng& rng, int n) {
    Mat m(n);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) m.at(i, j) = rng.normal();
    return m;
}

double reconstruction_residual(const Mat& m) {
    const SvdResult d = svd(m);
    const Mat rebuilt = d.u * Mat::diagonal(d.s) * d.v.transposed();
    return hs_norm(rebuilt - m);
}

double orthogonality_defect(const Mat& q) {
    return hs_norm(q.transposed() * q - Mat::identity(q.dim()));
}

}  // namespace

TEST_CASE("svd of the identity is trivial") {
    const SvdResult d = svd(Mat::identity(3));
    for (int i = 0; i < 3; ++i) CHECK(d.s[i] == doctest::Approx(1.0));
    CHECK(reconstruction_residual(Mat::identity(3)) < 1e-14);
}

TEST_CASE("svd on a fixed seeded matrix reconstructs tightly") {
    Rng rng(42);
    const Mat m = gaussian(rng, 3);
    CHECK(reconstruction_residual(m) < tol::svd_residual * (hs_norm(m) + 1.0));
    const SvdResult d = svd(m);
    CHECK(orthogonality_defect(d.u) < 1e-10);
    CHECK(orthogonality_defect(d.v) < 1e-10);
    CHECK(d.s[0] >= d.s[1]);
    CHECK(d.s[1] >= d.s[2]);
}

TEST_CASE("svd handles rank deficiency with an orthogonal U") {
    Mat m(3);  // rank 1
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) m.at(i, j) = (i + 1.0) * (j + 1.0);
    const SvdResult d = svd(m);
    CHECK(d.s[1] < 1e-12);
    CHECK(d.s[2] < 1e-12);
    CHECK(orthogonality_defect(d.u) < 1e-10);
    CHECK(reconstruction_residual(m) < tol::svd_residual * (hs_norm(m) + 1.0));
}

TEST_CASE("svd reconstruction over many seeds and dimensions") {
    // Residual invariant at volume: every draw must satisfy the pinned bound.
    for (int dim = 2; dim <= 5; ++dim) {
        for (std::uint64_t seed = 0; seed < 2500; ++seed) {
            Rng rng(child_seed(1001, seed * 8 + dim));
            const Mat m = gaussian(rng, dim);
            const double bound = tol::svd_residual * (hs_norm(m) + 1.0);
            CAPTURE(dim);
            CAPTURE(seed);
            REQUIRE(reconstruction_residual(m) < bound);
        }
    }
}

TEST_CASE("norm scale: operator <= hs <= sqrt(d) * operator") {
    for (std::uint64_t seed = 0; seed < 500; ++seed) {
        Rng rng(child_seed(1002, seed));
        const int dim = 2 + static_cast<int>(rng.below(4));
        const Mat m = gaussian(rng, dim);
        const double op = operator_norm(m);
        const double hs = hs_norm(m);
        CHECK(op <= hs * (1.0 + 1e-12));
        CHECK(hs <= std::sqrt(static_cast<double>(dim)) * op * (1.0 + 1e-12));
    }
}

TEST_CASE("unimodular matrices are norm^d conformal") {
    for (std::uint64_t seed = 0; seed < 500; ++seed) {
        Rng rng(child_seed(1003, seed));
        const int dim = 2 + static_cast<int>(rng.below(4));
        const Mat m = normalized(gaussian(rng, dim));
        const double op = operator_norm(m);
        CHECK(conformality(m) <=
              std::pow(op, static_cast<double>(dim)) * (1.0 + 1e-10));
    }
}

TEST_CASE("conformality is submultiplicative and inverse-invariant") {
    for (std::uint64_t seed = 0; seed < 300; ++seed) {
        Rng rng(child_seed(1004, seed));
        const int dim = 2 + static_cast<int>(rng.below(3));
        const Mat a = gaussian(rng, dim);
        const Mat b = gaussian(rng, dim);
        if (std::abs(determinant(a)) < 1e-6 || std::abs(determinant(b)) < 1e-6)
            continue;
        CHECK(conformality(a * b) <=
              conformality(a) * conformality(b) * (1.0 + 1e-9));
        CHECK(conformality(inverse(a)) ==
              doctest::Approx(conformality(a)).epsilon(1e-9));
    }
}

TEST_CASE("conformality rejects near-singular input with the value attached") {
    Mat m = Mat::identity(2);
    m.at(1, 1) = 0.0;
    CHECK_THROWS_AS(conformality(m), NearSingularError);
    try {
        conformality(m);
    } catch (const NearSingularError& e) {
        CHECK(e.smallest_singular_value <= tol::near_singular_floor);
    }
}

TEST_CASE("determinant and inverse agree with closed forms") {
    Mat m(2);
    m.at(0, 0) = 3.0;
    m.at(0, 1) = 1.0;
    m.at(1, 0) = 2.0;
    m.at(1, 1) = 5.0;
    CHECK(determinant(m) == doctest::Approx(13.0));
    const Mat inv = inverse(m);
    CHECK(hs_norm(m * inv - Mat::identity(2)) < 1e-14);

    for (std::uint64_t seed = 0; seed < 200; ++seed) {
        Rng rng(child_seed(1005, seed));
        const Mat a = gaussian(rng, 4);
        const Mat b = gaussian(rng, 4);
        CHECK(determinant(a * b) ==
              doctest::Approx(determinant(a) * determinant(b)).epsilon(1e-8));
    }
}

TEST_CASE("mat_exp of zero and of a diagonal matrix") {
    CHECK(hs_norm(mat_exp(Traceless(Mat(3))) - Mat::identity(3)) < 1e-15);

    Vec d(2);
    d[0] = 0.7;
    d[1] = -0.7;
    const Mat e = mat_exp(Traceless(Mat::diagonal(d)));
    CHECK(e.at(0, 0) == doctest::Approx(std::exp(0.7)).epsilon(1e-12));
    CHECK(e.at(1, 1) == doctest::Approx(std::exp(-0.7)).epsilon(1e-12));
    CHECK(std::abs(e.at(0, 1)) < 1e-15);
}

TEST_CASE("exp of traceless input lands on the unimodular group") {
    for (std::uint64_t seed = 0; seed < 500; ++seed) {
        Rng rng(child_seed(1006, seed));
        const int dim = 2 + static_cast<int>(rng.below(4));
        Mat x = gaussian(rng, dim);
        const double tr = x.trace();
        for (int i = 0; i < dim; ++i) x.at(i, i) -= tr / dim;
        const Mat e = mat_exp(Traceless(x));
        CHECK(std::abs(determinant(e) - 1.0) < tol::exp_det * (1.0 + hs_norm(e)));
    }
}

TEST_CASE("log inverts exp within the pinned round-trip tolerance") {
    for (std::uint64_t seed = 0; seed < 500; ++seed) {
        Rng rng(child_seed(1007, seed));
        const int dim = 2 + static_cast<int>(rng.below(4));
        Mat x = gaussian(rng, dim);
        const double tr = x.trace();
        for (int i = 0; i < dim; ++i) x.at(i, i) -= tr / dim;
        const double nrm = hs_norm(x);
        if (nrm > 1.0) x = x * (rng.uniform(0.05, 1.0) / nrm);
        const Mat round = mat_log(mat_exp(Traceless(x))).mat();
        CAPTURE(seed);
        REQUIRE(hs_norm(round - x) < tol::log_roundtrip);
    }
}

TEST_CASE("mat_log rejects inputs far outside the principal domain") {
    Vec d(2);
    d[0] = -4.0;
    d[1] = -0.25;
    CHECK_THROWS_AS(mat_log(Mat::diagonal(d)), KernelError);
}

TEST_CASE("normalized output has unit |det| and direction preserved") {
    for (std::uint64_t seed = 0; seed < 200; ++seed) {
        Rng rng(child_seed(1008, seed));
        const Mat m = gaussian(rng, 3) * rng.uniform(0.1, 10.0);
        if (std::abs(determinant(m)) < 1e-8) continue;
        const Mat n = normalized(m);
        CHECK(std::abs(std::abs(determinant(n)) - 1.0) < 1e-10);
        // Same matrix up to positive scale.
        const double c = hs_norm(m) / hs_norm(n);
        CHECK(hs_norm(n * c - m) < 1e-9 * hs_norm(m));
    }
}

TEST_CASE("traceless wrapper enforces its invariant") {
    Mat m = Mat::identity(3);
    CHECK_THROWS_AS(Traceless t(m), KernelError);
    Mat z(3);
    z.at(0, 1) = 2.0;
    CHECK_NOTHROW(Traceless t(z));
}

TEST_CASE("solve matches inverse application") {
    Rng rng(child_seed(1009, 0));
    const Mat a = gaussian(rng, 4);
    Vec b(4);
    for (int i = 0; i < 4; ++i) b[i] = rng.normal();
    const Vec x = solve(a, b);
    CHECK((a * x - b).norm() < 1e-10 * (1.0 + b.norm()));
}
