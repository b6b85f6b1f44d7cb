#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "qcb/covering.hpp"
#include "qcb/frame.hpp"
#include "qcb/maps.hpp"
#include "qcb/rng.hpp"
#include "qcb/sphere.hpp"

using namespace qcb;
using namespace qcb::sphere;
using linalg::Mat;
using linalg::Vec;

namespace {

Mat diagonal3(double a, double b, double c) {
    Vec d(3);
    d[0] = a;
    d[1] = b;
    d[2] = c;
    return Mat::diagonal(d);
}

Vec unit3(double a, double b, double c) {
    Vec x(3);
    x[0] = a;
    x[1] = b;
    x[2] = c;
    return x * (1.0 / x.norm());
}

// Seeded element of SL(n, R) with conformality at least min_kappa, built by
// normalizing a Gaussian matrix and flipping one column when the
// determinant lands negative.
Mat random_sl(int n, std::uint64_t seed, double min_kappa) {
    Rng gen(seed);
    for (int attempt = 0; attempt < 1000; ++attempt) {
        Mat g(n);
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j) g.at(i, j) = gen.normal();
        if (std::abs(linalg::determinant(g)) < 1e-6) continue;
        Mat m = linalg::normalized(g);
        if (linalg::determinant(m) < 0.0)
            for (int i = 0; i < n; ++i) m.at(i, n - 1) = -m.at(i, n - 1);
        if (linalg::conformality(m) >= min_kappa) return m;
    }
    FAIL("no special-linear sample after 1000 attempts");
    return Mat::identity(n);
}

Vec random_unit(Rng& gen, int n) {
    Vec x(n);
    do {
        for (int i = 0; i < n; ++i) x[i] = gen.normal();
    } while (x.norm() < 1e-3);
    return x * (1.0 / x.norm());
}

std::vector<Vec> tangent_cols(const Vec& x) {
    const Mat h = frame::tangent_basis_householder(x);
    std::vector<Vec> cols;
    for (int j = 0; j < x.dim() - 1; ++j) {
        Vec c(x.dim());
        for (int i = 0; i < x.dim(); ++i) c[i] = h.at(i, j);
        cols.push_back(c);
    }
    return cols;
}

// Central differences along geodesics through x, expressed in the same
// canonical tangent bases as sphere_derivative.
Mat fd_derivative(const ProjectiveMap& a, const Vec& x, double h) {
    const Vec fx = sphere_map(a, x);
    const auto bx = tangent_cols(x);
    const auto bf = tangent_cols(fx);
    const int d = x.dim() - 1;
    Mat out(d);
    for (int j = 0; j < d; ++j) {
        Vec xp = x * std::cos(h) + bx[static_cast<std::size_t>(j)] * std::sin(h);
        Vec xm = x * std::cos(h) - bx[static_cast<std::size_t>(j)] * std::sin(h);
        Vec fp = sphere_map(a, xp * (1.0 / xp.norm()));
        Vec fm = sphere_map(a, xm * (1.0 / xm.norm()));
        for (int i = 0; i < d; ++i)
            out.at(i, j) = bf[static_cast<std::size_t>(i)].dot(fp - fm) / (2.0 * h);
    }
    return out;
}

// Two seeded rotations and their inverses; dense in SO(3) for generic
// seeds, which is all the scan needs.
std::vector<Mat> generic_pair(std::uint64_t s1, std::uint64_t s2) {
    Mat r1 = maps::random_rotation(3, s1);
    Mat r2 = maps::random_rotation(3, s2);
    return {r1, r1.transposed(), r2, r2.transposed()};
}

}  // namespace

TEST_CASE("projective map validates dimension and determinant") {
    CHECK_THROWS_WITH_AS(ProjectiveMap(Mat::identity(1)),
                         "projective map: ambient dimension below 2",
                         SphereError);
    try {
        ProjectiveMap(Mat::identity(3) * 2.0);
        FAIL("expected a determinant failure");
    } catch (const SphereError& e) {
        CHECK(std::string(e.what()) == "projective map: determinant is not 1");
        CHECK_FALSE(e.witness.empty());
    }
    ProjectiveMap a(diagonal3(2.0, 1.0, 0.5));
    CHECK(a.ambient_dim() == 3);
    CHECK(a.sphere_dim() == 2);
}

TEST_CASE("sphere map acts projectively and rejects bad points") {
    ProjectiveMap a(diagonal3(2.0, 1.0, 0.5));
    Vec x = unit3(1.0, 1.0, 1.0);
    Vec fx = sphere_map(a, x);
    CHECK(fx.norm() == doctest::Approx(1.0).epsilon(1e-12));
    // Ax = (2, 1, 1/2), so the image is that vector over its norm.
    Vec expect = unit3(2.0, 1.0, 0.5);
    CHECK((fx - expect).norm() < 1e-15);

    CHECK_THROWS_WITH_AS(sphere_map(a, Vec::unit(4, 0)),
                         "sphere map: dimension mismatch", SphereError);
    CHECK_THROWS_WITH_AS(sphere_map(a, Vec(3)),
                         "sphere map: base point is not a unit vector",
                         SphereError);
}

TEST_CASE("sphere map is a homomorphism of the matrix product") {
    double worst = 0.0;
    for (int trial = 0; trial < 500; ++trial) {
        const auto t = static_cast<std::uint64_t>(trial);
        Mat ma = random_sl(3, child_seed(300, t), 1.0);
        Mat mb = random_sl(3, child_seed(301, t), 1.0);
        Rng gen(child_seed(302, t));
        Vec x = random_unit(gen, 3);
        ProjectiveMap a(ma), b(mb), ab(linalg::normalized(ma * mb));
        Vec lhs = sphere_map(a, sphere_map(b, x));
        Vec rhs = sphere_map(ab, x);
        worst = std::max(worst, (lhs - rhs).norm());
    }
    CHECK(worst <= 1e-10);
}

TEST_CASE("derivative at the pole matches the diagonal computation") {
    ProjectiveMap a(diagonal3(2.0, 1.0, 0.5));
    Vec pole = Vec::unit(3, 2);
    Mat der = sphere_derivative(a, pole);
    // |A e_3| = 1/2, so the tangent map is diag(2, 1) / (1/2) = diag(4, 2).
    CHECK(der.at(0, 0) == doctest::Approx(4.0).epsilon(1e-14));
    CHECK(der.at(1, 1) == doctest::Approx(2.0).epsilon(1e-14));
    CHECK(std::abs(der.at(0, 1)) < 1e-14);
    CHECK(std::abs(der.at(1, 0)) < 1e-14);
    CHECK(linalg::co_norm(der) == doctest::Approx(2.0).epsilon(1e-12));

    Mat nd = linalg::normalized(der);
    CHECK(nd.at(0, 0) == doctest::Approx(std::sqrt(2.0)).epsilon(1e-12));
    CHECK(nd.at(1, 1) == doctest::Approx(1.0 / std::sqrt(2.0)).epsilon(1e-12));
    CHECK(covering::restricted_norm(nd, Vec::unit(2, 0)) ==
          doctest::Approx(1.0 / std::sqrt(2.0)).epsilon(1e-12));
}

TEST_CASE("derivative matches central finite differences") {
    double worst = 0.0;
    for (int trial = 0; trial < 10000; ++trial) {
        const auto t = static_cast<std::uint64_t>(trial);
        Mat m = random_sl(3, child_seed(42, t), 1.0);
        Rng gen(child_seed(43, t));
        Vec x = random_unit(gen, 3);
        ProjectiveMap a(m);
        Mat der = sphere_derivative(a, x);
        Mat fd = fd_derivative(a, x, 1e-6);
        worst = std::max(worst, linalg::hs_norm(der - fd) / linalg::hs_norm(der));
    }
    CHECK(worst <= 1e-6);
}

TEST_CASE("orthogonal maps act conformally") {
    double worst = 0.0;
    for (int trial = 0; trial < 200; ++trial) {
        const auto t = static_cast<std::uint64_t>(trial);
        Mat q = maps::random_rotation(3, child_seed(7, t));
        Rng gen(child_seed(8, t));
        Vec x = random_unit(gen, 3);
        Mat der = sphere_derivative(ProjectiveMap(q), x);
        worst = std::max(worst, std::abs(linalg::conformality(der) - 1.0));
    }
    CHECK(worst <= 1e-9);
}

TEST_CASE("diagonal condition is strict in both inequalities") {
    CHECK(check_diagonal_condition({2.0, 1.0, 0.5}));
    CHECK(check_diagonal_condition({2.0, 0.5}));
    // Second inequality fails at equality: max r_i^2 = r_1 r_2 = 4.
    CHECK_FALSE(check_diagonal_condition({2.0, 2.0, 0.5}));
    CHECK_FALSE(check_diagonal_condition({0.5, 2.0}));
    CHECK_FALSE(check_diagonal_condition({1.0, 1.0}));
    CHECK_THROWS_WITH_AS(check_diagonal_condition({2.0}),
                         "diagonal condition: need at least two entries",
                         SphereError);
    CHECK_THROWS_WITH_AS(check_diagonal_condition({2.0, -1.0}),
                         "diagonal condition: nonpositive entry", SphereError);
}

TEST_CASE("normal form of the diagonal example is exact") {
    auto word = normal_form(diagonal3(2.0, 1.0, 0.5));
    // d = 2: the leading entry is s_1^{2(d! + (d-1)!)} = 2^6.
    CHECK(word.result.at(0, 0) == 64.0);
    CHECK(word.result.at(1, 1) == 1.0);
    CHECK(word.result.at(2, 2) == 0.015625);
    CHECK(word.rotations.size() == 9);
    CHECK(word.exponents.size() == 8);
    for (int e : word.exponents) CHECK(std::abs(e) == 1);
    for (const Mat& r : word.rotations)
        CHECK(linalg::determinant(r) == doctest::Approx(1.0).epsilon(1e-12));
    Mat recon = word.reconstruct(diagonal3(2.0, 1.0, 0.5));
    CHECK(linalg::hs_norm(recon - word.result) <= 1e-12);
    CHECK(check_diagonal_condition({word.result.at(0, 0), word.result.at(1, 1),
                                    word.result.at(2, 2)}));
}

TEST_CASE("normal form on the circle squares the gap twice") {
    Vec d(2);
    d[0] = 2.0;
    d[1] = 0.5;
    auto word = normal_form(Mat::diagonal(d));
    // d = 1: K = 1! + 0! = 2, so the leading entry is 2^4.
    CHECK(word.result.at(0, 0) == 16.0);
    CHECK(word.result.at(1, 1) == 0.0625);
    CHECK(word.rotations.size() == 5);
    CHECK(word.exponents.size() == 4);
    CHECK(linalg::hs_norm(word.reconstruct(Mat::diagonal(d)) - word.result) <=
          1e-12);
}

TEST_CASE("normal form rejects orthogonal and non-special-linear input") {
    try {
        normal_form(Mat::plane_rotation(3, 0, 1, 0.3));
        FAIL("expected an orthogonal-input failure");
    } catch (const SphereError& e) {
        CHECK(std::string(e.what()) == "normal form: orthogonal input");
        CHECK(e.witness.find("kappa") == 0);
    }
    CHECK_THROWS_WITH_AS(normal_form(Mat::identity(3) * 2.0),
                         "normal form: input is not special-linear",
                         SphereError);
}

TEST_CASE("normal form ensemble reconstructs and passes the condition") {
    for (int trial = 0; trial < 100; ++trial) {
        Mat d = random_sl(3, child_seed(99, static_cast<std::uint64_t>(trial)),
                          1.1);
        auto word = normal_form(d);
        // Same relative residual the reconstruction guard enforces; the
        // result entries grow like s_1^6, so an absolute bound would be
        // meaningless for well-stretched inputs.
        const double residual =
            linalg::hs_norm(word.reconstruct(d) - word.result) /
            (linalg::hs_norm(word.result) + 1.0);
        CHECK(residual <= 1e-8);
        CHECK(check_diagonal_condition({word.result.at(0, 0),
                                        word.result.at(1, 1),
                                        word.result.at(2, 2)}));
        CHECK(linalg::determinant(word.result) ==
              doctest::Approx(1.0).epsilon(1e-8));
    }
}

TEST_CASE("normal form depends only on the singular values") {
    for (int trial = 0; trial < 20; ++trial) {
        const auto t = static_cast<std::uint64_t>(trial);
        Mat d = random_sl(3, child_seed(500, t), 1.1);
        Mat q = maps::random_rotation(3, child_seed(501, t));
        Mat qp = maps::random_rotation(3, child_seed(502, t));
        auto base = normal_form(d);
        auto moved = normal_form(q * d * qp);
        for (int i = 0; i < 3; ++i)
            CHECK(moved.result.at(i, i) ==
                  doctest::Approx(base.result.at(i, i)).epsilon(1e-9));
    }
}

TEST_CASE("normal form word validates its rotation count") {
    NormalFormWord word;
    word.rotations.push_back(Mat::identity(3));
    word.exponents.push_back(1);
    CHECK_THROWS_WITH_AS(word.reconstruct(Mat::identity(3)),
                         "normal form word: rotation count is off",
                         SphereError);
}

TEST_CASE("tangent grid is deterministic and validates its shape") {
    auto grid = build_tangent_grid(2, 100, 10);
    CHECK(grid.d == 2);
    CHECK(grid.samples.size() == 1000);
    CHECK(grid.x_spacing > 0.0);
    CHECK(grid.v_spacing == doctest::Approx(0.6283185307179586).epsilon(1e-12));
    for (std::size_t i = 0; i < grid.samples.size(); i += 97) {
        const auto& s = grid.samples[i];
        CHECK(s.x.norm() == doctest::Approx(1.0).epsilon(1e-12));
        CHECK(s.v.norm() == doctest::Approx(1.0).epsilon(1e-12));
        CHECK(std::abs(s.x.dot(s.v)) < 1e-12);
    }
    auto again = build_tangent_grid(2, 100, 10);
    CHECK(again.samples.size() == grid.samples.size());
    CHECK((again.samples[123].x - grid.samples[123].x).norm() == 0.0);

    auto circle = build_tangent_grid(1, 8, 2);
    CHECK(circle.samples.size() == 16);
    CHECK(circle.v_spacing == 0.0);

    CHECK_THROWS_WITH_AS(build_tangent_grid(0, 10, 2),
                         "tangent grid: dimension out of range", SphereError);
    CHECK_THROWS_WITH_AS(build_tangent_grid(2, 0, 10),
                         "tangent grid: empty grid", SphereError);
    CHECK_THROWS_WITH_AS(build_tangent_grid(1, 8, 3),
                         "tangent grid: the circle has two unit tangents",
                         SphereError);
}

TEST_CASE("scan covers the pole sample with the empty word") {
    ProjectiveMap a(diagonal3(2.0, 1.0, 0.5));
    TangentGrid grid;
    grid.d = 2;
    grid.samples.push_back({Vec::unit(3, 2), Vec::unit(3, 0)});
    grid.x_spacing = 0.05;
    grid.v_spacing = 0.05;
    auto rep = directional_contraction_scan({Mat::identity(3)}, a, grid, 4,
                                            0.1, 1);
    REQUIRE(rep.n_covered == 1);
    CHECK(rep.coverage == 1.0);
    CHECK(rep.samples[0].word.empty());
    CHECK(rep.samples[0].expansion_margin ==
          doctest::Approx(1.0).epsilon(1e-12));
    CHECK(rep.samples[0].contraction_margin ==
          doctest::Approx(1.0 - 1.0 / std::sqrt(2.0)).epsilon(1e-12));
    // One bin per admissible length, zero through max_word_len.
    REQUIRE(rep.word_lengths.size() == 5);
    CHECK(rep.word_lengths[0] == 1);
    for (std::size_t k = 1; k < rep.word_lengths.size(); ++k)
        CHECK(rep.word_lengths[k] == 0);
}

TEST_CASE("identity generators cover exactly the starting cone") {
    ProjectiveMap a(diagonal3(2.0, 1.0, 0.5));
    TangentGrid grid;
    grid.d = 2;
    // In the cone; tangent 90 degrees off the axis; base 90 degrees off the
    // pole.  Only the first can be covered without moving.
    grid.samples.push_back({Vec::unit(3, 2), Vec::unit(3, 0)});
    grid.samples.push_back({Vec::unit(3, 2), Vec::unit(3, 1)});
    grid.samples.push_back({Vec::unit(3, 0), Vec::unit(3, 2)});
    grid.x_spacing = 0.05;
    grid.v_spacing = 0.05;
    auto rep = directional_contraction_scan({Mat::identity(3)}, a, grid, 6,
                                            0.1, 1);
    CHECK(rep.n_covered == 1);
    CHECK(rep.coverage == doctest::Approx(1.0 / 3.0));
    CHECK(rep.samples[0].covered);
    CHECK_FALSE(rep.samples[1].covered);
    CHECK_FALSE(rep.samples[2].covered);
}

TEST_CASE("generic rotation pair covers the bundle and certifies") {
    auto gens = generic_pair(11, 12);
    ProjectiveMap a(diagonal3(2.0, 1.0, 0.5));
    auto grid = build_tangent_grid(2, 100, 10);
    auto rep = directional_contraction_scan(gens, a, grid, 12, 0.1, 4);
    REQUIRE(rep.coverage == 1.0);
    CHECK(rep.worst_expansion > 0.8);
    CHECK(rep.worst_contraction > 0.25);

    auto cert = certify_directional_contraction(rep, gens, a, grid, 4, 4);
    CHECK(cert.passed);
    CHECK(covering::certificate_consistent(cert));
    CHECK(cert.kind == "directional-contraction");
    CHECK(cert.n_samples == 64000);
    CHECK(cert.worst_margin > 0.09);
    CHECK(cert.failure_witness.empty());
    CHECK(cert.witness_map.size() == 1000);

    // Dropping the expanding map leaves pure isometries, which cannot
    // expand anywhere; every refined cell fails.
    ProjectiveMap ident(Mat::identity(3));
    auto gone = certify_directional_contraction(rep, gens, ident, grid, 2, 4);
    CHECK_FALSE(gone.passed);
    CHECK(gone.worst_margin <= 0.0);
    CHECK(gone.failure_witness.find("sample 0") != std::string::npos);
}

TEST_CASE("worst margins are stable under grid refinement") {
    auto gens = generic_pair(11, 12);
    ProjectiveMap a(diagonal3(2.0, 1.0, 0.5));
    auto coarse = build_tangent_grid(2, 50, 6);
    auto fine = build_tangent_grid(2, 200, 12);
    auto rc = directional_contraction_scan(gens, a, coarse, 12, 0.1, 4);
    auto rf = directional_contraction_scan(gens, a, fine, 12, 0.1, 4);
    REQUIRE(rc.coverage == 1.0);
    REQUIRE(rf.coverage == 1.0);
    auto cert = certify_directional_contraction(rc, gens, a, coarse, 4, 4);
    const double slack = cert.lipschitz_slack * cert.grid_resolution;
    CHECK(std::abs(rc.worst_expansion - rf.worst_expansion) < slack);
    CHECK(std::abs(rc.worst_contraction - rf.worst_contraction) < slack);
}

TEST_CASE("circle words certify the one dimensional condition") {
    Mat r = Mat::plane_rotation(2, 0, 1, 2.399963229728653);
    std::vector<Mat> gens = {r, r.transposed()};
    Vec d(2);
    d[0] = 2.0;
    d[1] = 0.5;
    ProjectiveMap a(Mat::diagonal(d));
    auto grid = build_tangent_grid(1, 500, 2);
    auto rep = directional_contraction_scan(gens, a, grid, 40, 0.1, 4);
    REQUIRE(rep.coverage == 1.0);
    CHECK(rep.worst_expansion > 2.0);
    // The orthocomplement of v is trivial on the circle, so the contraction
    // margin is identically 1 and the certificate binds there with zero
    // slack.
    CHECK(rep.worst_contraction == 1.0);
    auto cert = certify_directional_contraction(rep, gens, a, grid, 4, 4);
    CHECK(cert.passed);
    CHECK(cert.worst_margin == 1.0);
    CHECK(cert.lipschitz_slack == 0.0);
}

TEST_CASE("scan and certificate are thread invariant") {
    auto gens = generic_pair(21, 22);
    ProjectiveMap a(diagonal3(2.0, 1.0, 0.5));
    auto grid = build_tangent_grid(2, 32, 4);
    auto r1 = directional_contraction_scan(gens, a, grid, 12, 0.1, 1);
    auto r4 = directional_contraction_scan(gens, a, grid, 12, 0.1, 4);
    CHECK(r1.n_covered == r4.n_covered);
    CHECK(r1.worst_expansion == r4.worst_expansion);
    CHECK(r1.worst_contraction == r4.worst_contraction);
    CHECK(r1.word_lengths == r4.word_lengths);
    for (std::size_t i = 0; i < r1.samples.size(); ++i) {
        CHECK(r1.samples[i].word == r4.samples[i].word);
        CHECK(r1.samples[i].expansion_margin == r4.samples[i].expansion_margin);
    }
    if (r1.coverage == 1.0) {
        auto c1 = certify_directional_contraction(r1, gens, a, grid, 3, 1);
        auto c4 = certify_directional_contraction(r4, gens, a, grid, 3, 4);
        CHECK(c1.worst_margin == c4.worst_margin);
        CHECK(c1.lipschitz_slack == c4.lipschitz_slack);
        CHECK(c1.witness_map == c4.witness_map);
    }
}

TEST_CASE("scan validates generators, map, and samples") {
    ProjectiveMap a(diagonal3(2.0, 1.0, 0.5));
    auto grid = build_tangent_grid(2, 10, 4);

    CHECK_THROWS_WITH_AS(
        directional_contraction_scan({Mat::identity(2)}, a, grid, 4, 0.1, 1),
        "scan: generator dimension mismatch", SphereError);
    CHECK_THROWS_WITH_AS(
        directional_contraction_scan({Mat::identity(3) * 1.5}, a, grid, 4, 0.1,
                                     1),
        "scan: generator is not orthogonal", SphereError);
    Mat flip = Mat::identity(3);
    flip.at(2, 2) = -1.0;
    CHECK_THROWS_WITH_AS(
        directional_contraction_scan({flip}, a, grid, 4, 0.1, 1),
        "scan: generator reverses orientation", SphereError);
    CHECK_THROWS_WITH_AS(
        directional_contraction_scan({Mat::identity(3)}, a, grid, -1, 0.1, 1),
        "scan: negative word length", SphereError);
    CHECK_THROWS_WITH_AS(
        directional_contraction_scan({Mat::identity(3)}, a, grid, 4, 0.0, 1),
        "scan: nonpositive cone angle", SphereError);

    ProjectiveMap skew(random_sl(3, 1234, 1.2));
    CHECK_THROWS_WITH_AS(
        directional_contraction_scan({Mat::identity(3)}, skew, grid, 4, 0.1, 1),
        "scan: expanding map is not diagonal", SphereError);
    ProjectiveMap wrong(diagonal3(2.0, 0.5, 1.0));
    CHECK_THROWS_WITH_AS(
        directional_contraction_scan({Mat::identity(3)}, wrong, grid, 4, 0.1,
                                     1),
        "scan: expanding map fails the diagonal condition", SphereError);

    TangentGrid bad;
    bad.d = 2;
    bad.samples.push_back({Vec::unit(3, 2) * 2.0, Vec::unit(3, 0)});
    bad.x_spacing = bad.v_spacing = 0.1;
    CHECK_THROWS_WITH_AS(
        directional_contraction_scan({Mat::identity(3)}, a, bad, 4, 0.1, 1),
        "scan: sample base is not a unit vector", SphereError);
    bad.samples[0] = {Vec::unit(3, 2), Vec::unit(3, 2)};
    CHECK_THROWS_WITH_AS(
        directional_contraction_scan({Mat::identity(3)}, a, bad, 4, 0.1, 1),
        "scan: sample tangent is not orthogonal", SphereError);

    auto circle_grid = build_tangent_grid(1, 8, 2);
    CHECK_THROWS_WITH_AS(
        directional_contraction_scan({Mat::identity(3)}, a, circle_grid, 4,
                                     0.1, 1),
        "scan: grid dimension mismatch", SphereError);
}

TEST_CASE("certificate requires a total scan") {
    ProjectiveMap a(diagonal3(2.0, 1.0, 0.5));
    auto grid = build_tangent_grid(2, 10, 4);
    auto rep = directional_contraction_scan({Mat::identity(3)}, a, grid, 2,
                                            0.1, 1);
    REQUIRE(rep.coverage < 1.0);
    CHECK_THROWS_WITH_AS(
        certify_directional_contraction(rep, {Mat::identity(3)}, a, grid, 2, 1),
        "certificate: scan coverage below one", SphereError);

    TangentGrid pole;
    pole.d = 2;
    pole.samples.push_back({Vec::unit(3, 2), Vec::unit(3, 0)});
    pole.x_spacing = pole.v_spacing = 0.05;
    auto total = directional_contraction_scan({Mat::identity(3)}, a, pole, 2,
                                              0.1, 1);
    REQUIRE(total.coverage == 1.0);
    CHECK_THROWS_WITH_AS(
        certify_directional_contraction(total, {Mat::identity(3)}, a, pole, 0,
                                        1),
        "certificate: refinement below one", SphereError);
    CHECK_THROWS_WITH_AS(
        certify_directional_contraction(total, {Mat::identity(3)}, a, grid, 2,
                                        1),
        "certificate: scan and grid sizes disagree", SphereError);
}
