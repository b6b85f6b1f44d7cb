#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <set>
#include <vector>

#include "qcb/branch.hpp"

using namespace qcb;
using namespace qcb::branch;
using namespace qcb::covering;
using namespace qcb::linalg;

namespace {

frame::FramePoint origin_frame(int d) {
    return {frame::AmbientPoint{frame::Model::euclidean, Vec(d)}, Mat::identity(d)};
}

maps::GeneratorFamily doubling_family() {
    maps::GeneratorFamily fam;
    Vec dg(2);
    dg[0] = 2.0;
    dg[1] = 0.5;
    fam.maps.push_back(maps::LocalMap::affine(Mat::diagonal(dg), Vec(2)));
    return fam;
}

}  // namespace

TEST_CASE("doubling map slope is exactly log two") {
    auto b = random_branch(doubling_family(), origin_frame(2),
                           {.n_steps = 200, .keep_points = false, .weights = {}, .seed = 1});
    auto stats = branch_stats(b);
    CHECK(stats.lyapunov_slope == doctest::Approx(std::log(2.0)).epsilon(1e-12));
    CHECK(stats.length == 200);
    for (double e : b.expansion_history) CHECK(e == doctest::Approx(0.5).epsilon(1e-14));
    for (std::size_t k = 0; k < b.log_norm_history.size(); ++k)
        CHECK(b.log_norm_history[k] ==
              doctest::Approx((static_cast<double>(k) + 1.0) * std::log(2.0)).epsilon(1e-10));
}

TEST_CASE("single-generator products follow the eigenvalue oracle") {
    // A product of one fixed generator exp(-t*r*v) grows like the top real
    // eigenvalue; for traceless 2x2 v with det(v) < 0 that is t*r*sqrt(-det).
    const double t = 0.25, r = 0.2;
    auto fam = build_simplex_generators(2, t, r);
    int tested = 0;
    for (int j = 0; j < 4; ++j) {
        Mat v = from_algebra_coords(2, fam.region.vertex(j));
        double det = determinant(v);
        if (det >= -0.1) continue;
        std::vector<double> weights(4, 0.0);
        weights[static_cast<std::size_t>(j)] = 1.0;
        auto b = random_branch(fam.family, origin_frame(2),
                               {.n_steps = 3000, .keep_points = false, .weights = weights, .seed = 2});
        auto stats = branch_stats(b);
        double oracle = t * r * std::sqrt(-det);
        CHECK(stats.lyapunov_slope == doctest::Approx(oracle).epsilon(5e-3));
        for (int idx : b.map_indices) CHECK(idx == j);
        ++tested;
    }
    CHECK(tested >= 1);
}

TEST_CASE("isometry branches keep conformality exactly one") {
    maps::GeneratorFamily fam;
    for (int k = 0; k < 3; ++k)
        fam.maps.push_back(maps::LocalMap::rotation(Mat::plane_rotation(2, 0, 1, 0.3 + k),
                                                    frame::Model::euclidean));
    auto b = random_branch(fam, origin_frame(2),
                           {.n_steps = 2000, .keep_points = false, .weights = {}, .seed = 3});
    auto stats = branch_stats(b);
    CHECK(stats.max_kappa == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(stats.min_expansion == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(std::abs(stats.lyapunov_slope) < 1e-12);
}

TEST_CASE("greedy branch stays strictly inside the simplex window") {
    auto fam = build_simplex_generators(2, 0.25, 0.1);
    FrameWindow window = SimplexWindow{fam.region};
    double h = window_size_bound(window);
    auto b = greedy_conformal_branch(fam.family, window, origin_frame(2),
                                     {.n_steps = 2000, .keep_points = true});
    REQUIRE(b.length() == 2000);
    REQUIRE(b.points.size() == 2001);
    double kappa_bound = std::pow(h, 4);  // H^(d^2) for d = 2
    for (double k : b.kappa_history) CHECK(k <= kappa_bound);
    for (std::size_t i = 0; i < b.points.size(); i += 100)
        CHECK(window_margin(window, b.points[i]) > 0.0);
}

TEST_CASE("intermediate greedy products are kappa-squared conformal") {
    auto fam = build_simplex_generators(2, 0.25, 0.1);
    FrameWindow window = SimplexWindow{fam.region};
    double h = window_size_bound(window);
    auto b = greedy_conformal_branch(fam.family, window, origin_frame(2),
                                     {.n_steps = 400, .keep_points = true});
    double bound = std::pow(h, 4) * std::pow(h, 4);
    for (std::size_t m = 0; m < 400; m += 37) {
        for (std::size_t n = m + 1; n < 400; n += 53) {
            Mat segment = b.points[n].frame * inverse(b.points[m].frame);
            CHECK(conformality(segment) <= bound * (1.0 + 1e-9));
        }
    }
}

TEST_CASE("greedy branch reports a stuck frame with its witness") {
    maps::GeneratorFamily fam;
    Vec jump(2);
    jump[0] = 5.0;
    fam.maps.push_back(maps::LocalMap::affine(Mat::identity(2), jump));
    BallDomain ball{frame::Model::euclidean, Vec(2), 1.0};
    FrameWindow window = SizeWindow{ball, 10.0};
    try {
        greedy_conformal_branch(fam, window, origin_frame(2), {.n_steps = 10});
        FAIL("expected a stuck branch");
    } catch (const BranchError& e) {
        CHECK(e.step == 0);
        CHECK(e.witness.find("base") != std::string::npos);
    }
}

TEST_CASE("start frames outside the window are rejected") {
    auto fam = build_simplex_generators(2, 0.25, 0.1);
    BallDomain ball{frame::Model::euclidean, Vec(2), 1.0};
    FrameWindow tight = SizeWindow{ball, std::sqrt(2.0) - 0.1};
    CHECK_THROWS_AS(greedy_conformal_branch(fam.family, tight, origin_frame(2), {.n_steps = 5}),
                    BranchError);
}

TEST_CASE("random branch honors degenerate and invalid weights") {
    auto fam = build_simplex_generators(2, 0.25, 0.1);
    auto b = random_branch(fam.family, origin_frame(2),
                           {.n_steps = 50, .keep_points = false, .weights = {0.0, 0.0, 1.0, 0.0}, .seed = 4});
    for (int idx : b.map_indices) CHECK(idx == 2);

    RandomOptions bad_count{.n_steps = 5, .keep_points = false, .weights = {1.0, 1.0}, .seed = 0};
    CHECK_THROWS_AS(random_branch(fam.family, origin_frame(2), bad_count), BranchError);
    RandomOptions negative{.n_steps = 5, .keep_points = false, .weights = {1.0, -1.0, 0.0, 0.0}, .seed = 0};
    CHECK_THROWS_AS(random_branch(fam.family, origin_frame(2), negative), BranchError);
    RandomOptions zeros{.n_steps = 5, .keep_points = false, .weights = {0.0, 0.0, 0.0, 0.0}, .seed = 0};
    CHECK_THROWS_AS(random_branch(fam.family, origin_frame(2), zeros), BranchError);
}

TEST_CASE("uniform random products have a positive resolved slope") {
    auto fam = build_simplex_generators(2, 0.25, 0.2);
    auto b = random_branch(fam.family, origin_frame(2),
                           {.n_steps = 20000, .keep_points = false, .weights = {}, .seed = 100});
    auto stats = branch_stats(b);
    CHECK(stats.lyapunov_slope > 0.0);
    CHECK(stats.slope_stderr < stats.lyapunov_slope / 5.0);
}

TEST_CASE("tie-breaking modes both keep the branch inside") {
    // The identity start frame sits at the centroid where all generators give
    // equal margins up to rounding, so the tie rule decides the first step.
    auto fam = build_simplex_generators(2, 0.25, 0.1);
    FrameWindow window = SimplexWindow{fam.region};
    auto first = greedy_conformal_branch(fam.family, window, origin_frame(2),
                                         {.n_steps = 200,
                                          .keep_points = false,
                                          .tie_break = TieBreak::first_index,
                                          .seed = 0,
                                          .tie_tolerance = 1e-12});
    CHECK(first.map_indices[0] == 0);
    auto seeded = greedy_conformal_branch(fam.family, window, origin_frame(2),
                                          {.n_steps = 200,
                                           .keep_points = false,
                                           .tie_break = TieBreak::seeded,
                                           .seed = 9,
                                           .tie_tolerance = 1e-12});
    CHECK(seeded.length() == 200);
    std::set<int> used(seeded.map_indices.begin(), seeded.map_indices.end());
    CHECK(used.size() > 1);
}

TEST_CASE("branch stats summarize the histories") {
    auto b = random_branch(doubling_family(), origin_frame(2),
                           {.n_steps = 10, .keep_points = true, .weights = {}, .seed = 7});
    auto stats = branch_stats(b);
    CHECK(stats.length == 10);
    CHECK(stats.min_expansion == doctest::Approx(0.5).epsilon(1e-14));
    CHECK(stats.max_kappa == doctest::Approx(std::pow(4.0, 10)).epsilon(1e-9));
    CHECK(stats.lyapunov_slope == doctest::Approx(std::log(2.0)).epsilon(1e-12));
    REQUIRE(b.points.size() == 11);
    // Retained random-branch frames are renormalized to unit Frobenius size.
    for (std::size_t i = 1; i < b.points.size(); ++i)
        CHECK(hs_norm(b.points[i].frame) == doctest::Approx(1.0).epsilon(1e-12));
}
