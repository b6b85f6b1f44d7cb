#include "qcb/blender.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <limits>
#include <map>
#include <memory>
#include <sstream>

#include <json.hpp>

#include "qcb/parallel.hpp"
#include "qcb/rng.hpp"

namespace qcb::blender {

using covering::SimplexRegion;
using linalg::conformality;
using linalg::inverse;
using linalg::mat_exp;
using linalg::mat_log;
using linalg::operator_norm;
using linalg::solve;

namespace {

std::string format_double(double x) {
    std::ostringstream out;
    out.precision(6);
    out << x;
    return out.str();
}

std::string format_point(const Vec& x) {
    std::ostringstream out;
    out.precision(12);
    out << "(";
    for (int i = 0; i < x.dim(); ++i) out << (i ? ", " : "") << x[i];
    out << ")";
    return out.str();
}

Vec gaussian_direction(int dim, Rng& gen) {
    Vec v(dim);
    double n = 0.0;
    while (n < 1e-12) {
        for (int i = 0; i < dim; ++i) v[i] = gen.normal();
        n = v.norm();
    }
    return v * (1.0 / n);
}

// Boundary draws sit exactly on the sphere so the closure is exercised.
Vec closed_ball_sample(int dim, double radius, Rng& gen, bool boundary) {
    const Vec dir = gaussian_direction(dim, gen);
    const double u = boundary ? 1.0 : std::pow(gen.uniform(), 1.0 / dim);
    return dir * (radius * u);
}

// Frame of the closed window: exp of a Dirichlet point of the scaled simplex,
// with one barycentric weight dropped on boundary draws.
Mat closed_window_sample(int d, const SimplexRegion& region, Rng& gen, bool boundary) {
    const int n = region.n_vertices();
    std::vector<double> w(static_cast<std::size_t>(n));
    double total = 0.0;
    for (auto& wi : w) {
        double u = gen.uniform();
        while (u <= 0.0) u = gen.uniform();
        wi = -std::log(u);
        total += wi;
    }
    if (boundary) {
        const auto drop = static_cast<std::size_t>(gen.below(static_cast<std::uint64_t>(n)));
        total -= w[drop];
        w[drop] = 0.0;
    }
    std::vector<double> coords(static_cast<std::size_t>(region.ambient_dim()), 0.0);
    for (int i = 0; i < n; ++i) {
        const auto& vx = region.vertex(i);
        for (std::size_t k = 0; k < coords.size(); ++k)
            coords[k] += region.scale() * (w[static_cast<std::size_t>(i)] / total) * vx[k];
    }
    return mat_exp(linalg::Traceless(covering::from_algebra_coords(d, coords)));
}

// Integer key of the cubic cell whose center cell*k is nearest to x.
std::vector<int> cell_key(const Vec& x, double cell) {
    std::vector<int> key(static_cast<std::size_t>(x.dim()));
    for (int i = 0; i < x.dim(); ++i)
        key[static_cast<std::size_t>(i)] = static_cast<int>(std::lround(x[i] / cell));
    return key;
}

// Advances an odometer over {lo..hi}^d; false once it wraps around.
bool advance(std::vector<int>& key, int lo, int hi) {
    int axis = static_cast<int>(key.size()) - 1;
    while (axis >= 0 && key[static_cast<std::size_t>(axis)] == hi) {
        key[static_cast<std::size_t>(axis)] = lo;
        --axis;
    }
    if (axis < 0) return false;
    ++key[static_cast<std::size_t>(axis)];
    return true;
}

// Cells of side `cell` whose closed cube lies inside the centered ball,
// keyed for point lookup and indexed for bitmaps.
std::map<std::vector<int>, int> inside_cells(int d, double ball_radius, double cell) {
    const int kmax = static_cast<int>(std::floor(ball_radius / cell)) + 1;
    const double half_diag = cell * std::sqrt(static_cast<double>(d)) / 2.0;
    std::map<std::vector<int>, int> cells;
    std::vector<int> key(static_cast<std::size_t>(d), -kmax);
    do {
        double r2 = 0.0;
        for (int k : key) r2 += static_cast<double>(k) * k;
        if (std::sqrt(r2) * cell + half_diag <= ball_radius) {
            const int index = static_cast<int>(cells.size());
            cells.emplace(key, index);
        }
    } while (advance(key, -kmax, kmax));
    return cells;
}

// Newton inversion for nearly affine maps, seeded from the affine preimage.
// Returns false when the residual refuses to drop to 1e-13 * scale.
bool newton_preimage(const maps::LocalMap& f, const AffineMap& affine_part,
                     const Vec& x, Vec& y) {
    y = solve(affine_part.linear, x - affine_part.offset);
    for (int it = 0; it < 40; ++it) {
        const Vec residual = f.apply(y) - x;
        if (residual.norm() <= 1e-13 * (1.0 + x.norm())) return true;
        y = y - solve(f.tangent_derivative(y), residual);
    }
    return false;
}

struct PairResult {
    double combined = 0.0;
    double base = 0.0;
    double fiber = 0.0;
    std::string witness;
};

}  // namespace

maps::GeneratorFamily BlenderFamily::local_maps() const {
    maps::GeneratorFamily out;
    const int n_lattice = static_cast<int>(lattice.size());
    for (int i = 0; i < size(); ++i) {
        const AffineMap& m = maps[static_cast<std::size_t>(i)];
        out.maps.push_back(maps::LocalMap::affine(m.linear, m.offset));
        out.labels.push_back("D" + std::to_string(m.d_index) + "+J" +
                             std::to_string(i % n_lattice));
    }
    out.metadata["epsilon"] = epsilon;
    out.metadata["lambda"] = lambda;
    return out;
}

BlenderFamily build_affine_blender(int d, double epsilon) {
    const double t = 1.0 / (d * d);
    double r = 0.1;
    for (int halvings = 0; halvings < 40; ++halvings) {
        const auto simplex = covering::build_simplex_generators(d, t, r);
        double worst = 1.0;
        for (const auto& g : simplex.family.maps)
            worst = std::max(worst, conformality(g.matrix()));
        if (worst <= 1.0 + epsilon) return build_affine_blender(d, epsilon, t, r);
        r *= 0.5;
    }
    throw BlenderError("blender build: shape scale retuning did not converge");
}

BlenderFamily build_affine_blender(int d, double epsilon, double t, double r) {
    if (!(epsilon > 0.0) || !(epsilon < 0.5)) {
        throw BlenderError("blender build: contraction step outside (0, 0.5)");
    }

    BlenderFamily fam{d,
                      epsilon,
                      1.0 - epsilon,
                      epsilon * epsilon,
                      epsilon * epsilon * (1.0 - epsilon) * (1.0 - epsilon),
                      0.0,
                      covering::build_simplex_generators(d, t, r),
                      {},
                      {}};
    for (const auto& g : fam.simplex.family.maps) {
        const double kappa = conformality(g.matrix());
        if (kappa > 1.0 + epsilon + 1e-12) {
            throw BlenderError("blender build: shape generator is not (1 + eps)-conformal, "
                               "conformality " + format_double(kappa) + " at scale " +
                               format_double(r));
        }
    }

    const double sqrt_d = std::sqrt(static_cast<double>(d));
    double spacing = fam.v_inner * (2.0 / sqrt_d) * 0.99;
    for (int attempt = 0;; ++attempt) {
        fam.lattice.clear();
        const double reach = fam.v_radius + spacing * sqrt_d / 2.0;
        const int kmax = static_cast<int>(std::ceil(reach / spacing));
        std::vector<int> key(static_cast<std::size_t>(d), -kmax);
        do {
            Vec v(d);
            for (int i = 0; i < d; ++i) v[i] = spacing * key[static_cast<std::size_t>(i)];
            if (v.norm() <= reach) fam.lattice.push_back(v);
        } while (advance(key, -kmax, kmax));

        // Covering check of V̄ by the translated inner balls.  Both the ball
        // and the lattice are symmetric under coordinate permutations and
        // sign flips, so probing the sorted nonnegative cone suffices; the
        // certificate needs the worst node distance plus the grid resolution
        // to stay below the inner radius.
        const double slack = fam.v_inner - spacing * sqrt_d / 2.0;
        const double g = 0.8 * slack / sqrt_d;
        const int nodes = static_cast<int>(std::ceil(fam.v_radius / g)) + 1;
        double worst = 0.0;
        std::vector<int> node(static_cast<std::size_t>(d), 0);
        do {
            bool sorted = true;
            for (std::size_t i = 1; i < node.size(); ++i)
                sorted &= node[i - 1] >= node[i];
            if (!sorted) continue;
            Vec x(d);
            for (int i = 0; i < d; ++i)
                x[i] = fam.v_radius * node[static_cast<std::size_t>(i)] / (nodes - 1);
            if (x.norm() > fam.v_radius) continue;
            Vec nearest(d);
            for (int i = 0; i < d; ++i) nearest[i] = spacing * std::lround(x[i] / spacing);
            worst = std::max(worst, (x - nearest).norm());
        } while (advance(node, 0, nodes - 1));
        if (worst + g * sqrt_d / 2.0 < fam.v_inner) break;
        if (attempt >= 1) {
            throw BlenderError("blender build: lattice covering check failed, spacing " +
                               format_double(spacing) + " leaves distance " +
                               format_double(worst));
        }
        spacing *= 0.95;
    }
    fam.lattice_spacing = spacing;

    for (int i = 0; i < d * d; ++i) {
        const Mat d_inv = inverse(fam.simplex.family.maps[static_cast<std::size_t>(i)].matrix());
        const Mat linear = d_inv * fam.lambda;
        const double norm = operator_norm(linear);
        if (!(norm < 1.0 - epsilon * epsilon)) {
            throw BlenderError("blender build: map norm " + format_double(norm) +
                               " reaches 1 - eps^2");
        }
        for (const Vec& v : fam.lattice) {
            if (!(norm + v.norm() < 1.0)) {
                throw BlenderError("blender build: map is not forward invariant on the "
                                   "unit ball, norm + offset " +
                                   format_double(norm + v.norm()));
            }
            const Vec fixed = solve(Mat::identity(d) - linear, v);
            if (!(fixed.norm() < 1.0)) {
                throw BlenderError("blender build: fixed point outside the unit ball at " +
                                   format_point(fixed));
            }
            fam.maps.push_back(AffineMap{linear, v, i, fam.lambda});
        }
    }
    return fam;
}

// Sampled hypotheses certify strict interiority, so margins at or below the
// float floor count as failures.
static constexpr double kMarginFloor = 1e-12;

static AssumptionReport verify_impl(const BlenderFamily& fam,
                                    const maps::GeneratorFamily& gmaps,
                                    const AssumptionOptions& opt) {
    if (gmaps.size() != fam.size()) {
        throw BlenderError("assumption check: replacement family size mismatch");
    }
    const int d = fam.d;
    const int n_shapes = d * d;
    const int n_lattice = static_cast<int>(fam.lattice.size());
    bool affine = true;
    for (const auto& f : gmaps.maps) affine &= f.kind() == maps::LocalMap::Kind::affine;

    AssumptionReport report;
    report.n_base_samples = opt.n_base_samples;
    report.n_fiber_samples = opt.n_fiber_samples;

    // (ii) and (iii).  Affine maps admit the exact bounds ||L|| + |v| and
    // ||L||; otherwise both are sampled over the closed unit ball.
    report.invariance_margin = std::numeric_limits<double>::infinity();
    if (affine) {
        for (int i = 0; i < gmaps.size(); ++i) {
            const auto& f = gmaps.maps[static_cast<std::size_t>(i)];
            const double norm = operator_norm(f.matrix());
            report.contraction_modulus = std::max(report.contraction_modulus, norm);
            report.invariance_margin =
                std::min(report.invariance_margin, 1.0 - (norm + f.offset().norm()));
        }
    } else {
        const int n_ball = std::max(512, opt.n_base_samples / 4);
        const auto bounds = parallel_map<std::pair<double, double>>(
            opt.n_threads, static_cast<std::size_t>(n_ball), [&](std::size_t i) {
                Rng gen(child_seed(opt.seed, 0x10000000ull + i));
                const Vec x = closed_ball_sample(d, 1.0, gen, i % 4 == 3);
                double worst_norm = 0.0, worst_image = 0.0;
                for (const auto& f : gmaps.maps) {
                    worst_norm = std::max(worst_norm, operator_norm(f.tangent_derivative(x)));
                    worst_image = std::max(worst_image, f.apply(x).norm());
                }
                return std::make_pair(worst_norm, worst_image);
            });
        for (const auto& [norm, image] : bounds) {
            report.contraction_modulus = std::max(report.contraction_modulus, norm);
            report.invariance_margin = std::min(report.invariance_margin, 1.0 - image);
        }
    }
    report.contraction_pass = report.contraction_modulus < 1.0;
    report.invariance_pass = report.invariance_margin > 0.0;
    if (!report.contraction_pass) {
        report.witness = "contraction fails: step derivative norm " +
                         format_double(report.contraction_modulus);
    } else if (!report.invariance_pass) {
        report.witness = "invariance fails: unit-ball image margin " +
                         format_double(report.invariance_margin);
    }

    // Shape part of each generator block, read off the maps under test: the
    // inverse of the normalized step derivative.  Affine blocks share one
    // matrix; otherwise the representative is evaluated at the preimage of
    // the center of V, where the family is built to act.
    std::vector<Mat> shapes;
    for (int s = 0; s < n_shapes; ++s) {
        const auto m = static_cast<std::size_t>(s * n_lattice);
        const auto& f = gmaps.maps[m];
        if (affine) {
            shapes.push_back(inverse(linalg::normalized(f.matrix())));
        } else {
            Vec y;
            if (!newton_preimage(f, fam.maps[m], Vec(d), y)) {
                throw BlenderError("assumption check: preimage iteration stalled for map " +
                                   std::to_string(m));
            }
            shapes.push_back(inverse(f.normalized_tangent_derivative(y)));
        }
    }

    // (i), fiber part alone: every sampled frame of the closed window must be
    // pulled strictly inside it by some shape.
    const auto fiber_margins = parallel_map<double>(
        opt.n_threads, static_cast<std::size_t>(opt.n_fiber_samples), [&](std::size_t i) {
            Rng gen(child_seed(opt.seed, 0x20000000ull + i));
            const Mat a = closed_window_sample(d, fam.simplex.region, gen, i % 4 == 3);
            double best = -std::numeric_limits<double>::infinity();
            for (const Mat& shape : shapes) {
                best = std::max(best, covering::region_membership(mat_log(shape * a).mat(),
                                                                  fam.simplex.region));
            }
            return best;
        });

    // (i), joint: for every sampled (point of V̄, frame) some generator must
    // pull the point strictly into V while its shape part keeps the frame
    // strictly inside the window.
    const auto pairs = parallel_map<PairResult>(
        opt.n_threads, static_cast<std::size_t>(opt.n_base_samples), [&](std::size_t i) {
            Rng gen(child_seed(opt.seed, i));
            const Vec x = closed_ball_sample(d, fam.v_radius, gen, i % 8 == 7);
            const Mat a = closed_window_sample(d, fam.simplex.region, gen, i % 8 == 3);

            // Affine shapes do not depend on the sample point.
            std::vector<double> fiber_cache;
            if (affine) {
                for (const Mat& shape : shapes) {
                    fiber_cache.push_back(covering::region_membership(
                        mat_log(shape * a).mat(), fam.simplex.region));
                }
            }

            PairResult best;
            best.combined = -std::numeric_limits<double>::infinity();
            for (int m = 0; m < fam.size(); ++m) {
                const auto& f = gmaps.maps[static_cast<std::size_t>(m)];
                double base_margin = 0.0;
                double fiber_margin = 0.0;
                if (affine) {
                    const Vec y = solve(f.matrix(), x - f.offset());
                    base_margin = fam.v_radius - y.norm();
                    fiber_margin = fiber_cache[static_cast<std::size_t>(m / n_lattice)];
                } else {
                    Vec y;
                    if (!newton_preimage(f, fam.maps[static_cast<std::size_t>(m)], x, y))
                        continue;
                    base_margin = fam.v_radius - y.norm();
                    if (base_margin <= best.combined) continue;
                    const Mat shape = inverse(f.normalized_tangent_derivative(y));
                    fiber_margin = covering::region_membership(mat_log(shape * a).mat(),
                                                               fam.simplex.region);
                }
                const double combined = std::min(base_margin, fiber_margin);
                if (combined > best.combined) {
                    best.combined = combined;
                    best.base = base_margin;
                    best.fiber = fiber_margin;
                }
            }
            if (best.combined <= kMarginFloor) {
                best.witness = "no generator covers x = " + format_point(x) +
                               " with the sampled frame, best margin " +
                               format_double(best.combined);
            }
            return best;
        });

    report.worst_base_margin = std::numeric_limits<double>::infinity();
    report.worst_fiber_margin = std::numeric_limits<double>::infinity();
    bool covering_ok = true;
    for (std::size_t i = 0; i < fiber_margins.size(); ++i) {
        if (covering_ok && fiber_margins[i] <= kMarginFloor) {
            covering_ok = false;
            if (report.witness.empty()) {
                report.witness = "no shape pulls sampled frame " + std::to_string(i) +
                                 " inside the window, best margin " +
                                 format_double(fiber_margins[i]);
            }
        }
        report.worst_fiber_margin = std::min(report.worst_fiber_margin, fiber_margins[i]);
    }
    for (const auto& p : pairs) {
        if (covering_ok && p.combined <= kMarginFloor) {
            covering_ok = false;
            if (report.witness.empty()) report.witness = p.witness;
        }
        report.worst_base_margin = std::min(report.worst_base_margin, p.base);
    }
    report.covering_pass = covering_ok;
    return report;
}

AssumptionReport verify_blender_assumptions(const BlenderFamily& fam,
                                            const AssumptionOptions& options) {
    return verify_impl(fam, fam.local_maps(), options);
}

AssumptionReport verify_blender_assumptions(const BlenderFamily& fam,
                                            const maps::GeneratorFamily& replacement,
                                            const AssumptionOptions& options) {
    return verify_impl(fam, replacement, options);
}

std::vector<Vec> hutchinson_attractor(const std::vector<AffineMap>& maps,
                                      int n_iterations, int n_points,
                                      std::uint64_t seed, int n_threads) {
    if (maps.empty()) throw BlenderError("attractor: empty family");
    const int d = maps.front().offset.dim();
    const auto n_maps = static_cast<std::uint64_t>(maps.size());
    return parallel_map<Vec>(n_threads, static_cast<std::size_t>(n_points),
                             [&](std::size_t p) {
                                 Rng gen(child_seed(seed, p));
                                 Vec x(d);
                                 for (int k = 0; k < n_iterations; ++k)
                                     x = maps[static_cast<std::size_t>(gen.below(n_maps))].apply(x);
                                 return x;
                             });
}

std::vector<Vec> hutchinson_attractor(const maps::GeneratorFamily& family,
                                      int n_iterations, int n_points,
                                      std::uint64_t seed, int n_threads) {
    if (family.maps.empty()) throw BlenderError("attractor: empty family");
    const int d = family.maps.front().manifold_dim();
    const auto n_maps = static_cast<std::uint64_t>(family.maps.size());
    return parallel_map<Vec>(
        n_threads, static_cast<std::size_t>(n_points), [&](std::size_t p) {
            Rng gen(child_seed(seed, p));
            Vec x(d);
            for (int k = 0; k < n_iterations; ++k)
                x = family.maps[static_cast<std::size_t>(gen.below(n_maps))].apply(x);
            return x;
        });
}

OccupancyResult grid_occupancy(const std::vector<Vec>& cloud, double ball_radius,
                               double cell_size) {
    if (cloud.empty()) throw BlenderError("occupancy: empty cloud");
    const auto cells = inside_cells(cloud.front().dim(), ball_radius, cell_size);

    OccupancyResult result;
    result.n_cells = static_cast<int>(cells.size());
    result.cell_size = cell_size;
    if (cells.empty()) return result;

    std::vector<bool> hit(cells.size(), false);
    for (const Vec& p : cloud) {
        const auto it = cells.find(cell_key(p, cell_size));
        if (it != cells.end()) hit[static_cast<std::size_t>(it->second)] = true;
    }
    for (bool h : hit) result.n_hit += h ? 1 : 0;
    result.fraction = static_cast<double>(result.n_hit) / static_cast<double>(result.n_cells);
    return result;
}

MinimalityResult minimality_probe(const BlenderFamily& fam, const Vec& x0, double rho,
                                  long max_steps, std::uint64_t seed) {
    if (!(x0.norm() < 1.0)) throw BlenderError("minimality probe: start outside the unit ball");
    if (!(rho > 0.0)) throw BlenderError("minimality probe: nonpositive resolution");

    // Targets: rho-grid centers inside V̄.  A later visit within rho covers
    // one; the start point itself does not count.
    std::vector<Vec> remaining;
    {
        const int kmax = static_cast<int>(std::floor(fam.v_radius / rho)) + 1;
        std::vector<int> key(static_cast<std::size_t>(fam.d), -kmax);
        do {
            Vec c(fam.d);
            for (int i = 0; i < fam.d; ++i) c[i] = rho * key[static_cast<std::size_t>(i)];
            if (c.norm() <= fam.v_radius) remaining.push_back(c);
        } while (advance(key, -kmax, kmax));
    }

    MinimalityResult result;
    result.n_targets = static_cast<int>(remaining.size());
    Rng gen(child_seed(seed, 0));
    const auto n_maps = static_cast<std::uint64_t>(fam.maps.size());
    Vec x = x0;
    for (long step = 1; step <= max_steps; ++step) {
        x = fam.maps[static_cast<std::size_t>(gen.below(n_maps))].apply(x);
        if (x.norm() <= fam.v_radius + rho) {
            for (std::size_t i = remaining.size(); i-- > 0;) {
                if ((x - remaining[i]).norm() <= rho) {
                    remaining[i] = remaining.back();
                    remaining.pop_back();
                }
            }
            if (remaining.empty()) {
                result.covered = true;
                result.steps = step;
                return result;
            }
        }
    }
    result.steps = max_steps;
    result.n_uncovered = static_cast<int>(remaining.size());
    remaining.resize(std::min<std::size_t>(remaining.size(), 8));
    result.uncovered = std::move(remaining);
    return result;
}

template <typename ApplyMap>
static ErgodicityResult ergodicity_core(const BlenderFamily& fam, std::uint64_t n_maps,
                                        const ApplyMap& apply_map, const Vec& seed_center,
                                        double seed_radius, int n_steps, int n_particles,
                                        double rho_grid, std::uint64_t seed,
                                        int n_threads) {
    if (!(seed_radius > 0.0) ||
        seed_center.norm() + seed_radius > fam.v_radius * (1.0 + 1e-12)) {
        throw BlenderError("ergodicity probe: seed ball is not inside V");
    }
    const auto cells = inside_cells(fam.d, fam.v_radius, rho_grid);
    ErgodicityResult result;
    result.n_cells = static_cast<int>(cells.size());
    result.n_steps = n_steps;
    result.n_particles = n_particles;
    if (cells.empty()) return result;

    const std::size_t n_words = (cells.size() + 63) / 64;
    const auto bitmaps = parallel_map<std::vector<std::uint64_t>>(
        n_threads, static_cast<std::size_t>(n_particles), [&](std::size_t p) {
            Rng gen(child_seed(seed, p));
            std::vector<std::uint64_t> bits(n_words, 0);
            Vec x = seed_center + closed_ball_sample(fam.d, seed_radius, gen, false);
            for (int k = 0;; ++k) {
                const auto it = cells.find(cell_key(x, rho_grid));
                if (it != cells.end()) {
                    const auto idx = static_cast<std::size_t>(it->second);
                    bits[idx / 64] |= std::uint64_t{1} << (idx % 64);
                }
                if (k == n_steps) break;
                x = apply_map(static_cast<std::size_t>(gen.below(n_maps)), x);
            }
            return bits;
        });

    // Disjunction in particle order: occupancy is exactly monotone in
    // n_steps and independent of the thread count.
    std::vector<std::uint64_t> merged(n_words, 0);
    for (const auto& bits : bitmaps)
        for (std::size_t w = 0; w < n_words; ++w) merged[w] |= bits[w];
    for (std::uint64_t w : merged) result.n_hit += std::popcount(w);
    result.occupancy = static_cast<double>(result.n_hit) / static_cast<double>(result.n_cells);
    return result;
}

ErgodicityResult ergodicity_probe(const BlenderFamily& fam, const Vec& seed_center,
                                  double seed_radius, int n_steps, int n_particles,
                                  double rho_grid, std::uint64_t seed, int n_threads) {
    return ergodicity_core(
        fam, static_cast<std::uint64_t>(fam.maps.size()),
        [&](std::size_t i, const Vec& x) { return fam.maps[i].apply(x); },
        seed_center, seed_radius, n_steps, n_particles, rho_grid, seed, n_threads);
}

ErgodicityResult ergodicity_probe(const BlenderFamily& fam,
                                  const maps::GeneratorFamily& replacement,
                                  const Vec& seed_center, double seed_radius,
                                  int n_steps, int n_particles, double rho_grid,
                                  std::uint64_t seed, int n_threads) {
    if (replacement.size() != fam.size())
        throw BlenderError("ergodicity probe: replacement family size mismatch");
    return ergodicity_core(
        fam, static_cast<std::uint64_t>(replacement.maps.size()),
        [&](std::size_t i, const Vec& x) { return replacement.maps[i].apply(x); },
        seed_center, seed_radius, n_steps, n_particles, rho_grid, seed, n_threads);
}

maps::GeneratorFamily perturbed_family(const BlenderFamily& fam, double c1_size,
                                       std::uint64_t seed) {
    if (!(c1_size > 0.0)) throw BlenderError("perturbation: nonpositive size");
    const int d = fam.d;

    // Fixed measurement grid on the closed unit ball, shared by every map so
    // the reported size means the same thing for all of them.
    std::vector<Vec> grid;
    grid.push_back(Vec(d));
    for (const Vec& dir : maps::direction_set(d, 64, child_seed(seed, 0xC1000ull))) {
        for (int shell = 1; shell <= 8; ++shell) grid.push_back(dir * (shell / 8.0));
    }

    maps::GeneratorFamily out;
    for (int i = 0; i < fam.size(); ++i) {
        Rng gen(child_seed(seed, static_cast<std::uint64_t>(i)));
        auto data = std::make_shared<maps::QuadBumpData>();
        data->support_radius = 2.0;
        for (int c = 0; c < d; ++c) {
            Mat q(d);
            for (int a = 0; a < d; ++a) {
                for (int b = a; b < d; ++b) {
                    q.at(a, b) = gen.uniform(-1.0, 1.0);
                    q.at(b, a) = q.at(a, b);
                }
            }
            data->quad.push_back(q);
        }

        // The bump is linear in the coefficients, so one measurement of the
        // raw C1 size fixes the rescaling.
        const auto probe = maps::LocalMap::quad_bump(Mat(d), Vec(d), data);
        double raw = 0.0;
        for (const Vec& x : grid) {
            raw = std::max(raw, probe.apply(x).norm());
            raw = std::max(raw, operator_norm(probe.tangent_derivative(x)));
        }
        if (!(raw > 0.0)) throw BlenderError("perturbation: degenerate bump draw");
        auto scaled = std::make_shared<maps::QuadBumpData>();
        scaled->support_radius = data->support_radius;
        for (const Mat& q : data->quad) scaled->quad.push_back(q * (c1_size / raw));

        const AffineMap& m = fam.maps[static_cast<std::size_t>(i)];
        out.maps.push_back(maps::LocalMap::quad_bump(m.linear, m.offset, scaled));
        out.labels.push_back("perturbed-" + std::to_string(i));
    }
    out.metadata["c1_size"] = c1_size;
    return out;
}

std::string to_json(const BlenderFamily& fam) {
    nlohmann::json j;
    j["d"] = fam.d;
    j["epsilon"] = fam.epsilon;
    j["t"] = fam.simplex.t;
    j["r"] = fam.simplex.r;
    j["lambda"] = fam.lambda;
    j["lattice"] = nlohmann::json::array();
    for (const Vec& v : fam.lattice) {
        nlohmann::json row = nlohmann::json::array();
        for (int i = 0; i < v.dim(); ++i) row.push_back(v[i]);
        j["lattice"].push_back(row);
    }
    j["generators"] = nlohmann::json::array();
    for (const auto& g : fam.simplex.family.maps) {
        nlohmann::json rows = nlohmann::json::array();
        for (int a = 0; a < fam.d; ++a) {
            nlohmann::json row = nlohmann::json::array();
            for (int b = 0; b < fam.d; ++b) row.push_back(g.matrix().at(a, b));
            rows.push_back(row);
        }
        j["generators"].push_back(rows);
    }
    return j.dump();
}

BlenderFamily blender_from_json(const std::string& text) {
    const nlohmann::json j = nlohmann::json::parse(text);
    BlenderFamily fam = build_affine_blender(j.at("d").get<int>(),
                                             j.at("epsilon").get<double>(),
                                             j.at("t").get<double>(),
                                             j.at("r").get<double>());
    // The build is deterministic, so the stored pieces must come back bit for
    // bit; anything else means the parameters and the payload disagree.
    if (j.at("lambda").get<double>() != fam.lambda ||
        j.at("lattice").size() != fam.lattice.size()) {
        throw BlenderError("blender reload: payload does not match its parameters");
    }
    for (std::size_t i = 0; i < fam.lattice.size(); ++i) {
        for (int k = 0; k < fam.d; ++k) {
            if (j.at("lattice")[i][static_cast<std::size_t>(k)].get<double>() !=
                fam.lattice[i][k]) {
                throw BlenderError("blender reload: lattice offset mismatch");
            }
        }
    }
    for (int g = 0; g < fam.d * fam.d; ++g) {
        const auto& rows = j.at("generators")[static_cast<std::size_t>(g)];
        const Mat& m = fam.simplex.family.maps[static_cast<std::size_t>(g)].matrix();
        for (int a = 0; a < fam.d; ++a) {
            for (int b = 0; b < fam.d; ++b) {
                if (rows[static_cast<std::size_t>(a)][static_cast<std::size_t>(b)]
                        .get<double>() != m.at(a, b)) {
                    throw BlenderError("blender reload: generator mismatch");
                }
            }
        }
    }
    return fam;
}

}  // namespace qcb::blender
