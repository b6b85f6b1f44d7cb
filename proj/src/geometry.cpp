#include "qcb/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "qcb/parallel.hpp"
#include "qcb/rng.hpp"

namespace qcb::geometry {

using frame::Model;
using linalg::co_norm;
using linalg::conformality;
using linalg::determinant;
using linalg::hs_norm;
using linalg::operator_norm;

namespace {

constexpr double kPi = 3.14159265358979323846;
// Certified radii within this relative distance of the target count as
// reached; boundary probes carry rounding of this order even for exact maps.
constexpr double kReachedSlack = 1e-12;

std::string format_double(double x) {
    std::ostringstream out;
    out.precision(6);
    out << x;
    return out.str();
}

Vec column(const Mat& m, int j) {
    Vec out(m.dim());
    for (int i = 0; i < m.dim(); ++i) out[i] = m.at(i, j);
    return out;
}

double point_distance(Model model, const Vec& a, const Vec& b) {
    if (model == Model::euclidean) return (a - b).norm();
    const double c = std::clamp(a.dot(b), -1.0, 1.0);
    return std::acos(c);
}

// Probe at arc/line parameter s from the base along a unit tangent direction.
Vec probe_point(Model model, const Vec& base, const Vec& tangent_dir, double s) {
    if (model == Model::euclidean) return base + s * tangent_dir;
    const Vec u = frame::tangent_to_ambient(base, tangent_dir);
    Vec p = std::cos(s) * base + std::sin(s) * u;
    return p * (1.0 / p.norm());
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

// Uniform draw from the closed ball of the given radius around the center.
Vec ball_sample(const Vec& center, double radius, Rng& gen) {
    const int dim = center.dim();
    const Vec u = gaussian_direction(dim, gen);
    const double r = radius * std::pow(gen.uniform(), 1.0 / dim);
    return center + r * u;
}

struct OrbitData {
    std::vector<Vec> centers;      // base orbit, length n_steps + 1
    std::vector<const maps::LocalMap*> steps;
    Mat tangent_product;           // derivative of the full composition
    double min_expansion = 0.0;    // smallest single-step co-norm on the orbit
};

// Resolves the first n_steps of a branch against its family, walks the base
// orbit and accumulates the tangent derivative product along it.
OrbitData resolve_orbit(const maps::GeneratorFamily& family, const Branch& b,
                        const FramePoint& start, int n_steps) {
    if (n_steps < 1 || n_steps > b.length()) {
        throw GeometryError("orbit probe: step count " + std::to_string(n_steps) +
                            " outside the branch length " + std::to_string(b.length()));
    }
    const Model model = start.base.model;
    const int d = start.base.manifold_dim();

    OrbitData orbit;
    orbit.centers.reserve(static_cast<std::size_t>(n_steps) + 1);
    orbit.centers.push_back(start.base.coords);
    orbit.steps.reserve(static_cast<std::size_t>(n_steps));
    orbit.tangent_product = Mat::identity(d);
    orbit.min_expansion = std::numeric_limits<double>::infinity();

    for (int k = 0; k < n_steps; ++k) {
        const int idx = b.map_indices[static_cast<std::size_t>(k)];
        if (idx < 0 || idx >= family.size()) {
            throw GeometryError("orbit probe: branch index " + std::to_string(idx) +
                                " outside the family");
        }
        const maps::LocalMap& f = family.maps[static_cast<std::size_t>(idx)];
        if (f.model() != model || f.manifold_dim() != d) {
            throw GeometryError("orbit probe: map " + std::to_string(idx) +
                                " acts on a different space than the start point");
        }
        const Vec& p = orbit.centers.back();
        const Mat step = f.tangent_derivative(p);
        orbit.min_expansion = std::min(orbit.min_expansion, co_norm(step));
        orbit.tangent_product = step * orbit.tangent_product;
        orbit.steps.push_back(&f);
        orbit.centers.push_back(f.apply(p));
    }
    return orbit;
}

}  // namespace

ContractionSpec::ContractionSpec(double lambda_lo, double lambda_hi, double kappa,
                                 double alpha, double c)
    : lambda_lo(lambda_lo),
      lambda_hi(lambda_hi),
      kappa(kappa),
      alpha(alpha),
      c(c) {
    if (!(lambda_lo > 0.0) || !(lambda_lo < lambda_hi) || !(lambda_hi < 1.0)) {
        throw GeometryError("contraction spec: need 0 < lambda_lo < lambda_hi < 1");
    }
    if (!(kappa >= 1.0)) {
        throw GeometryError("contraction spec: conformality bound below 1");
    }
    if (!(alpha > 0.0) || alpha > 1.0) {
        throw GeometryError("contraction spec: exponent outside (0, 1]");
    }
    if (!(c > 0.0)) {
        throw GeometryError("contraction spec: nonpositive noise constant");
    }
}

KeyLemmaResult key_lemma_ratio(const std::vector<Mat>& d_seq, const Vec& y0,
                               double c, double alpha, NoisePolicy policy,
                               std::uint64_t seed) {
    if (d_seq.empty()) throw GeometryError("shadowing probe: empty map sequence");
    const int d = d_seq.front().dim();
    if (y0.dim() != d) {
        throw GeometryError("shadowing probe: start dimension does not match the maps");
    }
    if (!(c > 0.0) || !(alpha > 0.0) || alpha > 1.0) {
        throw GeometryError("shadowing probe: need c > 0 and alpha in (0, 1]");
    }

    double lambda_hi = 0.0;
    for (const Mat& m : d_seq) {
        if (m.dim() != d) throw GeometryError("shadowing probe: mixed dimensions");
        lambda_hi = std::max(lambda_hi, operator_norm(m));
    }
    if (!(lambda_hi < 1.0)) {
        throw GeometryError("shadowing probe: sequence is not contracting, largest step norm " +
                            format_double(lambda_hi));
    }

    const double xi_prime =
        std::pow(c, -1.0 / alpha) * std::pow(1.0 - lambda_hi, 1.0 / alpha);
    const double ny0 = y0.norm();
    if (!(ny0 > 0.0)) throw GeometryError("shadowing probe: zero start point");
    if (ny0 > xi_prime) {
        throw GeometryError("shadowing probe: |y0| = " + format_double(ny0) +
                            " exceeds the admissibility radius " + format_double(xi_prime));
    }

    const int n = static_cast<int>(d_seq.size());

    // Noise directions for the adversarial policy: top input-singular vector
    // of the still-unapplied tail of the product, accumulated backwards in
    // renormalized form so deep contractions cannot underflow.
    std::vector<Vec> adversarial_dir;
    if (policy == NoisePolicy::adversarial_radial) {
        adversarial_dir.assign(static_cast<std::size_t>(n), Vec(d));
        Mat tail = Mat::identity(d);
        for (int i = n - 1; i >= 0; --i) {
            adversarial_dir[static_cast<std::size_t>(i)] = column(linalg::svd(tail).v, 0);
            tail = tail * d_seq[static_cast<std::size_t>(i)];
            tail = tail * (1.0 / hs_norm(tail));
        }
    }

    Rng gen(child_seed(seed, 0));
    KeyLemmaResult result;
    result.ratios.reserve(static_cast<std::size_t>(n));
    result.xi_prime = xi_prime;
    result.lambda_hi = lambda_hi;

    Vec y = y0;
    Vec x = y0;
    double log_det = 0.0;
    const double den_base = std::pow(ny0, 1.0 + alpha);
    for (int i = 0; i < n; ++i) {
        const Mat& step = d_seq[static_cast<std::size_t>(i)];
        const double cap = c * std::pow(y.norm(), 1.0 + alpha);
        x = step * x;
        y = step * y;
        if (policy == NoisePolicy::adversarial_radial) {
            const Vec& u = adversarial_dir[static_cast<std::size_t>(i)];
            const double sign = u.dot(y - x) >= 0.0 ? 1.0 : -1.0;
            y = y + u * (sign * 0.999 * cap);
        } else if (policy == NoisePolicy::seeded_uniform) {
            const Vec u = gaussian_direction(d, gen);
            y = y + u * (gen.uniform() * 0.999 * cap);
        }
        log_det += std::log(std::abs(determinant(step)));
        const double den = std::exp(log_det / d) * den_base;
        if (den < 1e-280) {
            throw GeometryError("shadowing probe: determinant underflow after " +
                                std::to_string(i + 1) + " steps, shorten the sequence");
        }
        const double ratio = (y - x).norm() / den;
        result.ratios.push_back(ratio);
        result.max_ratio = std::max(result.max_ratio, ratio);
    }
    return result;
}

ContractingSequence conformal_contracting_sequence(int d, int n, double scale_lo,
                                                   double scale_hi,
                                                   std::uint64_t seed) {
    if (n < 1) throw GeometryError("contracting sequence: empty request");
    if (!(scale_lo > 0.0) || !(scale_lo <= scale_hi) || !(scale_hi < 1.0)) {
        throw GeometryError("contracting sequence: scales must satisfy 0 < lo <= hi < 1");
    }
    const int n_vertices = d * d;
    const auto simplex = covering::build_simplex_generators(d, 1.0 / n_vertices, 0.1);

    branch::GreedyOptions options;
    options.n_steps = n;
    options.tie_break = branch::TieBreak::seeded;
    options.seed = child_seed(seed, 0);
    options.tie_tolerance = 1e-9;
    FramePoint start{frame::AmbientPoint{Model::euclidean, Vec(d)}, Mat::identity(d)};
    const Branch walk =
        branch::greedy_conformal_branch(simplex.family, covering::SimplexWindow{simplex.region},
                                        start, options);

    Rng gen(child_seed(seed, 1));
    ContractingSequence out;
    out.maps.reserve(static_cast<std::size_t>(n));
    out.lambda_lo_measured = std::numeric_limits<double>::infinity();
    for (int i = 0; i < n; ++i) {
        const int idx = walk.map_indices[static_cast<std::size_t>(i)];
        const Mat step = simplex.family.maps[static_cast<std::size_t>(idx)].matrix() *
                         gen.uniform(scale_lo, scale_hi);
        out.lambda_lo_measured = std::min(out.lambda_lo_measured, co_norm(step));
        out.lambda_hi_measured = std::max(out.lambda_hi_measured, operator_norm(step));
        out.maps.push_back(step);
    }
    // Scalars commute, so every accumulated product is a scalar times the
    // branch's frame product and inherits its conformality bound.
    for (double k : walk.kappa_history) out.kappa_bound = std::max(out.kappa_bound, k);
    if (!(out.lambda_hi_measured < 1.0)) {
        throw GeometryError("contracting sequence: scale_hi leaves no room for the "
                            "generator norms, largest step norm " +
                            format_double(out.lambda_hi_measured));
    }
    return out;
}

RoundnessResult ball_roundness(const maps::GeneratorFamily& family, const Branch& b,
                               const FramePoint& start, double xi, int n_steps,
                               int n_directions, std::uint64_t seed, int n_threads,
                               const std::optional<covering::BallDomain>& domain) {
    if (!(xi > 0.0)) throw GeometryError("roundness probe: nonpositive displacement");
    if (n_directions < 4) throw GeometryError("roundness probe: need at least 4 directions");
    const OrbitData orbit = resolve_orbit(family, b, start, n_steps);
    if (!(orbit.min_expansion > 1.0)) {
        throw GeometryError("roundness probe: branch is not expanding, smallest step "
                            "expansion " + format_double(orbit.min_expansion));
    }

    const Model model = start.base.model;
    const int d = start.base.manifold_dim();
    const Vec& c0 = orbit.centers.front();
    const Vec& image_center = orbit.centers.back();
    const std::vector<Vec> directions = maps::direction_set(d, n_directions, seed);

    auto displacement = [&](const Vec& u, double s) -> double {
        Vec q = probe_point(model, c0, u, s);
        for (const maps::LocalMap* f : orbit.steps) {
            if (domain && !domain->contains(q)) {
                throw GeometryError("roundness probe: displacement " + format_double(xi) +
                                    " pushes the probe outside the domain");
            }
            q = f->apply(q);
        }
        return point_distance(model, q, image_center);
    };

    const std::vector<double> radii =
        parallel_map<double>(n_threads, directions.size(), [&](std::size_t i) {
            const Vec& u = directions[i];
            // First-order guess from the tangent product, then doubling until
            // the displacement brackets the target.
            const double stretch = (orbit.tangent_product * u).norm();
            double hi = stretch > 0.0 ? xi / stretch : xi;
            if (model == Model::sphere) hi = std::min(hi, kPi);
            int guard = 0;
            while (displacement(u, hi) < xi) {
                if (++guard > 200 || (model == Model::sphere && hi >= kPi)) {
                    throw GeometryError("roundness probe: displacement " +
                                        format_double(xi) + " is out of the map's reach");
                }
                hi = model == Model::sphere ? std::min(2.0 * hi, kPi) : 2.0 * hi;
            }
            double lo = 0.0;
            while (hi - lo > 1e-12 * hi) {
                const double mid = 0.5 * (lo + hi);
                (displacement(u, mid) < xi ? lo : hi) = mid;
            }
            return 0.5 * (lo + hi);
        });

    RoundnessResult result;
    result.radii = radii;
    result.r_inner = *std::min_element(radii.begin(), radii.end());
    result.r_outer = *std::max_element(radii.begin(), radii.end());
    result.theta = result.r_outer / result.r_inner;
    return result;
}

DistortionResult distortion_ratio(const std::vector<maps::LocalMap>& h_seq,
                                  const Vec& center, double radius, int n_steps,
                                  int n_samples, double alpha, std::uint64_t seed,
                                  int n_threads) {
    if (h_seq.empty()) throw GeometryError("distortion probe: empty map sequence");
    if (!(radius > 0.0)) throw GeometryError("distortion probe: nonpositive radius");
    if (n_steps < 1) throw GeometryError("distortion probe: need at least one step");
    if (n_samples < 2) throw GeometryError("distortion probe: need at least two samples");
    if (!(alpha > 0.0) || alpha > 1.0) {
        throw GeometryError("distortion probe: exponent outside (0, 1]");
    }
    for (const auto& f : h_seq) {
        if (f.model() != Model::euclidean || f.manifold_dim() != center.dim()) {
            throw GeometryError("distortion probe: maps must act on the center's space");
        }
    }

    struct SampleTrace {
        double log_det = 0.0;
        double max_norm = 0.0;
        std::vector<Vec> pos;    // iterate fed into each step
        std::vector<double> g;   // log |det Dh| at that iterate
    };

    // Sample 0 is the center itself; the ratio is measured against it.
    const auto traces = parallel_map<SampleTrace>(
        n_threads, static_cast<std::size_t>(n_samples), [&](std::size_t j) {
            Rng gen(child_seed(seed, j));
            SampleTrace t;
            t.pos.reserve(static_cast<std::size_t>(n_steps));
            t.g.reserve(static_cast<std::size_t>(n_steps));
            Vec p = j == 0 ? center : ball_sample(center, radius, gen);
            for (int k = 0; k < n_steps; ++k) {
                const maps::LocalMap& f =
                    h_seq[static_cast<std::size_t>(k) % h_seq.size()];
                const Mat jac = f.tangent_derivative(p);
                const double gk = std::log(std::abs(determinant(jac)));
                t.max_norm = std::max(t.max_norm, operator_norm(jac));
                t.log_det += gk;
                t.pos.push_back(p);
                t.g.push_back(gk);
                p = f.apply(p);
            }
            return t;
        });

    DistortionResult result;
    for (const auto& t : traces) result.lambda_bar = std::max(result.lambda_bar, t.max_norm);
    if (!(result.lambda_bar < 1.0)) {
        throw GeometryError("distortion probe: contraction hypothesis fails, sampled "
                            "step norm " + format_double(result.lambda_bar));
    }

    result.l1 = 1.0;
    for (const auto& t : traces) {
        const double rho = std::exp(t.log_det - traces.front().log_det);
        result.l1 = std::max(result.l1, std::max(rho, 1.0 / rho));
    }

    // Hölder constant of log |det Dh| measured across sample pairs, step by
    // step so only points seen by the same map are compared.
    for (int k = 0; k < n_steps; ++k) {
        for (int a = 0; a < n_samples; ++a) {
            for (int bdx = a + 1; bdx < n_samples; ++bdx) {
                const auto& ta = traces[static_cast<std::size_t>(a)];
                const auto& tb = traces[static_cast<std::size_t>(bdx)];
                const double num =
                    std::abs(ta.g[static_cast<std::size_t>(k)] - tb.g[static_cast<std::size_t>(k)]);
                if (num == 0.0) continue;
                const double dist = (ta.pos[static_cast<std::size_t>(k)] -
                                     tb.pos[static_cast<std::size_t>(k)]).norm();
                if (dist < 1e-300) continue;
                result.holder_constant =
                    std::max(result.holder_constant, num / std::pow(dist, alpha));
            }
        }
    }
    result.bound = std::exp(result.holder_constant * std::pow(radius, alpha) /
                            (1.0 - std::pow(result.lambda_bar, alpha)));
    return result;
}

InfiltrationResult infiltration_check(const std::vector<maps::LocalMap>& h_seq,
                                      const Vec& center, double xi0, int n_samples,
                                      int n_steps, std::uint64_t seed, int n_threads) {
    if (h_seq.empty()) throw GeometryError("infiltration probe: empty map sequence");
    if (!(xi0 > 0.0)) throw GeometryError("infiltration probe: nonpositive radius");
    if (n_samples < 1 || n_steps < 1) {
        throw GeometryError("infiltration probe: need at least one sample and one step");
    }
    for (const auto& f : h_seq) {
        if (f.model() != Model::euclidean || f.manifold_dim() != center.dim()) {
            throw GeometryError("infiltration probe: maps must act on the center's space");
        }
    }

    // Per-sample conformality of the derivative product after each step;
    // sample 0 is the center itself.
    const auto per_sample = parallel_map<std::vector<double>>(
        n_threads, static_cast<std::size_t>(n_samples), [&](std::size_t j) {
            Rng gen(child_seed(seed, j));
            Vec p = j == 0 ? center : ball_sample(center, xi0, gen);
            Mat product = Mat::identity(center.dim());
            std::vector<double> kappas;
            kappas.reserve(static_cast<std::size_t>(n_steps));
            for (int k = 0; k < n_steps; ++k) {
                const maps::LocalMap& f =
                    h_seq[static_cast<std::size_t>(k) % h_seq.size()];
                product = f.tangent_derivative(p) * product;
                kappas.push_back(conformality(product));
                p = f.apply(p);
            }
            return kappas;
        });

    InfiltrationResult result;
    result.per_step_max.assign(static_cast<std::size_t>(n_steps), 0.0);
    for (const auto& kappas : per_sample) {
        for (int k = 0; k < n_steps; ++k) {
            result.per_step_max[static_cast<std::size_t>(k)] =
                std::max(result.per_step_max[static_cast<std::size_t>(k)],
                         kappas[static_cast<std::size_t>(k)]);
        }
    }
    for (double k : result.per_step_max) result.kappa_bar = std::max(result.kappa_bar, k);
    return result;
}

GrowthResult ball_growth_steps(const maps::GeneratorFamily& family, const Branch& b,
                               const FramePoint& start, double s0, double rho,
                               int n_directions, std::uint64_t seed, int n_threads,
                               int max_steps) {
    if (!(s0 > 0.0) || !(rho > 0.0)) {
        throw GeometryError("growth probe: nonpositive radius");
    }
    if (n_directions < 4) throw GeometryError("growth probe: need at least 4 directions");
    GrowthResult result;
    if (s0 >= rho * (1.0 - kReachedSlack)) {
        result.eta = std::numeric_limits<double>::infinity();
        return result;
    }

    const int scan_limit = std::min(b.length(), max_steps);
    if (scan_limit < 1) throw GeometryError("growth probe: empty branch");
    const OrbitData orbit = resolve_orbit(family, b, start, scan_limit);
    result.eta = orbit.min_expansion;
    if (!(result.eta > 1.0)) {
        throw GeometryError("growth probe: branch is not expanding, smallest step "
                            "expansion " + format_double(result.eta));
    }
    result.bound_steps =
        static_cast<int>(std::ceil(std::log(rho / s0) / std::log(result.eta))) + 1;
    // The certificate can only lag the expansion bound by rounding, so a
    // horizon a few steps past the bound is enough; running the probes to the
    // full branch length would just amplify them astronomically.
    const int horizon = std::min(scan_limit, result.bound_steps + 8);

    const Model model = start.base.model;
    const int d = start.base.manifold_dim();
    const std::vector<Vec> directions = maps::direction_set(d, n_directions, seed);

    // Distance of each boundary probe to the image center after every step.
    const auto probe_dists = parallel_map<std::vector<double>>(
        n_threads, directions.size(), [&](std::size_t i) {
            Vec q = probe_point(model, orbit.centers.front(), directions[i], s0);
            std::vector<double> dists;
            dists.reserve(static_cast<std::size_t>(horizon));
            for (int k = 0; k < horizon; ++k) {
                q = orbit.steps[static_cast<std::size_t>(k)]->apply(q);
                dists.push_back(point_distance(model, q,
                                               orbit.centers[static_cast<std::size_t>(k) + 1]));
            }
            return dists;
        });

    const std::size_t n_dirs = directions.size();
    for (int k = 0; k < horizon; ++k) {
        double min_dist = std::numeric_limits<double>::infinity();
        double slack = 0.0;
        for (std::size_t i = 0; i < n_dirs; ++i) {
            const double di = probe_dists[i][static_cast<std::size_t>(k)];
            min_dist = std::min(min_dist, di);
            // Neighbor variation along the direction sequence (adjacent
            // angles in the plane, consecutive spiral points above).
            if (i + 1 < n_dirs || d == 2) {
                const double dj = probe_dists[(i + 1) % n_dirs][static_cast<std::size_t>(k)];
                slack = std::max(slack, std::abs(di - dj));
            }
        }
        result.inner_radii.push_back(min_dist - slack);
        if (min_dist - slack >= rho * (1.0 - kReachedSlack)) {
            result.n = k + 1;
            return result;
        }
    }
    throw GeometryError("growth probe: target radius " + format_double(rho) +
                        " not certified within " + std::to_string(horizon) + " steps");
}

}  // namespace qcb::geometry
