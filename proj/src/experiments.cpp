#include "qcb/experiments.hpp"

#include <json.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "qcb/blender.hpp"
#include "qcb/branch.hpp"
#include "qcb/covering.hpp"
#include "qcb/frame.hpp"
#include "qcb/geometry.hpp"
#include "qcb/linalg.hpp"
#include "qcb/maps.hpp"
#include "qcb/parallel.hpp"
#include "qcb/rng.hpp"
#include "qcb/sphere.hpp"

namespace qcb::experiments {

namespace {

using linalg::Mat;
using linalg::Vec;
using nlohmann::json;

// One evaluated gate.  Every gate a runner evaluates lands in the summary's
// check list; the summary's passed flag is their conjunction.
struct Check {
    std::string name;
    bool passed = false;
    double value = 0.0;
    double threshold = 0.0;
};

std::string fmt17(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return std::string(buf);
}

std::string csv_field(const std::string& s) {
    if (s.find_first_of(",\"\r\n") == std::string::npos) return s;
    std::string out = "\"";
    for (char c : s) {
        out += c;
        if (c == '"') out += '"';
    }
    out += '"';
    return out;
}

frame::FramePoint origin_frame(int d) {
    return {frame::AmbientPoint{frame::Model::euclidean, Vec(d)}, Mat::identity(d)};
}

branch::Branch branch_prefix(const branch::Branch& b, int n) {
    branch::Branch out;
    out.map_indices.assign(b.map_indices.begin(), b.map_indices.begin() + n);
    return out;
}

Mat seeded_traceless(Rng& gen, int d, double size) {
    Mat w(d);
    for (int i = 0; i < d; ++i)
        for (int j = 0; j < d; ++j) w.at(i, j) = gen.normal();
    double shift = w.trace() / d;
    for (int i = 0; i < d; ++i) w.at(i, i) -= shift;
    return w * (size / linalg::hs_norm(w));
}

// Multiplies each generator on the left by exp of a seeded traceless bump of
// the given Frobenius size.
maps::GeneratorFamily bumped_generators(const maps::GeneratorFamily& family,
                                        double delta, std::uint64_t seed) {
    maps::GeneratorFamily out;
    Rng gen(seed);
    for (const auto& f : family.maps) {
        Mat w = seeded_traceless(gen, f.matrix().dim(), delta);
        out.maps.push_back(maps::LocalMap::affine(
            linalg::mat_exp(linalg::Traceless(w)) * f.matrix(), Vec(f.matrix().dim())));
    }
    return out;
}

// Seeded element of SL(n, R) with conformality at least min_kappa, built by
// normalizing a Gaussian matrix and flipping one column when the determinant
// lands negative.
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
    throw ExperimentError("sphere run: no special-linear sample after 1000 attempts");
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
Mat fd_derivative(const sphere::ProjectiveMap& a, const Vec& x, double h) {
    const Vec fx = sphere::sphere_map(a, x);
    const auto bx = tangent_cols(x);
    const auto bf = tangent_cols(fx);
    const int d = x.dim() - 1;
    Mat out(d);
    for (int j = 0; j < d; ++j) {
        Vec xp = x * std::cos(h) + bx[static_cast<std::size_t>(j)] * std::sin(h);
        Vec xm = x * std::cos(h) - bx[static_cast<std::size_t>(j)] * std::sin(h);
        Vec fp = sphere::sphere_map(a, xp * (1.0 / xp.norm()));
        Vec fm = sphere::sphere_map(a, xm * (1.0 / xm.norm()));
        for (int i = 0; i < d; ++i)
            out.at(i, j) = bf[static_cast<std::size_t>(i)].dot(fp - fm) / (2.0 * h);
    }
    return out;
}

// Plane contraction with a seeded quadratic bump: smooth, non-affine, and
// contracting as long as the bump strength stays well below 1 - scale.
maps::LocalMap bumpy_contraction(double scale, double strength, std::uint64_t seed) {
    constexpr double tau = 6.28318530717958647692;
    Rng gen(child_seed(seed, 99));
    auto data = std::make_shared<maps::QuadBumpData>();
    data->support_radius = 3.0;
    for (int i = 0; i < 2; ++i) {
        Mat q(2);
        for (int r = 0; r < 2; ++r) {
            for (int c = r; c < 2; ++c) {
                q.at(r, c) = strength * gen.uniform(-1.0, 1.0);
                q.at(c, r) = q.at(r, c);
            }
        }
        data->quad.push_back(q);
    }
    Mat rot = Mat::plane_rotation(2, 0, 1, gen.uniform(0.0, tau));
    return maps::LocalMap::quad_bump(rot * scale, Vec(2), data);
}

RunResult assemble(const config::ExperimentConfig& cfg, const std::vector<Check>& checks,
                   json results, std::vector<std::pair<std::string, std::string>> files) {
    json summary;
    summary["schema_version"] = config::summary_schema_version;
    summary["version"] = config::artifact_version;
    summary["kind"] = cfg.kind;
    summary["seed"] = cfg.seed;
    summary["config"] = json::parse(config::canonical_json(cfg));
    summary["config_hash"] = config::config_hash(cfg);
    json rows = json::array();
    bool all = true;
    for (const auto& c : checks) {
        rows.push_back({{"name", c.name},
                        {"passed", c.passed},
                        {"threshold", c.threshold},
                        {"value", c.value}});
        all = all && c.passed;
    }
    summary["checks"] = rows;
    summary["passed"] = all;
    summary["results"] = std::move(results);
    RunResult out;
    out.summary_json = summary.dump();
    out.data_files = std::move(files);
    out.passed = all;
    return out;
}

RunResult run_covering(const config::ExperimentConfig& cfg) {
    auto tuned = covering::auto_tune_parameters(cfg.dimension, cfg.t_lo, cfg.t_hi, cfg.r_lo,
                                                cfg.r_hi, cfg.grid_per_axis, cfg.threads);
    const auto& cert = tuned.certificate;

    auto fam = covering::build_simplex_generators(cfg.dimension, tuned.t, tuned.r);
    auto bumped = bumped_generators(fam.family, cfg.perturbation, child_seed(cfg.seed, 1));
    auto pert = covering::verify_covering_group(bumped, fam.region, cfg.grid_per_axis,
                                                cfg.threads);

    std::vector<Check> checks = {
        {"tuned family pulls every sample inward",
         cert.passed && covering::certificate_consistent(cert), cert.worst_margin,
         cert.lipschitz_slack * cert.grid_resolution},
        {"perturbed family keeps the covering margin",
         pert.passed && covering::certificate_consistent(pert), pert.worst_margin,
         pert.lipschitz_slack * pert.grid_resolution},
    };

    json results;
    results["t"] = tuned.t;
    results["r"] = tuned.r;
    results["n_samples"] = cert.n_samples;
    results["worst_margin"] = cert.worst_margin;
    results["lipschitz_slack"] = cert.lipschitz_slack;
    results["grid_resolution"] = cert.grid_resolution;
    results["perturbed_margin"] = pert.worst_margin;
    results["perturbed_slack"] = pert.lipschitz_slack;

    std::string csv = "sample_id,generator\n";
    for (std::size_t i = 0; i < cert.witness_map.size(); ++i)
        csv += std::to_string(i) + "," + std::to_string(cert.witness_map[i]) + "\n";

    return assemble(cfg, checks, std::move(results), {{"covering_witness.csv", csv}});
}

RunResult run_branch(const config::ExperimentConfig& cfg) {
    const int d = cfg.dimension;
    auto greedy_fam = covering::build_simplex_generators(d, 0.25, 0.1);
    covering::FrameWindow window = covering::SimplexWindow{greedy_fam.region};
    const double h_bound = covering::window_size_bound(window);
    const double kappa_bound = std::pow(h_bound, d * d);

    branch::GreedyOptions gopt;
    gopt.n_steps = cfg.n_steps;
    auto greedy = branch::greedy_conformal_branch(greedy_fam.family, window, origin_frame(d),
                                                  gopt);
    auto gstats = branch::branch_stats(greedy);

    // The random ensemble runs at a larger generator scale than the greedy
    // window branch: the per-step drift must clear the slope-estimate noise
    // within the fixed step budget for every seed.
    auto random_fam = covering::build_simplex_generators(d, 0.25, 0.3);
    auto stats = parallel_map<branch::BranchStats>(
        cfg.threads, static_cast<std::size_t>(cfg.n_seeds), [&](std::size_t s) {
            branch::RandomOptions ropt;
            ropt.n_steps = cfg.n_steps;
            ropt.seed = child_seed(cfg.seed, 200 + s);
            auto b = branch::random_branch(random_fam.family, origin_frame(d), ropt);
            return branch::branch_stats(b);
        });

    double slope_sum = 0.0;
    int positive = 0;
    for (const auto& st : stats) {
        slope_sum += st.lyapunov_slope;
        if (st.lyapunov_slope > 0.0) ++positive;
    }
    const double mean_slope = slope_sum / static_cast<double>(stats.size());
    const double positive_fraction =
        static_cast<double>(positive) / static_cast<double>(stats.size());

    std::vector<Check> checks = {
        {"greedy branch conformality stays below the window bound",
         gstats.max_kappa <= kappa_bound, gstats.max_kappa, kappa_bound},
        {"random branches expand on average", mean_slope > 0.0, mean_slope, 0.0},
        {"random branch expansion is almost sure", positive_fraction >= 0.99,
         positive_fraction, 0.99},
    };

    json results;
    results["window_bound"] = h_bound;
    results["kappa_bound"] = kappa_bound;
    results["greedy_max_kappa"] = gstats.max_kappa;
    results["greedy_min_expansion"] = gstats.min_expansion;
    results["mean_slope"] = mean_slope;
    results["positive_fraction"] = positive_fraction;
    results["n_seeds"] = cfg.n_seeds;
    results["n_steps"] = cfg.n_steps;

    std::string greedy_csv = "step,kappa,expansion,log_norm\n";
    for (std::size_t i = 0; i < greedy.kappa_history.size(); ++i) {
        greedy_csv += std::to_string(i) + "," + fmt17(greedy.kappa_history[i]) + "," +
                      fmt17(greedy.expansion_history[i]) + "," +
                      fmt17(greedy.log_norm_history[i]) + "\n";
    }
    std::string random_csv = "trial,lyapunov_slope,slope_stderr,max_kappa,min_expansion\n";
    for (std::size_t s = 0; s < stats.size(); ++s) {
        random_csv += std::to_string(s) + "," + fmt17(stats[s].lyapunov_slope) + "," +
                      fmt17(stats[s].slope_stderr) + "," + fmt17(stats[s].max_kappa) + "," +
                      fmt17(stats[s].min_expansion) + "\n";
    }

    return assemble(cfg, checks, std::move(results),
                    {{"branch_greedy.csv", greedy_csv}, {"branch_random.csv", random_csv}});
}

RunResult run_geometry(const config::ExperimentConfig& cfg) {
    const int d = cfg.dimension;

    // Pseudo-orbit tracking: exact orbits with synthetic noise against the
    // noiseless recursion.  Window edges are pinned to the sequence length.
    const int seq_len = 1000;
    struct ShadowRow {
        double zero_max, early, late;
    };
    auto shadow = parallel_map<ShadowRow>(
        cfg.threads, static_cast<std::size_t>(cfg.n_trials), [&](std::size_t t) {
            const std::uint64_t s = child_seed(cfg.seed, 100 + t);
            auto cs = geometry::conformal_contracting_sequence(d, seq_len, 0.8, 0.9, s);
            Vec y0(d);
            y0[0] = 1e-4;
            auto zero = geometry::key_lemma_ratio(cs.maps, y0, 0.05, 0.5,
                                                  geometry::NoisePolicy::none, s);
            auto adv = geometry::key_lemma_ratio(cs.maps, y0, 0.05, 0.5,
                                                 geometry::NoisePolicy::adversarial_radial, s);
            ShadowRow row{zero.max_ratio, 0.0, 0.0};
            for (int i = 50; i < 500; ++i)
                row.early = std::max(row.early, adv.ratios[static_cast<std::size_t>(i)]);
            for (int i = 500; i < seq_len; ++i)
                row.late = std::max(row.late, adv.ratios[static_cast<std::size_t>(i)]);
            return row;
        });
    double worst_zero = 0.0;
    double worst_plateau = 0.0;
    for (const auto& row : shadow) {
        worst_zero = std::max(worst_zero, row.zero_max);
        worst_plateau = std::max(worst_plateau, row.late / row.early);
    }

    // Roundness: a similarity stays round, a pure diagonal control does not.
    // The control is the strictly expanding conformal rescaling of
    // diag(2, 1/2); theta ignores the scale, the probe needs the expansion.
    Mat rot = Mat::plane_rotation(2, 0, 1, 0.7);
    maps::GeneratorFamily sim_fam;
    sim_fam.maps.push_back(maps::LocalMap::affine(rot * 2.0, Vec(2)));
    sim_fam.labels.push_back("sim");
    branch::Branch sim_branch;
    sim_branch.map_indices.assign(4, 0);
    auto sim = geometry::ball_roundness(sim_fam, sim_branch, origin_frame(2), 0.2, 4, 256, 3,
                                        cfg.threads);

    const int control_steps = 8;
    Vec ctrl_diag(2);
    ctrl_diag[0] = 5.0;
    ctrl_diag[1] = 1.25;
    maps::GeneratorFamily ctrl_fam;
    ctrl_fam.maps.push_back(maps::LocalMap::affine(Mat::diagonal(ctrl_diag), Vec(2)));
    ctrl_fam.labels.push_back("ctrl");
    branch::Branch ctrl_branch;
    ctrl_branch.map_indices.assign(control_steps, 0);
    auto ctrl = geometry::ball_roundness(ctrl_fam, ctrl_branch, origin_frame(2), 0.37,
                                         control_steps, 256, 3, cfg.threads);
    const double control_floor = std::pow(4.0, control_steps - 1);

    // Inverses of the blender contractions, steered by the greedy window
    // branch: theta must stay bounded by the window and settle early.
    auto bf = blender::build_affine_blender(d, cfg.epsilon);
    const std::size_t lattice_size = bf.lattice.size();
    maps::GeneratorFamily inv_fam;
    for (int i = 0; i < d * d; ++i) {
        Mat inv_lin = linalg::inverse(bf.maps[static_cast<std::size_t>(i) * lattice_size].linear);
        inv_fam.maps.push_back(maps::LocalMap::affine(inv_lin, Vec(d)));
        inv_fam.labels.push_back("inv" + std::to_string(i));
    }
    covering::FrameWindow inv_window = covering::SimplexWindow{bf.simplex.region};
    const double inv_bound = std::pow(covering::window_size_bound(inv_window), d * d);
    branch::GreedyOptions gopt;
    gopt.n_steps = 200;
    auto inv_branch = branch::greedy_conformal_branch(inv_fam, inv_window, origin_frame(d),
                                                      gopt);
    std::vector<int> checkpoints = {50, 100, 150, 200};
    std::vector<geometry::RoundnessResult> inv_rounds;
    double theta_sup_50 = 0.0;
    double theta_sup_200 = 0.0;
    for (int n : checkpoints) {
        auto r = geometry::ball_roundness(inv_fam, branch_prefix(inv_branch, n),
                                          origin_frame(d), 0.2, n, 256, 3, cfg.threads);
        theta_sup_200 = std::max(theta_sup_200, r.theta);
        if (n == 50) theta_sup_50 = theta_sup_200;
        inv_rounds.push_back(r);
    }
    const double inv_plateau = theta_sup_200 / theta_sup_50;

    // Distortion: affine compositions have ratio exactly one; smooth bumps
    // must stay below the measured series bound on both sides.
    constexpr double tau = 6.28318530717958647692;
    std::vector<maps::LocalMap> affine_seq;
    Rng gen(3);
    Vec contraction(2);
    contraction[0] = 0.9;
    contraction[1] = 0.7;
    for (int i = 0; i < 6; ++i) {
        Mat arot = Mat::plane_rotation(2, 0, 1, gen.uniform(0.0, tau));
        Vec off(2);
        off[0] = gen.uniform(-0.2, 0.2);
        off[1] = gen.uniform(-0.2, 0.2);
        affine_seq.push_back(maps::LocalMap::affine(arot * Mat::diagonal(contraction), off));
    }
    auto affine = geometry::distortion_ratio(affine_seq, Vec(2), 0.5, 30, 64, 0.5, 11,
                                             cfg.threads);

    auto dist = parallel_map<geometry::DistortionResult>(
        cfg.threads, static_cast<std::size_t>(cfg.n_trials), [&](std::size_t t) {
            std::vector<maps::LocalMap> seq{
                bumpy_contraction(0.82, 0.04, child_seed(cfg.seed, 800 + t))};
            return geometry::distortion_ratio(seq, Vec(2), 0.4, 40, 48, 1.0,
                                              child_seed(cfg.seed, 900 + t), 1);
        });
    double worst_ratio = 0.0;
    double max_l1 = 0.0;
    for (const auto& r : dist) {
        worst_ratio = std::max(worst_ratio, r.l1 / r.bound);
        max_l1 = std::max(max_l1, r.l1);
    }

    std::vector<Check> checks = {
        {"noiseless pseudo-orbits track exactly", worst_zero == 0.0, worst_zero, 0.0},
        {"adversarial tracking gaps plateau", worst_plateau < 1.05, worst_plateau, 1.05},
        {"similarity images stay round", std::abs(sim.theta - 1.0) <= 1e-8,
         std::abs(sim.theta - 1.0), 1e-8},
        {"diagonal control reaches the conformality floor", ctrl.theta >= control_floor,
         ctrl.theta, control_floor},
        {"window-bounded inverse branches stay round", theta_sup_200 <= inv_bound,
         theta_sup_200, inv_bound},
        {"inverse branch roundness plateaus", inv_plateau < 1.1, inv_plateau, 1.1},
        {"affine compositions carry no distortion", affine.l1 == 1.0 && affine.bound == 1.0,
         affine.l1, 1.0},
        {"smooth contractions obey the distortion bound", worst_ratio <= 1.0, worst_ratio,
         1.0},
    };

    json results;
    results["worst_zero_ratio"] = worst_zero;
    results["worst_plateau_ratio"] = worst_plateau;
    results["theta_similarity"] = sim.theta;
    results["theta_control"] = ctrl.theta;
    results["control_floor"] = control_floor;
    results["theta_sup"] = theta_sup_200;
    results["inverse_bound"] = inv_bound;
    results["inverse_plateau"] = inv_plateau;
    results["affine_l1"] = affine.l1;
    results["affine_bound"] = affine.bound;
    results["worst_distortion_ratio"] = worst_ratio;
    results["max_l1"] = max_l1;
    results["n_trials"] = cfg.n_trials;

    std::string shadow_csv = "trial,zero_max,early_max,late_max,plateau_ratio\n";
    for (std::size_t t = 0; t < shadow.size(); ++t) {
        shadow_csv += std::to_string(t) + "," + fmt17(shadow[t].zero_max) + "," +
                      fmt17(shadow[t].early) + "," + fmt17(shadow[t].late) + "," +
                      fmt17(shadow[t].late / shadow[t].early) + "\n";
    }
    std::string round_csv = "branch,steps,theta,r_inner,r_outer\n";
    round_csv += "similarity,4," + fmt17(sim.theta) + "," + fmt17(sim.r_inner) + "," +
                 fmt17(sim.r_outer) + "\n";
    round_csv += "control," + std::to_string(control_steps) + "," + fmt17(ctrl.theta) + "," +
                 fmt17(ctrl.r_inner) + "," + fmt17(ctrl.r_outer) + "\n";
    for (std::size_t k = 0; k < checkpoints.size(); ++k) {
        round_csv += "inverse," + std::to_string(checkpoints[k]) + "," +
                     fmt17(inv_rounds[k].theta) + "," + fmt17(inv_rounds[k].r_inner) + "," +
                     fmt17(inv_rounds[k].r_outer) + "\n";
    }
    std::string dist_csv = "trial,l1,bound,lambda_bar,holder_constant\n";
    for (std::size_t t = 0; t < dist.size(); ++t) {
        dist_csv += std::to_string(t) + "," + fmt17(dist[t].l1) + "," + fmt17(dist[t].bound) +
                    "," + fmt17(dist[t].lambda_bar) + "," + fmt17(dist[t].holder_constant) +
                    "\n";
    }

    return assemble(cfg, checks, std::move(results),
                    {{"geometry_shadowing.csv", shadow_csv},
                     {"geometry_roundness.csv", round_csv},
                     {"geometry_distortion.csv", dist_csv}});
}

RunResult run_blender(const config::ExperimentConfig& cfg) {
    // probe subsets: the assumptions always run; "attractor" and
    // "ergodicity" select one occupancy probe each; the perturbed re-passes
    // belong to the full run only.
    const bool want_attractor = cfg.probe == "all" || cfg.probe == "attractor";
    const bool want_ergodicity = cfg.probe == "all" || cfg.probe == "ergodicity";
    const bool want_perturbed = cfg.probe == "all";

    auto fam = blender::build_affine_blender(cfg.dimension, cfg.epsilon);

    blender::AssumptionOptions aopt;
    aopt.seed = child_seed(cfg.seed, 605);
    aopt.n_threads = cfg.threads;
    auto report = blender::verify_blender_assumptions(fam, aopt);

    std::vector<Check> checks = {
        {"family covers the window", report.covering_pass, report.worst_base_margin, 0.0},
        {"family preserves the domain", report.invariance_pass, report.invariance_margin,
         0.0},
        {"family contracts the domain", report.contraction_pass, report.contraction_modulus,
         1.0},
    };

    json results;
    results["epsilon"] = fam.epsilon;
    results["lambda"] = fam.lambda;
    results["v_radius"] = fam.v_radius;
    results["n_maps"] = fam.size();
    results["n_lattice"] = static_cast<int>(fam.lattice.size());
    results["worst_base_margin"] = report.worst_base_margin;
    results["invariance_margin"] = report.invariance_margin;
    results["contraction_modulus"] = report.contraction_modulus;
    results["n_points"] = cfg.n_points;
    results["horizon"] = cfg.horizon;

    std::string occ_csv = "probe,variant,n_cells,n_hit,fraction\n";
    auto occ_row = [&](const char* probe, const char* variant, int n_cells, int n_hit,
                       double fraction) {
        occ_csv += std::string(probe) + "," + variant + "," + std::to_string(n_cells) + "," +
                   std::to_string(n_hit) + "," + fmt17(fraction) + "\n";
    };

    if (want_attractor) {
        auto cloud = blender::hutchinson_attractor(fam.maps, 60, cfg.n_points,
                                                   child_seed(cfg.seed, 600), cfg.threads);
        auto occ = blender::grid_occupancy(cloud, fam.v_radius, fam.v_radius / 20.0);
        checks.push_back({"attractor fills the occupancy grid", occ.fraction == 1.0,
                          occ.fraction, 1.0});
        results["attractor_occupancy"] = occ.fraction;
        occ_row("attractor", "base", occ.n_cells, occ.n_hit, occ.fraction);
    }
    if (want_ergodicity) {
        auto erg = blender::ergodicity_probe(fam, Vec(cfg.dimension), fam.v_radius / 100.0,
                                             cfg.horizon, cfg.n_particles,
                                             fam.v_radius / 20.0, child_seed(cfg.seed, 601),
                                             cfg.threads);
        checks.push_back({"seed ball spreads over the domain", erg.occupancy >= 0.99,
                          erg.occupancy, 0.99});
        results["ergodic_occupancy"] = erg.occupancy;
        occ_row("ergodicity", "base", erg.n_cells, erg.n_hit, erg.occupancy);
    }
    if (want_perturbed) {
        auto pert = blender::perturbed_family(fam, cfg.perturbation,
                                              child_seed(cfg.seed, 602));
        blender::AssumptionOptions popt = aopt;
        popt.seed = child_seed(cfg.seed, 606);
        auto pert_report = blender::verify_blender_assumptions(fam, pert, popt);
        auto pert_cloud = blender::hutchinson_attractor(pert, 60, cfg.n_points,
                                                        child_seed(cfg.seed, 603),
                                                        cfg.threads);
        auto pert_occ = blender::grid_occupancy(pert_cloud, fam.v_radius,
                                                fam.v_radius / 20.0);
        auto pert_erg = blender::ergodicity_probe(fam, pert, Vec(cfg.dimension),
                                                  fam.v_radius / 100.0, cfg.horizon,
                                                  cfg.n_particles, fam.v_radius / 20.0,
                                                  child_seed(cfg.seed, 604), cfg.threads);
        checks.push_back({"perturbed family keeps the assumptions", pert_report.passed(),
                          pert_report.worst_base_margin, 0.0});
        checks.push_back({"perturbed attractor fills the occupancy grid",
                          pert_occ.fraction == 1.0, pert_occ.fraction, 1.0});
        checks.push_back({"perturbed seed ball spreads over the domain",
                          pert_erg.occupancy >= 0.99, pert_erg.occupancy, 0.99});
        results["perturbed_attractor_occupancy"] = pert_occ.fraction;
        results["perturbed_ergodic_occupancy"] = pert_erg.occupancy;
        occ_row("attractor", "perturbed", pert_occ.n_cells, pert_occ.n_hit,
                pert_occ.fraction);
        occ_row("ergodicity", "perturbed", pert_erg.n_cells, pert_erg.n_hit,
                pert_erg.occupancy);
    }

    return assemble(cfg, checks, std::move(results),
                    {{"blender_family.json", blender::to_json(fam)},
                     {"blender_occupancy.csv", occ_csv}});
}

RunResult run_sphere(const config::ExperimentConfig& cfg) {
    const int d = cfg.dimension;
    const int ambient = d + 1;
    const bool want_nf = cfg.probe == "all" || cfg.probe == "normal-form";
    const bool want_fd = cfg.probe == "all" || cfg.probe == "derivative";
    const bool want_scan = cfg.probe == "all" || cfg.probe == "scan";

    std::vector<Check> checks;
    json results;
    std::vector<std::pair<std::string, std::string>> files;

    if (want_nf) {
        // Normal forms of a seeded non-orthogonal ensemble.
        double worst_residual = 0.0;
        int condition_hits = 0;
        std::string nf_csv = "trial,kappa,residual,condition\n";
        for (int t = 0; t < cfg.n_trials; ++t) {
            Mat m = random_sl(ambient,
                              child_seed(cfg.seed, 300 + static_cast<std::uint64_t>(t)), 1.1);
            auto word = sphere::normal_form(m);
            const double residual = linalg::hs_norm(word.reconstruct(m) - word.result) /
                                    (linalg::hs_norm(word.result) + 1.0);
            std::vector<double> diag_entries;
            for (int i = 0; i < ambient; ++i) diag_entries.push_back(word.result.at(i, i));
            const bool condition = sphere::check_diagonal_condition(diag_entries);
            worst_residual = std::max(worst_residual, residual);
            if (condition) ++condition_hits;
            nf_csv += std::to_string(t) + "," + fmt17(linalg::conformality(m)) + "," +
                      fmt17(residual) + "," + (condition ? "true" : "false") + "\n";
        }
        const double condition_fraction =
            static_cast<double>(condition_hits) / static_cast<double>(cfg.n_trials);
        checks.push_back({"normal form words reconstruct their input",
                          worst_residual <= 1e-8, worst_residual, 1e-8});
        checks.push_back({"normal form results pass the diagonal condition",
                          condition_fraction == 1.0, condition_fraction, 1.0});
        results["worst_residual"] = worst_residual;
        results["condition_fraction"] = condition_fraction;
        results["n_trials"] = cfg.n_trials;
        files.emplace_back("sphere_normal_forms.csv", nf_csv);
    }

    if (want_fd) {
        // Derivative against central finite differences on a random
        // ensemble, plus the pinned pole values of the reference map.
        const int n_fd = 10000;
        auto fd_errors = parallel_map<double>(
            cfg.threads, static_cast<std::size_t>(n_fd), [&](std::size_t t) {
                Mat m = random_sl(ambient, child_seed(cfg.seed, 20000 + t), 1.0);
                Rng gen(child_seed(cfg.seed, 40000 + t));
                Vec x = random_unit(gen, ambient);
                sphere::ProjectiveMap a(m);
                Mat der = sphere::sphere_derivative(a, x);
                Mat fd = fd_derivative(a, x, 1e-6);
                return linalg::hs_norm(der - fd) / linalg::hs_norm(der);
            });
        const double worst_fd = *std::max_element(fd_errors.begin(), fd_errors.end());
        checks.push_back({"derivatives match central differences", worst_fd <= 1e-6,
                          worst_fd, 1e-6});
        results["worst_fd_error"] = worst_fd;
        results["n_fd"] = n_fd;
        if (d >= 2) {
            Vec a_diag(ambient);
            a_diag[0] = 2.0;
            for (int i = 1; i < d; ++i) a_diag[i] = 1.0;
            a_diag[d] = 0.5;
            Mat der = sphere::sphere_derivative(sphere::ProjectiveMap(Mat::diagonal(a_diag)),
                                                Vec::unit(ambient, d));
            const double pole_expansion = linalg::co_norm(der);
            const double pole_restricted =
                covering::restricted_norm(linalg::normalized(der), Vec::unit(d, 0));
            const double restricted_target = std::pow(2.0, -1.0 / d);
            checks.push_back({"pole expansion modulus is two",
                              std::abs(pole_expansion - 2.0) <= 1e-9,
                              std::abs(pole_expansion - 2.0), 1e-9});
            checks.push_back({"pole contracts orthogonal directions",
                              std::abs(pole_restricted - restricted_target) <= 1e-9,
                              std::abs(pole_restricted - restricted_target), 1e-9});
            results["pole_expansion"] = pole_expansion;
            results["pole_restricted"] = pole_restricted;
        }
    }

    if (want_scan) {
        // Bundle scan with the fixed generic rotation pair, then the refined
        // certificate.  The generator seeds are part of the experiment: they
        // name the family, not a sampling choice, so cfg.seed leaves them
        // alone.
        Vec a_diag(ambient);
        a_diag[0] = 2.0;
        for (int i = 1; i < d; ++i) a_diag[i] = 1.0;
        a_diag[d] = 0.5;
        sphere::ProjectiveMap a_hat(Mat::diagonal(a_diag));
        Mat r1 = maps::random_rotation(ambient, 11);
        Mat r2 = maps::random_rotation(ambient, 12);
        std::vector<Mat> gens = {r1, r1.transposed(), r2, r2.transposed()};
        auto grid = sphere::build_tangent_grid(d, cfg.n_base, cfg.n_angles);
        auto scan = sphere::directional_contraction_scan(gens, a_hat, grid, cfg.max_word_len,
                                                         cfg.cone_angle, cfg.threads);
        bool cert_ok = false;
        double cert_margin = 0.0;
        double cert_slack = 0.0;
        double cert_resolution = 0.0;
        int cert_samples = 0;
        if (scan.coverage == 1.0) {
            auto cert = sphere::certify_directional_contraction(scan, gens, a_hat, grid,
                                                                cfg.refinement, cfg.threads);
            cert_ok = cert.passed && covering::certificate_consistent(cert);
            cert_margin = cert.worst_margin;
            cert_slack = cert.lipschitz_slack;
            cert_resolution = cert.grid_resolution;
            cert_samples = cert.n_samples;
        }
        checks.push_back({"scan covers the tangent bundle", scan.coverage == 1.0,
                          scan.coverage, 1.0});
        checks.push_back({"refined certificate margin dominates slack", cert_ok, cert_margin,
                          cert_slack * cert_resolution});
        results["coverage"] = scan.coverage;
        results["worst_expansion"] = scan.worst_expansion;
        results["worst_contraction"] = scan.worst_contraction;
        results["certificate_margin"] = cert_margin;
        results["certificate_slack"] = cert_slack;
        results["certificate_resolution"] = cert_resolution;
        results["certificate_samples"] = cert_samples;
        results["n_samples"] = scan.n_samples;

        std::string words_csv = "sample_id,covered,word,expansion_margin,contraction_margin\n";
        for (std::size_t i = 0; i < scan.samples.size(); ++i) {
            const auto& s = scan.samples[i];
            std::string word;
            for (std::size_t k = 0; k < s.word.size(); ++k) {
                if (k > 0) word += ' ';
                word += std::to_string(s.word[k]);
            }
            words_csv += std::to_string(i) + "," + (s.covered ? "true" : "false") + ",\"" +
                         word + "\"," + fmt17(s.expansion_margin) + "," +
                         fmt17(s.contraction_margin) + "\n";
        }
        std::string hist_csv = "word_length,count\n";
        for (std::size_t l = 0; l < scan.word_lengths.size(); ++l)
            hist_csv += std::to_string(l) + "," + std::to_string(scan.word_lengths[l]) + "\n";
        files.emplace_back("sphere_words.csv", words_csv);
        files.emplace_back("sphere_histogram.csv", hist_csv);
    }

    return assemble(cfg, checks, std::move(results), std::move(files));
}

}  // namespace

RunResult run_experiment(const config::ExperimentConfig& cfg) {
    config::validate(cfg);
    if (cfg.kind == "covering") return run_covering(cfg);
    if (cfg.kind == "branch") return run_branch(cfg);
    if (cfg.kind == "geometry") return run_geometry(cfg);
    if (cfg.kind == "blender") return run_blender(cfg);
    if (cfg.kind == "sphere") return run_sphere(cfg);
    throw ExperimentError("run: unknown kind '" + cfg.kind + "'");
}

std::vector<std::string> write_artifacts(const RunResult& result,
                                         const std::string& out_dir) {
    namespace fs = std::filesystem;
    std::error_code ec;
    fs::create_directories(out_dir, ec);
    if (ec) throw ExperimentError("artifacts: cannot create '" + out_dir + "'");

    auto write_file = [&](const std::string& name, const std::string& bytes) {
        const std::string path = (fs::path(out_dir) / name).string();
        std::ofstream out(path, std::ios::binary);
        if (!out) throw ExperimentError("artifacts: cannot write '" + path + "'");
        out << bytes;
        if (!out) throw ExperimentError("artifacts: cannot write '" + path + "'");
        return path;
    };

    std::vector<std::string> paths;
    paths.push_back(write_file("summary.json", result.summary_json + "\n"));
    for (const auto& [name, bytes] : result.data_files)
        paths.push_back(write_file(name, bytes));

    // Wall-clock facts live here and only here; the summary stays a pure
    // function of config and seed.
    const std::time_t now = std::time(nullptr);
    std::tm utc{};
    gmtime_r(&now, &utc);
    char stamp[32];
    std::strftime(stamp, sizeof(stamp), "%Y-%m-%dT%H:%M:%SZ", &utc);
    json meta;
    meta["schema_version"] = config::summary_schema_version;
    meta["version"] = config::artifact_version;
    meta["written_at"] = stamp;
    json names = json::array();
    names.push_back("summary.json");
    for (const auto& [name, bytes] : result.data_files) names.push_back(name);
    meta["files"] = names;
    paths.push_back(write_file("metadata.json", meta.dump() + "\n"));
    return paths;
}

Report build_report(const std::vector<std::string>& summary_documents) {
    if (summary_documents.empty()) throw ExperimentError("report: no summaries");

    std::vector<json> docs;
    for (const auto& text : summary_documents) {
        json doc;
        try {
            doc = json::parse(text);
        } catch (const json::parse_error&) {
            throw ExperimentError("report: summary is not valid JSON");
        }
        if (!doc.contains("schema_version") || !doc["schema_version"].is_number_integer())
            throw ExperimentError("report: summary is missing its schema version");
        docs.push_back(std::move(doc));
    }
    const int version = docs.front()["schema_version"].get<int>();
    for (const auto& doc : docs)
        if (doc["schema_version"].get<int>() != version)
            throw ExperimentError("report: mixed schema versions");
    if (version != config::summary_schema_version)
        throw ExperimentError("report: unsupported schema version " +
                              std::to_string(version));

    auto fmt6 = [](double v) {
        char buf[32];
        std::snprintf(buf, sizeof(buf), "%.6g", v);
        return std::string(buf);
    };

    const std::vector<std::string> kind_order = {"covering", "branch", "geometry", "blender",
                                                 "sphere"};
    for (const auto& doc : docs) {
        const std::string kind = doc.value("kind", "");
        if (std::find(kind_order.begin(), kind_order.end(), kind) == kind_order.end())
            throw ExperimentError("report: summary has unknown kind '" + kind + "'");
    }

    std::string md = "# Experiment report\n\n";
    std::string csv = "kind,config_hash,seed,check,value,threshold,passed\n";
    for (const auto& kind : kind_order) {
        bool any = false;
        for (const auto& doc : docs) {
            if (doc.value("kind", "") != kind) continue;
            if (!any) {
                md += "## " + kind + "\n\n";
                md += "| config | seed | check | value | threshold | passed |\n";
                md += "| --- | --- | --- | --- | --- | --- |\n";
                any = true;
            }
            const std::string hash = doc.value("config_hash", "");
            const std::string seed = std::to_string(doc.value("seed", std::uint64_t{0}));
            for (const auto& check : doc["checks"]) {
                const std::string name = check.value("name", "");
                const double value = check.value("value", 0.0);
                const double threshold = check.value("threshold", 0.0);
                const bool passed = check.value("passed", false);
                md += "| `" + hash + "` | " + seed + " | " + name + " | " + fmt6(value) +
                      " | " + fmt6(threshold) + " | " + (passed ? "yes" : "no") + " |\n";
                csv += kind + "," + hash + "," + seed + "," + csv_field(name) + "," +
                       fmt17(value) + "," + fmt17(threshold) + "," +
                       (passed ? "true" : "false") + "\n";
            }
            md += "\n";
        }
    }

    md += "## Reproducibility\n\n";
    md += "| kind | config hash | seed | version | passed |\n";
    md += "| --- | --- | --- | --- | --- |\n";
    for (const auto& kind : kind_order) {
        for (const auto& doc : docs) {
            if (doc.value("kind", "") != kind) continue;
            md += "| " + kind + " | `" + doc.value("config_hash", "") + "` | " +
                  std::to_string(doc.value("seed", std::uint64_t{0})) + " | " +
                  doc.value("version", "") + " | " +
                  (doc.value("passed", false) ? "yes" : "no") + " |\n";
        }
    }
    md += "\nIdentical config and seed reproduce each summary byte for byte; the\n";
    md += "config hash covers every result-relevant field.\n";

    return {md, csv};
}

}  // namespace qcb::experiments
