// Acceptance gate over the shipped experiment configurations.  Every
// criterion reruns the library through the public experiment entry point,
// prints exactly one PASS/FAIL line, and the exit status counts failures.
// Budgeted criteria time the single-threaded run.

#include <qcb/config.hpp>
#include <qcb/experiments.hpp>

#include <json.hpp>

#include <chrono>
#include <cstdio>
#include <map>
#include <string>
#include <vector>

using namespace qcb;
using nlohmann::json;

namespace {

struct KindRuns {
    experiments::RunResult single;
    experiments::RunResult parallel;
    double seconds = 0.0;
};

// Runs one kind at its default configuration with one thread (timed) and
// with four threads, so each criterion can check both verdict and budget
// and the determinism criterion can compare the artifacts byte for byte.
KindRuns run_kind(const std::string& kind) {
    config::ExperimentConfig cfg;
    cfg.kind = kind;
    KindRuns runs;
    cfg.threads = 1;
    const auto t0 = std::chrono::steady_clock::now();
    runs.single = experiments::run_experiment(cfg);
    runs.seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    cfg.threads = 4;
    runs.parallel = experiments::run_experiment(cfg);
    return runs;
}

std::map<std::string, bool> passed_by_name(const experiments::RunResult& run) {
    const json parsed = json::parse(run.summary_json);
    std::map<std::string, bool> out;
    for (const auto& check : parsed.at("checks"))
        out[check.at("name").get<std::string>()] = check.at("passed").get<bool>();
    return out;
}

// A criterion fails when a named check is missing, not only when it fails:
// a silently dropped check must never turn the gate green.
bool all_pass(const std::map<std::string, bool>& checks,
              const std::vector<std::string>& names) {
    for (const auto& name : names) {
        auto it = checks.find(name);
        if (it == checks.end() || !it->second) return false;
    }
    return true;
}

bool identical_artifacts(const KindRuns& runs) {
    if (runs.single.summary_json != runs.parallel.summary_json) return false;
    if (runs.single.data_files.size() != runs.parallel.data_files.size()) return false;
    for (std::size_t i = 0; i < runs.single.data_files.size(); ++i)
        if (runs.single.data_files[i] != runs.parallel.data_files[i]) return false;
    return true;
}

std::string timed(const char* label, double seconds, double budget) {
    char buf[256];
    std::snprintf(buf, sizeof(buf), "%s (%.1f s of %.0f s)", label, seconds, budget);
    return buf;
}

}  // namespace

int main() {
    int failures = 0;
    const auto report = [&](int index, bool ok, const std::string& label) {
        std::printf("%s  criterion %2d: %s\n", ok ? "PASS" : "FAIL", index, label.c_str());
        if (!ok) ++failures;
        std::fflush(stdout);
    };

    const KindRuns covering = run_kind("covering");
    const auto covering_checks = passed_by_name(covering.single);
    report(1,
           all_pass(covering_checks, {"tuned family pulls every sample inward",
                                      "perturbed family keeps the covering margin"}) &&
               covering.seconds <= 60.0,
           timed("auto-tuned covering family at d=2 keeps its certified margin after "
                 "1e-3 generator bumps",
                 covering.seconds, 60.0));

    const KindRuns branch = run_kind("branch");
    const auto branch_checks = passed_by_name(branch.single);
    report(2,
           all_pass(branch_checks, {"greedy branch conformality stays below the window bound",
                                    "random branches expand on average",
                                    "random branch expansion is almost sure"}) &&
               branch.seconds <= 120.0,
           timed("greedy branch stays below the window conformality bound and 99% of 100 "
                 "random branches expand over 1e4 steps",
                 branch.seconds, 120.0));

    const KindRuns geometry = run_kind("geometry");
    const auto geometry_checks = passed_by_name(geometry.single);
    report(3,
           all_pass(geometry_checks, {"noiseless pseudo-orbits track exactly",
                                      "adversarial tracking gaps plateau"}),
           "pseudo-orbit tracking is exact without noise and plateaus under adversarial "
           "noise across 100 seeds");
    report(4,
           all_pass(geometry_checks, {"similarity images stay round",
                                      "diagonal control reaches the conformality floor",
                                      "window-bounded inverse branches stay round",
                                      "inverse branch roundness plateaus"}),
           "similarity branches keep images round, the diagonal control degrades "
           "geometrically, and inverse branches plateau");
    report(5,
           all_pass(geometry_checks, {"affine compositions carry no distortion",
                                      "smooth contractions obey the distortion bound"}),
           "affine compositions have unit distortion and smooth contractions stay below "
           "the computed bound");

    const KindRuns blender = run_kind("blender");
    const auto blender_checks = passed_by_name(blender.single);
    report(6,
           all_pass(blender_checks,
                    {"family covers the window", "family preserves the domain",
                     "family contracts the domain", "attractor fills the occupancy grid",
                     "seed ball spreads over the domain",
                     "perturbed family keeps the assumptions",
                     "perturbed attractor fills the occupancy grid",
                     "perturbed seed ball spreads over the domain"}) &&
               blender.seconds <= 600.0,
           timed("blender assumptions, 1e6-point attractor fill, and ergodicity hold at "
                 "epsilon=0.1 and survive quadratic perturbation",
                 blender.seconds, 600.0));

    const KindRuns sphere = run_kind("sphere");
    const auto sphere_checks = passed_by_name(sphere.single);
    report(7,
           all_pass(sphere_checks, {"normal form words reconstruct their input",
                                    "normal form results pass the diagonal condition"}),
           "normal forms of 100 random unimodular 3x3 matrices reconstruct within 1e-8 "
           "and satisfy the diagonal condition");
    report(8,
           all_pass(sphere_checks, {"derivatives match central differences",
                                    "pole expansion modulus is two",
                                    "pole contracts orthogonal directions"}),
           "projective derivatives match finite differences on 1e4 samples and the pole "
           "moduli are exact to 1e-9");
    report(9,
           all_pass(sphere_checks, {"scan covers the tangent bundle",
                                    "refined certificate margin dominates slack"}) &&
               sphere.seconds <= 300.0,
           timed("tangent bundle scan covers all 1000 samples and its 4x-refined "
                 "certificate holds",
                 sphere.seconds, 300.0));

    const bool deterministic = identical_artifacts(covering) && identical_artifacts(branch) &&
                               identical_artifacts(geometry) && identical_artifacts(blender) &&
                               identical_artifacts(sphere);
    report(10, deterministic,
           "every experiment produces byte-identical summaries and data files for 1 and 4 "
           "threads");

    return failures;
}
