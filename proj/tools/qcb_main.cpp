// Command line driver for the experiment runners.
//
// One subcommand per experiment kind plus "report".  A config file seeds
// the run when given; flags override single fields afterwards, and the
// QCB_OUT environment variable overrides the output directory last.
// Exit codes: 0 when every check passes, 1 when a check fails or a runner
// throws (witnesses go to stderr as JSON), 2 when the command line, the
// config, or the report input is invalid.

#include <qcb/config.hpp>
#include <qcb/experiments.hpp>

#include <CLI11.hpp>
#include <json.hpp>

#include <glob.h>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

namespace {

namespace fs = std::filesystem;
namespace config = qcb::config;
namespace experiments = qcb::experiments;
using nlohmann::json;

// Flag storage shared across subcommands.  Only one subcommand parses per
// invocation, and a value lands in the config only when its flag was
// counted, so config file values survive unset flags.
struct FlagValues {
    std::string config_path;
    std::uint64_t seed = 0;
    int threads = 1;
    std::string out_dir;
    int dimension = 2;
    double epsilon = 0.1;
    std::string probe = "all";
    int grid_per_axis = 24;
    double perturbation = 1e-3;
    int n_steps = 10000;
    int n_seeds = 100;
    int n_trials = 100;
    int n_points = 1000000;
    int horizon = 500;
    int n_particles = 400;
    int n_base = 100;
    int n_angles = 10;
    int max_word_len = 12;
    int refinement = 4;
    double cone_angle = 0.1;
    std::vector<std::string> report_inputs;
};

void add_common_flags(CLI::App* sub, FlagValues& v) {
    sub->add_option("--config", v.config_path, "TOML or JSON config file");
    sub->add_option("--seed", v.seed, "master seed for all derived randomness");
    sub->add_option("--threads", v.threads, "worker threads (results do not depend on this)");
    sub->add_option("--out", v.out_dir, "output directory for summary and data files");
    sub->add_option("--dim", v.dimension, "matrix dimension of the experiment");
}

// Expands each pattern with POSIX glob.  A pattern that matches nothing is
// an input error: the report must never silently cover fewer runs than the
// caller asked for.
std::vector<std::string> expand_patterns(const std::vector<std::string>& patterns) {
    std::vector<std::string> paths;
    for (const auto& pattern : patterns) {
        glob_t g{};
        const int rc = glob(pattern.c_str(), 0, nullptr, &g);
        if (rc == GLOB_NOMATCH) {
            globfree(&g);
            throw experiments::ExperimentError("report: no files match '" + pattern + "'");
        }
        if (rc != 0) {
            globfree(&g);
            throw experiments::ExperimentError("report: cannot expand '" + pattern + "'");
        }
        for (std::size_t i = 0; i < g.gl_pathc; ++i) paths.emplace_back(g.gl_pathv[i]);
        globfree(&g);
    }
    return paths;
}

int run_experiment_command(const std::string& kind, const CLI::App* sub, const FlagValues& v) {
    const auto applied = [&](const std::string& name) {
        const CLI::Option* opt = sub->get_option_no_throw(name);
        return opt != nullptr && opt->count() > 0;
    };

    config::ExperimentConfig cfg;
    if (applied("--config")) {
        cfg = config::load_config(v.config_path);
        if (cfg.kind != kind)
            throw config::ConfigError("config: kind '" + cfg.kind + "' does not match the " +
                                      kind + " subcommand");
    } else {
        cfg.kind = kind;
    }

    if (applied("--seed")) cfg.seed = v.seed;
    if (applied("--threads")) cfg.threads = v.threads;
    if (applied("--out")) cfg.out_dir = v.out_dir;
    if (applied("--dim")) cfg.dimension = v.dimension;
    if (applied("--epsilon")) cfg.epsilon = v.epsilon;
    if (applied("--probe")) cfg.probe = v.probe;
    if (applied("--scan")) cfg.probe = "scan";
    if (applied("--grid")) cfg.grid_per_axis = v.grid_per_axis;
    if (applied("--perturbation")) cfg.perturbation = v.perturbation;
    if (applied("--steps")) cfg.n_steps = v.n_steps;
    if (applied("--seeds")) cfg.n_seeds = v.n_seeds;
    if (applied("--trials")) cfg.n_trials = v.n_trials;
    if (applied("--points")) cfg.n_points = v.n_points;
    if (applied("--horizon")) cfg.horizon = v.horizon;
    if (applied("--particles")) cfg.n_particles = v.n_particles;
    if (applied("--base")) cfg.n_base = v.n_base;
    if (applied("--angles")) cfg.n_angles = v.n_angles;
    if (applied("--word-len")) cfg.max_word_len = v.max_word_len;
    if (applied("--refine")) cfg.refinement = v.refinement;
    if (applied("--cone")) cfg.cone_angle = v.cone_angle;
    if (const char* env = std::getenv("QCB_OUT")) cfg.out_dir = env;

    auto result = experiments::run_experiment(cfg);
    auto paths = experiments::write_artifacts(result, cfg.out_dir);

    json summary = json::parse(result.summary_json);
    for (const auto& check : summary.at("checks")) {
        std::printf("%s  %s  (value %.6g, threshold %.6g)\n",
                    check.at("passed").get<bool>() ? "  ok" : "FAIL",
                    check.at("name").get<std::string>().c_str(),
                    check.at("value").get<double>(), check.at("threshold").get<double>());
    }
    for (const auto& path : paths) std::printf("wrote %s\n", path.c_str());

    if (!result.passed) {
        json witnesses = json::array();
        for (const auto& check : summary.at("checks"))
            if (!check.at("passed").get<bool>()) witnesses.push_back(check);
        std::fprintf(stderr, "%s\n", witnesses.dump(2).c_str());
        return 1;
    }
    return 0;
}

int run_report_command(const CLI::App* sub, const FlagValues& v) {
    std::string out_dir = "out";
    if (sub->count("--out") > 0) out_dir = v.out_dir;
    if (const char* env = std::getenv("QCB_OUT")) out_dir = env;

    std::vector<std::string> documents;
    for (const auto& path : expand_patterns(v.report_inputs)) {
        std::ifstream in(path, std::ios::binary);
        if (!in) throw experiments::ExperimentError("report: cannot open '" + path + "'");
        std::ostringstream buffer;
        buffer << in.rdbuf();
        documents.push_back(buffer.str());
    }
    auto report = experiments::build_report(documents);

    std::error_code ec;
    fs::create_directories(out_dir, ec);
    if (ec) throw std::runtime_error("report: cannot create '" + out_dir + "'");
    const auto write_file = [&](const std::string& name, const std::string& body) {
        const std::string path = (fs::path(out_dir) / name).string();
        std::ofstream out(path, std::ios::binary);
        out << body;
        if (!out) throw std::runtime_error("report: cannot write '" + path + "'");
    };
    write_file("report.md", report.markdown);
    write_file("report.csv", report.csv);
    std::fputs(report.markdown.c_str(), stdout);
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Covering families, orbit branches, contraction geometry, blenders, and "
                 "sphere scans"};
    app.set_version_flag("--version", config::artifact_version);
    app.require_subcommand(1);
    FlagValues v;

    CLI::App* covering = app.add_subcommand("covering", "tune and certify a covering family");
    add_common_flags(covering, v);
    covering->add_flag("--auto-tune", "search the configured parameter box (always on)");
    covering->add_option("--grid", v.grid_per_axis, "verification grid points per axis");
    covering->add_option("--perturbation", v.perturbation,
                         "generator perturbation size for the stability check");

    CLI::App* branch = app.add_subcommand("branch", "track greedy and random orbit branches");
    add_common_flags(branch, v);
    branch->add_option("--steps", v.n_steps, "steps per branch");
    branch->add_option("--seeds", v.n_seeds, "number of random branches");

    CLI::App* geometry =
        app.add_subcommand("geometry", "shadowing, roundness, and distortion probes");
    add_common_flags(geometry, v);
    geometry->add_option("--epsilon", v.epsilon, "strength of the reference map family");
    geometry->add_option("--trials", v.n_trials, "trials per sampled probe");

    CLI::App* blender = app.add_subcommand("blender", "verify the reference map family");
    add_common_flags(blender, v);
    blender->add_option("--epsilon", v.epsilon, "strength of the map family");
    blender->add_option("--probe", v.probe, "probe subset: all, attractor, or ergodicity");
    blender->add_option("--points", v.n_points, "attractor cloud size");
    blender->add_option("--horizon", v.horizon, "ergodicity steps per particle");
    blender->add_option("--particles", v.n_particles, "ergodicity particle count");
    blender->add_option("--perturbation", v.perturbation,
                        "quadratic perturbation size for the stability checks");

    CLI::App* sphere =
        app.add_subcommand("sphere", "projective action scans and normal forms");
    add_common_flags(sphere, v);
    auto* probe_opt = sphere->add_option(
        "--probe", v.probe, "probe subset: all, scan, normal-form, or derivative");
    sphere->add_flag("--scan", "run only the bundle scan and its certificate")
        ->excludes(probe_opt);
    sphere->add_option("--base", v.n_base, "base points in the scan grid");
    sphere->add_option("--angles", v.n_angles, "tangent directions per base point");
    sphere->add_option("--word-len", v.max_word_len, "maximum rotation word length");
    sphere->add_option("--refine", v.refinement, "grid refinement factor for the certificate");
    sphere->add_option("--cone", v.cone_angle, "target cone angle of the scan");

    CLI::App* report =
        app.add_subcommand("report", "aggregate summary files into markdown and CSV");
    report->add_option("paths", v.report_inputs, "summary.json files or glob patterns")
        ->required();
    report->add_option("--out", v.out_dir, "output directory for report.md and report.csv");

    try {
        app.parse(argc, argv);
    } catch (const CLI::Success& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    CLI::App* sub = app.get_subcommands().front();
    try {
        if (sub->get_name() == "report") return run_report_command(sub, v);
        return run_experiment_command(sub->get_name(), sub, v);
    } catch (const config::ConfigError& e) {
        std::fprintf(stderr, "%s\n", e.what());
        return 2;
    } catch (const experiments::ExperimentError& e) {
        if (sub->get_name() == "report") {
            std::fprintf(stderr, "%s\n", e.what());
            return 2;
        }
        json err;
        err["error"] = e.what();
        std::fprintf(stderr, "%s\n", err.dump().c_str());
        return 1;
    } catch (const std::exception& e) {
        json err;
        err["error"] = e.what();
        std::fprintf(stderr, "%s\n", err.dump().c_str());
        return 1;
    }
}
