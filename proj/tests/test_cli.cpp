#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "qcb/config.hpp"
#include "qcb/experiments.hpp"

using namespace qcb;
using namespace qcb::config;
using namespace qcb::experiments;
using nlohmann::json;

namespace {

namespace fs = std::filesystem;

// Scratch directory wiped on construction and destruction, so reruns never
// see stale artifacts.
struct TempDir {
    fs::path path;
    explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / name) {
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
};

std::string slurp(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    REQUIRE(in.good());
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

std::vector<std::string> check_names(const std::string& summary) {
    const json parsed = json::parse(summary);
    std::vector<std::string> names;
    for (const auto& check : parsed.at("checks"))
        names.push_back(check.at("name").get<std::string>());
    return names;
}

ExperimentConfig tiny_branch_config() {
    ExperimentConfig cfg;
    cfg.kind = "branch";
    cfg.seed = 5;
    cfg.n_seeds = 6;
    cfg.n_steps = 400;
    return cfg;
}

}  // namespace

TEST_CASE("toml and json configs share one schema") {
    const char* toml = R"(# blender run at reduced size
kind = "blender"        # trailing comment
dimension = 3
epsilon = 0.2
seed = 42
probe = "ergodicity"
n_points = 5000
out_dir = "elsewhere"
)";
    const char* as_json =
        R"({"kind":"blender","dimension":3,"epsilon":0.2,"seed":42,)"
        R"("probe":"ergodicity","n_points":5000,"out_dir":"elsewhere"})";
    ExperimentConfig a = parse_config(toml);
    ExperimentConfig b = parse_config(as_json);
    CHECK(a.kind == "blender");
    CHECK(a.dimension == 3);
    CHECK(a.epsilon == 0.2);
    CHECK(a.seed == 42);
    CHECK(a.probe == "ergodicity");
    CHECK(a.n_points == 5000);
    CHECK(a.out_dir == "elsewhere");
    CHECK(canonical_json(a) == canonical_json(b));
    CHECK(config_hash(a) == config_hash(b));
}

TEST_CASE("toml subset accepts tables and arrays of the flat schema") {
    const char* toml = R"([tuning]
t_lo = 0.15
t_hi = 0.4
)";
    ExperimentConfig cfg;
    CHECK_THROWS_WITH_AS(parse_config(toml), "config: unknown key 'tuning.t_lo'", ConfigError);
    cfg = parse_config("kind = \"covering\"\nt_lo = 0.15\nt_hi = 0.4\n");
    CHECK(cfg.t_lo == 0.15);
    CHECK(cfg.t_hi == 0.4);
}

TEST_CASE("config parser reports precise diagnostics") {
    CHECK_THROWS_WITH_AS(parse_config("kind\n"), "config: expected '=' on line 1", ConfigError);
    CHECK_THROWS_WITH_AS(parse_config("= 3\n"), "config: empty key on line 1", ConfigError);
    CHECK_THROWS_WITH_AS(parse_config("kind = \n"), "config: unreadable value '' on line 1",
                         ConfigError);
    CHECK_THROWS_WITH_AS(parse_config("kind = \"bl\n"), "config: unterminated string on line 1",
                         ConfigError);
    CHECK_THROWS_WITH_AS(parse_config("\n\nseed = 1x\n"),
                         "config: unreadable value '1x' on line 3", ConfigError);
    CHECK_THROWS_WITH_AS(parse_config("wat = 3\n"), "config: unknown key 'wat'", ConfigError);
    CHECK_THROWS_WITH_AS(parse_config("kind = 3\n"), "config: key 'kind' expects a string",
                         ConfigError);
    CHECK_THROWS_WITH_AS(parse_config("dimension = \"x\"\n"),
                         "config: key 'dimension' expects an integer", ConfigError);
    CHECK_THROWS_WITH_AS(parse_config("epsilon = \"x\"\n"),
                         "config: key 'epsilon' expects a number", ConfigError);
    CHECK_THROWS_WITH_AS(parse_config("seed = -1\n"),
                         "config: key 'seed' expects a nonnegative integer", ConfigError);
    try {
        parse_config("{\"kind\":");
        FAIL("missing throw");
    } catch (const ConfigError& e) {
        CHECK(std::string(e.what()).rfind("config: invalid JSON:", 0) == 0);
    }
    CHECK_THROWS_WITH_AS(load_config("definitely_missing.toml"),
                         "config: cannot open 'definitely_missing.toml'", ConfigError);
}

TEST_CASE("validation rejects out-of-range and mismatched fields") {
    ExperimentConfig cfg;
    CHECK_THROWS_WITH_AS(validate(cfg), "config: kind is required", ConfigError);
    cfg.kind = "fractal";
    CHECK_THROWS_WITH_AS(validate(cfg), "config: unknown kind 'fractal'", ConfigError);

    cfg.kind = "covering";
    cfg.dimension = 6;
    CHECK_THROWS_WITH_AS(validate(cfg), "config: dimension 6 out of range for kind covering",
                         ConfigError);
    cfg.dimension = 1;
    CHECK_THROWS_WITH_AS(validate(cfg), "config: dimension 1 out of range for kind covering",
                         ConfigError);
    cfg.kind = "sphere";
    CHECK_NOTHROW(validate(cfg));
    cfg.dimension = 5;
    CHECK_THROWS_WITH_AS(validate(cfg), "config: dimension 5 out of range for kind sphere",
                         ConfigError);

    cfg = ExperimentConfig{};
    cfg.kind = "covering";
    cfg.probe = "attractor";
    CHECK_THROWS_WITH_AS(validate(cfg), "config: probe 'attractor' is not valid for kind covering",
                         ConfigError);
    cfg.kind = "blender";
    CHECK_NOTHROW(validate(cfg));
    cfg.probe = "scan";
    CHECK_THROWS_WITH_AS(validate(cfg), "config: probe 'scan' is not valid for kind blender",
                         ConfigError);
    cfg.kind = "sphere";
    CHECK_NOTHROW(validate(cfg));
    cfg.probe = "ergodicity";
    CHECK_THROWS_WITH_AS(validate(cfg), "config: probe 'ergodicity' is not valid for kind sphere",
                         ConfigError);

    cfg = ExperimentConfig{};
    cfg.kind = "branch";
    cfg.threads = 0;
    CHECK_THROWS_WITH_AS(validate(cfg), "config: threads must be positive", ConfigError);
    cfg = ExperimentConfig{};
    cfg.kind = "blender";
    cfg.epsilon = 0.0;
    CHECK_THROWS_WITH_AS(validate(cfg), "config: epsilon must be positive", ConfigError);
    cfg = ExperimentConfig{};
    cfg.kind = "covering";
    cfg.t_lo = 0.5;
    CHECK_THROWS_WITH_AS(validate(cfg), "config: tuning range needs t_lo < t_hi", ConfigError);
    cfg = ExperimentConfig{};
    cfg.kind = "sphere";
    cfg.max_word_len = -1;
    CHECK_THROWS_WITH_AS(validate(cfg), "config: max_word_len must be nonnegative", ConfigError);
}

TEST_CASE("canonical form covers result fields and skips steering fields") {
    ExperimentConfig a;
    a.kind = "covering";
    ExperimentConfig b = a;
    b.threads = 8;
    b.out_dir = "elsewhere";
    CHECK(canonical_json(a) == canonical_json(b));
    CHECK(config_hash(a) == config_hash(b));

    b = a;
    b.seed = 1;
    CHECK(config_hash(a) != config_hash(b));
    b = a;
    b.epsilon = 0.2;
    CHECK(config_hash(a) != config_hash(b));
    b = a;
    b.probe = "attractor";
    CHECK(config_hash(a) != config_hash(b));

    // The canonical form is itself a loadable config document.
    ExperimentConfig round = parse_config(canonical_json(a));
    CHECK(canonical_json(round) == canonical_json(a));
    CHECK(round.kind == "covering");
}

TEST_CASE("runs are reproducible and independent of the thread count") {
    ExperimentConfig cfg = tiny_branch_config();
    cfg.threads = 1;
    RunResult one = run_experiment(cfg);
    RunResult again = run_experiment(cfg);
    cfg.threads = 4;
    RunResult four = run_experiment(cfg);

    CHECK(one.passed);
    CHECK(one.summary_json == again.summary_json);
    CHECK(one.summary_json == four.summary_json);
    REQUIRE(one.data_files.size() == four.data_files.size());
    for (std::size_t i = 0; i < one.data_files.size(); ++i) {
        CHECK(one.data_files[i].first == four.data_files[i].first);
        CHECK(one.data_files[i].second == four.data_files[i].second);
    }

    // The echoed config is thread-free, so the hash matches both runs.
    json summary = json::parse(four.summary_json);
    CHECK(summary.at("config_hash").get<std::string>() == config_hash(cfg));
    CHECK(summary.at("config").count("threads") == 0);
    CHECK(summary.at("config").count("out_dir") == 0);
}

TEST_CASE("summary carries schema, config echo, and every check") {
    ExperimentConfig cfg;
    cfg.kind = "covering";
    cfg.perturbation = 0.002;
    cfg.threads = 4;
    RunResult res = run_experiment(cfg);
    json j = json::parse(res.summary_json);

    CHECK(j.at("schema_version").get<int>() == summary_schema_version);
    CHECK(j.at("version").get<std::string>() == artifact_version);
    CHECK(j.at("kind").get<std::string>() == "covering");
    CHECK(j.at("seed").get<std::uint64_t>() == 0);
    CHECK(j.at("config_hash").get<std::string>() == config_hash(cfg));
    CHECK(j.at("config").at("perturbation").get<double>() == 0.002);

    REQUIRE(j.at("checks").size() >= 2);
    bool conjunction = true;
    for (const auto& check : j.at("checks")) {
        CHECK(check.count("name") == 1);
        CHECK(check.count("passed") == 1);
        CHECK(check.count("value") == 1);
        CHECK(check.count("threshold") == 1);
        conjunction = conjunction && check.at("passed").get<bool>();
    }
    CHECK(j.at("passed").get<bool>() == conjunction);
    CHECK(res.passed == conjunction);
}

TEST_CASE("probe subsets gate checks and artifacts") {
    ExperimentConfig cfg;
    cfg.kind = "blender";
    cfg.threads = 4;
    cfg.probe = "attractor";
    cfg.n_points = 200000;
    RunResult attractor = run_experiment(cfg);
    auto names = check_names(attractor.summary_json);
    REQUIRE(names.size() == 4);
    CHECK(names[0] == "family covers the window");
    CHECK(names[3] == "attractor fills the occupancy grid");
    REQUIRE(attractor.data_files.size() == 2);
    CHECK(attractor.data_files[0].first == "blender_family.json");
    CHECK(attractor.data_files[1].first == "blender_occupancy.csv");
    CHECK(attractor.passed);

    cfg.probe = "ergodicity";
    RunResult ergodicity = run_experiment(cfg);
    names = check_names(ergodicity.summary_json);
    REQUIRE(names.size() == 4);
    CHECK(names[3] == "seed ball spreads over the domain");
    CHECK(ergodicity.passed);

    ExperimentConfig sp;
    sp.kind = "sphere";
    sp.threads = 4;
    sp.probe = "normal-form";
    sp.n_trials = 10;
    RunResult nf = run_experiment(sp);
    names = check_names(nf.summary_json);
    REQUIRE(names.size() == 2);
    CHECK(names[0] == "normal form words reconstruct their input");
    CHECK(names[1] == "normal form results pass the diagonal condition");
    REQUIRE(nf.data_files.size() == 1);
    CHECK(nf.data_files[0].first == "sphere_normal_forms.csv");
    CHECK(nf.passed);

    // A scan on a sparse grid still produces the full check and file set;
    // its verdict is not asserted because the short word budget may miss.
    sp.probe = "scan";
    sp.n_base = 10;
    sp.n_angles = 4;
    sp.max_word_len = 5;
    sp.refinement = 2;
    RunResult scan = run_experiment(sp);
    names = check_names(scan.summary_json);
    REQUIRE(names.size() == 2);
    CHECK(names[0] == "scan covers the tangent bundle");
    CHECK(names[1] == "refined certificate margin dominates slack");
    REQUIRE(scan.data_files.size() == 2);
    CHECK(scan.data_files[0].first == "sphere_words.csv");
    CHECK(scan.data_files[1].first == "sphere_histogram.csv");
}

TEST_CASE("artifacts land on disk with wall clock facts quarantined") {
    TempDir tmp("qcb_test_cli_artifacts");
    ExperimentConfig cfg = tiny_branch_config();
    RunResult res = run_experiment(cfg);
    auto paths = write_artifacts(res, (tmp.path / "run").string());

    REQUIRE(paths.size() == res.data_files.size() + 2);
    CHECK(fs::path(paths.front()).filename() == "summary.json");
    CHECK(fs::path(paths.back()).filename() == "metadata.json");
    CHECK(slurp(paths.front()) == res.summary_json + "\n");
    CHECK(res.summary_json.find("written_at") == std::string::npos);

    json meta = json::parse(slurp(paths.back()));
    CHECK(meta.at("schema_version").get<int>() == summary_schema_version);
    std::string stamp = meta.at("written_at").get<std::string>();
    CHECK(stamp.find('T') != std::string::npos);
    CHECK(stamp.back() == 'Z');
    REQUIRE(meta.at("files").size() == res.data_files.size() + 1);
    CHECK(meta.at("files")[0].get<std::string>() == "summary.json");

    std::string random_csv = slurp(tmp.path / "run" / "branch_random.csv");
    std::istringstream lines(random_csv);
    std::string header;
    std::getline(lines, header);
    CHECK(header == "trial,lyapunov_slope,slope_stderr,max_kappa,min_expansion");
    int rows = 0;
    for (std::string line; std::getline(lines, line);) ++rows;
    CHECK(rows == cfg.n_seeds);

    std::string blocked = (tmp.path / "wall").string();
    std::ofstream(blocked) << "file";
    CHECK_THROWS_AS(write_artifacts(res, blocked + "/run"), ExperimentError);
}

TEST_CASE("report aggregates summaries and rejects bad input") {
    ExperimentConfig cfg = tiny_branch_config();
    RunResult branch = run_experiment(cfg);
    ExperimentConfig sp;
    sp.kind = "sphere";
    sp.threads = 4;
    sp.probe = "normal-form";
    sp.n_trials = 5;
    RunResult nf = run_experiment(sp);

    Report report = build_report({branch.summary_json, nf.summary_json});
    CHECK(report.markdown.rfind("# Experiment report", 0) == 0);
    CHECK(report.markdown.find("## branch") != std::string::npos);
    CHECK(report.markdown.find("## sphere") != std::string::npos);
    CHECK(report.markdown.find("## Reproducibility") != std::string::npos);
    CHECK(report.markdown.find("`" + config_hash(cfg) + "`") != std::string::npos);

    std::istringstream lines(report.csv);
    std::string header;
    std::getline(lines, header);
    CHECK(header == "kind,config_hash,seed,check,value,threshold,passed");
    int rows = 0;
    for (std::string line; std::getline(lines, line);) ++rows;
    CHECK(rows == 5);

    // Order inside the report follows the fixed kind order, not input order.
    Report swapped = build_report({nf.summary_json, branch.summary_json});
    CHECK(swapped.markdown == report.markdown);
    CHECK(swapped.csv == report.csv);

    CHECK_THROWS_WITH_AS(build_report({}), "report: no summaries", ExperimentError);
    CHECK_THROWS_WITH_AS(build_report({"{"}), "report: summary is not valid JSON",
                         ExperimentError);
    CHECK_THROWS_WITH_AS(build_report({"{}"}), "report: summary is missing its schema version",
                         ExperimentError);
    json bumped = json::parse(branch.summary_json);
    bumped["schema_version"] = 2;
    CHECK_THROWS_WITH_AS(build_report({bumped.dump()}), "report: unsupported schema version 2",
                         ExperimentError);
    CHECK_THROWS_WITH_AS(build_report({branch.summary_json, bumped.dump()}),
                         "report: mixed schema versions", ExperimentError);
    json renamed = json::parse(branch.summary_json);
    renamed["kind"] = "mystery";
    CHECK_THROWS_WITH_AS(build_report({renamed.dump()}),
                         "report: summary has unknown kind 'mystery'", ExperimentError);
}

TEST_CASE("unknown kind is rejected before any run") {
    ExperimentConfig cfg;
    cfg.kind = "unknown";
    CHECK_THROWS_AS(run_experiment(cfg), ConfigError);
}
