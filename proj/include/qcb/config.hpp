#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace qcb::config {

inline constexpr const char* artifact_version = "0.1.0";
inline constexpr int summary_schema_version = 1;

// Raised on malformed or out-of-schema configuration input; the message is
// the diagnostic shown to the user (exit code 2 path).
class ConfigError : public std::runtime_error {
  public:
    explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

// One experiment invocation.  Every runner reads the subset of fields it
// needs; the rest keep their defaults and still appear in the canonical
// echo, so a config/seed pair pins the summary bytes exactly.  threads and
// out_dir steer execution, never results, and are excluded from the echo
// and the hash.
struct ExperimentConfig {
    std::string kind;  // covering | branch | geometry | blender | sphere
    int dimension = 2;
    double epsilon = 0.1;
    std::uint64_t seed = 0;
    int threads = 1;
    std::string out_dir = "out";

    // Which probe subset to run: "all" everywhere; blender also accepts
    // "attractor" and "ergodicity", sphere also "scan", "normal-form" and
    // "derivative".  Anything but "all" runs a partial check list.
    std::string probe = "all";

    // covering: tuning ranges, certification grid, stability bump size
    double t_lo = 0.1;
    double t_hi = 0.45;
    double r_lo = 0.05;
    double r_hi = 0.2;
    int grid_per_axis = 24;
    double perturbation = 1e-3;

    // branch: ensemble of random branches against one greedy branch
    int n_seeds = 100;
    int n_steps = 10000;

    // geometry: seeds for the pseudo-orbit and distortion ensembles
    int n_trials = 100;

    // blender: chaos-game size and ergodicity horizon
    int n_points = 1000000;
    int horizon = 500;
    int n_particles = 400;

    // sphere: tangent grid split, search depth, certificate refinement
    int n_base = 100;
    int n_angles = 10;
    int max_word_len = 12;
    int refinement = 4;
    double cone_angle = 0.1;
};

// Schema check: known kind, dimension range (sphere allows 1..4, everything
// else 2..5), positive budgets and tolerances, ordered tuning ranges.
// Throws ConfigError naming the offending field.
void validate(const ExperimentConfig& cfg);

// Parses a config document and validates it.  JSON documents start with
// '{'; anything else is read as the TOML subset (comments, [tables],
// key = scalar or array of scalars).  Unknown or mistyped keys are schema
// errors.
ExperimentConfig parse_config(const std::string& text);
ExperimentConfig load_config(const std::string& path);

// Canonical JSON echo of the result-relevant fields, keys sorted, and its
// FNV-1a hash (16 hex digits).  Two runs agree on these exactly when they
// agree on every result the summary can contain.
std::string canonical_json(const ExperimentConfig& cfg);
std::string config_hash(const ExperimentConfig& cfg);

}  // namespace qcb::config
