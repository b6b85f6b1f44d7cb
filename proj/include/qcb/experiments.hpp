#pragma once

#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "qcb/config.hpp"

namespace qcb::experiments {

// Raised when a run or a report cannot be assembled at all (unknown kind,
// empty report input, mixed schema versions).  A check that ran and failed
// is reported through the summary instead.
class ExperimentError : public std::runtime_error {
  public:
    explicit ExperimentError(const std::string& what) : std::runtime_error(what) {}
};

// Output of one experiment run, fully serialized.  summary_json is the
// versioned summary document; identical config and seed reproduce it byte
// for byte regardless of thread count, so the bytes themselves are the
// reproducibility contract.  Every check the runner evaluates appears in
// the summary's check list; passed is their conjunction.
struct RunResult {
    std::string summary_json;
    std::vector<std::pair<std::string, std::string>> data_files;  // name -> bytes
    bool passed = false;
};

// Dispatches on cfg.kind (covering, branch, geometry, blender, sphere).
// The config must already be validated.
RunResult run_experiment(const config::ExperimentConfig& cfg);

// Writes summary.json and the data files under out_dir, plus metadata.json
// carrying the wall-clock facts; timestamps never enter the summary.
// Returns the paths written, the summary first.
std::vector<std::string> write_artifacts(const RunResult& result,
                                         const std::string& out_dir);

struct Report {
    std::string markdown;
    std::string csv;
};

// Aggregates one or more summary documents into a markdown report with one
// check table per kind plus a reproducibility stanza, and a flat CSV of the
// same rows.  Rejects empty input and mixed schema versions.
Report build_report(const std::vector<std::string>& summary_documents);

}  // namespace qcb::experiments
