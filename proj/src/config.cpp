#include "qcb/config.hpp"

#include <json.hpp>

#include <array>
#include <cctype>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

namespace qcb::config {

namespace {

using nlohmann::json;

std::string line_tag(int line_no) {
    return " on line " + std::to_string(line_no);
}

// Strips the comment tail of a TOML line; '#' inside a quoted string stays.
std::string strip_comment(const std::string& line) {
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        if (line[i] == '"') quoted = !quoted;
        if (line[i] == '#' && !quoted) return line.substr(0, i);
    }
    return line;
}

std::string trim(const std::string& s) {
    std::size_t b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    std::size_t e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

// One scalar token of the TOML subset as a json value.
json parse_scalar(const std::string& raw, int line_no) {
    if (raw.empty()) throw ConfigError("config: unreadable value ''" + line_tag(line_no));
    if (raw.front() == '"') {
        if (raw.size() < 2 || raw.back() != '"')
            throw ConfigError("config: unterminated string" + line_tag(line_no));
        return json(raw.substr(1, raw.size() - 2));
    }
    if (raw == "true") return json(true);
    if (raw == "false") return json(false);
    std::size_t used = 0;
    if (raw.find_first_of(".eE") == std::string::npos && raw.find("inf") == std::string::npos &&
        raw.find("nan") == std::string::npos) {
        try {
            if (raw.front() == '-') {
                long long v = std::stoll(raw, &used);
                if (used == raw.size()) return json(v);
            } else {
                unsigned long long v = std::stoull(raw, &used);
                if (used == raw.size()) return json(v);
            }
        } catch (const std::exception&) {
        }
    } else {
        try {
            double v = std::stod(raw, &used);
            if (used == raw.size()) return json(v);
        } catch (const std::exception&) {
        }
    }
    throw ConfigError("config: unreadable value '" + raw + "'" + line_tag(line_no));
}

json parse_value(const std::string& raw, int line_no) {
    if (!raw.empty() && raw.front() == '[') {
        if (raw.back() != ']')
            throw ConfigError("config: unterminated array" + line_tag(line_no));
        json arr = json::array();
        std::string body = raw.substr(1, raw.size() - 2);
        std::string item;
        bool quoted = false;
        for (char c : body) {
            if (c == '"') quoted = !quoted;
            if (c == ',' && !quoted) {
                arr.push_back(parse_scalar(trim(item), line_no));
                item.clear();
            } else {
                item += c;
            }
        }
        if (!trim(item).empty()) arr.push_back(parse_scalar(trim(item), line_no));
        return arr;
    }
    return parse_scalar(raw, line_no);
}

// Flat key/value form of the document, dotted keys for table members.
std::vector<std::pair<std::string, json>> parse_toml_subset(const std::string& text) {
    std::vector<std::pair<std::string, json>> entries;
    std::istringstream in(text);
    std::string line;
    std::string prefix;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        std::string body = trim(strip_comment(line));
        if (body.empty()) continue;
        if (body.front() == '[') {
            if (body.back() != ']')
                throw ConfigError("config: unterminated table header" + line_tag(line_no));
            prefix = trim(body.substr(1, body.size() - 2)) + ".";
            continue;
        }
        std::size_t eq = body.find('=');
        if (eq == std::string::npos)
            throw ConfigError("config: expected '='" + line_tag(line_no));
        std::string key = trim(body.substr(0, eq));
        if (key.empty()) throw ConfigError("config: empty key" + line_tag(line_no));
        entries.emplace_back(prefix + key, parse_value(trim(body.substr(eq + 1)), line_no));
    }
    return entries;
}

void expect_string(ExperimentConfig& cfg, const std::string& key, const json& v,
                   std::string ExperimentConfig::* field) {
    if (!v.is_string()) throw ConfigError("config: key '" + key + "' expects a string");
    cfg.*field = v.get<std::string>();
}

void expect_int(ExperimentConfig& cfg, const std::string& key, const json& v,
                int ExperimentConfig::* field) {
    if (!v.is_number_integer() && !v.is_number_unsigned())
        throw ConfigError("config: key '" + key + "' expects an integer");
    cfg.*field = v.get<int>();
}

void expect_double(ExperimentConfig& cfg, const std::string& key, const json& v,
                   double ExperimentConfig::* field) {
    if (!v.is_number()) throw ConfigError("config: key '" + key + "' expects a number");
    cfg.*field = v.get<double>();
}

void assign(ExperimentConfig& cfg, const std::string& key, const json& v) {
    if (key == "kind") return expect_string(cfg, key, v, &ExperimentConfig::kind);
    if (key == "out_dir") return expect_string(cfg, key, v, &ExperimentConfig::out_dir);
    if (key == "probe") return expect_string(cfg, key, v, &ExperimentConfig::probe);
    if (key == "seed") {
        if (!(v.is_number_unsigned() || (v.is_number_integer() && v.get<long long>() >= 0)))
            throw ConfigError("config: key 'seed' expects a nonnegative integer");
        cfg.seed = v.get<std::uint64_t>();
        return;
    }
    if (key == "dimension") return expect_int(cfg, key, v, &ExperimentConfig::dimension);
    if (key == "threads") return expect_int(cfg, key, v, &ExperimentConfig::threads);
    if (key == "grid_per_axis") return expect_int(cfg, key, v, &ExperimentConfig::grid_per_axis);
    if (key == "n_seeds") return expect_int(cfg, key, v, &ExperimentConfig::n_seeds);
    if (key == "n_steps") return expect_int(cfg, key, v, &ExperimentConfig::n_steps);
    if (key == "n_trials") return expect_int(cfg, key, v, &ExperimentConfig::n_trials);
    if (key == "n_points") return expect_int(cfg, key, v, &ExperimentConfig::n_points);
    if (key == "horizon") return expect_int(cfg, key, v, &ExperimentConfig::horizon);
    if (key == "n_particles") return expect_int(cfg, key, v, &ExperimentConfig::n_particles);
    if (key == "n_base") return expect_int(cfg, key, v, &ExperimentConfig::n_base);
    if (key == "n_angles") return expect_int(cfg, key, v, &ExperimentConfig::n_angles);
    if (key == "max_word_len") return expect_int(cfg, key, v, &ExperimentConfig::max_word_len);
    if (key == "refinement") return expect_int(cfg, key, v, &ExperimentConfig::refinement);
    if (key == "epsilon") return expect_double(cfg, key, v, &ExperimentConfig::epsilon);
    if (key == "t_lo") return expect_double(cfg, key, v, &ExperimentConfig::t_lo);
    if (key == "t_hi") return expect_double(cfg, key, v, &ExperimentConfig::t_hi);
    if (key == "r_lo") return expect_double(cfg, key, v, &ExperimentConfig::r_lo);
    if (key == "r_hi") return expect_double(cfg, key, v, &ExperimentConfig::r_hi);
    if (key == "perturbation") return expect_double(cfg, key, v, &ExperimentConfig::perturbation);
    if (key == "cone_angle") return expect_double(cfg, key, v, &ExperimentConfig::cone_angle);
    throw ConfigError("config: unknown key '" + key + "'");
}

void require_positive(double value, const char* name) {
    if (!(value > 0.0)) throw ConfigError(std::string("config: ") + name + " must be positive");
}

void require_at_least_one(int value, const char* name) {
    if (value < 1) throw ConfigError(std::string("config: ") + name + " must be positive");
}

}  // namespace

void validate(const ExperimentConfig& cfg) {
    if (cfg.kind.empty()) throw ConfigError("config: kind is required");
    static const std::array<const char*, 5> kinds = {"covering", "branch", "geometry", "blender",
                                                     "sphere"};
    bool known = false;
    for (const char* k : kinds) known = known || cfg.kind == k;
    if (!known) throw ConfigError("config: unknown kind '" + cfg.kind + "'");
    int dim_lo = cfg.kind == "sphere" ? 1 : 2;
    int dim_hi = cfg.kind == "sphere" ? 4 : 5;
    if (cfg.dimension < dim_lo || cfg.dimension > dim_hi)
        throw ConfigError("config: dimension " + std::to_string(cfg.dimension) +
                          " out of range for kind " + cfg.kind);
    bool probe_ok = cfg.probe == "all";
    if (cfg.kind == "blender")
        probe_ok = probe_ok || cfg.probe == "attractor" || cfg.probe == "ergodicity";
    if (cfg.kind == "sphere")
        probe_ok = probe_ok || cfg.probe == "scan" || cfg.probe == "normal-form" ||
                   cfg.probe == "derivative";
    if (!probe_ok)
        throw ConfigError("config: probe '" + cfg.probe + "' is not valid for kind " +
                          cfg.kind);
    require_at_least_one(cfg.threads, "threads");
    require_positive(cfg.epsilon, "epsilon");
    require_positive(cfg.perturbation, "perturbation");
    require_positive(cfg.cone_angle, "cone_angle");
    require_positive(cfg.t_lo, "t_lo");
    require_positive(cfg.r_lo, "r_lo");
    if (!(cfg.t_lo < cfg.t_hi)) throw ConfigError("config: tuning range needs t_lo < t_hi");
    if (!(cfg.r_lo < cfg.r_hi)) throw ConfigError("config: tuning range needs r_lo < r_hi");
    require_at_least_one(cfg.grid_per_axis, "grid_per_axis");
    require_at_least_one(cfg.n_seeds, "n_seeds");
    require_at_least_one(cfg.n_steps, "n_steps");
    require_at_least_one(cfg.n_trials, "n_trials");
    require_at_least_one(cfg.n_points, "n_points");
    require_at_least_one(cfg.horizon, "horizon");
    require_at_least_one(cfg.n_particles, "n_particles");
    require_at_least_one(cfg.n_base, "n_base");
    require_at_least_one(cfg.n_angles, "n_angles");
    require_at_least_one(cfg.refinement, "refinement");
    if (cfg.max_word_len < 0) throw ConfigError("config: max_word_len must be nonnegative");
}

ExperimentConfig parse_config(const std::string& text) {
    ExperimentConfig cfg;
    std::size_t first = text.find_first_not_of(" \t\r\n");
    if (first != std::string::npos && text[first] == '{') {
        json doc;
        try {
            doc = json::parse(text);
        } catch (const json::parse_error& e) {
            throw ConfigError(std::string("config: invalid JSON: ") + e.what());
        }
        if (!doc.is_object()) throw ConfigError("config: document is not an object");
        for (const auto& [key, value] : doc.items()) assign(cfg, key, value);
    } else {
        for (const auto& [key, value] : parse_toml_subset(text)) assign(cfg, key, value);
    }
    validate(cfg);
    return cfg;
}

ExperimentConfig load_config(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("config: cannot open '" + path + "'");
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_config(buf.str());
}

std::string canonical_json(const ExperimentConfig& cfg) {
    json j;
    j["kind"] = cfg.kind;
    j["probe"] = cfg.probe;
    j["dimension"] = cfg.dimension;
    j["epsilon"] = cfg.epsilon;
    j["seed"] = cfg.seed;
    j["t_lo"] = cfg.t_lo;
    j["t_hi"] = cfg.t_hi;
    j["r_lo"] = cfg.r_lo;
    j["r_hi"] = cfg.r_hi;
    j["grid_per_axis"] = cfg.grid_per_axis;
    j["perturbation"] = cfg.perturbation;
    j["n_seeds"] = cfg.n_seeds;
    j["n_steps"] = cfg.n_steps;
    j["n_trials"] = cfg.n_trials;
    j["n_points"] = cfg.n_points;
    j["horizon"] = cfg.horizon;
    j["n_particles"] = cfg.n_particles;
    j["n_base"] = cfg.n_base;
    j["n_angles"] = cfg.n_angles;
    j["max_word_len"] = cfg.max_word_len;
    j["refinement"] = cfg.refinement;
    j["cone_angle"] = cfg.cone_angle;
    return j.dump();
}

std::string config_hash(const ExperimentConfig& cfg) {
    std::string bytes = canonical_json(cfg);
    std::uint64_t h = 1469598103934665603ull;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 1099511628211ull;
    }
    char out[17];
    std::snprintf(out, sizeof(out), "%016llx", static_cast<unsigned long long>(h));
    return std::string(out);
}

}  // namespace qcb::config
