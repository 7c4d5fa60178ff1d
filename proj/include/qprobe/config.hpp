// config.hpp — JSON experiment configuration: parsing, whole-file validation,
// default filling (with every applied default echoed), and the resolved record
// the CLI dispatches on.

#pragma once

#include <cmath>
#include <fstream>
#include <numbers>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "qprobe/metrology.hpp"
#include "qprobe/version.hpp"

namespace qprobe::cfg {

using nlohmann::json;

class ValidationError : public std::runtime_error {
public:
    explicit ValidationError(std::vector<std::string> problems)
        : std::runtime_error(join(problems)), violations(std::move(problems)) {}
    std::vector<std::string> violations;

private:
    static std::string join(const std::vector<std::string>& v) {
        std::string out = "config validation failed:";
        for (const auto& s : v) out += "\n  - " + s;
        return out;
    }
};

enum class Command {
    single_qubit_dynamics,
    sse_check,
    two_qubit_qfi,
    optimize,
    ising_scan,
    h_scan,
    size_scan,
    delta_g,
    gap
};

inline const std::vector<std::pair<std::string, Command>>& command_names() {
    static const std::vector<std::pair<std::string, Command>> names{
        {"single-qubit-dynamics", Command::single_qubit_dynamics},
        {"sse-check", Command::sse_check},
        {"two-qubit-qfi", Command::two_qubit_qfi},
        {"optimize", Command::optimize},
        {"ising-scan", Command::ising_scan},
        {"h-scan", Command::h_scan},
        {"size-scan", Command::size_scan},
        {"delta-g", Command::delta_g},
        {"gap", Command::gap}};
    return names;
}

inline std::string command_name(Command c) {
    for (const auto& [n, v] : command_names())
        if (v == c) return n;
    return "?";
}

struct GridSpec {
    double min{0.0};
    double max{0.0};
    int points{2};
    bool log_scale{false};

    std::vector<double> values() const {
        std::vector<double> v(static_cast<std::size_t>(points));
        if (points == 1) {
            v[0] = min;
            return v;
        }
        for (int k = 0; k < points; ++k) {
            const double f = double(k) / double(points - 1);
            v[static_cast<std::size_t>(k)] =
                log_scale ? min * std::pow(max / min, f) : min + f * (max - min);
        }
        v.back() = max;
        return v;
    }
};

struct ExperimentConfig {
    Command command{Command::gap};
    metrology::Experiment experiment;
    std::optional<GridSpec> grid;

    std::optional<double> t_fixed;
    std::optional<std::pair<double, double>> t_window;
    int t_samples{2048};
    bool per_point_time_opt{false};

    std::vector<double> h_values{1.0};       // ising-scan curves
    bool table1{false};                      // optimize preset
    int table1_n_max{4};

    double sse_dt{1e-3};
    int sse_n_traj{2000};
    std::uint64_t sse_seed{7};
    double sse_t_final{20.0};
    int sse_n_samples{10};

    std::string output_stem;
    std::vector<std::string> applied_defaults;
    json resolved; // the full resolved config (round-trips to identical CSV)

    std::string lambda_unit() const {
        return experiment.kind == metrology::ExperimentKind::ising_probe ? "J" : "omega0";
    }
    std::string time_unit() const {
        return experiment.kind == metrology::ExperimentKind::ising_probe ? "1/J" : "1/omega0";
    }
};

namespace detail {

struct Validator {
    std::vector<std::string> problems;

    void require(bool ok, const std::string& msg) {
        if (!ok) problems.push_back(msg);
    }

    void check_keys(const json& obj, const std::string& where,
                    const std::vector<std::string>& allowed) {
        if (!obj.is_object()) return;
        for (auto it = obj.begin(); it != obj.end(); ++it) {
            bool known = false;
            for (const auto& k : allowed)
                if (it.key() == k) known = true;
            if (!known) problems.push_back(where + ": unknown key '" + it.key() + "'");
        }
    }

    double number(const json& obj, const std::string& where, const std::string& key,
                  std::optional<double> fallback, std::vector<std::string>* defaults) {
        if (obj.contains(key)) {
            const json& v = obj.at(key);
            if (!v.is_number()) {
                problems.push_back(where + "." + key + ": expected a number");
                return fallback.value_or(0.0);
            }
            return v.get<double>();
        }
        if (!fallback) {
            problems.push_back(where + "." + key + ": missing required field");
            return 0.0;
        }
        if (defaults) defaults->push_back(where + "." + key);
        return *fallback;
    }
};

} // namespace detail

inline ExperimentConfig parse_config(const json& input) {
    json root = input;
    if (root.contains("config")) root = root.at("config"); // sidecar round-trip
    detail::Validator v;
    ExperimentConfig out;

    v.require(root.is_object(), "top level: expected a JSON object");
    if (!root.is_object()) throw ValidationError(std::move(v.problems));

    v.check_keys(root, "top level",
                 {"command", "model", "noise", "initial_state", "grid", "time", "h_values",
                  "optimize", "sse", "output"});

    // command
    if (!root.contains("command")) {
        v.problems.push_back("command: missing required field");
        throw ValidationError(std::move(v.problems));
    }
    {
        const std::string name = root.at("command").is_string()
                                     ? root.at("command").get<std::string>()
                                     : std::string();
        bool found = false;
        for (const auto& [n, c] : command_names())
            if (n == name) {
                out.command = c;
                found = true;
            }
        if (!found) {
            v.problems.push_back("command: unknown command '" + name + "'");
            throw ValidationError(std::move(v.problems));
        }
    }

    const json model = root.value("model", json::object());
    const json noise = root.value("noise", json::object());
    const json init = root.value("initial_state", json::object());
    const json time = root.value("time", json::object());
    const json opt = root.value("optimize", json::object());
    const json sse = root.value("sse", json::object());
    const json output = root.value("output", json::object());

    v.check_keys(model, "model", {"omega0", "omega_p", "g", "n_sites", "h", "j", "h_p", "j_p"});
    v.check_keys(noise, "noise", {"kind", "lambda", "rc_over_a", "sites"});
    v.check_keys(init, "initial_state", {"beta", "theta", "phi"});
    v.check_keys(time, "time", {"t", "window", "samples", "per_point_opt"});
    v.check_keys(opt, "optimize", {"t_window", "table1", "n_max"});
    v.check_keys(sse, "sse", {"dt", "n_traj", "seed", "t_final", "n_samples"});
    v.check_keys(output, "output", {"stem"});

    // experiment kind from the command (gap and optimize infer from the model block)
    using metrology::ExperimentKind;
    ExperimentKind kind;
    switch (out.command) {
        case Command::single_qubit_dynamics:
        case Command::sse_check:
            kind = ExperimentKind::single_qubit;
            break;
        case Command::two_qubit_qfi:
            kind = ExperimentKind::two_qubit;
            break;
        case Command::ising_scan:
        case Command::h_scan:
        case Command::size_scan:
        case Command::delta_g:
            kind = ExperimentKind::ising_probe;
            break;
        case Command::optimize:
            kind = (opt.value("table1", false) || model.contains("n_sites"))
                       ? ExperimentKind::ising_probe
                       : ExperimentKind::two_qubit;
            break;
        case Command::gap:
        default:
            kind = model.contains("n_sites") ? ExperimentKind::ising_probe
                   : (model.contains("omega_p") || model.contains("g"))
                       ? ExperimentKind::two_qubit
                       : ExperimentKind::single_qubit;
            break;
    }
    out.experiment.kind = kind;
    auto& defaults = out.applied_defaults;

    // model block
    const bool ising = kind == ExperimentKind::ising_probe;
    double jcoup = 1.0;
    if (ising) {
        const double n_sites = v.number(model, "model", "n_sites", std::nullopt, nullptr);
        jcoup = v.number(model, "model", "j", 1.0, &defaults);
        const double h = v.number(model, "model", "h", jcoup, &defaults);
        const double h_p = v.number(model, "model", "h_p", 0.5 * jcoup, &defaults);
        const double j_p = v.number(model, "model", "j_p", 0.5 * jcoup, &defaults);
        v.require(n_sites == std::floor(n_sites) && n_sites >= 1 && n_sites <= 12,
                  "model.n_sites: expected an integer in [1, 12]");
        v.require(h > 0, "model.h: must be > 0");
        v.require(jcoup > 0, "model.j: must be > 0");
        if (v.problems.empty()) {
            out.experiment.chain = model::IsingChainSpec(int(n_sites), h, jcoup);
            out.experiment.probe_coupling = model::ProbeCouplingSpec(h_p, j_p);
        }
    } else {
        const double omega0 = v.number(model, "model", "omega0", 1.0, &defaults);
        v.require(omega0 > 0, "model.omega0: must be > 0");
        out.experiment.omega0 = omega0;
        if (kind == ExperimentKind::two_qubit) {
            const double omega_p = v.number(model, "model", "omega_p", 0.3 * omega0, &defaults);
            const double g = v.number(model, "model", "g", 0.2 * omega0, &defaults);
            v.require(omega_p > 0, "model.omega_p: must be > 0");
            out.experiment.omega_p = omega_p;
            out.experiment.g_coupling = g;
        }
    }

    // noise block
    {
        std::string kindname = noise.value("kind", std::string("local"));
        if (!noise.contains("kind")) defaults.push_back("noise.kind");
        if (out.command == Command::delta_g) kindname = "correlated";
        v.require(kindname == "local" || kindname == "correlated",
                  "noise.kind: expected 'local' or 'correlated'");
        out.experiment.noise_kind = kindname == "correlated" ? model::NoiseKind::correlated
                                                             : model::NoiseKind::local;
        const double lam_default =
            (out.command == Command::single_qubit_dynamics || out.command == Command::sse_check ||
             out.command == Command::gap || out.command == Command::optimize)
                ? 0.1
                : std::nan("");
        const bool lam_required = std::isnan(lam_default) &&
                                  (out.command == Command::h_scan ||
                                   out.command == Command::size_scan);
        double lam;
        if (lam_required) {
            lam = v.number(noise, "noise", "lambda", std::nullopt, nullptr);
        } else if (!std::isnan(lam_default)) {
            lam = v.number(noise, "noise", "lambda", lam_default, &defaults);
        } else {
            lam = noise.value("lambda", 0.0); // scans take lambda from the grid
        }
        v.require(lam >= 0, "noise.lambda: must be >= 0");
        out.experiment.lambda = lam;

        const bool corr = out.experiment.noise_kind == model::NoiseKind::correlated;
        double rc = 1.0;
        if (corr || noise.contains("rc_over_a"))
            rc = v.number(noise, "noise", "rc_over_a", corr ? 2.0 : 1.0, &defaults);
        if (corr) v.require(rc > 0, "noise.rc_over_a: must be > 0");
        out.experiment.rc_over_a = rc;

        if (noise.contains("sites")) {
            if (!noise.at("sites").is_array()) {
                v.problems.push_back("noise.sites: expected an array of site indices");
            } else {
                std::vector<int> sites;
                const int n_chain = ising ? out.experiment.chain.n_sites : 1;
                for (const auto& s : noise.at("sites")) {
                    if (!s.is_number_integer()) {
                        v.problems.push_back("noise.sites: entries must be integers");
                        continue;
                    }
                    const int si = s.get<int>();
                    if (si < 1 || si > n_chain)
                        v.problems.push_back(
                            "noise.sites: site " + std::to_string(si) +
                            " outside the chain 1.." + std::to_string(n_chain) +
                            " (the probe site is never subject to collapse)");
                    sites.push_back(si);
                }
                out.experiment.noise_sites = std::move(sites);
            }
        }
    }

    // initial state
    {
        const bool two_qubit = kind == ExperimentKind::two_qubit;
        const double beta_default = ising ? 0.1 / jcoup : (two_qubit ? 0.01 : 0.0);
        const double theta_default =
            ising ? std::numbers::pi : (two_qubit ? std::numbers::pi / 4 : 0.0);
        const double phi_default = two_qubit ? std::numbers::pi / 4 : 0.0;
        const double beta = v.number(init, "initial_state", "beta", beta_default, &defaults);
        const double theta = v.number(init, "initial_state", "theta", theta_default, &defaults);
        const double phi = v.number(init, "initial_state", "phi", phi_default, &defaults);
        v.require(beta >= 0, "initial_state.beta: must be >= 0");
        v.require(theta >= 0 && theta <= std::numbers::pi,
                  "initial_state.theta: outside [0, pi]");
        v.require(phi >= 0 && phi < 2 * std::numbers::pi,
                  "initial_state.phi: outside [0, 2pi)");
        out.experiment.beta = beta;
        if (v.problems.empty()) out.experiment.probe_state = model::BlochState(theta, phi);
    }

    // grid
    const bool grid_required = out.command == Command::two_qubit_qfi ||
                               out.command == Command::ising_scan ||
                               out.command == Command::h_scan ||
                               out.command == Command::size_scan ||
                               out.command == Command::delta_g;
    if (root.contains("grid")) {
        const json& g = root.at("grid");
        v.check_keys(g, "grid", {"min", "max", "points", "scale"});
        GridSpec gs;
        gs.min = v.number(g, "grid", "min", std::nullopt, nullptr);
        gs.max = v.number(g, "grid", "max", std::nullopt, nullptr);
        const double pts = v.number(g, "grid", "points", std::nullopt, nullptr);
        std::string scale = g.value("scale", std::string("log"));
        if (!g.contains("scale")) defaults.push_back("grid.scale");
        v.require(scale == "log" || scale == "linear", "grid.scale: expected 'log' or 'linear'");
        gs.log_scale = scale == "log";
        v.require(gs.min < gs.max, "grid: min must be < max");
        v.require(pts == std::floor(pts) && pts >= 2 && pts <= 100000,
                  "grid.points: expected an integer >= 2");
        if (gs.log_scale) v.require(gs.min > 0, "grid: log scale requires min > 0");
        gs.points = int(pts);
        out.grid = gs;
    } else if (grid_required && out.command == Command::two_qubit_qfi) {
        out.grid = GridSpec{0.05, 0.5, 10, false};
        defaults.push_back("grid");
    } else if (grid_required) {
        v.problems.push_back("grid: missing required field for command '" +
                             command_name(out.command) + "'");
    }

    // time block
    if (time.contains("t")) {
        const double t = v.number(time, "time", "t", std::nullopt, nullptr);
        v.require(t >= 0, "time.t: must be >= 0");
        out.t_fixed = t;
    }
    if (time.contains("window")) {
        const json& w = time.at("window");
        if (!w.is_array() || w.size() != 2 || !w[0].is_number() || !w[1].is_number()) {
            v.problems.push_back("time.window: expected [t_min, t_max]");
        } else {
            out.t_window = {w[0].get<double>(), w[1].get<double>()};
            v.require(out.t_window->first >= 0 && out.t_window->second > out.t_window->first,
                      "time.window: need 0 <= t_min < t_max");
        }
    }
    {
        const double samples = v.number(time, "time", "samples", 2048.0, nullptr);
        v.require(samples == std::floor(samples) && samples >= 2,
                  "time.samples: expected an integer >= 2");
        out.t_samples = int(samples);
        if (time.contains("per_point_opt")) {
            v.require(time.at("per_point_opt").is_boolean(),
                      "time.per_point_opt: expected a boolean");
            out.per_point_time_opt = time.value("per_point_opt", false);
        }
    }

    // h_values for ising-scan
    if (root.contains("h_values")) {
        if (!root.at("h_values").is_array() || root.at("h_values").empty()) {
            v.problems.push_back("h_values: expected a non-empty array of h/J ratios");
        } else {
            out.h_values.clear();
            for (const auto& x : root.at("h_values")) {
                if (!x.is_number()) {
                    v.problems.push_back("h_values: entries must be numbers");
                } else {
                    out.h_values.push_back(x.get<double>());
                    v.require(x.get<double>() > 0, "h_values: entries must be > 0");
                }
            }
        }
    } else if (out.command == Command::ising_scan) {
        out.h_values = {1.0};
        defaults.push_back("h_values");
    }

    // optimize block
    if (opt.contains("t_window")) {
        const json& w = opt.at("t_window");
        if (!w.is_array() || w.size() != 2 || !w[0].is_number() || !w[1].is_number()) {
            v.problems.push_back("optimize.t_window: expected [t_min, t_max]");
        } else {
            out.t_window = {w[0].get<double>(), w[1].get<double>()};
            v.require(out.t_window->second > out.t_window->first,
                      "optimize.t_window: need t_min < t_max");
        }
    }
    if (opt.contains("table1")) {
        v.require(opt.at("table1").is_boolean(), "optimize.table1: expected a boolean");
        out.table1 = opt.value("table1", false);
    }
    {
        const double nmax = v.number(opt, "optimize", "n_max", 4.0, nullptr);
        v.require(nmax == std::floor(nmax) && nmax >= 2 && nmax <= 6,
                  "optimize.n_max: expected an integer in [2, 6]");
        out.table1_n_max = int(nmax);
    }

    // sse block
    {
        out.sse_dt = v.number(sse, "sse", "dt", 1e-3, out.command == Command::sse_check
                                                           ? &defaults
                                                           : nullptr);
        const double ntraj = v.number(sse, "sse", "n_traj", 2000.0,
                                      out.command == Command::sse_check ? &defaults : nullptr);
        const double seed = v.number(sse, "sse", "seed", 7.0,
                                     out.command == Command::sse_check ? &defaults : nullptr);
        out.sse_t_final = v.number(sse, "sse", "t_final", 20.0,
                                   out.command == Command::sse_check ? &defaults : nullptr);
        const double nsamp = v.number(sse, "sse", "n_samples", 10.0,
                                      out.command == Command::sse_check ? &defaults : nullptr);
        v.require(out.sse_dt > 0, "sse.dt: must be > 0");
        v.require(ntraj == std::floor(ntraj) && ntraj >= 1, "sse.n_traj: integer >= 1");
        v.require(seed >= 0 && seed == std::floor(seed), "sse.seed: non-negative integer");
        v.require(out.sse_t_final > 0, "sse.t_final: must be > 0");
        v.require(nsamp == std::floor(nsamp) && nsamp >= 1, "sse.n_samples: integer >= 1");
        out.sse_n_traj = int(ntraj);
        out.sse_seed = std::uint64_t(seed);
        out.sse_n_samples = int(nsamp);
    }

    out.output_stem = output.value("stem", command_name(out.command));
    if (!output.contains("stem")) defaults.push_back("output.stem");

    if (!v.problems.empty()) throw ValidationError(std::move(v.problems));

    // resolved echo: the full configuration after defaults
    json r;
    r["command"] = command_name(out.command);
    if (ising) {
        r["model"] = {{"n_sites", out.experiment.chain.n_sites},
                      {"h", out.experiment.chain.h},
                      {"j", out.experiment.chain.j},
                      {"h_p", out.experiment.probe_coupling.h_p},
                      {"j_p", out.experiment.probe_coupling.j_p}};
    } else if (kind == ExperimentKind::two_qubit) {
        r["model"] = {{"omega0", out.experiment.omega0},
                      {"omega_p", out.experiment.omega_p},
                      {"g", out.experiment.g_coupling}};
    } else {
        r["model"] = {{"omega0", out.experiment.omega0}};
    }
    r["noise"] = {{"kind", out.experiment.noise_kind == model::NoiseKind::correlated
                               ? "correlated"
                               : "local"},
                  {"lambda", out.experiment.lambda}};
    if (out.experiment.noise_kind == model::NoiseKind::correlated)
        r["noise"]["rc_over_a"] = out.experiment.rc_over_a;
    if (out.experiment.noise_sites) r["noise"]["sites"] = *out.experiment.noise_sites;
    r["initial_state"] = {{"beta", out.experiment.beta},
                          {"theta", out.experiment.probe_state.theta},
                          {"phi", out.experiment.probe_state.phi}};
    if (out.grid)
        r["grid"] = {{"min", out.grid->min},
                     {"max", out.grid->max},
                     {"points", out.grid->points},
                     {"scale", out.grid->log_scale ? "log" : "linear"}};
    json t;
    if (out.t_fixed) t["t"] = *out.t_fixed;
    if (out.t_window) t["window"] = {out.t_window->first, out.t_window->second};
    t["samples"] = out.t_samples;
    if (out.per_point_time_opt) t["per_point_opt"] = true;
    r["time"] = t;
    if (out.command == Command::ising_scan) r["h_values"] = out.h_values;
    if (out.command == Command::optimize)
        r["optimize"] = {{"table1", out.table1}, {"n_max", out.table1_n_max}};
    if (out.command == Command::sse_check)
        r["sse"] = {{"dt", out.sse_dt},
                    {"n_traj", out.sse_n_traj},
                    {"seed", out.sse_seed},
                    {"t_final", out.sse_t_final},
                    {"n_samples", out.sse_n_samples}};
    r["output"]["stem"] = out.output_stem;
    out.resolved = std::move(r);
    return out;
}

inline ExperimentConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("load_config: cannot open '" + path + "'");
    json j;
    try {
        in >> j;
    } catch (const json::parse_error& e) {
        throw ValidationError({std::string("JSON parse error: ") + e.what()});
    }
    return parse_config(j);
}

inline ExperimentConfig load_config_text(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& e) {
        throw ValidationError({std::string("JSON parse error: ") + e.what()});
    }
    return parse_config(j);
}

} // namespace qprobe::cfg
