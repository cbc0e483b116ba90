#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "nvodmr/cli.hpp"

namespace {

using nvodmr::cli::CommandOutput;
using nvodmr::cli::Format;
using nvodmr::cli::RunOptions;
using nvodmr::config::Config;

constexpr const char* output_dir_env = "NVODMR_OUTPUT_DIR";

struct LeafOptions {
    std::string config_path;
    std::string out_path;
    std::string input_path;
    std::string format = "json";
    std::uint64_t seed = 1;
    std::vector<std::string> overrides;
};

using Command = std::function<CommandOutput(const Config&, const RunOptions&)>;

struct Leaf {
    std::string name;  // used for the default output file name
    Command run;
    std::string default_format;
    LeafOptions opts;
};

void add_common(CLI::App* app, Leaf& leaf, bool takes_input) {
    leaf.opts.format = leaf.default_format;
    app->add_option("--config", leaf.opts.config_path, "flat key = value config file");
    app->add_option("--seed", leaf.opts.seed, "RNG seed")->capture_default_str();
    app->add_option("--out", leaf.opts.out_path, "output path (default: $NVODMR_OUTPUT_DIR/<command>.<ext> or stdout)");
    app->add_option("--format", leaf.opts.format, "csv or json")
        ->check(CLI::IsMember({"csv", "json"}))
        ->capture_default_str();
    app->add_option("--set", leaf.opts.overrides, "override a config key (key=value), repeatable");
    if (takes_input) {
        app->add_option("--input", leaf.opts.input_path, "input CSV (same as input_path=...)");
    }
}

std::filesystem::path resolve_output(const Leaf& leaf) {
    if (!leaf.opts.out_path.empty()) {
        return leaf.opts.out_path;
    }
    if (const char* dir = std::getenv(output_dir_env); dir != nullptr && *dir != '\0') {
        return std::filesystem::path(dir) / (leaf.name + "." + leaf.opts.format);
    }
    return {};
}

int run_leaf(const Leaf& leaf) {
    Config cfg;
    if (!leaf.opts.config_path.empty()) {
        std::ifstream in(leaf.opts.config_path);
        if (!in) {
            throw nvodmr::Error("cannot open config '" + leaf.opts.config_path + "'");
        }
        cfg = Config::parse(in);
    }
    for (const auto& o : leaf.opts.overrides) {
        cfg.set(o);
    }
    if (!leaf.opts.input_path.empty()) {
        cfg.set("input_path", leaf.opts.input_path);
    }
    RunOptions run;
    run.seed = leaf.opts.seed;
    run.format = leaf.opts.format == "csv" ? Format::csv : Format::json;

    const CommandOutput out = leaf.run(cfg, run);
    const auto path = resolve_output(leaf);
    if (path.empty()) {
        std::cout << out.primary;
        return 0;
    }
    // Sidecars first so the primary file only appears once everything is written.
    std::vector<std::filesystem::path> written;
    try {
        for (const auto& [suffix, content] : out.sidecars) {
            auto side = path;
            side += suffix;
            nvodmr::io::write_file_atomic(side, content);
            written.push_back(side);
        }
        nvodmr::io::write_file_atomic(path, out.primary);
    } catch (...) {
        for (const auto& p : written) {
            std::filesystem::remove(p);
        }
        throw;
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"nvodmr: E-band resonator design, NV spin simulation and quantum-jump analysis"};
    app.require_subcommand(1);

    namespace c = nvodmr::cli;
    std::vector<Leaf> leaves;
    leaves.reserve(8);
    std::vector<std::pair<CLI::App*, Leaf*>> bound;

    auto leaf = [&](CLI::App* parent, const std::string& sub, const std::string& help, const std::string& name,
                    Command cmd, const std::string& fmt, bool takes_input) {
        leaves.push_back({name, std::move(cmd), fmt, {}});
        auto* app_leaf = parent->add_subcommand(sub, help);
        add_common(app_leaf, leaves.back(), takes_input);
        bound.emplace_back(app_leaf, &leaves.back());
    };

    leaf(&app, "cavity", "cylindrical cavity design report", "cavity", c::cmd_cavity, "json", false);
    leaf(&app, "cpw", "half-wave CPW resonator estimate", "cpw", c::cmd_cpw, "json", false);
    leaf(&app, "odmr", "pulsed ODMR spectrum", "odmr", c::cmd_odmr, "csv", false);
    leaf(&app, "rabi", "Rabi oscillation sweep and fit", "rabi", c::cmd_rabi, "csv", false);
    leaf(&app, "nmr", "nuclear spin flip probability versus RF frequency", "nmr", c::cmd_nmr, "csv", false);

    auto* trace = app.add_subcommand("trace", "single-shot readout timetraces");
    trace->require_subcommand(1);
    leaf(trace, "simulate", "synthesize a quantum-jump trace", "trace", c::cmd_trace_simulate, "csv", false);
    leaf(trace, "analyze", "HMM analysis of a trace CSV", "trace_analysis", c::cmd_trace_analyze, "json", true);

    auto* fit = app.add_subcommand("fit", "curve fitting");
    fit->require_subcommand(1);
    leaf(fit, "lorentzian", "amplitude Lorentzian fit of a resonance curve", "lorentzian_fit",
         c::cmd_fit_lorentzian, "json", true);

    CLI11_PARSE(app, argc, argv);

    for (const auto& [sub, lf] : bound) {
        if (sub->parsed()) {
            try {
                return run_leaf(*lf);
            } catch (const std::exception& e) {
                std::cerr << "nvodmr " << lf->name << ": " << e.what() << "\n";
                return 1;
            }
        }
    }
    return 2;
}
