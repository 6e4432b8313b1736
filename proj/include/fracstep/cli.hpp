#pragma once

#include <cstdlib>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "fracstep/experiment.hpp"

namespace fracstep {

/// Parsed command line: the config plus what to do with it.
struct CliRequest {
    ExperimentConfig config;
    bool run = false;
};

/**
 * Parses `fracstep run [flags]`. A --config file holds flat `key = value`
 * lines using the flag names; flags given on the command line win, and
 * FRACSTEP_OUT overrides the output directory. Throws ConfigError naming the
 * offending key, or CLI::CallForHelp / CLI::CallForVersion for help requests.
 */
inline CliRequest parse_command_line(std::vector<std::string> args) {
    CliRequest req;
    ExperimentConfig& c = req.config;
    CLI::App app{"Time-fractional subdiffusion experiments", "fracstep"};
    app.require_subcommand(1);
    CLI::App* run = app.add_subcommand("run", "run an experiment matrix")->fallthrough();

    std::optional<int> M, M1, M2;
    std::optional<double> T, nu;
    app.add_option("--example", c.example, "1, 2 or custom");
    app.add_option("--alpha", c.alphas, "fractional orders")->delimiter(',');
    app.add_option("--r", c.gradings, "gradings; 2/alpha is resolved per alpha")->delimiter(',');
    app.add_option("--N", c.Ns, "step counts (doubling)")->delimiter(',');
    app.add_option("--M", M, "cells per direction");
    app.add_option("--M1", M1, "cells in x");
    app.add_option("--M2", M2, "cells in y");
    app.add_option("--T", T, "final time");
    app.add_option("--nu", nu, "diffusivity");
    app.add_option("--mode", c.mode, "table, audit, recurrence or truncation");
    app.add_option("--out", c.out, "output directory");
    app.add_option("--jobs", c.jobs, "worker threads");
    app.add_option("--reaction", c.reaction, "custom example: allen-cahn, logistic, none or linear:<c>");
    app.add_option("--initial", c.initial, "custom example: sine or zero");
    app.set_config("--config", "", "flat key = value file");
    app.allow_config_extras(CLI::config_extras_mode::error);

    std::reverse(args.begin(), args.end());
    try {
        app.parse(args);
    } catch (const CLI::CallForHelp&) {
        throw;
    } catch (const CLI::CallForAllHelp&) {
        throw;
    } catch (const CLI::ParseError& e) {
        std::string key = e.get_name();
        const std::string what = e.what();
        // Recover the option name from messages such as "--M: ..." or "INI was not able to parse bogus".
        if (auto pos = what.find("--"); pos != std::string::npos) {
            auto end = what.find_first_of(" :=", pos);
            key = what.substr(pos + 2, end == std::string::npos ? std::string::npos : end - pos - 2);
        } else if (auto p2 = what.rfind("parse "); p2 != std::string::npos) {
            key = what.substr(p2 + 6);
        }
        throw ConfigError(key, what);
    }
    req.run = run->parsed();

    if (M) c.M1 = c.M2 = *M;
    if (M1) c.M1 = *M1;
    if (M2) c.M2 = *M2;
    c.T = T;
    c.nu = nu;
    if (const char* env = std::getenv("FRACSTEP_OUT"); env && *env) c.out = env;
    validate_config(c);
    return req;
}

/// Entry point shared by the executable; returns the process exit code.
inline int cli_main(int argc, char** argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
    std::vector<std::string> args(argv + 1, argv + argc);
    CliRequest req;
    try {
        req = parse_command_line(args);
    } catch (const CLI::Success&) {
        out << "usage: fracstep run [--example 1|2|custom] [--alpha a,..] [--r r,..|2/alpha] [--N n,..]\n"
               "                    [--M m] [--M1 m] [--M2 m] [--T t] [--nu v] [--mode table|audit|recurrence|truncation]\n"
               "                    [--out dir] [--jobs j] [--config file] [--reaction f] [--initial sine|zero]\n";
        return 0;
    } catch (const ConfigError& e) {
        err << "fracstep: " << e.what() << '\n';
        return static_cast<int>(ExitCode::ConfigError);
    }
    try {
        const ExperimentResult res = run_experiment(req.config);
        for (const auto& f : res.files) out << req.config.out << '/' << f << '\n';
        for (const auto& line : res.log) err << line << '\n';
        return static_cast<int>(res.code);
    } catch (const ConfigError& e) {
        err << "fracstep: " << e.what() << '\n';
        return static_cast<int>(ExitCode::ConfigError);
    } catch (const std::exception& e) {
        err << "fracstep: " << e.what() << '\n';
        return static_cast<int>(ExitCode::NumericalFailure);
    }
}

}  // namespace fracstep
