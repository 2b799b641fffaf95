// Copyright Contributors to the cellrender Project
// SPDX-License-Identifier: Apache-2.0

#include "commands.hpp"
#include "config.hpp"

#include "cellrender/error.hpp"
#include "cellrender/parallel.hpp"

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>

using namespace cellrender;
using namespace cellrender::cli;

int
main(int argc, char **argv) {
    CLI::App app{"cellrender: differentiable sensor-cell point cloud renderer"};
    app.require_subcommand(1);
    app.fallthrough();

    std::string                  configPath;
    std::optional<int>           threads;
    std::optional<std::uint64_t> seed;
    std::optional<std::string>   backend;
    std::optional<int>           steps;
    std::optional<double>        lr;
    std::optional<std::string>   output;
    std::vector<std::string>     sets;
    app.add_option("--config", configPath, "JSON run config");
    app.add_option("--threads", threads, "worker cap (default: CELLRENDER_THREADS or all cores)");
    app.add_option("--seed", seed, "seed of the single run-wide generator");
    app.add_option("--backend", backend, "brute, kdtree, binning or auto");
    app.add_option("--steps", steps, "optimize.steps");
    app.add_option("--lr", lr, "optimizer.lr");
    app.add_option("--output", output, "output directory");
    app.add_option("--set", sets, "override any config field: dotted.path=value (JSON value)");

    const std::vector<std::pair<std::string, std::string>> commands = {
        {"synth", "synthesize a (cluttered, perturbed) scene"},
        {"render", "render the scene to raw and PGM images"},
        {"grad-check", "compare analytic gradients with central differences"},
        {"optimize", "fit render parameters against an image loss"},
        {"bench", "time the render backends"},
    };
    for (const auto &[name, help] : commands) {
        app.add_subcommand(name, help);
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError &e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : kConfigError;
    }
    const std::string command = app.get_subcommands().front()->get_name();

    RunConfig config;
    try {
        Json doc = configPath.empty() ? Json::object() : readConfigFile(configPath);
        if (threads) {
            doc["threads"] = *threads;
        }
        if (seed) {
            doc["seed"] = *seed;
        }
        if (backend) {
            doc["backend"] = *backend;
        }
        if (steps) {
            doc["optimize"]["steps"] = *steps;
        }
        if (lr) {
            doc["optimizer"]["lr"] = *lr;
        }
        if (output) {
            doc["output"] = *output;
        }
        for (const auto &s : sets) {
            const auto eq = s.find('=');
            if (eq == std::string::npos) {
                throw ConfigError("", "--set expects path=value, got '" + s + "'");
            }
            setPath(doc, s.substr(0, eq), s.substr(eq + 1));
        }
        config = parseConfig(doc);
    } catch (const ConfigError &e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kConfigError;
    }

    try {
        setThreadCount(config.threads);
        std::filesystem::create_directories(config.output);
        const std::string resolved = toJson(config).dump(2);
        std::ofstream(std::filesystem::path(config.output) / "resolved_config.json") << resolved << "\n";
        std::cout << resolved << "\n";

        if (command == "synth") {
            return runSynth(config, std::cout);
        }
        if (command == "render") {
            return runRender(config, std::cout);
        }
        if (command == "grad-check") {
            return runGradCheck(config, std::cout);
        }
        if (command == "optimize") {
            return runOptimize(config, std::cout);
        }
        return runBench(config, std::cout);
    } catch (const InvalidParameter &e) {
        std::cerr << command << ": invalid parameter: " << e.what() << "\n";
        return kConfigError;
    } catch (const InvalidInput &e) {
        std::cerr << command << ": invalid input: " << e.what() << "\n";
        return kConfigError;
    } catch (const NumericalError &e) {
        std::cerr << command << ": numerical failure: " << e.what() << "\n";
        return kNumericalError;
    } catch (const DomainError &e) {
        std::cerr << command << ": domain error: " << e.what() << "\n";
        return kNumericalError;
    } catch (const std::exception &e) {
        std::cerr << command << ": " << e.what() << "\n";
        return kUnexpected;
    }
}
