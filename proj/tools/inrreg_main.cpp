// inrreg - command line front end.
//
//   inrreg [--config F] [--seed N] [--threads N] [--out DIR] <command> ...
//     register  <moving> <fixed>
//     evaluate  <field> <moving_mask> <fixed_mask> [--gt <field>]
//     synth                                   (--config is the synth spec)
//     snapshots <moving> <params>

#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "inrreg/commands.hpp"
#include "inrreg/parallel.hpp"

int main(int argc, char **argv){
    CLI::App app{"Coordinate-network diffeomorphic image registration"};
    app.set_version_flag("--version", inrreg::tool_version());
    app.require_subcommand(1);

    std::optional<std::string> config;
    std::optional<std::uint64_t> seed;
    int threads = 1;
    std::string out = ".";
    app.add_option("--config", config, "config file (register, snapshots) or synth spec (synth)");
    app.add_option("--seed", seed, "override the seed");
    app.add_option("--threads", threads, "worker threads")->check(CLI::PositiveNumber);
    app.add_option("--out", out, "output directory (evaluate: output file)");

    std::string moving, fixed, field, mmask, fmask, params;
    std::optional<std::string> gt;

    auto *reg = app.add_subcommand("register", "register moving onto fixed");
    reg->add_option("moving", moving)->required();
    reg->add_option("fixed", fixed)->required();

    auto *ev = app.add_subcommand("evaluate", "score a displacement field");
    ev->add_option("field", field)->required();
    ev->add_option("moving_mask", mmask)->required();
    ev->add_option("fixed_mask", fmask)->required();
    ev->add_option("--gt", gt, "ground-truth displacement");

    auto *syn = app.add_subcommand("synth", "write a synthetic phantom pair");

    auto *snap = app.add_subcommand("snapshots", "intermediate warps of a trained network");
    snap->add_option("moving", moving)->required();
    snap->add_option("params", params)->required();

    // Global flags may appear after the subcommand too.
    for(auto *sub : {reg, ev, syn, snap}){
        sub->fallthrough();
    }

    CLI11_PARSE(app, argc, argv);
    inrreg::set_thread_count(threads);

    const auto cfg_path = [&]() -> std::optional<std::filesystem::path> {
        if(config){
            return std::filesystem::path(*config);
        }
        return std::nullopt;
    };

    if(*reg){
        return inrreg::cmd_register({moving, fixed, cfg_path(), out, seed}, std::cerr);
    }
    if(*ev){
        std::optional<std::filesystem::path> g;
        if(gt){
            g = *gt;
        }
        std::filesystem::path o = out == "." ? std::filesystem::path("eval.json") : std::filesystem::path(out);
        return inrreg::cmd_evaluate({field, mmask, fmask, g, o}, std::cerr);
    }
    if(*syn){
        return inrreg::cmd_synth({cfg_path(), out, seed}, std::cerr);
    }
    if(*snap){
        return inrreg::cmd_snapshots({moving, params, cfg_path(), out}, std::cerr);
    }
    return 1;
}
