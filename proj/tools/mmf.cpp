// mmf: simulate | fit | summarize | diagnose
//
// Exit codes: 0 success, 1 validation error (bad config, inputs or flags),
// 2 runtime failure.

#include <cstdint>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "mmf/commands.hpp"
#include "mmf/config.hpp"
#include "mmf/error.hpp"

namespace {

struct Overrides {
    std::string config;
    std::optional<std::string> out;
    std::optional<std::uint64_t> seed;
    std::optional<int> chains, iters, burnin, thin;
};

mmf::RunConfig resolve(const Overrides& o) {
    mmf::RunConfig cfg = mmf::load_config(o.config);
    if (o.out) cfg.out = *o.out;
    if (o.seed) cfg.sampler.seed = cfg.scenario.seed = *o.seed;
    if (o.chains) cfg.sampler.n_chains = *o.chains;
    if (o.iters) cfg.sampler.iterations = *o.iters;
    if (o.burnin) cfg.sampler.burn_in = *o.burnin;
    if (o.thin) cfg.sampler.thin = *o.thin;
    return cfg;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Microbiome mixed-membership factorization"};
    app.require_subcommand(1, 1);
    Overrides o;
    for (const char* name : {"simulate", "fit", "summarize", "diagnose"}) {
        auto* sub = app.add_subcommand(name);
        sub->add_option("--config", o.config, "key = value configuration file")->required();
        sub->add_option("--out", o.out, "output directory");
        sub->add_option("--seed", o.seed, "base seed");
        sub->add_option("--chains", o.chains, "number of chains");
        sub->add_option("--iters", o.iters, "iterations per chain");
        sub->add_option("--burnin", o.burnin, "burn-in iterations");
        sub->add_option("--thin", o.thin, "snapshot thinning");
    }
    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 1;
    }

    const std::string command = app.get_subcommands().front()->get_name();
    try {
        const mmf::RunConfig cfg = resolve(o);
        if (command == "simulate") mmf::cmd_simulate(cfg);
        else if (command == "fit") mmf::cmd_fit(cfg);
        else if (command == "summarize") mmf::cmd_summarize(cfg);
        else mmf::cmd_diagnose(cfg);
    } catch (const mmf::ValidationError& e) {
        std::cerr << "mmf " << command << ": error: " << e.what() << '\n';
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "mmf " << command << ": runtime error: " << e.what() << '\n';
        return 2;
    }
    return 0;
}
