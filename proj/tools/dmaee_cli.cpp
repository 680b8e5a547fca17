// SPDX-License-Identifier: Apache-2.0
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
// http://www.apache.org/licenses/LICENSE-2.0
// ------------------------------------------------------------------------

// Experiment runner. Exit codes: 0 success, 1 configuration error,
// 2 when some scenarios failed (their records carry converged = 0).

#include <dmaee/harness.hpp>

#include <CLI11.hpp>

#include <iostream>

namespace
{

using namespace dmaee;

struct Options
{
    std::string config;
    std::string out;
    std::size_t seeds = 0; // 0 keeps the config value
    std::size_t jobs = 1;
};

void add_common(CLI::App *cmd, Options &opt)
{
    cmd->add_option("--config", opt.config, "experiment config (JSON, schema_version 1)")->check(CLI::ExistingFile);
    cmd->add_option("--out", opt.out, "output CSV path (stdout when omitted)");
    cmd->add_option("--seeds", opt.seeds, "number of seeds, overrides the config")->check(CLI::PositiveNumber);
    cmd->add_option("--jobs", opt.jobs, "worker threads")->check(CLI::PositiveNumber);
}

harness::ExperimentConfig load(const Options &opt)
{
    harness::ExperimentConfig cfg = opt.config.empty() ? harness::ExperimentConfig{} : harness::load_config(opt.config);
    if (opt.seeds > 0)
        cfg.seeds = opt.seeds;
    return cfg;
}

int write_records(const harness::RunSummary &summary, const Options &opt)
{
    if (opt.out.empty())
        harness::emit_csv(summary.records, std::cout);
    else
        harness::emit_csv(summary.records, opt.out);
    if (summary.failed > 0)
    {
        std::cerr << summary.failed << " of " << summary.records.size() << " records failed\n";
        return 2;
    }
    return 0;
}

} // namespace

int main(int argc, char **argv)
{
    CLI::App app{"Energy-efficiency experiments for DMA-based massive MIMO uplinks"};
    app.require_subcommand(1);

    Options opt;
    auto *run = app.add_subcommand("run", "run the sweep described by the config");
    auto *vde = app.add_subcommand("validate-de", "compare the deterministic equivalent with Monte-Carlo SE");
    auto *sp = app.add_subcommand("sweep-power", "power-budget sweep (values from the config or --values)");
    auto *sm = app.add_subcommand("sweep-microstrips", "microstrip-count sweep at fixed M");
    std::vector<std::string> values;
    for (auto *cmd : {run, vde, sp, sm})
        add_common(cmd, opt);
    sp->add_option("--values", values, "budgets in dBm");
    sm->add_option("--values", values, "microstrip counts (must divide M)");

    try
    {
        app.parse(argc, argv);
    }
    catch (const CLI::ParseError &e)
    {
        return app.exit(e) == 0 ? 0 : 1;
    }

    try
    {
        harness::ExperimentConfig cfg;
        try
        {
            cfg = load(opt);
            if (sp->parsed() || sm->parsed())
            {
                cfg.axis = sp->parsed() ? harness::SweepAxis::power_budget : harness::SweepAxis::microstrip_counts;
                if (!values.empty())
                    cfg.sweep_values = values;
                else if (sp->parsed() && cfg.sweep_values.empty())
                    cfg.sweep_values = {"-10", "0", "10", "20", "30", "40"};
                else if (sm->parsed() && cfg.sweep_values.empty())
                    for (std::size_t k = 1; k <= cfg.dims.total_elements(); k *= 2)
                        if (cfg.dims.total_elements() % k == 0)
                            cfg.sweep_values.push_back(std::to_string(k));
            }
            harness::validate(cfg);
        }
        catch (const ValidationError &e)
        {
            std::cerr << "config error: " << e.what() << '\n';
            return 1;
        }

        if (vde->parsed())
        {
            const auto rep = harness::validate_de(cfg, opt.jobs);
            if (opt.out.empty())
                harness::emit_de_report(rep, std::cout);
            else
            {
                std::ofstream out(opt.out, std::ios::binary);
                if (!out)
                    throw std::runtime_error("cannot open '" + opt.out + "' for writing");
                harness::emit_de_report(rep, out);
            }
            std::cerr << "max relative gap " << rep.max_gap << (rep.insufficient_trials ? " (insufficient trials)" : "")
                      << '\n';
            return 0;
        }
        return write_records(harness::run(cfg, opt.jobs), opt);
    }
    catch (const std::exception &e)
    {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    }
}
