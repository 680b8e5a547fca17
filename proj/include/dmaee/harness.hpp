// SPDX-License-Identifier: Apache-2.0
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
// http://www.apache.org/licenses/LICENSE-2.0
// ------------------------------------------------------------------------

#ifndef DMAEE_HARNESS_HPP
#define DMAEE_HARNESS_HPP

#include "channel.hpp"
#include "common.hpp"
#include "dma.hpp"
#include "instantaneous.hpp"
#include "metrics.hpp"
#include "parallel.hpp"
#include "statistical.hpp"

#include <json.hpp>

#include <chrono>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

// Experiment configuration (JSON, schema_version 1), seeded sweeps and CSV
// output. Configuration values in dBm / dB are converted to SI here and
// nowhere else.
namespace dmaee::harness
{

using json = nlohmann::json;

inline constexpr int schema_version = 1;

enum class CsiRegime
{
    instantaneous,
    statistical,
    both
};

enum class SweepAxis
{
    none,
    power_budget,
    microstrip_counts,
    feasible_sets,
    architectures
};

struct ChannelSettings
{
    double sparsity = 0.25;
    double decay = 0.4;
    double large_scale_gain_db = -120.0;
    double attenuation_alpha = 0.0; // > 0 enables per-element waveguide loss
};

struct PowerSettings
{
    double max_transmit_dbm = 30.0;
    double noise_dbm = -96.0;
    double static_user_dbm = 20.0;
    double static_bs_dbm = 40.0;
    double rf_chain_dbm = 30.0;
    double phase_shifter_w = 0.03;
    double amplifier_efficiency = 0.3;
    double bandwidth_hz = 10e6;
};

struct SolverSettings
{
    AOConfig ao;
    DEConfig de;
    double subspace_tol = 1e-6;
};

struct ExperimentConfig
{
    std::string name = "default";
    ChannelDims dims = ChannelDims::uniform(6, 4, 8, 8);
    ChannelSettings channel;
    PowerSettings power;
    SweepAxis axis = SweepAxis::none;
    std::vector<std::string> sweep_values; // kept as text; numeric axes parse on use
    CsiRegime regime = CsiRegime::instantaneous;
    bool se_oriented = false;
    std::vector<std::string> architectures{"dma"};
    std::string feasible_set = "UC";
    std::size_t seeds = 1;
    std::uint64_t base_seed = 1;
    std::size_t trials = 1000;      // Monte-Carlo trials (validate-de, monte_carlo_eval)
    bool monte_carlo_eval = false;  // statistical SE re-evaluated by Monte Carlo
    bool record_wall_time = false;  // off keeps output byte-reproducible
    SolverSettings solver;
};

// ---------- names ----------

inline const char *to_string(CsiRegime r)
{
    switch (r)
    {
    case CsiRegime::instantaneous:
        return "instantaneous";
    case CsiRegime::statistical:
        return "statistical";
    default:
        return "both";
    }
}

inline const char *to_string(SweepAxis a)
{
    switch (a)
    {
    case SweepAxis::power_budget:
        return "power_budget";
    case SweepAxis::microstrip_counts:
        return "microstrip_counts";
    case SweepAxis::feasible_sets:
        return "feasible_sets";
    case SweepAxis::architectures:
        return "architectures";
    default:
        return "none";
    }
}

inline FeasibleSet feasible_set_from_name(const std::string &name)
{
    if (name == "UC")
        return Unconstrained{};
    if (name == "AO")
        return AmplitudeOnly{};
    if (name == "BA")
        return BinaryAmplitude{};
    if (name == "LP")
        return LorentzianPhase{};
    throw ValidationError("unknown feasible set '" + name + "' (expected UC, AO, BA or LP)");
}

inline const std::set<std::string> &known_architectures()
{
    static const std::set<std::string> names{"dma", "hybrid", "fully_digital"};
    return names;
}

// ---------- SI conversion ----------

inline PowerModel power_model(const ExperimentConfig &cfg, double max_transmit_dbm)
{
    const std::size_t u = cfg.dims.num_users;
    PowerModel pm;
    pm.amplifier_inefficiency.assign(u, 1.0 / cfg.power.amplifier_efficiency);
    pm.static_user_w.assign(u, dbm_to_watts(cfg.power.static_user_dbm));
    pm.static_bs_w = dbm_to_watts(cfg.power.static_bs_dbm);
    pm.rf_chain_w = dbm_to_watts(cfg.power.rf_chain_dbm);
    pm.phase_shifter_w = cfg.power.phase_shifter_w;
    pm.max_transmit_w = dbm_to_watts(max_transmit_dbm);
    pm.noise_power_w = dbm_to_watts(cfg.power.noise_dbm);
    pm.bandwidth_hz = cfg.power.bandwidth_hz;
    return pm;
}

inline StatAOConfig stat_config(const ExperimentConfig &cfg)
{
    StatAOConfig sc;
    sc.ao = cfg.solver.ao;
    sc.solver.inner = cfg.solver.ao.inner;
    sc.solver.de = cfg.solver.de;
    sc.subspace_tol = cfg.solver.subspace_tol;
    return sc;
}

// ---------- validation ----------

inline double parse_number(const std::string &field, const std::string &text)
{
    std::size_t pos = 0;
    double v = 0.0;
    try
    {
        v = std::stod(text, &pos);
    }
    catch (const std::exception &)
    {
        throw ValidationError(field + ": '" + text + "' is not a number");
    }
    if (pos != text.size() || !std::isfinite(v))
        throw ValidationError(field + ": '" + text + "' is not a finite number");
    return v;
}

inline std::size_t parse_count(const std::string &field, const std::string &text)
{
    const double v = parse_number(field, text);
    if (v < 1.0 || v != std::floor(v))
        throw ValidationError(field + ": '" + text + "' is not a positive integer");
    return static_cast<std::size_t>(v);
}

inline void validate(const ExperimentConfig &cfg)
{
    try
    {
        cfg.dims.validate();
    }
    catch (const ValidationError &e)
    {
        throw ValidationError(std::string("dims: ") + e.what());
    }
    require(cfg.channel.sparsity > 0.0 && cfg.channel.sparsity <= 1.0, "channel.sparsity: must be in (0, 1]");
    require(cfg.channel.decay > 0.0 && std::isfinite(cfg.channel.decay), "channel.decay: must be > 0");
    require(std::isfinite(cfg.channel.large_scale_gain_db), "channel.large_scale_gain_db: must be finite");
    require(cfg.channel.attenuation_alpha >= 0.0 && std::isfinite(cfg.channel.attenuation_alpha),
            "channel.attenuation_alpha: must be >= 0");
    require(cfg.power.amplifier_efficiency > 0.0 && cfg.power.amplifier_efficiency <= 1.0,
            "power.amplifier_efficiency: must be in (0, 1]");
    require(cfg.power.phase_shifter_w >= 0.0, "power.phase_shifter_w: must be >= 0");
    require(cfg.power.bandwidth_hz > 0.0, "power.bandwidth_hz: must be > 0");
    for (double x : {cfg.power.max_transmit_dbm, cfg.power.noise_dbm, cfg.power.static_user_dbm,
                     cfg.power.static_bs_dbm, cfg.power.rf_chain_dbm})
        require(std::isfinite(x), "power: dBm values must be finite");
    require(cfg.seeds >= 1, "seeds: must be >= 1");
    require(cfg.trials >= 1, "trials: must be >= 1");
    require(!cfg.architectures.empty(), "architectures: must be nonempty");
    for (const auto &a : cfg.architectures)
        require(known_architectures().count(a) == 1,
                "architectures: unknown architecture '" + a + "' (expected dma, hybrid or fully_digital)");
    feasible_set_from_name(cfg.feasible_set);

    if (cfg.axis != SweepAxis::none)
        require(!cfg.sweep_values.empty(), "sweep.values: must be nonempty");
    const std::size_t m = cfg.dims.total_elements();
    for (const auto &v : cfg.sweep_values)
    {
        switch (cfg.axis)
        {
        case SweepAxis::power_budget:
            parse_number("sweep.values", v);
            break;
        case SweepAxis::microstrip_counts: {
            const std::size_t k = parse_count("sweep.values", v);
            require(m % k == 0, "sweep.values: microstrip count " + v + " does not divide M = " + std::to_string(m));
            break;
        }
        case SweepAxis::feasible_sets:
            feasible_set_from_name(v);
            break;
        case SweepAxis::architectures:
            require(known_architectures().count(v) == 1, "sweep.values: unknown architecture '" + v + "'");
            break;
        default:
            break;
        }
    }
    try
    {
        cfg.solver.ao.validate();
        cfg.solver.de.validate();
    }
    catch (const ValidationError &e)
    {
        throw ValidationError(std::string("solver: ") + e.what());
    }
    require(cfg.solver.subspace_tol > 0.0, "solver.subspace_tol: must be > 0");
}

// ---------- JSON ----------

namespace detail
{

inline void reject_unknown(const json &obj, const std::string &where, std::initializer_list<const char *> keys)
{
    require(obj.is_object(), where + ": must be an object");
    for (const auto &[k, v] : obj.items())
    {
        bool ok = false;
        for (const char *key : keys)
            ok = ok || k == key;
        require(ok, where + ": unknown field '" + k + "'");
    }
}

template <class T>
void read(const json &obj, const char *key, const std::string &where, T &out)
{
    if (!obj.contains(key))
        return;
    try
    {
        out = obj.at(key).get<T>();
    }
    catch (const json::exception &)
    {
        throw ValidationError(where + "." + key + ": wrong type");
    }
}

inline std::string value_text(const json &v, const std::string &where)
{
    if (v.is_string())
        return v.get<std::string>();
    if (v.is_number())
    {
        std::ostringstream os;
        os.precision(17);
        os << v.get<double>();
        return os.str();
    }
    throw ValidationError(where + ": entries must be numbers or strings");
}

} // namespace detail

inline ExperimentConfig parse_config(const json &doc)
{
    using detail::read;
    detail::reject_unknown(doc, "config",
                           {"schema_version", "name", "dims", "channel", "power", "sweep", "csi_regime", "orientation",
                            "architectures", "feasible_set", "seeds", "base_seed", "trials", "monte_carlo_eval",
                            "record_wall_time", "solver"});
    require(doc.contains("schema_version"), "schema_version: required");
    int version = 0;
    read(doc, "schema_version", "config", version);
    require(version == schema_version, "schema_version: unsupported version " + std::to_string(version));

    ExperimentConfig cfg;
    read(doc, "name", "config", cfg.name);

    if (doc.contains("dims"))
    {
        const json &d = doc.at("dims");
        detail::reject_unknown(d, "dims", {"users", "antennas_per_user", "microstrips", "elements_per_strip"});
        std::size_t users = cfg.dims.num_users;
        read(d, "users", "dims", users);
        cfg.dims.num_users = users;
        cfg.dims.antennas_per_user.assign(users, 4);
        if (d.contains("antennas_per_user"))
        {
            const json &a = d.at("antennas_per_user");
            if (a.is_array())
                read(d, "antennas_per_user", "dims", cfg.dims.antennas_per_user);
            else
            {
                std::size_t n = 0;
                read(d, "antennas_per_user", "dims", n);
                cfg.dims.antennas_per_user.assign(users, n);
            }
        }
        read(d, "microstrips", "dims", cfg.dims.microstrips);
        read(d, "elements_per_strip", "dims", cfg.dims.elements_per_strip);
    }
    if (doc.contains("channel"))
    {
        const json &c = doc.at("channel");
        detail::reject_unknown(c, "channel", {"sparsity", "decay", "large_scale_gain_db", "attenuation_alpha"});
        read(c, "sparsity", "channel", cfg.channel.sparsity);
        read(c, "decay", "channel", cfg.channel.decay);
        read(c, "large_scale_gain_db", "channel", cfg.channel.large_scale_gain_db);
        read(c, "attenuation_alpha", "channel", cfg.channel.attenuation_alpha);
    }
    if (doc.contains("power"))
    {
        const json &p = doc.at("power");
        detail::reject_unknown(p, "power",
                               {"max_transmit_dbm", "noise_dbm", "static_user_dbm", "static_bs_dbm", "rf_chain_dbm",
                                "phase_shifter_w", "amplifier_efficiency", "bandwidth_hz"});
        read(p, "max_transmit_dbm", "power", cfg.power.max_transmit_dbm);
        read(p, "noise_dbm", "power", cfg.power.noise_dbm);
        read(p, "static_user_dbm", "power", cfg.power.static_user_dbm);
        read(p, "static_bs_dbm", "power", cfg.power.static_bs_dbm);
        read(p, "rf_chain_dbm", "power", cfg.power.rf_chain_dbm);
        read(p, "phase_shifter_w", "power", cfg.power.phase_shifter_w);
        read(p, "amplifier_efficiency", "power", cfg.power.amplifier_efficiency);
        read(p, "bandwidth_hz", "power", cfg.power.bandwidth_hz);
    }
    if (doc.contains("sweep"))
    {
        const json &s = doc.at("sweep");
        detail::reject_unknown(s, "sweep", {"axis", "values"});
        std::string axis = "none";
        read(s, "axis", "sweep", axis);
        if (axis == "none")
            cfg.axis = SweepAxis::none;
        else if (axis == "power_budget")
            cfg.axis = SweepAxis::power_budget;
        else if (axis == "microstrip_counts")
            cfg.axis = SweepAxis::microstrip_counts;
        else if (axis == "feasible_sets")
            cfg.axis = SweepAxis::feasible_sets;
        else if (axis == "architectures")
            cfg.axis = SweepAxis::architectures;
        else
            throw ValidationError("sweep.axis: unknown axis '" + axis + "'");
        if (s.contains("values"))
        {
            require(s.at("values").is_array(), "sweep.values: must be an array");
            for (const auto &v : s.at("values"))
                cfg.sweep_values.push_back(detail::value_text(v, "sweep.values"));
        }
    }
    if (doc.contains("csi_regime"))
    {
        std::string r;
        read(doc, "csi_regime", "config", r);
        if (r == "instantaneous")
            cfg.regime = CsiRegime::instantaneous;
        else if (r == "statistical")
            cfg.regime = CsiRegime::statistical;
        else if (r == "both")
            cfg.regime = CsiRegime::both;
        else
            throw ValidationError("csi_regime: unknown regime '" + r + "'");
    }
    if (doc.contains("orientation"))
    {
        std::string o;
        read(doc, "orientation", "config", o);
        require(o == "ee" || o == "se", "orientation: must be 'ee' or 'se'");
        cfg.se_oriented = o == "se";
    }
    read(doc, "architectures", "config", cfg.architectures);
    read(doc, "feasible_set", "config", cfg.feasible_set);
    read(doc, "seeds", "config", cfg.seeds);
    read(doc, "base_seed", "config", cfg.base_seed);
    read(doc, "trials", "config", cfg.trials);
    read(doc, "monte_carlo_eval", "config", cfg.monte_carlo_eval);
    read(doc, "record_wall_time", "config", cfg.record_wall_time);
    if (doc.contains("solver"))
    {
        const json &s = doc.at("solver");
        detail::reject_unknown(s, "solver",
                               {"kkt_tol", "bisection_tol", "max_inner_iters", "dinkelbach_tol", "dinkelbach_max_iters",
                                "ao_tol", "ao_max_outer", "ao_extrapolation", "ao_se_start", "am_delta", "am_tol",
                                "am_max_iters", "de_tol", "de_max_iters", "subspace_tol"});
        auto &ao = cfg.solver.ao;
        read(s, "kkt_tol", "solver", ao.inner.kkt_tol);
        read(s, "bisection_tol", "solver", ao.inner.bisection_tol);
        read(s, "max_inner_iters", "solver", ao.inner.max_inner_iters);
        read(s, "dinkelbach_tol", "solver", ao.dinkelbach.tol);
        read(s, "dinkelbach_max_iters", "solver", ao.dinkelbach.max_iters);
        read(s, "ao_tol", "solver", ao.tol);
        read(s, "ao_max_outer", "solver", ao.max_outer);
        read(s, "ao_extrapolation", "solver", ao.extrapolation);
        read(s, "ao_se_start", "solver", ao.se_start);
        read(s, "am_delta", "solver", ao.am.delta);
        read(s, "am_tol", "solver", ao.am.tol);
        read(s, "am_max_iters", "solver", ao.am.max_iters);
        read(s, "de_tol", "solver", cfg.solver.de.tol);
        read(s, "de_max_iters", "solver", cfg.solver.de.max_iters);
        read(s, "subspace_tol", "solver", cfg.solver.subspace_tol);
    }
    validate(cfg);
    return cfg;
}

inline ExperimentConfig load_config(const std::string &path)
{
    std::ifstream in(path);
    if (!in)
        throw ValidationError("config: cannot open '" + path + "'");
    json doc;
    try
    {
        doc = json::parse(in);
    }
    catch (const json::parse_error &e)
    {
        throw ValidationError(std::string("config: malformed JSON: ") + e.what());
    }
    return parse_config(doc);
}

// ---------- records ----------

struct ResultRecord
{
    std::string scenario_id;
    std::string axis_value;
    std::string csi_regime;
    std::string architecture;
    std::string feasible_set; // "-" for conventional architectures
    double se = 0.0;          // bits/s/Hz
    double power = 0.0;       // Watts
    double ee = 0.0;          // bits/Joule
    std::size_t iterations = 0;
    bool converged = false;
    double wall_time = 0.0; // seconds; 0 unless record_wall_time
    std::uint64_t seed = 0;

    bool operator==(const ResultRecord &) const = default;
};

inline const char *csv_header()
{
    return "scenario_id,axis_value,csi_regime,architecture,feasible_set,se,power,ee,iterations,converged,wall_time,"
           "seed";
}

inline std::string format_real(double x)
{
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.9g", x);
    return buf;
}

// Value a real takes after a trip through the CSV.
inline double csv_rounded(double x) { return std::stod(format_real(x)); }

inline void emit_csv(const std::vector<ResultRecord> &records, std::ostream &out)
{
    out << csv_header() << '\n';
    for (const auto &r : records)
    {
        for (const auto *field : {&r.scenario_id, &r.axis_value, &r.csi_regime, &r.architecture, &r.feasible_set})
            require(field->find_first_of(",\n\"") == std::string::npos, "emit_csv: text fields may not contain , \" or newlines");
        out << r.scenario_id << ',' << r.axis_value << ',' << r.csi_regime << ',' << r.architecture << ','
            << r.feasible_set << ',' << format_real(r.se) << ',' << format_real(r.power) << ',' << format_real(r.ee)
            << ',' << r.iterations << ',' << (r.converged ? 1 : 0) << ',' << format_real(r.wall_time) << ','
            << r.seed << '\n';
    }
}

inline void emit_csv(const std::vector<ResultRecord> &records, const std::string &path)
{
    std::ofstream out(path, std::ios::binary);
    if (!out)
        throw std::runtime_error("emit_csv: cannot open '" + path + "' for writing");
    emit_csv(records, out);
    out.flush();
    if (!out)
        throw std::runtime_error("emit_csv: write to '" + path + "' failed");
}

inline std::vector<ResultRecord> parse_csv(std::istream &in)
{
    std::string line;
    require(static_cast<bool>(std::getline(in, line)) && line == csv_header(), "parse_csv: missing or wrong header");
    std::vector<ResultRecord> out;
    while (std::getline(in, line))
    {
        std::vector<std::string> f;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ','))
            f.push_back(cell);
        require(f.size() == 12, "parse_csv: expected 12 fields");
        ResultRecord r;
        r.scenario_id = f[0];
        r.axis_value = f[1];
        r.csi_regime = f[2];
        r.architecture = f[3];
        r.feasible_set = f[4];
        r.se = std::stod(f[5]);
        r.power = std::stod(f[6]);
        r.ee = std::stod(f[7]);
        r.iterations = std::stoull(f[8]);
        r.converged = f[9] == "1";
        r.wall_time = std::stod(f[10]);
        r.seed = std::stoull(f[11]);
        out.push_back(std::move(r));
    }
    return out;
}

// ---------- run ----------

struct ScenarioPoint
{
    std::string axis_value;
    double max_transmit_dbm = 0.0;
    std::size_t microstrips = 0;
    std::vector<std::string> architectures;
    std::vector<std::string> feasible_sets;
};

inline std::vector<ScenarioPoint> scenario_points(const ExperimentConfig &cfg)
{
    const auto base = [&] {
        ScenarioPoint p;
        p.axis_value = "-";
        p.max_transmit_dbm = cfg.power.max_transmit_dbm;
        p.microstrips = cfg.dims.microstrips;
        p.architectures = cfg.architectures;
        p.feasible_sets = {cfg.feasible_set};
        return p;
    };
    if (cfg.axis == SweepAxis::none)
        return {base()};
    std::vector<ScenarioPoint> out;
    for (const auto &v : cfg.sweep_values)
    {
        ScenarioPoint p = base();
        p.axis_value = v;
        switch (cfg.axis)
        {
        case SweepAxis::power_budget:
            p.max_transmit_dbm = parse_number("sweep.values", v);
            break;
        case SweepAxis::microstrip_counts:
            p.microstrips = parse_count("sweep.values", v);
            break;
        case SweepAxis::feasible_sets:
            p.feasible_sets = {v};
            break;
        case SweepAxis::architectures:
            p.architectures = {v};
            break;
        default:
            break;
        }
        out.push_back(std::move(p));
    }
    return out;
}

inline std::vector<CsiRegime> regimes(const ExperimentConfig &cfg)
{
    if (cfg.regime == CsiRegime::both)
        return {CsiRegime::instantaneous, CsiRegime::statistical};
    return {cfg.regime};
}

// Every (regime, architecture, set) record for one scenario point and seed.
// Any failure is confined to the records of the job that raised it.
inline std::vector<ResultRecord> run_point(const ExperimentConfig &cfg, const ScenarioPoint &pt, std::size_t index,
                                           std::uint64_t seed)
{
    const std::size_t m = cfg.dims.total_elements();
    const std::size_t k = pt.microstrips;
    const std::size_t l = m / k;
    ChannelDims dims = cfg.dims;
    dims.microstrips = k;
    dims.elements_per_strip = l;

    const PowerModel pm = power_model(cfg, pt.max_transmit_dbm);
    const PowerModel design_pm = cfg.se_oriented ? pm.se_oriented() : pm;
    const AttenuationProfile profile{cfg.channel.attenuation_alpha, cfg.channel.attenuation_alpha > 0.0};
    const rvec att = profile.gains(k, l);
    const CircuitLoad dma_load{k, 0};

    const std::string scenario_id = cfg.name + "-" + std::to_string(index);
    std::vector<ResultRecord> out;
    const auto record = [&](CsiRegime regime, const std::string &arch, const std::string &set) {
        ResultRecord r;
        r.scenario_id = scenario_id;
        r.axis_value = pt.axis_value;
        r.csi_regime = to_string(regime);
        r.architecture = arch;
        r.feasible_set = set;
        r.seed = seed;
        r.se = r.power = r.ee = std::numeric_limits<double>::quiet_NaN();
        return r;
    };
    const auto fill = [&](ResultRecord &r, const EEResult &ee, std::size_t iters, bool converged,
                          std::chrono::steady_clock::time_point t0) {
        r.se = ee.se_bits_per_s_per_hz;
        r.power = ee.power_watts;
        r.ee = ee.ee_bits_per_joule;
        r.iterations = iters;
        r.converged = converged;
        if (cfg.record_wall_time)
            r.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    };

    ChannelStats stats;
    try
    {
        stats = generate_channel_stats(dims, cfg.channel.sparsity, cfg.channel.decay, seed,
                                       db_to_linear(cfg.channel.large_scale_gain_db));
    }
    catch (const std::exception &)
    {
        for (CsiRegime regime : regimes(cfg))
            for (const auto &arch : pt.architectures)
                for (const auto &set : arch == "dma" ? pt.feasible_sets : std::vector<std::string>{"-"})
                    out.push_back(record(regime, arch, set));
        return out;
    }

    for (CsiRegime regime : regimes(cfg))
    {
        for (const auto &arch : pt.architectures)
        {
            if (arch != "dma")
            {
                ResultRecord r = record(regime, arch, "-");
                const auto t0 = std::chrono::steady_clock::now();
                try
                {
                    if (regime == CsiRegime::instantaneous)
                    {
                        const auto ch = sample_channel_realization(stats, att, seed);
                        const BaselineDesign d = arch == "hybrid" ? hybrid_design(ch, design_pm, k, cfg.solver.ao)
                                                                  : fully_digital_design(ch, design_pm, cfg.solver.ao);
                        const auto load = arch == "hybrid" ? CircuitLoad{k, k * m} : CircuitLoad{m, 0};
                        fill(r, EEResult::make(d.ee.se_bits_per_s_per_hz, total_power(d.covs, pm, load.rf_chains, load.phase_shifters),
                                               pm.bandwidth_hz),
                             d.iterations, d.converged, t0);
                    }
                    else
                    {
                        const StatAOConfig sc = stat_config(cfg);
                        const StatBaselineDesign d = arch == "hybrid"
                                                         ? hybrid_design_stat(stats, design_pm, k, sc, att)
                                                         : fully_digital_design_stat(stats, design_pm, sc, att);
                        const auto load = arch == "hybrid" ? CircuitLoad{k, k * m} : CircuitLoad{m, 0};
                        double se = d.ee.se_bits_per_s_per_hz;
                        if (cfg.monte_carlo_eval)
                            se = ergodic_se_monte_carlo(stats, d.combiner, allocations_to_covariances(d.allocs, stats),
                                                        pm.noise_power_w, cfg.trials, seed, att)
                                     .mean;
                        fill(r, EEResult::make(se, allocation_power(d.allocs, pm, load), pm.bandwidth_hz),
                             d.iterations, d.converged, t0);
                    }
                }
                catch (const std::exception &)
                {
                    r.converged = false;
                }
                out.push_back(std::move(r));
                continue;
            }

            // One subspace design is shared by every feasible set.
            const auto t0 = std::chrono::steady_clock::now();
            std::vector<ResultRecord> recs;
            for (const auto &set : pt.feasible_sets)
                recs.push_back(record(regime, arch, set));
            try
            {
                if (regime == CsiRegime::instantaneous)
                {
                    const auto ch = sample_channel_realization(stats, att, seed);
                    const SubspaceDesign sd = ao_subspace_instantaneous(ch, design_pm, k, cfg.solver.ao);
                    for (std::size_t i = 0; i < recs.size(); ++i)
                    {
                        try
                        {
                            const DmaDesign d = finalize_dma(ch, design_pm, sd, feasible_set_from_name(pt.feasible_sets[i]),
                                                             cfg.solver.ao.am);
                            const double se = d.ee.se_bits_per_s_per_hz;
                            fill(recs[i], EEResult::make(se, total_power(d.covs, pm, k), pm.bandwidth_hz),
                                 d.trace.outer_iterations, d.trace.converged, t0);
                        }
                        catch (const std::exception &)
                        {
                            recs[i].converged = false;
                        }
                    }
                }
                else
                {
                    const StatAOConfig sc = stat_config(cfg);
                    const StatSubspaceDesign sd = ao_subspace_statistical(stats, design_pm, k, sc, att);
                    for (std::size_t i = 0; i < recs.size(); ++i)
                    {
                        try
                        {
                            MonteCarloOptions mc;
                            if (cfg.monte_carlo_eval)
                                mc = MonteCarloOptions{cfg.trials, seed, 1};
                            const StatDmaDesign d = finalize_dma_stat(
                                stats, design_pm, sd, feasible_set_from_name(pt.feasible_sets[i]), sc, att, mc);
                            const double se = d.monte_carlo ? d.monte_carlo->mean : d.ee.se_bits_per_s_per_hz;
                            fill(recs[i], EEResult::make(se, allocation_power(d.allocs, pm, dma_load), pm.bandwidth_hz),
                                 d.trace.outer_iterations, d.trace.converged, t0);
                        }
                        catch (const std::exception &)
                        {
                            recs[i].converged = false;
                        }
                    }
                }
            }
            catch (const std::exception &)
            {
                for (auto &r : recs)
                    r.converged = false;
            }
            for (auto &r : recs)
                out.push_back(std::move(r));
        }
    }
    return out;
}

struct RunSummary
{
    std::vector<ResultRecord> records; // ordered by (scenario index, seed)
    std::size_t failed = 0;            // records with converged = false
};

inline RunSummary run(const ExperimentConfig &cfg, std::size_t jobs = 1)
{
    validate(cfg);
    const auto points = scenario_points(cfg);
    const std::size_t n = points.size() * cfg.seeds;
    std::vector<std::vector<ResultRecord>> slots(n);
    parallel_for(n, jobs, [&](std::size_t i) {
        const std::size_t p = i / cfg.seeds, s = i % cfg.seeds;
        slots[i] = run_point(cfg, points[p], p, cfg.base_seed + s);
    });
    RunSummary out;
    for (auto &slot : slots)
        for (auto &r : slot)
        {
            out.failed += r.converged ? 0 : 1;
            out.records.push_back(std::move(r));
        }
    return out;
}

// ---------- deterministic-equivalent validation ----------

struct DEPoint
{
    double max_transmit_dbm = 0.0;
    std::uint64_t seed = 0;
    double rate_de = 0.0;
    double mc_mean = 0.0;
    double mc_stderr = 0.0;
    double gap = 0.0; // |DE - MC| / MC; 0 when both are 0
    bool insufficient_trials = false;
};

struct DEReport
{
    std::vector<DEPoint> points;
    double max_gap = 0.0;
    bool insufficient_trials = false; // some point's Monte-Carlo error is too large to resolve a 1% gap
};

inline double relative_gap(double de, double mc)
{
    if (de == 0.0 && mc == 0.0)
        return 0.0;
    if (mc == 0.0)
        return std::numeric_limits<double>::infinity();
    return std::abs(de - mc) / std::abs(mc);
}

// DE against Monte Carlo on the statistical design at each power point.
inline DEReport validate_de(const ExperimentConfig &cfg, std::size_t jobs = 1)
{
    validate(cfg);
    std::vector<double> powers{cfg.power.max_transmit_dbm};
    if (cfg.axis == SweepAxis::power_budget)
    {
        powers.clear();
        for (const auto &v : cfg.sweep_values)
            powers.push_back(parse_number("sweep.values", v));
    }
    const std::size_t k = cfg.dims.microstrips, l = cfg.dims.elements_per_strip;
    const AttenuationProfile profile{cfg.channel.attenuation_alpha, cfg.channel.attenuation_alpha > 0.0};
    const rvec att = profile.gains(k, l);

    DEReport rep;
    rep.points.resize(powers.size() * cfg.seeds);
    parallel_for(rep.points.size(), jobs, [&](std::size_t i) {
        DEPoint &pt = rep.points[i];
        pt.max_transmit_dbm = powers[i / cfg.seeds];
        pt.seed = cfg.base_seed + i % cfg.seeds;
        const auto stats = generate_channel_stats(cfg.dims, cfg.channel.sparsity, cfg.channel.decay, pt.seed,
                                                  db_to_linear(cfg.channel.large_scale_gain_db));
        PowerModel pm = power_model(cfg, pt.max_transmit_dbm);
        if (cfg.se_oriented)
            pm = pm.se_oriented();
        const auto design = ao_subspace_statistical(stats, pm, k, stat_config(cfg), att);
        pt.rate_de = design.de.rate_de;
        const auto mc = ergodic_se_monte_carlo(stats, design.basis, allocations_to_covariances(design.allocs, stats),
                                               pm.noise_power_w, cfg.trials, pt.seed, att);
        pt.mc_mean = mc.mean;
        pt.mc_stderr = mc.stderr_;
        pt.gap = relative_gap(pt.rate_de, pt.mc_mean);
        // Three standard errors must fit inside 1% of the mean for the gap to be meaningful.
        pt.insufficient_trials = !std::isfinite(mc.stderr_) || 3.0 * mc.stderr_ > 0.01 * std::abs(mc.mean);
    });
    for (const auto &pt : rep.points)
    {
        rep.max_gap = std::max(rep.max_gap, pt.gap);
        rep.insufficient_trials = rep.insufficient_trials || pt.insufficient_trials;
    }
    return rep;
}

inline void emit_de_report(const DEReport &rep, std::ostream &out)
{
    out << "max_transmit_dbm,seed,rate_de,mc_mean,mc_stderr,gap,insufficient_trials\n";
    for (const auto &p : rep.points)
        out << format_real(p.max_transmit_dbm) << ',' << p.seed << ',' << format_real(p.rate_de) << ','
            << format_real(p.mc_mean) << ',' << format_real(p.mc_stderr) << ',' << format_real(p.gap) << ','
            << (p.insufficient_trials ? 1 : 0) << '\n';
}

} // namespace dmaee::harness

#endif
