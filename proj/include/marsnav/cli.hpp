#ifndef MARSNAV_CLI_HPP
#define MARSNAV_CLI_HPP

// Command-line front end: gen-atmos, fit-exp, train, simulate, montecarlo,
// report. Exit codes: 0 success, 1 runtime failure, 2 usage/config error.

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "marsnav/atmos.hpp"
#include "marsnav/config.hpp"
#include "marsnav/error.hpp"
#include "marsnav/mc.hpp"
#include "marsnav/net.hpp"
#include "marsnav/train.hpp"

namespace marsnav::cli {

namespace fs = std::filesystem;

/// Missing inputs or bad arguments detected after parsing (exit code 2).
class UsageError : public Error {
public:
    using Error::Error;
};

struct Options {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::optional<int> runs;
    std::optional<int> count;
    std::optional<int> threads;
    std::string filters;
    std::string out;
};

class Context {
public:
    Context(const Options& o, std::ostream& out, std::ostream& err) : opt(o), out_(out), err_(err) {
        cfg = o.config.empty() ? parse_config("{\"version\": 1}") : load_config(o.config);
        if (!o.filters.empty()) {
            std::vector<std::string> names;
            std::stringstream ss(o.filters);
            for (std::string item; std::getline(ss, item, ',');)
                if (!item.empty()) names.push_back(item);
            cfg.mc.enabled = parse_filter_list(names);
        }
        if (o.runs) cfg.mc.n_runs = *o.runs;
        if (o.threads) cfg.mc.threads = *o.threads;
        if (o.count) cfg.atmosphere_count = *o.count;
        cfg.validate();
    }

    void info(const std::string& s) const {
        if (cfg.log_level != "quiet") err_ << s << '\n';
    }
    std::ostream& out() { return out_; }

    const Options& opt;
    RunConfig cfg;

private:
    std::ostream& out_;
    std::ostream& err_;
};

inline void write_text(const fs::path& p, const std::string& text) {
    if (p.has_parent_path()) fs::create_directories(p.parent_path());
    std::ofstream f(p, std::ios::binary);
    if (!f) throw IoError("cannot write " + p.string());
    f << text;
    if (!f) throw IoError("write failed: " + p.string());
}

inline std::string read_text(const fs::path& p) {
    std::ifstream f(p, std::ios::binary);
    if (!f) throw IoError("cannot read " + p.string());
    std::stringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

inline std::string profile_name(std::uint64_t seed, int index) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "atmos_%04llu_%03d.csv", static_cast<unsigned long long>(seed), index);
    return buf;
}

/// Training profiles: every atmos_*.csv in the directory, in name order.
inline std::vector<TabulatedProfile> load_profiles(const fs::path& dir) {
    if (!fs::is_directory(dir)) throw UsageError("atmosphere directory not found: " + dir.string());
    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(dir)) {
        const std::string n = e.path().filename().string();
        if (e.is_regular_file() && n.rfind("atmos_", 0) == 0 && e.path().extension() == ".csv")
            files.push_back(e.path());
    }
    if (files.empty()) throw UsageError("no atmos_*.csv profiles in " + dir.string());
    std::sort(files.begin(), files.end());
    std::vector<TabulatedProfile> out;
    for (const auto& f : files) out.push_back(read_profile_csv(f));
    return out;
}

inline nlohmann::ordered_json exp_json(const ExpModel& m, std::size_t n_profiles) {
    nlohmann::ordered_json j;
    j["rho0_kgm3"] = m.rho0;
    j["r0_m"] = m.r0;
    j["hs_m"] = m.hs;
    j["n_profiles"] = n_profiles;
    return j;
}

inline ExpModel fit_from_dir(const Context& ctx, std::size_t* n = nullptr) {
    const auto profiles = load_profiles(ctx.cfg.paths.atmosphere_dir);
    if (n) *n = profiles.size();
    return fit_exponential(profiles, ctx.cfg.mc.atmosphere.r0);
}

// ---- commands ---------------------------------------------------------------

inline int cmd_gen_atmos(Context& ctx) {
    const int n = ctx.cfg.atmosphere_count;
    const std::uint64_t seed = ctx.opt.seed.value_or(ctx.cfg.atmosphere_seed);
    const fs::path dir = ctx.opt.out.empty() ? ctx.cfg.paths.atmosphere_dir : fs::path(ctx.opt.out);
    fs::create_directories(dir);
    nlohmann::ordered_json manifest;
    manifest["version"] = 1;
    manifest["seed"] = seed;
    manifest["count"] = n;
    manifest["files"] = nlohmann::ordered_json::array();
    for (int i = 0; i < n; ++i) {
        const std::uint64_t s = derive_seed(seed, stream::kAtmosphere, static_cast<std::uint64_t>(i));
        const std::string name = profile_name(seed, i);
        write_profile_csv(sample_truth_atmosphere(s, ctx.cfg.mc.atmosphere), dir / name);
        manifest["files"].push_back({{"file", name}, {"seed", s}});
    }
    write_text(dir / "manifest.json", manifest.dump(2) + "\n");
    ctx.info("wrote " + std::to_string(n) + " profiles to " + dir.string());
    return 0;
}

inline int cmd_fit_exp(Context& ctx) {
    std::size_t n = 0;
    const ExpModel m = fit_from_dir(ctx, &n);
    const fs::path out = ctx.opt.out.empty() ? ctx.cfg.paths.output_dir / "exp_fit.json" : fs::path(ctx.opt.out);
    write_text(out, exp_json(m, n).dump(2) + "\n");
    ctx.out() << std::setprecision(6) << "rho0 = " << m.rho0 << " kg/m^3, hs = " << m.hs
              << " m, r0 = " << m.r0 << " m (" << n << " profiles)\n";
    return 0;
}

inline int cmd_train(Context& ctx) {
    std::size_t n = 0;
    const ExpModel fit = fit_from_dir(ctx, &n);
    const std::uint64_t seed = ctx.opt.seed.value_or(ctx.cfg.training_seed);
    const fs::path out = ctx.opt.out.empty() ? ctx.cfg.paths.network : fs::path(ctx.opt.out);
    const auto t0 = std::chrono::steady_clock::now();
    const TrainingResult res = offline_train(fit, ctx.cfg.training, seed);
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

    write_text(out, dump_network(res.net));
    const TrainingReport& r = res.report;
    nlohmann::ordered_json j;
    j["version"] = 1;
    j["seed"] = seed;
    j["exp_fit"] = exp_json(fit, n);
    j["epochs"] = r.epochs;
    j["n_train"] = r.n_train;
    j["n_validation"] = r.n_validation;
    j["train_loss"] = r.train_loss;
    j["validation_loss"] = r.validation_loss;
    j["validation_frac_below_1pct"] = r.validation_frac_below_1pct;
    j["validation_max_rel_error"] = r.validation_max_rel_error;
    j["histogram"] = {{"edges", r.hist_edges}, {"counts", r.hist_counts}};
    fs::path rep = out;
    rep.replace_filename(out.stem().string() + "_report.json");
    write_text(rep, j.dump(2) + "\n");
    ctx.out() << std::setprecision(6) << "validation samples below 1% error: "
              << 100.0 * r.validation_frac_below_1pct << "% (max " << 100.0 * r.validation_max_rel_error
              << "%), train loss " << r.train_loss << ", " << secs << " s\n";
    return 0;
}

inline McModels load_models(const Context& ctx) {
    McModels m;
    m.nominal = fit_from_dir(ctx);
    if (ctx.cfg.mc.enabled[static_cast<int>(FilterId::uskf_nn)]) {
        if (!fs::is_regular_file(ctx.cfg.paths.network))
            throw UsageError("network file not found: " + ctx.cfg.paths.network.string() +
                             " (run `train` first)");
        m.network = load_network(ctx.cfg.paths.network);
    }
    return m;
}

/// RMSE and density tables from a summary JSON.
inline void print_tables(const nlohmann::json& s, std::ostream& os) {
    const auto& f = s.at("filters");
    std::vector<std::string> names;
    for (const char* n : kFilterNames)
        if (f.contains(n) && f.at(n).contains("rmse")) names.push_back(n);
    os << "Time-averaged RMSE (" << s.at("n_runs").get<int>() << " runs)\n";
    os << std::left << std::setw(12) << "state";
    for (const auto& n : names) os << std::right << std::setw(14) << n;
    os << '\n';
    for (const char* k : kStateKeys) {
        os << std::left << std::setw(12) << k;
        for (const auto& n : names)
            os << std::right << std::setw(14) << std::scientific << std::setprecision(4)
               << f.at(n).at("rmse").at(k).get<double>();
        os << '\n';
    }
    os << std::left << std::setw(12) << "rho RMSPE %";
    for (const auto& n : names)
        os << std::right << std::setw(14) << std::scientific << std::setprecision(4)
           << f.at(n).at("rmspe_pct").get<double>();
    os << std::defaultfloat << '\n';
    for (const char* n : kFilterNames)
        if (f.contains(n) && f.at(n).at("runs_failed").get<int>() > 0)
            os << n << ": " << f.at(n).at("runs_failed").get<int>() << " failed runs\n";
}

inline int failed_runs(const McReport& rep) {
    int failed = 0;
    for (const auto& r : rep.runs) {
        bool bad = !r.truth_ok;
        for (const auto& t : r.filters) bad = bad || (t.enabled && !t.ok);
        failed += bad ? 1 : 0;
    }
    return failed;
}

inline int cmd_montecarlo(Context& ctx) {
    if (ctx.opt.seed) ctx.cfg.mc.seed = *ctx.opt.seed;
    const McModels models = load_models(ctx);
    const fs::path dir = ctx.opt.out.empty() ? ctx.cfg.paths.output_dir : fs::path(ctx.opt.out);
    const auto t0 = std::chrono::steady_clock::now();
    const McReport rep = run_montecarlo(ctx.cfg.mc, models);
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    fs::create_directories(dir);
    const std::string summary = summary_json(rep);
    write_text(dir / "summary.json", summary);
    write_rmse_series_csv(rep, dir / "rmse_series.csv");
    write_density_runs_csv(rep, dir / "density_runs.csv");
    print_tables(nlohmann::json::parse(summary), ctx.out());
    ctx.info("montecarlo: " + std::to_string(rep.n_runs) + " runs in " + std::to_string(secs) + " s");
    const int failed = failed_runs(rep);
    if (10 * failed > rep.n_runs) {
        ctx.info("montecarlo: " + std::to_string(failed) + " of " + std::to_string(rep.n_runs) +
                 " runs failed");
        return 1;
    }
    return 0;
}

inline int cmd_simulate(Context& ctx) {
    if (ctx.opt.seed) ctx.cfg.mc.seed = *ctx.opt.seed;
    ctx.cfg.mc.n_runs = 1;
    const McModels models = load_models(ctx);
    const fs::path dir = ctx.opt.out.empty() ? ctx.cfg.paths.output_dir : fs::path(ctx.opt.out);
    fs::create_directories(dir);
    RunResult run = run_case(ctx.cfg.mc, models, 0);
    if (!run.truth_ok) throw Error(run.error);
    write_truth_csv(run.truth, dir / "truth.csv");
    write_measurements_csv(run.measurements, dir / "measurements.csv");
    int status = 0;
    for (int f = 0; f < kNumFilters; ++f) {
        const FilterTrace& tr = run.filters[f];
        if (!tr.enabled) continue;
        write_filter_log_csv(run, tr, dir / (std::string("filter_") + kFilterNames[f] + ".csv"));
        if (!tr.ok) {
            ctx.info(std::string(kFilterNames[f]) + " failed: " + tr.error);
            status = 1;
        }
    }
    const McReport rep = summarize(ctx.cfg.mc, {std::move(run)});
    const std::string summary = summary_json(rep);
    write_text(dir / "summary.json", summary);
    print_tables(nlohmann::json::parse(summary), ctx.out());
    return status;
}

inline int cmd_report(Context& ctx) {
    const fs::path dir = ctx.opt.out.empty() ? ctx.cfg.paths.output_dir : fs::path(ctx.opt.out);
    const fs::path p = dir / "summary.json";
    if (!fs::is_regular_file(p)) throw UsageError("summary not found: " + p.string());
    nlohmann::json s;
    try {
        s = nlohmann::json::parse(read_text(p));
        print_tables(s, ctx.out());
    } catch (const nlohmann::json::exception& e) {
        throw IoError(p.string() + ": " + e.what());
    }
    return 0;
}

/// Entry point shared by the executable and the tests.
inline int run(int argc, const char* const* argv, std::ostream& out = std::cout,
               std::ostream& err = std::cerr) {
    CLI::App app{"Mars entry navigation with adaptive density models"};
    app.require_subcommand(1);
    Options opt;
    std::uint64_t seed = 0;
    int runs = 0, count = 0, threads = 0;

    auto common = [&](CLI::App* c) {
        c->add_option("--config", opt.config, "JSON configuration file")->check(CLI::ExistingFile);
        c->add_option("--out", opt.out, "output path");
        c->add_option("--seed", seed, "seed override");
    };
    auto* gen = app.add_subcommand("gen-atmos", "generate surrogate atmosphere profiles");
    common(gen);
    gen->add_option("--count", count, "number of profiles")->check(CLI::NonNegativeNumber);
    auto* fit = app.add_subcommand("fit-exp", "least-squares exponential fit of the profiles");
    common(fit);
    auto* train = app.add_subcommand("train", "train the density network offline");
    common(train);
    auto* sim = app.add_subcommand("simulate", "single run with full per-epoch logs");
    common(sim);
    sim->add_option("--filters", opt.filters, "comma-separated filters (ukf_cm,ukf_ac,uskf_nn)");
    auto* mc = app.add_subcommand("montecarlo", "Monte Carlo comparison of the filters");
    common(mc);
    mc->add_option("--runs", runs, "number of runs")->check(CLI::PositiveNumber);
    mc->add_option("--filters", opt.filters, "comma-separated filters (ukf_cm,ukf_ac,uskf_nn)");
    mc->add_option("--threads", threads, "worker threads (0 = all cores)")->check(CLI::NonNegativeNumber);
    auto* rep = app.add_subcommand("report", "print the tables of a previous montecarlo run");
    rep->add_option("--config", opt.config, "JSON configuration file")->check(CLI::ExistingFile);
    rep->add_option("--out", opt.out, "directory holding summary.json");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e, out, err);
        return rc == 0 ? 0 : 2;
    }
    CLI::App* sub = app.get_subcommands().front();
    if (sub->get_option_no_throw("--seed") && sub->count("--seed")) opt.seed = seed;
    if (sub->get_option_no_throw("--runs") && sub->count("--runs")) opt.runs = runs;
    if (sub->get_option_no_throw("--count") && sub->count("--count")) opt.count = count;
    if (sub->get_option_no_throw("--threads") && sub->count("--threads")) opt.threads = threads;

    try {
        Context ctx(opt, out, err);
        const std::string name = sub->get_name();
        if (name == "gen-atmos") return cmd_gen_atmos(ctx);
        if (name == "fit-exp") return cmd_fit_exp(ctx);
        if (name == "train") return cmd_train(ctx);
        if (name == "simulate") return cmd_simulate(ctx);
        if (name == "montecarlo") return cmd_montecarlo(ctx);
        return cmd_report(ctx);
    } catch (const ConfigError& e) {
        err << "config error: " << e.what() << '\n';
        return 2;
    } catch (const UsageError& e) {
        err << "error: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return 1;
    }
}

}  // namespace marsnav::cli

#endif  // MARSNAV_CLI_HPP
