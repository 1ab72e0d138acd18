#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <CLI11.hpp>

#include "spsla/analytic.hpp"
#include "spsla/experiment.hpp"
#include "spsla/io.hpp"

namespace spsla::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitCapacity = 3;

inline std::vector<std::string> split(std::string_view s, char sep)
{
    std::vector<std::string> out;
    std::size_t start = 0;
    for (;;) {
        const auto at = s.find(sep, start);
        auto piece = s.substr(start, at == std::string_view::npos ? std::string_view::npos : at - start);
        while (!piece.empty() && piece.front() == ' ') piece.remove_prefix(1);
        while (!piece.empty() && piece.back() == ' ') piece.remove_suffix(1);
        out.emplace_back(piece);
        if (at == std::string_view::npos) break;
        start = at + 1;
    }
    return out;
}

/// Arithmetic grid from "lo:hi:step", both ends included.
inline std::vector<double> parse_grid(std::string_view text)
{
    const auto parts = split(text, ':');
    if (parts.size() != 3) throw ConfigError("grid must look like lo:hi:step, got '" + std::string(text) + "'");
    const double lo = parse_number(parts[0]);
    const double hi = parse_number(parts[1]);
    const double step = parse_number(parts[2]);
    if (!(step > 0.0) || hi < lo) throw ConfigError("grid needs lo <= hi and step > 0");
    std::vector<double> out;
    const auto n = static_cast<long>(std::floor((hi - lo) / step + 1e-9));
    for (long i = 0; i <= n; ++i) out.push_back(lo + static_cast<double>(i) * step);
    return out;
}

/// Comma list of numbers; "a,b,...,z" expands with the step b - a.
inline std::vector<double> parse_points(std::string_view text)
{
    const auto parts = split(text, ',');
    std::vector<double> out;
    for (std::size_t i = 0; i < parts.size(); ++i) {
        if (parts[i] != "...") {
            out.push_back(parse_number(parts[i]));
            continue;
        }
        if (out.size() < 2 || i + 1 >= parts.size()) throw ConfigError("'...' needs two values before and one after");
        const double step = out[out.size() - 1] - out[out.size() - 2];
        const double last = parse_number(parts[i + 1]);
        if (!(step > 0.0) || last < out.back()) throw ConfigError("'...' needs an increasing progression");
        const double first = out.back();
        const auto n = static_cast<long>(std::floor((last - first) / step + 1e-9));
        for (long k = 1; k < n; ++k) out.push_back(first + static_cast<double>(k) * step);
    }
    if (out.empty()) throw ConfigError("empty point list");
    return out;
}

inline Scheduler parse_scheduler(const std::string& s)
{
    if (s == "sps") return Scheduler::Sps;
    if (s == "spsla") return Scheduler::SpsLa;
    throw ConfigError("unknown scheduler '" + s + "' (use sps, spsla or both)");
}

inline SweepAxis parse_axis(const std::string& s)
{
    if (s == "cbr") return SweepAxis::Cbr;
    if (s == "probKeep" || s == "prob-keep" || s == "probkeep") return SweepAxis::ProbKeep;
    if (s == "churn") return SweepAxis::Churn;
    throw ConfigError("unknown sweep axis '" + s + "' (use cbr, probKeep or churn)");
}

/// Everything one invocation asks for, after flags, config file and
/// environment were merged.
struct Request {
    std::string command;
    ScenarioConfig scenario;
    std::vector<Scheduler> schedulers;
    /// Offered load in percent, when given instead of a UE count.
    std::optional<double> cbr_percent;
    std::optional<int> ues;
    std::filesystem::path out_dir = "results";
    int jobs = 1;
    SweepAxis axis = SweepAxis::Cbr;
    std::vector<double> points;
    std::vector<double> cbr_grid;
    int bits_max = 100;
    std::vector<int> figures;
    /// Non-empty when only help was requested.
    std::string help;
};

namespace detail {

struct RawOptions {
    std::string scheduler;
    std::optional<double> cbr;
    std::optional<int> ues;
    int duration = 100;
    std::optional<std::uint64_t> seed;
    int runs = 10;
    double prob_keep = 0.0;
    double churn = 0.0;
    int rc_la = 1;
    int subchannels = 25;
    int rri = 100;
    int warmup = 0;
    std::string projection = "recent";
    std::string claims = "first";
    std::string placement = "distinct";
    std::string out = "results";
    int jobs = 1;
    std::string axis = "cbr";
    std::string points;
    std::string cbr_grid = "0.1:0.9:0.1";
    int bits_max = 100;
    std::string figures = "5,6,7,8,9,10,11";
};

inline void add_options(CLI::App& app, RawOptions& o)
{
    app.add_option("--scheduler", o.scheduler, "sps, spsla or both");
    auto* cbr = app.add_option("--cbr", o.cbr, "Offered load in percent; sets the UE count");
    auto* ues = app.add_option("--ues", o.ues, "Number of UEs");
    cbr->excludes(ues);
    app.add_option("--duration", o.duration, "Simulated seconds per run");
    app.add_option("--seed", o.seed, "Base seed (falls back to SPS_SIM_SEED)");
    app.add_option("--runs", o.runs, "Independent runs per point");
    app.add_option("--prob-keep", o.prob_keep, "probResourceKeep");
    app.add_option("--churn", o.churn, "Fraction of UEs replaced per second");
    app.add_option("--rc-la", o.rc_la, "RC value at which SPS/LA plans ahead");
    app.add_option("--subchannels", o.subchannels, "Subchannels per subframe");
    app.add_option("--rri", o.rri, "Resource reservation interval in ms");
    app.add_option("--warmup", o.warmup, "Seconds excluded from the metrics");
    app.add_option("--projection", o.projection, "Sensing projection: recent or all");
    app.add_option("--claims", o.claims, "Lookahead claim scope: first, forward or streak");
    app.add_option("--placement", o.placement, "Start-up placement: distinct or independent");
    app.add_option("--out", o.out, "Output directory");
    app.add_option("--jobs", o.jobs, "Worker threads");
    app.add_option("--axis", o.axis, "Sweep axis: cbr, probKeep or churn");
    app.add_option("--points", o.points, "Sweep points (percent for cbr), e.g. 10,20,...,90");
    app.add_option("--cbr-grid", o.cbr_grid, "Analytic CBR grid lo:hi:step (fractions)");
    app.add_option("--bits-max", o.bits_max, "Largest subchannel count in the bit-cost table");
    app.add_option("--figures", o.figures, "Figure datasets to emit, e.g. 5,6,7");
}

inline Projection parse_projection(const std::string& s)
{
    if (s == "recent") return Projection::MostRecent;
    if (s == "all") return Projection::AllObservations;
    throw ConfigError("unknown projection '" + s + "' (use recent or all)");
}

inline ClaimScope parse_claims(const std::string& s)
{
    if (s == "first") return ClaimScope::FirstPacket;
    if (s == "forward") return ClaimScope::Forward;
    if (s == "streak") return ClaimScope::Streak;
    throw ConfigError("unknown claim scope '" + s + "' (use first, forward or streak)");
}

inline InitialPlacement parse_placement(const std::string& s)
{
    if (s == "distinct") return InitialPlacement::Distinct;
    if (s == "independent") return InitialPlacement::Independent;
    throw ConfigError("unknown placement '" + s + "' (use distinct or independent)");
}

}  // namespace detail

/// Parses `argv`. A `--config FILE` of `key = value` lines may set any long
/// flag by name; flags on the command line win. Throws ConfigError.
inline Request parse(int argc, const char* const* argv, const char* env_seed = std::getenv("SPS_SIM_SEED"))
{
    CLI::App app{"C-V2X sidelink SPS and SPS/LA scheduling simulator", "sps-sim"};
    app.set_config("--config", "", "key = value file providing defaults for any flag");
    app.allow_config_extras(CLI::config_extras_mode::error);
    detail::RawOptions o;
    detail::add_options(app, o);
    const std::vector<std::pair<std::string, std::string>> commands = {
        {"run", "Simulate one configuration over --runs seeds"},
        {"sweep", "Simulate a parameter sweep along --axis"},
        {"analytic", "Closed-form collision probabilities and SCI bit cost"},
        {"tables", "Light- and heavy-load summary tables for both schedulers"},
        {"figdata", "CSV datasets behind the collision-probability figures"},
    };
    for (const auto& [name, desc] : commands) app.add_subcommand(name, desc)->fallthrough();
    app.require_subcommand(1);

    Request req;
    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp&) {
        req.help = app.help();
        return req;
    } catch (const CLI::CallForAllHelp&) {
        req.help = app.help("", CLI::AppFormatMode::All);
        return req;
    } catch (const CLI::ParseError& e) {
        throw ConfigError(e.what());
    }
    req.command = app.get_subcommands().front()->get_name();

    auto& s = req.scenario;
    s.duration_s = o.duration;
    s.runs = o.runs;
    s.prob_keep = o.prob_keep;
    s.churn = o.churn;
    s.rc_la = o.rc_la;
    s.num_subchannels = o.subchannels;
    s.rri = o.rri;
    s.warmup_s = o.warmup;
    s.projection = detail::parse_projection(o.projection);
    s.claims = detail::parse_claims(o.claims);
    s.placement = detail::parse_placement(o.placement);
    if (o.seed) {
        s.seed = *o.seed;
    } else if (env_seed != nullptr && *env_seed != '\0') {
        try {
            s.seed = std::stoull(env_seed);
        } catch (const std::exception&) {
            throw ConfigError(std::string("SPS_SIM_SEED is not an unsigned integer: '") + env_seed + "'");
        }
    }

    const bool single = req.command == "run";
    if (o.scheduler.empty()) {
        req.schedulers = single ? std::vector{Scheduler::Sps} : std::vector{Scheduler::Sps, Scheduler::SpsLa};
    } else if (o.scheduler == "both") {
        req.schedulers = {Scheduler::Sps, Scheduler::SpsLa};
    } else {
        req.schedulers = {parse_scheduler(o.scheduler)};
    }
    s.scheduler = req.schedulers.front();

    req.cbr_percent = o.cbr;
    req.ues = o.ues;
    if (o.cbr) {
        if (!(*o.cbr >= 0.0 && *o.cbr <= 100.0)) throw ConfigError("--cbr is a percentage in [0, 100]");
        s.num_ues = ues_for_cbr(*o.cbr / 100.0, s.num_subchannels, s.rri);
    } else if (o.ues) {
        s.num_ues = *o.ues;
    }
    if (req.command == "run" && !o.cbr && !o.ues) throw ConfigError("run needs --cbr or --ues");

    req.out_dir = o.out;
    if (o.jobs < 1) throw ConfigError("--jobs must be >= 1");
    req.jobs = o.jobs;
    req.axis = parse_axis(o.axis);
    if (req.command == "sweep") {
        if (o.points.empty()) throw ConfigError("sweep needs --points");
        req.points = parse_points(o.points);
        if (req.axis == SweepAxis::Cbr) {
            for (auto& p : req.points) p /= 100.0;
        } else if (!o.cbr && !o.ues) {
            throw ConfigError("a probKeep or churn sweep needs --cbr or --ues for the load");
        }
    }
    req.cbr_grid = parse_grid(o.cbr_grid);
    req.bits_max = o.bits_max;
    if (req.bits_max < 1) throw ConfigError("--bits-max must be >= 1");
    for (double f : parse_points(o.figures)) {
        const int id = static_cast<int>(f);
        if (id != f || id < 5 || id > 11) throw ConfigError("figure ids run from 5 to 11");
        req.figures.push_back(id);
    }
    if (req.command != "analytic") {
        ScenarioConfig probe = s;
        probe.num_ues = 0;
        probe.validate();
        if (req.command != "sweep" || req.axis != SweepAxis::Cbr) s.validate();
    }
    return req;
}

namespace detail {

struct PointResult {
    ScenarioConfig config;
    std::vector<RunMetrics> runs;
};

inline PointResult simulate(const ScenarioConfig& c, int jobs)
{
    return {c, run_replicas(c, jobs)};
}

inline std::string describe(const ScenarioConfig& c, const Aggregate& a)
{
    std::ostringstream os;
    os << to_string(c.scheduler) << " cbr=" << format_number(c.cbr()) << " ues=" << c.num_ues
       << " prob_keep=" << format_number(c.prob_keep) << " churn=" << format_number(c.churn)
       << " runs=" << a.n << " collision_prob=" << format_number(a.mean)
       << " ci95=" << format_number(a.ci95_halfwidth);
    return os.str();
}

inline void write_points(const Request& req, const std::vector<PointResult>& results, std::ostream& out,
                         std::ostream& err)
{
    std::vector<OutputRow> summary;
    std::vector<OutputRow> series;
    for (const auto& r : results) {
        const auto a = aggregate_runs(std::span<const RunMetrics>(r.runs));
        if (!a.warning.empty()) err << "warning: " << a.warning << '\n';
        out << describe(r.config, a) << '\n';
        summary.push_back(summary_row(r.config, r.runs));
        const auto rows = series_rows(r.config, r.runs);
        series.insert(series.end(), rows.begin(), rows.end());
    }
    write_text(req.out_dir, "summary.csv", render_rows(summary));
    write_text(req.out_dir, "series.csv", render_rows(series));
}

inline std::vector<PointResult> grid(const Request& req, SweepAxis axis, std::span<const double> values,
                                     const ScenarioConfig& base, std::span<const Scheduler> schedulers)
{
    std::vector<PointResult> out;
    for (const Scheduler sch : schedulers) {
        for (const double v : values) {
            ScenarioConfig c = base;
            c.scheduler = sch;
            out.push_back(simulate(sweep_config(axis, v, c), req.jobs));
        }
    }
    return out;
}

inline std::string render_table(std::string_view title, const std::vector<PointResult>& sps,
                                const std::vector<PointResult>& la)
{
    std::ostringstream os;
    os << title << '\n' << "cbr,mean_sps,ci_sps,mean_spsla,ci_spsla\n";
    for (std::size_t i = 0; i < sps.size(); ++i) {
        const auto a = aggregate_runs(std::span<const RunMetrics>(sps[i].runs));
        const auto b = aggregate_runs(std::span<const RunMetrics>(la[i].runs));
        os << format_number(sps[i].config.cbr()) << ',' << format_number(a.mean) << ','
           << format_number(2 * a.ci95_halfwidth) << ',' << format_number(b.mean) << ','
           << format_number(2 * b.ci95_halfwidth) << '\n';
    }
    return os.str();
}

inline std::vector<double> percent_range(int lo, int hi, int step)
{
    std::vector<double> v;
    for (int p = lo; p <= hi; p += step) v.push_back(p / 100.0);
    return v;
}

inline std::string figure_rows(const Request& req, SweepAxis axis, std::span<const double> values,
                               const ScenarioConfig& base, bool series)
{
    const std::array<Scheduler, 2> both{Scheduler::Sps, Scheduler::SpsLa};
    std::vector<OutputRow> rows;
    for (const auto& r : grid(req, axis, values, base, both)) {
        if (series) {
            const auto s = series_rows(r.config, r.runs, false);
            rows.insert(rows.end(), s.begin(), s.end());
        } else {
            rows.push_back(summary_row(r.config, r.runs));
        }
    }
    return render_rows(rows);
}

inline void figdata(const Request& req, std::ostream& out)
{
    const auto light = percent_range(1, 5, 1);
    const auto heavy = percent_range(10, 90, 10);
    for (const int id : req.figures) {
        std::string csv;
        switch (id) {
            case 5: csv = render_bits(req.bits_max); break;
            case 6: csv = render_analytic(analytic_rows(req.cbr_grid)); break;
            case 7: csv = figure_rows(req, SweepAxis::Cbr, light, req.scenario, true); break;
            case 8: csv = figure_rows(req, SweepAxis::Cbr, heavy, req.scenario, true); break;
            case 9:
            case 10: {
                std::vector<OutputRow> rows;
                for (const double keep : {0.2, 0.4, 0.6, 0.8}) {
                    ScenarioConfig c = req.scenario;
                    c.prob_keep = keep;
                    const auto part = figure_rows(req, SweepAxis::Cbr, id == 9 ? light : heavy, c, false);
                    std::istringstream lines(part);
                    std::string line;
                    std::getline(lines, line);
                    while (std::getline(lines, line)) rows.push_back(parse_output_row(line));
                }
                csv = render_rows(rows);
                break;
            }
            case 11: {
                std::vector<OutputRow> rows;
                for (const double lambda : {0.01, 0.05, 0.1, 0.2}) {
                    ScenarioConfig c = req.scenario;
                    c.churn = lambda;
                    const auto part = figure_rows(req, SweepAxis::Cbr, heavy, c, false);
                    std::istringstream lines(part);
                    std::string line;
                    std::getline(lines, line);
                    while (std::getline(lines, line)) rows.push_back(parse_output_row(line));
                }
                csv = render_rows(rows);
                break;
            }
            default: break;
        }
        const auto path = write_text(req.out_dir, "fig" + std::to_string(id) + ".csv", csv);
        out << "wrote " << path.string() << '\n';
    }
}

}  // namespace detail

/// Executes a parsed request, writing CSV files under `out_dir`.
inline void execute(const Request& req, std::ostream& out, std::ostream& err)
{
    double keep = req.scenario.prob_keep;
    if (req.command == "sweep" && req.axis == SweepAxis::ProbKeep) {
        for (const double k : req.points) keep = std::max(keep, k);
    }
    if (keep > 0.8) err << "warning: probKeep " << keep << " is above the configured range [0, 0.8]\n";
    if (req.command == "run") {
        std::vector<detail::PointResult> results;
        for (const Scheduler sch : req.schedulers) {
            ScenarioConfig c = req.scenario;
            c.scheduler = sch;
            results.push_back(detail::simulate(c, req.jobs));
        }
        detail::write_points(req, results, out, err);
    } else if (req.command == "sweep") {
        detail::write_points(req, detail::grid(req, req.axis, req.points, req.scenario, req.schedulers), out, err);
    } else if (req.command == "analytic") {
        const auto rows = analytic_rows(req.cbr_grid);
        write_text(req.out_dir, "analytic.csv", render_analytic(rows));
        write_text(req.out_dir, "bits.csv", render_bits(req.bits_max));
        out << render_analytic(rows);
    } else if (req.command == "tables") {
        const std::array<Scheduler, 1> sps{Scheduler::Sps};
        const std::array<Scheduler, 1> la{Scheduler::SpsLa};
        const auto light = detail::percent_range(1, 5, 1);
        const auto heavy = detail::percent_range(10, 90, 10);
        const auto l_sps = detail::grid(req, SweepAxis::Cbr, light, req.scenario, sps);
        const auto l_la = detail::grid(req, SweepAxis::Cbr, light, req.scenario, la);
        const auto h_sps = detail::grid(req, SweepAxis::Cbr, heavy, req.scenario, sps);
        const auto h_la = detail::grid(req, SweepAxis::Cbr, heavy, req.scenario, la);
        std::vector<OutputRow> rows;
        for (const auto* set : {&l_sps, &l_la, &h_sps, &h_la}) {
            for (const auto& r : *set) rows.push_back(summary_row(r.config, r.runs));
        }
        write_text(req.out_dir, "summary.csv", render_rows(rows));
        out << detail::render_table("light load (CI columns are full widths)", l_sps, l_la) << '\n'
            << detail::render_table("heavy load (CI columns are full widths)", h_sps, h_la);
    } else if (req.command == "figdata") {
        detail::figdata(req, out);
    }
}

/// Whole command-line tool; returns the process exit code.
inline int main(int argc, const char* const* argv, std::ostream& out, std::ostream& err)
{
    try {
        const auto req = parse(argc, argv);
        if (!req.help.empty()) {
            out << req.help;
            return kExitOk;
        }
        execute(req, out, err);
        return kExitOk;
    } catch (const CapacityError& e) {
        err << "error: " << e.what() << '\n';
        return kExitCapacity;
    } catch (const ConfigError& e) {
        err << "error: " << e.what() << '\n';
        return kExitConfig;
    }
}

}  // namespace spsla::cli
