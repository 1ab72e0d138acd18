#pragma once

#include <array>
#include <charconv>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include "spsla/analytic.hpp"
#include "spsla/experiment.hpp"

namespace spsla {

/// Shortest decimal text that parses back to exactly `v`.
inline std::string format_number(double v)
{
    std::array<char, 64> buf{};
    const auto [end, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v);
    if (ec != std::errc{}) throw std::runtime_error("number formatting failed");
    return std::string(buf.data(), end);
}

inline std::string format_number(std::int64_t v) { return std::to_string(v); }

inline double parse_number(std::string_view text)
{
    double v = 0.0;
    const auto [end, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
    if (ec != std::errc{} || end != text.data() + text.size()) {
        throw ConfigError("not a number: '" + std::string(text) + "'");
    }
    return v;
}

/// One line of summary.csv or series.csv.
struct OutputRow {
    Scheduler scheduler = Scheduler::Sps;
    double cbr = 0.0;
    int num_ues = 0;
    double prob_keep = 0.0;
    double churn = 0.0;
    int rc_la = 1;
    /// Seed of a single run; empty for a row aggregated over runs.
    std::optional<std::uint64_t> seed;
    int t_seconds = 0;
    double collision_prob = 0.0;
    /// 95% CI half-width; only aggregated rows carry one.
    std::optional<double> ci95;
};

inline constexpr std::string_view kOutputHeader =
    "scheduler,cbr,num_ues,prob_keep,churn,rc_la,seed,t_seconds,collision_prob,ci95";

inline std::string to_csv(const OutputRow& r)
{
    std::string s = to_string(r.scheduler);
    s += ',' + format_number(r.cbr);
    s += ',' + std::to_string(r.num_ues);
    s += ',' + format_number(r.prob_keep);
    s += ',' + format_number(r.churn);
    s += ',' + std::to_string(r.rc_la);
    s += ',' + (r.seed ? std::to_string(*r.seed) : std::string("agg"));
    s += ',' + std::to_string(r.t_seconds);
    s += ',' + format_number(r.collision_prob);
    s += ',' + (r.ci95 ? format_number(*r.ci95) : std::string());
    return s;
}

inline std::vector<std::string> split_csv_line(std::string_view line)
{
    std::vector<std::string> out;
    std::size_t start = 0;
    for (;;) {
        const auto comma = line.find(',', start);
        out.emplace_back(line.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start));
        if (comma == std::string_view::npos) break;
        start = comma + 1;
    }
    return out;
}

inline OutputRow parse_output_row(std::string_view line)
{
    const auto f = split_csv_line(line);
    if (f.size() != 10) throw ConfigError("expected 10 columns, got " + std::to_string(f.size()));
    OutputRow r;
    if (f[0] == "sps") {
        r.scheduler = Scheduler::Sps;
    } else if (f[0] == "spsla") {
        r.scheduler = Scheduler::SpsLa;
    } else {
        throw ConfigError("unknown scheduler '" + f[0] + "'");
    }
    r.cbr = parse_number(f[1]);
    r.num_ues = static_cast<int>(parse_number(f[2]));
    r.prob_keep = parse_number(f[3]);
    r.churn = parse_number(f[4]);
    r.rc_la = static_cast<int>(parse_number(f[5]));
    if (f[6] != "agg") r.seed = std::stoull(f[6]);
    r.t_seconds = static_cast<int>(parse_number(f[7]));
    r.collision_prob = parse_number(f[8]);
    if (!f[9].empty()) r.ci95 = parse_number(f[9]);
    return r;
}

inline OutputRow base_row(const ScenarioConfig& c)
{
    OutputRow r;
    r.scheduler = c.scheduler;
    r.cbr = c.cbr();
    r.num_ues = c.num_ues;
    r.prob_keep = c.prob_keep;
    r.churn = c.churn;
    r.rc_la = c.rc_la;
    return r;
}

/// The aggregated end-of-run row for one configuration point.
inline OutputRow summary_row(const ScenarioConfig& c, std::span<const RunMetrics> runs)
{
    const auto a = aggregate_runs(runs);
    OutputRow r = base_row(c);
    r.t_seconds = c.duration_s;
    r.collision_prob = a.mean;
    r.ci95 = a.ci95_halfwidth;
    return r;
}

/// Per-seed rows followed by aggregated rows, one per sampled second.
inline std::vector<OutputRow> series_rows(const ScenarioConfig& c, std::span<const RunMetrics> runs,
                                          bool include_seeds = true)
{
    std::vector<OutputRow> out;
    if (include_seeds) {
        for (const auto& run : runs) {
            for (const auto& pt : run.series) {
                OutputRow r = base_row(c);
                r.seed = run.seed;
                r.t_seconds = pt.t_seconds;
                r.collision_prob = pt.collision_probability;
                out.push_back(r);
            }
        }
    }
    if (runs.empty()) return out;
    for (std::size_t i = 0; i < runs.front().series.size(); ++i) {
        std::vector<double> v;
        for (const auto& run : runs) v.push_back(run.series.at(i).collision_probability);
        const auto a = aggregate_runs(std::span<const double>(v));
        OutputRow r = base_row(c);
        r.t_seconds = runs.front().series[i].t_seconds;
        r.collision_prob = a.mean;
        r.ci95 = a.ci95_halfwidth;
        out.push_back(r);
    }
    return out;
}

inline std::string render_rows(std::span<const OutputRow> rows)
{
    std::string s(kOutputHeader);
    s += '\n';
    for (const auto& r : rows) s += to_csv(r) + '\n';
    return s;
}

struct AnalyticRow {
    double cbr = 0.0;
    double p_col_sps = 0.0;
    double p_col_spsla = 0.0;
};

inline std::vector<AnalyticRow> analytic_rows(std::span<const double> cbrs, AnalyticParams base = {})
{
    std::vector<AnalyticRow> out;
    for (double c : cbrs) {
        base.cbr = c;
        out.push_back({c, p_col_sps(base), p_col_spsla(base)});
    }
    return out;
}

inline std::string render_analytic(std::span<const AnalyticRow> rows)
{
    std::string s = "cbr,p_col_sps,p_col_spsla\n";
    for (const auto& r : rows) {
        s += format_number(r.cbr) + ',' + format_number(r.p_col_sps) + ',' + format_number(r.p_col_spsla) + '\n';
    }
    return s;
}

inline std::string render_bits(int max_subchannels)
{
    std::string s = "n_subch,bits_no_offset,bits_with_offset\n";
    for (int n = 1; n <= max_subchannels; ++n) {
        s += std::to_string(n) + ',' + std::to_string(sci_extra_bits(n, false)) + ',' +
             std::to_string(sci_extra_bits(n, true)) + '\n';
    }
    return s;
}

/// Writes `content` to `dir/name`, creating `dir` when needed.
inline std::filesystem::path write_text(const std::filesystem::path& dir, const std::string& name,
                                        const std::string& content)
{
    std::filesystem::create_directories(dir);
    const auto path = dir / name;
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw std::runtime_error("cannot open " + path.string() + " for writing");
    f << content;
    if (!f) throw std::runtime_error("failed writing " + path.string());
    return path;
}

}  // namespace spsla
