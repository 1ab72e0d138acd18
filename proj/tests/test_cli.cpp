#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "spsla/cli.hpp"

using namespace spsla;

namespace {

struct Args {
    std::vector<std::string> words;
    std::vector<const char*> argv;

    explicit Args(std::vector<std::string> w) : words(std::move(w))
    {
        argv.push_back("sps-sim");
        for (const auto& s : words) argv.push_back(s.c_str());
    }
    int argc() const { return static_cast<int>(argv.size()); }
};

cli::Request parse(std::vector<std::string> words, const char* env = nullptr)
{
    Args a(std::move(words));
    return cli::parse(a.argc(), a.argv.data(), env);
}

int run(std::vector<std::string> words, std::string* out_text = nullptr, std::string* err_text = nullptr)
{
    Args a(std::move(words));
    std::ostringstream out;
    std::ostringstream err;
    const int code = cli::main(a.argc(), a.argv.data(), out, err);
    if (out_text) *out_text = out.str();
    if (err_text) *err_text = err.str();
    return code;
}

std::string slurp(const std::filesystem::path& p)
{
    std::ifstream f(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

std::filesystem::path scratch(const std::string& name)
{
    auto dir = std::filesystem::temp_directory_path() / ("spsla_cli_" + name);
    std::filesystem::remove_all(dir);
    return dir;
}

}  // namespace

TEST(ParsePoints, ExpandsEllipsis)
{
    EXPECT_EQ(cli::parse_points("10,20,...,90"), (std::vector<double>{10, 20, 30, 40, 50, 60, 70, 80, 90}));
    EXPECT_EQ(cli::parse_points("0.2, 0.4"), (std::vector<double>{0.2, 0.4}));
    EXPECT_THROW(cli::parse_points("10,...,90"), ConfigError);
    EXPECT_THROW(cli::parse_points("a,b"), ConfigError);
}

TEST(ParseGrid, IncludesBothEnds)
{
    const auto g = cli::parse_grid("0.1:0.9:0.1");
    ASSERT_EQ(g.size(), 9u);
    EXPECT_DOUBLE_EQ(g.front(), 0.1);
    EXPECT_DOUBLE_EQ(g.back(), 0.9);
    EXPECT_THROW(cli::parse_grid("0.1:0.9"), ConfigError);
    EXPECT_THROW(cli::parse_grid("0.9:0.1:0.1"), ConfigError);
}

TEST(ParseConfig, RunWithoutLoadIsAUsageError)
{
    EXPECT_THROW(parse({"run"}), ConfigError);
    EXPECT_EQ(run({"run"}), cli::kExitConfig);
}

TEST(ParseConfig, CbrAndUesConflict)
{
    EXPECT_THROW(parse({"run", "--cbr", "10", "--ues", "250"}), ConfigError);
}

TEST(ParseConfig, DefaultsAndFlags)
{
    const auto r = parse({"run", "--cbr", "90", "--scheduler", "spsla", "--runs", "3", "--seed", "7"});
    EXPECT_EQ(r.command, "run");
    EXPECT_EQ(r.scenario.num_ues, 2250);
    EXPECT_EQ(r.scenario.scheduler, Scheduler::SpsLa);
    EXPECT_EQ(r.scenario.runs, 3);
    EXPECT_EQ(r.scenario.seed, 7u);
    EXPECT_EQ(r.scenario.duration_s, 100);
    EXPECT_EQ(r.schedulers.size(), 1u);
    EXPECT_EQ(parse({"sweep", "--points", "1,2"}).schedulers.size(), 2u);
}

TEST(ParseConfig, FlagsMayPrecedeTheSubcommand)
{
    EXPECT_EQ(parse({"--ues", "40", "run"}).scenario.num_ues, 40);
}

TEST(ParseConfig, SeedFallsBackToEnvironment)
{
    EXPECT_EQ(parse({"run", "--ues", "10"}, "123").scenario.seed, 123u);
    EXPECT_EQ(parse({"run", "--ues", "10", "--seed", "5"}, "123").scenario.seed, 5u);
    EXPECT_THROW(parse({"run", "--ues", "10"}, "abc"), ConfigError);
}

TEST(ParseConfig, SweepRequest)
{
    const auto r = parse({"sweep", "--axis", "cbr", "--points", "10,20,...,90", "--runs", "10"});
    ASSERT_EQ(r.points.size(), 9u);
    EXPECT_DOUBLE_EQ(r.points.front(), 0.1);
    EXPECT_DOUBLE_EQ(r.points.back(), 0.9);
    EXPECT_EQ(r.axis, SweepAxis::Cbr);
    EXPECT_THROW(parse({"sweep", "--axis", "probKeep", "--points", "0.2,0.4"}), ConfigError);
    EXPECT_EQ(parse({"sweep", "--axis", "probKeep", "--points", "0.2,0.4", "--cbr", "50"}).axis, SweepAxis::ProbKeep);
    EXPECT_THROW(parse({"sweep", "--axis", "speed", "--points", "1"}), ConfigError);
}

TEST(ParseConfig, ConfigFileSetsFlagsAndCommandLineWins)
{
    const auto dir = scratch("config");
    std::filesystem::create_directories(dir);
    const auto file = dir / "run.conf";
    std::ofstream(file) << "ues = 300\nruns = 4\nprob-keep = 0.4\n";
    const auto r = parse({"run", "--config", file.string(), "--runs", "2"});
    EXPECT_EQ(r.scenario.num_ues, 300);
    EXPECT_EQ(r.scenario.runs, 2);
    EXPECT_EQ(r.scenario.prob_keep, 0.4);

    std::ofstream(file) << "ues = 300\nspeed = 3\n";
    try {
        parse({"run", "--config", file.string()});
        FAIL() << "unknown key accepted";
    } catch (const ConfigError& e) {
        EXPECT_NE(std::string(e.what()).find("speed"), std::string::npos) << e.what();
    }
    std::filesystem::remove_all(dir);
}

TEST(ExitCodes, HelpConfigAndCapacity)
{
    std::string out;
    EXPECT_EQ(run({"--help"}, &out), cli::kExitOk);
    EXPECT_NE(out.find("sweep"), std::string::npos);
    EXPECT_EQ(run({"run", "--ues", "10", "--prob-keep", "2"}), cli::kExitConfig);
    EXPECT_EQ(run({"run", "--ues", "10", "--bogus"}), cli::kExitConfig);
    EXPECT_EQ(run({"run", "--ues", "2501"}), cli::kExitCapacity);
}

TEST(RunCommand, WarnsAboveTheKeepRange)
{
    const auto dir = scratch("keep");
    std::string err;
    ASSERT_EQ(run({"run", "--ues", "20", "--duration", "2", "--prob-keep", "0.9", "--out", dir.string()}, nullptr, &err),
              cli::kExitOk);
    EXPECT_NE(err.find("warning: probKeep 0.9"), std::string::npos) << err;
    ASSERT_EQ(run({"run", "--ues", "20", "--duration", "2", "--prob-keep", "0.8", "--out", dir.string()}, nullptr, &err),
              cli::kExitOk);
    EXPECT_EQ(err.find("probKeep"), std::string::npos) << err;
    std::filesystem::remove_all(dir);
}

TEST(RunCommand, WritesStableCsv)
{
    const auto a = scratch("run_a");
    const auto b = scratch("run_b");
    const std::vector<std::string> base = {"run", "--ues", "500", "--duration", "3", "--runs", "2", "--seed", "9"};
    auto with = [&](const std::filesystem::path& d) {
        auto v = base;
        v.insert(v.end(), {"--out", d.string()});
        return v;
    };
    std::string out;
    ASSERT_EQ(run(with(a), &out), cli::kExitOk);
    EXPECT_NE(out.find("sps cbr=0.2"), std::string::npos) << out;
    ASSERT_EQ(run(with(b)), cli::kExitOk);
    for (const char* f : {"summary.csv", "series.csv"}) {
        const auto text = slurp(a / f);
        EXPECT_FALSE(text.empty());
        EXPECT_EQ(text, slurp(b / f)) << f;
        EXPECT_EQ(text.substr(0, text.find('\n')), kOutputHeader);
    }
    std::filesystem::remove_all(a);
    std::filesystem::remove_all(b);
}

TEST(AnalyticCommand, WritesBothTables)
{
    const auto dir = scratch("analytic");
    ASSERT_EQ(run({"analytic", "--cbr-grid", "0.1:0.9:0.1", "--out", dir.string()}), cli::kExitOk);
    const auto text = slurp(dir / "analytic.csv");
    std::size_t lines = 0;
    for (char c : text) lines += c == '\n';
    EXPECT_EQ(lines, 10u);
    EXPECT_NE(slurp(dir / "bits.csv").find("\n25,9,19\n"), std::string::npos);
    std::filesystem::remove_all(dir);
}

TEST(FigdataCommand, WritesRequestedFigures)
{
    const auto dir = scratch("figdata");
    ASSERT_EQ(run({"figdata", "--figures", "5,6,7", "--runs", "1", "--duration", "2", "--out", dir.string()}),
              cli::kExitOk);
    EXPECT_TRUE(std::filesystem::exists(dir / "fig5.csv"));
    EXPECT_TRUE(std::filesystem::exists(dir / "fig6.csv"));
    const auto fig7 = slurp(dir / "fig7.csv");
    EXPECT_NE(fig7.find("spsla,0.05,125,"), std::string::npos);
    EXPECT_NE(fig7.find(",agg,"), std::string::npos);
    EXPECT_FALSE(std::filesystem::exists(dir / "fig8.csv"));
    std::filesystem::remove_all(dir);
}
