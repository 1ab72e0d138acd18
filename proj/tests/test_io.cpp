#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "spsla/io.hpp"

using namespace spsla;

TEST(FormatNumber, RoundTripsExactly)
{
    for (double v : {0.0, 1.0, 0.1, 1.0 / 3.0, 5.76e-3, 1.28e-1, 2.0006002801540925e-4, 1e-300}) {
        EXPECT_EQ(parse_number(format_number(v)), v);
    }
    EXPECT_EQ(format_number(0.5), "0.5");
    EXPECT_THROW(parse_number("0.5x"), ConfigError);
    EXPECT_THROW(parse_number(""), ConfigError);
}

TEST(OutputRow, PerSeedRowRoundTrips)
{
    OutputRow r;
    r.scheduler = Scheduler::SpsLa;
    r.cbr = 0.9;
    r.num_ues = 2250;
    r.prob_keep = 0.2;
    r.churn = 0.05;
    r.rc_la = 1;
    r.seed = 18446744073709551615ULL;
    r.t_seconds = 40;
    r.collision_prob = 5.76e-3;
    const auto line = to_csv(r);
    EXPECT_EQ(line, "spsla,0.9,2250,0.2,0.05,1,18446744073709551615,40,0.00576,");
    const auto back = parse_output_row(line);
    EXPECT_EQ(to_csv(back), line);
    EXPECT_EQ(back.seed, r.seed);
    EXPECT_FALSE(back.ci95);
}

TEST(OutputRow, AggregateRowRoundTrips)
{
    OutputRow r;
    r.cbr = 1.0 / 3.0;
    r.collision_prob = 1.0 / 7.0;
    r.ci95 = 1e-5;
    const auto line = to_csv(r);
    EXPECT_NE(line.find(",agg,"), std::string::npos);
    const auto back = parse_output_row(line);
    EXPECT_FALSE(back.seed);
    EXPECT_EQ(back.cbr, r.cbr);
    EXPECT_EQ(back.collision_prob, r.collision_prob);
    EXPECT_EQ(back.ci95, r.ci95);
}

TEST(OutputRow, MalformedLinesAreRejected)
{
    EXPECT_THROW(parse_output_row("sps,0.1"), ConfigError);
    EXPECT_THROW(parse_output_row("lte,0.1,250,0,0,1,agg,100,0,"), ConfigError);
}

TEST(SeriesRows, OneRowPerSeedAndSecondThenAggregates)
{
    ScenarioConfig c;
    c.num_ues = 750;
    c.duration_s = 3;
    c.runs = 2;
    const auto runs = run_replicas(c);
    const auto rows = series_rows(c, runs);
    ASSERT_EQ(rows.size(), 2u * 3u + 3u);
    EXPECT_EQ(rows[0].seed, runs[0].seed);
    EXPECT_EQ(rows[3].seed, runs[1].seed);
    EXPECT_FALSE(rows[6].seed);
    EXPECT_TRUE(rows[6].ci95);
    EXPECT_FALSE(rows[0].ci95);
    EXPECT_EQ(rows[8].t_seconds, 3);
    EXPECT_DOUBLE_EQ(rows[8].collision_prob,
                     0.5 * (runs[0].final_collision_probability + runs[1].final_collision_probability));
    const auto s = summary_row(c, runs);
    EXPECT_EQ(s.collision_prob, rows[8].collision_prob);
    EXPECT_EQ(s.t_seconds, 3);
    EXPECT_DOUBLE_EQ(s.cbr, 0.3);

    const auto text = render_rows(rows);
    std::istringstream in(text);
    std::string line;
    std::getline(in, line);
    EXPECT_EQ(line, kOutputHeader);
    std::size_t n = 0;
    while (std::getline(in, line)) {
        EXPECT_EQ(to_csv(parse_output_row(line)), line);
        ++n;
    }
    EXPECT_EQ(n, rows.size());
}

TEST(AnalyticCsv, HeaderAndRows)
{
    const std::vector<double> cbrs = {0.1, 0.5};
    const auto text = render_analytic(analytic_rows(cbrs));
    EXPECT_EQ(text.substr(0, text.find('\n')), "cbr,p_col_sps,p_col_spsla");
    EXPECT_NE(text.find("\n0.5,"), std::string::npos);
    const auto bits = render_bits(25);
    EXPECT_NE(bits.find("\n25,9,19\n"), std::string::npos);
    EXPECT_EQ(bits.substr(0, bits.find('\n')), "n_subch,bits_no_offset,bits_with_offset");
}

TEST(WriteText, CreatesDirectories)
{
    const auto dir = std::filesystem::temp_directory_path() / "spsla_io_test" / "nested";
    std::filesystem::remove_all(dir.parent_path());
    const auto path = write_text(dir, "x.csv", "a,b\n");
    std::ifstream f(path);
    std::string s((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    EXPECT_EQ(s, "a,b\n");
    std::filesystem::remove_all(dir.parent_path());
}
