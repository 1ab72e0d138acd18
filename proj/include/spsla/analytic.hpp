#pragma once

#include <bit>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>

#include "spsla/types.hpp"

namespace spsla {

/// Inputs of the closed-form collision model. `cbr` is a fraction in [0, 1).
struct AnalyticParams {
    int n_subch = 25;
    int t1 = 1;
    int t2 = 100;
    int c1 = 5;
    int c2 = 15;
    double cbr = 0.5;

    /// Selection window length T = T2 - T1 + 1.
    int window() const noexcept { return t2 - t1 + 1; }
    double mean_rc() const noexcept { return 0.5 * (c1 + c2); }

    void validate() const
    {
        if (n_subch < 1) throw ConfigError("subchannels must be >= 1");
        if (t1 < 1 || t2 < t1) throw ConfigError("selection window needs 1 <= T1 <= T2");
        if (c1 < 1 || c2 < c1) throw ConfigError("RC range needs 1 <= C1 <= C2");
        if (!(cbr >= 0.0 && cbr < 1.0)) throw ConfigError("CBR must be in [0, 1)");
    }
};

/// Chance that one other reselecting UE picks a given free resource.
inline double pick_probability(const AnalyticParams& a)
{
    a.validate();
    const double free = a.n_subch * a.window() * (1.0 - a.cbr);
    if (free < 1.0) throw ConfigError("selection window holds less than one free resource");
    return 1.0 / free;
}

/// Mean number of UEs whose RC expires in one subframe.
inline double reselecting_ues(const AnalyticParams& a)
{
    a.validate();
    return a.n_subch * a.cbr / a.mean_rc();
}

/// Collision probability under lookahead SPS: only UEs deciding in the same
/// subframe can still collide.
inline double p_col_spsla(const AnalyticParams& a)
{
    const double p = pick_probability(a);
    const double exponent = std::max(0.0, reselecting_ues(a) - 1.0);
    return 1.0 - std::pow(1.0 - p, exponent);
}

/// Collision probability under standard SPS: a UE reselecting k subframes
/// earlier sees a window overlapping ours in a (T - k) / T fraction.
inline double p_col_sps(const AnalyticParams& a)
{
    const double p = pick_probability(a);
    const double per_subframe = reselecting_ues(a);
    if (per_subframe == 0.0) return 0.0;
    const int t = a.window();
    double log_free = 0.0;
    for (int k = 0; k < t; ++k) {
        const double q = static_cast<double>(t - k) / t * p;
        log_free += per_subframe * std::log1p(-q);
    }
    return 1.0 - std::exp(log_free);
}

/// Extra SCI bits a lookahead needs: a (start, length) subchannel pair, plus
/// a 10-bit subframe offset when the offset is not implied by the RRI.
inline int sci_extra_bits(int n_subch, bool include_offset)
{
    if (n_subch < 1) throw ConfigError("subchannels must be >= 1");
    const auto n = static_cast<std::uint64_t>(n_subch);
    const std::uint64_t pairs = n * (n + 1) / 2;
    const int bits = pairs <= 1 ? 0 : std::bit_width(pairs - 1);
    return bits + (include_offset ? 10 : 0);
}

}  // namespace spsla
