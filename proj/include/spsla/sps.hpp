#pragma once

#include <memory>
#include <optional>
#include <string>

#include "spsla/grid.hpp"
#include "spsla/rng.hpp"
#include "spsla/sensing.hpp"
#include "spsla/types.hpp"

namespace spsla {

enum class Scheduler { Sps, SpsLa };

inline std::string to_string(Scheduler s) { return s == Scheduler::Sps ? "sps" : "spsla"; }

/// Reselection counter range [C1, C2] for a reservation interval.
struct RcRange {
    int c1 = 5;
    int c2 = 15;
};

inline RcRange rc_range(int rri)
{
    if (rri >= 100) return {5, 15};
    if (rri == 50) return {10, 30};
    if (rri == 20) return {25, 75};
    throw ConfigError("unsupported RRI " + std::to_string(rri) + " ms (use 20, 50 or >= 100)");
}

inline int draw_rc(int rri, Rng& rng)
{
    const auto r = rc_range(rri);
    return static_cast<int>(rng.uniform_int(r.c1, r.c2));
}

struct SchedulerParams {
    int num_subchannels = 25;
    int rri = 100;
    int t1 = 1;
    int t2 = 100;
    int length = 1;
    int rc_la = 1;
    double prob_keep = 0.0;
    Projection projection = Projection::MostRecent;
    ClaimScope claims = ClaimScope::FirstPacket;
    /// SPS/LA only. When false, received lookaheads are ignored: no claims
    /// are excluded, nobody yields and the commit check is sensing only.
    bool lookaheads = true;

    SelectionParams selection() const noexcept { return {t1, t2, length, projection, claims}; }

    void validate() const
    {
        if (num_subchannels < 1 || num_subchannels > 1024) throw ConfigError("subchannels must be in [1, 1024]");
        const auto range = rc_range(rri);
        if (t1 < 1 || t2 <= t1) throw ConfigError("selection window needs 1 <= T1 < T2");
        if (t2 >= kSensingWindow) throw ConfigError("T2 must stay below the sensing window");
        if (length < 1 || length > num_subchannels) throw ConfigError("packet length out of range");
        if (rc_la < 1 || rc_la > range.c1) {
            throw ConfigError("RC_LA must be in [1, C1] = [1, " + std::to_string(range.c1) + "]");
        }
        if (!(prob_keep >= 0.0 && prob_keep <= 1.0)) throw ConfigError("probResourceKeep must be in [0, 1]");
    }
};

/// What fixed the coordinate a UE is heading to.
enum class DecisionKind { Initial, Keep, Reselect, Plan, Replan, Commit, Revert };

/// The next-streak plan of an SPS/LA UE.
struct LookaheadPlan {
    Lookahead lookahead;
    int larc = 0;
    Subframe decided_at = 0;
    bool kept = false;
    /// Number of packets that carried this plan so far.
    int attached = 0;
};

struct UeState {
    UeId id = 0;
    int tx_subch = 0;
    Subframe tx_subframe = 0;
    int rc = 0;
    int rri = 100;
    SensingMap sensing;
    std::optional<LookaheadRegistry> registry;
    std::optional<LookaheadPlan> plan;
    /// When the coordinate of the streak in use was chosen. For a committed
    /// lookahead this is the planning (or replanning) subframe.
    Subframe decided_at = 0;
    /// When that streak was switched to (the RC = 0 transmission).
    Subframe committed_at = 0;
    DecisionKind decision = DecisionKind::Initial;

    void note_transmission(Subframe sf)
    {
        sensing.mark_own_transmission(sf);
        if (registry) registry->mark_own_transmission(sf);
    }

    ResourceCoord next_coord(int length) const noexcept { return {tx_subframe, tx_subch, length}; }
};

/// A UE that enters at `now` without any sensing history: uniform subchannel,
/// first packet uniform within the next RRI, fresh RC. History and board
/// may be shared with the rest of the run; a null board means plain SPS.
inline UeState make_ue(UeId id, const SchedulerParams& p, Subframe now,
                       std::shared_ptr<const OccupancyHistory> history,
                       std::shared_ptr<LookaheadBoard> board, Rng& rng)
{
    UeState ue{.id = id,
               .sensing = history ? SensingMap(id, std::move(history), now) : SensingMap(id, p.num_subchannels)};
    ue.rri = p.rri;
    ue.tx_subch = static_cast<int>(rng.uniform_int(0, p.num_subchannels - p.length));
    ue.tx_subframe = now + rng.uniform_int(1, p.rri);
    ue.rc = draw_rc(p.rri, rng);
    if (board) ue.registry.emplace(id, std::move(board), now);
    ue.decided_at = now;
    ue.committed_at = now;
    return ue;
}

inline ResourceCoord select_resource(const UeState& ue, Subframe n, const SchedulerParams& p, Rng& rng)
{
    const auto candidates = candidate_resources(ue.sensing, n, ue.rri, nullptr, p.selection());
    return choose_resource(candidates, p.selection(), p.num_subchannels, rng);
}

/// One subframe of standard SPS for `ue`. Returns the packet sent, if any.
inline std::optional<ResourceCoord> sps_step(UeState& ue, Subframe subframe, const SchedulerParams& p, Rng& rng)
{
    if (subframe != ue.tx_subframe) return std::nullopt;
    const ResourceCoord sent = ue.next_coord(p.length);
    ue.note_transmission(subframe);

    if (ue.rc != 0) {
        ue.tx_subframe += ue.rri;
        --ue.rc;
        return sent;
    }
    ue.rc = draw_rc(ue.rri, rng);
    ue.decided_at = subframe;
    ue.committed_at = subframe;
    if (rng.uniform01() < p.prob_keep) {
        ue.tx_subframe += ue.rri;
        ue.decision = DecisionKind::Keep;
    } else {
        const auto next = select_resource(ue, subframe, p, rng);
        ue.tx_subframe = next.subframe;
        ue.tx_subch = next.subchannel;
        ue.decision = DecisionKind::Reselect;
    }
    return sent;
}

}  // namespace spsla
