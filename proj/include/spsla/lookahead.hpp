#pragma once

#include <optional>
#include <span>
#include <stdexcept>

#include "spsla/sensing.hpp"
#include "spsla/sps.hpp"

namespace spsla {

/// A transmitted packet together with the lookahead piggybacked on it.
struct LaTransmission {
    ResourceCoord coord;
    std::optional<Lookahead> lookahead;
};

/// Subframe of the last packet (RC = 0) of the streak in progress.
inline Subframe commit_subframe(const UeState& ue) noexcept
{
    return ue.tx_subframe + static_cast<Subframe>(ue.rri) * ue.rc;
}

/// Uniform pick from the sensing candidates minus every coord claimed by a
/// received lookahead.
inline ResourceCoord select_resource_lookahead(const UeState& ue, Subframe n, const SchedulerParams& p, Rng& rng)
{
    const LookaheadRegistry* registry = ue.registry && p.lookaheads ? &*ue.registry : nullptr;
    const auto candidates = candidate_resources(ue.sensing, n, ue.rri, registry, p.selection());
    return choose_resource(candidates, p.selection(), p.num_subchannels, rng);
}

/// Early reselection at RC = RC_LA. Must be called at the transmission
/// subframe, before the streak advances.
inline Lookahead plan_lookahead(UeState& ue, Subframe subframe, const SchedulerParams& p, Rng& rng)
{
    if (ue.rc != p.rc_la || ue.tx_subframe != subframe) {
        throw std::logic_error("plan_lookahead outside the RC_LA transmission");
    }
    LookaheadPlan plan;
    plan.larc = draw_rc(ue.rri, rng);
    plan.decided_at = subframe;
    if (rng.uniform01() < p.prob_keep) {
        plan.lookahead = {ue.tx_subch, p.length, ue.tx_subframe + static_cast<Subframe>(ue.rri) * (ue.rc + 1)};
        plan.kept = true;
    } else {
        plan.lookahead = Lookahead::from(select_resource_lookahead(ue, commit_subframe(ue), p, rng));
    }
    ue.plan = plan;
    return plan.lookahead;
}

/// Delivers the lookaheads heard in `subframe`. A UE whose own plan is
/// claimed by another UE's lookahead gives it up and replans at once.
/// Returns true when the plan was replaced.
inline bool receive_lookaheads(UeState& ue, Subframe subframe, std::span<const HeardLookahead> heard,
                               bool ue_transmitted, const SchedulerParams& p, Rng& rng)
{
    if (ue.registry) ue.registry->receive(subframe, heard, ue_transmitted);
    if (ue_transmitted || !ue.plan || !p.lookaheads) return false;
    const auto mine = ue.plan->lookahead.coord();
    bool conflict = false;
    for (const auto& h : heard) {
        conflict = conflict || (h.advertiser != ue.id && h.lookahead.coord().overlaps(mine));
    }
    if (!conflict) return false;
    ue.plan->lookahead = Lookahead::from(select_resource_lookahead(ue, commit_subframe(ue), p, rng));
    ue.plan->decided_at = subframe;
    ue.plan->kept = false;
    ue.plan->attached = 0;
    return true;
}

/// Commit-time double check: the planned coord must be unclaimed by other
/// UEs' lookaheads and not predicted busy by sensing.
inline bool check_lookahead(const UeState& ue, Subframe commit_subframe, const SchedulerParams& p)
{
    if (!ue.plan) throw std::logic_error("check_lookahead without a plan");
    if (ue.tx_subframe != commit_subframe) throw std::logic_error("check_lookahead outside the commit subframe");
    const auto coord = ue.plan->lookahead.coord();
    if (ue.registry && p.lookaheads && ue.registry->claimed(coord)) return false;
    return !predicted_busy(ue.sensing, coord, ue.rri, p.projection);
}

/// One subframe of SPS/LA for `ue`. Returns the packet sent, if any, with
/// the lookahead it carries.
inline std::optional<LaTransmission> la_step(UeState& ue, Subframe subframe, const SchedulerParams& p, Rng& rng)
{
    if (subframe != ue.tx_subframe) return std::nullopt;
    LaTransmission sent{ue.next_coord(p.length), std::nullopt};
    ue.note_transmission(subframe);

    if (ue.rc != 0) {
        if (ue.rc == p.rc_la) plan_lookahead(ue, subframe, p, rng);
        if (ue.plan) {
            sent.lookahead = ue.plan->lookahead;
            ++ue.plan->attached;
        }
        ue.tx_subframe += ue.rri;
        --ue.rc;
        return sent;
    }

    if (!ue.plan) throw std::logic_error("SPS/LA streak ended without a plan");
    ++ue.plan->attached;
    ue.rc = ue.plan->larc;
    ue.committed_at = subframe;
    if (check_lookahead(ue, subframe, p)) {
        ue.tx_subframe = ue.plan->lookahead.subframe;
        ue.tx_subch = ue.plan->lookahead.subchannel;
        ue.decided_at = ue.plan->decided_at;
        ue.decision = ue.plan->kept ? DecisionKind::Keep : DecisionKind::Commit;
    } else {
        const auto next = select_resource_lookahead(ue, subframe, p, rng);
        ue.tx_subframe = next.subframe;
        ue.tx_subch = next.subchannel;
        ue.decided_at = subframe;
        ue.decision = DecisionKind::Revert;
    }
    // The last packet of the streak announces where the next one starts,
    // whether that is the plan or the replacement chosen just now.
    sent.lookahead = Lookahead::from(ue.next_coord(p.length));
    ue.plan.reset();
    return sent;
}

}  // namespace spsla
