#pragma once

#include <algorithm>
#include <cstdint>
#include <limits>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <vector>

#include "spsla/grid.hpp"
#include "spsla/rng.hpp"
#include "spsla/types.hpp"

namespace spsla {

/// How far back a busy observation is projected into the selection window.
enum class Projection {
    /// Every observation in the sensing window at m - RRI*j, j >= 1.
    AllObservations,
    /// Only the latest observed subframe m - RRI*j for each target subframe m.
    MostRecent,
};

/// Subframes in which the owner transmitted (and therefore heard nothing),
/// trimmed to the sensing window.
class OwnTransmissions {
public:
    void add(Subframe sf)
    {
        if (subframes_.empty() || subframes_.back() < sf) subframes_.push_back(sf);
    }

    bool contains(Subframe sf) const noexcept
    {
        return std::binary_search(subframes_.begin(), subframes_.end(), sf);
    }

    /// Drops everything older than `first_kept`.
    void trim(Subframe first_kept)
    {
        const auto it = std::lower_bound(subframes_.begin(), subframes_.end(), first_kept);
        subframes_.erase(subframes_.begin(), it);
    }

    std::span<const Subframe> subframes() const noexcept { return subframes_; }

private:
    std::vector<Subframe> subframes_;
};

enum class CellState { Unobserved, Unobservable, Free, Busy };

/// One UE's view of past resource use over the trailing sensing window.
///
/// Under the perfect channel every listener observes the same packets, so
/// the occupancy bitmap may be shared between all UEs of a run. The map
/// adds what is private to its owner: the subframes it lost to its own
/// transmissions, and the first subframe it was around to hear.
class SensingMap {
public:
    SensingMap(UeId owner, int num_subchannels)
        : owner_(owner), history_(std::make_shared<OccupancyHistory>(num_subchannels))
    {
    }

    SensingMap(UeId owner, std::shared_ptr<const OccupancyHistory> shared, Subframe joined_at)
        : owner_(owner), history_(std::move(shared)), joined_at_(joined_at)
    {
    }

    UeId owner() const noexcept { return owner_; }
    int num_subchannels() const noexcept { return history_->num_subchannels(); }
    Subframe joined_at() const noexcept { return joined_at_; }

    /// Records what the owner heard in `sf`. When the history is shared and
    /// already holds `sf`, only the owner's half-duplex loss is recorded.
    void observe_subframe(Subframe sf, std::span<const ResourceCoord> transmissions,
                          bool owner_transmitted)
    {
        if (sf > history_->latest()) {
            auto writable = std::const_pointer_cast<OccupancyHistory>(history_);
            writable->record(sf, transmissions);
        }
        if (owner_transmitted) own_.add(sf);
        own_.trim(window_begin());
    }

    /// The owner knows it transmits in `sf` before the subframe is observed.
    void mark_own_transmission(Subframe sf)
    {
        own_.add(sf);
        own_.trim(window_begin());
    }

    bool owner_transmitted(Subframe sf) const noexcept { return own_.contains(sf); }
    std::span<const Subframe> own_tx_subframes() const noexcept { return own_.subframes(); }

    /// Latest observed subframe, -1 before any observation.
    Subframe latest() const noexcept { return history_->latest(); }

    /// First subframe of the sensing window; never more than 1000 back.
    Subframe window_begin() const noexcept
    {
        return std::max({latest() - kSensingWindow + 1, joined_at_, history_->oldest()});
    }

    /// True when the owner heard `sf`: inside the window, recorded, and not
    /// lost to its own transmission.
    bool observed(Subframe sf) const noexcept
    {
        return sf >= window_begin() && sf <= latest() && history_->contains(sf) && !own_.contains(sf);
    }

    CellState state(Subframe sf, int subchannel) const noexcept
    {
        if (sf < window_begin() || sf > latest()) return CellState::Unobserved;
        if (own_.contains(sf)) return CellState::Unobservable;
        if (!history_->contains(sf)) return CellState::Unobserved;
        return history_->busy(sf, subchannel) ? CellState::Busy : CellState::Free;
    }

    /// Busy bitmap of an observed subframe; empty otherwise.
    std::span<const std::uint64_t> busy_mask(Subframe sf) const noexcept
    {
        if (!observed(sf)) return {};
        return history_->mask(sf);
    }

    int words() const noexcept { return history_->words(); }

private:
    UeId owner_;
    std::shared_ptr<const OccupancyHistory> history_;
    Subframe joined_at_ = 0;
    OwnTransmissions own_;
};

struct LookaheadEntry {
    Lookahead lookahead;
    UeId advertiser = 0;
    /// Every subframe in which this lookahead was put on the air.
    std::vector<Subframe> advertised_at;
    /// Subframes in which the advertiser announced a different lookahead,
    /// replacing this one for everybody who heard it.
    std::vector<Subframe> superseded_at;
};

/// All lookaheads put on the air in a run, indexed by target subframe.
/// Which of them a given UE actually heard is decided by its registry.
class LookaheadBoard {
public:
    void publish(Subframe sf, std::span<const HeardLookahead> heard)
    {
        for (const auto& h : heard) {
            if (h.lookahead.subframe <= sf) {
                throw std::logic_error("lookahead must point to a future subframe");
            }
            supersede(sf, h);
            auto& bucket = by_target_[h.lookahead.subframe];
            auto it = std::find_if(bucket.begin(), bucket.end(), [&](const LookaheadEntry& e) {
                return e.advertiser == h.advertiser && e.lookahead == h.lookahead;
            });
            if (it == bucket.end()) {
                bucket.push_back({h.lookahead, h.advertiser, {sf}, {}});
                targets_[h.advertiser].push_back(h.lookahead.subframe);
            } else if (it->advertised_at.back() < sf) {
                it->advertised_at.push_back(sf);
            }
        }
    }

    /// Drops entries whose target subframe lies before `now`.
    void purge(Subframe now)
    {
        by_target_.erase(by_target_.begin(), by_target_.lower_bound(now));
    }

    template <class F>
    void for_each(Subframe lo, Subframe hi, F&& fn) const
    {
        for (auto it = by_target_.lower_bound(lo); it != by_target_.end() && it->first <= hi; ++it) {
            for (const auto& e : it->second) fn(e);
        }
    }

    std::size_t size() const noexcept
    {
        std::size_t n = 0;
        for (const auto& [_, bucket] : by_target_) n += bucket.size();
        return n;
    }

    Subframe earliest_target() const noexcept
    {
        return by_target_.empty() ? -1 : by_target_.begin()->first;
    }

private:
    // Marks the advertiser's other live lookaheads as replaced by `h`.
    void supersede(Subframe sf, const HeardLookahead& h)
    {
        auto owned = targets_.find(h.advertiser);
        if (owned == targets_.end()) return;
        std::erase_if(owned->second, [&](Subframe t) { return t <= sf; });
        for (Subframe t : owned->second) {
            auto bucket = by_target_.find(t);
            if (bucket == by_target_.end()) continue;
            for (auto& e : bucket->second) {
                if (e.advertiser != h.advertiser || e.lookahead == h.lookahead) continue;
                if (e.superseded_at.empty() || e.superseded_at.back() < sf) e.superseded_at.push_back(sf);
            }
        }
    }

    std::map<Subframe, std::vector<LookaheadEntry>> by_target_;
    std::map<UeId, std::vector<Subframe>> targets_;
};

struct RegistryEntry {
    Lookahead lookahead;
    UeId advertiser = 0;
    Subframe received_at = 0;
};

/// The lookaheads one UE has received. An advertisement is lost when the
/// owner transmitted in the same subframe or had not yet joined.
class LookaheadRegistry {
public:
    explicit LookaheadRegistry(UeId owner)
        : owner_(owner), board_(std::make_shared<LookaheadBoard>())
    {
    }

    LookaheadRegistry(UeId owner, std::shared_ptr<LookaheadBoard> shared, Subframe joined_at)
        : owner_(owner), board_(std::move(shared)), joined_at_(joined_at)
    {
    }

    UeId owner() const noexcept { return owner_; }

    void receive(Subframe sf, std::span<const HeardLookahead> heard, bool owner_transmitted)
    {
        board_->purge(sf);
        board_->publish(sf, heard);
        if (owner_transmitted) mark_own_transmission(sf);
    }

    void mark_own_transmission(Subframe sf)
    {
        deaf_.add(sf);
        deaf_.trim(sf - kSensingWindow + 1);
    }

    /// First subframe in which the owner heard `e`, if it ever did.
    std::optional<Subframe> received_at(const LookaheadEntry& e) const noexcept
    {
        if (e.advertiser == owner_) return std::nullopt;
        for (Subframe s : e.advertised_at) {
            if (s >= joined_at_ && !deaf_.contains(s)) return s;
        }
        return std::nullopt;
    }

    /// True when the owner heard `e` and missed every later replacement.
    bool holds(const LookaheadEntry& e) const noexcept
    {
        if (!received_at(e)) return false;
        for (Subframe s : e.superseded_at) {
            if (s >= joined_at_ && !deaf_.contains(s)) return false;
        }
        return true;
    }

    /// Visits every held entry whose target subframe lies in [lo, hi].
    template <class F>
    void for_each_claim(Subframe lo, Subframe hi, F&& fn) const
    {
        board_->for_each(lo, hi, [&](const LookaheadEntry& e) {
            if (holds(e)) fn(e);
        });
    }

    /// True when any other UE's held lookahead overlaps `coord`.
    bool claimed(const ResourceCoord& coord) const
    {
        bool hit = false;
        for_each_claim(coord.subframe, coord.subframe, [&](const LookaheadEntry& e) {
            hit = hit || e.lookahead.coord().overlaps(coord);
        });
        return hit;
    }

    std::vector<RegistryEntry> entries() const
    {
        std::vector<RegistryEntry> out;
        board_->for_each(board_->earliest_target(), std::numeric_limits<Subframe>::max(),
                         [&](const LookaheadEntry& e) {
                             if (auto at = received_at(e)) out.push_back({e.lookahead, e.advertiser, *at});
                         });
        return out;
    }

    const LookaheadBoard& board() const noexcept { return *board_; }

private:
    UeId owner_;
    std::shared_ptr<LookaheadBoard> board_;
    Subframe joined_at_ = 0;
    OwnTransmissions deaf_;
};

/// How much of the grid a received lookahead claims.
enum class ClaimScope {
    /// Only the advertised first resource of the next streak.
    FirstPacket,
    /// The advertised resource and its repeats every RRI after it.
    Forward,
    /// Every resource congruent to the advertised one modulo the RRI.
    Streak,
};

struct SelectionParams {
    int t1 = 1;
    int t2 = 100;
    int length = 1;
    Projection projection = Projection::MostRecent;
    ClaimScope claims = ClaimScope::FirstPacket;
};

/// Free resources of the selection window [anchor+T1, anchor+T2], ordered
/// by subframe then subchannel.
struct CandidateSet {
    Subframe anchor = 0;
    std::vector<ResourceCoord> members;

    bool empty() const noexcept { return members.empty(); }
    std::size_t size() const noexcept { return members.size(); }
    bool contains(const ResourceCoord& c) const
    {
        return std::find(members.begin(), members.end(), c) != members.end();
    }
};

namespace detail {

/// True when the owner's own transmissions project onto subframe `m`
/// (m - RRI*j was a transmit subframe for some j >= 1).
inline bool half_duplex_excluded(const SensingMap& map, Subframe m, int rri) noexcept
{
    for (Subframe s : map.own_tx_subframes()) {
        if (s < m && (m - s) % rri == 0) return true;
    }
    return false;
}

/// ORs into `row` the busy cells observed at m - RRI*j that are projected
/// onto subframe `m`.
inline void project_busy(const SensingMap& map, Subframe m, int rri, Projection projection,
                         std::span<std::uint64_t> row)
{
    const Subframe begin = map.window_begin();
    const Subframe latest = map.latest();
    if (latest < 0) return;
    Subframe s = m - rri;
    if (s > latest) s -= static_cast<Subframe>((s - latest + rri - 1) / rri) * rri;
    for (; s >= begin; s -= rri) {
        const auto mask = map.busy_mask(s);
        if (mask.empty()) continue;
        for (std::size_t w = 0; w < row.size(); ++w) row[w] |= mask[w];
        if (projection == Projection::MostRecent) break;
    }
}

inline bool cells_free(std::span<const std::uint64_t> row, int from, int length) noexcept
{
    for (int c = from; c < from + length; ++c) {
        if ((row[static_cast<std::size_t>(c / 64)] >> (c % 64)) & 1ULL) return false;
    }
    return true;
}

inline void set_cells(std::span<std::uint64_t> row, int from, int length) noexcept
{
    for (int c = from; c < from + length; ++c) row[static_cast<std::size_t>(c / 64)] |= 1ULL << (c % 64);
}

}  // namespace detail

/// Builds the candidate set for a selection anchored at subframe `n`.
///
/// Excluded are: subframes onto which the owner's own transmissions project
/// (it could not hear them, so they are treated as busy); cells whose
/// sensed use projects onto them; and, when `registry` is given, cells
/// claimed by a received lookahead.
inline CandidateSet candidate_resources(const SensingMap& map, Subframe n, int rri,
                                        const LookaheadRegistry* registry, const SelectionParams& p)
{
    const int num_subchannels = map.num_subchannels();
    const Subframe lo = n + p.t1;
    const Subframe hi = n + p.t2;
    const auto width = static_cast<std::size_t>(hi - lo + 1);
    const auto words = static_cast<std::size_t>(map.words());

    std::vector<std::uint64_t> blocked(width * words, 0);
    std::vector<char> subframe_blocked(width, 0);
    auto row = [&](std::size_t i) { return std::span<std::uint64_t>(blocked.data() + i * words, words); };

    for (std::size_t i = 0; i < width; ++i) {
        const Subframe m = lo + static_cast<Subframe>(i);
        if (detail::half_duplex_excluded(map, m, rri)) {
            subframe_blocked[i] = 1;
            continue;
        }
        detail::project_busy(map, m, rri, p.projection, row(i));
    }
    if (registry != nullptr) {
        const bool repeat = p.claims != ClaimScope::FirstPacket;
        const Subframe before = repeat ? kSensingWindow : 0;
        const Subframe after = p.claims == ClaimScope::Streak ? kSensingWindow : 0;
        registry->for_each_claim(lo - before, hi + after, [&](const LookaheadEntry& e) {
            Subframe at = e.lookahead.subframe;
            if (repeat && at < lo) at += (lo - at + rri - 1) / rri * rri;
            if (at > hi) at -= (at - hi + rri - 1) / rri * rri;
            for (; at >= lo && at <= hi; at += rri) {
                detail::set_cells(row(static_cast<std::size_t>(at - lo)), e.lookahead.subchannel, e.lookahead.length);
                if (!repeat) break;
            }
        });
    }

    CandidateSet out;
    out.anchor = n;
    for (std::size_t i = 0; i < width; ++i) {
        if (subframe_blocked[i]) continue;
        for (int c = 0; c + p.length <= num_subchannels; ++c) {
            if (detail::cells_free(row(i), c, p.length)) {
                out.members.push_back({lo + static_cast<Subframe>(i), c, p.length});
            }
        }
    }
    return out;
}

/// True when sensing predicts other traffic on `coord` (the projection rule
/// only; the owner's own transmit subframes are not held against it).
inline bool predicted_busy(const SensingMap& map, const ResourceCoord& coord, int rri, Projection projection)
{
    std::vector<std::uint64_t> row(static_cast<std::size_t>(map.words()), 0);
    detail::project_busy(map, coord.subframe, rri, projection, row);
    return !detail::cells_free(row, coord.subchannel, coord.length);
}

/// Uniform pick from `candidates`; when empty, uniform over every coord of
/// the selection window.
inline ResourceCoord choose_resource(const CandidateSet& candidates, const SelectionParams& p,
                                     int num_subchannels, Rng& rng)
{
    if (!candidates.empty()) return candidates.members[rng.index(candidates.size())];
    const Subframe sf = candidates.anchor + rng.uniform_int(p.t1, p.t2);
    const int c = static_cast<int>(rng.uniform_int(0, num_subchannels - p.length));
    return {sf, c, p.length};
}

}  // namespace spsla
