#pragma once

#include <algorithm>
#include <bit>
#include <cstdint>
#include <memory>
#include <span>
#include <stdexcept>
#include <vector>

#include "spsla/types.hpp"

namespace spsla {

/// Subframes a UE monitors before selecting a resource.
inline constexpr int kSensingWindow = 1000;
/// Subframes averaged by the channel busy ratio.
inline constexpr int kCbrWindow = 100;

/// Per-subframe busy/free bitmap over the subchannels, kept for a trailing
/// window of `depth` subframes. Occupancy is binary: a cell is busy when at
/// least one packet was placed on it.
class OccupancyHistory {
public:
    explicit OccupancyHistory(int num_subchannels, int depth = kSensingWindow)
        : num_subchannels_(num_subchannels),
          depth_(depth),
          words_((num_subchannels + 63) / 64),
          bits_(static_cast<std::size_t>(depth) * static_cast<std::size_t>((num_subchannels + 63) / 64)),
          stamps_(static_cast<std::size_t>(depth), -1)
    {
        if (num_subchannels < 1) throw ConfigError("number of subchannels must be >= 1");
        if (depth < 1) throw ConfigError("history depth must be >= 1");
    }

    int num_subchannels() const noexcept { return num_subchannels_; }
    int depth() const noexcept { return depth_; }
    int words() const noexcept { return words_; }

    bool empty() const noexcept { return latest_ < 0; }
    /// Most recent recorded subframe, or -1 when nothing was recorded.
    Subframe latest() const noexcept { return latest_; }
    /// Oldest subframe still inside the retained window.
    Subframe oldest() const noexcept { return std::max<Subframe>(first_, latest_ - depth_ + 1); }

    /// Opens `sf` for recording with all cells free. Subframes must advance.
    void begin(Subframe sf)
    {
        if (sf < 0 || sf <= latest_) throw std::logic_error("occupancy history must advance");
        if (latest_ < 0) first_ = sf;
        latest_ = sf;
        const auto slot = slot_of(sf);
        stamps_[slot] = sf;
        std::fill_n(bits_.begin() + static_cast<std::ptrdiff_t>(slot * words_), words_, 0ULL);
    }

    /// Marks the cells of `coord` busy; `coord.subframe` must be the open subframe.
    void mark(const ResourceCoord& coord)
    {
        if (coord.subframe != latest_) throw std::logic_error("can only mark the open subframe");
        validate_coord(coord, num_subchannels_);
        auto* row = bits_.data() + slot_of(coord.subframe) * words_;
        for (int c = coord.subchannel; c < coord.subchannel + coord.length; ++c) {
            row[c / 64] |= 1ULL << (c % 64);
        }
    }

    void record(Subframe sf, std::span<const ResourceCoord> transmissions)
    {
        begin(sf);
        for (const auto& t : transmissions) {
            ResourceCoord c = t;
            c.subframe = sf;
            mark(c);
        }
    }

    bool contains(Subframe sf) const noexcept
    {
        return sf >= 0 && sf <= latest_ && sf > latest_ - depth_ && stamps_[slot_of(sf)] == sf;
    }

    /// Busy bitmap of `sf`; empty span when the subframe is not retained.
    std::span<const std::uint64_t> mask(Subframe sf) const noexcept
    {
        if (!contains(sf)) return {};
        return {bits_.data() + slot_of(sf) * words_, static_cast<std::size_t>(words_)};
    }

    bool busy(Subframe sf, int subchannel) const noexcept
    {
        const auto m = mask(sf);
        return !m.empty() && ((m[static_cast<std::size_t>(subchannel / 64)] >> (subchannel % 64)) & 1ULL);
    }

    int busy_count(Subframe sf) const noexcept
    {
        int n = 0;
        for (auto w : mask(sf)) n += std::popcount(w);
        return n;
    }

private:
    std::size_t slot_of(Subframe sf) const noexcept
    {
        return static_cast<std::size_t>(sf % depth_);
    }

    int num_subchannels_;
    int depth_;
    int words_;
    std::vector<std::uint64_t> bits_;
    std::vector<Subframe> stamps_;
    Subframe latest_ = -1;
    Subframe first_ = 0;
};

struct TxRecord {
    ResourceCoord coord;
    UeId ue = 0;
};

/// Ground truth of every packet placed on the grid. Keeps full records for
/// the trailing sensing window plus running collision counters.
class TransmissionLog {
public:
    explicit TransmissionLog(int num_subchannels, int depth = kSensingWindow)
        : num_subchannels_(num_subchannels),
          depth_(depth),
          occupancy_(std::make_shared<OccupancyHistory>(num_subchannels, depth)),
          records_(static_cast<std::size_t>(depth)),
          record_stamps_(static_cast<std::size_t>(depth), -1),
          counts_(static_cast<std::size_t>(num_subchannels), 0)
    {
    }

    int num_subchannels() const noexcept { return num_subchannels_; }

    /// Starts subframe `sf`. The first call fixes the start of the metric
    /// period; every subframe from there on counts toward the denominator.
    void begin_subframe(Subframe sf)
    {
        if (current_ >= 0 && sf <= current_) throw std::logic_error("subframes must advance");
        if (current_ < 0) start_ = sf;
        current_ = sf;
        occupancy_->begin(sf);
        const auto slot = static_cast<std::size_t>(sf % depth_);
        records_[slot].clear();
        record_stamps_[slot] = sf;
        std::fill(counts_.begin(), counts_.end(), 0);
    }

    void record_transmission(const ResourceCoord& coord, UeId ue)
    {
        validate_coord(coord, num_subchannels_);
        if (current_ < 0 || coord.subframe != current_) {
            throw std::logic_error("transmission must be recorded in the current subframe");
        }
        occupancy_->mark(coord);
        records_[static_cast<std::size_t>(current_ % depth_)].push_back({coord, ue});
        for (int c = coord.subchannel; c < coord.subchannel + coord.length; ++c) {
            if (++counts_[static_cast<std::size_t>(c)] == 2) ++collided_;
        }
    }

    Subframe current() const noexcept { return current_; }
    Subframe start() const noexcept { return start_; }
    std::int64_t subframes_elapsed() const noexcept { return current_ < 0 ? 0 : current_ - start_ + 1; }
    std::int64_t total_resources_elapsed() const noexcept
    {
        return subframes_elapsed() * num_subchannels_;
    }
    std::int64_t collided_resource_count() const noexcept { return collided_; }

    /// Packets recorded in `sf`; empty once `sf` leaves the retained window.
    std::span<const TxRecord> records(Subframe sf) const noexcept
    {
        if (sf < 0 || sf > current_ || sf <= current_ - depth_) return {};
        const auto slot = static_cast<std::size_t>(sf % depth_);
        if (record_stamps_[slot] != sf) return {};
        return records_[slot];
    }

    const OccupancyHistory& occupancy() const noexcept { return *occupancy_; }
    std::shared_ptr<OccupancyHistory> shared_occupancy() const noexcept { return occupancy_; }

private:
    int num_subchannels_;
    int depth_;
    std::shared_ptr<OccupancyHistory> occupancy_;
    std::vector<std::vector<TxRecord>> records_;
    std::vector<Subframe> record_stamps_;
    std::vector<int> counts_;
    Subframe current_ = -1;
    Subframe start_ = 0;
    std::int64_t collided_ = 0;
};

/// Collided cells divided by the number of single-subframe resources in
/// `elapsed_subframes` subframes.
inline double collision_probability(const TransmissionLog& log, std::int64_t elapsed_subframes)
{
    if (elapsed_subframes <= 0) throw ConfigError("collision probability needs elapsed time > 0");
    return static_cast<double>(log.collided_resource_count()) /
           (static_cast<double>(log.num_subchannels()) * static_cast<double>(elapsed_subframes));
}

struct CbrSample {
    double value = 0.0;
    /// Fewer than the full 100 subframes of history were available.
    bool warmup = false;
};

/// Fraction of cells in subframes [n-100, n-1] that carried a packet.
inline CbrSample channel_busy_ratio(const TransmissionLog& log, Subframe n)
{
    const Subframe lo = std::max<Subframe>(n - kCbrWindow, log.start());
    const Subframe hi = std::min<Subframe>(n - 1, log.current());
    CbrSample out;
    out.warmup = n - kCbrWindow < log.start();
    if (hi < lo) return out;
    std::int64_t busy = 0;
    for (Subframe s = lo; s <= hi; ++s) busy += log.occupancy().busy_count(s);
    // Subframes in (current, n-1] simply carried nothing yet.
    const auto width = static_cast<double>(n - lo);
    out.value = static_cast<double>(busy) / (width * log.num_subchannels());
    return out;
}

}  // namespace spsla
