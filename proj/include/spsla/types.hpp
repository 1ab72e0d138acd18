#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace spsla {

/// Absolute subframe index; one subframe is 1 ms.
using Subframe = std::int64_t;
using UeId = std::uint32_t;

/// Raised for invalid parameters, out-of-range coordinates and malformed input.
class ConfigError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Raised when a scenario asks for more UEs than the grid can carry.
class CapacityError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// One single-subframe resource: `length` consecutive subchannels starting
/// at `subchannel` in `subframe`.
struct ResourceCoord {
    Subframe subframe = 0;
    int subchannel = 0;
    int length = 1;

    friend bool operator==(const ResourceCoord&, const ResourceCoord&) = default;

    /// Two coords overlap when they share a subframe and at least one subchannel.
    bool overlaps(const ResourceCoord& other) const noexcept
    {
        return subframe == other.subframe && subchannel < other.subchannel + other.length &&
               other.subchannel < subchannel + length;
    }
};

inline void validate_coord(const ResourceCoord& coord, int num_subchannels)
{
    if (coord.length < 1 || coord.subchannel < 0 ||
        coord.subchannel + coord.length > num_subchannels) {
        throw ConfigError("resource coord out of subchannel range: subchannel " +
                          std::to_string(coord.subchannel) + " length " +
                          std::to_string(coord.length) + " with " +
                          std::to_string(num_subchannels) + " subchannels");
    }
}

/// Advertised location of the first packet of a UE's next streak:
/// starting subchannel c, subchannel count L and absolute subframe n.
struct Lookahead {
    int subchannel = 0;
    int length = 1;
    Subframe subframe = 0;

    friend bool operator==(const Lookahead&, const Lookahead&) = default;

    ResourceCoord coord() const noexcept { return {subframe, subchannel, length}; }

    static Lookahead from(const ResourceCoord& c) noexcept
    {
        return {c.subchannel, c.length, c.subframe};
    }
};

/// A lookahead as heard on the channel, tagged with its sender.
struct HeardLookahead {
    Lookahead lookahead;
    UeId advertiser = 0;

    friend bool operator==(const HeardLookahead&, const HeardLookahead&) = default;
};

}  // namespace spsla
