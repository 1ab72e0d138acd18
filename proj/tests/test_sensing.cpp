#include <gtest/gtest.h>

#include <boost/math/distributions/chi_squared.hpp>

#include <algorithm>
#include <map>
#include <set>
#include <tuple>
#include <vector>

#include "spsla/sensing.hpp"
#include "toy_grid.hpp"
#include "spsla/sps.hpp"

using namespace spsla;

using oracle::kOwner;
using oracle::ToyScenario;
using oracle::random_toy;
using oracle::build;
using oracle::brute_force;

TEST(ObserveSubframe, MarksListedCellsBusyAndTheRestFree)
{
    SensingMap map(kOwner, 25);
    const std::vector<ResourceCoord> tx = {{10, 3, 1}, {10, 17, 1}};
    map.observe_subframe(10, tx, false);
    int busy = 0;
    int free = 0;
    for (int c = 0; c < 25; ++c) {
        busy += map.state(10, c) == CellState::Busy;
        free += map.state(10, c) == CellState::Free;
    }
    EXPECT_EQ(busy, 2);
    EXPECT_EQ(free, 23);
    EXPECT_EQ(map.state(10, 3), CellState::Busy);
}

TEST(ObserveSubframe, OwnTransmissionMakesSubframeUnobservable)
{
    SensingMap map(kOwner, 5);
    const std::vector<ResourceCoord> tx = {{4, 1, 1}};
    map.observe_subframe(4, tx, true);
    for (int c = 0; c < 5; ++c) EXPECT_EQ(map.state(4, c), CellState::Unobservable);
    EXPECT_TRUE(map.busy_mask(4).empty());
}

TEST(ObserveSubframe, HistoryHoldsAtMostOneSensingWindow)
{
    SensingMap map(kOwner, 2);
    for (Subframe s = 0; s <= 1500; ++s) {
        const std::vector<ResourceCoord> tx = {{s, 0, 1}};
        map.observe_subframe(s, tx, s == 500);
    }
    EXPECT_EQ(map.state(500, 0), CellState::Unobserved);
    EXPECT_EQ(map.state(501, 0), CellState::Busy);
    EXPECT_EQ(map.state(1500, 0), CellState::Busy);
    EXPECT_EQ(map.window_begin(), 501);
    EXPECT_TRUE(map.own_tx_subframes().empty());
}

TEST(ObserveSubframe, MarkingOwnTransmissionKeepsTheWindowEdge)
{
    // Own packets at 8, 108, ..., 1008 on the same cell: the oldest one is
    // still inside the window when the commit packet is marked, so the cell
    // must not look busy to its owner.
    SensingMap map(kOwner, 2);
    for (Subframe s = 0; s < 1008; ++s) {
        const bool own = s % 100 == 8;
        std::vector<ResourceCoord> tx;
        if (own) tx.push_back({s, 1, 1});
        map.observe_subframe(s, tx, own);
    }
    map.mark_own_transmission(1008);
    EXPECT_EQ(map.window_begin(), 8);
    EXPECT_TRUE(map.owner_transmitted(8));
    EXPECT_FALSE(predicted_busy(map, {1108, 1, 1}, 100, Projection::MostRecent));
    EXPECT_FALSE(predicted_busy(map, {1108, 1, 1}, 100, Projection::AllObservations));
}

TEST(CandidateResources, EmptyHistoryReturnsWholeWindow)
{
    SensingMap map(kOwner, 25);
    const auto set = candidate_resources(map, 0, 100, nullptr, {});
    EXPECT_EQ(set.size(), 25u * 100u);
    EXPECT_EQ(set.members.front(), (ResourceCoord{1, 0, 1}));
    EXPECT_EQ(set.members.back(), (ResourceCoord{100, 24, 1}));
}

TEST(CandidateResources, OwnTransmissionOneRriBackExcludesWholeSubframe)
{
    ToyScenario t;
    t.n_subch = 3;
    t.rri = 5;
    t.first = 0;
    t.latest = 9;
    const Subframe n = 9;
    const Subframe m = 12;
    t.own_tx.insert(m - t.rri);
    const auto b = build(t);
    const SelectionParams p{1, 5, 1, Projection::AllObservations};
    const auto set = candidate_resources(b.map, n, t.rri, nullptr, p);
    EXPECT_EQ(set.members, brute_force(t, n, 1, 5, p.projection, false));
    EXPECT_EQ(set.size(), 12u);
    for (const auto& c : set.members) EXPECT_NE(c.subframe, m);
}

TEST(CandidateResources, BusyCellExcludesOnlyItsSubchannel)
{
    SensingMap map(kOwner, 25);
    for (Subframe s = 0; s < 100; ++s) {
        std::vector<ResourceCoord> tx;
        if (s == 40) tx.push_back({40, 7, 1});
        map.observe_subframe(s, tx, false);
    }
    const auto set = candidate_resources(map, 99, 100, nullptr, {});
    EXPECT_FALSE(set.contains({140, 7, 1}));
    EXPECT_TRUE(set.contains({140, 8, 1}));
    EXPECT_EQ(set.size(), 25u * 100u - 1u);
}

TEST(CandidateResources, OwnCurrentResourceProjectedForwardIsExcluded)
{
    // The owner cannot sense itself; its transmit subframe goes by rule (a).
    SensingMap map(kOwner, 10);
    for (Subframe s = 0; s < 300; ++s) {
        const bool own = s % 100 == 37;
        std::vector<ResourceCoord> tx;
        if (own) tx.push_back({s, 4, 1});
        map.observe_subframe(s, tx, own);
    }
    const auto set = candidate_resources(map, 299, 100, nullptr, {});
    for (int c = 0; c < 10; ++c) EXPECT_FALSE(set.contains({337, c, 1}));
    EXPECT_EQ(set.size(), 10u * 99u);
}

TEST(CandidateResourcesProperty, MatchesBruteForceOnToyGrids)
{
    Rng rng(20240611);
    int checked = 0;
    for (int trial = 0; trial < 3000; ++trial) {
        const int n_subch = static_cast<int>(rng.uniform_int(1, 4));
        const int rri = static_cast<int>(rng.uniform_int(2, 7));
        const int t2 = static_cast<int>(rng.uniform_int(1, 6));
        const int t1 = static_cast<int>(rng.uniform_int(1, t2));
        const bool ads = rng.bernoulli(0.5);
        const auto t = random_toy(rng, n_subch, rri, rng.uniform_int(1, 40), t2, ads);
        const auto b = build(t);
        for (const Projection proj : {Projection::AllObservations, Projection::MostRecent}) {
            const SelectionParams p{t1, t2, 1, proj};
            const auto set = candidate_resources(b.map, t.latest, rri, ads ? &b.registry : nullptr, p);
            ASSERT_EQ(set.members, brute_force(t, t.latest, t1, t2, proj, ads)) << "trial " << trial;
            for (const auto& c : set.members) {
                ASSERT_GE(c.subframe, t.latest + t1);
                ASSERT_LE(c.subframe, t.latest + t2);
            }
            ++checked;
        }
    }
    EXPECT_EQ(checked, 6000);
}

TEST(CandidateResourcesProperty, MatchesBruteForceAcrossWindowEviction)
{
    Rng rng(99);
    for (int trial = 0; trial < 20; ++trial) {
        const auto t = random_toy(rng, 4, 100, 1500 + rng.uniform_int(0, 200), 100, true);
        const auto b = build(t);
        for (const Projection proj : {Projection::AllObservations, Projection::MostRecent}) {
            const SelectionParams p{1, 100, 1, proj};
            const auto set = candidate_resources(b.map, t.latest, 100, &b.registry, p);
            ASSERT_EQ(set.members, brute_force(t, t.latest, 1, 100, proj, true)) << trial;
        }
    }
}

TEST(CandidateResources, LookaheadClaimsRemoveExactCoord)
{
    SensingMap map(kOwner, 2);
    LookaheadRegistry reg(kOwner);
    map.observe_subframe(0, {}, false);
    const std::vector<HeardLookahead> heard = {{{0, 1, 1}, 4}};
    reg.receive(0, heard, false);
    const SelectionParams p{1, 1, 1};
    const auto set = candidate_resources(map, 0, 100, &reg, p);
    ASSERT_EQ(set.size(), 1u);
    EXPECT_EQ(set.members[0], (ResourceCoord{1, 1, 1}));
}

TEST(LookaheadRegistry, EntriesArePurgedOnceTheirTargetPasses)
{
    LookaheadRegistry reg(kOwner);
    const std::vector<HeardLookahead> heard = {{{2, 1, 50}, 1}, {{3, 1, 80}, 2}};
    reg.receive(10, heard, false);
    EXPECT_EQ(reg.entries().size(), 2u);
    reg.receive(50, {}, false);
    EXPECT_EQ(reg.entries().size(), 2u);
    reg.receive(51, {}, false);
    ASSERT_EQ(reg.entries().size(), 1u);
    EXPECT_EQ(reg.entries()[0].advertiser, 2u);
    for (Subframe s = 52; s <= 200; ++s) {
        reg.receive(s, {}, false);
        for (const auto& e : reg.entries()) ASSERT_GE(e.lookahead.subframe, s);
    }
    EXPECT_TRUE(reg.entries().empty());
}

TEST(LookaheadRegistry, AdvertisementHeardWhileTransmittingIsLost)
{
    LookaheadRegistry reg(kOwner);
    const std::vector<HeardLookahead> heard = {{{2, 1, 50}, 1}};
    reg.receive(10, heard, true);
    EXPECT_TRUE(reg.entries().empty());
    EXPECT_FALSE(reg.claimed({50, 2, 1}));
    reg.receive(11, heard, false);
    ASSERT_EQ(reg.entries().size(), 1u);
    EXPECT_EQ(reg.entries()[0].received_at, 11);
}

TEST(LookaheadRegistry, OwnAdvertisementsAreNotHeld)
{
    LookaheadRegistry reg(kOwner);
    const std::vector<HeardLookahead> heard = {{{2, 1, 50}, kOwner}};
    reg.receive(10, heard, false);
    EXPECT_TRUE(reg.entries().empty());
}

TEST(LookaheadRegistry, NewerAdvertisementSupersedesOlderForListeners)
{
    auto board = std::make_shared<LookaheadBoard>();
    LookaheadRegistry heard_both(1, board, 0);
    LookaheadRegistry missed_second(2, board, 0);
    const std::vector<HeardLookahead> first = {{{4, 1, 300}, 9}};
    const std::vector<HeardLookahead> second = {{{6, 1, 320}, 9}};
    board->publish(100, first);
    missed_second.mark_own_transmission(200);
    board->publish(200, second);
    EXPECT_FALSE(heard_both.claimed({300, 4, 1}));
    EXPECT_TRUE(heard_both.claimed({320, 6, 1}));
    EXPECT_TRUE(missed_second.claimed({300, 4, 1}));
    EXPECT_FALSE(missed_second.claimed({320, 6, 1}));
}

TEST(ChooseResource, SingleCandidateIsAlwaysChosen)
{
    CandidateSet set;
    set.anchor = 0;
    set.members = {{42, 3, 1}};
    Rng rng(1);
    for (int i = 0; i < 100; ++i) EXPECT_EQ(choose_resource(set, {}, 25, rng), set.members[0]);
}

TEST(ChooseResource, EmptySetFallsBackToWholeWindow)
{
    CandidateSet set;
    set.anchor = 1000;
    Rng rng(5);
    std::set<Subframe> subframes;
    for (int i = 0; i < 20000; ++i) {
        const auto c = choose_resource(set, {}, 25, rng);
        ASSERT_GE(c.subframe, 1001);
        ASSERT_LE(c.subframe, 1100);
        ASSERT_GE(c.subchannel, 0);
        ASSERT_LT(c.subchannel, 25);
        subframes.insert(c.subframe);
    }
    EXPECT_EQ(subframes.size(), 100u);
}

TEST(SelectResource, UniformOverBruteForceSetOnToyWindow)
{
    ToyScenario t;
    t.n_subch = 3;
    t.rri = 5;
    t.first = 0;
    t.latest = 9;
    t.busy.insert({7, 1});
    const auto b = build(t);
    SchedulerParams p;
    p.num_subchannels = 3;
    p.t1 = 1;
    p.t2 = 5;
    const auto legal = brute_force(t, 9, 1, 5, p.projection, false);
    ASSERT_EQ(legal.size(), 14u);

    UeState ue{.id = kOwner, .sensing = b.map};
    ue.rri = t.rri;
    Rng rng(77);
    std::map<std::pair<Subframe, int>, int> hits;
    const int draws = 70000;
    for (int i = 0; i < draws; ++i) {
        const auto c = select_resource(ue, 9, p, rng);
        ASSERT_NE(std::find(legal.begin(), legal.end(), c), legal.end());
        ++hits[{c.subframe, c.subchannel}];
    }
    ASSERT_EQ(hits.size(), legal.size());
    const double expected = static_cast<double>(draws) / static_cast<double>(legal.size());
    double chi2 = 0.0;
    for (const auto& [_, k] : hits) chi2 += (k - expected) * (k - expected) / expected;
    const boost::math::chi_squared dist(static_cast<double>(legal.size() - 1));
    EXPECT_LT(chi2, boost::math::quantile(dist, 0.999));
}
