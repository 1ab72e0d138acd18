#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include <boost/math/distributions/students_t.hpp>

#include "spsla/grid.hpp"
#include "spsla/lookahead.hpp"
#include "spsla/rng.hpp"
#include "spsla/sensing.hpp"
#include "spsla/sps.hpp"

namespace spsla {

inline constexpr int kSubframesPerSecond = 1000;

/// How the population present at t = 0 is laid on the first RRI.
enum class InitialPlacement {
    /// Every UE draws its coordinate on its own; clashes are possible.
    Independent,
    /// UEs take distinct cells, as if each had sensed before the start.
    Distinct,
};

/// A full experiment description. An otherwise empty config carries the
/// default simulation parameters (25 subchannels, RRI 100 ms, window [1, 100],
/// RC in [5, 15], RC_LA 1, probResourceKeep 0, 100 s, 10 runs).
struct ScenarioConfig {
    Scheduler scheduler = Scheduler::Sps;
    int num_ues = 0;
    int num_subchannels = 25;
    int rri = 100;
    int t1 = 1;
    int t2 = 100;
    int rc_la = 1;
    double prob_keep = 0.0;
    /// Fraction of the population replaced every simulated second.
    double churn = 0.0;
    int duration_s = 100;
    std::uint64_t seed = 1;
    int runs = 10;
    int warmup_s = 0;
    Projection projection = Projection::MostRecent;
    ClaimScope claims = ClaimScope::FirstPacket;
    InitialPlacement placement = InitialPlacement::Distinct;
    /// SPS/LA: act on received lookaheads (off only for ablation studies).
    bool lookaheads = true;
    /// Keep every resource decision in RunMetrics::decisions.
    bool trace_decisions = false;

    SchedulerParams scheduler_params() const
    {
        SchedulerParams p;
        p.num_subchannels = num_subchannels;
        p.rri = rri;
        p.t1 = t1;
        p.t2 = t2;
        p.rc_la = rc_la;
        p.prob_keep = prob_keep;
        p.projection = projection;
        p.claims = claims;
        p.lookaheads = lookaheads;
        return p;
    }

    double cbr() const noexcept
    {
        return static_cast<double>(num_ues) / (static_cast<double>(num_subchannels) * rri);
    }

    void validate() const
    {
        scheduler_params().validate();
        if (num_ues < 0) throw ConfigError("number of UEs must be >= 0");
        if (duration_s < 1) throw ConfigError("duration must be >= 1 s");
        if (runs < 1) throw ConfigError("runs must be >= 1");
        if (warmup_s < 0 || warmup_s >= duration_s) throw ConfigError("warm-up must be in [0, duration)");
        if (!(churn >= 0.0 && churn <= 1.0)) throw ConfigError("churn rate must be a fraction in [0, 1]");
        const auto capacity = static_cast<std::int64_t>(num_subchannels) * rri;
        if (num_ues > capacity) {
            throw CapacityError(std::to_string(num_ues) + " UEs exceed the grid capacity of " +
                                std::to_string(capacity) + " (subchannels x RRI)");
        }
    }
};

/// UE count that loads the grid to `cbr` (a fraction) at one packet per RRI.
inline int ues_for_cbr(double cbr, int num_subchannels = 25, int rri = 100)
{
    return static_cast<int>(std::lround(cbr * num_subchannels * rri));
}

struct DecisionRecord {
    UeId ue = 0;
    Subframe at = 0;
    DecisionKind kind = DecisionKind::Initial;
    ResourceCoord coord;
};

struct SeriesPoint {
    int t_seconds = 0;
    double collision_probability = 0.0;
};

struct RunMetrics {
    std::uint64_t seed = 0;
    /// Cumulative collision probability sampled at every second after warm-up.
    std::vector<SeriesPoint> series;
    double final_collision_probability = 0.0;
    double mean_cbr = 0.0;
    std::int64_t collided_resources = 0;
    std::int64_t total_resources = 0;
    std::vector<DecisionRecord> decisions;
};

inline std::int64_t churn_count(double rate, std::size_t population)
{
    return std::llround(rate * static_cast<double>(population));
}

struct ChurnResult {
    std::vector<UeId> left;
    std::vector<UeId> joined;
};

/// Replaces round(rate * |population|) uniformly chosen UEs with fresh ones
/// produced by `spawn`. The population stays sorted by id as long as
/// `spawn` hands out increasing ids.
inline ChurnResult churn_step(std::vector<UeState>& population, double rate, Subframe now, Rng& rng,
                              const std::function<UeState(Subframe)>& spawn)
{
    ChurnResult out;
    const auto k = static_cast<std::size_t>(churn_count(rate, population.size()));
    if (k == 0) return out;
    std::vector<std::size_t> idx(population.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    for (std::size_t i = 0; i < k; ++i) {
        const auto j = i + rng.index(idx.size() - i);
        std::swap(idx[i], idx[j]);
    }
    std::vector<char> leaving(population.size(), 0);
    for (std::size_t i = 0; i < k; ++i) leaving[idx[i]] = 1;
    std::vector<UeState> kept;
    kept.reserve(population.size());
    for (std::size_t i = 0; i < population.size(); ++i) {
        if (leaving[i]) {
            out.left.push_back(population[i].id);
        } else {
            kept.push_back(std::move(population[i]));
        }
    }
    population = std::move(kept);
    for (std::size_t i = 0; i < k; ++i) {
        population.push_back(spawn(now));
        out.joined.push_back(population.back().id);
    }
    return out;
}

class Simulation;

/// Hook for instrumentation; called once per subframe after the subframe's
/// packets are on the grid and lookaheads were delivered.
class RunObserver {
public:
    virtual ~RunObserver() = default;
    virtual void on_subframe(Subframe sf, std::span<const TxRecord> packets, const Simulation& sim) = 0;
};

/// One simulation run: a population of UEs driven subframe by subframe over
/// a shared grid. Single-threaded and fully determined by the config.
class Simulation {
public:
    explicit Simulation(ScenarioConfig config)
        : config_(std::move(config)),
          params_(config_.scheduler_params()),
          rng_(config_.seed),
          log_(config_.num_subchannels),
          board_(config_.scheduler == Scheduler::SpsLa ? std::make_shared<LookaheadBoard>() : nullptr),
          calendar_(kCalendarSize)
    {
        config_.validate();
        ues_.reserve(static_cast<std::size_t>(config_.num_ues));
        for (int i = 0; i < config_.num_ues; ++i) add_ue(0);
        if (config_.placement == InitialPlacement::Distinct) spread_initial();
        metrics_.seed = config_.seed;
    }

    const ScenarioConfig& config() const noexcept { return config_; }
    const SchedulerParams& params() const noexcept { return params_; }
    const TransmissionLog& log() const noexcept { return log_; }
    const std::vector<UeState>& ues() const noexcept { return ues_; }
    /// Next subframe to be simulated.
    Subframe now() const noexcept { return now_; }
    bool finished() const noexcept { return now_ >= end(); }

    const UeState* find(UeId id) const
    {
        auto it = std::lower_bound(ues_.begin(), ues_.end(), id, [](const UeState& u, UeId v) { return u.id < v; });
        return it != ues_.end() && it->id == id ? &*it : nullptr;
    }

    void set_observer(RunObserver* observer) noexcept { observer_ = observer; }

    void step()
    {
        const Subframe sf = now_;
        packets_.clear();
        heard_.clear();

        auto& due = calendar_[slot(sf)];
        std::sort(due.begin(), due.end());
        due.erase(std::unique(due.begin(), due.end()), due.end());
        std::vector<UeId> batch;
        batch.swap(due);
        for (UeId id : batch) {
            UeState* ue = find_mut(id);
            if (ue == nullptr || ue->tx_subframe != sf) continue;
            transmit(*ue, sf);
        }

        log_.begin_subframe(sf);
        for (const auto& p : packets_) log_.record_transmission(p.coord, p.ue);

        if (board_) deliver_lookaheads(sf);
        if (observer_ != nullptr) observer_->on_subframe(sf, packets_, *this);

        now_ = sf + 1;
        if (now_ % kSubframesPerSecond == 0) second_boundary();
    }

    void run()
    {
        while (!finished()) step();
    }

    RunMetrics metrics() const
    {
        RunMetrics m = metrics_;
        const auto elapsed = log_.subframes_elapsed() - base_elapsed_;
        m.collided_resources = log_.collided_resource_count() - base_collided_;
        m.total_resources = elapsed * config_.num_subchannels;
        m.final_collision_probability =
            elapsed > 0 ? static_cast<double>(m.collided_resources) / static_cast<double>(m.total_resources) : 0.0;
        m.mean_cbr = cbr_samples_ > 0 ? cbr_sum_ / cbr_samples_ : 0.0;
        return m;
    }

private:
    static constexpr std::size_t kCalendarSize = 4096;

    std::size_t slot(Subframe sf) const noexcept { return static_cast<std::size_t>(sf) % kCalendarSize; }
    Subframe end() const noexcept { return static_cast<Subframe>(config_.duration_s) * kSubframesPerSecond; }

    UeState* find_mut(UeId id) { return const_cast<UeState*>(find(id)); }

    UeState spawn(Subframe now)
    {
        auto ue = make_ue(next_id_++, params_, now, log_.shared_occupancy(), board_, rng_);
        record_decision(ue, now);
        return ue;
    }

    void add_ue(Subframe now)
    {
        ues_.push_back(spawn(now));
        schedule(ues_.back(), now);
    }

    // Reassigns the initial UEs to distinct cells of subframes [1, RRI].
    void spread_initial()
    {
        const auto cells = static_cast<std::size_t>(config_.num_subchannels) * config_.rri;
        std::vector<std::size_t> pick(cells);
        for (std::size_t i = 0; i < cells; ++i) pick[i] = i;
        for (auto& c : calendar_) c.clear();
        for (std::size_t i = 0; i < ues_.size(); ++i) {
            std::swap(pick[i], pick[i + rng_.index(cells - i)]);
            ues_[i].tx_subframe = 1 + static_cast<Subframe>(pick[i] / config_.num_subchannels);
            ues_[i].tx_subch = static_cast<int>(pick[i] % config_.num_subchannels);
            schedule(ues_[i], 0);
        }
    }

    void schedule(const UeState& ue, Subframe now)
    {
        if (ue.tx_subframe <= now || ue.tx_subframe - now >= static_cast<Subframe>(kCalendarSize)) {
            throw std::logic_error("next transmission outside the scheduling horizon");
        }
        calendar_[slot(ue.tx_subframe)].push_back(ue.id);
    }

    void record_decision(const UeState& ue, Subframe at)
    {
        if (config_.trace_decisions) metrics_.decisions.push_back({ue.id, at, ue.decision, ue.next_coord(params_.length)});
    }

    void transmit(UeState& ue, Subframe sf)
    {
        const auto before = ue.plan ? std::optional<Subframe>(ue.plan->lookahead.subframe) : std::nullopt;
        if (config_.scheduler == Scheduler::Sps) {
            const auto sent = sps_step(ue, sf, params_, rng_);
            packets_.push_back({*sent, ue.id});
            if (ue.decided_at == sf) record_decision(ue, sf);
        } else {
            const auto sent = la_step(ue, sf, params_, rng_);
            packets_.push_back({sent->coord, ue.id});
            if (sent->lookahead) heard_.push_back({*sent->lookahead, ue.id});
            if (ue.committed_at == sf) record_decision(ue, sf);
            reindex_plan(ue, before);
        }
        schedule(ue, sf);
    }

    void reindex_plan(const UeState& ue, std::optional<Subframe> before)
    {
        const auto after = ue.plan ? std::optional<Subframe>(ue.plan->lookahead.subframe) : std::nullopt;
        if (before == after) return;
        if (before) {
            auto& v = planners_[*before];
            v.erase(std::remove(v.begin(), v.end(), ue.id), v.end());
            if (v.empty()) planners_.erase(*before);
        }
        if (after) planners_[*after].push_back(ue.id);
    }

    void deliver_lookaheads(Subframe sf)
    {
        board_->purge(sf);
        board_->publish(sf, heard_);
        if (heard_.empty() || !params_.lookaheads) return;
        // Only UEs whose plan overlaps a heard claim react; for everybody
        // else reception is just the shared board entry.
        std::vector<UeId> affected;
        for (const auto& h : heard_) {
            auto it = planners_.find(h.lookahead.subframe);
            if (it == planners_.end()) continue;
            for (UeId id : it->second) {
                const UeState* ue = find(id);
                if (id == h.advertiser || ue == nullptr || ue->sensing.owner_transmitted(sf)) continue;
                if (ue->plan->lookahead.coord().overlaps(h.lookahead.coord())) affected.push_back(id);
            }
        }
        std::sort(affected.begin(), affected.end());
        affected.erase(std::unique(affected.begin(), affected.end()), affected.end());
        for (UeId id : affected) {
            UeState& ue = *find_mut(id);
            const auto before = std::optional<Subframe>(ue.plan->lookahead.subframe);
            if (receive_lookaheads(ue, sf, heard_, false, params_, rng_)) {
                ue.decision = DecisionKind::Replan;
                if (config_.trace_decisions) {
                    metrics_.decisions.push_back({ue.id, sf, DecisionKind::Replan, ue.plan->lookahead.coord()});
                }
            }
            reindex_plan(ue, before);
        }
    }

    void second_boundary()
    {
        const int second = static_cast<int>(now_ / kSubframesPerSecond);
        if (second == config_.warmup_s) {
            base_elapsed_ = log_.subframes_elapsed();
            base_collided_ = log_.collided_resource_count();
        }
        if (second > config_.warmup_s) {
            const auto elapsed = log_.subframes_elapsed() - base_elapsed_;
            const double p = static_cast<double>(log_.collided_resource_count() - base_collided_) /
                             (static_cast<double>(elapsed) * config_.num_subchannels);
            metrics_.series.push_back({second, p});
            cbr_sum_ += channel_busy_ratio(log_, now_).value;
            ++cbr_samples_;
        }
        if (config_.churn > 0.0 && !finished()) {
            const auto result = churn_step(ues_, config_.churn, now_, rng_, [this](Subframe t) { return spawn(t); });
            for (UeId id : result.left) {
                for (auto it = planners_.begin(); it != planners_.end();) {
                    auto& v = it->second;
                    v.erase(std::remove(v.begin(), v.end(), id), v.end());
                    it = v.empty() ? planners_.erase(it) : std::next(it);
                }
            }
            for (UeId id : result.joined) schedule(*find(id), now_ - 1);
        }
    }

    ScenarioConfig config_;
    SchedulerParams params_;
    Rng rng_;
    TransmissionLog log_;
    std::shared_ptr<LookaheadBoard> board_;
    std::vector<UeState> ues_;
    std::vector<std::vector<UeId>> calendar_;
    std::map<Subframe, std::vector<UeId>> planners_;
    std::vector<TxRecord> packets_;
    std::vector<HeardLookahead> heard_;
    RunObserver* observer_ = nullptr;
    RunMetrics metrics_;
    UeId next_id_ = 0;
    Subframe now_ = 0;
    std::int64_t base_elapsed_ = 0;
    std::int64_t base_collided_ = 0;
    double cbr_sum_ = 0.0;
    int cbr_samples_ = 0;
};

inline RunMetrics run_scenario(const ScenarioConfig& config)
{
    Simulation sim(config);
    sim.run();
    return sim.metrics();
}

struct Aggregate {
    double mean = 0.0;
    double ci95_halfwidth = 0.0;
    std::size_t n = 0;
    std::string warning;
};

/// Sample mean and Student-t 95% confidence half-width.
inline Aggregate aggregate_runs(std::span<const double> values)
{
    if (values.empty()) throw ConfigError("cannot aggregate an empty set of runs");
    Aggregate a;
    a.n = values.size();
    double sum = 0.0;
    for (double v : values) sum += v;
    a.mean = sum / static_cast<double>(a.n);
    if (a.n == 1) {
        a.warning = "single run: confidence interval width reported as 0";
        return a;
    }
    double ss = 0.0;
    for (double v : values) ss += (v - a.mean) * (v - a.mean);
    const double sd = std::sqrt(ss / static_cast<double>(a.n - 1));
    const boost::math::students_t dist(static_cast<double>(a.n - 1));
    a.ci95_halfwidth = boost::math::quantile(dist, 0.975) * sd / std::sqrt(static_cast<double>(a.n));
    return a;
}

inline Aggregate aggregate_runs(std::span<const RunMetrics> runs)
{
    std::vector<double> v;
    v.reserve(runs.size());
    for (const auto& r : runs) v.push_back(r.final_collision_probability);
    return aggregate_runs(std::span<const double>(v));
}

/// Runs `config.runs` independent seeds derived from `config.seed`. Runs
/// may go to up to `jobs` worker threads; results come back in seed order.
inline std::vector<RunMetrics> run_replicas(const ScenarioConfig& config, int jobs = 1)
{
    config.validate();
    std::vector<ScenarioConfig> work;
    for (int r = 0; r < config.runs; ++r) {
        ScenarioConfig c = config;
        c.seed = mix_seed(config.seed, static_cast<std::uint64_t>(r));
        work.push_back(c);
    }
    std::vector<RunMetrics> out(work.size());
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t i = next++; i < work.size(); i = next++) out[i] = run_scenario(work[i]);
    };
    const auto threads = static_cast<std::size_t>(std::clamp(jobs, 1, static_cast<int>(work.size())));
    if (threads <= 1) {
        worker();
    } else {
        std::vector<std::jthread> pool;
        for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(worker);
    }
    return out;
}

enum class SweepAxis { Cbr, ProbKeep, Churn };

inline std::string to_string(SweepAxis a)
{
    switch (a) {
        case SweepAxis::Cbr: return "cbr";
        case SweepAxis::ProbKeep: return "probKeep";
        case SweepAxis::Churn: return "churn";
    }
    return "?";
}

struct SweepPoint {
    ScenarioConfig config;
    double axis_value = 0.0;
    Aggregate summary;
    std::vector<RunMetrics> runs;
};

struct SweepResult {
    SweepAxis axis = SweepAxis::Cbr;
    std::vector<SweepPoint> points;
};

/// Config for one point of a sweep. CBR points are fractions and are mapped
/// to UE counts; the other axes set the parameter directly.
inline ScenarioConfig sweep_config(SweepAxis axis, double value, const ScenarioConfig& base)
{
    ScenarioConfig c = base;
    switch (axis) {
        case SweepAxis::Cbr: c.num_ues = ues_for_cbr(value, c.num_subchannels, c.rri); break;
        case SweepAxis::ProbKeep: c.prob_keep = value; break;
        case SweepAxis::Churn: c.churn = value; break;
    }
    c.validate();
    return c;
}

inline SweepResult sweep(SweepAxis axis, std::span<const double> points, const ScenarioConfig& base,
                         std::span<const Scheduler> schedulers, int jobs = 1)
{
    SweepResult result;
    result.axis = axis;
    for (const Scheduler s : schedulers) {
        for (const double v : points) {
            ScenarioConfig c = base;
            c.scheduler = s;
            SweepPoint pt;
            pt.config = sweep_config(axis, v, c);
            pt.axis_value = v;
            pt.runs = run_replicas(pt.config, jobs);
            pt.summary = aggregate_runs(std::span<const RunMetrics>(pt.runs));
            result.points.push_back(std::move(pt));
        }
    }
    return result;
}

}  // namespace spsla
