/*
    Licensed under the Apache License, Version 2.0 (the "License");
    you may not use this file except in compliance with the License.
    You may obtain a copy of the License at

        https://www.apache.org/licenses/LICENSE-2.0

    Unless required by applicable law or agreed to in writing, software
    distributed under the License is distributed on an "AS IS" BASIS,
    WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
    See the License for the specific language governing permissions and
    limitations under the License.
*/

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "pilot/analytics.hpp"
#include "pilot/error.hpp"
#include "pilot/session.hpp"
#include "pilot/trace.hpp"
#include "support.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <random>

using namespace pilot;
using pilot::test::TempDir;

namespace {

SessionConfig config(const TempDir& dir, std::uint64_t n, std::uint32_t cores, std::uint32_t nodes,
                     std::uint32_t cpn, double payload)
{
    SessionConfig c;
    c.session_id = "s";
    c.output_dir = dir.path();
    c.pilot.node_count = nodes;
    c.pilot.cores_per_node = cpn;
    c.pilot.backend = Backend::Virtual;
    c.pilot.latency = LatencyModel::zero();
    WorkloadSpec w;
    w.count = n;
    w.cores = cores;
    w.payload.target_duration = payload;
    c.units = make_workload(w);
    return c;
}

Trace run(const SessionConfig& c)
{
    return Trace::load(run_session(c).trace);
}

// Busy core-time by sweeping hold intervals over the TTX window; idle is
// whatever is left. Written against raw trace rows.
struct SweepOracle {
    double busy = 0.0;
    double running = 0.0;
    double window = 0.0;
};

SweepOracle sweep(const std::vector<ProfileEvent>& rows, double pilot_cores)
{
    std::map<std::string, std::map<std::string, double>> t;
    std::map<std::string, double> cores;
    for (const auto& r : rows) {
        if (r.unit.empty())
            continue;
        t[r.unit][r.event] = r.time;
        if (r.event == "sched_done")
            cores[r.unit] = static_cast<double>(parse_slots(r.info).size());
    }
    double start = INFINITY, end = -INFINITY;
    for (auto& [u, ev] : t) {
        if (ev.count("db_pull"))
            start = std::min(start, ev["db_pull"]);
        if (ev.count("spawn_return"))
            end = std::max(end, ev["spawn_return"]);
    }
    // Piecewise-constant integration over every event boundary.
    std::vector<double> cuts{start, end};
    for (auto& [u, ev] : t)
        for (auto& [name, time] : ev)
            if (time > start && time < end)
                cuts.push_back(time);
    std::sort(cuts.begin(), cuts.end());
    SweepOracle o;
    o.window = pilot_cores * (end - start);
    for (std::size_t i = 0; i + 1 < cuts.size(); ++i) {
        const double mid = 0.5 * (cuts[i] + cuts[i + 1]), dt = cuts[i + 1] - cuts[i];
        for (auto& [u, ev] : t) {
            if (!ev.count("sched_done"))
                continue;
            const double held_to = ev.count("unsched_done") ? ev["unsched_done"] : INFINITY;
            if (ev["sched_done"] <= mid && mid < held_to)
                o.busy += cores[u] * dt;
            if (ev.count("payload_start") && ev["payload_start"] <= mid && mid < ev["payload_stop"])
                o.running += cores[u] * dt;
        }
    }
    return o;
}

std::vector<ProfileEvent> unit_rows(const std::string& unit, std::vector<std::pair<std::string, double>> evs,
                                    const std::string& slots = "0:0")
{
    std::vector<ProfileEvent> rows;
    for (auto& [name, time] : evs)
        rows.push_back({time, name, "x", 0, unit, "p", name == "sched_done" ? slots : ""});
    return rows;
}

} // namespace

TEST_CASE("ttx: one generation, zero latency")
{
    TempDir dir("an");
    auto t = run(config(dir, 8, 4, 2, 16, 3.0));
    auto r = compute_ttx(t);
    CHECK(r.ttx == doctest::Approx(3.0));
    CHECK(r.ideal_ttx == doctest::Approx(3.0));
    CHECK(r.generations == 1);
    CHECK(t.pilot_cores() == 32);
    CHECK(t.scheduler() == "continuous");
}

TEST_CASE("ttx: eight generations, zero latency")
{
    TempDir dir("an");
    auto r = compute_ttx(run(config(dir, 64, 4, 2, 16, 3.0)));
    CHECK(r.generations == 8);
    CHECK(r.ttx == doctest::Approx(24.0));
    CHECK(r.overhead_fraction() == doctest::Approx(0.0));
}

TEST_CASE("ttx: never below the ideal with jitter and latencies")
{
    std::mt19937_64 rng(3);
    for (int i = 0; i < 10; ++i) {
        TempDir dir("an");
        auto c = config(dir, 20 + rng() % 80, 4, 2, 16, 5.0);
        for (auto& u : c.units)
            u.payload.jitter_sigma = 0.5;
        c.pilot.latency = LatencyModel::titan().scaled(0.01);
        c.costs = ComponentCosts::titan();
        c.seed = rng();
        auto r = compute_ttx(run(c));
        CHECK(r.ttx >= r.ideal_ttx);
        CHECK(r.ttx >= r.max_payload);
    }
}

TEST_CASE("ttx: incomplete traces")
{
    CHECK_THROWS_AS(compute_ttx(Trace::from_events({})), IncompleteTrace);
    auto rows = unit_rows("a", {{"db_pull", 0.0}, {"sched_start", 0.0}, {"sched_done", 0.1}});
    CHECK_THROWS_AS(compute_ttx(Trace::from_events(rows)), IncompleteTrace);
}

TEST_CASE("generations follow slot reuse")
{
    // b reuses a's slot, c reuses b's, d runs alongside on another slot.
    std::vector<ProfileEvent> rows;
    auto add = [&](const std::string& u, double s, double e, const std::string& slot) {
        auto r = unit_rows(u,
                           {{"db_pull", 0.0}, {"sched_start", s}, {"sched_done", s},
                            {"payload_start", s}, {"payload_stop", e}, {"spawn_return", e},
                            {"state_done", e}, {"unsched_done", e}},
                           slot);
        rows.insert(rows.end(), r.begin(), r.end());
    };
    add("a", 0, 1, "0:0");
    add("d", 0, 1, "0:1");
    add("b", 1, 2, "0:0");
    add("c", 2, 3, "0:0");
    auto t = Trace::from_events(rows);
    auto g = unit_generations(t);
    std::map<std::string, std::uint64_t> by;
    for (std::size_t i = 0; i < t.units().size(); ++i)
        by[t.units()[i].unit_id] = g[i];
    CHECK(by["a"] == 1);
    CHECK(by["d"] == 1);
    CHECK(by["b"] == 2);
    CHECK(by["c"] == 3);
    CHECK(compute_ttx(t).slot_depth == 3);
    // Four units, never more than two holding slots.
    CHECK(peak_holders(t) == 2);
    CHECK(compute_ttx(t).generations == 2);
}

TEST_CASE("peak holders: release and reacquire at the same instant")
{
    std::vector<ProfileEvent> rows;
    auto add = [&](const std::string& u, double s, double e, const std::string& slot) {
        auto r = unit_rows(u,
                           {{"db_pull", 0.0}, {"sched_start", s}, {"sched_done", s},
                            {"payload_start", s}, {"payload_stop", e}, {"spawn_return", e},
                            {"state_done", e}, {"unsched_done", e}},
                           slot);
        rows.insert(rows.end(), r.begin(), r.end());
    };
    for (int i = 0; i < 5; ++i)
        add("u" + std::to_string(i), i, i + 1, "0:0");
    auto t = Trace::from_events(rows);
    CHECK(peak_holders(t) == 1);
    CHECK(compute_ttx(t).generations == 5);
    CHECK(compute_ttx(t).slot_depth == 5);
}

TEST_CASE("utilization: single generation filling the pilot")
{
    TempDir dir("an");
    auto u = compute_utilization(run(config(dir, 8, 4, 2, 16, 3.0)));
    CHECK(u.workload_pct == doctest::Approx(100.0));
    CHECK(u.idle_pct == doctest::Approx(0.0).epsilon(1e-9));
}

TEST_CASE("utilization: half-filled pilot leaves at least half idle")
{
    TempDir dir("an");
    auto u = compute_utilization(run(config(dir, 4, 4, 2, 16, 3.0)));
    CHECK(u.idle_pct >= 50.0 - 1e-9);
}

TEST_CASE("utilization: more generations dilute overhead and idle")
{
    TempDir a("an"), b("an");
    auto one = config(a, 8, 4, 2, 16, 10.0);
    one.pilot.latency = LatencyModel::titan().scaled(0.05);
    auto many = config(b, 64, 4, 2, 16, 10.0);
    many.pilot.latency = one.pilot.latency;
    auto u1 = compute_utilization(run(one));
    auto u8 = compute_utilization(run(many));
    CHECK(u8.idle_pct + u8.overhead_pct < u1.idle_pct + u1.overhead_pct);
    CHECK(u8.idle_pct < u1.idle_pct);
}

TEST_CASE("utilization: matches a sweep of held and running cores")
{
    std::mt19937_64 rng(11);
    for (int i = 0; i < 8; ++i) {
        TempDir dir("an");
        auto c = config(dir, 10 + rng() % 50, 1 + rng() % 8, 2, 8, 4.0);
        for (auto& u : c.units)
            u.payload.jitter_sigma = 1.0;
        c.pilot.latency = LatencyModel::titan().scaled(0.02);
        c.costs = ComponentCosts::titan();
        c.seed = rng();
        auto t = run(c);
        auto u = compute_utilization(t);
        auto o = sweep(t.events(), 16.0);
        CHECK(u.total_core_s == doctest::Approx(o.window));
        CHECK(u.workload_core_s == doctest::Approx(o.running));
        CHECK(u.workload_core_s + u.overhead_core_s == doctest::Approx(o.busy));
        CHECK(u.workload_pct + u.overhead_pct + u.idle_pct == doctest::Approx(100.0).epsilon(1e-3));
    }
}

TEST_CASE("utilization: over-committed trace raises NegativeIdle")
{
    // Two units claim the same single core at the same time.
    std::vector<ProfileEvent> rows;
    for (const char* id : {"a", "b"}) {
        auto r = unit_rows(id, {{"db_pull", 0.0}, {"sched_done", 0.0}, {"payload_start", 0.0},
                                {"payload_stop", 1.0}, {"spawn_return", 1.0}, {"state_done", 1.0}});
        rows.insert(rows.end(), r.begin(), r.end());
    }
    CHECK_THROWS_AS(compute_utilization(Trace::from_events(rows), 1), NegativeIdle);
}

TEST_CASE("concurrency: executing plateau and integral identity")
{
    TempDir dir("an");
    auto c = config(dir, 8, 4, 2, 16, 3.0);
    auto t = run(c);
    auto s = concurrency_series(t, "payload_start", "payload_stop");
    CHECK(peak(s) == 8);
    CHECK(s.back().second == 0);
    CHECK(integrate(s) == doctest::Approx(8 * 3.0));
}

TEST_CASE("concurrency: integral equals summed payload durations")
{
    TempDir dir("an");
    auto c = config(dir, 77, 3, 3, 8, 6.0);
    for (auto& u : c.units)
        u.payload.jitter_sigma = 2.0;
    c.pilot.latency = LatencyModel::titan().scaled(0.03);
    c.seed = 5;
    auto r = run_session(c);
    double sum = 0.0;
    for (const auto& u : r.units)
        sum += u.payload_duration;
    auto t = Trace::load(r.trace);
    auto s = concurrency_series(t, "payload_start", "payload_stop");
    CHECK(integrate(s) == doctest::Approx(sum).epsilon(1e-6));
    CHECK(peak(s) <= 6);
}

TEST_CASE("concurrency: unknown events")
{
    TempDir dir("an");
    auto t = run(config(dir, 2, 1, 1, 2, 1.0));
    CHECK_THROWS_AS(concurrency_series(t, "payload_start", "nope"), UnknownEvent);
    CHECK_THROWS_AS(interval_named("nope"), UnknownEvent);
    CHECK(interval_named("executing").start_event == "payload_start");
}

TEST_CASE("per-event stats: prepare latency median is recovered")
{
    TempDir dir("an");
    auto c = config(dir, 2000, 1, 125, 16, 10.0);
    c.pilot.latency = LatencyModel::titan();
    c.seed = 17;
    auto s = per_event_stats(run(c), "exec_queued", "payload_start");
    CHECK(s.count == 2000);
    CHECK(s.median == doctest::Approx(37.0).epsilon(0.03));
    const double sigma = LatencyModel::titan().prepare.sigma;
    CHECK(s.mean == doctest::Approx(37.0 * std::exp(sigma * sigma / 2)).epsilon(0.03));
}

TEST_CASE("per-event stats: zero latency run has no non-payload time")
{
    TempDir dir("an");
    auto t = run(config(dir, 16, 2, 2, 16, 2.0));
    for (const auto& [from, to] : standard_event_pairs()) {
        auto s = per_event_stats(t, from, to);
        if (from == "payload_start")
            CHECK(s.mean == doctest::Approx(2.0));
        else
            CHECK(s.max == doctest::Approx(0.0));
    }
}

TEST_CASE("per-event stats: equal a direct scan of the rows")
{
    TempDir dir("an");
    auto c = config(dir, 120, 2, 2, 8, 3.0);
    c.pilot.latency = LatencyModel::titan().scaled(0.1);
    c.seed = 23;
    auto t = run(c);
    std::map<std::string, double> from, to;
    for (const auto& e : t.events()) {
        if (e.event == "payload_stop")
            from[e.unit] = e.time;
        if (e.event == "spawn_return")
            to[e.unit] = e.time;
    }
    std::vector<double> d;
    for (auto& [u, a] : from)
        d.push_back(to.at(u) - a);
    double mean = 0.0;
    for (double x : d)
        mean += x;
    mean /= double(d.size());
    double var = 0.0;
    for (double x : d)
        var += (x - mean) * (x - mean);
    var /= double(d.size() - 1);
    std::sort(d.begin(), d.end());
    const double median = 0.5 * (d[59] + d[60]);

    auto s = per_event_stats(t, "payload_stop", "spawn_return");
    CHECK(s.count == 120);
    CHECK(s.mean == doctest::Approx(mean));
    CHECK(s.std == doctest::Approx(std::sqrt(var)));
    CHECK(s.median == doctest::Approx(median));
    CHECK(s.min == doctest::Approx(d.front()));
    CHECK(s.max == doctest::Approx(d.back()));
}

TEST_CASE("per-event stats: errors")
{
    auto rows = unit_rows("a", {{"db_pull", 0.0}, {"state_canceled", 1.0}});
    auto t = Trace::from_events(rows);
    CHECK_THROWS_AS(per_event_stats(t, "db_pull", "sched_done"), MissingEvents);
    CHECK_THROWS_AS(per_event_stats(t, "db_pull", "bogus"), UnknownEvent);
}

TEST_CASE("summarize quantiles")
{
    auto s = summarize({5, 1, 4, 2, 3});
    CHECK(s.median == 3.0);
    CHECK(s.p95 == doctest::Approx(4.8));
    CHECK(s.mean == 3.0);
    CHECK(s.std == doctest::Approx(std::sqrt(2.5)));
}

TEST_CASE("throughput: 100 units over 10 s")
{
    std::vector<ProfileEvent> rows;
    for (int i = 0; i < 100; ++i)
        rows.push_back({10.0 * i / 99.0, "sched_done", "scheduler", 0, "u" + std::to_string(i), "p", "0:0"});
    CHECK(scheduler_throughput(Trace::from_events(rows)) == doctest::Approx(10.0));
}

TEST_CASE("throughput: a single unit is too few")
{
    auto rows = unit_rows("a", {{"sched_done", 1.0}});
    CHECK_THROWS_AS(scheduler_throughput(Trace::from_events(rows)), TooFewEvents);
}

TEST_CASE("throughput: virtual scheduler costs give the closed-form rate")
{
    TempDir a("an"), b("an");
    const std::uint64_t n = 1024;
    // Payloads outlast the placement phase, so no release interleaves.
    auto c = config(a, n, 4, 256, 16, 1000.0);
    c.costs = ComponentCosts::titan();
    auto h = c;
    h.output_dir = b.path();
    h.scheduler = SchedulerKind::HomogeneousLookup;

    // Unit j (0-based) is placed by a first-fit scan over j/4 + 1 nodes; the
    // span runs from the first placement to the last.
    double span = 0.0;
    for (std::uint64_t j = 1; j < n; ++j)
        span += c.costs.sched_base + c.costs.sched_probe * double(j / 4 + 1);
    CHECK(scheduler_throughput(run(c)) == doctest::Approx(double(n) / span));
    CHECK(scheduler_throughput(run(h)) ==
          doctest::Approx(double(n) / (double(n - 1) * c.costs.lookup)));
}

TEST_CASE("canceled sessions still analyze")
{
    TempDir dir("an");
    auto c = config(dir, 8, 4, 1, 16, 3.0);
    c.pilot.walltime = 4.0;
    auto t = run(c);
    auto r = compute_ttx(t);
    CHECK(r.ttx == doctest::Approx(4.0));
    auto u = compute_utilization(t);
    CHECK(u.workload_pct + u.overhead_pct + u.idle_pct == doctest::Approx(100.0));
}

TEST_CASE("report writers produce tables and plots")
{
    TempDir dir("an");
    auto c = config(dir, 32, 4, 2, 16, 2.0);
    c.pilot.latency = LatencyModel::titan().scaled(0.01);
    c.costs = ComponentCosts::titan();
    auto r = run_session(c);
    auto t = Trace::load(r.trace);
    const auto out = dir.path() / "out";
    std::vector<std::filesystem::path> files;
    for (auto f : {write_ttx_report, write_ru_report, write_concurrency_report,
                   write_events_report, write_throughput_report})
        for (auto& p : f(t, out))
            files.push_back(p);
    for (auto& p : write_fig4({r.trace, r.trace}, out))
        files.push_back(p);
    for (auto& p : write_fig5(r.trace, out))
        files.push_back(p);
    for (auto& p : write_fig6(r.trace, out))
        files.push_back(p);
    for (auto& p : write_fig8({r.trace}, out))
        files.push_back(p);
    CHECK(files.size() == 15);
    for (auto& p : files) {
        CHECK_MESSAGE(std::filesystem::file_size(p) > 0, p.string());
        if (p.extension() == ".svg") {
            std::ifstream in(p);
            std::string head;
            std::getline(in, head);
            CHECK(head.rfind("<svg", 0) == 0);
        }
    }

    std::ifstream ttx(out / "ttx.csv");
    std::string header, row;
    std::getline(ttx, header);
    std::getline(ttx, row);
    CHECK(header.rfind("ttx,ideal_ttx,generations", 0) == 0);
    CHECK(std::stod(row) == doctest::Approx(compute_ttx(t).ttx).epsilon(1e-5));
}

TEST_CASE("build_report bundles every metric")
{
    TempDir dir("an");
    auto t = run(config(dir, 16, 4, 2, 16, 2.0));
    auto rep = build_report(t);
    CHECK(rep.ttx.generations == 2);
    CHECK(rep.concurrency.size() == 4);
    CHECK(rep.per_event_stats.count("payload_start->payload_stop") == 1);
    CHECK(rep.throughput.has_value());
}
