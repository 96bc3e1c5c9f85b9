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

#include "oracle.hpp"
#include "pilot/error.hpp"
#include "pilot/profiler.hpp"
#include "pilot/scheduler.hpp"

#include <chrono>
#include <random>
#include <set>

using namespace pilot;
using pilot::test::SlotOracle;

namespace {

UnitDescription ud(const std::string& id, std::uint32_t cores)
{
    UnitDescription u;
    u.unit_id = id;
    u.cores = cores;
    return u;
}

ComputeUnit pending(const std::string& id, std::uint32_t cores)
{
    ComputeUnit u;
    u.desc = ud(id, cores);
    u.transition(UnitState::PendingSchedule, 0.0);
    return u;
}

std::set<Slot> as_set(const std::vector<Slot>& v) { return {v.begin(), v.end()}; }

// Generations of n equal units through a FIFO loop whose units finish in
// waves: everything placed, then everything released.
std::uint64_t loop_generations(Scheduler& s, std::uint64_t n, std::uint32_t cores,
                               std::uint64_t* max_concurrency = nullptr)
{
    SchedulerLoop loop(s, [] { return 0.0; });
    for (std::uint64_t i = 0; i < n; ++i)
        loop.submit(pending("u." + std::to_string(i), cores));
    std::uint64_t gens = 0, done = 0, peak = 0;
    while (done < n) {
        auto step = loop.step();
        if (step.scheduled.empty())
            break;
        ++gens;
        peak = std::max<std::uint64_t>(peak, step.scheduled.size());
        for (auto& u : step.scheduled)
            loop.release(std::move(u));
        done += step.scheduled.size();
    }
    if (max_concurrency)
        *max_concurrency = peak;
    return gens;
}

} // namespace

TEST_CASE("continuous: multi-node unit takes whole consecutive nodes")
{
    ResourceModel m(4, 16);
    auto a = schedule_continuous(ud("a", 32), m);
    REQUIRE(a);
    CHECK(format_slots(a->slots) == "0:0-15;1:0-15");
    CHECK(m.free_cores() == 32);
}

TEST_CASE("continuous: exact fit on a partially busy node")
{
    ResourceModel m(1, 8);
    m.occupy(std::vector<Slot>{{0, 0}, {0, 2}, {0, 4}, {0, 6}});
    auto a = schedule_continuous(ud("a", 4), m);
    REQUIRE(a);
    CHECK(format_slots(a->slots) == "0:1;0:3;0:5;0:7");
    CHECK(m.free_cores() == 0);
}

TEST_CASE("continuous: single-node units never span nodes")
{
    ResourceModel m(2, 4);
    m.occupy(std::vector<Slot>{{0, 0}, {1, 0}});
    const auto before = m;
    std::uint64_t probes = 0;
    CHECK_FALSE(schedule_continuous(ud("a", 4), m, &probes));
    CHECK(probes == 2);
    CHECK(m == before);
}

TEST_CASE("continuous: too large is permanent")
{
    ResourceModel m(2, 4);
    CHECK_THROWS_AS(schedule_continuous(ud("a", 9), m), UnitTooLarge);
}

TEST_CASE("continuous: round trip and double free")
{
    ContinuousScheduler s(ResourceModel(4, 4));
    const auto initial = s.snapshot();
    auto a = s.schedule(ud("a", 6));
    REQUIRE(a);
    s.unschedule(*a);
    CHECK(s.snapshot() == initial);
    CHECK_THROWS_AS(s.unschedule(*a), DoubleFree);
    CHECK(s.snapshot() == initial);
}

TEST_CASE("continuous: 4x4 schedule/unschedule sequence matches the oracle")
{
    ContinuousScheduler s(ResourceModel(4, 4));
    SlotOracle oracle(4, 4);
    std::vector<Allocation> live;
    const std::uint32_t sizes[] = {3, 1, 4, 2, 8, 2, 1, 5, 3, 4, 1, 2};
    int id = 0;
    for (std::uint32_t c : sizes) {
        auto got = s.schedule(ud("u" + std::to_string(id++), c));
        auto want = oracle.schedule(c);
        REQUIRE(got.has_value() == want.has_value());
        if (got) {
            CHECK(as_set(got->slots) == as_set(*want));
            live.push_back(*got);
        }
        CHECK(as_set(s.free_slots()) == oracle.free_slots());
        if (id % 3 == 0 && !live.empty()) {
            s.unschedule(live.front());
            oracle.release(live.front().slots);
            live.erase(live.begin());
            CHECK(as_set(s.free_slots()) == oracle.free_slots());
        }
    }
}

TEST_CASE("continuous: interleaved 100 units conserve slots at every step")
{
    std::mt19937_64 rng(11);
    ContinuousScheduler s(ResourceModel(6, 8));
    std::vector<Allocation> live;
    for (int i = 0; i < 100; ++i) {
        const auto c = static_cast<std::uint32_t>(1 + rng() % 12);
        if (auto a = s.schedule(ud("u" + std::to_string(i), c)))
            live.push_back(*a);
        if (!live.empty() && rng() % 2) {
            const std::size_t k = rng() % live.size();
            s.unschedule(live[k]);
            live.erase(live.begin() + static_cast<long>(k));
        }
        std::uint64_t held = 0;
        std::set<Slot> seen;
        for (const auto& a : live) {
            held += a.slots.size();
            for (auto slot : a.slots)
                CHECK(seen.insert(slot).second);
        }
        CHECK(held + s.free_cores() == s.total_cores());
        CHECK(s.live_allocations() == live.size());
    }
}

TEST_CASE("block free list invariants")
{
    BlockFreeList small(2, 16, 4);
    CHECK(small.total_blocks() == 8);
    CHECK(format_slots(small.slots_of(1)) == "0:4-7");
    BlockFreeList big(4, 16, 32);
    CHECK(big.total_blocks() == 2);
    CHECK(format_slots(big.slots_of(1)) == "2:0-15;3:0-15");
    CHECK_THROWS_AS(BlockFreeList(2, 16, 6), InvalidDescription);
    CHECK_THROWS_AS(BlockFreeList(3, 16, 32), InvalidDescription);

    std::mt19937_64 rng(5);
    BlockFreeList f(4, 8, 4);
    std::vector<std::uint32_t> taken;
    for (int i = 0; i < 200; ++i) {
        if (rng() % 2 || taken.empty()) {
            if (auto b = f.pop())
                taken.push_back(*b);
        } else {
            f.push(taken.back());
            taken.pop_back();
        }
        CHECK(f.free_blocks() * f.block_size() + taken.size() * f.block_size() == f.total_cores());
    }
}

TEST_CASE("homogeneous: pop, mismatch, empty, double free")
{
    HomogeneousScheduler s(4, 16, 32);
    auto a = s.schedule(ud("a", 32));
    REQUIRE(a);
    CHECK(a->slots.size() == 32);
    CHECK(s.freelist().free_blocks() == 1);
    CHECK(s.schedule(ud("b", 32)));
    CHECK_FALSE(s.schedule(ud("c", 32)));
    CHECK_THROWS_AS(s.schedule(ud("d", 16)), BlockSizeMismatch);
    s.unschedule(*a);
    CHECK(s.freelist().free_blocks() == 1);
    CHECK_THROWS_AS(s.unschedule(*a), DoubleFree);
    CHECK(s.last_probes() == 1);
}

TEST_CASE("homogeneous lookup cost does not grow with the pilot")
{
    // Median wall time of schedule+unschedule on pilots 64 to 8192 blocks.
    auto median_ns = [](std::uint32_t nodes) {
        HomogeneousScheduler s(nodes, 16, 16);
        std::vector<double> t;
        const auto unit = ud("u", 16);
        for (int i = 0; i < 2000; ++i) {
            const auto a0 = std::chrono::steady_clock::now();
            auto a = s.schedule(unit);
            const auto a1 = std::chrono::steady_clock::now();
            t.push_back(std::chrono::duration<double, std::nano>(a1 - a0).count());
            s.unschedule(*a);
        }
        std::nth_element(t.begin(), t.begin() + t.size() / 2, t.end());
        return t[t.size() / 2];
    };
    const double lo = median_ns(64), hi = median_ns(8192);
    CHECK(std::max(lo, hi) / std::min(lo, hi) < 2.0);
}

TEST_CASE("loop: one generation when the pilot fits everything")
{
    ContinuousScheduler s(ResourceModel(2, 16));
    SchedulerLoop loop(s, [] { return 0.0; });
    for (int i = 0; i < 8; ++i)
        loop.submit(pending("u" + std::to_string(i), 4));
    auto step = loop.step();
    CHECK(step.scheduled.size() == 8);
    CHECK_FALSE(loop.blocked());
    for (const auto& u : step.scheduled) {
        CHECK(u.state == UnitState::Scheduled);
        CHECK(u.time_of(events::sched_done));
    }
}

TEST_CASE("loop: exactly sized pilot schedules at once")
{
    ContinuousScheduler s(ResourceModel(1, 8));
    SchedulerLoop loop(s, [] { return 0.0; });
    loop.submit(pending("u", 8));
    CHECK(loop.step().scheduled.size() == 1);
}

TEST_CASE("loop: blocked head is never overtaken")
{
    ContinuousScheduler s(ResourceModel(1, 8));
    SchedulerLoop loop(s, [] { return 0.0; });
    loop.submit(pending("a", 6));
    loop.submit(pending("b", 4));
    loop.submit(pending("c", 1));
    auto first = loop.step();
    REQUIRE(first.scheduled.size() == 1);
    CHECK(loop.blocked());
    CHECK(loop.pending() == 2);
    // Two cores are free, enough for c, but b is at the head.
    CHECK(loop.step().scheduled.empty());
    loop.release(std::move(first.scheduled[0]));
    auto second = loop.step();
    REQUIRE(second.finished.size() == 1);
    CHECK(second.finished[0].time_of(events::unsched_done));
    REQUIRE(second.scheduled.size() == 2);
    CHECK(second.scheduled[0].id() == "b");
    CHECK(second.scheduled[1].id() == "c");
}

TEST_CASE("loop: oversized and mismatched units fail without blocking")
{
    ContinuousScheduler s(ResourceModel(1, 8));
    SchedulerLoop loop(s, [] { return 0.0; });
    loop.submit(pending("big", 9));
    loop.submit(pending("ok", 8));
    auto step = loop.step();
    REQUIRE(step.finished.size() == 1);
    CHECK(step.finished[0].state == UnitState::Failed);
    CHECK(step.finished[0].exit_code == -1);
    CHECK(step.scheduled.size() == 1);

    HomogeneousScheduler h(1, 8, 4);
    SchedulerLoop hl(h, [] { return 0.0; });
    hl.submit(pending("odd", 2));
    auto hs = hl.step();
    REQUIRE(hs.finished.size() == 1);
    CHECK(hs.finished[0].state == UnitState::Failed);
}

TEST_CASE("loop: cancel_pending cancels in order")
{
    ContinuousScheduler s(ResourceModel(1, 4));
    SchedulerLoop loop(s, [] { return 3.0; });
    loop.submit(pending("a", 4));
    loop.submit(pending("b", 4));
    loop.submit(pending("c", 4));
    loop.step();
    auto canceled = loop.cancel_pending();
    REQUIRE(canceled.size() == 2);
    CHECK(canceled[0].id() == "b");
    CHECK(canceled[1].state == UnitState::Canceled);
    CHECK(*canceled[1].time_of("state_canceled") == 3.0);
}

TEST_CASE("both schedulers give the same generations and peak concurrency")
{
    struct Case {
        std::uint32_t nodes, cpn, cores;
        std::uint64_t n;
    };
    for (auto c : {Case{4, 16, 4, 64}, Case{4, 16, 32, 5}, Case{8, 8, 2, 100}, Case{16, 16, 16, 40}}) {
        PilotDescription p;
        p.node_count = c.nodes;
        p.cores_per_node = c.cpn;
        auto cont = make_scheduler(SchedulerKind::ContinuousSearch, p, c.cores);
        auto homo = make_scheduler(SchedulerKind::HomogeneousLookup, p, c.cores);
        std::uint64_t peak_c = 0, peak_h = 0;
        const auto gc = loop_generations(*cont, c.n, c.cores, &peak_c);
        const auto gh = loop_generations(*homo, c.n, c.cores, &peak_h);
        const std::uint64_t capacity = p.total_cores() / c.cores;
        CHECK(gc == (c.n + capacity - 1) / capacity);
        CHECK(gc == gh);
        CHECK(peak_c == peak_h);
    }
}

TEST_CASE("strong geometry: 16384 x 32-core units on 16384 cores is 32 generations")
{
    HomogeneousScheduler s(1024, 16, 32);
    CHECK(loop_generations(s, 16384, 32) == 32);
}

TEST_CASE("scheduler names")
{
    CHECK(scheduler_kind_from_string("continuous") == SchedulerKind::ContinuousSearch);
    CHECK(scheduler_kind_from_string("homogeneous") == SchedulerKind::HomogeneousLookup);
    CHECK_THROWS_AS(scheduler_kind_from_string("greedy"), InvalidDescription);
}
