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

#include "pilot/session.hpp"

#include "pilot/channel.hpp"
#include "pilot/emulator.hpp"
#include "pilot/error.hpp"
#include "pilot/profiler.hpp"
#include "pilot/store.hpp"
#include "pilot/trace.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdio>
#include <exception>
#include <mutex>
#include <queue>
#include <thread>
#include <unistd.h>
#include <unordered_set>

namespace pilot {

namespace fs = std::filesystem;

std::vector<UnitDescription> make_workload(const WorkloadSpec& spec)
{
    std::vector<UnitDescription> units;
    units.reserve(spec.count);
    char buf[32];
    for (std::uint64_t i = 0; i < spec.count; ++i) {
        std::snprintf(buf, sizeof buf, ".%06llu", static_cast<unsigned long long>(i));
        UnitDescription u;
        u.unit_id = spec.id_prefix + buf;
        u.cores = spec.cores;
        u.payload = spec.payload;
        units.push_back(std::move(u));
    }
    return units;
}

void SessionResult::throw_if_aborted() const
{
    if (aborted)
        throw SessionAborted("session " + session_id + " hit its walltime; " +
                             std::to_string(canceled) + " units canceled");
}

void validate_session(const SessionConfig& config)
{
    validate_pilot(config.pilot);
    config.pilot.latency.validate();
    config.costs.validate();
    validate_executor_count(config.executors);
    if (config.pull_batch == 0)
        throw ConfigError("pull batch must be >= 1");
    if (!is_valid_unit_id(config.session_id))
        throw ConfigError("invalid session id '" + config.session_id + "'");
    const LaunchMethod method = config.launch.value_or(default_launch_method(config.pilot.backend));
    if (!is_compatible(method, config.pilot.backend))
        throw IncompatibleMethod(std::string("launch method ") + to_string(method) +
                                 " cannot run on the " + to_string(config.pilot.backend) +
                                 " backend");
    if (config.channel_capacity != 0 && config.channel_capacity < task_capacity(config))
        throw ConfigError("channel capacity " + std::to_string(config.channel_capacity) +
                          " is below the pilot's task capacity");
    std::unordered_set<std::string> ids;
    for (const auto& u : config.units) {
        if (!is_valid_unit_id(u.unit_id))
            throw InvalidDescription("invalid unit id '" + u.unit_id + "'");
        if (u.cores == 0)
            throw InvalidDescription("unit " + u.unit_id + " requests zero cores");
        if (!ids.insert(u.unit_id).second)
            throw InvalidDescription("duplicate unit id '" + u.unit_id + "'");
        u.payload.validate();
    }
}

std::uint64_t task_capacity(const SessionConfig& config)
{
    std::uint32_t smallest = 0;
    for (const auto& u : config.units)
        if (smallest == 0 || u.cores < smallest)
            smallest = u.cores;
    if (smallest == 0)
        return 1;
    return std::max<std::uint64_t>(1, config.pilot.total_cores() / smallest);
}

SessionResult run_session(const SessionConfig& config)
{
    return config.pilot.backend == Backend::Virtual ? run_virtual(config) : run_real(config);
}

std::string default_payload_exe()
{
    std::error_code ec;
    const fs::path self = fs::read_symlink("/proc/self/exe", ec);
    if (!ec) {
        const fs::path candidate = self.parent_path() / "pilot-payload";
        if (fs::exists(candidate, ec))
            return candidate.string();
    }
    return "pilot-payload";
}

namespace {

constexpr const char* pilot_id = "pilot.0000";

std::uint32_t block_size_of(const SessionConfig& config)
{
    return config.units.empty() ? 1 : config.units.front().cores;
}

std::string session_info(const SessionConfig& config)
{
    return "cores=" + std::to_string(config.pilot.total_cores()) +
           ";nodes=" + std::to_string(config.pilot.node_count) +
           ";cpn=" + std::to_string(config.pilot.cores_per_node) +
           ";scheduler=" + to_string(config.scheduler) +
           ";backend=" + to_string(config.pilot.backend) +
           ";units=" + std::to_string(config.units.size());
}

ComputeUnit admit(const UnitDescription& desc, std::uint64_t index, std::uint64_t seed)
{
    ComputeUnit u;
    u.desc = desc;
    u.index = index;
    std::mt19937_64 rng(mix_seed(seed, 2 * index));
    u.payload_duration = sample_duration(desc.payload, rng);
    return u;
}

void tally(SessionResult& result)
{
    std::sort(result.units.begin(), result.units.end(),
              [](const ComputeUnit& a, const ComputeUnit& b) { return a.index < b.index; });
    result.done = result.failed = result.canceled = 0;
    for (const auto& u : result.units) {
        if (u.state == UnitState::Done)
            ++result.done;
        else if (u.state == UnitState::Failed)
            ++result.failed;
        else if (u.state == UnitState::Canceled)
            ++result.canceled;
    }
}

fs::path prepare_directory(const SessionConfig& config)
{
    const fs::path dir = config.output_dir / config.session_id;
    std::error_code ec;
    fs::remove_all(dir, ec);
    fs::create_directories(dir / "sandbox");
    return dir;
}

fs::path merge_profiles(Profiler& profiler)
{
    profiler.close();
    if (!profiler.enabled())
        return {};
    const fs::path unified = profiler.directory() / "unified.prof";
    synchronize(profiler.component_files(), unified);
    return unified;
}

// Component that owns an event in the virtual engine; mirrors who records it
// on the real backend.
enum class Owner { Db, Scheduler, Executor, Agent };

Owner owner_of(std::string_view event, bool has_allocation)
{
    if (event == events::db_pull || event == state_event(UnitState::PendingSchedule))
        return Owner::Db;
    if (event == events::sched_start || event == events::sched_done ||
        event == events::exec_queued || event == events::unsched_done ||
        event == state_event(UnitState::Scheduled) ||
        event == state_event(UnitState::PendingExecution))
        return Owner::Scheduler;
    if (event == state_event(UnitState::Canceled))
        return Owner::Agent;
    if (event == state_event(UnitState::Failed) && !has_allocation)
        return Owner::Scheduler;
    return Owner::Executor;
}

std::string slot_info(const ComputeUnit& u)
{
    return u.allocation ? format_slots(u.allocation->slots) : std::string();
}

} // namespace

// Discrete-event replay of the agent pipeline on one logical clock. The db
// bridge pulls everything at t=0, the scheduler is a single server whose
// operations cost simulated time, and executor workers pick units in queue
// order. Launch timings are fixed as soon as a unit is placed, so the only
// feedback loop is slot release.
SessionResult run_virtual(const SessionConfig& config)
{
    validate_session(config);
    const auto wall_start = std::chrono::steady_clock::now();

    SessionResult result;
    result.session_id = config.session_id;
    result.directory = prepare_directory(config);

    const double walltime = config.pilot.walltime;
    const ComponentCosts& costs = config.costs;
    const std::uint64_t pilot_cores = config.pilot.total_cores();
    auto scheduler = make_scheduler(config.scheduler, config.pilot, block_size_of(config));

    std::vector<ComputeUnit> units;
    units.reserve(config.units.size());
    for (std::size_t i = 0; i < config.units.size(); ++i)
        units.push_back(admit(config.units[i], i, config.seed));

    for (std::size_t first = 0; first < units.size(); first += config.pull_batch) {
        const std::size_t last = std::min(units.size(), first + config.pull_batch);
        for (std::size_t i = first; i < last; ++i) {
            units[i].mark(events::db_pull, 0.0);
            units[i].transition(UnitState::PendingSchedule, 0.0);
        }
    }

    using Free = std::pair<double, std::uint64_t>;
    std::priority_queue<Free, std::vector<Free>, std::greater<>> frees;
    std::deque<std::uint64_t> pending;
    for (std::size_t i = 0; i < units.size(); ++i)
        pending.push_back(i);
    std::vector<double> worker_free(config.executors, 0.0);
    std::vector<std::uint32_t> worker_of(units.size(), 0);

    double now = 0.0;
    bool blocked = false;
    while (true) {
        if (!frees.empty() && frees.top().first <= now) {
            ComputeUnit& u = units[frees.top().second];
            frees.pop();
            scheduler->unschedule(*u.allocation);
            now += costs.unsched_base + costs.unsched_slot * static_cast<double>(u.desc.cores);
            u.mark(events::unsched_done, now);
            blocked = false;
            continue;
        }
        if (!pending.empty() && !blocked && now <= walltime) {
            ComputeUnit& u = units[pending.front()];
            const double start = now;
            std::optional<Allocation> alloc;
            bool rejected = false;
            try {
                alloc = scheduler->schedule(u.desc);
            } catch (const UnitTooLarge&) {
                rejected = true;
            } catch (const BlockSizeMismatch&) {
                rejected = true;
            }
            now += config.scheduler == SchedulerKind::HomogeneousLookup
                       ? costs.lookup
                       : costs.sched_base +
                             costs.sched_probe * static_cast<double>(scheduler->last_probes());
            if (rejected) {
                u.exit_code = -1;
                u.transition(UnitState::Failed, now);
                pending.pop_front();
                continue;
            }
            if (!alloc) {
                blocked = true;
                continue;
            }
            pending.pop_front();
            u.mark(events::sched_start, start);
            u.mark(events::sched_done, now);
            u.allocation = std::move(alloc);
            u.transition(UnitState::Scheduled, now);
            u.transition(UnitState::PendingExecution, now);
            u.mark(events::exec_queued, now);

            const auto w = static_cast<std::uint32_t>(
                std::min_element(worker_free.begin(), worker_free.end()) - worker_free.begin());
            const LaunchRecord launch =
                simulate_launch(u, now, worker_free[w], costs.dispatch,
                                sample_latencies(config.pilot.latency, pilot_cores, config.seed,
                                                 u.index));
            worker_free[w] = std::max(worker_free[w], now) + costs.dispatch;
            worker_of[u.index] = w;
            u.mark(events::exec_start, launch.exec_start);
            u.mark(events::payload_start, launch.payload_start);
            u.transition(UnitState::Executing, launch.payload_start);
            u.mark(events::payload_stop, launch.payload_stop);
            u.exit_code = launch.exit_code;
            u.mark(events::spawn_return, launch.spawn_return, nullptr, "exit=0");
            u.transition(UnitState::Done, launch.spawn_return);
            frees.emplace(launch.spawn_return, u.index);
            continue;
        }
        if (!frees.empty() && (!pending.empty() || frees.top().first <= walltime)) {
            now = std::max(now, frees.top().first);
            continue;
        }
        break;
    }

    // Walltime cut: anything after the deadline never happened, and whatever
    // was not terminal by then is canceled at the deadline.
    double end = 0.0;
    for (auto& u : units) {
        auto& tl = u.timeline;
        const bool late = std::any_of(tl.begin(), tl.end(),
                                      [&](const TimelineEntry& e) { return e.time > walltime; });
        if (late || !is_terminal(u.state)) {
            const auto cut = std::find_if(tl.begin(), tl.end(), [&](const TimelineEntry& e) {
                return e.time > walltime;
            });
            const bool terminal_before = std::any_of(tl.begin(), cut, [](const TimelineEntry& e) {
                return e.event == state_event(UnitState::Done) ||
                       e.event == state_event(UnitState::Failed);
            });
            tl.erase(cut, tl.end());
            if (!terminal_before) {
                result.aborted = true;
                u.state = UnitState::Canceled;
                u.exit_code = 0;
                tl.push_back({std::string(state_event(UnitState::Canceled)), walltime});
            }
        }
        for (const auto& e : tl)
            end = std::max(end, e.time);
    }
    if (result.aborted)
        end = walltime;

    Profiler profiler(result.directory, pilot_id, ProfilerOptions{config.profile, 1 << 16, {}});
    Recorder& agent = profiler.recorder("agent");
    Recorder& db = profiler.recorder("db");
    Recorder& sched = profiler.recorder("scheduler");
    std::vector<Recorder*> executors;
    for (std::uint32_t w = 0; w < config.executors; ++w)
        executors.push_back(&profiler.recorder("executor." + std::to_string(w), w));
    std::vector<Recorder*> all{&agent, &db, &sched};
    all.insert(all.end(), executors.begin(), executors.end());

    for (Recorder* r : all)
        r->sync(0.0, 0.0);
    agent.record(0.0, events::session_start, {}, session_info(config));
    if (config.profile) {
        for (const auto& u : units) {
            for (const auto& e : u.timeline) {
                std::string info;
                if (e.event == events::sched_done)
                    info = slot_info(u);
                else if (e.event == events::spawn_return)
                    info = "exit=" + std::to_string(u.exit_code);
                Recorder* rec = nullptr;
                switch (owner_of(e.event, u.allocation.has_value())) {
                case Owner::Db: rec = &db; break;
                case Owner::Scheduler: rec = &sched; break;
                case Owner::Executor: rec = executors[worker_of[u.index]]; break;
                case Owner::Agent: rec = &agent; break;
                }
                rec->record(e.time, e.event, u.id(), info);
            }
        }
    }
    agent.record(end, events::session_end, {}, result.aborted ? "aborted" : "complete");
    for (Recorder* r : all)
        r->sync(end, end);

    result.trace = merge_profiles(profiler);
    result.start = 0.0;
    result.end = end;
    result.units = std::move(units);
    tally(result);
    result.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - wall_start).count();
    return result;
}

namespace {

// Real-backend plumbing shared by the threads of one session.
struct RealContext {
    const SessionConfig& config;
    std::chrono::steady_clock::time_point t0;
    std::atomic<bool> abort{false};
    std::mutex error_mutex;
    std::exception_ptr error;

    std::shared_ptr<Doorbell> scheduler_bell = std::make_shared<Doorbell>();
    std::shared_ptr<Channel<ComputeUnit>> sched_in;
    std::shared_ptr<Channel<ComputeUnit>> sched_free;
    std::shared_ptr<Channel<ComputeUnit>> exec_in;
    std::shared_ptr<Channel<ComputeUnit>> done_out;

    explicit RealContext(const SessionConfig& c) : config(c), t0(std::chrono::steady_clock::now()) {}

    double now() const
    {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    }

    void fail(std::exception_ptr e)
    {
        {
            std::lock_guard lock(error_mutex);
            if (!error)
                error = e;
        }
        abort = true;
    }
};

void scheduler_thread(RealContext& ctx, Scheduler& scheduler, Recorder& rec, std::size_t total)
{
    try {
        SchedulerLoop loop(scheduler, [&] { return ctx.now(); }, &rec);
        std::size_t placed_or_failed = 0;
        std::size_t finished = 0;
        while (finished < total && !ctx.abort) {
            const std::uint64_t seen = ctx.scheduler_bell->generation();
            while (auto u = ctx.sched_free->try_receive())
                loop.release(std::move(*u));
            while (auto u = ctx.sched_in->try_receive())
                loop.submit(std::move(*u));

            auto step = loop.step();
            for (auto& u : step.scheduled) {
                const double t = ctx.now();
                u.transition(UnitState::PendingExecution, t, &rec);
                u.mark(events::exec_queued, t, &rec);
                ++placed_or_failed;
                ctx.exec_in->send(std::move(u));
            }
            for (auto& u : step.finished) {
                if (!u.allocation)
                    ++placed_or_failed;
                ++finished;
                ctx.done_out->send(std::move(u));
            }
            if (placed_or_failed == total)
                ctx.exec_in->close();
            if (finished < total && !ctx.abort && step.scheduled.empty() && step.finished.empty())
                ctx.scheduler_bell->wait_for(seen, std::chrono::milliseconds(10));
        }
        if (ctx.abort)
            for (auto& u : loop.cancel_pending())
                ctx.done_out->send(std::move(u));
    } catch (...) {
        ctx.fail(std::current_exception());
    }
    ctx.exec_in->close();
}

void executor_thread(RealContext& ctx, RealExecutor& executor)
{
    try {
        while (!ctx.abort) {
            if (auto u = ctx.exec_in->receive_for(std::chrono::milliseconds(1)))
                executor.accept(std::move(*u));
            for (auto& u : executor.poll())
                ctx.sched_free->send(std::move(u));
            if (executor.idle() && ctx.exec_in->drained())
                break;
        }
        if (ctx.abort)
            for (auto& u : executor.cancel_all())
                ctx.done_out->send(std::move(u));
    } catch (...) {
        ctx.fail(std::current_exception());
    }
}

} // namespace

SessionResult run_real(const SessionConfig& config)
{
    validate_session(config);
    SessionResult result;
    result.session_id = config.session_id;
    result.directory = prepare_directory(config);
    const fs::path sandbox = fs::absolute(result.directory / "sandbox");

    Profiler profiler(result.directory, pilot_id, ProfilerOptions{config.profile, 4096, {}});
    Recorder& agent = profiler.recorder("agent");
    Recorder& db = profiler.recorder("db");
    Recorder& sched = profiler.recorder("scheduler");

    LaunchOptions options;
    options.sandbox = sandbox;
    options.payload_exe = config.payload_exe.empty() ? default_payload_exe() : config.payload_exe;
    const bool needs_flops = std::any_of(config.units.begin(), config.units.end(), [](const auto& u) {
        return u.payload.kind == PayloadKind::FlopBurn && u.payload.flop_count == 0;
    });

    auto scheduler = make_scheduler(config.scheduler, config.pilot, block_size_of(config));
    const std::size_t capacity =
        config.channel_capacity ? config.channel_capacity : 2 * task_capacity(config);
    const std::size_t total = config.units.size();

    RealContext ctx(config);
    ctx.sched_in = channel<ComputeUnit>("sched_in", capacity, ctx.scheduler_bell);
    ctx.sched_free = channel<ComputeUnit>("sched_free", capacity, ctx.scheduler_bell);
    ctx.exec_in = channel<ComputeUnit>("exec_in", capacity);
    ctx.done_out = channel<ComputeUnit>("done_out", std::max<std::size_t>(total, 1));

    for (Recorder* r : {&agent, &db, &sched}) {
        const double t = ctx.now();
        r->sync(t, t);
    }
    const double start = ctx.now();
    agent.record(start, events::session_start, {}, session_info(config));
    if (needs_flops) {
        options.flops_per_sec = calibrate_flops();
        agent.record(ctx.now(), events::calibration, {},
                     "flops_per_sec=" + std::to_string(options.flops_per_sec));
    }

    const LaunchMethod method = config.launch.value_or(default_launch_method(Backend::Real));
    std::vector<std::unique_ptr<RealExecutor>> executors;
    std::vector<Recorder*> exec_recs;
    for (std::uint32_t w = 0; w < config.executors; ++w) {
        Recorder& rec = profiler.recorder("executor." + std::to_string(w), w);
        const double t = ctx.now();
        rec.sync(t, t);
        exec_recs.push_back(&rec);
        executors.push_back(std::make_unique<RealExecutor>(
            w, Backend::Real, method, options, config.pilot.latency, config.pilot.total_cores(),
            config.seed, [&ctx] { return ctx.now(); }, &rec));
    }

    std::vector<std::thread> threads;
    threads.emplace_back(scheduler_thread, std::ref(ctx), std::ref(*scheduler), std::ref(sched),
                         total);
    for (auto& e : executors)
        threads.emplace_back(executor_thread, std::ref(ctx), std::ref(*e));

    // db bridge: bulk pulls into the scheduler's queue.
    WorkloadStore store(config.pull_batch);
    for (const auto& u : config.units)
        store.insert(u);
    std::uint64_t index = 0;
    try {
        while (store.pending() > 0 && !ctx.abort && ctx.now() - start < config.pilot.walltime) {
            const double pulled = ctx.now();
            for (auto& desc : pull_units(store, config.pull_batch, pulled, &db)) {
                ComputeUnit u = admit(desc, index++, config.seed);
                u.mark(events::db_pull, pulled);
                u.transition(UnitState::PendingSchedule, pulled, &db);
                ctx.sched_in->send(std::move(u));
            }
        }
    } catch (...) {
        ctx.fail(std::current_exception());
    }

    std::vector<ComputeUnit> finished;
    finished.reserve(total);
    const double deadline = start + config.pilot.walltime;
    while (finished.size() < total && !ctx.abort) {
        if (ctx.now() >= deadline) {
            result.aborted = true;
            ctx.abort = true;
            break;
        }
        if (auto u = ctx.done_out->receive_for(std::chrono::milliseconds(5)))
            finished.push_back(std::move(*u));
    }
    ctx.scheduler_bell->ring();
    for (auto& t : threads)
        t.join();
    if (ctx.error)
        std::rethrow_exception(ctx.error);

    // Whatever is still in flight after an abort is canceled by the agent.
    for (auto* ch : {&ctx.done_out, &ctx.sched_free, &ctx.exec_in, &ctx.sched_in}) {
        (*ch)->close();
        while (auto u = (*ch)->try_receive()) {
            if (!is_terminal(u->state))
                u->transition(UnitState::Canceled, ctx.now(), &agent);
            finished.push_back(std::move(*u));
        }
    }
    for (auto& desc : store.pull(store.pending())) {
        ComputeUnit u = admit(desc, index++, config.seed);
        u.transition(UnitState::Canceled, ctx.now(), &agent);
        finished.push_back(std::move(u));
    }
    if (finished.size() < total)
        throw Error("session lost " + std::to_string(total - finished.size()) + " units");

    executors.clear();
    const double end = ctx.now();
    agent.record(end, events::session_end, {}, result.aborted ? "aborted" : "complete");
    for (Recorder* r : {&agent, &db, &sched}) {
        r->sync(end, end);
    }
    for (Recorder* r : exec_recs)
        r->sync(end, end);

    result.trace = merge_profiles(profiler);
    result.start = start;
    result.end = end;
    result.units = std::move(finished);
    tally(result);
    result.wall_seconds = end - start;
    return result;
}

} // namespace pilot
