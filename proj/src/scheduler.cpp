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

#include "pilot/scheduler.hpp"

#include "pilot/error.hpp"
#include "pilot/profiler.hpp"

#include <algorithm>

namespace pilot {

const char* to_string(SchedulerKind kind)
{
    return kind == SchedulerKind::ContinuousSearch ? "continuous" : "homogeneous";
}

SchedulerKind scheduler_kind_from_string(const std::string& s)
{
    if (s == "continuous")
        return SchedulerKind::ContinuousSearch;
    if (s == "homogeneous")
        return SchedulerKind::HomogeneousLookup;
    throw InvalidDescription("unknown scheduler '" + s + "'");
}

std::optional<Allocation> schedule_continuous(const UnitDescription& unit, ResourceModel& model,
                                              std::uint64_t* probes)
{
    if (unit.cores == 0)
        throw InvalidDescription("unit " + unit.unit_id + " requests zero cores");
    if (unit.cores > model.total_cores())
        throw UnitTooLarge("unit " + unit.unit_id + " needs " + std::to_string(unit.cores) +
                           " cores, pilot has " + std::to_string(model.total_cores()));

    const std::uint32_t cpn = model.cores_per_node();
    const std::uint32_t nodes = model.node_count();
    std::uint64_t inspected = 0;
    Allocation alloc{unit.unit_id, {}};
    alloc.slots.reserve(unit.cores);

    if (unit.cores <= cpn) {
        for (std::uint32_t n = 0; n < nodes; ++n) {
            ++inspected;
            if (model.free_on(n) < unit.cores)
                continue;
            const auto& busy = model.node(n).busy;
            for (std::uint32_t c = 0; c < cpn && alloc.slots.size() < unit.cores; ++c)
                if (!busy[c])
                    alloc.slots.push_back({n, c});
            break;
        }
    } else {
        const std::uint32_t need = (unit.cores + cpn - 1) / cpn;
        std::uint32_t run = 0;
        for (std::uint32_t n = 0; n < nodes; ++n) {
            ++inspected;
            run = model.free_on(n) == cpn ? run + 1 : 0;
            if (run < need)
                continue;
            const std::uint32_t first = n + 1 - need;
            std::uint32_t remaining = unit.cores;
            for (std::uint32_t k = first; k <= n; ++k) {
                const std::uint32_t take = std::min(cpn, remaining);
                for (std::uint32_t c = 0; c < take; ++c)
                    alloc.slots.push_back({k, c});
                remaining -= take;
            }
            break;
        }
    }

    if (probes)
        *probes = inspected;
    if (alloc.slots.size() != unit.cores)
        return std::nullopt;
    model.occupy(alloc.slots);
    return alloc;
}

void unschedule(const Allocation& alloc, ResourceModel& model)
{
    model.release(alloc.slots);
}

BlockFreeList::BlockFreeList(std::uint32_t node_count, std::uint32_t cores_per_node,
                             std::uint32_t block_size)
    : cores_per_node_(cores_per_node),
      block_size_(block_size),
      total_cores_(static_cast<std::uint64_t>(node_count) * cores_per_node)
{
    if (node_count == 0 || cores_per_node == 0 || block_size == 0)
        throw InvalidDescription("block free list needs nonzero nodes, cores and block size");
    if (block_size % cores_per_node != 0 && cores_per_node % block_size != 0)
        throw InvalidDescription("block size " + std::to_string(block_size) +
                                 " neither divides nor is a multiple of " +
                                 std::to_string(cores_per_node) + " cores per node");
    if (total_cores_ % block_size != 0)
        throw InvalidDescription("pilot of " + std::to_string(total_cores_) +
                                 " cores is not a whole number of " +
                                 std::to_string(block_size) + "-core blocks");

    const std::uint64_t count = total_cores_ / block_size;
    blocks_.reserve(count);
    for (std::uint64_t b = 0; b < count; ++b) {
        std::vector<Slot> slots;
        slots.reserve(block_size);
        for (std::uint64_t i = 0; i < block_size; ++i) {
            const std::uint64_t flat = b * block_size + i;
            slots.push_back({static_cast<std::uint32_t>(flat / cores_per_node),
                             static_cast<std::uint32_t>(flat % cores_per_node)});
        }
        blocks_.push_back(std::move(slots));
    }
    stack_.reserve(count);
    for (std::uint64_t b = count; b-- > 0;)
        stack_.push_back(static_cast<std::uint32_t>(b));
    live_.assign(count, 0);
}

std::optional<std::uint32_t> BlockFreeList::pop()
{
    if (stack_.empty())
        return std::nullopt;
    const std::uint32_t b = stack_.back();
    stack_.pop_back();
    live_[b] = 1;
    return b;
}

void BlockFreeList::push(std::uint32_t block)
{
    if (block >= live_.size() || !live_[block])
        throw DoubleFree("block " + std::to_string(block) + " is not allocated");
    live_[block] = 0;
    stack_.push_back(block);
}

std::uint32_t BlockFreeList::block_of(const Allocation& alloc) const
{
    if (alloc.slots.empty())
        throw DoubleFree("allocation of " + alloc.unit_id + " has no slots");
    const Slot& s = alloc.slots.front();
    const std::uint64_t flat = static_cast<std::uint64_t>(s.node) * cores_per_node_ + s.core;
    const std::uint64_t b = flat / block_size_;
    if (b >= blocks_.size() || blocks_[b] != alloc.slots)
        throw DoubleFree("allocation of " + alloc.unit_id + " is not a block of this list");
    return static_cast<std::uint32_t>(b);
}

std::optional<Allocation> schedule_homogeneous(const UnitDescription& unit, BlockFreeList& freelist)
{
    if (unit.cores != freelist.block_size())
        throw BlockSizeMismatch("unit " + unit.unit_id + " requests " +
                                std::to_string(unit.cores) + " cores, blocks hold " +
                                std::to_string(freelist.block_size()));
    const auto block = freelist.pop();
    if (!block)
        return std::nullopt;
    return Allocation{unit.unit_id, freelist.slots_of(*block)};
}

void unschedule(const Allocation& alloc, BlockFreeList& freelist)
{
    freelist.push(freelist.block_of(alloc));
}

void Scheduler::track(const Allocation& alloc)
{
    live_.emplace(alloc.unit_id, alloc.slots);
}

void Scheduler::untrack(const Allocation& alloc)
{
    auto it = live_.find(alloc.unit_id);
    if (it == live_.end() || it->second != alloc.slots)
        throw DoubleFree("allocation of " + alloc.unit_id + " is not live");
    live_.erase(it);
}

ContinuousScheduler::ContinuousScheduler(ResourceModel model) : model_(std::move(model)) {}

std::optional<Allocation> ContinuousScheduler::schedule(const UnitDescription& unit)
{
    auto alloc = schedule_continuous(unit, model_, &last_probes_);
    if (alloc)
        track(*alloc);
    return alloc;
}

void ContinuousScheduler::unschedule(const Allocation& alloc)
{
    untrack(alloc);
    pilot::unschedule(alloc, model_);
}

HomogeneousScheduler::HomogeneousScheduler(std::uint32_t node_count, std::uint32_t cores_per_node,
                                           std::uint32_t block_size)
    : freelist_(node_count, cores_per_node, block_size),
      total_cores_(static_cast<std::uint64_t>(node_count) * cores_per_node)
{
}

std::optional<Allocation> HomogeneousScheduler::schedule(const UnitDescription& unit)
{
    last_probes_ = 1;
    auto alloc = schedule_homogeneous(unit, freelist_);
    if (alloc)
        track(*alloc);
    return alloc;
}

void HomogeneousScheduler::unschedule(const Allocation& alloc)
{
    untrack(alloc);
    pilot::unschedule(alloc, freelist_);
}

std::vector<Slot> HomogeneousScheduler::free_slots() const
{
    std::vector<Slot> out;
    for (std::uint32_t b = 0; b < freelist_.total_blocks(); ++b)
        if (!freelist_.is_live(b))
            for (const Slot& s : freelist_.slots_of(b))
                out.push_back(s);
    return out;
}

std::unique_ptr<Scheduler> make_scheduler(SchedulerKind kind, const PilotDescription& pilot,
                                          std::uint32_t block_size)
{
    ResourceModel model = validate_pilot(pilot);
    if (kind == SchedulerKind::ContinuousSearch)
        return std::make_unique<ContinuousScheduler>(std::move(model));
    return std::make_unique<HomogeneousScheduler>(pilot.node_count, pilot.cores_per_node,
                                                  block_size);
}

SchedulerLoop::SchedulerLoop(Scheduler& scheduler, Clock clock, Recorder* recorder)
    : scheduler_(scheduler), clock_(std::move(clock)), recorder_(recorder)
{
}

void SchedulerLoop::submit(ComputeUnit unit)
{
    pending_.push_back(std::move(unit));
}

void SchedulerLoop::release(ComputeUnit unit)
{
    frees_.push_back(std::move(unit));
}

SchedulerLoop::Step SchedulerLoop::step()
{
    Step out;
    while (!frees_.empty()) {
        ComputeUnit u = std::move(frees_.front());
        frees_.pop_front();
        if (u.allocation) {
            scheduler_.unschedule(*u.allocation);
            u.mark(events::unsched_done, clock_(), recorder_);
        }
        out.finished.push_back(std::move(u));
        blocked_ = false;
    }

    while (!pending_.empty() && !blocked_) {
        ComputeUnit& head = pending_.front();
        const double start = clock_();
        std::optional<Allocation> alloc;
        try {
            alloc = scheduler_.schedule(head.desc);
        } catch (const UnitTooLarge&) {
            head.transition(UnitState::Failed, clock_(), recorder_);
            head.exit_code = -1;
            out.finished.push_back(std::move(head));
            pending_.pop_front();
            continue;
        } catch (const BlockSizeMismatch&) {
            head.transition(UnitState::Failed, clock_(), recorder_);
            head.exit_code = -1;
            out.finished.push_back(std::move(head));
            pending_.pop_front();
            continue;
        }
        if (!alloc) {
            blocked_ = true;
            break;
        }
        const double done = clock_();
        head.mark(events::sched_start, start, recorder_);
        head.mark(events::sched_done, done, recorder_, format_slots(alloc->slots));
        head.allocation = std::move(alloc);
        head.transition(UnitState::Scheduled, done, recorder_);
        out.scheduled.push_back(std::move(head));
        pending_.pop_front();
    }
    return out;
}

std::vector<ComputeUnit> SchedulerLoop::cancel_pending()
{
    std::vector<ComputeUnit> out;
    while (!pending_.empty()) {
        ComputeUnit u = std::move(pending_.front());
        pending_.pop_front();
        u.transition(UnitState::Canceled, clock_(), recorder_);
        out.push_back(std::move(u));
    }
    return out;
}

} // namespace pilot
