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

#pragma once

#include "pilot/core.hpp"

#include <cstdint>
#include <deque>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

namespace pilot {

class Recorder;

enum class SchedulerKind { ContinuousSearch, HomogeneousLookup };

const char* to_string(SchedulerKind kind);
/// Accepts the config spellings `continuous` and `homogeneous`.
SchedulerKind scheduler_kind_from_string(const std::string& s);

/// First-fit placement over the ordered node list. Units that fit on one node
/// get the lowest free cores of the first node with room; larger units get
/// whole consecutive free nodes. Returns nullopt (no fit) leaving the model
/// untouched. `probes`, when given, receives the number of nodes inspected.
/// Throws UnitTooLarge when the unit exceeds the pilot.
std::optional<Allocation> schedule_continuous(const UnitDescription& unit, ResourceModel& model,
                                              std::uint64_t* probes = nullptr);

/// Returns the slots to the model. Throws DoubleFree if any slot is free.
void unschedule(const Allocation& alloc, ResourceModel& model);

/// Fixed-size blocks of cores, precomputed at construction and handed out
/// from a stack. A block is either k whole consecutive nodes or an aligned
/// run of cores inside one node.
class BlockFreeList {
public:
    BlockFreeList(std::uint32_t node_count, std::uint32_t cores_per_node, std::uint32_t block_size);

    std::uint32_t block_size() const noexcept { return block_size_; }
    std::size_t free_blocks() const noexcept { return stack_.size(); }
    std::size_t total_blocks() const noexcept { return blocks_.size(); }
    std::uint64_t total_cores() const noexcept { return total_cores_; }
    std::uint64_t free_cores() const noexcept { return stack_.size() * block_size_; }

    /// Lowest-index free block first on a fresh list.
    std::optional<std::uint32_t> pop();
    /// Throws DoubleFree when the block is not live.
    void push(std::uint32_t block);

    const std::vector<Slot>& slots_of(std::uint32_t block) const { return blocks_.at(block); }
    bool is_live(std::uint32_t block) const { return live_.at(block) != 0; }
    /// Block owning an allocation's first slot; throws DoubleFree if the
    /// slots are not exactly that block.
    std::uint32_t block_of(const Allocation& alloc) const;

private:
    std::uint32_t cores_per_node_;
    std::uint32_t block_size_;
    std::uint64_t total_cores_;
    std::vector<std::vector<Slot>> blocks_;
    std::vector<std::uint32_t> stack_;
    std::vector<std::uint8_t> live_;
};

/// O(1) pop of one block. Throws BlockSizeMismatch when the unit's core count
/// differs from the block size.
std::optional<Allocation> schedule_homogeneous(const UnitDescription& unit, BlockFreeList& freelist);
void unschedule(const Allocation& alloc, BlockFreeList& freelist);

/// Common face of both algorithms as used by the agent.
class Scheduler {
public:
    virtual ~Scheduler() = default;

    virtual SchedulerKind kind() const noexcept = 0;
    /// nullopt means "no fit right now"; permanent failures throw.
    virtual std::optional<Allocation> schedule(const UnitDescription& unit) = 0;
    /// Throws DoubleFree when `alloc` is not live.
    virtual void unschedule(const Allocation& alloc) = 0;

    virtual std::uint64_t total_cores() const noexcept = 0;
    virtual std::uint64_t free_cores() const noexcept = 0;
    /// Free (node, core) slots, sorted.
    virtual std::vector<Slot> free_slots() const = 0;

    /// Search work of the most recent schedule() call: nodes inspected for
    /// the continuous search, 1 for a lookup.
    std::uint64_t last_probes() const noexcept { return last_probes_; }
    std::size_t live_allocations() const noexcept { return live_.size(); }

protected:
    void track(const Allocation& alloc);
    void untrack(const Allocation& alloc);
    std::uint64_t last_probes_ = 0;

private:
    std::unordered_map<std::string, std::vector<Slot>> live_;
};

class ContinuousScheduler final : public Scheduler {
public:
    explicit ContinuousScheduler(ResourceModel model);

    SchedulerKind kind() const noexcept override { return SchedulerKind::ContinuousSearch; }
    std::optional<Allocation> schedule(const UnitDescription& unit) override;
    void unschedule(const Allocation& alloc) override;
    std::uint64_t total_cores() const noexcept override { return model_.total_cores(); }
    std::uint64_t free_cores() const noexcept override { return model_.free_cores(); }
    std::vector<Slot> free_slots() const override { return model_.free_slots(); }

    /// Read-only copy for observers.
    ResourceModel snapshot() const { return model_; }

private:
    ResourceModel model_;
};

class HomogeneousScheduler final : public Scheduler {
public:
    HomogeneousScheduler(std::uint32_t node_count, std::uint32_t cores_per_node,
                         std::uint32_t block_size);

    SchedulerKind kind() const noexcept override { return SchedulerKind::HomogeneousLookup; }
    std::optional<Allocation> schedule(const UnitDescription& unit) override;
    void unschedule(const Allocation& alloc) override;
    std::uint64_t total_cores() const noexcept override { return freelist_.total_cores(); }
    std::uint64_t free_cores() const noexcept override { return freelist_.free_cores(); }
    std::vector<Slot> free_slots() const override;

    const BlockFreeList& freelist() const noexcept { return freelist_; }

private:
    BlockFreeList freelist_;
    std::uint64_t total_cores_;
};

/// `block_size` is only used by the homogeneous scheduler (the workload's
/// cores per unit).
std::unique_ptr<Scheduler> make_scheduler(SchedulerKind kind, const PilotDescription& pilot,
                                          std::uint32_t block_size);

/// Strictly sequential FIFO driver around a Scheduler: frees are drained
/// first, then head units are placed in arrival order until one does not fit.
/// A blocked head is retried only after a free arrives; nothing overtakes it.
class SchedulerLoop {
public:
    using Clock = std::function<double()>;

    SchedulerLoop(Scheduler& scheduler, Clock clock, Recorder* recorder = nullptr);

    void submit(ComputeUnit unit);
    /// Unit whose allocation should be returned.
    void release(ComputeUnit unit);

    struct Step {
        std::vector<ComputeUnit> scheduled;
        /// Released units plus units rejected as permanently unschedulable
        /// (those are Failed and carry no allocation).
        std::vector<ComputeUnit> finished;
    };
    Step step();

    bool blocked() const noexcept { return blocked_; }
    std::size_t pending() const noexcept { return pending_.size(); }
    std::size_t pending_frees() const noexcept { return frees_.size(); }

    /// Fails every pending unit as Canceled; used on walltime expiry.
    std::vector<ComputeUnit> cancel_pending();

private:
    Scheduler& scheduler_;
    Clock clock_;
    Recorder* recorder_;
    std::deque<ComputeUnit> pending_;
    std::deque<ComputeUnit> frees_;
    bool blocked_ = false;
};

} // namespace pilot
