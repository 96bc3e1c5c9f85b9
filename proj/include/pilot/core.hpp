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

#include "pilot/emulator.hpp"
#include "pilot/latency.hpp"

#include <compare>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace pilot {

class Recorder;

enum class Backend { Real, Virtual };

const char* to_string(Backend b);
Backend backend_from_string(const std::string& s);

/// A resource placeholder: cores acquired once, onto which units are bound
/// later.
struct PilotDescription {
    std::string resource_name = "local";
    std::uint32_t node_count = 1;
    std::uint32_t cores_per_node = 1;
    double walltime = 3600.0;
    Backend backend = Backend::Virtual;
    LatencyModel latency;

    std::uint64_t total_cores() const
    {
        return static_cast<std::uint64_t>(node_count) * cores_per_node;
    }
};

/// Local file copy performed by the executor around a unit's execution.
/// For stage-in `source` is any path and `target` is relative to the sandbox;
/// for stage-out it is the reverse.
struct FileRef {
    std::string source;
    std::string target;
    bool operator==(const FileRef&) const = default;
};

struct UnitDescription {
    std::string unit_id;
    std::uint32_t cores = 1;
    TaskPayload payload;
    std::vector<FileRef> stage_in;
    std::vector<FileRef> stage_out;
};

/// Unit ids end up in file names and trace rows.
bool is_valid_unit_id(std::string_view id);

enum class UnitState : std::uint8_t {
    New,
    PendingSchedule,
    Scheduled,
    PendingExecution,
    Executing,
    Done,
    Failed,
    Canceled,
};

const char* to_string(UnitState s);
/// Trace event name of a transition into `s`, e.g. `state_pending_schedule`.
std::string_view state_event(UnitState s);
bool is_terminal(UnitState s);
/// Non-terminal states advance one step at a time; terminal states are
/// reachable from any non-terminal state. Nothing leaves a terminal state.
bool can_transition(UnitState from, UnitState to);

/// One core on one node.
struct Slot {
    std::uint32_t node = 0;
    std::uint32_t core = 0;
    auto operator<=>(const Slot&) const = default;
};

/// Compact `node:first-last;node:core` rendering used in traces and env vars.
std::string format_slots(std::span<const Slot> slots);
std::vector<Slot> parse_slots(std::string_view text);

struct Allocation {
    std::string unit_id;
    std::vector<Slot> slots;
    bool operator==(const Allocation&) const = default;
};

/// Per-core occupancy of the pilot's nodes in declaration order. Owned by the
/// scheduler; other components only ever see copies.
class ResourceModel {
public:
    struct NodeRecord {
        std::string node_id;
        std::vector<std::uint8_t> busy;
        std::uint32_t free = 0;
        bool operator==(const NodeRecord&) const = default;
    };

    ResourceModel() = default;
    ResourceModel(std::uint32_t node_count, std::uint32_t cores_per_node);

    std::uint32_t node_count() const noexcept { return static_cast<std::uint32_t>(nodes_.size()); }
    std::uint32_t cores_per_node() const noexcept { return cores_per_node_; }
    std::uint64_t total_cores() const noexcept
    {
        return static_cast<std::uint64_t>(nodes_.size()) * cores_per_node_;
    }
    std::uint64_t free_cores() const noexcept { return free_; }
    std::uint64_t busy_cores() const noexcept { return total_cores() - free_; }

    const NodeRecord& node(std::uint32_t index) const { return nodes_.at(index); }
    std::uint32_t free_on(std::uint32_t node) const noexcept { return nodes_[node].free; }
    bool is_free(Slot s) const;

    /// Marks slots busy; throws std::logic_error if any is already busy.
    void occupy(std::span<const Slot> slots);
    /// Marks slots free; throws DoubleFree if any is already free.
    void release(std::span<const Slot> slots);

    std::vector<Slot> free_slots() const;
    bool operator==(const ResourceModel&) const = default;

private:
    std::vector<NodeRecord> nodes_;
    std::uint32_t cores_per_node_ = 0;
    std::uint64_t free_ = 0;
};

/// Checks a pilot description and builds its all-free resource model.
/// Throws InvalidDescription for zero-sized pilots or nonpositive walltime.
ResourceModel validate_pilot(const PilotDescription& desc);

struct TimelineEntry {
    std::string event;
    double time = 0.0;
    bool operator==(const TimelineEntry&) const = default;
};

/// A unit plus its mutable lifecycle. Moved between workers by value.
struct ComputeUnit {
    UnitDescription desc;
    std::uint64_t index = 0;
    UnitState state = UnitState::New;
    std::optional<Allocation> allocation;
    std::vector<TimelineEntry> timeline;
    /// Sampled emulated duration, fixed when the unit enters the session.
    double payload_duration = 0.0;
    int exit_code = 0;

    const std::string& id() const noexcept { return desc.unit_id; }
    std::optional<double> time_of(std::string_view event) const;

    /// Appends a timeline entry and mirrors it to `rec` when given.
    void mark(std::string_view event, double now, Recorder* rec = nullptr,
              std::string_view info = {});
    /// Throws IllegalTransition on a move against the lifecycle DAG.
    void transition(UnitState to, double now, Recorder* rec = nullptr);
};

/// Value-returning form of ComputeUnit::transition.
ComputeUnit transition(ComputeUnit unit, UnitState to, double now, Recorder* rec = nullptr);

} // namespace pilot
