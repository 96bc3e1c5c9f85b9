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
#include "pilot/profiler.hpp"

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace pilot {

/// Per-unit view of a trace: one timestamp per canonical event, the slots
/// from sched_done and the terminal state if one was recorded.
struct UnitTimes {
    std::string unit_id;
    std::array<std::optional<double>, std::size(unit_event_order)> at;
    std::vector<Slot> slots;
    std::optional<UnitState> terminal;
    std::optional<double> terminal_time;

    std::optional<double> time_of(std::string_view event) const;
    std::uint32_t cores() const { return static_cast<std::uint32_t>(slots.size()); }
};

/// Immutable loaded trace.
class Trace {
public:
    static Trace load(const std::filesystem::path& unified);
    static Trace from_events(std::vector<ProfileEvent> events);

    const std::vector<ProfileEvent>& events() const noexcept { return events_; }
    /// Units in first-appearance order.
    const std::vector<UnitTimes>& units() const noexcept { return units_; }

    /// From the session_start row; 0 when absent.
    std::uint64_t pilot_cores() const noexcept { return pilot_cores_; }
    std::uint32_t node_count() const noexcept { return node_count_; }
    std::uint32_t cores_per_node() const noexcept { return cores_per_node_; }
    const std::string& scheduler() const noexcept { return scheduler_; }
    const std::string& backend() const noexcept { return backend_; }

    /// Value of `key` in the session_start info, if present.
    std::optional<std::string> session_attribute(const std::string& key) const;

private:
    std::vector<ProfileEvent> events_;
    std::vector<UnitTimes> units_;
    std::map<std::string, std::string> session_;
    std::uint64_t pilot_cores_ = 0;
    std::uint32_t node_count_ = 0;
    std::uint32_t cores_per_node_ = 0;
    std::string scheduler_;
    std::string backend_;
};

struct TtxReport {
    double ttx = 0.0;
    double start = 0.0;
    double end = 0.0;
    double ideal_ttx = 0.0;
    std::uint64_t generations = 0;
    /// Longest chain of units that reused each other's slots.
    std::uint64_t slot_depth = 0;
    double mean_payload = 0.0;
    double max_payload = 0.0;

    /// (ttx - ideal) / ideal.
    double overhead_fraction() const { return ideal_ttx > 0.0 ? ttx / ideal_ttx - 1.0 : 0.0; }
};

/// ttx = last spawn_return - first db_pull. A unit that never returned
/// (canceled) contributes its terminal time instead. Generations are
/// ceil(placed / peak), peak being the most units holding slots at once. Throws
/// IncompleteTrace when a unit is not terminal or the trace holds no units.
TtxReport compute_ttx(const Trace& trace);

/// Per-unit generation, by unit order in the trace; 0 for units that were
/// never placed.
std::vector<std::uint64_t> unit_generations(const Trace& trace);

/// Most units holding slots at the same time.
std::uint64_t peak_holders(const Trace& trace);

struct Utilization {
    double workload_pct = 0.0;
    double overhead_pct = 0.0;
    double idle_pct = 0.0;
    double workload_core_s = 0.0;
    double overhead_core_s = 0.0;
    double idle_core_s = 0.0;
    double total_core_s = 0.0;
};

/// Partitions pilot core-time over the TTX window. Workload is core-time
/// between payload_start and payload_stop; overhead is core-time a unit held
/// its slots (sched_done to unsched_done, or to its terminal time) without
/// running; idle is the rest. `pilot_cores` of 0 takes the value from the
/// trace. Throws NegativeIdle if the parts exceed the whole.
Utilization compute_utilization(const Trace& trace, std::uint64_t pilot_cores = 0);

using Series = std::vector<std::pair<double, std::int64_t>>;

/// Named intervals for concurrency plots.
struct StateInterval {
    std::string name;
    std::string start_event;
    std::string end_event;
};
/// scheduling (db_pull..sched_done), queuing (exec_queued..exec_start),
/// executing (payload_start..payload_stop), unscheduling
/// (spawn_return..unsched_done).
const std::vector<StateInterval>& standard_intervals();
/// Looks up a name from standard_intervals(); throws UnknownEvent.
StateInterval interval_named(const std::string& name);

/// Step function of the number of units between `start_event` and
/// `end_event`. Each point is (time, count after all changes at time). A unit
/// missing its end event stays counted until the last trace event. Throws
/// UnknownEvent for names outside the canonical set.
Series concurrency_series(const Trace& trace, const std::string& start_event,
                          const std::string& end_event);
/// Integral of a step series over time.
double integrate(const Series& series);
/// Largest count in the series.
std::int64_t peak(const Series& series);

struct EventStats {
    std::size_t count = 0;
    double mean = 0.0;
    double std = 0.0;
    double median = 0.0;
    double p95 = 0.0;
    double min = 0.0;
    double max = 0.0;
};

/// Summary of `values` (sample std, linearly interpolated quantiles).
EventStats summarize(std::vector<double> values);

/// Duration statistics of (from -> to) across units having both events.
/// Throws UnknownEvent for non-canonical names and MissingEvents when no
/// unit has both.
EventStats per_event_stats(const Trace& trace, const std::string& from, const std::string& to);

/// Event pairs reported by default: one per agent component.
const std::vector<std::pair<std::string, std::string>>& standard_event_pairs();

/// sched_done count over the span between the first and last of them.
/// Throws TooFewEvents below two events; infinite when they coincide.
double scheduler_throughput(const Trace& trace);

struct TraceReport {
    TtxReport ttx;
    Utilization utilization;
    std::map<std::string, EventStats> per_event_stats;
    std::map<std::string, Series> concurrency;
    std::optional<double> throughput;
};

/// Everything above in one pass; per-event pairs or throughput that cannot be
/// computed (e.g. a fully canceled run) are left out.
TraceReport build_report(const Trace& trace);

/// Report writers used by `analyze` and the figure subcommands. Each writes
/// CSV tables and, where meaningful, an SVG plot into `out_dir` and returns
/// the files written.
std::vector<std::filesystem::path> write_ttx_report(const Trace& trace,
                                                    const std::filesystem::path& out_dir);
std::vector<std::filesystem::path> write_ru_report(const Trace& trace,
                                                   const std::filesystem::path& out_dir);
std::vector<std::filesystem::path> write_concurrency_report(const Trace& trace,
                                                            const std::filesystem::path& out_dir);
std::vector<std::filesystem::path> write_events_report(const Trace& trace,
                                                       const std::filesystem::path& out_dir);
std::vector<std::filesystem::path> write_throughput_report(const Trace& trace,
                                                           const std::filesystem::path& out_dir);

/// Resource utilization of several sessions side by side, one bar each.
std::vector<std::filesystem::path> write_fig4(const std::vector<std::filesystem::path>& traces,
                                              const std::filesystem::path& out_dir);
/// Concurrency of every standard interval in one session.
std::vector<std::filesystem::path> write_fig5(const std::filesystem::path& trace,
                                              const std::filesystem::path& out_dir);
/// Per-unit timestamps of every canonical event, relative to the first pull.
std::vector<std::filesystem::path> write_fig6(const std::filesystem::path& trace,
                                              const std::filesystem::path& out_dir);
/// Scheduler time per unit against pilot size, grouped by scheduler.
std::vector<std::filesystem::path> write_fig8(const std::vector<std::filesystem::path>& traces,
                                              const std::filesystem::path& out_dir);

} // namespace pilot
