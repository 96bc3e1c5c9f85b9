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
#include "pilot/executor.hpp"
#include "pilot/latency.hpp"
#include "pilot/scheduler.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace pilot {

/// Homogeneous bag of tasks. Ids are `<prefix>.<index>` with six digits.
struct WorkloadSpec {
    std::uint64_t count = 0;
    std::uint32_t cores = 1;
    TaskPayload payload;
    std::string id_prefix = "unit";
};

std::vector<UnitDescription> make_workload(const WorkloadSpec& spec);

struct SessionConfig {
    std::string session_id = "session";
    PilotDescription pilot;
    std::vector<UnitDescription> units;
    SchedulerKind scheduler = SchedulerKind::ContinuousSearch;
    /// Virtual backend only: simulated agent component costs.
    ComponentCosts costs;
    std::uint64_t seed = 0;
    bool profile = true;
    /// The session writes into `<output_dir>/<session_id>/`.
    std::filesystem::path output_dir = "sessions";
    std::uint32_t executors = 1;
    std::size_t pull_batch = 4096;
    /// Defaults to the backend's natural method.
    std::optional<LaunchMethod> launch;
    /// Empty: `pilot-payload` next to the running binary, else on PATH.
    std::string payload_exe;
    /// 0 means twice the pilot's task capacity.
    std::size_t channel_capacity = 0;
};

struct SessionResult {
    std::string session_id;
    std::filesystem::path directory;
    /// Unified trace; empty when profiling is off.
    std::filesystem::path trace;
    /// Final state of every unit, in submission order.
    std::vector<ComputeUnit> units;
    double start = 0.0;
    double end = 0.0;
    /// Walltime expired before every unit finished.
    bool aborted = false;
    double wall_seconds = 0.0;
    std::size_t done = 0;
    std::size_t failed = 0;
    std::size_t canceled = 0;

    bool clean() const noexcept { return !aborted && failed == 0 && canceled == 0; }
    /// Throws SessionAborted when the walltime cut the session short.
    void throw_if_aborted() const;
};

/// Checks the configuration (pilot, unit ids, executor count, launch method)
/// before anything is started. Throws the matching error type.
void validate_session(const SessionConfig& config);

/// Tasks the pilot can run at once given the smallest unit in the workload.
std::uint64_t task_capacity(const SessionConfig& config);

/// Runs the workload to completion or walltime and merges the profile.
/// Walltime expiry cancels every unfinished unit and still yields a
/// consistent trace; it is reported through SessionResult::aborted.
SessionResult run_session(const SessionConfig& config);

SessionResult run_virtual(const SessionConfig& config);
SessionResult run_real(const SessionConfig& config);

/// Directory of the running executable plus `pilot-payload`, if it exists.
std::string default_payload_exe();

} // namespace pilot
