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
#include "pilot/latency.hpp"
#include "pilot/scheduler.hpp"
#include "pilot/session.hpp"

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

namespace pilot {

// All configuration files are INI text. Keys outside the documented schema
// raise UnknownKey; bad values raise SchemaError naming the dotted field,
// e.g. `task_counts[2]` or `latency.prepare_sigma`.
//
// Resource file, one [pilot] section:
//   resource_name, node_count, cores_per_node, walltime, backend
//   (nodes/cpn are accepted as short forms).
//
// Session file (`run`): top-level keys session, scheduler, seed, profile,
// output, executors, pull_batch, channel_capacity; sections [pilot] (may
// name a resource_file whose values it overrides), [workload] (count, cores,
// kind, duration, jitter, flops, command, id_prefix), [latency], [costs],
// [launch] (method, payload_exe).
//
// Matrix file (`matrix`): top-level keys mode, task_counts, cores_per_task,
// pilot_cores, cores_per_node, scheduler, repetitions, scale_factor, seed,
// backend, executors, walltime, output, profile; sections [payload] (kind,
// duration, jitter, flops, command), [latency], [costs], [launch].
//
// [latency]: preset = zero | titan, scale, prepare_median, prepare_sigma,
// ack_scale, ack_exponent, ack_sigma_scale, ack_sigma_exponent,
// reference_cores. Explicit values override the preset; `scale` multiplies
// every time afterwards.
// [costs]: preset = zero | titan, scale, sched_base, sched_probe, lookup,
// unsched_base, unsched_slot, dispatch.

PilotDescription load_resource_config(const std::filesystem::path& path);
PilotDescription parse_resource_config(std::istream& in);

SessionConfig load_session_config(const std::filesystem::path& path);
SessionConfig parse_session_config(std::istream& in,
                                   const std::filesystem::path& base_dir = ".");

enum class MatrixMode { Weak, Strong };
const char* to_string(MatrixMode m);

struct ExperimentMatrix {
    MatrixMode mode = MatrixMode::Weak;
    std::vector<std::uint64_t> task_counts;
    std::uint32_t cores_per_task = 4;
    std::vector<std::uint64_t> pilot_cores;
    std::uint32_t cores_per_node = 16;
    TaskPayload payload = default_payload();
    SchedulerKind scheduler = SchedulerKind::ContinuousSearch;
    std::uint32_t repetitions = 3;
    /// Every simulated or emulated time is divided by this.
    double scale_factor = 1.0;
    std::uint64_t seed = 1;
    Backend backend = Backend::Virtual;
    std::uint32_t executors = 1;
    double walltime = 86400.0;
    bool profile = true;
    std::filesystem::path output = "matrix";
    LatencyModel latency = LatencyModel::zero();
    ComponentCosts costs = ComponentCosts::zero();
    std::optional<LaunchMethod> launch;
    std::string payload_exe;

    static TaskPayload default_payload();

    /// Weak mode pairs task_counts[i] with pilot_cores[i]; strong mode runs
    /// the single task count on every pilot size.
    std::size_t configurations() const { return pilot_cores.size(); }
    std::uint64_t tasks_of(std::size_t config) const
    {
        return mode == MatrixMode::Weak ? task_counts.at(config) : task_counts.at(0);
    }
    std::size_t session_count() const { return configurations() * repetitions; }
    /// Resolved configuration as INI text, every default spelled out.
    std::string echo() const;
    /// Session for configuration `config` and repetition `rep`, with its
    /// derived seed and time compression applied.
    SessionConfig session(std::size_t config, std::uint32_t rep) const;
};

/// Reads and schema-checks a matrix file. Throws SchemaError (with the
/// offending field) or UnknownKey.
ExperimentMatrix validate_config(const std::filesystem::path& path);
ExperimentMatrix parse_matrix_config(std::istream& in);
/// Structural checks shared by the parsers; also usable on a hand-built
/// matrix. Weak mode without pilot_cores gets task_counts x cores_per_task.
void validate_matrix(ExperimentMatrix& matrix);

} // namespace pilot
