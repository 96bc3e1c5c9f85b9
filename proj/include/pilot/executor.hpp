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

#include <sys/types.h>

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <vector>

namespace pilot {

class Recorder;

enum class LaunchMethod { ForkLocal, ShellWrapper, VirtualLaunch };

const char* to_string(LaunchMethod m);
/// Config spellings: `fork`, `shell`, `virtual`.
LaunchMethod launch_method_from_string(const std::string& s);
LaunchMethod default_launch_method(Backend backend);
bool is_compatible(LaunchMethod method, Backend backend);

/// Environment variables handed to every payload.
inline constexpr const char* env_unit_id = "PILOT_UNIT_ID";
inline constexpr const char* env_slots = "PILOT_SLOTS";
inline constexpr const char* env_cores = "PILOT_CORES";

struct LaunchOptions {
    /// Session sandbox; wrapper scripts and captured output live here.
    std::filesystem::path sandbox;
    /// Executable implementing the emulated payloads (`<exe> sleep <s>`,
    /// `<exe> burn <flops>`).
    std::string payload_exe;
    /// Host calibration used to size flop_burn payloads.
    double flops_per_sec = 0.0;
};

struct CommandSpec {
    std::vector<std::string> argv;
    std::map<std::string, std::string> env;
    /// ShellWrapper only: `<sandbox>/<unit_id>.sh` and its content.
    std::filesystem::path wrapper_path;
    std::string wrapper_script;
    /// Empty means /dev/null.
    std::filesystem::path stdout_path;
    std::filesystem::path stderr_path;

    /// Deterministic multi-line rendering, used for logging and comparison.
    std::string render() const;
    bool operator==(const CommandSpec&) const = default;
};

/// Builds the launch command of a scheduled unit. The slot list is always
/// embedded (env var or wrapper argument) so the payload can verify where it
/// was placed. Throws IncompatibleMethod when the method does not match the
/// backend or the unit holds no allocation.
CommandSpec build_launch_command(const ComputeUnit& unit, LaunchMethod method, Backend backend,
                                 const LaunchOptions& options);

/// Quotes one word for /bin/sh.
std::string shell_quote(const std::string& word);

/// A running child process.
struct ChildHandle {
    pid_t pid = -1;
    std::string unit_id;
};

/// Writes the wrapper script if any, then posix_spawn()s the command.
/// Throws SpawnFailure when the process cannot be started.
ChildHandle spawn_process(const CommandSpec& spec);
/// Non-blocking; returns the exit code once the child has terminated
/// (128 + signal for signalled children). Throws LostChild if the child was
/// reaped elsewhere.
std::optional<int> poll_process(const ChildHandle& child);
int wait_process(const ChildHandle& child);
void kill_process(const ChildHandle& child);

/// Local copies around execution. Throws SpawnFailure on stage-in errors.
void stage_in(const UnitDescription& unit, const std::filesystem::path& sandbox);
/// Returns false if any stage-out copy failed.
bool stage_out(const UnitDescription& unit, const std::filesystem::path& sandbox);

/// Timestamps of one launch, in the order they must occur.
struct LaunchRecord {
    std::string unit_id;
    CommandSpec command;
    double exec_queued = 0.0;
    double exec_start = 0.0;
    double payload_start = 0.0;
    double payload_stop = 0.0;
    double spawn_return = 0.0;
    int exit_code = 0;

    bool ordered() const;
};

/// Launch latencies of one unit. Drawn from a stream keyed by (seed, unit
/// index), so both backends and any executor count see the same values.
struct LatencySample {
    double prepare = 0.0;
    double ack = 0.0;
};
LatencySample sample_latencies(const LatencyModel& latency, std::uint64_t pilot_cores,
                               std::uint64_t seed, std::uint64_t unit_index);

/// Virtual backend: a unit queued at `exec_queued` and picked up by a logical
/// executor worker at `picked` spends `dispatch` seconds in the worker, waits
/// the prepare latency, runs for its sampled payload duration and is
/// acknowledged after the completion latency.
LaunchRecord simulate_launch(const ComputeUnit& unit, double exec_queued, double picked,
                             double dispatch, LatencySample latency);

/// Throws ConfigError unless n >= 1.
void validate_executor_count(std::uint32_t n);

/// One real-backend executor worker. It owns the children it spawned and
/// advances each unit through prepare, run and acknowledge without blocking,
/// so a single worker can hold many running payloads.
class RealExecutor {
public:
    using Clock = std::function<double()>;

    RealExecutor(std::uint32_t worker_id, Backend backend, LaunchMethod method,
                 LaunchOptions options, LatencyModel latency, std::uint64_t pilot_cores,
                 std::uint64_t seed, Clock clock, Recorder* recorder);
    ~RealExecutor();

    RealExecutor(const RealExecutor&) = delete;
    RealExecutor& operator=(const RealExecutor&) = delete;

    /// Takes a unit in PendingExecution; starts its prepare phase.
    void accept(ComputeUnit unit);
    /// Advances every owned unit; returns those whose spawn-return has been
    /// processed (Done or Failed), ready to release their slots.
    std::vector<ComputeUnit> poll();
    /// Kills running children and returns every owned unit as Canceled.
    std::vector<ComputeUnit> cancel_all();

    bool idle() const noexcept { return preparing_.empty() && running_.empty() && acking_.empty(); }
    std::size_t owned() const noexcept { return preparing_.size() + running_.size() + acking_.size(); }
    /// Earliest pending deadline (prepare or ack), if any.
    std::optional<double> next_deadline() const;

private:
    struct Pending {
        ComputeUnit unit;
        LatencySample latency;
        double due = 0.0;
    };
    struct Running {
        ComputeUnit unit;
        LatencySample latency;
        ChildHandle child;
    };

    void start(Pending p, std::vector<ComputeUnit>& out);

    std::uint32_t worker_id_;
    Backend backend_;
    LaunchMethod method_;
    LaunchOptions options_;
    LatencyModel latency_;
    std::uint64_t pilot_cores_;
    std::uint64_t seed_;
    Clock clock_;
    Recorder* recorder_;
    std::vector<Pending> preparing_;
    std::vector<Running> running_;
    std::vector<Pending> acking_;
};

} // namespace pilot
