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

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <memory>
#include <mutex>
#include <string>
#include <string_view>
#include <vector>

namespace pilot {

/// Canonical event names.
namespace events {
inline constexpr std::string_view db_pull = "db_pull";
inline constexpr std::string_view sched_start = "sched_start";
inline constexpr std::string_view sched_done = "sched_done";
inline constexpr std::string_view exec_queued = "exec_queued";
inline constexpr std::string_view exec_start = "exec_start";
inline constexpr std::string_view payload_start = "payload_start";
inline constexpr std::string_view payload_stop = "payload_stop";
inline constexpr std::string_view spawn_return = "spawn_return";
inline constexpr std::string_view unsched_done = "unsched_done";
inline constexpr std::string_view session_start = "session_start";
inline constexpr std::string_view session_end = "session_end";
inline constexpr std::string_view calibration = "calibration";
inline constexpr std::string_view sync = "sync";
} // namespace events

/// Per-unit events in the order they must occur.
inline constexpr std::string_view unit_event_order[] = {
    events::db_pull,       events::sched_start,  events::sched_done,
    events::exec_queued,   events::exec_start,   events::payload_start,
    events::payload_stop,  events::spawn_return, events::unsched_done,
};

bool is_canonical_event(std::string_view name);

struct ProfileEvent {
    double time = 0.0;
    std::string event;
    std::string component;
    std::uint32_t worker = 0;
    std::string unit;
    std::string pilot;
    std::string info;

    bool operator==(const ProfileEvent&) const = default;
};

/// Buffered event sink owned by exactly one worker. Not thread safe; each
/// worker asks the Profiler for its own.
class Recorder {
public:
    Recorder(std::filesystem::path file, std::string component, std::uint32_t worker,
             std::string pilot, bool enabled, std::size_t flush_threshold,
             std::chrono::milliseconds flush_interval);
    ~Recorder();

    Recorder(const Recorder&) = delete;
    Recorder& operator=(const Recorder&) = delete;

    void record(double time, std::string_view event, std::string_view unit = {},
                std::string_view info = {});
    /// Clock sync point: local timestamp plus the reference clock reading
    /// taken at the same instant.
    void sync(double local, double reference);
    void flush();
    void close();

    bool enabled() const noexcept { return enabled_; }
    const std::string& component() const noexcept { return component_; }
    const std::filesystem::path& file() const noexcept { return file_; }
    std::uint64_t recorded() const noexcept { return recorded_; }

private:
    std::filesystem::path file_;
    std::string component_;
    std::uint32_t worker_;
    std::string pilot_;
    bool enabled_;
    std::size_t flush_threshold_;
    std::chrono::milliseconds flush_interval_;
    std::chrono::steady_clock::time_point last_flush_;
    std::vector<ProfileEvent> buffer_;
    std::ofstream out_;
    std::uint64_t recorded_ = 0;
    bool closed_ = false;
};

struct ProfilerOptions {
    bool enabled = true;
    std::size_t flush_threshold = 4096;
    std::chrono::milliseconds flush_interval{1000};
};

/// Session-wide owner of recorders. Each component gets its own
/// `<dir>/<component>.prof` file.
class Profiler {
public:
    Profiler(std::filesystem::path dir, std::string pilot_id, ProfilerOptions options = {});
    ~Profiler();

    /// Thread safe. The returned reference stays valid until the Profiler is
    /// destroyed. Component names must be unique.
    Recorder& recorder(const std::string& component, std::uint32_t worker = 0);

    void close();
    bool enabled() const noexcept { return options_.enabled; }
    const std::filesystem::path& directory() const noexcept { return dir_; }
    std::vector<std::filesystem::path> component_files() const;

private:
    std::filesystem::path dir_;
    std::string pilot_;
    ProfilerOptions options_;
    mutable std::mutex mutex_;
    std::vector<std::unique_ptr<Recorder>> recorders_;
};

} // namespace pilot
