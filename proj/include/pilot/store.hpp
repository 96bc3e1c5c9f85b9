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
#include <filesystem>
#include <string>
#include <unordered_set>
#include <vector>

namespace pilot {

class Recorder;

enum class StoreBacking { InMemory, FileBacked };

/// The agent's unit source. Units come out exactly once, in insertion order.
/// The file-backed variant keeps one JSON object per line and a read cursor,
/// so a store file can be prepared by one process and drained by another.
class WorkloadStore {
public:
    explicit WorkloadStore(std::size_t pull_batch = 1024);
    /// Creates (truncating) a file-backed store.
    WorkloadStore(const std::filesystem::path& file, std::size_t pull_batch);

    /// Opens an existing store file; all of its units are pending.
    static WorkloadStore open(const std::filesystem::path& file, std::size_t pull_batch);

    StoreBacking backing() const noexcept { return backing_; }
    std::size_t pull_batch() const noexcept { return pull_batch_; }

    /// Throws ConfigError on a duplicate or malformed unit id.
    void insert(UnitDescription unit);
    std::vector<UnitDescription> pull(std::size_t batch);

    std::size_t pending() const noexcept { return pending_.size(); }
    std::size_t inserted() const noexcept { return ids_.size(); }

private:
    StoreBacking backing_ = StoreBacking::InMemory;
    std::filesystem::path file_;
    std::size_t pull_batch_;
    std::deque<UnitDescription> pending_;
    std::unordered_set<std::string> ids_;
};

/// Removes up to `batch` units (batch >= 1, else ConfigError). When a
/// recorder is given every pulled unit gets a db_pull event at `now`.
std::vector<UnitDescription> pull_units(WorkloadStore& store, std::size_t batch, double now = 0.0,
                                        Recorder* recorder = nullptr);

std::string unit_to_json_line(const UnitDescription& unit);
UnitDescription unit_from_json_line(const std::string& line);

} // namespace pilot
