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

#include "pilot/config.hpp"

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace pilot {

/// Outcome of one session of a matrix. Trace-derived fields are empty when
/// the session failed to run or profiling was off.
struct MatrixRow {
    std::size_t config = 0;
    std::uint32_t repetition = 0;
    std::uint64_t tasks = 0;
    std::uint64_t pilot_cores = 0;
    std::string session_id;
    std::filesystem::path trace;
    /// Set when run_session threw.
    std::string error;
    bool aborted = false;
    std::size_t done = 0;
    std::size_t failed = 0;
    std::size_t canceled = 0;
    double wall_seconds = 0.0;
    std::optional<double> ttx;
    std::optional<double> ideal_ttx;
    std::optional<double> workload_pct;
    std::optional<double> overhead_pct;
    std::optional<double> idle_pct;
    std::optional<double> throughput;

    bool clean() const noexcept
    {
        return error.empty() && !aborted && failed == 0 && canceled == 0;
    }
};

struct MatrixResult {
    std::filesystem::path directory;
    std::vector<MatrixRow> rows;
    /// sessions.csv, summary.csv and config.ini.
    std::vector<std::filesystem::path> files;

    bool clean() const noexcept;
};

/// Runs every (configuration, repetition) pair in order. A failing session is
/// recorded and the matrix moves on. Progress lines go to `log` if given.
MatrixResult run_matrix(const ExperimentMatrix& matrix, std::ostream* log = nullptr);

/// Per-session table as written to sessions.csv.
std::string sessions_csv(const std::vector<MatrixRow>& rows);
/// Mean and sample std per configuration as written to summary.csv.
std::string summary_csv(const std::vector<MatrixRow>& rows);

} // namespace pilot
