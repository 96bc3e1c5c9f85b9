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

#include "pilot/profiler.hpp"

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

namespace pilot {

/// First line of every profile file.
inline constexpr std::string_view trace_schema_line = "#pilot-prof v1";
/// Second line: column names.
inline constexpr std::string_view trace_columns_line = "time,event,component,worker,unit,pilot,info";

std::string format_event(const ProfileEvent& e);
ProfileEvent parse_event(std::string_view line);

void write_trace_header(std::ostream& out);
void write_trace(const std::filesystem::path& path, const std::vector<ProfileEvent>& events);
std::vector<ProfileEvent> read_trace(const std::filesystem::path& path);

/// Linear clock model of one component, from its two sync points.
struct ClockOffset {
    std::string component;
    double start_local = 0.0;
    double start_offset = 0.0;
    double end_local = 0.0;
    double end_offset = 0.0;

    /// Offset to add to a local timestamp, interpolated between the samples.
    double at(double local) const;
};

/// Derives the clock model from the `sync` events of one component profile.
/// Throws MissingSyncPoint when none is present.
ClockOffset clock_offset(const std::vector<ProfileEvent>& profile);

/// Checks the per-unit canonical event order; throws InconsistentTrace naming
/// the first offending unit.
void check_consistency(const std::vector<ProfileEvent>& events);

/// Rebases every component profile onto the reference clock, merges them in
/// time order (ties keep component/file order), drops sync rows, checks
/// consistency and returns the unified trace.
std::vector<ProfileEvent> synchronize(const std::vector<std::vector<ProfileEvent>>& profiles);
std::vector<ProfileEvent> synchronize(const std::vector<std::filesystem::path>& files,
                                      const std::filesystem::path& unified_out);

} // namespace pilot
