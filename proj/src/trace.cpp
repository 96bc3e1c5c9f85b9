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

#include "pilot/trace.hpp"

#include "pilot/error.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <map>
#include <ostream>
#include <unordered_map>

namespace pilot {

namespace {

void check_field(std::string_view field)
{
    if (field.find_first_of(",\n\r") != std::string_view::npos)
        throw TraceFormatError("trace field contains a delimiter: '" + std::string(field) + "'");
}

double parse_double(std::string_view s)
{
    double v = 0.0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || ptr != s.data() + s.size())
        throw TraceFormatError("bad number '" + std::string(s) + "'");
    return v;
}

// Time tolerance for ordering checks; the on-disk resolution is 1us.
constexpr double order_epsilon = 1e-6;

} // namespace

std::string format_event(const ProfileEvent& e)
{
    check_field(e.event);
    check_field(e.component);
    check_field(e.unit);
    check_field(e.pilot);
    check_field(e.info);
    char t[48];
    std::snprintf(t, sizeof t, "%.6f", e.time);
    std::string line;
    line.reserve(64 + e.event.size() + e.unit.size() + e.info.size());
    line += t;
    line += ',';
    line += e.event;
    line += ',';
    line += e.component;
    line += ',';
    line += std::to_string(e.worker);
    line += ',';
    line += e.unit;
    line += ',';
    line += e.pilot;
    line += ',';
    line += e.info;
    return line;
}

ProfileEvent parse_event(std::string_view line)
{
    std::string_view fields[7];
    std::size_t n = 0, start = 0;
    for (std::size_t i = 0; i <= line.size(); ++i) {
        if (i == line.size() || line[i] == ',') {
            if (n == 7)
                throw TraceFormatError("too many fields: " + std::string(line));
            fields[n++] = line.substr(start, i - start);
            start = i + 1;
        }
    }
    if (n != 7)
        throw TraceFormatError("expected 7 fields: " + std::string(line));
    ProfileEvent e;
    e.time = parse_double(fields[0]);
    e.event = fields[1];
    e.component = fields[2];
    unsigned worker = 0;
    auto [ptr, ec] = std::from_chars(fields[3].data(), fields[3].data() + fields[3].size(), worker);
    if (ec != std::errc{} || ptr != fields[3].data() + fields[3].size())
        throw TraceFormatError("bad worker id: " + std::string(line));
    e.worker = worker;
    e.unit = fields[4];
    e.pilot = fields[5];
    e.info = fields[6];
    return e;
}

void write_trace_header(std::ostream& out)
{
    out << trace_schema_line << '\n' << trace_columns_line << '\n';
}

void write_trace(const std::filesystem::path& path, const std::vector<ProfileEvent>& events)
{
    std::ofstream out(path, std::ios::out | std::ios::trunc);
    if (!out)
        throw Error("cannot write trace " + path.string());
    write_trace_header(out);
    for (const auto& e : events)
        out << format_event(e) << '\n';
}

std::vector<ProfileEvent> read_trace(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in)
        throw Error("cannot read trace " + path.string());
    std::string line;
    if (!std::getline(in, line) || line != trace_schema_line)
        throw TraceFormatError(path.string() + ": missing schema line");
    if (!std::getline(in, line) || line != trace_columns_line)
        throw TraceFormatError(path.string() + ": missing column header");
    std::vector<ProfileEvent> events;
    while (std::getline(in, line)) {
        if (line.empty())
            continue;
        events.push_back(parse_event(line));
    }
    return events;
}

double ClockOffset::at(double local) const
{
    if (end_local <= start_local)
        return start_offset;
    const double f = std::clamp((local - start_local) / (end_local - start_local), 0.0, 1.0);
    return start_offset + f * (end_offset - start_offset);
}

ClockOffset clock_offset(const std::vector<ProfileEvent>& profile)
{
    ClockOffset off;
    bool have = false;
    for (const auto& e : profile) {
        if (e.event != events::sync)
            continue;
        if (!e.info.starts_with("ref="))
            throw TraceFormatError("sync event without ref= in component " + e.component);
        const double ref = parse_double(std::string_view(e.info).substr(4));
        if (!have) {
            off.component = e.component;
            off.start_local = off.end_local = e.time;
            off.start_offset = off.end_offset = ref - e.time;
            have = true;
        } else {
            off.end_local = e.time;
            off.end_offset = ref - e.time;
        }
    }
    if (!have) {
        const std::string who = profile.empty() ? std::string("<empty>") : profile.front().component;
        throw MissingSyncPoint("no sync point in profile of component " + who);
    }
    return off;
}

void check_consistency(const std::vector<ProfileEvent>& events)
{
    constexpr std::size_t n_order = std::size(unit_event_order);
    auto index_of = [](std::string_view name) -> int {
        for (std::size_t i = 0; i < n_order; ++i)
            if (unit_event_order[i] == name)
                return static_cast<int>(i);
        return -1;
    };

    std::unordered_map<std::string, std::array<double, n_order>> per_unit;
    for (const auto& e : events) {
        if (e.unit.empty())
            continue;
        const int idx = index_of(e.event);
        if (idx < 0)
            continue;
        auto [it, inserted] = per_unit.try_emplace(e.unit);
        if (inserted)
            it->second.fill(std::nan(""));
        double& slot = it->second[static_cast<std::size_t>(idx)];
        if (!std::isnan(slot))
            throw InconsistentTrace("unit " + e.unit + ": duplicate " + e.event);
        slot = e.time;
    }

    // Deterministic report order.
    std::map<std::string, std::array<double, n_order>> sorted(per_unit.begin(), per_unit.end());
    for (const auto& [unit, times] : sorted) {
        double last = -std::numeric_limits<double>::infinity();
        std::string_view last_name;
        for (std::size_t i = 0; i < n_order; ++i) {
            if (std::isnan(times[i]))
                continue;
            if (times[i] + order_epsilon < last)
                throw InconsistentTrace("unit " + unit + ": " + std::string(unit_event_order[i]) +
                                        " precedes " + std::string(last_name));
            last = times[i];
            last_name = unit_event_order[i];
        }
    }
}

std::vector<ProfileEvent> synchronize(const std::vector<std::vector<ProfileEvent>>& profiles)
{
    std::vector<ProfileEvent> unified;
    for (const auto& profile : profiles) {
        if (profile.empty())
            continue;
        const ClockOffset off = clock_offset(profile);
        for (const auto& e : profile) {
            if (e.event == events::sync)
                continue;
            ProfileEvent r = e;
            r.time = e.time + off.at(e.time);
            unified.push_back(std::move(r));
        }
    }
    std::stable_sort(unified.begin(), unified.end(),
                     [](const ProfileEvent& a, const ProfileEvent& b) { return a.time < b.time; });
    check_consistency(unified);
    return unified;
}

std::vector<ProfileEvent> synchronize(const std::vector<std::filesystem::path>& files,
                                      const std::filesystem::path& unified_out)
{
    std::vector<std::vector<ProfileEvent>> profiles;
    profiles.reserve(files.size());
    for (const auto& f : files)
        profiles.push_back(read_trace(f));
    auto unified = synchronize(profiles);
    write_trace(unified_out, unified);
    return unified;
}

} // namespace pilot
