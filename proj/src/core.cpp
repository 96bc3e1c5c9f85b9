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

#include "pilot/core.hpp"

#include "pilot/error.hpp"
#include "pilot/profiler.hpp"

#include <charconv>
#include <stdexcept>

namespace pilot {

const char* to_string(Backend b)
{
    return b == Backend::Real ? "real" : "virtual";
}

Backend backend_from_string(const std::string& s)
{
    if (s == "real")
        return Backend::Real;
    if (s == "virtual")
        return Backend::Virtual;
    throw InvalidDescription("unknown backend '" + s + "'");
}

bool is_valid_unit_id(std::string_view id)
{
    if (id.empty() || id.size() > 128)
        return false;
    for (char c : id) {
        const bool ok = (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') ||
                        (c >= '0' && c <= '9') || c == '_' || c == '-' || c == '.';
        if (!ok)
            return false;
    }
    return id != "." && id != "..";
}

const char* to_string(UnitState s)
{
    switch (s) {
    case UnitState::New: return "New";
    case UnitState::PendingSchedule: return "PendingSchedule";
    case UnitState::Scheduled: return "Scheduled";
    case UnitState::PendingExecution: return "PendingExecution";
    case UnitState::Executing: return "Executing";
    case UnitState::Done: return "Done";
    case UnitState::Failed: return "Failed";
    case UnitState::Canceled: return "Canceled";
    }
    return "?";
}

std::string_view state_event(UnitState s)
{
    switch (s) {
    case UnitState::New: return "state_new";
    case UnitState::PendingSchedule: return "state_pending_schedule";
    case UnitState::Scheduled: return "state_scheduled";
    case UnitState::PendingExecution: return "state_pending_execution";
    case UnitState::Executing: return "state_executing";
    case UnitState::Done: return "state_done";
    case UnitState::Failed: return "state_failed";
    case UnitState::Canceled: return "state_canceled";
    }
    return "state_unknown";
}

bool is_terminal(UnitState s)
{
    return s == UnitState::Done || s == UnitState::Failed || s == UnitState::Canceled;
}

bool can_transition(UnitState from, UnitState to)
{
    if (is_terminal(from))
        return false;
    if (is_terminal(to))
        return true;
    return static_cast<int>(to) == static_cast<int>(from) + 1;
}

std::string format_slots(std::span<const Slot> slots)
{
    std::string out;
    std::size_t i = 0;
    while (i < slots.size()) {
        std::size_t j = i;
        while (j + 1 < slots.size() && slots[j + 1].node == slots[i].node &&
               slots[j + 1].core == slots[j].core + 1)
            ++j;
        if (!out.empty())
            out += ';';
        out += std::to_string(slots[i].node);
        out += ':';
        out += std::to_string(slots[i].core);
        if (j > i) {
            out += '-';
            out += std::to_string(slots[j].core);
        }
        i = j + 1;
    }
    return out;
}

namespace {

std::uint32_t parse_u32(std::string_view s, std::string_view whole)
{
    std::uint32_t v = 0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || ptr != s.data() + s.size() || s.empty())
        throw std::invalid_argument("bad slot list '" + std::string(whole) + "'");
    return v;
}

} // namespace

std::vector<Slot> parse_slots(std::string_view text)
{
    std::vector<Slot> slots;
    std::size_t start = 0;
    while (start < text.size()) {
        std::size_t end = text.find(';', start);
        if (end == std::string_view::npos)
            end = text.size();
        const std::string_view part = text.substr(start, end - start);
        const std::size_t colon = part.find(':');
        if (colon == std::string_view::npos)
            throw std::invalid_argument("bad slot list '" + std::string(text) + "'");
        const std::uint32_t node = parse_u32(part.substr(0, colon), text);
        const std::string_view cores = part.substr(colon + 1);
        const std::size_t dash = cores.find('-');
        std::uint32_t first = 0, last = 0;
        if (dash == std::string_view::npos) {
            first = last = parse_u32(cores, text);
        } else {
            first = parse_u32(cores.substr(0, dash), text);
            last = parse_u32(cores.substr(dash + 1), text);
        }
        if (last < first)
            throw std::invalid_argument("bad slot range '" + std::string(text) + "'");
        for (std::uint32_t c = first; c <= last; ++c)
            slots.push_back({node, c});
        start = end + 1;
    }
    return slots;
}

ResourceModel::ResourceModel(std::uint32_t node_count, std::uint32_t cores_per_node)
    : cores_per_node_(cores_per_node)
{
    nodes_.reserve(node_count);
    for (std::uint32_t i = 0; i < node_count; ++i)
        nodes_.push_back({"node" + std::to_string(i),
                          std::vector<std::uint8_t>(cores_per_node, 0), cores_per_node});
    free_ = total_cores();
}

bool ResourceModel::is_free(Slot s) const
{
    return nodes_.at(s.node).busy.at(s.core) == 0;
}

void ResourceModel::occupy(std::span<const Slot> slots)
{
    for (const Slot& s : slots)
        if (!is_free(s))
            throw std::logic_error("slot " + std::to_string(s.node) + ":" +
                                   std::to_string(s.core) + " already busy");
    for (const Slot& s : slots) {
        nodes_[s.node].busy[s.core] = 1;
        --nodes_[s.node].free;
    }
    free_ -= slots.size();
}

void ResourceModel::release(std::span<const Slot> slots)
{
    for (const Slot& s : slots)
        if (is_free(s))
            throw DoubleFree("slot " + std::to_string(s.node) + ":" + std::to_string(s.core) +
                             " already free");
    for (const Slot& s : slots) {
        nodes_[s.node].busy[s.core] = 0;
        ++nodes_[s.node].free;
    }
    free_ += slots.size();
}

std::vector<Slot> ResourceModel::free_slots() const
{
    std::vector<Slot> out;
    out.reserve(free_);
    for (std::uint32_t n = 0; n < nodes_.size(); ++n)
        for (std::uint32_t c = 0; c < cores_per_node_; ++c)
            if (!nodes_[n].busy[c])
                out.push_back({n, c});
    return out;
}

ResourceModel validate_pilot(const PilotDescription& desc)
{
    if (desc.node_count == 0)
        throw InvalidDescription("pilot needs at least one node");
    if (desc.cores_per_node == 0)
        throw InvalidDescription("pilot needs at least one core per node");
    if (!(desc.walltime > 0.0))
        throw InvalidDescription("pilot walltime must be > 0");
    desc.latency.validate();
    return ResourceModel(desc.node_count, desc.cores_per_node);
}

std::optional<double> ComputeUnit::time_of(std::string_view event) const
{
    for (const auto& e : timeline)
        if (e.event == event)
            return e.time;
    return std::nullopt;
}

void ComputeUnit::mark(std::string_view event, double now, Recorder* rec, std::string_view info)
{
    timeline.push_back({std::string(event), now});
    if (rec)
        rec->record(now, event, desc.unit_id, info);
}

void ComputeUnit::transition(UnitState to, double now, Recorder* rec)
{
    if (!can_transition(state, to))
        throw IllegalTransition("unit " + desc.unit_id + ": " + to_string(state) + " -> " +
                                to_string(to));
    if (!timeline.empty() && now < timeline.back().time)
        throw IllegalTransition("unit " + desc.unit_id + ": timestamp goes backwards");
    state = to;
    mark(state_event(to), now, rec);
}

ComputeUnit transition(ComputeUnit unit, UnitState to, double now, Recorder* rec)
{
    unit.transition(to, now, rec);
    return unit;
}

} // namespace pilot
