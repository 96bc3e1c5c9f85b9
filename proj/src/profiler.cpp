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

#include "pilot/profiler.hpp"

#include "pilot/error.hpp"
#include "pilot/trace.hpp"

#include <algorithm>

namespace pilot {

bool is_canonical_event(std::string_view name)
{
    for (auto e : unit_event_order)
        if (name == e)
            return true;
    if (name == events::session_start || name == events::session_end ||
        name == events::calibration || name == events::sync)
        return true;
    return name.starts_with("state_");
}

Recorder::Recorder(std::filesystem::path file, std::string component, std::uint32_t worker,
                   std::string pilot, bool enabled, std::size_t flush_threshold,
                   std::chrono::milliseconds flush_interval)
    : file_(std::move(file)),
      component_(std::move(component)),
      worker_(worker),
      pilot_(std::move(pilot)),
      enabled_(enabled),
      flush_threshold_(std::max<std::size_t>(1, flush_threshold)),
      flush_interval_(flush_interval),
      last_flush_(std::chrono::steady_clock::now())
{
    if (!enabled_)
        return;
    out_.open(file_, std::ios::out | std::ios::trunc);
    if (!out_)
        throw Error("cannot open profile " + file_.string());
    write_trace_header(out_);
    out_.flush();
    buffer_.reserve(flush_threshold_);
}

Recorder::~Recorder()
{
    try {
        close();
    } catch (...) {
    }
}

void Recorder::record(double time, std::string_view event, std::string_view unit,
                      std::string_view info)
{
    if (!enabled_ || closed_)
        return;
    buffer_.push_back(ProfileEvent{time, std::string(event), component_, worker_,
                                   std::string(unit), pilot_, std::string(info)});
    ++recorded_;
    if (buffer_.size() >= flush_threshold_) {
        flush();
    } else if ((recorded_ & 63) == 0 &&
               std::chrono::steady_clock::now() - last_flush_ >= flush_interval_) {
        flush();
    }
}

void Recorder::sync(double local, double reference)
{
    char buf[64];
    std::snprintf(buf, sizeof buf, "ref=%.6f", reference);
    record(local, events::sync, {}, buf);
}

void Recorder::flush()
{
    if (!enabled_ || closed_)
        return;
    for (const auto& e : buffer_)
        out_ << format_event(e) << '\n';
    out_.flush();
    buffer_.clear();
    last_flush_ = std::chrono::steady_clock::now();
}

void Recorder::close()
{
    if (closed_)
        return;
    flush();
    if (out_.is_open())
        out_.close();
    closed_ = true;
}

Profiler::Profiler(std::filesystem::path dir, std::string pilot_id, ProfilerOptions options)
    : dir_(std::move(dir)), pilot_(std::move(pilot_id)), options_(options)
{
    if (options_.enabled)
        std::filesystem::create_directories(dir_);
}

Profiler::~Profiler()
{
    try {
        close();
    } catch (...) {
    }
}

Recorder& Profiler::recorder(const std::string& component, std::uint32_t worker)
{
    std::lock_guard lock(mutex_);
    for (const auto& r : recorders_)
        if (r->component() == component)
            throw Error("duplicate profiler component '" + component + "'");
    recorders_.push_back(std::make_unique<Recorder>(dir_ / (component + ".prof"), component,
                                                    worker, pilot_, options_.enabled,
                                                    options_.flush_threshold,
                                                    options_.flush_interval));
    return *recorders_.back();
}

void Profiler::close()
{
    std::lock_guard lock(mutex_);
    for (auto& r : recorders_)
        r->close();
}

std::vector<std::filesystem::path> Profiler::component_files() const
{
    std::lock_guard lock(mutex_);
    std::vector<std::filesystem::path> files;
    if (!options_.enabled)
        return files;
    for (const auto& r : recorders_)
        files.push_back(r->file());
    std::sort(files.begin(), files.end());
    return files;
}

} // namespace pilot
