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

#include "pilot/executor.hpp"

#include "pilot/error.hpp"
#include "pilot/profiler.hpp"

#include <algorithm>
#include <cerrno>
#include <csignal>
#include <cstdio>
#include <cstring>
#include <fcntl.h>
#include <fstream>
#include <spawn.h>
#include <sys/wait.h>

extern char** environ;

namespace pilot {

const char* to_string(LaunchMethod m)
{
    switch (m) {
    case LaunchMethod::ForkLocal: return "fork";
    case LaunchMethod::ShellWrapper: return "shell";
    case LaunchMethod::VirtualLaunch: return "virtual";
    }
    return "?";
}

LaunchMethod launch_method_from_string(const std::string& s)
{
    if (s == "fork")
        return LaunchMethod::ForkLocal;
    if (s == "shell")
        return LaunchMethod::ShellWrapper;
    if (s == "virtual")
        return LaunchMethod::VirtualLaunch;
    throw InvalidDescription("unknown launch method '" + s + "'");
}

LaunchMethod default_launch_method(Backend backend)
{
    return backend == Backend::Real ? LaunchMethod::ForkLocal : LaunchMethod::VirtualLaunch;
}

bool is_compatible(LaunchMethod method, Backend backend)
{
    return (method == LaunchMethod::VirtualLaunch) == (backend == Backend::Virtual);
}

std::string shell_quote(const std::string& word)
{
    std::string out = "'";
    for (char c : word) {
        if (c == '\'')
            out += "'\\''";
        else
            out += c;
    }
    out += '\'';
    return out;
}

std::string CommandSpec::render() const
{
    std::string out = "argv:";
    for (const auto& a : argv)
        out += ' ' + shell_quote(a);
    out += '\n';
    for (const auto& [k, v] : env)
        out += "env: " + k + '=' + v + '\n';
    if (!wrapper_path.empty())
        out += "wrapper: " + wrapper_path.string() + '\n' + wrapper_script;
    if (!stdout_path.empty())
        out += "stdout: " + stdout_path.string() + '\n';
    if (!stderr_path.empty())
        out += "stderr: " + stderr_path.string() + '\n';
    return out;
}

namespace {

std::vector<std::string> payload_argv(const ComputeUnit& unit, const LaunchOptions& options,
                                      const char* exe_fallback)
{
    const TaskPayload& p = unit.desc.payload;
    const std::string exe = options.payload_exe.empty() ? exe_fallback : options.payload_exe;
    char buf[64];
    switch (p.kind) {
    case PayloadKind::Sleep:
        std::snprintf(buf, sizeof buf, "%.6f", unit.payload_duration);
        return {exe, "sleep", buf};
    case PayloadKind::FlopBurn: {
        std::uint64_t flops = p.flop_count;
        if (flops == 0)
            flops = static_cast<std::uint64_t>(unit.payload_duration * options.flops_per_sec);
        return {exe, "burn", std::to_string(flops)};
    }
    case PayloadKind::External:
        return p.command;
    }
    return {};
}

} // namespace

CommandSpec build_launch_command(const ComputeUnit& unit, LaunchMethod method, Backend backend,
                                 const LaunchOptions& options)
{
    if (!is_compatible(method, backend))
        throw IncompatibleMethod(std::string("launch method ") + to_string(method) +
                                 " cannot run on the " + to_string(backend) + " backend");
    if (!unit.allocation || unit.allocation->slots.size() != unit.desc.cores)
        throw IncompatibleMethod("unit " + unit.id() + " has no live allocation");

    const std::string slots = format_slots(unit.allocation->slots);
    CommandSpec spec;
    spec.env[env_unit_id] = unit.id();
    spec.env[env_cores] = std::to_string(unit.desc.cores);

    switch (method) {
    case LaunchMethod::ForkLocal:
        spec.argv = payload_argv(unit, options, "pilot-payload");
        spec.env[env_slots] = slots;
        break;
    case LaunchMethod::ShellWrapper: {
        spec.wrapper_path = options.sandbox / (unit.id() + ".sh");
        std::string script = "#!/bin/sh\n";
        script += "# unit " + unit.id() + "\n";
        script += std::string(env_slots) + "=\"$1\"\n";
        script += std::string("export ") + env_slots + "\n";
        script += "exec";
        for (const auto& a : payload_argv(unit, options, "pilot-payload"))
            script += ' ' + shell_quote(a);
        script += '\n';
        spec.wrapper_script = std::move(script);
        spec.argv = {"/bin/sh", spec.wrapper_path.string(), slots};
        spec.stdout_path = options.sandbox / (unit.id() + ".out");
        spec.stderr_path = options.sandbox / (unit.id() + ".err");
        break;
    }
    case LaunchMethod::VirtualLaunch:
        spec.argv = payload_argv(unit, options, "<virtual>");
        spec.env[env_slots] = slots;
        break;
    }
    return spec;
}

ChildHandle spawn_process(const CommandSpec& spec)
{
    if (spec.argv.empty())
        throw SpawnFailure("empty command");
    if (!spec.wrapper_path.empty()) {
        std::ofstream out(spec.wrapper_path, std::ios::trunc);
        out << spec.wrapper_script;
        if (!out)
            throw SpawnFailure("cannot write wrapper " + spec.wrapper_path.string());
    }

    std::vector<std::string> env_storage;
    for (char** e = environ; e && *e; ++e) {
        std::string_view kv(*e);
        const auto eq = kv.find('=');
        if (eq != std::string_view::npos && spec.env.count(std::string(kv.substr(0, eq))))
            continue;
        env_storage.emplace_back(kv);
    }
    for (const auto& [k, v] : spec.env)
        env_storage.push_back(k + '=' + v);
    std::vector<char*> envp;
    for (auto& s : env_storage)
        envp.push_back(s.data());
    envp.push_back(nullptr);

    std::vector<std::string> argv_storage = spec.argv;
    std::vector<char*> argv;
    for (auto& s : argv_storage)
        argv.push_back(s.data());
    argv.push_back(nullptr);

    posix_spawn_file_actions_t actions;
    posix_spawn_file_actions_init(&actions);
    const std::string out_path = spec.stdout_path.empty() ? "/dev/null" : spec.stdout_path.string();
    const std::string err_path = spec.stderr_path.empty() ? "/dev/null" : spec.stderr_path.string();
    posix_spawn_file_actions_addopen(&actions, 0, "/dev/null", O_RDONLY, 0);
    posix_spawn_file_actions_addopen(&actions, 1, out_path.c_str(), O_WRONLY | O_CREAT | O_TRUNC, 0644);
    posix_spawn_file_actions_addopen(&actions, 2, err_path.c_str(), O_WRONLY | O_CREAT | O_TRUNC, 0644);

    pid_t pid = -1;
    const int rc = posix_spawnp(&pid, argv[0], &actions, nullptr, argv.data(), envp.data());
    posix_spawn_file_actions_destroy(&actions);
    if (rc != 0)
        throw SpawnFailure("cannot spawn '" + spec.argv.front() + "': " + std::strerror(rc));
    return {pid, spec.env.count(env_unit_id) ? spec.env.at(env_unit_id) : std::string()};
}

namespace {

int decode_status(int status)
{
    if (WIFEXITED(status))
        return WEXITSTATUS(status);
    if (WIFSIGNALED(status))
        return 128 + WTERMSIG(status);
    return 255;
}

} // namespace

std::optional<int> poll_process(const ChildHandle& child)
{
    int status = 0;
    pid_t r;
    do {
        r = waitpid(child.pid, &status, WNOHANG);
    } while (r < 0 && errno == EINTR);
    if (r == 0)
        return std::nullopt;
    if (r < 0)
        throw LostChild("child " + std::to_string(child.pid) + " of unit " + child.unit_id +
                        " was reaped unexpectedly");
    return decode_status(status);
}

int wait_process(const ChildHandle& child)
{
    int status = 0;
    pid_t r;
    do {
        r = waitpid(child.pid, &status, 0);
    } while (r < 0 && errno == EINTR);
    if (r < 0)
        throw LostChild("child " + std::to_string(child.pid) + " of unit " + child.unit_id +
                        " was reaped unexpectedly");
    return decode_status(status);
}

void kill_process(const ChildHandle& child)
{
    if (child.pid > 0)
        ::kill(child.pid, SIGKILL);
}

void stage_in(const UnitDescription& unit, const std::filesystem::path& sandbox)
{
    for (const auto& ref : unit.stage_in) {
        std::error_code ec;
        std::filesystem::copy_file(ref.source, sandbox / ref.target,
                                   std::filesystem::copy_options::overwrite_existing, ec);
        if (ec)
            throw SpawnFailure("stage-in of " + ref.source + " for unit " + unit.unit_id +
                               " failed: " + ec.message());
    }
}

bool stage_out(const UnitDescription& unit, const std::filesystem::path& sandbox)
{
    bool ok = true;
    for (const auto& ref : unit.stage_out) {
        std::error_code ec;
        const std::filesystem::path target(ref.target);
        if (target.has_parent_path())
            std::filesystem::create_directories(target.parent_path(), ec);
        std::filesystem::copy_file(sandbox / ref.source, target,
                                   std::filesystem::copy_options::overwrite_existing, ec);
        ok = ok && !ec;
    }
    return ok;
}

bool LaunchRecord::ordered() const
{
    return exec_queued <= exec_start && exec_start <= payload_start &&
           payload_start <= payload_stop && payload_stop <= spawn_return;
}

LatencySample sample_latencies(const LatencyModel& latency, std::uint64_t pilot_cores,
                               std::uint64_t seed, std::uint64_t unit_index)
{
    std::mt19937_64 rng(mix_seed(seed, 2 * unit_index + 1));
    LatencySample s;
    s.prepare = latency.prepare.sample(rng);
    s.ack = latency.ack_at(pilot_cores).sample(rng);
    return s;
}

LaunchRecord simulate_launch(const ComputeUnit& unit, double exec_queued, double picked,
                             double dispatch, LatencySample latency)
{
    LaunchRecord r;
    r.unit_id = unit.id();
    r.exec_queued = exec_queued;
    r.exec_start = std::max(picked, exec_queued) + dispatch + latency.prepare;
    r.payload_start = r.exec_start;
    r.payload_stop = r.payload_start + unit.payload_duration;
    r.spawn_return = r.payload_stop + latency.ack;
    r.exit_code = 0;
    return r;
}

void validate_executor_count(std::uint32_t n)
{
    if (n == 0)
        throw ConfigError("executor pool needs at least one executor");
}

RealExecutor::RealExecutor(std::uint32_t worker_id, Backend backend, LaunchMethod method,
                           LaunchOptions options, LatencyModel latency, std::uint64_t pilot_cores,
                           std::uint64_t seed, Clock clock, Recorder* recorder)
    : worker_id_(worker_id),
      backend_(backend),
      method_(method),
      options_(std::move(options)),
      latency_(latency),
      pilot_cores_(pilot_cores),
      seed_(seed),
      clock_(std::move(clock)),
      recorder_(recorder)
{
    if (!is_compatible(method_, backend_))
        throw IncompatibleMethod(std::string("launch method ") + to_string(method_) +
                                 " cannot run on the " + to_string(backend_) + " backend");
}

RealExecutor::~RealExecutor()
{
    for (auto& r : running_) {
        kill_process(r.child);
        try {
            wait_process(r.child);
        } catch (...) {
        }
    }
}

void RealExecutor::accept(ComputeUnit unit)
{
    const LatencySample lat = sample_latencies(latency_, pilot_cores_, seed_, unit.index);
    const double due = clock_() + lat.prepare;
    preparing_.push_back({std::move(unit), lat, due});
}

void RealExecutor::start(Pending p, std::vector<ComputeUnit>& out)
{
    ComputeUnit& u = p.unit;
    u.mark(events::exec_start, clock_(), recorder_);
    try {
        stage_in(u.desc, options_.sandbox);
        const CommandSpec spec = build_launch_command(u, method_, backend_, options_);
        ChildHandle child = spawn_process(spec);
        const double now = clock_();
        u.mark(events::payload_start, now, recorder_);
        u.transition(UnitState::Executing, now, recorder_);
        running_.push_back({std::move(u), p.latency, child});
    } catch (const Error& e) {
        const double now = clock_();
        u.exit_code = 127;
        u.mark(events::spawn_return, now, recorder_, "exit=127");
        u.transition(UnitState::Failed, now, recorder_);
        out.push_back(std::move(u));
    }
}

std::vector<ComputeUnit> RealExecutor::poll()
{
    std::vector<ComputeUnit> out;

    for (std::size_t i = 0; i < preparing_.size();) {
        if (preparing_[i].due <= clock_()) {
            Pending p = std::move(preparing_[i]);
            preparing_.erase(preparing_.begin() + static_cast<std::ptrdiff_t>(i));
            start(std::move(p), out);
        } else {
            ++i;
        }
    }

    for (std::size_t i = 0; i < running_.size();) {
        std::optional<int> code;
        bool lost = false;
        try {
            code = poll_process(running_[i].child);
        } catch (const LostChild&) {
            lost = true;
            code = -1;
        }
        if (!code) {
            ++i;
            continue;
        }
        Running r = std::move(running_[i]);
        running_.erase(running_.begin() + static_cast<std::ptrdiff_t>(i));
        r.unit.exit_code = lost ? -1 : *code;
        r.unit.mark(events::payload_stop, clock_(), recorder_);
        const double due = clock_() + r.latency.ack;
        acking_.push_back({std::move(r.unit), r.latency, due});
    }

    for (std::size_t i = 0; i < acking_.size();) {
        if (acking_[i].due > clock_()) {
            ++i;
            continue;
        }
        ComputeUnit u = std::move(acking_[i].unit);
        acking_.erase(acking_.begin() + static_cast<std::ptrdiff_t>(i));
        const bool staged = stage_out(u.desc, options_.sandbox);
        if (!staged && u.exit_code == 0)
            u.exit_code = 1;
        const double now = clock_();
        u.mark(events::spawn_return, now, recorder_, "exit=" + std::to_string(u.exit_code));
        u.transition(u.exit_code == 0 ? UnitState::Done : UnitState::Failed, now, recorder_);
        out.push_back(std::move(u));
    }
    return out;
}

std::vector<ComputeUnit> RealExecutor::cancel_all()
{
    std::vector<ComputeUnit> out;
    for (auto& r : running_) {
        kill_process(r.child);
        try {
            wait_process(r.child);
        } catch (const LostChild&) {
        }
        r.unit.transition(UnitState::Canceled, clock_(), recorder_);
        out.push_back(std::move(r.unit));
    }
    running_.clear();
    for (auto* list : {&preparing_, &acking_}) {
        for (auto& p : *list) {
            p.unit.transition(UnitState::Canceled, clock_(), recorder_);
            out.push_back(std::move(p.unit));
        }
        list->clear();
    }
    return out;
}

std::optional<double> RealExecutor::next_deadline() const
{
    std::optional<double> best;
    for (const auto* list : {&preparing_, &acking_})
        for (const auto& p : *list)
            if (!best || p.due < *best)
                best = p.due;
    return best;
}

} // namespace pilot
