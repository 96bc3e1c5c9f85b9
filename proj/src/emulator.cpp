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

#include "pilot/emulator.hpp"

#include "pilot/error.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <thread>

#include <spawn.h>
#include <sys/wait.h>
#include <unistd.h>

extern char** environ;

namespace pilot {

const char* to_string(PayloadKind kind)
{
    switch (kind) {
    case PayloadKind::Sleep: return "sleep";
    case PayloadKind::FlopBurn: return "flop_burn";
    case PayloadKind::External: return "external_command";
    }
    return "?";
}

PayloadKind payload_kind_from_string(const std::string& s)
{
    if (s == "sleep")
        return PayloadKind::Sleep;
    if (s == "flop_burn")
        return PayloadKind::FlopBurn;
    if (s == "external_command" || s == "external")
        return PayloadKind::External;
    throw InvalidDescription("unknown payload kind '" + s + "'");
}

void TaskPayload::validate() const
{
    if (!(target_duration > 0.0) && kind != PayloadKind::External)
        throw InvalidDescription("payload target_duration must be > 0");
    if (jitter_sigma < 0.0)
        throw InvalidDescription("payload jitter_sigma must be >= 0");
    if (kind == PayloadKind::External && command.empty())
        throw InvalidDescription("external_command payload needs a command");
}

double sample_duration(const TaskPayload& payload, std::mt19937_64& rng)
{
    if (payload.jitter_sigma == 0.0)
        return payload.target_duration;
    std::normal_distribution<double> dist(payload.target_duration, payload.jitter_sigma);
    return std::max(0.0, dist(rng));
}

double burn_flops(std::uint64_t flops)
{
    // Four independent chains of fused multiply-add, 2 flops each.
    double a0 = 1.0, a1 = 1.1, a2 = 1.2, a3 = 1.3;
    constexpr double m = 0.999999, c = 1e-7;
    const std::uint64_t rounds = flops / 8;
    for (std::uint64_t i = 0; i < rounds; ++i) {
        a0 = a0 * m + c;
        a1 = a1 * m + c;
        a2 = a2 * m + c;
        a3 = a3 * m + c;
    }
    volatile double sink = a0 + a1 + a2 + a3;
    return sink;
}

double calibrate_flops(double seconds)
{
    using clock = std::chrono::steady_clock;
    std::uint64_t chunk = 1 << 20;
    std::uint64_t done = 0;
    const auto start = clock::now();
    double elapsed = 0.0;
    while (elapsed < seconds) {
        burn_flops(chunk);
        done += chunk;
        elapsed = std::chrono::duration<double>(clock::now() - start).count();
        if (elapsed < seconds / 8)
            chunk *= 2;
    }
    return static_cast<double>(done) / elapsed;
}

namespace {

int run_external(const std::vector<std::string>& command)
{
    std::vector<char*> argv;
    argv.reserve(command.size() + 1);
    for (const auto& a : command)
        argv.push_back(const_cast<char*>(a.c_str()));
    argv.push_back(nullptr);

    pid_t pid = 0;
    if (posix_spawnp(&pid, argv[0], nullptr, nullptr, argv.data(), environ) != 0)
        return 127;
    int status = 0;
    while (waitpid(pid, &status, 0) < 0) {
        if (errno != EINTR)
            return 127;
    }
    if (WIFEXITED(status))
        return WEXITSTATUS(status);
    return 128 + WTERMSIG(status);
}

} // namespace

int run_payload(const TaskPayload& payload, double duration, double flops_per_sec)
{
    switch (payload.kind) {
    case PayloadKind::Sleep:
        std::this_thread::sleep_for(std::chrono::duration<double>(duration));
        return 0;
    case PayloadKind::FlopBurn: {
        std::uint64_t flops = payload.flop_count;
        if (flops == 0)
            flops = static_cast<std::uint64_t>(duration * flops_per_sec);
        burn_flops(flops);
        return 0;
    }
    case PayloadKind::External:
        return run_external(payload.command);
    }
    return 1;
}

} // namespace pilot
