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

#include <cstdint>
#include <random>
#include <string>
#include <vector>

namespace pilot {

enum class PayloadKind { Sleep, FlopBurn, External };

const char* to_string(PayloadKind kind);
PayloadKind payload_kind_from_string(const std::string& s);

/// Synthetic task body. Sleep and FlopBurn emulate a compute task of known
/// duration; External runs an arbitrary argv.
struct TaskPayload {
    PayloadKind kind = PayloadKind::Sleep;
    double target_duration = 1.0;
    double jitter_sigma = 0.0;
    /// FlopBurn only; 0 means "size from calibration and sampled duration".
    std::uint64_t flop_count = 0;
    /// External only.
    std::vector<std::string> command;

    void validate() const;
    bool operator==(const TaskPayload&) const = default;
};

/// Normal(target, jitter) clamped at 0. Pure given the rng state.
double sample_duration(const TaskPayload& payload, std::mt19937_64& rng);

/// Runs `flops` multiply-add operations and returns a value that depends on
/// every iteration so the loop cannot be elided.
double burn_flops(std::uint64_t flops);

/// Measures sustained flops/s of burn_flops over roughly `seconds`.
double calibrate_flops(double seconds = 0.1);

/// Executes a payload in the calling process. Sleep and FlopBurn honour
/// `duration`; FlopBurn uses `flop_count` when nonzero, otherwise
/// `duration * flops_per_sec`. External spawns its command and waits.
/// Returns the process-style exit code.
int run_payload(const TaskPayload& payload, double duration, double flops_per_sec);

} // namespace pilot
