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
#include <span>

namespace pilot {

/// Lognormal distribution parameterised by its median rather than by mu, so
/// configs read in seconds. A zero median always samples 0.
struct LogNormal {
    double median = 0.0;
    double sigma = 0.0;

    double sample(std::mt19937_64& rng) const;
    double mean() const;
    bool operator==(const LogNormal&) const = default;
};

/// y(x) = scale * x^exponent
struct PowerLaw {
    double scale = 0.0;
    double exponent = 0.0;

    double at(double x) const;
    bool operator==(const PowerLaw&) const = default;
};

/// Least-squares fit of y = a * x^b on the raw (not log-transformed) values.
/// For a fixed b the optimal a is closed form, so only b is searched.
PowerLaw fit_power_law(std::span<const double> x, std::span<const double> y);

/// Launch-layer latencies seen by the executor. Prepare latency is treated as
/// scale invariant; completion-ack latency grows with pilot size through two
/// power laws evaluated at cores / reference_cores.
struct LatencyModel {
    LogNormal prepare;
    PowerLaw ack_median;
    PowerLaw ack_sigma;
    double reference_cores = 16384.0;

    LogNormal ack_at(std::uint64_t pilot_cores) const;
    bool is_zero() const;
    /// Throws InvalidDescription on negative parameters.
    void validate() const;
    /// Multiplies every time quantity by `factor` (sigmas are unitless).
    LatencyModel scaled(double factor) const;

    static LatencyModel zero();
    /// ORTE-like launcher on a Cray XK7 class machine: prepare 37s +- 9s,
    /// ack means 29/34/59/135s at 1x/2x/4x/8x of 16384 cores.
    static LatencyModel titan();

    bool operator==(const LatencyModel&) const = default;
};

/// Virtual-clock service costs of the agent components. The continuous
/// scheduler is charged per node it inspects, so its cost follows the actual
/// search work; the lookup scheduler is charged a constant per task.
struct ComponentCosts {
    double sched_base = 0.0;      ///< per scheduling attempt (continuous)
    double sched_probe = 0.0;     ///< per node inspected (continuous)
    double lookup = 0.0;          ///< per attempt (homogeneous)
    double unsched_base = 0.0;    ///< per release
    double unsched_slot = 0.0;    ///< per slot released
    double dispatch = 0.0;        ///< executor worker time per unit

    bool is_zero() const;
    void validate() const;
    ComponentCosts scaled(double factor) const;

    static ComponentCosts zero();
    /// Fitted to scheduling spans of 18/39/129/350s for 512..4096 32-core
    /// tasks and a 70 tasks/s lookup scheduler.
    static ComponentCosts titan();

    bool operator==(const ComponentCosts&) const = default;
};

/// Deterministic 64-bit mixer used to derive independent RNG streams from a
/// session seed (splitmix64 finaliser).
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream);

} // namespace pilot
