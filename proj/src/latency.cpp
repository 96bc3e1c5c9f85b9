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

#include "pilot/latency.hpp"

#include "pilot/error.hpp"

#include <cmath>
#include <limits>
#include <vector>

namespace pilot {

double LogNormal::sample(std::mt19937_64& rng) const
{
    if (median <= 0.0)
        return 0.0;
    if (sigma <= 0.0)
        return median;
    std::lognormal_distribution<double> dist(std::log(median), sigma);
    return dist(rng);
}

double LogNormal::mean() const
{
    if (median <= 0.0)
        return 0.0;
    return median * std::exp(0.5 * sigma * sigma);
}

double PowerLaw::at(double x) const
{
    if (scale == 0.0)
        return 0.0;
    return scale * std::pow(x, exponent);
}

namespace {

struct FitResult {
    double scale;
    double sse;
};

FitResult best_scale(std::span<const double> x, std::span<const double> y, double b)
{
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double f = std::pow(x[i], b);
        num += y[i] * f;
        den += f * f;
    }
    const double a = den > 0.0 ? num / den : 0.0;
    double sse = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double r = y[i] - a * std::pow(x[i], b);
        sse += r * r;
    }
    return {a, sse};
}

} // namespace

PowerLaw fit_power_law(std::span<const double> x, std::span<const double> y)
{
    if (x.size() != y.size() || x.size() < 2)
        throw InvalidDescription("power-law fit needs >= 2 paired points");
    for (double v : x)
        if (!(v > 0.0))
            throw InvalidDescription("power-law fit needs positive x");

    // Coarse scan brackets the minimum, golden section refines it.
    constexpr double lo = -4.0, hi = 4.0;
    constexpr int steps = 800;
    double best_b = lo;
    double best_sse = std::numeric_limits<double>::infinity();
    for (int i = 0; i <= steps; ++i) {
        const double b = lo + (hi - lo) * i / steps;
        const double sse = best_scale(x, y, b).sse;
        if (sse < best_sse) {
            best_sse = sse;
            best_b = b;
        }
    }
    const double step = (hi - lo) / steps;
    double a = best_b - step, c = best_b + step;
    const double phi = (std::sqrt(5.0) - 1.0) / 2.0;
    for (int it = 0; it < 100; ++it) {
        const double m1 = c - phi * (c - a);
        const double m2 = a + phi * (c - a);
        if (best_scale(x, y, m1).sse < best_scale(x, y, m2).sse)
            c = m2;
        else
            a = m1;
    }
    const double b = 0.5 * (a + c);
    return {best_scale(x, y, b).scale, b};
}

LogNormal LatencyModel::ack_at(std::uint64_t pilot_cores) const
{
    const double ratio = static_cast<double>(pilot_cores) / reference_cores;
    return {ack_median.at(ratio), ack_sigma.at(ratio)};
}

bool LatencyModel::is_zero() const
{
    return prepare.median == 0.0 && ack_median.scale == 0.0;
}

void LatencyModel::validate() const
{
    if (prepare.median < 0.0 || prepare.sigma < 0.0)
        throw InvalidDescription("prepare latency parameters must be >= 0");
    if (ack_median.scale < 0.0 || ack_sigma.scale < 0.0)
        throw InvalidDescription("ack latency scale must be >= 0");
    if (ack_median.exponent < 0.0)
        throw InvalidDescription("ack latency exponent must be >= 0");
    if (!(reference_cores > 0.0))
        throw InvalidDescription("ack reference core count must be > 0");
}

LatencyModel LatencyModel::scaled(double factor) const
{
    LatencyModel out = *this;
    out.prepare.median *= factor;
    out.ack_median.scale *= factor;
    return out;
}

LatencyModel LatencyModel::zero()
{
    return {};
}

LatencyModel LatencyModel::titan()
{
    // Reported means and standard deviations at 16K/32K/64K/128K cores.
    static constexpr double ratio[] = {1.0, 2.0, 4.0, 8.0};
    static constexpr double ack_mean[] = {29.0, 34.0, 59.0, 135.0};
    static constexpr double ack_std[] = {16.0, 28.0, 46.0, 107.0};

    LatencyModel m;
    m.reference_cores = 16384.0;
    // 37s +- 9s moment-matched to a lognormal sigma; median kept at 37s.
    m.prepare = {37.0, std::sqrt(std::log(1.0 + (9.0 / 37.0) * (9.0 / 37.0)))};
    m.ack_median = fit_power_law(ratio, ack_mean);

    std::vector<double> sigmas;
    for (int i = 0; i < 4; ++i) {
        const double cv = ack_std[i] / ack_mean[i];
        sigmas.push_back(std::sqrt(std::log(1.0 + cv * cv)));
    }
    m.ack_sigma = fit_power_law(ratio, sigmas);
    return m;
}

bool ComponentCosts::is_zero() const
{
    return *this == ComponentCosts{};
}

void ComponentCosts::validate() const
{
    for (double v : {sched_base, sched_probe, lookup, unsched_base, unsched_slot, dispatch})
        if (v < 0.0)
            throw InvalidDescription("component costs must be >= 0");
}

ComponentCosts ComponentCosts::scaled(double factor) const
{
    ComponentCosts c = *this;
    c.sched_base *= factor;
    c.sched_probe *= factor;
    c.lookup *= factor;
    c.unsched_base *= factor;
    c.unsched_slot *= factor;
    c.dispatch *= factor;
    return c;
}

ComponentCosts ComponentCosts::zero()
{
    return {};
}

ComponentCosts ComponentCosts::titan()
{
    ComponentCosts c;
    c.sched_base = 3.31e-2;
    c.sched_probe = 1.29e-5;
    c.lookup = 1.0 / 70.0;
    c.unsched_base = 0.0;
    c.unsched_slot = 1.29e-5;
    c.dispatch = 0.0;
    return c;
}

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream)
{
    std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (stream + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

} // namespace pilot
