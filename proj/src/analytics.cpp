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

#include "pilot/analytics.hpp"

#include "pilot/error.hpp"
#include "pilot/plot.hpp"
#include "pilot/trace.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>
#include <sstream>
#include <unordered_map>

namespace pilot {

namespace fs = std::filesystem;

namespace {

constexpr std::size_t n_events = std::size(unit_event_order);

int event_index(std::string_view name)
{
    for (std::size_t i = 0; i < n_events; ++i)
        if (unit_event_order[i] == name)
            return static_cast<int>(i);
    return -1;
}

int require_event(const std::string& name)
{
    const int idx = event_index(name);
    if (idx < 0)
        throw UnknownEvent("'" + name + "' is not a per-unit event");
    return idx;
}

std::optional<UnitState> terminal_of(std::string_view event)
{
    for (UnitState s : {UnitState::Done, UnitState::Failed, UnitState::Canceled})
        if (state_event(s) == event)
            return s;
    return std::nullopt;
}

std::map<std::string, std::string> parse_attributes(const std::string& info)
{
    std::map<std::string, std::string> out;
    std::size_t pos = 0;
    while (pos <= info.size()) {
        const std::size_t end = std::min(info.find(';', pos), info.size());
        const std::string item = info.substr(pos, end - pos);
        const auto eq = item.find('=');
        if (eq != std::string::npos)
            out[item.substr(0, eq)] = item.substr(eq + 1);
        pos = end + 1;
    }
    return out;
}

template <class T>
T to_number(const std::map<std::string, std::string>& attrs, const char* key)
{
    const auto it = attrs.find(key);
    if (it == attrs.end())
        return 0;
    try {
        return static_cast<T>(std::stoull(it->second));
    } catch (const std::exception&) {
        throw TraceFormatError(std::string("bad session attribute ") + key + "=" + it->second);
    }
}

std::string fmt(double v)
{
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.6f", v);
    return buf;
}

} // namespace

std::optional<double> UnitTimes::time_of(std::string_view event) const
{
    const int idx = event_index(event);
    if (idx >= 0)
        return at[static_cast<std::size_t>(idx)];
    return std::nullopt;
}

Trace Trace::load(const fs::path& unified)
{
    return from_events(read_trace(unified));
}

Trace Trace::from_events(std::vector<ProfileEvent> events)
{
    Trace t;
    t.events_ = std::move(events);
    std::unordered_map<std::string, std::size_t> index;
    for (const auto& e : t.events_) {
        if (e.event == events::session_start) {
            t.session_ = parse_attributes(e.info);
            continue;
        }
        if (e.unit.empty())
            continue;
        auto [it, inserted] = index.try_emplace(e.unit, t.units_.size());
        if (inserted) {
            t.units_.emplace_back();
            t.units_.back().unit_id = e.unit;
        }
        UnitTimes& u = t.units_[it->second];
        const int idx = event_index(e.event);
        if (idx >= 0) {
            u.at[static_cast<std::size_t>(idx)] = e.time;
            if (e.event == events::sched_done && !e.info.empty())
                u.slots = parse_slots(e.info);
        } else if (auto term = terminal_of(e.event)) {
            u.terminal = term;
            u.terminal_time = e.time;
        }
    }
    t.pilot_cores_ = to_number<std::uint64_t>(t.session_, "cores");
    t.node_count_ = to_number<std::uint32_t>(t.session_, "nodes");
    t.cores_per_node_ = to_number<std::uint32_t>(t.session_, "cpn");
    if (auto it = t.session_.find("scheduler"); it != t.session_.end())
        t.scheduler_ = it->second;
    if (auto it = t.session_.find("backend"); it != t.session_.end())
        t.backend_ = it->second;
    return t;
}

std::optional<std::string> Trace::session_attribute(const std::string& key) const
{
    const auto it = session_.find(key);
    if (it == session_.end())
        return std::nullopt;
    return it->second;
}

std::vector<std::uint64_t> unit_generations(const Trace& trace)
{
    const auto& units = trace.units();
    std::vector<std::size_t> order;
    for (std::size_t i = 0; i < units.size(); ++i)
        if (units[i].time_of(events::sched_done) && !units[i].slots.empty())
            order.push_back(i);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return *units[a].time_of(events::sched_done) < *units[b].time_of(events::sched_done);
    });

    // Slots are exclusive, so the previous holder of a slot is whoever got it
    // last in placement order.
    std::map<Slot, std::uint64_t> last_generation;
    std::vector<std::uint64_t> gen(units.size(), 0);
    for (std::size_t i : order) {
        std::uint64_t g = 0;
        for (const Slot& s : units[i].slots)
            if (auto it = last_generation.find(s); it != last_generation.end())
                g = std::max(g, it->second);
        gen[i] = g + 1;
        for (const Slot& s : units[i].slots)
            last_generation[s] = gen[i];
    }
    return gen;
}

std::uint64_t peak_holders(const Trace& trace)
{
    // Releases sort ahead of acquisitions at the same instant.
    std::vector<std::pair<double, int>> steps;
    for (const auto& u : trace.units()) {
        const auto got = u.time_of(events::sched_done);
        if (!got || u.slots.empty())
            continue;
        auto gone = u.time_of(events::unsched_done);
        if (!gone)
            gone = u.terminal_time;
        steps.emplace_back(*got, +1);
        if (gone)
            steps.emplace_back(*gone, -1);
    }
    std::sort(steps.begin(), steps.end());
    std::int64_t now = 0, best = 0;
    for (const auto& [t, d] : steps) {
        now += d;
        best = std::max(best, now);
    }
    return static_cast<std::uint64_t>(best);
}

TtxReport compute_ttx(const Trace& trace)
{
    const auto& units = trace.units();
    if (units.empty())
        throw IncompleteTrace("trace holds no units");

    TtxReport r;
    double start = std::numeric_limits<double>::infinity();
    double end = -std::numeric_limits<double>::infinity();
    double payload_sum = 0.0;
    std::size_t payload_n = 0;
    for (const auto& u : units) {
        if (!u.terminal)
            throw IncompleteTrace("unit " + u.unit_id + " never reached a terminal state");
        if (auto t = u.time_of(events::db_pull))
            start = std::min(start, *t);
        const auto ret = u.time_of(events::spawn_return);
        end = std::max(end, ret ? *ret : *u.terminal_time);
        const auto a = u.time_of(events::payload_start);
        const auto b = u.time_of(events::payload_stop);
        if (a && b) {
            payload_sum += *b - *a;
            r.max_payload = std::max(r.max_payload, *b - *a);
            ++payload_n;
        }
    }
    if (!std::isfinite(start))
        throw IncompleteTrace("no unit was ever pulled");

    const auto gens = unit_generations(trace);
    r.start = start;
    r.end = end;
    r.ttx = end - start;
    const auto placed = static_cast<std::uint64_t>(
        std::count_if(gens.begin(), gens.end(), [](std::uint64_t g) { return g > 0; }));
    const auto peak = peak_holders(trace);
    r.generations = peak ? (placed + peak - 1) / peak : 0;
    r.slot_depth = gens.empty() ? 0 : *std::max_element(gens.begin(), gens.end());
    r.mean_payload = payload_n ? payload_sum / static_cast<double>(payload_n) : 0.0;
    r.ideal_ttx = static_cast<double>(r.generations) * r.mean_payload;
    return r;
}

Utilization compute_utilization(const Trace& trace, std::uint64_t pilot_cores)
{
    if (pilot_cores == 0)
        pilot_cores = trace.pilot_cores();
    if (pilot_cores == 0)
        throw IncompleteTrace("trace does not name the pilot size");
    const TtxReport ttx = compute_ttx(trace);
    auto clip = [&](double a, double b) {
        return std::max(0.0, std::min(b, ttx.end) - std::max(a, ttx.start));
    };

    Utilization u;
    for (const auto& unit : trace.units()) {
        const auto held_from = unit.time_of(events::sched_done);
        if (!held_from || unit.slots.empty())
            continue;
        const double cores = unit.cores();
        const double held_to = unit.time_of(events::unsched_done).value_or(
            unit.terminal_time.value_or(ttx.end));
        const double held = clip(*held_from, held_to);
        double ran = 0.0;
        if (auto a = unit.time_of(events::payload_start)) {
            const double b = unit.time_of(events::payload_stop).value_or(
                unit.terminal_time.value_or(ttx.end));
            ran = clip(*a, b);
        }
        u.workload_core_s += cores * ran;
        u.overhead_core_s += cores * (held - ran);
    }
    u.total_core_s = static_cast<double>(pilot_cores) * ttx.ttx;
    u.idle_core_s = u.total_core_s - u.workload_core_s - u.overhead_core_s;
    if (u.idle_core_s < -1e-9 * std::max(1.0, u.total_core_s))
        throw NegativeIdle("busy core-time " + fmt(u.workload_core_s + u.overhead_core_s) +
                           " exceeds pilot core-time " + fmt(u.total_core_s));
    u.idle_core_s = std::max(0.0, u.idle_core_s);
    if (u.total_core_s > 0.0) {
        u.workload_pct = 100.0 * u.workload_core_s / u.total_core_s;
        u.overhead_pct = 100.0 * u.overhead_core_s / u.total_core_s;
        u.idle_pct = 100.0 * u.idle_core_s / u.total_core_s;
    } else {
        u.idle_pct = 100.0;
    }
    return u;
}

const std::vector<StateInterval>& standard_intervals()
{
    static const std::vector<StateInterval> intervals = {
        {"scheduling", std::string(events::db_pull), std::string(events::sched_done)},
        {"queuing", std::string(events::exec_queued), std::string(events::exec_start)},
        {"executing", std::string(events::payload_start), std::string(events::payload_stop)},
        {"unscheduling", std::string(events::spawn_return), std::string(events::unsched_done)},
    };
    return intervals;
}

StateInterval interval_named(const std::string& name)
{
    for (const auto& i : standard_intervals())
        if (i.name == name)
            return i;
    throw UnknownEvent("unknown interval '" + name + "'");
}

Series concurrency_series(const Trace& trace, const std::string& start_event,
                          const std::string& end_event)
{
    const auto from = static_cast<std::size_t>(require_event(start_event));
    const auto to = static_cast<std::size_t>(require_event(end_event));
    double last = 0.0;
    for (const auto& e : trace.events())
        last = std::max(last, e.time);

    std::vector<std::pair<double, int>> deltas;
    for (const auto& u : trace.units()) {
        if (!u.at[from])
            continue;
        deltas.emplace_back(*u.at[from], +1);
        deltas.emplace_back(u.at[to].value_or(std::max(last, *u.at[from])), -1);
    }
    std::stable_sort(deltas.begin(), deltas.end(),
                     [](const auto& a, const auto& b) { return a.first < b.first; });

    Series series;
    std::int64_t count = 0;
    for (std::size_t i = 0; i < deltas.size();) {
        const double t = deltas[i].first;
        for (; i < deltas.size() && deltas[i].first == t; ++i)
            count += deltas[i].second;
        series.emplace_back(t, count);
    }
    return series;
}

double integrate(const Series& series)
{
    double sum = 0.0;
    for (std::size_t i = 0; i + 1 < series.size(); ++i)
        sum += static_cast<double>(series[i].second) * (series[i + 1].first - series[i].first);
    return sum;
}

std::int64_t peak(const Series& series)
{
    std::int64_t best = 0;
    for (const auto& p : series)
        best = std::max(best, p.second);
    return best;
}

EventStats summarize(std::vector<double> values)
{
    EventStats s;
    s.count = values.size();
    if (values.empty())
        return s;
    std::sort(values.begin(), values.end());
    const double n = static_cast<double>(values.size());
    s.mean = std::accumulate(values.begin(), values.end(), 0.0) / n;
    double ss = 0.0;
    for (double v : values)
        ss += (v - s.mean) * (v - s.mean);
    s.std = values.size() > 1 ? std::sqrt(ss / (n - 1.0)) : 0.0;
    auto quantile = [&](double q) {
        const double pos = q * (n - 1.0);
        const auto lo = static_cast<std::size_t>(std::floor(pos));
        const std::size_t hi = std::min(lo + 1, values.size() - 1);
        return values[lo] + (values[hi] - values[lo]) * (pos - static_cast<double>(lo));
    };
    s.median = quantile(0.5);
    s.p95 = quantile(0.95);
    s.min = values.front();
    s.max = values.back();
    return s;
}

EventStats per_event_stats(const Trace& trace, const std::string& from, const std::string& to)
{
    const auto a = static_cast<std::size_t>(require_event(from));
    const auto b = static_cast<std::size_t>(require_event(to));
    std::vector<double> d;
    for (const auto& u : trace.units())
        if (u.at[a] && u.at[b])
            d.push_back(*u.at[b] - *u.at[a]);
    if (d.empty())
        throw MissingEvents("no unit has both " + from + " and " + to);
    return summarize(std::move(d));
}

const std::vector<std::pair<std::string, std::string>>& standard_event_pairs()
{
    static const std::vector<std::pair<std::string, std::string>> pairs = {
        {"db_pull", "sched_start"},        {"sched_start", "sched_done"},
        {"sched_done", "exec_queued"},     {"exec_queued", "exec_start"},
        {"exec_queued", "payload_start"},  {"payload_start", "payload_stop"},
        {"payload_stop", "spawn_return"},  {"spawn_return", "unsched_done"},
    };
    return pairs;
}

double scheduler_throughput(const Trace& trace)
{
    double first = std::numeric_limits<double>::infinity(), last = -first;
    std::size_t n = 0;
    for (const auto& u : trace.units()) {
        if (auto t = u.time_of(events::sched_done)) {
            first = std::min(first, *t);
            last = std::max(last, *t);
            ++n;
        }
    }
    if (n < 2)
        throw TooFewEvents("throughput needs at least two scheduled units, trace has " +
                           std::to_string(n));
    if (last <= first)
        return std::numeric_limits<double>::infinity();
    return static_cast<double>(n) / (last - first);
}

TraceReport build_report(const Trace& trace)
{
    TraceReport r;
    r.ttx = compute_ttx(trace);
    r.utilization = compute_utilization(trace);
    for (const auto& [from, to] : standard_event_pairs()) {
        try {
            r.per_event_stats[from + "->" + to] = per_event_stats(trace, from, to);
        } catch (const MissingEvents&) {
        }
    }
    for (const auto& i : standard_intervals())
        r.concurrency[i.name] = concurrency_series(trace, i.start_event, i.end_event);
    try {
        r.throughput = scheduler_throughput(trace);
    } catch (const TooFewEvents&) {
    }
    return r;
}

namespace {

std::string session_label(const fs::path& path)
{
    std::string label = path.parent_path().filename().string();
    if (label.empty())
        label = path.stem().string();
    return label;
}

} // namespace

std::vector<fs::path> write_ttx_report(const Trace& trace, const fs::path& out_dir)
{
    const TtxReport r = compute_ttx(trace);
    std::ostringstream csv;
    csv << "ttx,ideal_ttx,generations,mean_payload,max_payload,overhead_pct,slot_depth\n"
        << fmt(r.ttx) << ',' << fmt(r.ideal_ttx) << ',' << r.generations << ','
        << fmt(r.mean_payload) << ',' << fmt(r.max_payload) << ','
        << fmt(100.0 * r.overhead_fraction()) << ',' << r.slot_depth << '\n';
    const fs::path path = out_dir / "ttx.csv";
    write_text_file(path, csv.str());
    return {path};
}

std::vector<fs::path> write_ru_report(const Trace& trace, const fs::path& out_dir)
{
    const Utilization u = compute_utilization(trace);
    std::ostringstream csv;
    csv << "workload_pct,overhead_pct,idle_pct,workload_core_s,overhead_core_s,idle_core_s,"
           "total_core_s\n"
        << fmt(u.workload_pct) << ',' << fmt(u.overhead_pct) << ',' << fmt(u.idle_pct) << ','
        << fmt(u.workload_core_s) << ',' << fmt(u.overhead_core_s) << ',' << fmt(u.idle_core_s)
        << ',' << fmt(u.total_core_s) << '\n';
    StackedBarPlot plot;
    plot.title = "Resource utilization";
    plot.y_label = "core-seconds";
    plot.part_names = {"workload", "overhead", "idle"};
    plot.bars.push_back({std::to_string(trace.pilot_cores()) + " cores",
                         {u.workload_core_s, u.overhead_core_s, u.idle_core_s}});
    const fs::path table = out_dir / "ru.csv", svg = out_dir / "ru.svg";
    write_text_file(table, csv.str());
    write_text_file(svg, plot.render_svg());
    return {table, svg};
}

namespace {

std::vector<fs::path> concurrency_files(const Trace& trace, const fs::path& out_dir,
                                        const std::string& stem)
{
    std::ostringstream csv;
    csv << "interval,time,count\n";
    LinePlot plot;
    plot.title = "Concurrency";
    plot.x_label = "time (s)";
    plot.y_label = "units";
    for (const auto& i : standard_intervals()) {
        const Series s = concurrency_series(trace, i.start_event, i.end_event);
        PlotSeries ps{i.name, {}, true, false, {}};
        for (const auto& [t, n] : s) {
            csv << i.name << ',' << fmt(t) << ',' << n << '\n';
            ps.points.emplace_back(t, static_cast<double>(n));
        }
        plot.series.push_back(std::move(ps));
    }
    const fs::path table = out_dir / (stem + ".csv"), svg = out_dir / (stem + ".svg");
    write_text_file(table, csv.str());
    write_text_file(svg, plot.render_svg());
    return {table, svg};
}

} // namespace

std::vector<fs::path> write_concurrency_report(const Trace& trace, const fs::path& out_dir)
{
    return concurrency_files(trace, out_dir, "concurrency");
}

std::vector<fs::path> write_events_report(const Trace& trace, const fs::path& out_dir)
{
    std::ostringstream csv;
    csv << "from,to,count,mean,std,median,p95,min,max\n";
    for (const auto& [from, to] : standard_event_pairs()) {
        EventStats s;
        try {
            s = per_event_stats(trace, from, to);
        } catch (const MissingEvents&) {
            continue;
        }
        csv << from << ',' << to << ',' << s.count << ',' << fmt(s.mean) << ',' << fmt(s.std)
            << ',' << fmt(s.median) << ',' << fmt(s.p95) << ',' << fmt(s.min) << ','
            << fmt(s.max) << '\n';
    }
    const fs::path table = out_dir / "events.csv";
    write_text_file(table, csv.str());
    return {table};
}

std::vector<fs::path> write_throughput_report(const Trace& trace, const fs::path& out_dir)
{
    const double tp = scheduler_throughput(trace);
    const EventStats s = per_event_stats(trace, "sched_start", "sched_done");
    std::ostringstream csv;
    csv << "scheduler,pilot_cores,scheduled,tasks_per_s,median_sched_s\n"
        << trace.scheduler() << ',' << trace.pilot_cores() << ',' << s.count << ',' << fmt(tp)
        << ',' << fmt(s.median) << '\n';
    const fs::path table = out_dir / "throughput.csv";
    write_text_file(table, csv.str());
    return {table};
}

std::vector<fs::path> write_fig4(const std::vector<fs::path>& traces, const fs::path& out_dir)
{
    std::ostringstream csv;
    csv << "session,pilot_cores,units,generations,ttx,ideal_ttx,workload_pct,overhead_pct,"
           "idle_pct\n";
    StackedBarPlot plot;
    plot.title = "Resource utilization per session";
    plot.y_label = "percent of pilot core-time";
    plot.part_names = {"workload", "overhead", "idle"};
    for (const auto& path : traces) {
        const Trace t = Trace::load(path);
        const TtxReport r = compute_ttx(t);
        const Utilization u = compute_utilization(t);
        const std::string label = session_label(path);
        csv << label << ',' << t.pilot_cores() << ',' << t.units().size() << ',' << r.generations
            << ',' << fmt(r.ttx) << ',' << fmt(r.ideal_ttx) << ',' << fmt(u.workload_pct) << ','
            << fmt(u.overhead_pct) << ',' << fmt(u.idle_pct) << '\n';
        plot.bars.push_back({label, {u.workload_pct, u.overhead_pct, u.idle_pct}});
    }
    const fs::path table = out_dir / "fig4.csv", svg = out_dir / "fig4.svg";
    write_text_file(table, csv.str());
    write_text_file(svg, plot.render_svg());
    return {table, svg};
}

std::vector<fs::path> write_fig5(const fs::path& trace, const fs::path& out_dir)
{
    return concurrency_files(Trace::load(trace), out_dir, "fig5");
}

std::vector<fs::path> write_fig6(const fs::path& trace, const fs::path& out_dir)
{
    const Trace t = Trace::load(trace);
    const TtxReport r = compute_ttx(t);
    std::ostringstream csv;
    csv << "unit_index,unit,event,time\n";
    LinePlot plot;
    plot.title = "Per-unit event timestamps";
    plot.x_label = "unit";
    plot.y_label = "time since first pull (s)";
    for (std::size_t k = 0; k < n_events; ++k)
        plot.series.push_back({std::string(unit_event_order[k]), {}, false, true, {}});
    for (std::size_t i = 0; i < t.units().size(); ++i) {
        const auto& u = t.units()[i];
        for (std::size_t k = 0; k < n_events; ++k) {
            if (!u.at[k])
                continue;
            const double rel = *u.at[k] - r.start;
            csv << i << ',' << u.unit_id << ',' << unit_event_order[k] << ',' << fmt(rel) << '\n';
            plot.series[k].points.emplace_back(static_cast<double>(i), rel);
        }
    }
    const fs::path table = out_dir / "fig6.csv", svg = out_dir / "fig6.svg";
    write_text_file(table, csv.str());
    write_text_file(svg, plot.render_svg());
    return {table, svg};
}

std::vector<fs::path> write_fig8(const std::vector<fs::path>& traces, const fs::path& out_dir)
{
    std::ostringstream csv;
    csv << "session,scheduler,pilot_cores,units,median_sched_s,mean_sched_s,p95_sched_s,"
           "tasks_per_s\n";
    std::map<std::string, std::vector<std::pair<double, double>>> by_scheduler;
    for (const auto& path : traces) {
        const Trace t = Trace::load(path);
        const EventStats s = per_event_stats(t, "sched_start", "sched_done");
        double tp = std::numeric_limits<double>::infinity();
        try {
            tp = scheduler_throughput(t);
        } catch (const TooFewEvents&) {
        }
        csv << session_label(path) << ',' << t.scheduler() << ',' << t.pilot_cores() << ','
            << t.units().size() << ',' << fmt(s.median) << ',' << fmt(s.mean) << ','
            << fmt(s.p95) << ',' << fmt(tp) << '\n';
        by_scheduler[t.scheduler()].emplace_back(static_cast<double>(t.pilot_cores()), s.median);
    }
    LinePlot plot;
    plot.title = "Scheduler time per unit";
    plot.x_label = "pilot cores";
    plot.y_label = "median sched_start to sched_done (s)";
    plot.log_x = true;
    for (auto& [name, pts] : by_scheduler) {
        std::sort(pts.begin(), pts.end());
        plot.series.push_back({name, pts, false, false, {}});
    }
    const fs::path table = out_dir / "fig8.csv", svg = out_dir / "fig8.svg";
    write_text_file(table, csv.str());
    write_text_file(svg, plot.render_svg());
    return {table, svg};
}

} // namespace pilot
