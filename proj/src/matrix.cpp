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

#include "pilot/matrix.hpp"

#include "pilot/analytics.hpp"
#include "pilot/error.hpp"
#include "pilot/plot.hpp"
#include "pilot/session.hpp"

#include <cmath>
#include <cstdio>
#include <map>
#include <ostream>
#include <sstream>

namespace pilot {

namespace fs = std::filesystem;

namespace {

std::string fmt(std::optional<double> v)
{
    if (!v)
        return {};
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.6f", *v);
    return buf;
}

void fill_from_trace(MatrixRow& row)
{
    const Trace trace = Trace::load(row.trace);
    try {
        const TtxReport t = compute_ttx(trace);
        row.ttx = t.ttx;
        row.ideal_ttx = t.ideal_ttx;
    } catch (const Error&) {
    }
    try {
        const Utilization u = compute_utilization(trace);
        row.workload_pct = u.workload_pct;
        row.overhead_pct = u.overhead_pct;
        row.idle_pct = u.idle_pct;
    } catch (const Error&) {
    }
    try {
        row.throughput = scheduler_throughput(trace);
    } catch (const Error&) {
    }
}

} // namespace

bool MatrixResult::clean() const noexcept
{
    for (const auto& r : rows)
        if (!r.clean())
            return false;
    return true;
}

MatrixResult run_matrix(const ExperimentMatrix& matrix, std::ostream* log)
{
    ExperimentMatrix m = matrix;
    validate_matrix(m);

    MatrixResult result;
    result.directory = m.output;
    fs::create_directories(m.output);

    for (std::size_t c = 0; c < m.configurations(); ++c) {
        for (std::uint32_t rep = 0; rep < m.repetitions; ++rep) {
            const SessionConfig cfg = m.session(c, rep);
            MatrixRow row;
            row.config = c;
            row.repetition = rep;
            row.tasks = m.tasks_of(c);
            row.pilot_cores = m.pilot_cores[c];
            row.session_id = cfg.session_id;
            try {
                const SessionResult r = run_session(cfg);
                row.trace = r.trace;
                row.aborted = r.aborted;
                row.done = r.done;
                row.failed = r.failed;
                row.canceled = r.canceled;
                row.wall_seconds = r.wall_seconds;
                if (!r.trace.empty())
                    fill_from_trace(row);
                else
                    row.ttx = r.end - r.start;
            } catch (const std::exception& e) {
                row.error = e.what();
            }
            if (log) {
                *log << row.session_id << ": ";
                if (!row.error.empty())
                    *log << "error: " << row.error;
                else
                    *log << "done=" << row.done << " failed=" << row.failed
                         << " canceled=" << row.canceled << " ttx=" << fmt(row.ttx);
                *log << '\n';
            }
            result.rows.push_back(std::move(row));
        }
    }

    const fs::path sessions = m.output / "sessions.csv";
    const fs::path summary = m.output / "summary.csv";
    const fs::path config = m.output / "config.ini";
    write_text_file(sessions, sessions_csv(result.rows));
    write_text_file(summary, summary_csv(result.rows));
    write_text_file(config, m.echo());
    result.files = {sessions, summary, config};
    return result;
}

std::string sessions_csv(const std::vector<MatrixRow>& rows)
{
    std::ostringstream o;
    o << "session,config,repetition,tasks,pilot_cores,status,done,failed,canceled,wall_seconds,"
         "ttx,ideal_ttx,workload_pct,overhead_pct,idle_pct,throughput,trace\n";
    for (const auto& r : rows) {
        const char* status = !r.error.empty() ? "error" : r.aborted ? "aborted"
                                                       : r.clean() ? "ok"
                                                                   : "partial";
        o << r.session_id << ',' << r.config << ',' << r.repetition << ',' << r.tasks << ','
          << r.pilot_cores << ',' << status << ',' << r.done << ',' << r.failed << ','
          << r.canceled << ',' << fmt(r.wall_seconds) << ',' << fmt(r.ttx) << ','
          << fmt(r.ideal_ttx) << ',' << fmt(r.workload_pct) << ',' << fmt(r.overhead_pct) << ','
          << fmt(r.idle_pct) << ',' << fmt(r.throughput) << ',' << r.trace.string() << '\n';
    }
    return o.str();
}

std::string summary_csv(const std::vector<MatrixRow>& rows)
{
    std::map<std::size_t, std::vector<const MatrixRow*>> by_config;
    for (const auto& r : rows)
        by_config[r.config].push_back(&r);

    auto stat = [](const std::vector<const MatrixRow*>& group, auto field) {
        std::vector<double> v;
        for (const MatrixRow* r : group)
            if (auto x = field(*r))
                v.push_back(*x);
        if (v.empty())
            return std::string(",");
        for (double x : v)
            if (!std::isfinite(x))
                return fmt(x) + ',';
        const EventStats s = summarize(v);
        return fmt(s.mean) + ',' + fmt(s.std);
    };

    std::ostringstream o;
    o << "config,tasks,pilot_cores,sessions,clean,ttx_mean,ttx_std,overhead_mean,overhead_std,"
         "workload_pct_mean,workload_pct_std,overhead_pct_mean,overhead_pct_std,idle_pct_mean,"
         "idle_pct_std,throughput_mean,throughput_std\n";
    for (const auto& [config, group] : by_config) {
        std::size_t clean = 0;
        for (const MatrixRow* r : group)
            clean += r->clean();
        o << config << ',' << group.front()->tasks << ',' << group.front()->pilot_cores << ','
          << group.size() << ',' << clean << ','
          << stat(group, [](const MatrixRow& r) { return r.ttx; }) << ','
          << stat(group,
                  [](const MatrixRow& r) -> std::optional<double> {
                      if (!r.ttx || !r.ideal_ttx || *r.ideal_ttx <= 0.0)
                          return std::nullopt;
                      return *r.ttx / *r.ideal_ttx - 1.0;
                  })
          << ',' << stat(group, [](const MatrixRow& r) { return r.workload_pct; }) << ','
          << stat(group, [](const MatrixRow& r) { return r.overhead_pct; }) << ','
          << stat(group, [](const MatrixRow& r) { return r.idle_pct; }) << ','
          << stat(group, [](const MatrixRow& r) { return r.throughput; }) << '\n';
    }
    return o.str();
}

} // namespace pilot
