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

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "pilot/analytics.hpp"
#include "pilot/config.hpp"
#include "pilot/error.hpp"
#include "pilot/matrix.hpp"
#include "pilot/store.hpp"
#include "support.hpp"

#include <cstdlib>
#include <fstream>
#include <set>
#include <sstream>

using namespace pilot;
using pilot::test::TempDir;

namespace {

ExperimentMatrix parse(const std::string& text)
{
    std::istringstream in(text);
    return parse_matrix_config(in);
}

// Field of the SchemaError raised by `f`, or "<none>".
template <class F>
std::string schema_field(F&& f)
{
    try {
        f();
    } catch (const SchemaError& e) {
        return e.field();
    }
    return "<none>";
}

std::string read_file(const std::filesystem::path& p)
{
    std::ifstream in(p);
    std::stringstream s;
    s << in.rdbuf();
    return s.str();
}

void write_file(const std::filesystem::path& p, const std::string& text)
{
    std::ofstream(p) << text;
}

std::vector<std::vector<std::string>> read_csv(const std::filesystem::path& p)
{
    std::vector<std::vector<std::string>> rows;
    std::ifstream in(p);
    std::string line;
    while (std::getline(in, line)) {
        std::vector<std::string> cells;
        std::string cell;
        std::istringstream l(line);
        while (std::getline(l, cell, ','))
            cells.push_back(cell);
        if (!line.empty() && line.back() == ',')
            cells.emplace_back();
        rows.push_back(cells);
    }
    return rows;
}

std::size_t column(const std::vector<std::string>& header, const std::string& name)
{
    for (std::size_t i = 0; i < header.size(); ++i)
        if (header[i] == name)
            return i;
    FAIL("no column " << name);
    return 0;
}

// ceil(n / capacity) with capacity from per-node packing.
std::uint64_t expected_generations(std::uint64_t n, std::uint32_t cores, std::uint64_t pilot,
                                   std::uint32_t cpn)
{
    const std::uint64_t nodes = pilot / cpn;
    const std::uint64_t cap = cores <= cpn ? nodes * (cpn / cores) : nodes / ((cores + cpn - 1) / cpn);
    return (n + cap - 1) / cap;
}

} // namespace

TEST_CASE("minimal matrix resolves the documented defaults")
{
    auto m = parse("task_counts = 8, 16\n");
    CHECK(m.mode == MatrixMode::Weak);
    CHECK(m.cores_per_task == 4);
    CHECK(m.cores_per_node == 16);
    CHECK(m.repetitions == 3);
    CHECK(m.scale_factor == 1.0);
    CHECK(m.scheduler == SchedulerKind::ContinuousSearch);
    CHECK(m.backend == Backend::Virtual);
    CHECK(m.payload.kind == PayloadKind::Sleep);
    CHECK(m.payload.target_duration == 3.0);
    CHECK(m.payload.jitter_sigma == 0.05);
    CHECK(m.pilot_cores == std::vector<std::uint64_t>{32, 64});
    CHECK(m.session_count() == 6);
    CHECK(m.latency == LatencyModel::zero());
    CHECK(m.costs == ComponentCosts::zero());
}

TEST_CASE("weak ratio mismatch names the index")
{
    CHECK(schema_field([] { parse("task_counts = 8,16,32\npilot_cores = 32,64,96\n"); }) ==
          "task_counts[2]");
}

TEST_CASE("unknown names raise UnknownKey")
{
    CHECK_THROWS_AS(parse("task_counts = 8\nscheduler = roundrobin\n"), UnknownKey);
    CHECK_THROWS_AS(parse("task_counts = 8\ncolour = blue\n"), UnknownKey);
    CHECK_THROWS_AS(parse("task_counts = 8\n[extras]\na = 1\n"), UnknownKey);
    CHECK_THROWS_AS(parse("task_counts = 8\n[latency]\npreset = summit\n"), UnknownKey);
    CHECK_THROWS_AS(parse("task_counts = 8\n[payload]\nkind = dance\n"), UnknownKey);
    CHECK_THROWS_AS(parse("task_counts = 8\n[costs]\nfoo = 1\n"), UnknownKey);
    CHECK_THROWS_AS(parse("task_counts = 8\nbackend = cloud\n"), UnknownKey);
    CHECK(schema_field([] { parse("task_counts = 8\n[payload]\ncolour = 1\n"); }) ==
          "payload.colour");
}

TEST_CASE("bad values raise SchemaError with the field path")
{
    CHECK(schema_field([] { parse(""); }) == "task_counts");
    CHECK(schema_field([] { parse("task_counts = 8,x,16\n"); }) == "task_counts[1]");
    CHECK(schema_field([] { parse("task_counts = 8,-4\n"); }) == "task_counts[1]");
    CHECK(schema_field([] { parse("task_counts = 8\ncores_per_task = 0\n"); }) == "cores_per_task");
    CHECK(schema_field([] { parse("task_counts = 8\nscale_factor = 0\n"); }) == "scale_factor");
    CHECK(schema_field([] { parse("task_counts = 8\nprofile = maybe\n"); }) == "profile");
    CHECK(schema_field([] { parse("task_counts = 8\n[latency]\nprepare_sigma = abc\n"); }) ==
          "latency.prepare_sigma");
    CHECK(schema_field([] { parse("task_counts = 3\n"); }) == "pilot_cores[0]");
    CHECK(schema_field([] { parse("mode = strong\ntask_counts = 8,16\npilot_cores = 32\n"); }) ==
          "task_counts");
    CHECK(schema_field([] { parse("mode = strong\ntask_counts = 8\n"); }) == "pilot_cores");
    CHECK(schema_field([] { parse("mode = strong\ntask_counts = 8\npilot_cores = 24\n"); }) ==
          "pilot_cores[0]");
    CHECK(schema_field([] { parse("task_counts = 8\nbackend = virtual\n[launch]\nmethod = fork\n"); }) ==
          "launch.method");
}

TEST_CASE("empty task_counts is a configuration error")
{
    ExperimentMatrix m;
    CHECK_THROWS_AS(validate_matrix(m), SchemaError);
}

TEST_CASE("latency and cost presets with overrides and scale")
{
    auto m = parse("task_counts = 8\n[latency]\npreset = titan\n[costs]\npreset = titan\n");
    CHECK(m.latency == LatencyModel::titan());
    CHECK(m.costs == ComponentCosts::titan());

    m = parse("task_counts = 8\n[latency]\npreset = titan\nscale = 0.5\n[costs]\npreset = titan\nscale = 2\n");
    CHECK(m.latency == LatencyModel::titan().scaled(0.5));
    CHECK(m.costs == ComponentCosts::titan().scaled(2.0));

    m = parse("task_counts = 8\n[latency]\npreset = titan\nprepare_median = 10\n");
    auto expected = LatencyModel::titan();
    expected.prepare.median = 10.0;
    CHECK(m.latency == expected);
}

TEST_CASE("echo reads back as the same matrix")
{
    auto m = parse("mode = strong\ntask_counts = 256\npilot_cores = 256,512,1024\n"
                   "scheduler = homogeneous\nseed = 42\nscale_factor = 7.5\nprofile = off\n"
                   "[payload]\nduration = 828\njitter = 14\n"
                   "[latency]\npreset = titan\nscale = 0.1\n[costs]\npreset = titan\n");
    const std::string text = m.echo();
    auto again = parse(text);
    CHECK(again.echo() == text);
    CHECK(again.mode == m.mode);
    CHECK(again.task_counts == m.task_counts);
    CHECK(again.pilot_cores == m.pilot_cores);
    CHECK(again.scheduler == m.scheduler);
    CHECK(again.seed == m.seed);
    CHECK(again.scale_factor == m.scale_factor);
    CHECK(again.profile == m.profile);
    CHECK(again.payload == m.payload);
    CHECK(again.latency == m.latency);
    CHECK(again.costs == m.costs);
}

TEST_CASE("sessions get distinct deterministic seeds and compressed times")
{
    auto m = parse("task_counts = 8,16\nscale_factor = 10\n"
                   "[latency]\npreset = titan\n[costs]\npreset = titan\n");
    std::set<std::uint64_t> seeds;
    std::set<std::string> ids;
    for (std::size_t c = 0; c < m.configurations(); ++c)
        for (std::uint32_t r = 0; r < m.repetitions; ++r) {
            auto s = m.session(c, r);
            seeds.insert(s.seed);
            ids.insert(s.session_id);
            CHECK(s.seed == m.session(c, r).seed);
            CHECK(s.pilot.node_count * s.pilot.cores_per_node == m.pilot_cores[c]);
            CHECK(s.units.size() == m.task_counts[c]);
        }
    CHECK(seeds.size() == 6);
    CHECK(ids.size() == 6);

    auto s = m.session(1, 2);
    CHECK(s.session_id == "weak-n000016-c0000064-r02");
    CHECK(s.units[0].payload.target_duration == doctest::Approx(0.3));
    CHECK(s.units[0].payload.jitter_sigma == doctest::Approx(0.005));
    CHECK(s.pilot.latency.prepare.median == doctest::Approx(LatencyModel::titan().prepare.median / 10));
    CHECK(s.costs.lookup == doctest::Approx(ComponentCosts::titan().lookup / 10));
    CHECK(s.pilot.walltime == doctest::Approx(8640.0));
}

TEST_CASE("validate_config reads a file")
{
    TempDir dir("config");
    write_file(dir / "m.ini", "task_counts = 8\n");
    CHECK(validate_config(dir / "m.ini").pilot_cores == std::vector<std::uint64_t>{32});
    CHECK_THROWS_AS(validate_config(dir / "missing.ini"), SchemaError);
}

TEST_CASE("resource and session files")
{
    TempDir dir("config");
    write_file(dir / "res.ini", "[pilot]\nresource_name = cluster\nnodes = 4\ncpn = 8\nwalltime = 600\n");
    auto p = load_resource_config(dir / "res.ini");
    CHECK(p.resource_name == "cluster");
    CHECK(p.node_count == 4);
    CHECK(p.cores_per_node == 8);
    CHECK(p.walltime == 600.0);

    write_file(dir / "s.ini", "session = demo\nseed = 9\nprofile = off\nscheduler = homogeneous\n"
                              "[pilot]\nresource_file = res.ini\nnode_count = 2\n"
                              "[workload]\ncount = 5\ncores = 2\nduration = 1.5\njitter = 0\n");
    auto s = load_session_config(dir / "s.ini");
    CHECK(s.session_id == "demo");
    CHECK(s.seed == 9);
    CHECK_FALSE(s.profile);
    CHECK(s.scheduler == SchedulerKind::HomogeneousLookup);
    CHECK(s.pilot.node_count == 2);
    CHECK(s.pilot.cores_per_node == 8);
    CHECK(s.pilot.walltime == 600.0);
    REQUIRE(s.units.size() == 5);
    CHECK(s.units[4].cores == 2);
    CHECK(s.units[4].payload.target_duration == 1.5);

    write_file(dir / "bad.ini", "[pilot]\nnodes = 1\n[workload]\ncount = 0\n");
    CHECK(schema_field([&] { load_session_config(dir / "bad.ini"); }) == "workload.count");
    write_file(dir / "bad2.ini", "[pilot]\nnodes = 1\nfoo = 2\n[workload]\ncount = 1\n");
    CHECK_THROWS_AS(load_session_config(dir / "bad2.ini"), UnknownKey);
}

TEST_CASE("session file can read units from a store file")
{
    TempDir dir("config");
    {
        WorkloadStore store(dir / "units.jsonl", 16);
        WorkloadSpec w;
        w.count = 3;
        w.cores = 4;
        for (auto& u : make_workload(w))
            store.insert(u);
    }
    write_file(dir / "s.ini", "[pilot]\nnodes = 1\n[workload]\nstore = units.jsonl\n");
    auto s = load_session_config(dir / "s.ini");
    REQUIRE(s.units.size() == 3);
    CHECK(s.units[2].unit_id == "unit.000002");
}

TEST_CASE("weak matrix: one session per point, one generation each")
{
    TempDir dir("matrix");
    auto m = parse("task_counts = 8,16,32,64\nrepetitions = 1\n");
    m.output = dir.path();
    auto r = run_matrix(m);
    CHECK(r.clean());
    REQUIRE(r.rows.size() == 4);
    for (const auto& row : r.rows) {
        auto ttx = compute_ttx(Trace::load(row.trace));
        CHECK(ttx.generations == 1);
    }
    for (const auto& f : r.files)
        CHECK(std::filesystem::exists(f));
}

TEST_CASE("strong matrix follows the generation law")
{
    TempDir dir("matrix");
    auto m = parse("mode = strong\ntask_counts = 256\npilot_cores = 256,512,1024\nrepetitions = 1\n");
    m.output = dir.path();
    auto r = run_matrix(m);
    CHECK(r.clean());
    REQUIRE(r.rows.size() == 3);
    const std::uint64_t expected[] = {4, 2, 1};
    for (std::size_t i = 0; i < 3; ++i) {
        auto ttx = compute_ttx(Trace::load(r.rows[i].trace));
        CHECK(ttx.generations == expected[i]);
        CHECK(ttx.generations == expected_generations(256, 4, m.pilot_cores[i], 16));
    }
}

TEST_CASE("summary rows are recomputable from the session traces")
{
    TempDir dir("matrix");
    auto m = parse("task_counts = 8,16\nrepetitions = 2\n"
                   "[latency]\npreset = titan\nscale = 0.01\n[costs]\npreset = titan\n");
    m.output = dir.path();
    auto r = run_matrix(m);
    REQUIRE(r.clean());

    auto sessions = read_csv(dir / "sessions.csv");
    REQUIRE(sessions.size() == 5);
    const auto& h = sessions[0];
    for (std::size_t i = 1; i < sessions.size(); ++i) {
        const auto& row = sessions[i];
        const Trace t = Trace::load(row[column(h, "trace")]);
        CHECK(std::stod(row[column(h, "ttx")]) == doctest::Approx(compute_ttx(t).ttx).epsilon(1e-6));
        const auto u = compute_utilization(t);
        CHECK(std::stod(row[column(h, "workload_pct")]) == doctest::Approx(u.workload_pct).epsilon(1e-6));
        CHECK(std::stod(row[column(h, "idle_pct")]) == doctest::Approx(u.idle_pct).epsilon(1e-6));
        CHECK(std::stod(row[column(h, "throughput")]) ==
              doctest::Approx(scheduler_throughput(t)).epsilon(1e-6));
    }

    auto summary = read_csv(dir / "summary.csv");
    REQUIRE(summary.size() == 3);
    const auto& sh = summary[0];
    for (std::size_t c = 0; c < 2; ++c) {
        std::vector<double> ttx;
        for (const auto& row : r.rows)
            if (row.config == c)
                ttx.push_back(compute_ttx(Trace::load(row.trace)).ttx);
        REQUIRE(ttx.size() == 2);
        const double mean = (ttx[0] + ttx[1]) / 2;
        const double sd = std::abs(ttx[0] - ttx[1]) / std::sqrt(2.0);
        CHECK(std::stod(summary[c + 1][column(sh, "ttx_mean")]) == doctest::Approx(mean).epsilon(1e-5));
        CHECK(std::stod(summary[c + 1][column(sh, "ttx_std")]) == doctest::Approx(sd).epsilon(1e-4));
    }
    CHECK(read_file(dir / "config.ini") == m.echo());
}

TEST_CASE("matrix continues past a failing session")
{
    TempDir dir("matrix");
    // 32-core blocks do not tile a 48-core pilot; the 64-core one is fine.
    auto m = parse("mode = strong\ntask_counts = 4\ncores_per_task = 32\npilot_cores = 48,64\n"
                   "scheduler = homogeneous\nrepetitions = 1\n");
    m.output = dir.path();
    auto r = run_matrix(m);
    REQUIRE(r.rows.size() == 2);
    CHECK_FALSE(r.rows[0].error.empty());
    CHECK(r.rows[1].clean());
    CHECK_FALSE(r.clean());
    CHECK(std::filesystem::exists(dir / "summary.csv"));
}

TEST_CASE("cli: run, analyze and exit codes")
{
    TempDir dir("cli");
    const std::string cli = pilot::test::cli_exe();
    write_file(dir / "s.ini", "session = smoke\n[pilot]\nnodes = 1\ncpn = 8\n"
                              "[workload]\ncount = 4\ncores = 2\nduration = 1\n");
    const std::string out = (dir / "out").string();
    auto sh = [](const std::string& cmd) {
        const int rc = std::system((cmd + " >/dev/null 2>&1").c_str());
        return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
    };
    CHECK(sh(cli + " run " + (dir / "s.ini").string() + " --output " + out + " --seed 5") == 0);
    const std::string trace = out + "/smoke/unified.prof";
    REQUIRE(std::filesystem::exists(trace));
    for (std::string report : {"ttx", "ru", "concurrency", "events", "throughput"})
        CHECK(sh(cli + " analyze " + trace + " --report " + report + " --out " + (dir / "rep").string()) == 0);
    CHECK(std::filesystem::exists(dir / "rep" / "ru.svg"));
    CHECK(std::filesystem::exists(dir / "rep" / "events.csv"));
    CHECK(sh(cli + " fig5 " + trace + " --out " + (dir / "figs").string()) == 0);
    CHECK(std::filesystem::exists(dir / "figs" / "fig5.svg"));
    CHECK(sh(cli + " analyze " + trace + " --report nonsense") != 0);

    // A walltime shorter than the payload leaves canceled units: exit 1.
    write_file(dir / "w.ini", "session = short\n[pilot]\nnodes = 1\ncpn = 8\nwalltime = 0.5\n"
                              "[workload]\ncount = 4\ncores = 2\nduration = 1\n");
    CHECK(sh(cli + " run " + (dir / "w.ini").string() + " --output " + out) == 1);

    write_file(dir / "m.ini", "task_counts = 4,8\nrepetitions = 1\noutput = " + (dir / "mx").string() + "\n");
    CHECK(sh(cli + " matrix " + (dir / "m.ini").string() + " --profile off") == 0);
    CHECK(std::filesystem::exists(dir / "mx" / "summary.csv"));
    write_file(dir / "bad.ini", "task_counts = 2\nscheduler = nope\n");
    CHECK(sh(cli + " validate " + (dir / "bad.ini").string()) == 2);
}
