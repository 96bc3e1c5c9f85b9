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
#include "pilot/config.hpp"
#include "pilot/error.hpp"
#include "pilot/matrix.hpp"
#include "pilot/session.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

namespace fs = std::filesystem;

namespace {

struct Overrides {
    std::string backend;
    std::optional<std::uint64_t> seed;
    std::string profile;
    std::string output;

    void add_to(CLI::App* cmd)
    {
        cmd->add_option("--backend", backend, "Execution backend")
            ->check(CLI::IsMember({"real", "virtual"}));
        cmd->add_option("--seed", seed, "Master seed");
        cmd->add_option("--profile", profile, "Write traces")->check(CLI::IsMember({"on", "off"}));
        cmd->add_option("--output", output, "Output directory");
    }

    void apply(pilot::SessionConfig& c) const
    {
        if (!backend.empty())
            c.pilot.backend = pilot::backend_from_string(backend);
        if (seed)
            c.seed = *seed;
        if (!profile.empty())
            c.profile = profile == "on";
        if (!output.empty())
            c.output_dir = output;
    }

    void apply(pilot::ExperimentMatrix& m) const
    {
        if (!backend.empty())
            m.backend = pilot::backend_from_string(backend);
        if (seed)
            m.seed = *seed;
        if (!profile.empty())
            m.profile = profile == "on";
        if (!output.empty())
            m.output = output;
    }
};

void print_files(const std::vector<fs::path>& files)
{
    for (const auto& f : files)
        std::cout << f.string() << '\n';
}

int run(const std::string& path, const Overrides& o)
{
    pilot::SessionConfig config = pilot::load_session_config(path);
    o.apply(config);
    const pilot::SessionResult r = pilot::run_session(config);
    std::printf("session %s: done=%zu failed=%zu canceled=%zu%s ttx=%.6f wall=%.3fs\n",
                r.session_id.c_str(), r.done, r.failed, r.canceled,
                r.aborted ? " (walltime)" : "", r.end - r.start, r.wall_seconds);
    if (!r.trace.empty())
        std::printf("trace %s\n", r.trace.string().c_str());
    return r.clean() ? 0 : 1;
}

int matrix(const std::string& path, const Overrides& o, bool dry_run)
{
    pilot::ExperimentMatrix m = pilot::validate_config(path);
    o.apply(m);
    pilot::validate_matrix(m);
    if (dry_run) {
        std::cout << m.echo();
        return 0;
    }
    const pilot::MatrixResult r = pilot::run_matrix(m, &std::cout);
    print_files(r.files);
    return r.clean() ? 0 : 1;
}

int analyze(const std::string& trace_path, const std::string& report, const std::string& out)
{
    const pilot::Trace trace = pilot::Trace::load(trace_path);
    std::vector<fs::path> files;
    if (report == "ttx")
        files = pilot::write_ttx_report(trace, out);
    else if (report == "ru")
        files = pilot::write_ru_report(trace, out);
    else if (report == "concurrency")
        files = pilot::write_concurrency_report(trace, out);
    else if (report == "events")
        files = pilot::write_events_report(trace, out);
    else
        files = pilot::write_throughput_report(trace, out);
    print_files(files);
    return 0;
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Pilot-job agent runtime, emulator and trace analytics"};
    app.require_subcommand(1);

    Overrides run_over, matrix_over;
    std::string config;

    auto* run_cmd = app.add_subcommand("run", "Run one session from a session file");
    run_cmd->add_option("config", config, "Session file")->required()->check(CLI::ExistingFile);
    run_over.add_to(run_cmd);

    bool dry_run = false;
    auto* matrix_cmd = app.add_subcommand("matrix", "Run an experiment matrix");
    matrix_cmd->add_option("config", config, "Matrix file")->required()->check(CLI::ExistingFile);
    matrix_cmd->add_flag("--dry-run", dry_run, "Print the resolved matrix and exit");
    matrix_over.add_to(matrix_cmd);

    auto* validate_cmd = app.add_subcommand("validate", "Check a matrix file and echo it resolved");
    validate_cmd->add_option("config", config, "Matrix file")->required()->check(CLI::ExistingFile);

    std::string trace, report, out = ".";
    auto* analyze_cmd = app.add_subcommand("analyze", "Tables and plots from one unified trace");
    analyze_cmd->add_option("trace", trace, "unified.prof")->required()->check(CLI::ExistingFile);
    analyze_cmd->add_option("--report", report, "Report kind")
        ->required()
        ->check(CLI::IsMember({"ttx", "ru", "concurrency", "events", "throughput"}));
    analyze_cmd->add_option("--out", out, "Output directory");

    std::vector<std::string> traces;
    auto* fig4 = app.add_subcommand("fig4", "Utilization bars across sessions");
    fig4->add_option("traces", traces)->required()->check(CLI::ExistingFile);
    fig4->add_option("--out", out);
    auto* fig5 = app.add_subcommand("fig5", "Component concurrency of one session");
    fig5->add_option("trace", trace)->required()->check(CLI::ExistingFile);
    fig5->add_option("--out", out);
    auto* fig6 = app.add_subcommand("fig6", "Per-unit event timeline of one session");
    fig6->add_option("trace", trace)->required()->check(CLI::ExistingFile);
    fig6->add_option("--out", out);
    auto* fig8 = app.add_subcommand("fig8", "Scheduler time per unit against pilot size");
    fig8->add_option("traces", traces)->required()->check(CLI::ExistingFile);
    fig8->add_option("--out", out);

    CLI11_PARSE(app, argc, argv);

    auto paths = [&] { return std::vector<fs::path>(traces.begin(), traces.end()); };
    try {
        if (*run_cmd)
            return run(config, run_over);
        if (*matrix_cmd)
            return matrix(config, matrix_over, dry_run);
        if (*validate_cmd) {
            std::cout << pilot::validate_config(config).echo();
            return 0;
        }
        if (*analyze_cmd)
            return analyze(trace, report, out);
        if (*fig4)
            print_files(pilot::write_fig4(paths(), out));
        else if (*fig5)
            print_files(pilot::write_fig5(trace, out));
        else if (*fig6)
            print_files(pilot::write_fig6(trace, out));
        else if (*fig8)
            print_files(pilot::write_fig8(paths(), out));
        return 0;
    } catch (const pilot::Error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    }
}
