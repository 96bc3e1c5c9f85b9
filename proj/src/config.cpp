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

#include "pilot/config.hpp"

#include "pilot/error.hpp"
#include "pilot/store.hpp"

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

namespace pilot {

namespace fs = std::filesystem;
namespace pt = boost::property_tree;

namespace {

std::string trim(const std::string& s)
{
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos)
        return {};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

std::uint64_t parse_uint(const std::string& field, const std::string& text)
{
    const std::string t = trim(text);
    if (t.empty() || t.find_first_not_of("0123456789") != std::string::npos)
        throw SchemaError(field, "expected a non-negative integer, got '" + text + "'");
    try {
        return std::stoull(t);
    } catch (const std::exception&) {
        throw SchemaError(field, "integer out of range: '" + text + "'");
    }
}

double parse_double(const std::string& field, const std::string& text)
{
    const std::string t = trim(text);
    std::size_t pos = 0;
    double v = 0.0;
    try {
        v = std::stod(t, &pos);
    } catch (const std::exception&) {
        pos = 0;
    }
    if (t.empty() || pos != t.size() || !std::isfinite(v))
        throw SchemaError(field, "expected a number, got '" + text + "'");
    return v;
}

bool parse_bool(const std::string& field, const std::string& text)
{
    const std::string t = trim(text);
    if (t == "on" || t == "true" || t == "yes" || t == "1")
        return true;
    if (t == "off" || t == "false" || t == "no" || t == "0")
        return false;
    throw SchemaError(field, "expected on/off, got '" + text + "'");
}

std::vector<std::string> split(const std::string& text, char sep)
{
    std::vector<std::string> out;
    std::string item;
    std::istringstream in(text);
    while (std::getline(in, item, sep))
        out.push_back(trim(item));
    return out;
}

std::vector<std::string> split_words(const std::string& text)
{
    std::vector<std::string> out;
    std::istringstream in(text);
    std::string w;
    while (in >> w)
        out.push_back(w);
    return out;
}

// Shortest decimal that reads back as the same double.
std::string exact(double v)
{
    char buf[40];
    for (int p = 6; p <= 17; ++p) {
        std::snprintf(buf, sizeof buf, "%.*g", p, v);
        if (std::stod(buf) == v)
            break;
    }
    return buf;
}

/// One INI section (or the top level) with a key whitelist.
class Section {
public:
    Section(const pt::ptree* tree, std::string prefix) : tree_(tree), prefix_(std::move(prefix)) {}

    bool present() const { return tree_ != nullptr; }

    std::string field(const std::string& key) const
    {
        return prefix_.empty() ? key : prefix_ + "." + key;
    }

    std::optional<std::string> raw(const std::string& key)
    {
        known_.insert(key);
        if (!tree_)
            return std::nullopt;
        const auto it = tree_->find(key);
        if (it == tree_->not_found())
            return std::nullopt;
        return trim(it->second.data());
    }

    std::string text(const std::string& key, const std::string& fallback)
    {
        return raw(key).value_or(fallback);
    }

    std::uint64_t uint(const std::string& key, std::uint64_t fallback)
    {
        auto v = raw(key);
        return v ? parse_uint(field(key), *v) : fallback;
    }

    std::uint32_t uint32(const std::string& key, std::uint32_t fallback)
    {
        const std::uint64_t v = uint(key, fallback);
        if (v > 0xffffffffULL)
            throw SchemaError(field(key), "value too large");
        return static_cast<std::uint32_t>(v);
    }

    double number(const std::string& key, double fallback)
    {
        auto v = raw(key);
        return v ? parse_double(field(key), *v) : fallback;
    }

    bool flag(const std::string& key, bool fallback)
    {
        auto v = raw(key);
        return v ? parse_bool(field(key), *v) : fallback;
    }

    std::vector<std::uint64_t> uint_list(const std::string& key)
    {
        std::vector<std::uint64_t> out;
        auto v = raw(key);
        if (!v || v->empty())
            return out;
        const auto items = split(*v, ',');
        for (std::size_t i = 0; i < items.size(); ++i)
            out.push_back(parse_uint(field(key) + "[" + std::to_string(i) + "]", items[i]));
        return out;
    }

    /// Every key in the section must have been asked for.
    void reject_unknown() const
    {
        if (!tree_)
            return;
        for (const auto& [key, child] : *tree_) {
            if (!child.empty())
                continue;
            if (!known_.count(key))
                throw UnknownKey(field(key), "unknown key");
        }
    }

private:
    const pt::ptree* tree_;
    std::string prefix_;
    std::set<std::string> known_;
};

pt::ptree read_ini(std::istream& in)
{
    pt::ptree tree;
    try {
        pt::read_ini(in, tree);
    } catch (const pt::ini_parser_error& e) {
        throw SchemaError("line " + std::to_string(e.line()), e.message());
    }
    return tree;
}

const pt::ptree* child(const pt::ptree& tree, const std::string& name)
{
    const auto it = tree.find(name);
    if (it == tree.not_found() || it->second.empty())
        return nullptr;
    return &it->second;
}

void reject_unknown_sections(const pt::ptree& tree, const std::set<std::string>& allowed)
{
    for (const auto& [name, c] : tree)
        if (!c.empty() && !allowed.count(name))
            throw UnknownKey(name, "unknown section");
}

template <class F>
auto as_unknown_key(const std::string& field, F&& f) -> decltype(f())
{
    try {
        return f();
    } catch (const InvalidDescription& e) {
        throw UnknownKey(field, e.what());
    }
}

SchedulerKind read_scheduler(Section& s, SchedulerKind fallback)
{
    auto v = s.raw("scheduler");
    if (!v)
        return fallback;
    return as_unknown_key(s.field("scheduler"), [&] { return scheduler_kind_from_string(*v); });
}

Backend read_backend(Section& s, Backend fallback)
{
    auto v = s.raw("backend");
    if (!v)
        return fallback;
    return as_unknown_key(s.field("backend"), [&] { return backend_from_string(*v); });
}

LatencyModel read_latency(Section s, LatencyModel fallback)
{
    LatencyModel m = fallback;
    if (auto preset = s.raw("preset")) {
        if (*preset == "zero")
            m = LatencyModel::zero();
        else if (*preset == "titan")
            m = LatencyModel::titan();
        else
            throw UnknownKey(s.field("preset"), "unknown latency preset '" + *preset + "'");
    }
    m.prepare.median = s.number("prepare_median", m.prepare.median);
    m.prepare.sigma = s.number("prepare_sigma", m.prepare.sigma);
    m.ack_median.scale = s.number("ack_scale", m.ack_median.scale);
    m.ack_median.exponent = s.number("ack_exponent", m.ack_median.exponent);
    m.ack_sigma.scale = s.number("ack_sigma_scale", m.ack_sigma.scale);
    m.ack_sigma.exponent = s.number("ack_sigma_exponent", m.ack_sigma.exponent);
    m.reference_cores = s.number("reference_cores", m.reference_cores);
    const double scale = s.number("scale", 1.0);
    s.reject_unknown();
    if (!(scale > 0.0))
        throw SchemaError(s.field("scale"), "must be > 0");
    if (!(m.reference_cores > 0.0))
        throw SchemaError(s.field("reference_cores"), "must be > 0");
    m = m.scaled(scale);
    try {
        m.validate();
    } catch (const InvalidDescription& e) {
        throw SchemaError("latency", e.what());
    }
    return m;
}

ComponentCosts read_costs(Section s, ComponentCosts fallback)
{
    ComponentCosts c = fallback;
    if (auto preset = s.raw("preset")) {
        if (*preset == "zero")
            c = ComponentCosts::zero();
        else if (*preset == "titan")
            c = ComponentCosts::titan();
        else
            throw UnknownKey(s.field("preset"), "unknown cost preset '" + *preset + "'");
    }
    c.sched_base = s.number("sched_base", c.sched_base);
    c.sched_probe = s.number("sched_probe", c.sched_probe);
    c.lookup = s.number("lookup", c.lookup);
    c.unsched_base = s.number("unsched_base", c.unsched_base);
    c.unsched_slot = s.number("unsched_slot", c.unsched_slot);
    c.dispatch = s.number("dispatch", c.dispatch);
    const double scale = s.number("scale", 1.0);
    s.reject_unknown();
    if (!(scale > 0.0))
        throw SchemaError(s.field("scale"), "must be > 0");
    c = c.scaled(scale);
    try {
        c.validate();
    } catch (const InvalidDescription& e) {
        throw SchemaError("costs", e.what());
    }
    return c;
}

TaskPayload read_payload(Section& s, TaskPayload p)
{
    if (auto kind = s.raw("kind"))
        p.kind = as_unknown_key(s.field("kind"), [&] { return payload_kind_from_string(*kind); });
    p.target_duration = s.number("duration", p.target_duration);
    p.jitter_sigma = s.number("jitter", p.jitter_sigma);
    p.flop_count = s.uint("flops", p.flop_count);
    if (auto cmd = s.raw("command"))
        p.command = split_words(*cmd);
    try {
        p.validate();
    } catch (const InvalidDescription& e) {
        throw SchemaError(s.field("duration"), e.what());
    }
    return p;
}

void read_launch(Section s, std::optional<LaunchMethod>& method, std::string& exe)
{
    if (auto m = s.raw("method"))
        method = as_unknown_key(s.field("method"), [&] { return launch_method_from_string(*m); });
    exe = s.text("payload_exe", exe);
    s.reject_unknown();
}

PilotDescription read_pilot(Section& s, PilotDescription p)
{
    p.resource_name = s.text("resource_name", p.resource_name);
    p.node_count = s.uint32("node_count", s.uint32("nodes", p.node_count));
    p.cores_per_node = s.uint32("cores_per_node", s.uint32("cpn", p.cores_per_node));
    p.walltime = s.number("walltime", p.walltime);
    p.backend = read_backend(s, p.backend);
    try {
        validate_pilot(p);
    } catch (const InvalidDescription& e) {
        throw SchemaError(s.field("node_count"), e.what());
    }
    return p;
}

fs::path resolve(const fs::path& base, const std::string& p)
{
    const fs::path path(p);
    return path.is_absolute() ? path : base / path;
}

std::ifstream open_config(const fs::path& path)
{
    std::ifstream in(path);
    if (!in)
        throw SchemaError(path.string(), "cannot open configuration file");
    return in;
}

} // namespace

PilotDescription parse_resource_config(std::istream& in)
{
    const pt::ptree tree = read_ini(in);
    reject_unknown_sections(tree, {"pilot"});
    Section top(&tree, "");
    top.reject_unknown();
    Section s(child(tree, "pilot"), "pilot");
    if (!s.present())
        throw SchemaError("pilot", "resource file needs a [pilot] section");
    PilotDescription p = read_pilot(s, PilotDescription{});
    s.reject_unknown();
    return p;
}

PilotDescription load_resource_config(const fs::path& path)
{
    auto in = open_config(path);
    return parse_resource_config(in);
}

SessionConfig parse_session_config(std::istream& in, const fs::path& base_dir)
{
    const pt::ptree tree = read_ini(in);
    reject_unknown_sections(tree, {"pilot", "workload", "latency", "costs", "launch"});

    SessionConfig c;
    Section top(&tree, "");
    c.session_id = top.text("session", c.session_id);
    c.scheduler = read_scheduler(top, c.scheduler);
    c.seed = top.uint("seed", c.seed);
    c.profile = top.flag("profile", c.profile);
    c.output_dir = top.text("output", c.output_dir.string());
    c.executors = top.uint32("executors", c.executors);
    c.pull_batch = top.uint("pull_batch", c.pull_batch);
    c.channel_capacity = top.uint("channel_capacity", c.channel_capacity);
    top.reject_unknown();
    if (!is_valid_unit_id(c.session_id))
        throw SchemaError("session", "invalid session id '" + c.session_id + "'");
    if (c.executors == 0)
        throw SchemaError("executors", "must be >= 1");
    if (c.pull_batch == 0)
        throw SchemaError("pull_batch", "must be >= 1");

    Section pilot(child(tree, "pilot"), "pilot");
    PilotDescription base;
    if (auto file = pilot.raw("resource_file"))
        base = load_resource_config(resolve(base_dir, *file));
    c.pilot = read_pilot(pilot, base);
    pilot.reject_unknown();

    c.pilot.latency = read_latency(Section(child(tree, "latency"), "latency"), LatencyModel::zero());
    c.costs = read_costs(Section(child(tree, "costs"), "costs"), ComponentCosts::zero());
    read_launch(Section(child(tree, "launch"), "launch"), c.launch, c.payload_exe);

    Section work(child(tree, "workload"), "workload");
    if (auto store = work.raw("store")) {
        auto s = WorkloadStore::open(resolve(base_dir, *store), c.pull_batch);
        c.units = s.pull(s.pending());
    } else {
        WorkloadSpec spec;
        spec.count = work.uint("count", 0);
        spec.cores = work.uint32("cores", 4);
        spec.id_prefix = work.text("id_prefix", spec.id_prefix);
        spec.payload = read_payload(work, ExperimentMatrix::default_payload());
        if (spec.count == 0)
            throw SchemaError("workload.count", "must be >= 1");
        if (spec.cores == 0)
            throw SchemaError("workload.cores", "must be >= 1");
        c.units = make_workload(spec);
    }
    work.reject_unknown();
    return c;
}

SessionConfig load_session_config(const fs::path& path)
{
    auto in = open_config(path);
    return parse_session_config(in, path.parent_path().empty() ? fs::path(".") : path.parent_path());
}

const char* to_string(MatrixMode m)
{
    return m == MatrixMode::Weak ? "weak" : "strong";
}

TaskPayload ExperimentMatrix::default_payload()
{
    TaskPayload p;
    p.kind = PayloadKind::Sleep;
    p.target_duration = 3.0;
    p.jitter_sigma = 0.05;
    return p;
}

void validate_matrix(ExperimentMatrix& m)
{
    if (m.task_counts.empty())
        throw SchemaError("task_counts", "must list at least one task count");
    for (std::size_t i = 0; i < m.task_counts.size(); ++i)
        if (m.task_counts[i] == 0)
            throw SchemaError("task_counts[" + std::to_string(i) + "]", "must be >= 1");
    if (m.cores_per_task == 0)
        throw SchemaError("cores_per_task", "must be >= 1");
    if (m.cores_per_node == 0)
        throw SchemaError("cores_per_node", "must be >= 1");
    if (m.repetitions == 0)
        throw SchemaError("repetitions", "must be >= 1");
    if (m.executors == 0)
        throw SchemaError("executors", "must be >= 1");
    if (!(m.scale_factor > 0.0))
        throw SchemaError("scale_factor", "must be > 0");
    if (!(m.walltime > 0.0))
        throw SchemaError("walltime", "must be > 0");

    if (m.mode == MatrixMode::Weak) {
        if (m.pilot_cores.empty())
            for (auto n : m.task_counts)
                m.pilot_cores.push_back(n * m.cores_per_task);
        if (m.pilot_cores.size() != m.task_counts.size())
            throw SchemaError("pilot_cores", "weak mode needs one pilot size per task count");
        for (std::size_t i = 0; i < m.task_counts.size(); ++i)
            if (m.task_counts[i] * m.cores_per_task != m.pilot_cores[i])
                throw SchemaError("task_counts[" + std::to_string(i) + "]",
                                  std::to_string(m.task_counts[i]) + " tasks x " +
                                      std::to_string(m.cores_per_task) + " cores != " +
                                      std::to_string(m.pilot_cores[i]) + " pilot cores");
    } else {
        if (m.task_counts.size() != 1)
            throw SchemaError("task_counts", "strong mode takes a single task count");
        if (m.pilot_cores.empty())
            throw SchemaError("pilot_cores", "strong mode needs at least one pilot size");
    }
    for (std::size_t i = 0; i < m.pilot_cores.size(); ++i) {
        const std::string f = "pilot_cores[" + std::to_string(i) + "]";
        if (m.pilot_cores[i] == 0 || m.pilot_cores[i] % m.cores_per_node != 0)
            throw SchemaError(f, "must be a positive multiple of " +
                                     std::to_string(m.cores_per_node) + " cores per node");
        if (m.pilot_cores[i] < m.cores_per_task)
            throw SchemaError(f, "smaller than one task");
    }
    try {
        m.payload.validate();
        m.latency.validate();
        m.costs.validate();
    } catch (const InvalidDescription& e) {
        throw SchemaError("payload", e.what());
    }
    if (m.launch && !is_compatible(*m.launch, m.backend))
        throw SchemaError("launch.method", std::string(to_string(*m.launch)) +
                                               " does not run on the " + to_string(m.backend) +
                                               " backend");
}

ExperimentMatrix parse_matrix_config(std::istream& in)
{
    const pt::ptree tree = read_ini(in);
    reject_unknown_sections(tree, {"payload", "latency", "costs", "launch"});

    ExperimentMatrix m;
    Section top(&tree, "");
    if (auto mode = top.raw("mode")) {
        if (*mode == "weak")
            m.mode = MatrixMode::Weak;
        else if (*mode == "strong")
            m.mode = MatrixMode::Strong;
        else
            throw UnknownKey("mode", "unknown mode '" + *mode + "'");
    }
    m.task_counts = top.uint_list("task_counts");
    m.cores_per_task = top.uint32("cores_per_task", m.cores_per_task);
    m.pilot_cores = top.uint_list("pilot_cores");
    m.cores_per_node = top.uint32("cores_per_node", m.cores_per_node);
    m.scheduler = read_scheduler(top, m.scheduler);
    m.repetitions = top.uint32("repetitions", m.repetitions);
    m.scale_factor = top.number("scale_factor", m.scale_factor);
    m.seed = top.uint("seed", m.seed);
    m.backend = read_backend(top, m.backend);
    m.executors = top.uint32("executors", m.executors);
    m.walltime = top.number("walltime", m.walltime);
    m.profile = top.flag("profile", m.profile);
    m.output = top.text("output", m.output.string());
    top.reject_unknown();

    Section payload(child(tree, "payload"), "payload");
    m.payload = read_payload(payload, m.payload);
    payload.reject_unknown();
    m.latency = read_latency(Section(child(tree, "latency"), "latency"), m.latency);
    m.costs = read_costs(Section(child(tree, "costs"), "costs"), m.costs);
    read_launch(Section(child(tree, "launch"), "launch"), m.launch, m.payload_exe);

    validate_matrix(m);
    return m;
}

ExperimentMatrix validate_config(const fs::path& path)
{
    auto in = open_config(path);
    return parse_matrix_config(in);
}

std::string ExperimentMatrix::echo() const
{
    auto list = [](const std::vector<std::uint64_t>& v) {
        std::string out;
        for (std::size_t i = 0; i < v.size(); ++i)
            out += (i ? "," : "") + std::to_string(v[i]);
        return out;
    };
    std::ostringstream o;
    o << "mode = " << to_string(mode) << '\n'
      << "task_counts = " << list(task_counts) << '\n'
      << "cores_per_task = " << cores_per_task << '\n'
      << "pilot_cores = " << list(pilot_cores) << '\n'
      << "cores_per_node = " << cores_per_node << '\n'
      << "scheduler = " << to_string(scheduler) << '\n'
      << "repetitions = " << repetitions << '\n'
      << "scale_factor = " << exact(scale_factor) << '\n'
      << "seed = " << seed << '\n'
      << "backend = " << to_string(backend) << '\n'
      << "executors = " << executors << '\n'
      << "walltime = " << exact(walltime) << '\n'
      << "profile = " << (profile ? "on" : "off") << '\n'
      << "output = " << output.string() << '\n';
    o << "\n[payload]\n"
      << "kind = " << to_string(payload.kind) << '\n'
      << "duration = " << exact(payload.target_duration) << '\n'
      << "jitter = " << exact(payload.jitter_sigma) << '\n'
      << "flops = " << payload.flop_count << '\n';
    if (!payload.command.empty()) {
        o << "command =";
        for (const auto& w : payload.command)
            o << ' ' << w;
        o << '\n';
    }
    o << "\n[latency]\n"
      << "prepare_median = " << exact(latency.prepare.median) << '\n'
      << "prepare_sigma = " << exact(latency.prepare.sigma) << '\n'
      << "ack_scale = " << exact(latency.ack_median.scale) << '\n'
      << "ack_exponent = " << exact(latency.ack_median.exponent) << '\n'
      << "ack_sigma_scale = " << exact(latency.ack_sigma.scale) << '\n'
      << "ack_sigma_exponent = " << exact(latency.ack_sigma.exponent) << '\n'
      << "reference_cores = " << exact(latency.reference_cores) << '\n';
    o << "\n[costs]\n"
      << "sched_base = " << exact(costs.sched_base) << '\n'
      << "sched_probe = " << exact(costs.sched_probe) << '\n'
      << "lookup = " << exact(costs.lookup) << '\n'
      << "unsched_base = " << exact(costs.unsched_base) << '\n'
      << "unsched_slot = " << exact(costs.unsched_slot) << '\n'
      << "dispatch = " << exact(costs.dispatch) << '\n';
    if (launch || !payload_exe.empty()) {
        o << "\n[launch]\n";
        if (launch)
            o << "method = " << to_string(*launch) << '\n';
        if (!payload_exe.empty())
            o << "payload_exe = " << payload_exe << '\n';
    }
    return o.str();
}

SessionConfig ExperimentMatrix::session(std::size_t config, std::uint32_t rep) const
{
    const std::uint64_t tasks = tasks_of(config);
    const std::uint64_t cores = pilot_cores.at(config);
    const double compress = 1.0 / scale_factor;

    SessionConfig s;
    char id[96];
    std::snprintf(id, sizeof id, "%s-n%06llu-c%07llu-r%02u", to_string(mode),
                  static_cast<unsigned long long>(tasks), static_cast<unsigned long long>(cores),
                  rep);
    s.session_id = id;
    s.pilot.resource_name = "matrix";
    s.pilot.cores_per_node = cores_per_node;
    s.pilot.node_count = static_cast<std::uint32_t>(cores / cores_per_node);
    s.pilot.walltime = walltime * compress;
    s.pilot.backend = backend;
    s.pilot.latency = latency.scaled(compress);
    s.costs = costs.scaled(compress);
    s.scheduler = scheduler;
    s.seed = mix_seed(mix_seed(seed, config), rep);
    s.profile = profile;
    s.output_dir = output;
    s.executors = executors;
    s.launch = launch;
    s.payload_exe = payload_exe;

    WorkloadSpec w;
    w.count = tasks;
    w.cores = cores_per_task;
    w.payload = payload;
    w.payload.target_duration *= compress;
    w.payload.jitter_sigma *= compress;
    s.units = make_workload(w);
    return s;
}

} // namespace pilot
