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

#include "pilot/store.hpp"

#include "pilot/error.hpp"
#include "pilot/profiler.hpp"

#include <json.hpp>

#include <fstream>

namespace pilot {

using nlohmann::json;

namespace {

json refs_to_json(const std::vector<FileRef>& refs)
{
    json arr = json::array();
    for (const auto& r : refs)
        arr.push_back({{"source", r.source}, {"target", r.target}});
    return arr;
}

std::vector<FileRef> refs_from_json(const json& arr)
{
    std::vector<FileRef> refs;
    for (const auto& r : arr)
        refs.push_back({r.at("source").get<std::string>(), r.at("target").get<std::string>()});
    return refs;
}

} // namespace

std::string unit_to_json_line(const UnitDescription& unit)
{
    json j = {
        {"id", unit.unit_id},
        {"cores", unit.cores},
        {"payload",
         {{"kind", to_string(unit.payload.kind)},
          {"duration", unit.payload.target_duration},
          {"jitter", unit.payload.jitter_sigma},
          {"flops", unit.payload.flop_count},
          {"command", unit.payload.command}}},
        {"stage_in", refs_to_json(unit.stage_in)},
        {"stage_out", refs_to_json(unit.stage_out)},
    };
    return j.dump();
}

UnitDescription unit_from_json_line(const std::string& line)
{
    try {
        const json j = json::parse(line);
        UnitDescription u;
        u.unit_id = j.at("id").get<std::string>();
        u.cores = j.at("cores").get<std::uint32_t>();
        const json& p = j.at("payload");
        u.payload.kind = payload_kind_from_string(p.at("kind").get<std::string>());
        u.payload.target_duration = p.at("duration").get<double>();
        u.payload.jitter_sigma = p.at("jitter").get<double>();
        u.payload.flop_count = p.at("flops").get<std::uint64_t>();
        u.payload.command = p.at("command").get<std::vector<std::string>>();
        u.stage_in = refs_from_json(j.at("stage_in"));
        u.stage_out = refs_from_json(j.at("stage_out"));
        return u;
    } catch (const json::exception& e) {
        throw ConfigError(std::string("malformed store record: ") + e.what());
    }
}

WorkloadStore::WorkloadStore(std::size_t pull_batch) : pull_batch_(pull_batch)
{
    if (pull_batch_ == 0)
        throw ConfigError("store pull batch must be >= 1");
}

WorkloadStore::WorkloadStore(const std::filesystem::path& file, std::size_t pull_batch)
    : backing_(StoreBacking::FileBacked), file_(file), pull_batch_(pull_batch)
{
    if (pull_batch_ == 0)
        throw ConfigError("store pull batch must be >= 1");
    if (file_.has_parent_path())
        std::filesystem::create_directories(file_.parent_path());
    std::ofstream out(file_, std::ios::trunc);
    if (!out)
        throw ConfigError("cannot create store file " + file_.string());
}

WorkloadStore WorkloadStore::open(const std::filesystem::path& file, std::size_t pull_batch)
{
    std::ifstream in(file);
    if (!in)
        throw ConfigError("cannot open store file " + file.string());
    WorkloadStore store(pull_batch);
    store.backing_ = StoreBacking::FileBacked;
    store.file_ = file;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty())
            continue;
        UnitDescription u = unit_from_json_line(line);
        if (!store.ids_.insert(u.unit_id).second)
            throw ConfigError("duplicate unit id '" + u.unit_id + "' in " + file.string());
        store.pending_.push_back(std::move(u));
    }
    return store;
}

void WorkloadStore::insert(UnitDescription unit)
{
    if (!is_valid_unit_id(unit.unit_id))
        throw ConfigError("invalid unit id '" + unit.unit_id + "'");
    if (unit.cores == 0)
        throw ConfigError("unit " + unit.unit_id + " requests zero cores");
    if (!ids_.insert(unit.unit_id).second)
        throw ConfigError("duplicate unit id '" + unit.unit_id + "'");
    if (backing_ == StoreBacking::FileBacked) {
        std::ofstream out(file_, std::ios::app);
        out << unit_to_json_line(unit) << '\n';
        if (!out)
            throw ConfigError("cannot append to store file " + file_.string());
    }
    pending_.push_back(std::move(unit));
}

std::vector<UnitDescription> WorkloadStore::pull(std::size_t batch)
{
    std::vector<UnitDescription> out;
    const std::size_t n = std::min(batch, pending_.size());
    out.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        out.push_back(std::move(pending_.front()));
        pending_.pop_front();
    }
    return out;
}

std::vector<UnitDescription> pull_units(WorkloadStore& store, std::size_t batch, double now,
                                        Recorder* recorder)
{
    if (batch == 0)
        throw ConfigError("pull batch must be >= 1");
    auto units = store.pull(batch);
    if (recorder)
        for (const auto& u : units)
            recorder->record(now, events::db_pull, u.unit_id);
    return units;
}

} // namespace pilot
