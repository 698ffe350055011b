#pragma once

// Parameter checkpoint, JSON, format "infoadv-checkpoint" version 1:
//
// {
//   "format": "infoadv-checkpoint", "version": 1,
//   "config": { <TrainConfig key>: <string value>, ... },
//   "in_dim": D,
//   "params": { "<group>/<name>": {"shape": [rows, cols], "values": [row-major reals]} }
// }
//
// Groups are "encoder", "head" and "generator". Reals are written with
// round-trip precision, so save/load is exact.

#include <filesystem>
#include <fstream>
#include <string>

#include <nlohmann/json.hpp>

#include "config.hpp"
#include "trainer.hpp"

namespace infoadv {

inline constexpr const char* kCheckpointFormat = "infoadv-checkpoint";
inline constexpr int kCheckpointVersion = 1;

namespace detail {

inline void dump_store(nlohmann::json& out, const std::string& group, const ParamStore& store) {
    for (const auto& p : store.all()) {
        nlohmann::json entry;
        entry["shape"] = {p.value.rows(), p.value.cols()};
        entry["values"] = std::vector<double>(p.value.data(), p.value.data() + p.value.size());
        out[group + "/" + p.name] = std::move(entry);
    }
}

inline void load_store(const nlohmann::json& params, const std::string& group, ParamStore& store) {
    for (auto& p : store.all()) {
        const std::string key = group + "/" + p.name;
        if (!params.contains(key)) throw DataError("checkpoint is missing parameter '" + key + "'");
        const auto& entry = params.at(key);
        const auto shape = entry.at("shape").get<std::vector<Index>>();
        const auto values = entry.at("values").get<std::vector<double>>();
        if (shape.size() != 2 || shape[0] != p.value.rows() || shape[1] != p.value.cols())
            throw DataError("checkpoint parameter '" + key + "' has incompatible shape");
        if (static_cast<Index>(values.size()) != shape[0] * shape[1]) throw DataError("checkpoint parameter '" + key + "' has wrong value count");
        std::copy(values.begin(), values.end(), p.value.data());
    }
}

}  // namespace detail

inline nlohmann::json checkpoint_json(const TrainedModel& m) {
    nlohmann::json j;
    j["format"] = kCheckpointFormat;
    j["version"] = kCheckpointVersion;
    j["config"] = nlohmann::json::object();
    for (const auto& [k, v] : config_entries(m.config)) j["config"][k] = v;
    j["in_dim"] = m.encoder.dims.in_dim;
    nlohmann::json params = nlohmann::json::object();
    detail::dump_store(params, "encoder", m.encoder.params);
    detail::dump_store(params, "head", m.head.params);
    detail::dump_store(params, "generator", m.generator.params);
    j["params"] = std::move(params);
    return j;
}

inline TrainedModel model_from_json(const nlohmann::json& j) {
    try {
        if (j.at("format").get<std::string>() != kCheckpointFormat) throw DataError("not an infoadv checkpoint");
        if (j.at("version").get<int>() != kCheckpointVersion) throw DataError("unsupported checkpoint version");
        TrainConfig cfg;
        bool lr_gen = false;
        for (const auto& [k, v] : j.at("config").items()) {
            set_config_value(cfg, k, v.get<std::string>());
            lr_gen = lr_gen || k == "lr_generator";
        }
        if (!lr_gen) cfg.lr_generator = cfg.lr_encoder;
        TrainedModel m = TrainedModel::init(j.at("in_dim").get<Index>(), cfg);
        const auto& params = j.at("params");
        detail::load_store(params, "encoder", m.encoder.params);
        detail::load_store(params, "head", m.head.params);
        detail::load_store(params, "generator", m.generator.params);
        return m;
    } catch (const nlohmann::json::exception& e) {
        throw DataError(std::string("malformed checkpoint: ") + e.what());
    }
}

inline void save_checkpoint(const TrainedModel& m, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write checkpoint " + path.string());
    out << checkpoint_json(m).dump() << "\n";
}

inline TrainedModel load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open checkpoint " + path.string());
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        throw DataError("malformed checkpoint " + path.string() + ": " + e.what());
    }
    return model_from_json(j);
}

}  // namespace infoadv
