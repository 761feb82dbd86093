#pragma once

#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "dualdst/autodiff.hpp"

namespace dualdst {

inline constexpr int kCheckpointVersion = 1;

inline void save_params(const std::string& path, const std::vector<Parameter*>& params) {
    nlohmann::ordered_json j;
    j["format_version"] = kCheckpointVersion;
    for (const Parameter* p : params) {
        nlohmann::ordered_json entry;
        entry["shape"] = p->tensor.shape;
        entry["data"] = p->tensor.data;
        j[p->name] = std::move(entry);
    }
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write checkpoint " + path);
    out << j.dump() << "\n";
}

// Loads into an existing model definition; every parameter must be present
// with a matching shape.
inline void load_params(const std::string& path, const std::vector<Parameter*>& params) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot read checkpoint " + path);
    nlohmann::json j;
    in >> j;
    if (!j.contains("format_version") || j["format_version"].get<int>() != kCheckpointVersion)
        throw std::runtime_error("checkpoint " + path + ": unsupported format_version");
    for (Parameter* p : params) {
        if (!j.contains(p->name))
            throw std::runtime_error("checkpoint " + path + ": missing parameter " + p->name);
        const auto& entry = j[p->name];
        std::vector<int> shape = entry.at("shape").get<std::vector<int>>();
        if (shape != p->tensor.shape)
            throw ShapeMismatch("checkpoint " + path + ": shape mismatch for " + p->name);
        p->tensor.data = entry.at("data").get<std::vector<double>>();
        if (p->tensor.data.size() != size_t(Tensor::count(shape)))
            throw ShapeMismatch("checkpoint " + path + ": data length mismatch for " + p->name);
        p->zero_grad();
    }
}

}  // namespace dualdst
