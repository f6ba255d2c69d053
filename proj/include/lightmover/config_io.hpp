#pragma once

#include <string>

#include "json.hpp"
#include "lightmover/dataset.hpp"
#include "lightmover/flowmatch.hpp"
#include "lightmover/tokenizer.hpp"
#include "lightmover/toy_dit.hpp"

namespace lightmover {

using Json = nlohmann::ordered_json;

// Every reader starts from the value already in `out` (normally the default),
// overwrites the keys present, and throws ConfigError naming the key path of
// any unknown key or mistyped value.

Json config_to_json(const Range& v);
Json config_to_json(const Camera& v);
Json config_to_json(const SceneConfig& v);
Json config_to_json(const TaskMix& v);
Json config_to_json(const DatasetConfig& v);
Json config_to_json(const PruningPolicy& v);
Json config_to_json(const MspeConfig& v);
Json config_to_json(const ToyDitConfig& v);
Json config_to_json(const OptimizerConfig& v);
Json config_to_json(const TrainConfig& v);
Json config_to_json(const SamplerConfig& v);
Json config_to_json(const NormalizationStats& v);

void config_from_json(const Json& j, Range& out, const std::string& path);
void config_from_json(const Json& j, Camera& out, const std::string& path);
void config_from_json(const Json& j, SceneConfig& out, const std::string& path);
void config_from_json(const Json& j, TaskMix& out, const std::string& path);
void config_from_json(const Json& j, DatasetConfig& out, const std::string& path);
void config_from_json(const Json& j, PruningPolicy& out, const std::string& path);
void config_from_json(const Json& j, MspeConfig& out, const std::string& path);
void config_from_json(const Json& j, ToyDitConfig& out, const std::string& path);
void config_from_json(const Json& j, OptimizerConfig& out, const std::string& path);
void config_from_json(const Json& j, TrainConfig& out, const std::string& path);
void config_from_json(const Json& j, SamplerConfig& out, const std::string& path);
void config_from_json(const Json& j, NormalizationStats& out, const std::string& path);

/// Strict object reader used by the functions above.
class JsonReader {
public:
    JsonReader(const Json& j, std::string path);

    template <typename T>
    void scalar(const char* key, T& out) {
        const Json* v = take(key);
        if (!v) return;
        try {
            out = v->get<T>();
        } catch (const Json::exception&) {
            type_error(key);
        }
        check_type(*v, out, key);
    }

    template <typename T>
    void nested(const char* key, T& out) {
        const Json* v = take(key);
        if (v) config_from_json(*v, out, child_path(key));
    }

    const Json* take(const char* key);
    std::string child_path(const char* key) const;
    [[noreturn]] void type_error(const char* key) const;
    /// Throws for keys that were never read.
    void finish() const;

private:
    template <typename T>
    void check_type(const Json& v, const T&, const char* key) const {
        if constexpr (std::is_same_v<T, bool>) {
            if (!v.is_boolean()) type_error(key);
        } else if constexpr (std::is_integral_v<T>) {
            if (!v.is_number_integer()) type_error(key);
        } else if constexpr (std::is_floating_point_v<T>) {
            if (!v.is_number()) type_error(key);
        } else if constexpr (std::is_same_v<T, std::string>) {
            if (!v.is_string()) type_error(key);
        }
    }

    const Json& j_;
    std::string path_;
    std::vector<std::string> seen_;
};

}  // namespace lightmover
