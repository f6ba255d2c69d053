#include "lightmover/config_io.hpp"

#include <algorithm>

#include "lightmover/errors.hpp"

namespace lightmover {

JsonReader::JsonReader(const Json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) {
        throw ConfigError("config: '" + (path_.empty() ? std::string("<root>") : path_) + "' must be an object");
    }
}

const Json* JsonReader::take(const char* key) {
    seen_.emplace_back(key);
    const auto it = j_.find(key);
    return it == j_.end() ? nullptr : &*it;
}

std::string JsonReader::child_path(const char* key) const {
    return path_.empty() ? std::string(key) : path_ + "." + key;
}

void JsonReader::type_error(const char* key) const {
    throw ConfigError("config: '" + child_path(key) + "' has the wrong type");
}

void JsonReader::finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it) {
        if (std::find(seen_.begin(), seen_.end(), it.key()) == seen_.end()) {
            throw ConfigError("config: unknown key '" + child_path(it.key().c_str()) + "'");
        }
    }
}

namespace {

Json vec3_to_json(const Vec3& v) { return Json::array({v.x(), v.y(), v.z()}); }

void vec3_from_json(const Json& j, Vec3& out, const std::string& path) {
    if (!j.is_array() || j.size() != 3 || !j[0].is_number() || !j[1].is_number() || !j[2].is_number()) {
        throw ConfigError("config: '" + path + "' must be an array of 3 numbers");
    }
    out = Vec3(j[0].get<double>(), j[1].get<double>(), j[2].get<double>());
}

template <typename T>
void array_from_json(const Json& j, std::vector<T>& out, const std::string& path) {
    if (!j.is_array()) throw ConfigError("config: '" + path + "' must be an array");
    std::vector<T> values;
    for (const auto& e : j) {
        const bool ok = std::is_integral_v<T> ? e.is_number_integer() : e.is_number();
        if (!ok) throw ConfigError("config: '" + path + "' has an element of the wrong type");
        values.push_back(e.get<T>());
    }
    out = std::move(values);
}

const char* to_string(PruneMode m) { return m == PruneMode::hard ? "hard" : "soft"; }

}  // namespace

Json config_to_json(const Range& v) { return Json::array({v.lo, v.hi}); }

void config_from_json(const Json& j, Range& out, const std::string& path) {
    if (!j.is_array() || j.size() != 2 || !j[0].is_number() || !j[1].is_number()) {
        throw ConfigError("config: '" + path + "' must be a [lo, hi] pair");
    }
    out = {j[0].get<double>(), j[1].get<double>()};
}

Json config_to_json(const Camera& v) {
    Json j;
    j["position"] = vec3_to_json(v.position);
    j["look_at"] = vec3_to_json(v.look_at);
    j["up"] = vec3_to_json(v.up);
    j["vfov_degrees"] = v.vfov_degrees;
    return j;
}

void config_from_json(const Json& j, Camera& out, const std::string& path) {
    JsonReader r(j, path);
    if (const Json* v = r.take("position")) vec3_from_json(*v, out.position, r.child_path("position"));
    if (const Json* v = r.take("look_at")) vec3_from_json(*v, out.look_at, r.child_path("look_at"));
    if (const Json* v = r.take("up")) vec3_from_json(*v, out.up, r.child_path("up"));
    r.scalar("vfov_degrees", out.vfov_degrees);
    r.finish();
}

Json config_to_json(const SceneConfig& v) {
    Json j;
    j["min_spheres"] = v.min_spheres;
    j["max_spheres"] = v.max_spheres;
    j["min_lights"] = v.min_lights;
    j["max_lights"] = v.max_lights;
    j["sphere_radius"] = config_to_json(v.sphere_radius);
    j["sphere_x"] = config_to_json(v.sphere_x);
    j["sphere_z"] = config_to_json(v.sphere_z);
    j["albedo"] = config_to_json(v.albedo);
    j["light_x"] = config_to_json(v.light_x);
    j["light_y"] = config_to_json(v.light_y);
    j["light_z"] = config_to_json(v.light_z);
    j["ambient_level"] = config_to_json(v.ambient_level);
    j["back_wall"] = v.back_wall;
    j["wall_z"] = v.wall_z;
    j["camera"] = config_to_json(v.camera);
    return j;
}

void config_from_json(const Json& j, SceneConfig& out, const std::string& path) {
    JsonReader r(j, path);
    r.scalar("min_spheres", out.min_spheres);
    r.scalar("max_spheres", out.max_spheres);
    r.scalar("min_lights", out.min_lights);
    r.scalar("max_lights", out.max_lights);
    r.nested("sphere_radius", out.sphere_radius);
    r.nested("sphere_x", out.sphere_x);
    r.nested("sphere_z", out.sphere_z);
    r.nested("albedo", out.albedo);
    r.nested("light_x", out.light_x);
    r.nested("light_y", out.light_y);
    r.nested("light_z", out.light_z);
    r.nested("ambient_level", out.ambient_level);
    r.scalar("back_wall", out.back_wall);
    r.scalar("wall_z", out.wall_z);
    r.nested("camera", out.camera);
    r.finish();
}

Json config_to_json(const TaskMix& v) {
    Json j;
    for (int i = 0; i < kTaskTypeCount; ++i) {
        j[std::string(to_string(static_cast<TaskType>(i)))] = v.weights[static_cast<std::size_t>(i)];
    }
    return j;
}

void config_from_json(const Json& j, TaskMix& out, const std::string& path) {
    JsonReader r(j, path);
    for (int i = 0; i < kTaskTypeCount; ++i) {
        const std::string name(to_string(static_cast<TaskType>(i)));
        r.scalar(name.c_str(), out.weights[static_cast<std::size_t>(i)]);
    }
    r.finish();
}

Json config_to_json(const DatasetConfig& v) {
    Json j;
    j["count"] = v.count;
    j["width"] = v.width;
    j["height"] = v.height;
    j["mix"] = config_to_json(v.mix);
    j["alpha"] = config_to_json(v.alpha);
    j["stops_magnitude"] = config_to_json(v.stops_magnitude);
    j["tint_component"] = config_to_json(v.tint_component);
    j["object_shift"] = config_to_json(v.object_shift);
    j["min_light_travel"] = v.min_light_travel;
    j["max_attempts"] = v.max_attempts;
    j["write_images"] = v.write_images;
    return j;
}

void config_from_json(const Json& j, DatasetConfig& out, const std::string& path) {
    JsonReader r(j, path);
    r.scalar("count", out.count);
    r.scalar("width", out.width);
    r.scalar("height", out.height);
    r.nested("mix", out.mix);
    r.nested("alpha", out.alpha);
    r.nested("stops_magnitude", out.stops_magnitude);
    r.nested("tint_component", out.tint_component);
    r.nested("object_shift", out.object_shift);
    r.scalar("min_light_travel", out.min_light_travel);
    r.scalar("max_attempts", out.max_attempts);
    r.scalar("write_images", out.write_images);
    r.finish();
}

Json config_to_json(const PruningPolicy& v) {
    Json j;
    j["tau"] = v.tau;
    j["candidates"] = v.candidates;
    j["color_logits"] = v.color_logits;
    j["intensity_logits"] = v.intensity_logits;
    j["mode"] = to_string(v.mode);
    j["spatial"] = v.spatial;
    j["nonspatial"] = v.nonspatial;
    j["prune_object"] = v.prune_object;
    j["efficiency_weight"] = v.efficiency_weight;
    return j;
}

void config_from_json(const Json& j, PruningPolicy& out, const std::string& path) {
    JsonReader r(j, path);
    r.scalar("tau", out.tau);
    const auto old_candidates = out.candidates;
    if (const Json* v = r.take("candidates")) array_from_json(*v, out.candidates, r.child_path("candidates"));
    const bool candidates_changed = out.candidates != old_candidates;
    bool color_given = false;
    bool intensity_given = false;
    if (const Json* v = r.take("color_logits")) {
        array_from_json(*v, out.color_logits, r.child_path("color_logits"));
        color_given = true;
    }
    if (const Json* v = r.take("intensity_logits")) {
        array_from_json(*v, out.intensity_logits, r.child_path("intensity_logits"));
        intensity_given = true;
    }
    // A new candidate list without explicit logits gets the prior.
    if (candidates_changed && !color_given) out.color_logits = PruningPolicy::prior_logits(out.candidates);
    if (candidates_changed && !intensity_given) out.intensity_logits = PruningPolicy::prior_logits(out.candidates);
    if (const Json* v = r.take("mode")) {
        if (!v->is_string()) r.type_error("mode");
        const auto s = v->get<std::string>();
        if (s == "hard") {
            out.mode = PruneMode::hard;
        } else if (s == "soft") {
            out.mode = PruneMode::soft;
        } else {
            throw ConfigError("config: '" + r.child_path("mode") + "' must be \"hard\" or \"soft\"");
        }
    }
    r.scalar("spatial", out.spatial);
    r.scalar("nonspatial", out.nonspatial);
    r.scalar("prune_object", out.prune_object);
    r.scalar("efficiency_weight", out.efficiency_weight);
    r.finish();
}

Json config_to_json(const MspeConfig& v) {
    Json j;
    j["head_dim"] = v.head_dim;
    j["base"] = v.base;
    j["dim_w"] = v.dim_w;
    j["dim_h"] = v.dim_h;
    j["dim_t"] = v.dim_t;
    j["train_len_w"] = v.train_len_w;
    j["train_len_h"] = v.train_len_h;
    j["train_len_t"] = v.train_len_t;
    return j;
}

void config_from_json(const Json& j, MspeConfig& out, const std::string& path) {
    JsonReader r(j, path);
    r.scalar("head_dim", out.head_dim);
    r.scalar("base", out.base);
    r.scalar("dim_w", out.dim_w);
    r.scalar("dim_h", out.dim_h);
    r.scalar("dim_t", out.dim_t);
    r.scalar("train_len_w", out.train_len_w);
    r.scalar("train_len_h", out.train_len_h);
    r.scalar("train_len_t", out.train_len_t);
    r.finish();
}

Json config_to_json(const ToyDitConfig& v) {
    Json j;
    j["latent_dim"] = v.latent_dim;
    j["model_dim"] = v.model_dim;
    j["heads"] = v.heads;
    j["blocks"] = v.blocks;
    j["mlp_ratio"] = v.mlp_ratio;
    j["time_embed_dim"] = v.time_embed_dim;
    j["final_norm"] = v.final_norm;
    j["time_conditioning"] = v.time_conditioning;
    j["mspe"] = config_to_json(v.mspe);
    return j;
}

void config_from_json(const Json& j, ToyDitConfig& out, const std::string& path) {
    JsonReader r(j, path);
    r.scalar("latent_dim", out.latent_dim);
    r.scalar("model_dim", out.model_dim);
    r.scalar("heads", out.heads);
    r.scalar("blocks", out.blocks);
    r.scalar("mlp_ratio", out.mlp_ratio);
    r.scalar("time_embed_dim", out.time_embed_dim);
    r.scalar("final_norm", out.final_norm);
    r.scalar("time_conditioning", out.time_conditioning);
    r.nested("mspe", out.mspe);
    r.finish();
}

Json config_to_json(const OptimizerConfig& v) {
    Json j;
    j["lr"] = v.lr;
    j["weight_decay"] = v.weight_decay;
    j["beta1"] = v.beta1;
    j["beta2"] = v.beta2;
    j["eps"] = v.eps;
    j["grad_clip"] = v.grad_clip;
    j["ema_decay"] = v.ema_decay;
    j["ema_start_step"] = v.ema_start_step;
    j["logit_lr"] = v.logit_lr;
    return j;
}

void config_from_json(const Json& j, OptimizerConfig& out, const std::string& path) {
    JsonReader r(j, path);
    r.scalar("lr", out.lr);
    r.scalar("weight_decay", out.weight_decay);
    r.scalar("beta1", out.beta1);
    r.scalar("beta2", out.beta2);
    r.scalar("eps", out.eps);
    r.scalar("grad_clip", out.grad_clip);
    r.scalar("ema_decay", out.ema_decay);
    r.scalar("ema_start_step", out.ema_start_step);
    r.scalar("logit_lr", out.logit_lr);
    r.finish();
}

Json config_to_json(const TrainConfig& v) {
    Json j;
    j["steps"] = v.steps;
    j["batch_size"] = v.batch_size;
    j["condition_dropout"] = v.condition_dropout;
    j["log_every"] = v.log_every;
    return j;
}

void config_from_json(const Json& j, TrainConfig& out, const std::string& path) {
    JsonReader r(j, path);
    r.scalar("steps", out.steps);
    r.scalar("batch_size", out.batch_size);
    r.scalar("condition_dropout", out.condition_dropout);
    r.scalar("log_every", out.log_every);
    r.finish();
}

Json config_to_json(const SamplerConfig& v) {
    Json j;
    j["num_steps"] = v.num_steps;
    j["seed"] = v.seed;
    return j;
}

void config_from_json(const Json& j, SamplerConfig& out, const std::string& path) {
    JsonReader r(j, path);
    r.scalar("num_steps", out.num_steps);
    r.scalar("seed", out.seed);
    r.finish();
}

Json config_to_json(const NormalizationStats& v) {
    Json j;
    j["mean"] = v.mean;
    j["stddev"] = v.stddev;
    return j;
}

void config_from_json(const Json& j, NormalizationStats& out, const std::string& path) {
    JsonReader r(j, path);
    std::vector<double> mean(out.mean.begin(), out.mean.end());
    std::vector<double> sd(out.stddev.begin(), out.stddev.end());
    if (const Json* v = r.take("mean")) array_from_json(*v, mean, r.child_path("mean"));
    if (const Json* v = r.take("stddev")) array_from_json(*v, sd, r.child_path("stddev"));
    if (mean.size() != 3 || sd.size() != 3) throw ConfigError("config: '" + path + "' needs 3 values per field");
    std::copy(mean.begin(), mean.end(), out.mean.begin());
    std::copy(sd.begin(), sd.end(), out.stddev.begin());
    r.finish();
}

}  // namespace lightmover
