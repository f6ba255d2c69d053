#include "lightmover/dataset.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <mutex>
#include <numeric>
#include <sstream>
#include <thread>

#include "json.hpp"
#include "lightmover/errors.hpp"
#include "lightmover/image_io.hpp"
#include "lightmover/random.hpp"

namespace lightmover {

using nlohmann::json;

namespace {

constexpr std::array<std::string_view, kTaskTypeCount> kTaskNames{
    "light_move", "object_move", "color", "intensity", "joint", "removal", "insertion"};

BoundingBox box_from_json(const json& j) {
    if (!j.is_array() || j.size() != 4) throw ConfigError("manifest: box must be [x0, y0, x1, y1]");
    return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>(), j[3].get<double>()};
}

json box_to_json(const BoundingBox& b) { return json::array({b.x0, b.y0, b.x1, b.y1}); }

Tint random_tint(Rng& rng, const Range& r) {
    // Keep drawing until the tint is visibly non-white.
    Tint t;
    for (int i = 0; i < 32; ++i) {
        t.rgb = {uniform(rng, r.lo, r.hi), uniform(rng, r.lo, r.hi), uniform(rng, r.lo, r.hi)};
        if (*std::min_element(t.rgb.begin(), t.rgb.end()) < 0.9) break;
    }
    return t;
}

double random_stops(Rng& rng, const Range& magnitude) {
    const double m = uniform(rng, magnitude.lo, magnitude.hi);
    return uniform(rng, 0.0, 1.0) < 0.5 ? -m : m;
}

Vec3 random_light_position(Rng& rng, const SceneConfig& sc) {
    return {uniform(rng, sc.light_x.lo, sc.light_x.hi), uniform(rng, sc.light_y.lo, sc.light_y.hi),
            uniform(rng, sc.light_z.lo, sc.light_z.hi)};
}

DirectLightImage dark_like(const DirectLightImage& light) {
    return {Image(light.image.width(), light.image.height())};
}

SampleRender render_attempt(const DatasetConfig& config, std::uint64_t sample_seed, TaskType task) {
    Rng rng(sample_seed);
    SceneConfig sc = config.scene;
    sc.camera.width = config.width;
    sc.camera.height = config.height;
    Scene scene = sample_scene(rng(), sc);

    SampleRender out;
    out.record.task = task;
    out.record.seed = sample_seed;
    out.record.alpha = uniform(rng, config.alpha.lo, config.alpha.hi);
    const int li = uniform_int(rng, 0, static_cast<int>(scene.lights.size()) - 1);
    const Vec3 light_pos = scene.lights[static_cast<std::size_t>(li)].position;

    switch (task) {
        case TaskType::light_move:
        case TaskType::joint: {
            Trajectory traj{light_pos, random_light_position(rng, sc)};
            const double t0 = uniform(rng, 0.0, 0.3);
            const double t1 = uniform(rng, 0.7, 1.0);
            const bool reverse = uniform(rng, 0.0, 1.0) < 0.5;
            const double ta = reverse ? t1 : t0;
            const double tb = reverse ? t0 : t1;
            if ((traj.at(ta) - traj.at(tb)).norm() < config.min_light_travel) {
                throw RetriableSampleError("light travel too short");
            }
            MovementPair pair = generate_movement_pair(scene, li, traj, ta, tb);
            out.frame_a = std::move(pair.frame_a);
            out.frame_b = std::move(pair.frame_b);
            out.record.src_box = pair.src_box;
            out.record.tgt_box = pair.tgt_box;
            if (task == TaskType::joint) {
                out.record.tint = random_tint(rng, config.tint_component);
                out.record.stops = random_stops(rng, config.stops_magnitude);
            }
            break;
        }
        case TaskType::object_move: {
            const auto si = static_cast<std::size_t>(uniform_int(rng, 0, static_cast<int>(scene.spheres.size()) - 1));
            const double angle = uniform(rng, 0.0, 2.0 * 3.14159265358979323846);
            const double dist = uniform(rng, config.object_shift.lo, config.object_shift.hi);
            Scene moved = scene;
            moved.spheres[si].center += Vec3(dist * std::cos(angle), 0.0, dist * std::sin(angle));
            const auto& s_old = scene.spheres[si];
            const auto& s_new = moved.spheres[si];
            for (std::size_t k = 0; k < scene.spheres.size(); ++k) {
                if (k == si) continue;
                if ((scene.spheres[k].center - s_new.center).norm() < scene.spheres[k].radius + s_new.radius) {
                    throw RetriableSampleError("moved object intersects another object");
                }
            }
            if ((s_new.center - light_pos).norm() < s_new.radius + scene.proxy_radius) {
                throw RetriableSampleError("moved object swallows the light");
            }
            const auto src = project_sphere_box(scene.camera, s_old.center, s_old.radius);
            const auto tgt = project_sphere_box(scene.camera, s_new.center, s_new.radius);
            if (!src || !tgt) throw RetriableSampleError("object behind the camera");
            out.record.src_box = clamp_to_unit(*src);
            out.record.tgt_box = clamp_to_unit(*tgt);
            if (!out.record.src_box.valid() || !out.record.tgt_box.valid()) {
                throw RetriableSampleError("object outside the frame");
            }
            out.frame_a = render_disentangled(scene, li);
            out.frame_b = render_disentangled(moved, li);
            break;
        }
        case TaskType::color:
        case TaskType::intensity: {
            out.record.src_box = out.record.tgt_box = light_proxy_box(scene, light_pos);
            if (task == TaskType::color) {
                out.record.tint = random_tint(rng, config.tint_component);
            } else {
                out.record.stops = random_stops(rng, config.stops_magnitude);
            }
            out.frame_a = render_disentangled(scene, li);
            out.frame_b = out.frame_a;
            break;
        }
        case TaskType::removal:
        case TaskType::insertion: {
            out.record.src_box = out.record.tgt_box = light_proxy_box(scene, light_pos);
            DisentangledFrame lit = render_disentangled(scene, li);
            DisentangledFrame unlit{lit.amb, dark_like(lit.light)};
            if (task == TaskType::removal) {
                out.frame_a = std::move(lit);
                out.frame_b = std::move(unlit);
            } else {
                out.frame_a = std::move(unlit);
                out.frame_b = std::move(lit);
            }
            break;
        }
    }
    return out;
}

std::string sample_file(int index, const char* part) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "s%05d_%s.pfm", index, part);
    return buf;
}

}  // namespace

std::string_view to_string(TaskType t) noexcept { return kTaskNames[static_cast<std::size_t>(t)]; }

TaskType task_from_string(std::string_view name) {
    for (std::size_t i = 0; i < kTaskNames.size(); ++i) {
        if (kTaskNames[i] == name) return static_cast<TaskType>(i);
    }
    throw ConfigError("unknown task type '" + std::string(name) + "'");
}

void TaskMix::validate() const {
    double total = 0.0;
    for (double w : weights) {
        if (!(w >= 0.0) || !std::isfinite(w)) throw ConfigError("task mix weights must be finite and >= 0");
        total += w;
    }
    if (!(total > 0.0)) throw ConfigError("task mix needs at least one positive weight");
}

std::array<int, kTaskTypeCount> TaskMix::apportion(int n) const {
    validate();
    const double total = std::accumulate(weights.begin(), weights.end(), 0.0);
    std::array<int, kTaskTypeCount> counts{};
    std::array<double, kTaskTypeCount> remainder{};
    int assigned = 0;
    for (int i = 0; i < kTaskTypeCount; ++i) {
        const double quota = n * weights[i] / total;
        counts[i] = static_cast<int>(std::floor(quota));
        remainder[i] = quota - counts[i];
        assigned += counts[i];
    }
    std::array<int, kTaskTypeCount> order{};
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return remainder[a] > remainder[b]; });
    for (int k = 0; assigned < n; ++k, ++assigned) ++counts[order[static_cast<std::size_t>(k % kTaskTypeCount)]];
    return counts;
}

void DatasetConfig::validate() const {
    if (count < 1) throw ConfigError("dataset: count must be >= 1");
    if (width <= 0 || height <= 0) throw ConfigError("dataset: image size must be positive");
    if (jobs < 1) throw ConfigError("dataset: jobs must be >= 1");
    if (max_attempts < 1) throw ConfigError("dataset: max_attempts must be >= 1");
    mix.validate();
    SceneConfig sc = scene;
    sc.camera.width = width;
    sc.camera.height = height;
    sc.validate();
    for (const Range* r : {&alpha, &stops_magnitude, &tint_component, &object_shift}) {
        if (!(r->lo <= r->hi)) throw ConfigError("dataset: empty parameter range");
    }
    if (alpha.lo < 0.0 || alpha.hi > 1.0) throw ConfigError("dataset: alpha must lie in [0, 1]");
    if (tint_component.lo < 0.0 || tint_component.hi > 1.0) throw ConfigError("dataset: tint must lie in [0, 1]");
}

std::vector<TaskType> task_schedule(const DatasetConfig& config, std::uint64_t seed) {
    const auto counts = config.mix.apportion(config.count);
    std::vector<TaskType> tasks;
    tasks.reserve(static_cast<std::size_t>(config.count));
    for (int t = 0; t < kTaskTypeCount; ++t) tasks.insert(tasks.end(), static_cast<std::size_t>(counts[t]), static_cast<TaskType>(t));
    Rng rng(derive_seed({seed, 0x7A5Cull}));
    // Fisher-Yates with an explicit draw so the order does not depend on std::shuffle.
    for (std::size_t i = tasks.size(); i > 1; --i) {
        const auto j = static_cast<std::size_t>(rng() % i);
        std::swap(tasks[i - 1], tasks[j]);
    }
    return tasks;
}

SampleRender render_sample(const DatasetConfig& config, std::uint64_t seed, int index, TaskType task) {
    for (int attempt = 0; attempt < config.max_attempts; ++attempt) {
        const std::uint64_t sample_seed =
            derive_seed({seed, static_cast<std::uint64_t>(index), static_cast<std::uint64_t>(attempt)});
        try {
            SampleRender r = render_attempt(config, sample_seed, task);
            r.record.index = index;
            return r;
        } catch (const RetriableSampleError&) {
        }
    }
    throw RetriableSampleError("sample " + std::to_string(index) + ": no valid configuration after " +
                               std::to_string(config.max_attempts) + " attempts");
}

DatasetManifest generate_dataset(const DatasetConfig& config, std::uint64_t seed,
                                 const std::filesystem::path& out_dir) {
    config.validate();
    std::error_code ec;
    std::filesystem::create_directories(out_dir, ec);
    if (ec || !std::filesystem::is_directory(out_dir)) {
        throw IoError("cannot create output directory " + out_dir.string());
    }
    {
        const auto probe = out_dir / ".write_probe";
        std::ofstream f(probe);
        if (!f) throw IoError("output directory is not writable: " + out_dir.string());
        f.close();
        std::filesystem::remove(probe, ec);
    }

    const auto tasks = task_schedule(config, seed);
    DatasetManifest manifest;
    manifest.seed = seed;
    manifest.width = config.width;
    manifest.height = config.height;
    manifest.root = out_dir;
    manifest.samples.resize(tasks.size());

    std::atomic<int> next{0};
    std::mutex error_mutex;
    std::exception_ptr first_error;
    auto worker = [&] {
        for (int i = next++; i < static_cast<int>(tasks.size()); i = next++) {
            try {
                SampleRender r = render_sample(config, seed, i, tasks[static_cast<std::size_t>(i)]);
                r.record.files = {sample_file(i, "amb_a"), sample_file(i, "light_a"), sample_file(i, "amb_b"),
                                  sample_file(i, "light_b")};
                if (config.write_images) {
                    write_pfm(out_dir / r.record.files.amb_a, r.frame_a.amb.image);
                    write_pfm(out_dir / r.record.files.light_a, r.frame_a.light.image);
                    write_pfm(out_dir / r.record.files.amb_b, r.frame_b.amb.image);
                    write_pfm(out_dir / r.record.files.light_b, r.frame_b.light.image);
                }
                manifest.samples[static_cast<std::size_t>(i)] = r.record;
            } catch (...) {
                std::lock_guard lock(error_mutex);
                if (!first_error) first_error = std::current_exception();
                next = static_cast<int>(tasks.size());
            }
        }
    };
    const int jobs = std::min(config.jobs, static_cast<int>(tasks.size()));
    std::vector<std::thread> pool;
    for (int j = 1; j < jobs; ++j) pool.emplace_back(worker);
    worker();
    for (auto& t : pool) t.join();
    if (first_error) std::rethrow_exception(first_error);

    save_manifest(manifest, out_dir / "manifest.json");
    return manifest;
}

std::string manifest_to_json(const DatasetManifest& m) {
    json samples = json::array();
    for (const auto& s : m.samples) {
        samples.push_back({
            {"index", s.index},
            {"task", std::string(to_string(s.task))},
            {"seed", s.seed},
            {"files", {{"amb_a", s.files.amb_a}, {"light_a", s.files.light_a}, {"amb_b", s.files.amb_b},
                       {"light_b", s.files.light_b}}},
            {"src_box", box_to_json(s.src_box)},
            {"tgt_box", box_to_json(s.tgt_box)},
            {"alpha", s.alpha},
            {"stops", s.stops},
            {"tint", json::array({s.tint.rgb[0], s.tint.rgb[1], s.tint.rgb[2]})},
        });
    }
    json j = {{"version", m.version}, {"seed", m.seed}, {"width", m.width}, {"height", m.height},
              {"samples", std::move(samples)}};
    return j.dump(1) + "\n";
}

DatasetManifest manifest_from_json(const std::string& text, const std::filesystem::path& root) {
    DatasetManifest m;
    m.root = root;
    try {
        const json j = json::parse(text);
        m.version = j.at("version").get<int>();
        if (m.version != kManifestVersion) {
            throw ConfigError("manifest version " + std::to_string(m.version) + " is not supported");
        }
        m.seed = j.at("seed").get<std::uint64_t>();
        m.width = j.at("width").get<int>();
        m.height = j.at("height").get<int>();
        for (const auto& s : j.at("samples")) {
            SampleRecord r;
            r.index = s.at("index").get<int>();
            r.task = task_from_string(s.at("task").get<std::string>());
            r.seed = s.at("seed").get<std::uint64_t>();
            const auto& f = s.at("files");
            r.files = {f.at("amb_a").get<std::string>(), f.at("light_a").get<std::string>(),
                       f.at("amb_b").get<std::string>(), f.at("light_b").get<std::string>()};
            r.src_box = box_from_json(s.at("src_box"));
            r.tgt_box = box_from_json(s.at("tgt_box"));
            r.alpha = s.at("alpha").get<double>();
            r.stops = s.at("stops").get<double>();
            const auto& t = s.at("tint");
            r.tint.rgb = {t.at(0).get<double>(), t.at(1).get<double>(), t.at(2).get<double>()};
            m.samples.push_back(r);
        }
    } catch (const json::exception& e) {
        throw ConfigError(std::string("malformed manifest: ") + e.what());
    }
    return m;
}

void save_manifest(const DatasetManifest& manifest, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write manifest " + path.string());
    out << manifest_to_json(manifest);
    if (!out) throw IoError("cannot write manifest " + path.string());
}

DatasetManifest load_manifest(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot read manifest " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return manifest_from_json(ss.str(), path.parent_path());
}

RelitPair relight_pair(const SampleRecord& record, const DisentangledFrame& a, const DisentangledFrame& b) {
    const AmbientScale alpha{record.alpha};
    alpha.validate();
    record.tint.validate();
    RelitPair out;
    out.linear_a = relight(a.amb, a.light, alpha, IlluminationGain{1.0}, Tint::white());
    out.linear_b = relight(b.amb, b.light, alpha, illumination_gain({record.stops}), record.tint);
    out.display_a = tone_map_auto(out.linear_a, derive_seed({record.seed, 0xAull}));
    out.display_b = tone_map_auto(out.linear_b, derive_seed({record.seed, 0xBull}));
    return out;
}

RelitPair load_relit_pair(const DatasetManifest& manifest, const SampleRecord& record) {
    std::vector<std::string> missing;
    for (const auto* f : {&record.files.amb_a, &record.files.light_a, &record.files.amb_b, &record.files.light_b}) {
        if (!std::filesystem::exists(manifest.resolve(*f))) missing.push_back(manifest.resolve(*f).string());
    }
    if (!missing.empty()) {
        std::string msg = "missing sample files:";
        for (const auto& m : missing) msg += " " + m;
        throw IoError(msg);
    }
    DisentangledFrame a{{read_pfm(manifest.resolve(record.files.amb_a))},
                        {read_pfm(manifest.resolve(record.files.light_a))}};
    DisentangledFrame b{{read_pfm(manifest.resolve(record.files.amb_b))},
                        {read_pfm(manifest.resolve(record.files.light_b))}};
    return relight_pair(record, a, b);
}

}  // namespace lightmover
