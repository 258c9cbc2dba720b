#include "config.hpp"

#include <set>
#include <thread>
#include <type_traits>

namespace lrsgs::cli {

namespace {

using nlohmann::json;

template <class V>
void visit(V& v, LidarModelConfig& c) {
    v("neighborhood_k", c.neighborhood_k);
    v("incidence_floor", c.incidence_floor);
    v("normalization_percentile", c.normalization_percentile);
    v("gradient_search_radius", c.gradient_search_radius);
}

template <class V>
void visit(V& v, FeatureConfig& c) {
    v.section("thresholds", [&](auto& s) {
        s("edge", c.thresholds.edge);
        s("planar", c.thresholds.planar);
        s("reflectance", c.thresholds.reflectance);
    });
    v.section("budget", [&](auto& s) {
        s("edge", c.budget.edge);
        s("planar", c.budget.planar);
        s("reflectance", c.budget.reflectance);
    });
    v("smoothness_k", c.smoothness_k);
    v("left", c.left);
    v("right", c.right);
}

template <class V>
void visit(V& v, LossWeights& c) {
    v("color", c.color);
    v("depth", c.depth);
    v("reflectance", c.reflectance);
    v("reflectance_gradient", c.reflectance_gradient);
    v("direction", c.direction);
    v("magnitude", c.magnitude);
}

template <class V>
void visit(V& v, DensifyConfig& c) {
    v("grad_threshold", c.grad_threshold);
    v("split_scale_threshold", c.split_scale_threshold);
    v("split_factor", c.split_factor);
    v("prune_opacity", c.prune_opacity);
    v("prune_screen_fraction", c.prune_screen_fraction);
    v("clone_offset", c.clone_offset);
    v("tau_max", c.tau_max);
    v("tau_min", c.tau_min);
    v("interval", c.interval);
}

template <class V>
void visit(V& v, TrainConfig& c) {
    v("iterations", c.iterations);
    v("seed", c.seed);
    v("threads", c.threads);
    v("densify_start", c.densify_start);
    v("densify_end", c.densify_end);
    v("salient_transform", c.salient_transform);
    v("eval_interval", c.eval_interval);
    v("checkpoint_interval", c.checkpoint_interval);
    v("log_interval", c.log_interval);
    v.section("learning_rates", [&](auto& s) {
        s("mean", c.lr.mean);
        s("mean_final", c.lr.mean_final);
        s("rotation", c.lr.rotation);
        s("scales", c.lr.scales);
        s("opacity", c.lr.opacity);
        s("sh", c.lr.sh);
        s("reflectance", c.lr.reflectance);
        s("sky", c.lr.sky);
        s("pose", c.lr.pose);
    });
    v.section("render", [&](auto& s) {
        s("alpha_min", c.render.alpha_min);
        s("alpha_max", c.render.alpha_max);
        s("transmittance_cutoff", c.render.transmittance_cutoff);
        s("near_plane", c.render.near_plane);
        s("cov2d_floor", c.render.cov2d_floor);
        s("guard_band", c.render.guard_band);
        s("tile_size", c.render.tile_size);
    });
}

template <class V>
void visit(V& v, PrepareConfig& c) {
    v("voxel", c.voxel);
    v("seed_stride", c.seed_stride);
    v("sky_rows", c.sky_rows);
    v("sky_cols", c.sky_cols);
    v("occlusion_radius", c.occlusion_radius);
    v("occlusion_gap", c.occlusion_gap);
    v("box_margin", c.box_margin);
    v.section("init", [&](auto& s) {
        s("initial_opacity", c.init.initial_opacity);
        s("salient_aspect", c.init.salient_aspect);
        s("salient", c.init.salient);
        s("seed_reflectance", c.init.seed_reflectance);
        s("sfm_neighbors", c.init.sfm_neighbors);
    });
}

template <class V>
void visit(V& v, Config& c) {
    v.section("lidar_model", [&](auto& s) { visit(s, c.lidar_model); });
    v.section("feature_extraction", [&](auto& s) { visit(s, c.feature_extraction); });
    v.section("loss", [&](auto& s) { visit(s, c.loss); });
    v.section("densify", [&](auto& s) { visit(s, c.densify); });
    v.section("train", [&](auto& s) { visit(s, c.train); });
    v.section("prepare", [&](auto& s) { visit(s, c.prepare); });
}

class Reader {
public:
    Reader(const json& j, std::string path) : j_(j), path_(std::move(path)) {
        if (!j_.is_object()) fail(path_.empty() ? "config must be an object" : path_ + " must be an object");
    }

    template <class T>
    void operator()(const char* key, T& value) {
        const auto it = j_.find(key);
        if (it == j_.end()) return;
        seen_.insert(key);
        const std::string where = qualified(key);
        if constexpr (std::is_same_v<T, bool>) {
            if (!it->is_boolean()) fail(where + " must be true or false");
            value = it->get<bool>();
        } else if constexpr (std::is_same_v<T, double>) {
            if (!it->is_number()) fail(where + " must be a number");
            value = it->get<double>();
        } else if constexpr (std::is_same_v<T, std::uint64_t>) {
            if (!it->is_number_unsigned()) fail(where + " must be a non-negative integer");
            value = it->get<std::uint64_t>();
        } else {
            static_assert(std::is_same_v<T, int>);
            if (!it->is_number_integer()) fail(where + " must be an integer");
            const auto wide = it->get<std::int64_t>();
            if (wide < std::numeric_limits<int>::min() || wide > std::numeric_limits<int>::max()) {
                fail(where + " is out of range");
            }
            value = static_cast<int>(wide);
        }
    }

    template <class F>
    void section(const char* key, F&& body) {
        const auto it = j_.find(key);
        if (it == j_.end()) return;
        seen_.insert(key);
        Reader sub(*it, qualified(key));
        body(sub);
        sub.finish();
    }

    void finish() const {
        for (const auto& [key, _] : j_.items()) {
            if (!seen_.count(key)) fail("unknown config key " + qualified(key));
        }
    }

private:
    std::string qualified(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }
    [[noreturn]] static void fail(const std::string& msg) { throw Error(ErrorCode::Config, msg); }

    const json& j_;
    std::string path_;
    std::set<std::string> seen_;
};

class Writer {
public:
    explicit Writer(json& j) : j_(j) { j_ = json::object(); }

    template <class T>
    void operator()(const char* key, T& value) {
        j_[key] = value;
    }

    template <class F>
    void section(const char* key, F&& body) {
        Writer sub(j_[key]);
        body(sub);
    }

private:
    json& j_;
};

} // namespace

void Config::validate() const {
    lidar_model.validate();
    feature_extraction.validate();
    loss.validate();
    densify.validate();
    train.validate();
    prepare_config().validate();
}

PrepareConfig Config::prepare_config() const {
    PrepareConfig p = prepare;
    p.lidar = lidar_model;
    p.features = feature_extraction;
    return p;
}

Config default_config() {
    Config c;
    c.train.threads = static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
    return c;
}

Config parse_config(const nlohmann::json& j, const Config& base) {
    Config c = base;
    Reader r(j, "");
    visit(r, c);
    r.finish();
    try {
        c.validate();
    } catch (const Error& e) {
        if (e.code() == ErrorCode::Config) throw;
        throw Error(ErrorCode::Config, e.what());
    }
    return c;
}

Config load_config(const fs::path& path, const Config& base) {
    const std::string text = read_text(path);
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        throw Error(ErrorCode::Config, path.string() + ": " + e.what());
    }
    return parse_config(j, base);
}

nlohmann::json to_json(const Config& config) {
    Config copy = config;
    nlohmann::json j;
    Writer w(j);
    visit(w, copy);
    return j;
}

} // namespace lrsgs::cli
