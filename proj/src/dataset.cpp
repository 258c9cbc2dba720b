#include "lrsgs/dataset.hpp"

#include <json.hpp>

#include <algorithm>
#include <cstdio>
#include <unordered_set>

namespace lrsgs {

namespace {

nlohmann::json pose_json(const RigidTransform& t) {
    const Vec4 q = quaternion_from_rotation(t.rotation);
    return {q[0], q[1], q[2], q[3], t.translation[0], t.translation[1], t.translation[2]};
}

RigidTransform pose_from_json(const nlohmann::json& j) {
    if (!j.is_array() || j.size() != 7) throw Error(ErrorCode::Format, "pose must be [qw, qx, qy, qz, tx, ty, tz]");
    return RigidTransform::from_quaternion(Vec4(j[0], j[1], j[2], j[3]), Vec3(j[4], j[5], j[6]));
}

struct VoxelKey {
    int node;
    long long x, y, z;
    bool operator==(const VoxelKey&) const = default;
};

struct VoxelHash {
    std::size_t operator()(const VoxelKey& k) const {
        std::size_t h = std::hash<long long>()(k.x);
        h = h * 1000003u ^ std::hash<long long>()(k.y);
        h = h * 1000003u ^ std::hash<long long>()(k.z);
        return h * 31u ^ static_cast<std::size_t>(k.node + 1);
    }
};

/// Per-node initialization inputs in node-local coordinates.
struct NodeSeeds {
    std::vector<FeatureSeed> seeds;
    std::vector<SfmPoint> points;
    std::vector<double> point_reflectance;
};

} // namespace

void Dataset::validate() const {
    const auto f = static_cast<std::size_t>(frame_count);
    if (frame_count < 1 || cameras.empty()) throw Error(ErrorCode::InvalidArgument, "dataset needs frames and cameras");
    if (sensor_poses.size() != f || sweeps.size() != f || images.size() != f) {
        throw Error(ErrorCode::InvalidArgument, "dataset needs one sensor pose, sweep and image set per frame");
    }
    for (const auto& frame : images) {
        if (frame.size() != cameras.size()) throw Error(ErrorCode::InvalidArgument, "missing camera images");
        for (std::size_t c = 0; c < frame.size(); ++c) {
            if (frame[c].width() != cameras[c].model.width || frame[c].height() != cameras[c].model.height ||
                frame[c].channels() != 3) {
                throw Error(ErrorCode::DimensionMismatch, "image size does not match camera " + cameras[c].name);
            }
        }
    }
    for (const auto& o : objects) {
        if (o.poses.size() != f) throw Error(ErrorCode::InvalidArgument, "object needs one pose per frame");
    }
}

CameraModel Dataset::lidar_camera(int frame, int camera) const {
    CameraModel cam = cameras.at(static_cast<std::size_t>(camera)).model;
    cam.extrinsics = cam.extrinsics * sensor_poses.at(static_cast<std::size_t>(frame));
    return cam;
}

Dataset synthesize(const SynthScene& scene, const SynthesisOptions& options) {
    scene.validate();
    Dataset d;
    d.frame_count = scene.frame_count;
    for (std::size_t c = 0; c < scene.cameras.size(); ++c) {
        d.cameras.push_back({"cam_" + std::to_string(c), scene.cameras[c], scene.held_out[c]});
    }
    d.sensor_poses = scene.lidar.sensor_poses;
    for (const auto& o : scene.objects) d.objects.push_back({o.half_extents, o.trajectory});
    for (int f = 0; f < scene.frame_count; ++f) {
        d.sweeps.push_back(simulate_sweep(scene, f, options.noise));
        std::vector<Image> imgs;
        for (const auto& cam : scene.cameras) imgs.push_back(render_gt(scene, cam, f, options.samples));
        d.images.push_back(std::move(imgs));
    }
    return d;
}

fs::path frame_dir(int frame) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%03d", frame);
    return fs::path("frames") / buf;
}

void write_dataset(const fs::path& dir, const Dataset& dataset) {
    dataset.validate();
    nlohmann::json m;
    m["format"] = "lrsgs-dataset";
    m["version"] = 1;
    m["frame_count"] = dataset.frame_count;
    nlohmann::json cams = nlohmann::json::array();
    for (const auto& c : dataset.cameras) {
        const fs::path rel = fs::path("cameras") / (c.name + ".txt");
        write_camera(dir / rel, c.model);
        cams.push_back({{"name", c.name}, {"file", rel.string()}, {"split", c.held_out ? "test" : "train"}});
    }
    m["cameras"] = cams;
    nlohmann::json frames = nlohmann::json::array();
    for (int f = 0; f < dataset.frame_count; ++f) {
        const fs::path fd = frame_dir(f);
        write_sweep_ply(dir / fd / "sweep.ply", dataset.sweeps[static_cast<std::size_t>(f)]);
        for (std::size_t c = 0; c < dataset.cameras.size(); ++c) {
            write_png(dir / fd / (dataset.cameras[c].name + ".png"), dataset.images[static_cast<std::size_t>(f)][c]);
        }
        frames.push_back({{"index", f},
                          {"dir", fd.string()},
                          {"sweep", (fd / "sweep.ply").string()},
                          {"sensor_pose", pose_json(dataset.sensor_poses[static_cast<std::size_t>(f)])}});
    }
    m["frames"] = frames;
    nlohmann::json objs = nlohmann::json::array();
    for (const auto& o : dataset.objects) {
        nlohmann::json poses = nlohmann::json::array();
        for (const auto& p : o.poses) poses.push_back(pose_json(p));
        objs.push_back({{"half_extents", {o.half_extents[0], o.half_extents[1], o.half_extents[2]}}, {"poses", poses}});
    }
    m["objects"] = objs;
    write_text(dir / "manifest.json", m.dump(2) + "\n");
}

Dataset read_dataset(const fs::path& dir) {
    const fs::path manifest = dir / "manifest.json";
    Dataset d;
    try {
        const auto m = nlohmann::json::parse(read_text(manifest));
        if (m.value("format", "") != "lrsgs-dataset") throw Error(ErrorCode::Format, manifest.string() + " is not a dataset manifest");
        d.frame_count = m.at("frame_count");
        for (const auto& c : m.at("cameras")) {
            const std::string split = c.at("split");
            if (split != "train" && split != "test") throw Error(ErrorCode::Format, "camera split must be train or test");
            d.cameras.push_back({c.at("name"), read_camera(dir / c.at("file").get<std::string>()), split == "test"});
        }
        const auto& frames = m.at("frames");
        if (static_cast<int>(frames.size()) != d.frame_count) throw Error(ErrorCode::Format, "frame list does not match frame_count");
        for (const auto& f : frames) {
            d.sensor_poses.push_back(pose_from_json(f.at("sensor_pose")));
            d.sweeps.push_back(read_sweep_ply(dir / f.at("sweep").get<std::string>()));
            const fs::path fd = dir / f.at("dir").get<std::string>();
            std::vector<Image> imgs;
            for (const auto& c : d.cameras) imgs.push_back(read_png(fd / (c.name + ".png")));
            d.images.push_back(std::move(imgs));
        }
        for (const auto& o : m.at("objects")) {
            TrackedObject t;
            const auto& h = o.at("half_extents");
            t.half_extents = Vec3(h[0], h[1], h[2]);
            for (const auto& p : o.at("poses")) t.poses.push_back(pose_from_json(p));
            d.objects.push_back(std::move(t));
        }
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::Format, "bad manifest " + manifest.string() + ": " + e.what());
    }
    try {
        d.validate();
    } catch (const Error& e) {
        throw Error(e.code() == ErrorCode::InvalidArgument ? ErrorCode::Format : e.code(), e.what());
    }
    return d;
}

void PrepareConfig::validate() const {
    lidar.validate();
    features.validate();
    if (!(voxel > 0.0) || seed_stride < 1 || sky_rows < 2 || sky_cols < 2 || box_margin < 0.0 ||
        occlusion_radius < 0 || occlusion_gap < 0.0) {
        throw Error(ErrorCode::Config, "voxel must be positive, seed_stride >= 1, sky grid >= 2x2, margins and occlusion settings >= 0");
    }
    if (!(init.initial_opacity > 0.0 && init.initial_opacity < 1.0) || !(init.salient_aspect >= 1.0)) {
        throw Error(ErrorCode::Config, "initial_opacity must lie in (0, 1) and salient_aspect >= 1");
    }
}

void init_colors(SceneGraph& scene, const Dataset& dataset) {
    auto sample = [&](const Vec3& local, int node) -> std::optional<Vec3> {
        std::array<std::vector<double>, 3> ch;
        for (int f = 0; f < dataset.frame_count; ++f) {
            Vec3 world = local;
            if (node >= 0) world = scene.objects[static_cast<std::size_t>(node)].poses[static_cast<std::size_t>(f)].transform() * local;
            for (std::size_t c = 0; c < dataset.cameras.size(); ++c) {
                const auto& cam = dataset.cameras[c];
                if (cam.held_out) continue;
                const Vec3 pc = cam.model.to_camera(world);
                const auto px = cam.model.project(pc);
                if (pc.z() < 0.05 || !px) continue;
                const long x = std::lround(px->x()), y = std::lround(px->y());
                if (x < 0 || y < 0 || x >= cam.model.width || y >= cam.model.height) continue;
                const Image& img = dataset.images[static_cast<std::size_t>(f)][c];
                for (int k = 0; k < 3; ++k) ch[k].push_back(img(static_cast<int>(x), static_cast<int>(y), k));
            }
        }
        if (ch[0].empty()) return std::nullopt;
        Vec3 out;
        for (int k = 0; k < 3; ++k) {
            auto mid = ch[k].begin() + static_cast<long>(ch[k].size() / 2);
            std::nth_element(ch[k].begin(), mid, ch[k].end());
            out[k] = *mid;
        }
        return out;
    };
    for (auto& g : scene.background) {
        if (const auto c = sample(g.mean, -1)) g.sh[0] = sh_dc_from_rgb(*c);
    }
    for (std::size_t o = 0; o < scene.objects.size(); ++o) {
        for (auto& g : scene.objects[o].gaussians) {
            if (const auto c = sample(g.mean, static_cast<int>(o))) g.sh[0] = sh_dc_from_rgb(*c);
        }
    }
}

namespace {

SkyModel init_sky(const Dataset& dataset, int rows, int cols) {
    SkyModel sky(rows, cols, Vec3::Zero());
    std::vector<double> weight(sky.texels.size(), 0.0);
    Vec3 mean = Vec3::Zero();
    double count = 0.0;
    for (int f = 0; f < dataset.frame_count; ++f) {
        for (std::size_t c = 0; c < dataset.cameras.size(); ++c) {
            const auto& cam = dataset.cameras[c];
            if (cam.held_out) continue;
            const Image& img = dataset.images[static_cast<std::size_t>(f)][c];
            for (int y = 0; y < cam.model.height; ++y) {
                for (int x = 0; x < cam.model.width; ++x) {
                    const Vec3 rgb(img(x, y, 0), img(x, y, 1), img(x, y, 2));
                    const SkySample s = sky.lookup(cam.model.ray_direction(x, y));
                    for (int k = 0; k < 4; ++k) {
                        sky.texels[s.texel[k]] += s.weight[k] * rgb;
                        weight[s.texel[k]] += s.weight[k];
                    }
                    mean += rgb;
                    count += 1.0;
                }
            }
        }
    }
    mean /= std::max(count, 1.0);
    for (std::size_t t = 0; t < sky.texels.size(); ++t) {
        sky.texels[t] = weight[t] > 1e-3 ? Vec3(sky.texels[t] / weight[t]) : mean;
    }
    return sky;
}

} // namespace

PreparedData prepare(const Dataset& dataset, const PrepareConfig& config) {
    dataset.validate();
    config.validate();
    PreparedData out;
    for (const auto& c : dataset.cameras) out.cameras.push_back(c.model);

    const std::size_t node_count = dataset.objects.size() + 1;
    std::vector<NodeSeeds> nodes(node_count);
    std::unordered_set<VoxelKey, VoxelHash> occupied;
    auto claim = [&](int node, const Vec3& p) {
        const VoxelKey key{node, static_cast<long long>(std::floor(p.x() / config.voxel)),
                           static_cast<long long>(std::floor(p.y() / config.voxel)),
                           static_cast<long long>(std::floor(p.z() / config.voxel))};
        return occupied.insert(key).second;
    };
    // node index (-1 background) and node-local transform for a world point at frame f
    auto locate = [&](const Vec3& world, int f) -> std::pair<int, RigidTransform> {
        for (std::size_t o = 0; o < dataset.objects.size(); ++o) {
            const auto& obj = dataset.objects[o];
            const RigidTransform inv = obj.poses[static_cast<std::size_t>(f)].inverse();
            const Vec3 local = inv * world;
            if ((local.cwiseAbs() - obj.half_extents).maxCoeff() <= config.box_margin) {
                return {static_cast<int>(o), inv};
            }
        }
        return {-1, RigidTransform::identity()};
    };

    std::vector<std::vector<FeatureSeed>> plain_candidates(static_cast<std::size_t>(dataset.frame_count));
    for (int f = 0; f < dataset.frame_count; ++f) {
        const CalibrationResult calib = calibrate_sweep(dataset.sweeps[static_cast<std::size_t>(f)], config.lidar);
        out.calibrated_points += calib.diagnostics.calibrated_points;
        out.degenerate_points += calib.diagnostics.degenerate_points;
        for (std::size_t c = 0; c < dataset.cameras.size(); ++c) {
            View v;
            v.frame = f;
            v.camera = static_cast<int>(c);
            v.rgb = dataset.images[static_cast<std::size_t>(f)][c];
            ProjectedSweep projected = project_to_camera(calib.points, dataset.lidar_camera(f, static_cast<int>(c)));
            if (config.occlusion_radius > 0) {
                out.occluded_pixels += remove_occluded(projected, config.occlusion_radius, config.occlusion_gap);
            }
            v.lidar = make_lidar_targets(projected, config.lidar.gradient_search_radius);
            (dataset.cameras[c].held_out ? out.test : out.train).push_back(std::move(v));
        }
        if (f % config.seed_stride != 0) continue;

        const RigidTransform& sensor = dataset.sensor_poses[static_cast<std::size_t>(f)];
        const auto labels = classify_sweep(calib.points, config.features);
        for (const auto& s : transform_seeds(feature_seeds(calib.points, labels), sensor)) {
            const auto [node, to_local] = locate(s.position, f);
            FeatureSeed local = transform_seeds(std::span(&s, 1), to_local).front();
            if (!claim(node, local.position)) continue;
            local.spacing = 0.5 * config.voxel;
            nodes[static_cast<std::size_t>(node + 1)].seeds.push_back(local);
            ++out.seed_counts[static_cast<std::size_t>(local.kind)];
        }
        for (std::size_t i = 0; i < calib.points.size(); ++i) {
            if (labels[i].kind != FeatureKind::None) continue;
            FeatureSeed p;
            p.position = sensor * calib.points[i].position;
            p.reflectance = calib.points[i].reflectance;
            plain_candidates[static_cast<std::size_t>(f)].push_back(p);
        }
    }
    // plain points fill voxels left empty by every frame's feature seeds
    for (int f = 0; f < dataset.frame_count; ++f) {
        for (const auto& p : plain_candidates[static_cast<std::size_t>(f)]) {
            const auto [node, to_local] = locate(p.position, f);
            const Vec3 local = to_local * p.position;
            if (!claim(node, local)) continue;
            auto& n = nodes[static_cast<std::size_t>(node + 1)];
            n.points.push_back({local, std::nullopt});
            n.point_reflectance.push_back(p.reflectance);
            ++out.seed_counts[0];
        }
    }

    SceneGraph& scene = out.scene;
    scene.frame_count = dataset.frame_count;
    scene.sh_degree = kMaxShDegree;
    auto build = [&](const NodeSeeds& n) {
        if (n.seeds.empty() && n.points.empty()) return std::vector<GaussianPrimitive>{};
        auto gs = init_from_features(n.seeds, n.points, config.init);
        const std::size_t first_plain = n.seeds.size();
        for (std::size_t i = 0; i < n.points.size(); ++i) {
            gs[first_plain + i].reflectance_logit =
                config.init.seed_reflectance ? logit(std::clamp(n.point_reflectance[i], 0.01, 0.99)) : 0.0;
        }
        return gs;
    };
    scene.background = build(nodes[0]);
    for (std::size_t o = 0; o < dataset.objects.size(); ++o) {
        RigidObject obj;
        obj.gaussians = build(nodes[o + 1]);
        obj.bbox = 2.0 * dataset.objects[o].half_extents;
        for (const auto& p : dataset.objects[o].poses) obj.poses.push_back(ObjectPose::from_transform(p));
        scene.objects.push_back(std::move(obj));
    }
    scene.sky = init_sky(dataset, config.sky_rows, config.sky_cols);
    scene.assign_ids();
    init_colors(scene, dataset);
    scene.validate();
    if (scene.gaussian_count() == 0) throw Error(ErrorCode::EmptyInput, "no LiDAR points to initialize the scene from");
    return out;
}

} // namespace lrsgs
