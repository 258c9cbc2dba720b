#pragma once

#include "lrsgs/feature_extraction.hpp"
#include "lrsgs/gaussian_scene.hpp"
#include "lrsgs/io.hpp"
#include "lrsgs/losses.hpp"
#include "lrsgs/synth_data.hpp"

#include <string>
#include <vector>

namespace lrsgs {

struct DatasetCamera {
    std::string name;
    /// World -> camera, fixed across frames.
    CameraModel model;
    bool held_out = false;
};

/// A tracked rigid box with known per-frame pose.
struct TrackedObject {
    Vec3 half_extents = Vec3::Constant(0.5);
    /// Object -> world, one per frame.
    std::vector<RigidTransform> poses;
};

/// Multi-camera frames with one LiDAR sweep each, as stored on disk.
struct Dataset {
    int frame_count = 0;
    std::vector<DatasetCamera> cameras;
    /// Sensor -> world, one per frame.
    std::vector<RigidTransform> sensor_poses;
    std::vector<TrackedObject> objects;
    /// Sensor-frame sweep per frame.
    std::vector<std::vector<LidarPoint>> sweeps;
    /// [frame][camera] RGB.
    std::vector<std::vector<Image>> images;

    /// Throws InvalidArgument on inconsistent sizes.
    void validate() const;
    /// LiDAR -> camera transform for projecting frame `frame`'s sweep.
    CameraModel lidar_camera(int frame, int camera) const;
};

struct SynthesisOptions {
    /// Supersamples per axis for the ground-truth images.
    int samples = 3;
    SweepNoise noise;
};

Dataset synthesize(const SynthScene& scene, const SynthesisOptions& options = {});

/// `frames/NNN/cam_K.png`, `frames/NNN/sweep.ply`, `cameras/<name>.txt`, `manifest.json`.
void write_dataset(const fs::path& dir, const Dataset& dataset);
/// Throws Io or Format.
Dataset read_dataset(const fs::path& dir);

/// `frames/NNN` relative to the dataset root.
fs::path frame_dir(int frame);

struct PrepareConfig {
    LidarModelConfig lidar;
    FeatureConfig features;
    InitConfig init;
    /// Seeds and plain LiDAR points are thinned to one per voxel of this edge length, meters.
    double voxel = 0.1;
    /// Frames whose sweeps seed the initial scene (every `seed_stride`-th).
    int seed_stride = 1;
    int sky_rows = 16;
    int sky_cols = 32;
    /// Pixel radius and relative depth gap of the LiDAR occlusion filter applied to each projected sweep;
    /// radius 0 disables it.
    int occlusion_radius = 3;
    double occlusion_gap = 0.1;
    /// Margin added to tracked boxes when assigning LiDAR points to objects, meters.
    double box_margin = 0.02;

    void validate() const;
};

/// One camera of one frame with its supervision.
struct View {
    int frame = 0;
    int camera = 0;
    Image rgb;
    LidarTargets lidar;
};

struct PreparedData {
    std::vector<CameraModel> cameras;
    std::vector<View> train;
    std::vector<View> test;
    SceneGraph scene;
    std::size_t calibrated_points = 0;
    std::size_t degenerate_points = 0;
    std::size_t occluded_pixels = 0;
    std::array<std::size_t, 4> seed_counts{};
};

/// Calibrates every sweep, builds per-view LiDAR targets, and initializes the scene graph from feature seeds
/// and plain LiDAR points (objects get the points inside their tracked boxes).
PreparedData prepare(const Dataset& dataset, const PrepareConfig& config = {});

/// Median training-image color of each primitive's projection, written into its SH DC term.
void init_colors(SceneGraph& scene, const Dataset& dataset);

} // namespace lrsgs
