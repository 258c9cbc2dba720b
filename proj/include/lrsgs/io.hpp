#pragma once

#include "lrsgs/camera.hpp"
#include "lrsgs/gaussian_scene.hpp"
#include "lrsgs/image.hpp"
#include "lrsgs/lidar_model.hpp"

#include <filesystem>
#include <string>
#include <vector>

namespace lrsgs {

namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// PLY (binary little-endian, vertex element only)
// ---------------------------------------------------------------------------

enum class PlyType : std::uint8_t { Int8, UInt8, Int16, UInt16, Int32, UInt32, Float32, Float64 };

struct PlyColumn {
    std::string name;
    PlyType type = PlyType::Float32;
    std::vector<double> values;
};

/// Vertex table stored column-wise.
struct PlyTable {
    std::vector<PlyColumn> columns;

    std::size_t rows() const { return columns.empty() ? 0 : columns.front().values.size(); }
    const PlyColumn* find(const std::string& name) const;
    /// Throws Format when the column is missing.
    const std::vector<double>& column(const std::string& name) const;
};

void write_ply(const fs::path& path, const PlyTable& table);
/// Reads binary_little_endian or ascii vertex tables. Throws Io or Format.
PlyTable read_ply(const fs::path& path);

void write_sweep_ply(const fs::path& path, std::span<const LidarPoint> points);
std::vector<LidarPoint> read_sweep_ply(const fs::path& path);

// ---------------------------------------------------------------------------
// Images
// ---------------------------------------------------------------------------

/// 8-bit RGB or gray PNG from values in [0, 1] (clamped).
void write_png(const fs::path& path, const Image& image);
/// Channels as stored (gray or RGB, alpha dropped), scaled to [0, 1].
Image read_png(const fs::path& path);

/// 1-bit grayscale PNG.
void write_mask_png(const fs::path& path, int width, int height, std::span<const std::uint8_t> mask);
std::vector<std::uint8_t> read_mask_png(const fs::path& path, int& width, int& height);

/// Float32 PFM, 1 or 3 channels.
void write_pfm(const fs::path& path, const Image& image);
Image read_pfm(const fs::path& path);

/// `<stem>.mask.png` next to a PFM file.
fs::path mask_path_for(const fs::path& pfm);

/// PFM values (zero where invalid) plus the companion mask.
void write_sparse(const fs::path& pfm, const SparseImage& image);
SparseImage read_sparse(const fs::path& pfm);

// ---------------------------------------------------------------------------
// Cameras
// ---------------------------------------------------------------------------

void write_camera(const fs::path& path, const CameraModel& camera);
/// Throws Io or Format; validates the result.
CameraModel read_camera(const fs::path& path);

// ---------------------------------------------------------------------------
// Scene checkpoints
// ---------------------------------------------------------------------------

/// Binary container: magic, JSON header, then little-endian float32 attribute columns per node.
void save_checkpoint(const fs::path& path, const SceneGraph& scene);
SceneGraph load_checkpoint(const fs::path& path);

std::string read_text(const fs::path& path);
void write_text(const fs::path& path, const std::string& text);

} // namespace lrsgs
