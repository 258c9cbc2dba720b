#pragma once

#include "lrsgs/common.hpp"

#include <cstdint>
#include <span>
#include <vector>

namespace lrsgs {

/// Dense row-major image of doubles, interleaved channels.
class Image {
public:
    Image() = default;
    Image(int width, int height, int channels = 1, double fill = 0.0);

    int width() const { return width_; }
    int height() const { return height_; }
    int channels() const { return channels_; }
    std::size_t pixel_count() const { return static_cast<std::size_t>(width_) * height_; }
    bool empty() const { return data_.empty(); }

    double& operator()(int x, int y, int c = 0) { return data_[index(x, y, c)]; }
    double operator()(int x, int y, int c = 0) const { return data_[index(x, y, c)]; }

    std::span<double> data() { return data_; }
    std::span<const double> data() const { return data_; }

    bool same_shape(const Image& other) const {
        return width_ == other.width_ && height_ == other.height_ && channels_ == other.channels_;
    }

    /// Single channel copy.
    Image channel(int c) const;
    void fill(double value);

private:
    std::size_t index(int x, int y, int c) const {
        return (static_cast<std::size_t>(y) * width_ + x) * channels_ + c;
    }

    int width_ = 0;
    int height_ = 0;
    int channels_ = 0;
    std::vector<double> data_;
};

/// Per-pixel scalar that is only defined where `valid` is set.
struct SparseImage {
    int width = 0;
    int height = 0;
    std::vector<double> values;
    std::vector<std::uint8_t> valid;
    /// Index of the source point per pixel, -1 when empty.
    std::vector<std::int64_t> point_index;

    SparseImage() = default;
    SparseImage(int w, int h);

    std::size_t index(int x, int y) const { return static_cast<std::size_t>(y) * width + x; }
    bool is_valid(int x, int y) const { return valid[index(x, y)] != 0; }
    double value(int x, int y) const { return values[index(x, y)]; }
    void set(int x, int y, double v, std::int64_t source = -1);
    std::size_t valid_count() const;
};

/// Throws DimensionMismatch with `what` unless the two shapes agree.
void require_same_shape(const Image& a, const Image& b, const char* what);
void require_same_size(const Image& a, const SparseImage& b, const char* what);

} // namespace lrsgs
