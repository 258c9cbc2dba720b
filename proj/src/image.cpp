#include "lrsgs/image.hpp"

#include <algorithm>
#include <numeric>
#include <string>

namespace lrsgs {

Image::Image(int width, int height, int channels, double fill)
    : width_(width), height_(height), channels_(channels) {
    if (width < 0 || height < 0 || channels <= 0) {
        throw Error(ErrorCode::InvalidArgument, "invalid image shape");
    }
    data_.assign(static_cast<std::size_t>(width) * height * channels, fill);
}

Image Image::channel(int c) const {
    Image out(width_, height_, 1);
    for (int y = 0; y < height_; ++y) {
        for (int x = 0; x < width_; ++x) {
            out(x, y) = (*this)(x, y, c);
        }
    }
    return out;
}

void Image::fill(double value) { std::fill(data_.begin(), data_.end(), value); }

SparseImage::SparseImage(int w, int h)
    : width(w), height(h), values(static_cast<std::size_t>(w) * h, 0.0),
      valid(static_cast<std::size_t>(w) * h, 0), point_index(static_cast<std::size_t>(w) * h, -1) {}

void SparseImage::set(int x, int y, double v, std::int64_t source) {
    const auto i = index(x, y);
    values[i] = v;
    valid[i] = 1;
    point_index[i] = source;
}

std::size_t SparseImage::valid_count() const {
    return static_cast<std::size_t>(std::count(valid.begin(), valid.end(), std::uint8_t{1}));
}

void require_same_shape(const Image& a, const Image& b, const char* what) {
    if (!a.same_shape(b)) {
        throw Error(ErrorCode::DimensionMismatch,
                    std::string(what) + ": " + std::to_string(a.width()) + "x" + std::to_string(a.height()) +
                        "x" + std::to_string(a.channels()) + " vs " + std::to_string(b.width()) + "x" +
                        std::to_string(b.height()) + "x" + std::to_string(b.channels()));
    }
}

void require_same_size(const Image& a, const SparseImage& b, const char* what) {
    if (a.width() != b.width || a.height() != b.height) {
        throw Error(ErrorCode::DimensionMismatch,
                    std::string(what) + ": " + std::to_string(a.width()) + "x" + std::to_string(a.height()) +
                        " vs " + std::to_string(b.width) + "x" + std::to_string(b.height));
    }
}

} // namespace lrsgs
