#pragma once

#include "lrsgs/camera.hpp"
#include "lrsgs/image.hpp"
#include "lrsgs/lidar_model.hpp"
#include "lrsgs/rasterizer.hpp"

#include <vector>

namespace lrsgs {

struct LossWeights {
    /// D-SSIM share of the color loss; the L1 share is 1 - color.
    double color = 0.2;
    double depth = 0.1;
    double reflectance = 0.1;
    double reflectance_gradient = 0.05;
    double direction = 0.1;
    double magnitude = 0.2;

    /// Throws Config on negative weights or color > 1.
    void validate() const;
};

/// Sparse LiDAR supervision for one camera of one frame.
struct LidarTargets {
    SparseImage depth;
    SparseImage reflectance;
    SparseImage reflectance_gradient;
    /// Gradient partners of every valid reflectance pixel.
    std::vector<GradientNeighbors> neighbors;
};

/// Builds the gradient image and partner table from a projected sweep.
LidarTargets make_lidar_targets(const ProjectedSweep& sweep, int search_radius = 2);

inline constexpr int kSsimWindow = 11;
inline constexpr double kSsimSigma = 1.5;

/// Mean SSIM over channels and over the positions where the 11x11 Gaussian window fits inside the image.
/// Writes dSSIM/da into `grad_a` when given. Throws DimensionMismatch, InvalidArgument below 11x11.
double ssim(const Image& a, const Image& b, Image* grad_a = nullptr);

/// (1 - lambda) * mean|C - C_gt| + lambda * (1 - SSIM) / 2.
double color_loss(const Image& rendered, const Image& gt, double lambda, Image* grad = nullptr);

struct LidarLossTerms {
    double depth = 0.0;
    double reflectance = 0.0;
    double reflectance_gradient = 0.0;
    double total = 0.0;
    /// Set when some term had no valid pixel and contributed 0.
    bool empty_mask = false;
};

/// Masked L1 terms against the sparse targets. The rendered reflectance gradient pairs each valid pixel with
/// the same partners as the target and measures distances between points unprojected from rendered depth.
LidarLossTerms lidar_loss(const Image& depth, const Image& reflectance, const LidarTargets& targets,
                          const Intrinsics& intrinsics, const LossWeights& weights, Image* grad_depth = nullptr,
                          Image* grad_reflectance = nullptr);

struct JointLossTerms {
    double direction = 0.0;
    double magnitude = 0.0;
    double total = 0.0;
};

inline constexpr double kJointSigma = 1.2;
inline constexpr double kMagnitudeEpsilon = 1e-3;
inline constexpr double kDirectionMinMagnitude = 1e-4;

/// Gradient direction and normalized-magnitude agreement between rendered reflectance and grayscale color.
JointLossTerms joint_loss(const Image& rgb, const Image& reflectance, const LossWeights& weights,
                          Image* grad_rgb = nullptr, Image* grad_reflectance = nullptr);

/// ITU-R 601 luma.
Image grayscale(const Image& rgb);

/// Normalized Gaussian taps of radius ceil(3 sigma).
std::vector<double> gaussian_kernel(double sigma);

/// Separable correlation with mirrored (reflect-101) borders, and its adjoint.
Image filter_mirrored(const Image& img, const std::vector<double>& kx, const std::vector<double>& ky);
Image filter_mirrored_adjoint(const Image& grad, const std::vector<double>& kx, const std::vector<double>& ky);

/// Scharr derivatives scaled by 1/32 so a unit ramp has unit slope.
void scharr(const Image& img, Image& gx, Image& gy);

struct LossTerms {
    double rgb = 0.0;
    double depth = 0.0;
    double reflectance = 0.0;
    double reflectance_gradient = 0.0;
    double direction = 0.0;
    double magnitude = 0.0;
    double lidar = 0.0;
    double joint = 0.0;
    double total = 0.0;
    bool lidar_empty = false;

    bool finite() const;
    /// Name of the first non-finite term, or nullptr.
    const char* first_non_finite() const;
};

/// Full loss for one rendered view. `lidar` may be null (no LiDAR supervision for this view).
/// Fills `grad` with dL/d(render outputs) when given.
LossTerms evaluate_loss(const RenderedFrame& frame, const Image& gt_rgb, const LidarTargets* lidar,
                        const Intrinsics& intrinsics, const LossWeights& weights,
                        RenderOutputGradient* grad = nullptr);

double mse(const Image& a, const Image& b);
/// -10 log10(MSE), 99 when MSE < 1e-10.
double psnr(const Image& a, const Image& b);

struct Metrics {
    double psnr = 0.0;
    double ssim = 0.0;
    double reflectance_rmse = 0.0;
    std::size_t reflectance_pixels = 0;
};

Metrics metrics(const Image& rendered_rgb, const Image& gt_rgb, const Image& rendered_reflectance,
                const SparseImage& reflectance_gt);

} // namespace lrsgs
