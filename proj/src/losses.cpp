#include "lrsgs/losses.hpp"

#include <algorithm>
#include <cmath>

namespace lrsgs {

namespace {

constexpr double kSsimC1 = 0.01 * 0.01;
constexpr double kSsimC2 = 0.03 * 0.03;
constexpr double kMinPairDistance = 1e-3;

int mirror(int i, int n) {
    if (n == 1) {
        return 0;
    }
    while (i < 0 || i >= n) {
        i = i < 0 ? -i : 2 * (n - 1) - i;
    }
    return i;
}

/// Valid-region separable correlation of a single-channel image with one kernel along both axes.
Image filter_valid(const Image& img, const std::vector<double>& k) {
    const int taps = static_cast<int>(k.size());
    const int w = img.width() - taps + 1, h = img.height() - taps + 1;
    Image rows(w, img.height());
    for (int y = 0; y < img.height(); ++y) {
        for (int x = 0; x < w; ++x) {
            double s = 0.0;
            for (int t = 0; t < taps; ++t) s += k[t] * img(x + t, y);
            rows(x, y) = s;
        }
    }
    Image out(w, h);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            double s = 0.0;
            for (int t = 0; t < taps; ++t) s += k[t] * rows(x, y + t);
            out(x, y) = s;
        }
    }
    return out;
}

Image filter_valid_adjoint(const Image& grad, const std::vector<double>& k, int width, int height) {
    const int taps = static_cast<int>(k.size());
    Image rows(grad.width(), height);
    for (int y = 0; y < grad.height(); ++y) {
        for (int x = 0; x < grad.width(); ++x) {
            for (int t = 0; t < taps; ++t) rows(x, y + t) += k[t] * grad(x, y);
        }
    }
    Image out(width, height);
    for (int y = 0; y < height; ++y) {
        for (int x = 0; x < grad.width(); ++x) {
            for (int t = 0; t < taps; ++t) out(x + t, y) += k[t] * rows(x, y);
        }
    }
    return out;
}

std::vector<double> ssim_kernel() {
    std::vector<double> k(kSsimWindow);
    const int r = kSsimWindow / 2;
    double sum = 0.0;
    for (int i = 0; i < kSsimWindow; ++i) {
        k[i] = std::exp(-0.5 * (i - r) * (i - r) / (kSsimSigma * kSsimSigma));
        sum += k[i];
    }
    for (double& v : k) v /= sum;
    return k;
}

Image multiply(const Image& a, const Image& b) {
    Image out(a.width(), a.height());
    for (std::size_t i = 0; i < out.data().size(); ++i) out.data()[i] = a.data()[i] * b.data()[i];
    return out;
}

/// SSIM of one channel pair; adds dSSIM/da scaled by `scale` into grad (channel c) when given.
double ssim_channel(const Image& a, const Image& b, Image* grad, int c, double scale) {
    static const std::vector<double> k = ssim_kernel();
    const Image mu_a = filter_valid(a, k), mu_b = filter_valid(b, k);
    const Image e_aa = filter_valid(multiply(a, a), k);
    const Image e_bb = filter_valid(multiply(b, b), k);
    const Image e_ab = filter_valid(multiply(a, b), k);
    const int w = mu_a.width(), h = mu_a.height();
    const double n = static_cast<double>(w) * h;

    Image d_mu(w, h), d_eaa(w, h), d_eab(w, h);
    double total = 0.0;
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            const double ma = mu_a(x, y), mb = mu_b(x, y);
            const double va = e_aa(x, y) - ma * ma, vb = e_bb(x, y) - mb * mb, cov = e_ab(x, y) - ma * mb;
            const double a1 = 2.0 * ma * mb + kSsimC1, a2 = 2.0 * cov + kSsimC2;
            const double b1 = ma * ma + mb * mb + kSsimC1, b2 = va + vb + kSsimC2;
            const double s = a1 * a2 / (b1 * b2);
            total += s;
            if (grad) {
                d_mu(x, y) = s * (2.0 * mb / a1 - 2.0 * mb / a2 - 2.0 * ma / b1 + 2.0 * ma / b2) / n;
                d_eaa(x, y) = -s / b2 / n;
                d_eab(x, y) = 2.0 * s / a2 / n;
            }
        }
    }
    if (grad) {
        const Image g_mu = filter_valid_adjoint(d_mu, k, a.width(), a.height());
        const Image g_aa = filter_valid_adjoint(d_eaa, k, a.width(), a.height());
        const Image g_ab = filter_valid_adjoint(d_eab, k, a.width(), a.height());
        for (int y = 0; y < a.height(); ++y) {
            for (int x = 0; x < a.width(); ++x) {
                (*grad)(x, y, c) += scale * (g_mu(x, y) + 2.0 * a(x, y) * g_aa(x, y) + b(x, y) * g_ab(x, y));
            }
        }
    }
    return total / n;
}

double sign(double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); }

Image ensure(Image* img, int w, int h, int c) {
    if (img && !img->empty()) {
        return *img;
    }
    return Image(w, h, c);
}

} // namespace

void LossWeights::validate() const {
    for (double v : {color, depth, reflectance, reflectance_gradient, direction, magnitude}) {
        if (!(v >= 0.0) || !std::isfinite(v)) {
            throw Error(ErrorCode::Config, "loss weights must be finite and non-negative");
        }
    }
    if (color > 1.0) {
        throw Error(ErrorCode::Config, "color loss D-SSIM share must be at most 1");
    }
}

LidarTargets make_lidar_targets(const ProjectedSweep& sweep, int search_radius) {
    LidarTargets t;
    t.depth = sweep.depth;
    t.reflectance = sweep.reflectance;
    t.reflectance_gradient = pixel_reflectance_gradient(sweep.reflectance, sweep.points, search_radius);
    t.neighbors = gradient_neighbors(sweep.reflectance, search_radius);
    return t;
}

double ssim(const Image& a, const Image& b, Image* grad_a) {
    require_same_shape(a, b, "ssim");
    if (a.width() < kSsimWindow || a.height() < kSsimWindow) {
        throw Error(ErrorCode::InvalidArgument, "ssim needs images of at least 11x11 pixels");
    }
    if (grad_a) {
        *grad_a = Image(a.width(), a.height(), a.channels());
    }
    double total = 0.0;
    const double scale = 1.0 / a.channels();
    for (int c = 0; c < a.channels(); ++c) {
        total += ssim_channel(a.channel(c), b.channel(c), grad_a, c, scale);
    }
    return total * scale;
}

double color_loss(const Image& rendered, const Image& gt, double lambda, Image* grad) {
    require_same_shape(rendered, gt, "color loss");
    const auto r = rendered.data();
    const auto g = gt.data();
    const double n = static_cast<double>(r.size());
    double l1 = 0.0;
    for (std::size_t i = 0; i < r.size(); ++i) l1 += std::abs(r[i] - g[i]);
    l1 /= n;

    double dssim = 0.0;
    Image ssim_grad;
    if (lambda > 0.0) {
        dssim = 0.5 * (1.0 - ssim(rendered, gt, grad ? &ssim_grad : nullptr));
    }
    if (grad) {
        *grad = Image(rendered.width(), rendered.height(), rendered.channels());
        auto out = grad->data();
        for (std::size_t i = 0; i < r.size(); ++i) {
            out[i] = (1.0 - lambda) * sign(r[i] - g[i]) / n;
            if (lambda > 0.0) out[i] -= 0.5 * lambda * ssim_grad.data()[i];
        }
    }
    return (1.0 - lambda) * l1 + lambda * dssim;
}

LidarLossTerms lidar_loss(const Image& depth, const Image& reflectance, const LidarTargets& targets,
                          const Intrinsics& intr, const LossWeights& weights, Image* grad_depth,
                          Image* grad_reflectance) {
    require_same_size(depth, targets.depth, "depth loss");
    require_same_size(reflectance, targets.reflectance, "reflectance loss");
    require_same_size(reflectance, targets.reflectance_gradient, "reflectance gradient loss");
    if (targets.neighbors.size() != targets.reflectance.values.size()) {
        throw Error(ErrorCode::DimensionMismatch, "gradient partner table does not match the reflectance target");
    }
    const int w = depth.width();
    const std::size_t npix = depth.pixel_count();
    if (grad_depth) *grad_depth = Image(w, depth.height());
    if (grad_reflectance) *grad_reflectance = Image(w, depth.height());

    LidarLossTerms out;
    auto masked_l1 = [&](const Image& img, const SparseImage& gt, Image* g) {
        const std::size_t count = gt.valid_count();
        if (count == 0) {
            out.empty_mask = true;
            return 0.0;
        }
        double sum = 0.0;
        for (std::size_t i = 0; i < npix; ++i) {
            if (!gt.valid[i]) continue;
            const double diff = img.data()[i] - gt.values[i];
            sum += std::abs(diff);
            if (g) g->data()[i] += sign(diff) / static_cast<double>(count);
        }
        return sum / static_cast<double>(count);
    };

    Image gd = Image(w, depth.height()), gf = Image(w, depth.height());
    const bool want = grad_depth || grad_reflectance;
    out.depth = masked_l1(depth, targets.depth, want ? &gd : nullptr);
    out.reflectance = masked_l1(reflectance, targets.reflectance, want ? &gf : nullptr);
    if (want) {
        for (std::size_t i = 0; i < npix; ++i) {
            gd.data()[i] *= weights.depth;
            gf.data()[i] *= weights.reflectance;
        }
    }

    const SparseImage& gt_grad = targets.reflectance_gradient;
    const std::size_t count = gt_grad.valid_count();
    if (count == 0) {
        out.empty_mask = true;
    } else {
        auto ray = [&](std::size_t i) {
            const double x = static_cast<double>(i % static_cast<std::size_t>(w));
            const double y = static_cast<double>(i / static_cast<std::size_t>(w));
            return Vec3((x - intr.cx) / intr.fx, (y - intr.cy) / intr.fy, 1.0);
        };
        const auto d = depth.data();
        const auto f = reflectance.data();
        const double scale = weights.reflectance_gradient / static_cast<double>(count);

        struct Term {
            double value = 0.0;
            double dist = 1.0;
            Vec3 offset = Vec3::Zero();
            bool floored = true;
        };
        auto term = [&](std::size_t i, std::int64_t j) {
            Term t;
            if (j < 0) return t;
            const std::size_t k = static_cast<std::size_t>(j);
            t.offset = d[i] * ray(i) - d[k] * ray(k);
            const double dist = t.offset.norm();
            t.floored = dist < kMinPairDistance;
            t.dist = t.floored ? kMinPairDistance : dist;
            t.value = (f[i] - f[k]) / t.dist;
            return t;
        };

        double sum = 0.0;
        for (std::size_t i = 0; i < npix; ++i) {
            if (!gt_grad.valid[i]) continue;
            const GradientNeighbors& nb = targets.neighbors[i];
            const Term th = term(i, nb.horizontal);
            const Term tv = term(i, nb.vertical);
            const double g = std::sqrt(th.value * th.value + tv.value * tv.value);
            const double diff = g - gt_grad.values[i];
            sum += std::abs(diff);
            if (!want || g <= 0.0) continue;
            const double dg = scale * sign(diff);
            for (const auto& [t, j] : {std::pair{th, nb.horizontal}, std::pair{tv, nb.vertical}}) {
                if (j < 0) continue;
                const std::size_t k = static_cast<std::size_t>(j);
                const double dterm = dg * t.value / g;
                gf.data()[i] += dterm / t.dist;
                gf.data()[k] -= dterm / t.dist;
                if (!t.floored) {
                    const double ddist = -dterm * t.value / t.dist;
                    const Vec3 u = t.offset / t.dist;
                    gd.data()[i] += ddist * u.dot(ray(i));
                    gd.data()[k] -= ddist * u.dot(ray(k));
                }
            }
        }
        out.reflectance_gradient = sum / static_cast<double>(count);
    }

    if (grad_depth) *grad_depth = std::move(gd);
    if (grad_reflectance) *grad_reflectance = std::move(gf);
    out.total = weights.depth * out.depth + weights.reflectance * out.reflectance +
                weights.reflectance_gradient * out.reflectance_gradient;
    return out;
}

Image grayscale(const Image& rgb) {
    if (rgb.channels() != 3) {
        throw Error(ErrorCode::DimensionMismatch, "grayscale expects a 3-channel image");
    }
    Image out(rgb.width(), rgb.height());
    for (int y = 0; y < rgb.height(); ++y) {
        for (int x = 0; x < rgb.width(); ++x) {
            out(x, y) = 0.299 * rgb(x, y, 0) + 0.587 * rgb(x, y, 1) + 0.114 * rgb(x, y, 2);
        }
    }
    return out;
}

std::vector<double> gaussian_kernel(double sigma) {
    const int r = static_cast<int>(std::ceil(3.0 * sigma));
    std::vector<double> k(2 * r + 1);
    double sum = 0.0;
    for (int i = -r; i <= r; ++i) {
        k[i + r] = std::exp(-0.5 * i * i / (sigma * sigma));
        sum += k[i + r];
    }
    for (double& v : k) v /= sum;
    return k;
}

Image filter_mirrored(const Image& img, const std::vector<double>& kx, const std::vector<double>& ky) {
    const int w = img.width(), h = img.height();
    const int rx = static_cast<int>(kx.size()) / 2, ry = static_cast<int>(ky.size()) / 2;
    Image rows(w, h), out(w, h);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            double s = 0.0;
            for (int t = -rx; t <= rx; ++t) s += kx[t + rx] * img(mirror(x + t, w), y);
            rows(x, y) = s;
        }
    }
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            double s = 0.0;
            for (int t = -ry; t <= ry; ++t) s += ky[t + ry] * rows(x, mirror(y + t, h));
            out(x, y) = s;
        }
    }
    return out;
}

Image filter_mirrored_adjoint(const Image& grad, const std::vector<double>& kx, const std::vector<double>& ky) {
    const int w = grad.width(), h = grad.height();
    const int rx = static_cast<int>(kx.size()) / 2, ry = static_cast<int>(ky.size()) / 2;
    Image rows(w, h), out(w, h);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            for (int t = -ry; t <= ry; ++t) rows(x, mirror(y + t, h)) += ky[t + ry] * grad(x, y);
        }
    }
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            for (int t = -rx; t <= rx; ++t) out(mirror(x + t, w), y) += kx[t + rx] * rows(x, y);
        }
    }
    return out;
}

namespace {
const std::vector<double> kScharrSmooth = {3.0 / 32.0, 10.0 / 32.0, 3.0 / 32.0};
const std::vector<double> kScharrDiff = {-1.0, 0.0, 1.0};
} // namespace

void scharr(const Image& img, Image& gx, Image& gy) {
    gx = filter_mirrored(img, kScharrDiff, kScharrSmooth);
    gy = filter_mirrored(img, kScharrSmooth, kScharrDiff);
}

JointLossTerms joint_loss(const Image& rgb, const Image& reflectance, const LossWeights& weights, Image* grad_rgb,
                          Image* grad_reflectance) {
    if (rgb.width() != reflectance.width() || rgb.height() != reflectance.height() || reflectance.channels() != 1) {
        throw Error(ErrorCode::DimensionMismatch, "joint loss needs a color and a reflectance image of one size");
    }
    const int w = rgb.width(), h = rgb.height();
    const auto kernel = gaussian_kernel(kJointSigma);
    const Image gray = grayscale(rgb);
    const Image fs = filter_mirrored(reflectance, kernel, kernel);
    const Image cs = filter_mirrored(gray, kernel, kernel);
    Image fx, fy, cx, cy;
    scharr(fs, fx, fy);
    scharr(cs, cx, cy);

    const bool want = grad_rgb || grad_reflectance;
    Image d_fx(w, h), d_fy(w, h), d_cx(w, h), d_cy(w, h), d_fs(w, h), d_cs(w, h);

    const std::size_t npix = static_cast<std::size_t>(w) * h;
    std::size_t included = 0;
    for (std::size_t i = 0; i < npix; ++i) {
        const double mf = std::hypot(fx.data()[i], fy.data()[i]);
        const double mc = std::hypot(cx.data()[i], cy.data()[i]);
        if (mf >= kDirectionMinMagnitude && mc >= kDirectionMinMagnitude) ++included;
    }

    JointLossTerms out;
    double dir_sum = 0.0, val_sum = 0.0;
    for (std::size_t i = 0; i < npix; ++i) {
        const Vec2 gf(fx.data()[i], fy.data()[i]), gc(cx.data()[i], cy.data()[i]);
        const double mf = gf.norm(), mc = gc.norm();
        Vec2 d_gf = Vec2::Zero(), d_gc = Vec2::Zero();

        if (mf >= kDirectionMinMagnitude && mc >= kDirectionMinMagnitude) {
            const Vec2 uf = gf / mf, uc = gc / mc;
            const double cosine = uf.dot(uc);
            dir_sum += 1.0 - cosine;
            const double s = weights.direction / static_cast<double>(included);
            d_gf -= s * (uc - cosine * uf) / mf;
            d_gc -= s * (uf - cosine * uc) / mc;
        }

        const double f_den = fs.data()[i] + kMagnitudeEpsilon, c_den = cs.data()[i] + kMagnitudeEpsilon;
        const double diff = mf / f_den - mc / c_den;
        val_sum += std::abs(diff);
        if (want) {
            const double s = weights.magnitude * sign(diff) / static_cast<double>(npix);
            if (mf > 0.0) d_gf += (s / f_den) * gf / mf;
            if (mc > 0.0) d_gc -= (s / c_den) * gc / mc;
            d_fs.data()[i] -= s * mf / (f_den * f_den);
            d_cs.data()[i] += s * mc / (c_den * c_den);
        }
        d_fx.data()[i] = d_gf.x();
        d_fy.data()[i] = d_gf.y();
        d_cx.data()[i] = d_gc.x();
        d_cy.data()[i] = d_gc.y();
    }
    out.direction = included > 0 ? dir_sum / static_cast<double>(included) : 0.0;
    out.magnitude = val_sum / static_cast<double>(npix);
    out.total = weights.direction * out.direction + weights.magnitude * out.magnitude;

    if (want) {
        auto back = [&](const Image& dx, const Image& dy, Image& d_smooth) {
            const Image a = filter_mirrored_adjoint(dx, kScharrDiff, kScharrSmooth);
            const Image b = filter_mirrored_adjoint(dy, kScharrSmooth, kScharrDiff);
            for (std::size_t i = 0; i < npix; ++i) d_smooth.data()[i] += a.data()[i] + b.data()[i];
            return filter_mirrored_adjoint(d_smooth, kernel, kernel);
        };
        const Image d_refl = back(d_fx, d_fy, d_fs);
        const Image d_gray = back(d_cx, d_cy, d_cs);
        if (grad_reflectance) *grad_reflectance = d_refl;
        if (grad_rgb) {
            *grad_rgb = Image(w, h, 3);
            for (int y = 0; y < h; ++y) {
                for (int x = 0; x < w; ++x) {
                    (*grad_rgb)(x, y, 0) = 0.299 * d_gray(x, y);
                    (*grad_rgb)(x, y, 1) = 0.587 * d_gray(x, y);
                    (*grad_rgb)(x, y, 2) = 0.114 * d_gray(x, y);
                }
            }
        }
    }
    return out;
}

bool LossTerms::finite() const { return first_non_finite() == nullptr; }

const char* LossTerms::first_non_finite() const {
    const std::pair<const char*, double> terms[] = {
        {"rgb", rgb},           {"depth", depth},     {"reflectance", reflectance},
        {"reflectance_gradient", reflectance_gradient}, {"direction", direction},
        {"magnitude", magnitude}, {"total", total},
    };
    for (const auto& [name, v] : terms) {
        if (!std::isfinite(v)) return name;
    }
    return nullptr;
}

LossTerms evaluate_loss(const RenderedFrame& frame, const Image& gt_rgb, const LidarTargets* lidar,
                        const Intrinsics& intrinsics, const LossWeights& weights, RenderOutputGradient* grad) {
    LossTerms t;
    Image g_rgb;
    t.rgb = color_loss(frame.color, gt_rgb, weights.color, grad ? &g_rgb : nullptr);

    Image g_depth, g_refl;
    if (lidar) {
        const LidarLossTerms l = lidar_loss(frame.depth, frame.reflectance, *lidar, intrinsics, weights,
                                            grad ? &g_depth : nullptr, grad ? &g_refl : nullptr);
        t.depth = l.depth;
        t.reflectance = l.reflectance;
        t.reflectance_gradient = l.reflectance_gradient;
        t.lidar = l.total;
        t.lidar_empty = l.empty_mask;
    } else {
        t.lidar_empty = true;
    }

    if (weights.direction > 0.0 || weights.magnitude > 0.0) {
        Image j_rgb, j_refl;
        const JointLossTerms j =
            joint_loss(frame.color, frame.reflectance, weights, grad ? &j_rgb : nullptr, grad ? &j_refl : nullptr);
        t.direction = j.direction;
        t.magnitude = j.magnitude;
        t.joint = j.total;
        if (grad) {
            for (std::size_t i = 0; i < g_rgb.data().size(); ++i) g_rgb.data()[i] += j_rgb.data()[i];
            g_refl = ensure(&g_refl, frame.reflectance.width(), frame.reflectance.height(), 1);
            for (std::size_t i = 0; i < g_refl.data().size(); ++i) g_refl.data()[i] += j_refl.data()[i];
        }
    }
    t.total = t.rgb + t.lidar + t.joint;

    if (grad) {
        grad->color = std::move(g_rgb);
        grad->depth = std::move(g_depth);
        grad->reflectance = std::move(g_refl);
        grad->opacity = Image();
    }
    return t;
}

double mse(const Image& a, const Image& b) {
    require_same_shape(a, b, "mse");
    double sum = 0.0;
    for (std::size_t i = 0; i < a.data().size(); ++i) {
        const double d = a.data()[i] - b.data()[i];
        sum += d * d;
    }
    return a.data().empty() ? 0.0 : sum / static_cast<double>(a.data().size());
}

double psnr(const Image& a, const Image& b) {
    const double m = mse(a, b);
    return m < 1e-10 ? 99.0 : -10.0 * std::log10(m);
}

Metrics metrics(const Image& rendered_rgb, const Image& gt_rgb, const Image& rendered_reflectance,
                const SparseImage& reflectance_gt) {
    require_same_shape(rendered_rgb, gt_rgb, "metrics");
    require_same_size(rendered_reflectance, reflectance_gt, "reflectance metrics");
    Metrics m;
    m.psnr = psnr(rendered_rgb, gt_rgb);
    m.ssim = ssim(rendered_rgb, gt_rgb);
    double sum = 0.0;
    for (std::size_t i = 0; i < reflectance_gt.values.size(); ++i) {
        if (!reflectance_gt.valid[i]) continue;
        const double d = rendered_reflectance.data()[i] - reflectance_gt.values[i];
        sum += d * d;
        ++m.reflectance_pixels;
    }
    m.reflectance_rmse = m.reflectance_pixels ? std::sqrt(sum / static_cast<double>(m.reflectance_pixels)) : 0.0;
    return m;
}

} // namespace lrsgs
