#include "lrsgs/rasterizer.hpp"

#include "lrsgs/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace lrsgs {

namespace {

/// Screen-space quantities needed again by the backward pass.
struct Projection {
    Vec3 camera_point;
    Eigen::Matrix<double, 2, 3> jacobian;
    Mat3 view_cov;
    Vec3 view_dir;
    double view_dist;
    ShBasis basis;
    Vec3 raw_color;
};

Projection compute_projection(const GaussianPrimitive& g, const CameraModel& cam, int sh_degree) {
    Projection p;
    const Mat3& w = cam.extrinsics.rotation;
    p.camera_point = cam.to_camera(g.mean);
    const double x = p.camera_point.x(), y = p.camera_point.y(), z = p.camera_point.z();
    const double fx = cam.intrinsics.fx, fy = cam.intrinsics.fy;
    p.jacobian << fx / z, 0.0, -fx * x / (z * z), 0.0, fy / z, -fy * y / (z * z);
    p.view_cov = w * covariance(g) * w.transpose();

    const Vec3 offset = g.mean - cam.center();
    p.view_dist = offset.norm();
    p.view_dir = p.view_dist > 0.0 ? Vec3(offset / p.view_dist) : Vec3::UnitZ();
    p.basis = sh_basis(p.view_dir, sh_degree);
    p.raw_color = sh_color(g.sh, p.basis, sh_degree);
    return p;
}

bool outside_guard_band(const Vec2& uv, const CameraModel& cam, double band) {
    const double hw = 0.5 * cam.width, hh = 0.5 * cam.height;
    return std::abs(uv.x() - hw) > band * hw || std::abs(uv.y() - hh) > band * hh;
}

/// Contribution of one splat at one pixel; alpha < 0 when skipped.
struct AlphaEval {
    double alpha;
    double gauss;
    Vec2 delta;
    bool clamped;
};

inline AlphaEval eval_alpha(const ProjectedGaussian& pg, double px, double py, const RenderOptions& opt) {
    AlphaEval e;
    e.delta = Vec2(px - pg.mean2d.x(), py - pg.mean2d.y());
    const double m = e.delta.dot(pg.conic * e.delta);
    e.gauss = std::exp(-0.5 * m);
    const double a = pg.opacity * e.gauss;
    e.clamped = a > opt.alpha_max;
    e.alpha = e.clamped ? opt.alpha_max : a;
    if (e.alpha < opt.alpha_min) {
        e.alpha = -1.0;
    }
    return e;
}

/// Per-splat screen-space gradient accumulated over pixels.
struct SplatGrad {
    Vec2 mean2d = Vec2::Zero();
    Mat2 conic = Mat2::Zero();
    double opacity = 0.0;
    Vec3 color = Vec3::Zero();
    double depth = 0.0;
    double reflectance = 0.0;

    SplatGrad& operator+=(const SplatGrad& o) {
        mean2d += o.mean2d;
        conic += o.conic;
        opacity += o.opacity;
        color += o.color;
        depth += o.depth;
        reflectance += o.reflectance;
        return *this;
    }
};

double grad_at(const Image& img, int x, int y, int c = 0) { return img.empty() ? 0.0 : img(x, y, c); }

} // namespace

std::optional<ProjectedGaussian> project(const GaussianPrimitive& g, const CameraModel& cam, int sh_degree,
                                         const RenderOptions& opt) {
    const Vec3 pc = cam.to_camera(g.mean);
    if (!(pc.z() > opt.near_plane)) {
        return std::nullopt;
    }
    ProjectedGaussian out;
    out.mean2d = Vec2(cam.intrinsics.fx * pc.x() / pc.z() + cam.intrinsics.cx,
                      cam.intrinsics.fy * pc.y() / pc.z() + cam.intrinsics.cy);
    if (outside_guard_band(out.mean2d, cam, opt.guard_band)) {
        return std::nullopt;
    }
    const Projection p = compute_projection(g, cam, sh_degree);
    out.cov2d = p.jacobian * p.view_cov * p.jacobian.transpose() + opt.cov2d_floor * Mat2::Identity();
    const double det = out.cov2d.determinant();
    if (!(det > 0.0)) {
        return std::nullopt;
    }
    out.conic = out.cov2d.inverse();
    out.depth = pc.z();
    out.color = p.raw_color.cwiseMax(0.0).cwiseMin(1.0);
    out.reflectance = g.reflectance();
    out.opacity = g.opacity();

    const double mid = 0.5 * (out.cov2d(0, 0) + out.cov2d(1, 1));
    const double lambda_max = mid + std::sqrt(std::max(0.1, mid * mid - det));
    out.radius = 3.0 * std::sqrt(lambda_max);

    if (opt.alpha_min > 0.0) {
        if (out.opacity < opt.alpha_min) {
            return std::nullopt;
        }
        // bounding box of the ellipse where opacity * exp(-m/2) >= alpha_min
        const double m_max = 2.0 * std::log(out.opacity / opt.alpha_min);
        const double hx = std::sqrt(m_max * out.cov2d(0, 0));
        const double hy = std::sqrt(m_max * out.cov2d(1, 1));
        const int x0 = std::max(0, static_cast<int>(std::ceil(out.mean2d.x() - hx)));
        const int x1 = std::min(cam.width - 1, static_cast<int>(std::floor(out.mean2d.x() + hx)));
        const int y0 = std::max(0, static_cast<int>(std::ceil(out.mean2d.y() - hy)));
        const int y1 = std::min(cam.height - 1, static_cast<int>(std::floor(out.mean2d.y() + hy)));
        if (x0 > x1 || y0 > y1) {
            return std::nullopt;
        }
        out.footprint = {x0, y0, x1, y1};
    } else {
        out.footprint = {0, 0, cam.width - 1, cam.height - 1};
    }
    return out;
}

RenderPass render_forward(std::span<const GaussianPrimitive> gaussians, const CameraModel& camera,
                          const SkyModel& sky, int sh_degree, const RenderOptions& options) {
    camera.validate();
    RenderPass pass;
    pass.camera = camera;
    pass.sh_degree = sh_degree;
    pass.options = options;
    const int w = camera.width, h = camera.height, ts = options.tile_size;
    pass.tiles_x = (w + ts - 1) / ts;
    pass.tiles_y = (h + ts - 1) / ts;

    pass.projected.resize(gaussians.size());
    for (std::size_t i = 0; i < gaussians.size(); ++i) {
        pass.projected[i] = project(gaussians[i], camera, sh_degree, options);
    }

    pass.tile_lists.assign(static_cast<std::size_t>(pass.tiles_x) * pass.tiles_y, {});
    for (std::size_t i = 0; i < gaussians.size(); ++i) {
        const auto& pg = pass.projected[i];
        if (!pg) {
            continue;
        }
        const auto& f = pg->footprint;
        for (int ty = f[1] / ts; ty <= f[3] / ts; ++ty) {
            for (int tx = f[0] / ts; tx <= f[2] / ts; ++tx) {
                pass.tile_lists[static_cast<std::size_t>(ty) * pass.tiles_x + tx].push_back(static_cast<std::uint32_t>(i));
            }
        }
    }
    for (auto& list : pass.tile_lists) {
        std::sort(list.begin(), list.end(), [&](std::uint32_t a, std::uint32_t b) {
            const double da = pass.projected[a]->depth, db = pass.projected[b]->depth;
            return da != db ? da < db : a < b;
        });
    }

    const std::size_t npix = static_cast<std::size_t>(w) * h;
    RenderedFrame& fr = pass.frame;
    fr.color = Image(w, h, 3);
    fr.depth = Image(w, h, 1);
    fr.reflectance = Image(w, h, 1);
    fr.opacity = Image(w, h, 1);
    pass.final_transmittance.assign(npix, 1.0);
    pass.contributors.assign(npix, 0);
    pass.sky_samples.resize(npix);
    pass.sky_raw.resize(npix);

    const std::size_t tile_count = pass.tile_lists.size();
    parallel_chunks(tile_count, options.threads, [&](std::size_t, std::size_t begin, std::size_t end) {
        for (std::size_t t = begin; t < end; ++t) {
            const int tx = static_cast<int>(t % static_cast<std::size_t>(pass.tiles_x));
            const int ty = static_cast<int>(t / static_cast<std::size_t>(pass.tiles_x));
            const auto& list = pass.tile_lists[t];
            for (int y = ty * ts; y < std::min(h, (ty + 1) * ts); ++y) {
                for (int x = tx * ts; x < std::min(w, (tx + 1) * ts); ++x) {
                    const std::size_t pix = static_cast<std::size_t>(y) * w + x;
                    double tr = 1.0;
                    Vec3 c = Vec3::Zero();
                    double d = 0.0, f = 0.0, o = 0.0;
                    std::uint32_t last = 0;
                    for (std::size_t k = 0; k < list.size(); ++k) {
                        const ProjectedGaussian& pg = *pass.projected[list[k]];
                        const AlphaEval e = eval_alpha(pg, x, y, options);
                        if (e.alpha < 0.0) {
                            continue;
                        }
                        const double next = tr * (1.0 - e.alpha);
                        if (next < options.transmittance_cutoff) {
                            break;
                        }
                        const double wgt = e.alpha * tr;
                        c += wgt * pg.color;
                        d += wgt * pg.depth;
                        f += wgt * pg.reflectance;
                        o += wgt;
                        tr = next;
                        last = static_cast<std::uint32_t>(k + 1);
                    }
                    pass.final_transmittance[pix] = tr;
                    pass.contributors[pix] = last;

                    const SkySample s = sky.lookup(camera.ray_direction(x, y));
                    const Vec3 raw = sky.raw(s);
                    pass.sky_samples[pix] = s;
                    pass.sky_raw[pix] = raw;
                    const Vec3 sky_c = raw.cwiseMax(0.0).cwiseMin(1.0);
                    for (int ch = 0; ch < 3; ++ch) {
                        fr.color(x, y, ch) = c[ch] + (1.0 - o) * sky_c[ch];
                    }
                    fr.depth(x, y) = d;
                    fr.reflectance(x, y) = f;
                    fr.opacity(x, y) = o;
                }
            }
        }
    });
    return pass;
}

RenderedFrame render(std::span<const GaussianPrimitive> gaussians, const CameraModel& camera, const SkyModel& sky,
                     int sh_degree, const RenderOptions& options) {
    return render_forward(gaussians, camera, sky, sh_degree, options).frame;
}

RenderGradient render_backward(const RenderPass& pass, std::span<const GaussianPrimitive> gaussians,
                               const SkyModel& sky, const RenderOutputGradient& grad) {
    const CameraModel& cam = pass.camera;
    const RenderOptions& opt = pass.options;
    const int w = cam.width, h = cam.height, ts = opt.tile_size;
    const std::size_t n = gaussians.size();
    if (pass.projected.size() != n) {
        throw Error(ErrorCode::DimensionMismatch, "backward pass called with a different primitive list");
    }

    const std::size_t tile_count = pass.tile_lists.size();
    const std::size_t chunks = chunk_count(tile_count, opt.threads);
    std::vector<std::vector<SplatGrad>> splat(chunks, std::vector<SplatGrad>(n));
    std::vector<std::vector<Vec3>> sky_grad(chunks, std::vector<Vec3>(sky.texels.size(), Vec3::Zero()));

    parallel_chunks(tile_count, opt.threads, [&](std::size_t chunk, std::size_t begin, std::size_t end) {
        auto& sg = splat[chunk];
        auto& skg = sky_grad[chunk];
        for (std::size_t t = begin; t < end; ++t) {
            const int tx = static_cast<int>(t % static_cast<std::size_t>(pass.tiles_x));
            const int ty = static_cast<int>(t / static_cast<std::size_t>(pass.tiles_x));
            const auto& list = pass.tile_lists[t];
            for (int y = ty * ts; y < std::min(h, (ty + 1) * ts); ++y) {
                for (int x = tx * ts; x < std::min(w, (tx + 1) * ts); ++x) {
                    const std::size_t pix = static_cast<std::size_t>(y) * w + x;
                    const Vec3 dc(grad_at(grad.color, x, y, 0), grad_at(grad.color, x, y, 1),
                                  grad_at(grad.color, x, y, 2));
                    const double dd = grad_at(grad.depth, x, y);
                    const double df = grad_at(grad.reflectance, x, y);
                    const double o_final = pass.frame.opacity(x, y);

                    // sky compositing: color = C_G + (1 - O) * clamp(sky)
                    const Vec3& raw = pass.sky_raw[pix];
                    const Vec3 sky_c = raw.cwiseMax(0.0).cwiseMin(1.0);
                    const double d_o = grad_at(grad.opacity, x, y) - dc.dot(sky_c);
                    const SkySample& ss = pass.sky_samples[pix];
                    for (int ch = 0; ch < 3; ++ch) {
                        if (raw[ch] < 0.0 || raw[ch] > 1.0 || dc[ch] == 0.0) {
                            continue;
                        }
                        const double g = (1.0 - o_final) * dc[ch];
                        for (int k = 0; k < 4; ++k) {
                            skg[ss.texel[k]][ch] += ss.weight[k] * g;
                        }
                    }

                    // back-to-front replay of the blend
                    double tr = pass.final_transmittance[pix];
                    Vec3 acc_c = Vec3::Zero();
                    double acc_d = 0.0, acc_f = 0.0, acc_o = 0.0;
                    for (std::size_t k = pass.contributors[pix]; k-- > 0;) {
                        const std::uint32_t gi = list[k];
                        const ProjectedGaussian& pg = *pass.projected[gi];
                        const AlphaEval e = eval_alpha(pg, x, y, opt);
                        if (e.alpha < 0.0) {
                            continue;
                        }
                        tr /= (1.0 - e.alpha);
                        const double wgt = e.alpha * tr;

                        SplatGrad& s = sg[gi];
                        s.color += wgt * dc;
                        s.depth += wgt * dd;
                        s.reflectance += wgt * df;

                        const double d_alpha = tr * ((pg.color - acc_c).dot(dc) + (pg.depth - acc_d) * dd +
                                                     (pg.reflectance - acc_f) * df + (1.0 - acc_o) * d_o);
                        acc_c = e.alpha * pg.color + (1.0 - e.alpha) * acc_c;
                        acc_d = e.alpha * pg.depth + (1.0 - e.alpha) * acc_d;
                        acc_f = e.alpha * pg.reflectance + (1.0 - e.alpha) * acc_f;
                        acc_o = e.alpha + (1.0 - e.alpha) * acc_o;

                        if (e.clamped) {
                            continue;
                        }
                        s.opacity += d_alpha * e.gauss;
                        const double d_m = -0.5 * e.alpha * d_alpha;
                        s.mean2d += -2.0 * d_m * (pg.conic * e.delta);
                        s.conic += d_m * (e.delta * e.delta.transpose());
                    }
                }
            }
        }
    });

    for (std::size_t c = 1; c < chunks; ++c) {
        for (std::size_t i = 0; i < n; ++i) {
            splat[0][i] += splat[c][i];
        }
        for (std::size_t t = 0; t < sky_grad[0].size(); ++t) {
            sky_grad[0][t] += sky_grad[c][t];
        }
    }

    RenderGradient out;
    out.gaussians.resize(n);
    out.mean2d.assign(n, Vec2::Zero());
    out.sky = std::move(sky_grad[0]);

    const Mat3& wrot = cam.extrinsics.rotation;
    const double fx = cam.intrinsics.fx, fy = cam.intrinsics.fy;
    for (std::size_t i = 0; i < n; ++i) {
        const auto& pg = pass.projected[i];
        if (!pg) {
            continue;
        }
        const SplatGrad& s = splat[0][i];
        const GaussianPrimitive& g = gaussians[i];
        const Projection p = compute_projection(g, cam, pass.sh_degree);
        WorldGaussianGradient& wg = out.gaussians[i];
        out.mean2d[i] = s.mean2d;

        // conic = cov2d^-1
        const Mat2 g_conic = 0.5 * (s.conic + s.conic.transpose());
        const Mat2 g_cov2 = -pg->conic * g_conic * pg->conic;
        const Eigen::Matrix<double, 2, 3> m = p.jacobian * wrot;
        wg.covariance = m.transpose() * g_cov2 * m;
        const Eigen::Matrix<double, 2, 3> g_j = 2.0 * g_cov2 * p.jacobian * p.view_cov;

        const double x = p.camera_point.x(), y = p.camera_point.y(), z = p.camera_point.z();
        const double z2 = z * z, z3 = z2 * z;
        Vec3 g_pc = Vec3::Zero();
        g_pc.x() += g_j(0, 2) * (-fx / z2);
        g_pc.y() += g_j(1, 2) * (-fy / z2);
        g_pc.z() += g_j(0, 0) * (-fx / z2) + g_j(0, 2) * (2.0 * fx * x / z3) + g_j(1, 1) * (-fy / z2) +
                    g_j(1, 2) * (2.0 * fy * y / z3);
        g_pc.x() += s.mean2d.x() * fx / z;
        g_pc.y() += s.mean2d.y() * fy / z;
        g_pc.z() += -s.mean2d.x() * fx * x / z2 - s.mean2d.y() * fy * y / z2;
        g_pc.z() += s.depth;
        wg.mean = wrot.transpose() * g_pc;

        // color = clamp(SH(view_dir))
        Vec3 g_raw = s.color;
        for (int ch = 0; ch < 3; ++ch) {
            if (p.raw_color[ch] < 0.0 || p.raw_color[ch] > 1.0) {
                g_raw[ch] = 0.0;
            }
        }
        const int ncoef = sh_coeff_count(pass.sh_degree);
        const auto jac = sh_basis_jacobian(p.view_dir, pass.sh_degree);
        Vec3 g_dir = Vec3::Zero();
        for (int k = 0; k < ncoef; ++k) {
            wg.sh[k] = p.basis[k] * g_raw;
            g_dir += g.sh[k].dot(g_raw) * jac[k];
        }
        if (p.view_dist > 0.0) {
            wg.mean += (g_dir - p.view_dir * p.view_dir.dot(g_dir)) / p.view_dist;
        }

        const double o = pg->opacity, f = pg->reflectance;
        wg.opacity_logit = s.opacity * o * (1.0 - o);
        wg.reflectance_logit = s.reflectance * f * (1.0 - f);
    }
    return out;
}

RenderedFrame render_oracle(std::span<const GaussianPrimitive> gaussians, const CameraModel& camera,
                            const SkyModel& sky, int sh_degree, const RenderOptions& options) {
    if (gaussians.size() > kOracleMaxGaussians) {
        throw Error(ErrorCode::OracleTooLarge, std::to_string(gaussians.size()) + " primitives exceed the oracle cap of " +
                                                   std::to_string(kOracleMaxGaussians));
    }
    camera.validate();
    const int w = camera.width, h = camera.height;

    struct Entry {
        std::size_t index;
        ProjectedGaussian pg;
    };
    std::vector<Entry> splats;
    for (std::size_t i = 0; i < gaussians.size(); ++i) {
        if (auto pg = project(gaussians[i], camera, sh_degree, options)) {
            splats.push_back({i, *pg});
        }
    }
    std::stable_sort(splats.begin(), splats.end(), [](const Entry& a, const Entry& b) {
        return a.pg.depth != b.pg.depth ? a.pg.depth < b.pg.depth : a.index < b.index;
    });

    RenderedFrame fr{Image(w, h, 3), Image(w, h, 1), Image(w, h, 1), Image(w, h, 1)};
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            long double tr = 1.0L, cr = 0.0L, cg = 0.0L, cb = 0.0L, d = 0.0L, f = 0.0L, o = 0.0L;
            for (const Entry& e : splats) {
                const ProjectedGaussian& pg = e.pg;
                const double dx = x - pg.mean2d.x(), dy = y - pg.mean2d.y();
                const double m = pg.conic(0, 0) * dx * dx + 2.0 * pg.conic(0, 1) * dx * dy + pg.conic(1, 1) * dy * dy;
                const double alpha = std::min(options.alpha_max, pg.opacity * std::exp(-0.5 * m));
                if (alpha < options.alpha_min) {
                    continue;
                }
                const long double wgt = alpha * tr;
                cr += wgt * pg.color.x();
                cg += wgt * pg.color.y();
                cb += wgt * pg.color.z();
                d += wgt * pg.depth;
                f += wgt * pg.reflectance;
                o += wgt;
                tr *= (1.0L - alpha);
            }
            const Vec3 sky_c = sky.sample(camera.ray_direction(x, y));
            fr.color(x, y, 0) = static_cast<double>(cr + (1.0L - o) * sky_c.x());
            fr.color(x, y, 1) = static_cast<double>(cg + (1.0L - o) * sky_c.y());
            fr.color(x, y, 2) = static_cast<double>(cb + (1.0L - o) * sky_c.z());
            fr.depth(x, y) = static_cast<double>(d);
            fr.reflectance(x, y) = static_cast<double>(f);
            fr.opacity(x, y) = static_cast<double>(o);
        }
    }
    return fr;
}

} // namespace lrsgs
