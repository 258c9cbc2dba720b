#include "lrsgs/feature_extraction.hpp"

#include <algorithm>
#include <map>
#include <numeric>

namespace lrsgs {

const char* to_string(FeatureKind kind) {
    switch (kind) {
    case FeatureKind::None: return "none";
    case FeatureKind::GeometricEdge: return "geometric_edge";
    case FeatureKind::GeometricPlanar: return "geometric_planar";
    case FeatureKind::ReflectanceEdge: return "reflectance_edge";
    }
    return "unknown";
}

void FeatureConfig::validate() const {
    if (!(thresholds.edge > 0.0 && thresholds.planar > 0.0 && thresholds.reflectance > 0.0)) {
        throw Error(ErrorCode::Config, "feature thresholds must be positive");
    }
    if (!(thresholds.planar < thresholds.edge)) {
        throw Error(ErrorCode::Config, "feature planar threshold must be below the edge threshold");
    }
    if (budget.edge < 0 || budget.planar < 0 || budget.reflectance < 0) {
        throw Error(ErrorCode::Config, "feature caps must be non-negative");
    }
    if (smoothness_k < 2 || smoothness_k % 2 != 0) {
        throw Error(ErrorCode::Config, "feature smoothness_k must be even and >= 2");
    }
    if (left < 0 || right < 1) {
        throw Error(ErrorCode::Config, "feature left/right windows must be >= 0 / >= 1");
    }
}

std::vector<std::vector<std::size_t>> group_rings(std::span<const CalibratedPoint> points) {
    std::map<int, std::vector<std::size_t>> rings;
    for (std::size_t i = 0; i < points.size(); ++i) {
        rings[points[i].ring].push_back(i);
    }
    std::vector<std::vector<std::size_t>> out;
    out.reserve(rings.size());
    for (auto& [ring, idx] : rings) {
        std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
            return points[a].azimuth_index < points[b].azimuth_index;
        });
        out.push_back(std::move(idx));
    }
    return out;
}

double smoothness(std::size_t j, std::span<const CalibratedPoint> ring, int k) {
    const std::size_t half = static_cast<std::size_t>(k / 2);
    if (k < 2 || j < half || j + half >= ring.size()) {
        throw Error(ErrorCode::InsufficientNeighbors, "smoothness needs k/2 same-ring neighbors per side");
    }
    const Vec3& pj = ring[j].position;
    Vec3 sum = Vec3::Zero();
    for (std::size_t s = 1; s <= half; ++s) {
        sum += ring[j - s].position - pj;
        sum += ring[j + s].position - pj;
    }
    return sum.norm() / (static_cast<double>(k) * pj.norm());
}

double ring_reflectance_gradient(std::size_t j, std::span<const CalibratedPoint> ring, int m, int n) {
    if (m < 0 || n < 1 || j < static_cast<std::size_t>(m) || j + static_cast<std::size_t>(n) >= ring.size()) {
        throw Error(ErrorCode::InsufficientNeighbors, "reflectance gradient needs m left and n right neighbors");
    }
    double left = ring[j].reflectance;
    for (int s = 1; s <= m; ++s) {
        left += ring[j - static_cast<std::size_t>(s)].reflectance;
    }
    double right = 0.0;
    for (int s = 1; s <= n; ++s) {
        right += ring[j + static_cast<std::size_t>(s)].reflectance;
    }
    return std::abs(left / (m + 1) - right / n);
}

std::vector<FeatureLabel> classify_sweep(std::span<const CalibratedPoint> points, const FeatureConfig& config) {
    config.validate();
    std::vector<FeatureLabel> labels(points.size());

    for (const auto& idx : group_rings(points)) {
        std::vector<CalibratedPoint> ring;
        ring.reserve(idx.size());
        for (const auto i : idx) {
            ring.push_back(points[i]);
        }

        std::vector<std::size_t> smooth_ok;
        std::vector<std::size_t> grad_ok;
        for (std::size_t r = 0; r < ring.size(); ++r) {
            auto& label = labels[idx[r]];
            const std::size_t half = static_cast<std::size_t>(config.smoothness_k / 2);
            if (r >= half && r + half < ring.size()) {
                label.smoothness = smoothness(r, ring, config.smoothness_k);
                smooth_ok.push_back(r);
            }
            if (r >= static_cast<std::size_t>(config.left) && r + static_cast<std::size_t>(config.right) < ring.size()) {
                label.reflectance_gradient = ring_reflectance_gradient(r, ring, config.left, config.right);
                grad_ok.push_back(r);
            }
        }

        auto label_of = [&](std::size_t r) -> FeatureLabel& { return labels[idx[r]]; };
        auto azimuth = [&](std::size_t r) { return ring[r].azimuth_index; };

        // edges: largest smoothness first
        std::vector<std::size_t> order = smooth_ok;
        std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
            const double ca = label_of(a).smoothness, cb = label_of(b).smoothness;
            return ca != cb ? ca > cb : azimuth(a) < azimuth(b);
        });
        int taken = 0;
        for (const auto r : order) {
            if (taken >= config.budget.edge || label_of(r).smoothness < config.thresholds.edge) {
                break;
            }
            label_of(r).kind = FeatureKind::GeometricEdge;
            ++taken;
        }

        // reflectance edges among the remaining points: largest gradient first
        order = grad_ok;
        std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
            const double ga = label_of(a).reflectance_gradient, gb = label_of(b).reflectance_gradient;
            return ga != gb ? ga > gb : azimuth(a) < azimuth(b);
        });
        taken = 0;
        for (const auto r : order) {
            if (taken >= config.budget.reflectance || label_of(r).reflectance_gradient < config.thresholds.reflectance) {
                break;
            }
            if (label_of(r).kind != FeatureKind::None) {
                continue;
            }
            label_of(r).kind = FeatureKind::ReflectanceEdge;
            ++taken;
        }

        // planar: smallest smoothness first
        order = smooth_ok;
        std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
            const double ca = label_of(a).smoothness, cb = label_of(b).smoothness;
            return ca != cb ? ca < cb : azimuth(a) < azimuth(b);
        });
        taken = 0;
        for (const auto r : order) {
            if (taken >= config.budget.planar || label_of(r).smoothness > config.thresholds.planar) {
                break;
            }
            if (label_of(r).kind != FeatureKind::None) {
                continue;
            }
            label_of(r).kind = FeatureKind::GeometricPlanar;
            ++taken;
        }
    }
    return labels;
}

FeatureSummary summarize(std::span<const CalibratedPoint> points, std::span<const FeatureLabel> labels) {
    std::map<int, std::array<int, 4>> counts;
    for (std::size_t i = 0; i < points.size() && i < labels.size(); ++i) {
        auto& c = counts[points[i].ring];
        ++c[static_cast<std::size_t>(labels[i].kind)];
    }
    FeatureSummary out;
    for (const auto& [ring, c] : counts) {
        out.rings.push_back(ring);
        out.counts.push_back(c);
    }
    return out;
}

} // namespace lrsgs
