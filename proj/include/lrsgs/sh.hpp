#pragma once

#include "lrsgs/common.hpp"

#include <array>

namespace lrsgs {

inline constexpr int kMaxShDegree = 2;
inline constexpr int kMaxShCoeffs = (kMaxShDegree + 1) * (kMaxShDegree + 1);
inline constexpr double kShC0 = 0.28209479177387814;

/// RGB coefficient per basis function.
using ShCoeffs = std::array<Vec3, kMaxShCoeffs>;
using ShBasis = std::array<double, kMaxShCoeffs>;

inline ShCoeffs zero_sh() {
    ShCoeffs s;
    s.fill(Vec3::Zero());
    return s;
}

constexpr int sh_coeff_count(int degree) { return (degree + 1) * (degree + 1); }

/// Real SH basis (graphics sign convention) for a unit direction; entries past `degree` are zero.
ShBasis sh_basis(const Vec3& dir, int degree);

/// d basis_k / d dir for each k.
std::array<Vec3, kMaxShCoeffs> sh_basis_jacobian(const Vec3& dir, int degree);

/// Unclamped color: sum_k basis_k * coeff_k + 0.5.
Vec3 sh_color(const ShCoeffs& coeffs, const ShBasis& basis, int degree);

/// DC coefficient that reproduces `rgb` with all higher bands zero.
inline Vec3 sh_dc_from_rgb(const Vec3& rgb) { return (rgb.array() - 0.5).matrix() / kShC0; }

} // namespace lrsgs
