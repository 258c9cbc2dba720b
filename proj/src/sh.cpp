#include "lrsgs/sh.hpp"

namespace lrsgs {

namespace {

constexpr double kC1 = 0.4886025119029199;
constexpr double kC2[] = {1.0925484305920792, -1.0925484305920792, 0.31539156525252005, -1.0925484305920792,
                          0.5462742152960396};

} // namespace

ShBasis sh_basis(const Vec3& d, int degree) {
    ShBasis b{};
    b[0] = kShC0;
    if (degree < 1) {
        return b;
    }
    const double x = d.x(), y = d.y(), z = d.z();
    b[1] = -kC1 * y;
    b[2] = kC1 * z;
    b[3] = -kC1 * x;
    if (degree < 2) {
        return b;
    }
    b[4] = kC2[0] * x * y;
    b[5] = kC2[1] * y * z;
    b[6] = kC2[2] * (2.0 * z * z - x * x - y * y);
    b[7] = kC2[3] * x * z;
    b[8] = kC2[4] * (x * x - y * y);
    return b;
}

std::array<Vec3, kMaxShCoeffs> sh_basis_jacobian(const Vec3& d, int degree) {
    std::array<Vec3, kMaxShCoeffs> j;
    j.fill(Vec3::Zero());
    if (degree < 1) {
        return j;
    }
    const double x = d.x(), y = d.y(), z = d.z();
    j[1] = Vec3(0.0, -kC1, 0.0);
    j[2] = Vec3(0.0, 0.0, kC1);
    j[3] = Vec3(-kC1, 0.0, 0.0);
    if (degree < 2) {
        return j;
    }
    j[4] = kC2[0] * Vec3(y, x, 0.0);
    j[5] = kC2[1] * Vec3(0.0, z, y);
    j[6] = kC2[2] * Vec3(-2.0 * x, -2.0 * y, 4.0 * z);
    j[7] = kC2[3] * Vec3(z, 0.0, x);
    j[8] = kC2[4] * Vec3(2.0 * x, -2.0 * y, 0.0);
    return j;
}

Vec3 sh_color(const ShCoeffs& coeffs, const ShBasis& basis, int degree) {
    Vec3 c = Vec3::Constant(0.5);
    const int n = sh_coeff_count(degree);
    for (int k = 0; k < n; ++k) {
        c += basis[static_cast<std::size_t>(k)] * coeffs[static_cast<std::size_t>(k)];
    }
    return c;
}

} // namespace lrsgs
