#include "threedpm/geom.hpp"

#include <algorithm>
#include <numbers>

#include "threedpm/errors.hpp"

namespace threedpm::geom {

Vec3 normalized(const Vec3& a) {
    const double n = norm(a);
    if (!(n > 0.0)) throw DomainError("cannot normalize a zero vector");
    return a * (1.0 / n);
}

RotationMatrix RotationMatrix::operator*(const RotationMatrix& o) const {
    std::array<double, 9> r{};
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) {
            double s = 0.0;
            for (int k = 0; k < 3; ++k) s += (*this)(i, k) * o(k, j);
            r[3 * i + j] = s;
        }
    return RotationMatrix(r);
}

Vec3 RotationMatrix::operator*(const Vec3& v) const {
    return {m_[0] * v.x + m_[1] * v.y + m_[2] * v.z, m_[3] * v.x + m_[4] * v.y + m_[5] * v.z,
            m_[6] * v.x + m_[7] * v.y + m_[8] * v.z};
}

RotationMatrix RotationMatrix::transpose() const {
    return RotationMatrix({m_[0], m_[3], m_[6], m_[1], m_[4], m_[7], m_[2], m_[5], m_[8]});
}

double RotationMatrix::determinant() const {
    return m_[0] * (m_[4] * m_[8] - m_[5] * m_[7]) - m_[1] * (m_[3] * m_[8] - m_[5] * m_[6]) +
           m_[2] * (m_[3] * m_[7] - m_[4] * m_[6]);
}

RotationMatrix rot_x(double a) {
    const double c = std::cos(a), s = std::sin(a);
    return RotationMatrix({1, 0, 0, 0, c, -s, 0, s, c});
}

RotationMatrix rot_y(double a) {
    const double c = std::cos(a), s = std::sin(a);
    return RotationMatrix({c, 0, s, 0, 1, 0, -s, 0, c});
}

RotationMatrix rot_z(double a) {
    const double c = std::cos(a), s = std::sin(a);
    return RotationMatrix({c, -s, 0, s, c, 0, 0, 0, 1});
}

RotationMatrix euler_zyx(double yaw, double pitch, double roll) {
    return rot_z(yaw) * rot_y(pitch) * rot_x(roll);
}

RotationMatrix euler_zyx_inverse(double yaw, double pitch, double roll) {
    return rot_x(-roll) * rot_y(-pitch) * rot_z(-yaw);
}

OrthonormalityError so3_error(const RotationMatrix& r) {
    const RotationMatrix p = r.transpose() * r;
    double worst = 0.0;
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) worst = std::max(worst, std::abs(p(i, j) - (i == j ? 1.0 : 0.0)));
    return {worst, std::abs(r.determinant() - 1.0)};
}

SphericalBasis spherical_basis(double theta, double psi) {
    const double ct = std::cos(theta), st = std::sin(theta);
    const double cp = std::cos(psi), sp = std::sin(psi);
    return {{ct * cp, ct * sp, st}, {-sp, cp, 0.0}, {-st * cp, -st * sp, ct}};
}

LinkGeometry link_geometry(const Pose& tx, const Pose& rx) {
    const Vec3 off = rx.position - tx.position;
    const double d = norm(off);
    if (!(d > 0.0)) throw DomainError("link_geometry: transmitter and receiver positions coincide");
    return {d, off.x, off.y, off.z, std::atan(off.z / d), std::atan(off.y / d)};
}

BodyAngles body_angles(const RotationMatrix& orientation, const Vec3& direction) {
    const Vec3 b = orientation.transpose() * normalized(direction);
    const double z = std::clamp(b.z, -1.0, 1.0);
    return {std::asin(z), std::atan2(b.y, b.x), std::acos(z)};
}

ElevationSupport elevation_support(double dz, double d_min, double d_max) {
    if (!(d_min > 0.0) || !(d_max > d_min)) throw DomainError("elevation support needs 0 < d_min < d_max");
    return {std::atan(dz / d_max), std::atan(dz / d_min)};
}

double elevation_pdf(double phi_theta, double dz, double d_min, double d_max) {
    if (!(d_min > 0.0) || !(d_max > d_min)) throw DomainError("elevation_pdf needs 0 < d_min < d_max");
    const double s = std::sin(phi_theta);
    if (s == 0.0) throw DomainError("elevation_pdf: csc is singular at phi = 0");
    return dz / (d_max - d_min) / (s * s);
}

double wrap_pi(double a) {
    constexpr double two_pi = 2.0 * std::numbers::pi;
    a = std::fmod(a, two_pi);
    if (a <= -std::numbers::pi) a += two_pi;
    if (a > std::numbers::pi) a -= two_pi;
    return a;
}

double angular_distance(double a, double b) { return std::abs(wrap_pi(a - b)); }

}  // namespace threedpm::geom
