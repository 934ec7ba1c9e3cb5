#pragma once

#include <array>
#include <cmath>

namespace threedpm::geom {

struct Vec3 {
    double x = 0.0;
    double y = 0.0;
    double z = 0.0;

    constexpr Vec3 operator+(const Vec3& o) const { return {x + o.x, y + o.y, z + o.z}; }
    constexpr Vec3 operator-(const Vec3& o) const { return {x - o.x, y - o.y, z - o.z}; }
    constexpr Vec3 operator-() const { return {-x, -y, -z}; }
    constexpr Vec3 operator*(double s) const { return {x * s, y * s, z * s}; }
    constexpr bool operator==(const Vec3&) const = default;
};

constexpr double dot(const Vec3& a, const Vec3& b) { return a.x * b.x + a.y * b.y + a.z * b.z; }
constexpr Vec3 cross(const Vec3& a, const Vec3& b) {
    return {a.y * b.z - a.z * b.y, a.z * b.x - a.x * b.z, a.x * b.y - a.y * b.x};
}
inline double norm(const Vec3& a) { return std::sqrt(dot(a, a)); }
Vec3 normalized(const Vec3& a);

/// Row-major 3x3 rotation. Columns are the body axes expressed in the global frame.
class RotationMatrix {
public:
    constexpr RotationMatrix() : m_{1, 0, 0, 0, 1, 0, 0, 0, 1} {}
    explicit constexpr RotationMatrix(const std::array<double, 9>& m) : m_(m) {}

    static constexpr RotationMatrix identity() { return RotationMatrix(); }

    constexpr double operator()(int r, int c) const { return m_[3 * r + c]; }
    const std::array<double, 9>& data() const { return m_; }

    RotationMatrix operator*(const RotationMatrix& o) const;
    Vec3 operator*(const Vec3& v) const;
    RotationMatrix transpose() const;
    double determinant() const;

    /// Body axis i (0 = x, 1 = y, 2 = z) in global coordinates.
    Vec3 axis(int i) const { return {m_[i], m_[3 + i], m_[6 + i]}; }

private:
    std::array<double, 9> m_;
};

RotationMatrix rot_x(double angle);
RotationMatrix rot_y(double angle);
RotationMatrix rot_z(double angle);

/// Z-Y-X Euler sequence: Rz(yaw) * Ry(pitch) * Rx(roll).
RotationMatrix euler_zyx(double yaw, double pitch, double roll);

/// Inverse of euler_zyx built from negated angles in reversed axis order.
RotationMatrix euler_zyx_inverse(double yaw, double pitch, double roll);

/// Max-abs deviation of R^T R from identity and of det(R) from one.
struct OrthonormalityError {
    double orthogonality = 0.0;
    double determinant = 0.0;
};
OrthonormalityError so3_error(const RotationMatrix& r);

/// Local spherical frame at elevation theta and azimuth psi.
struct SphericalBasis {
    Vec3 radial;     // e_R
    Vec3 azimuthal;  // e_psi
    Vec3 polar;      // e_theta
};
SphericalBasis spherical_basis(double theta, double psi);

struct Pose {
    Vec3 position;
    RotationMatrix orientation;  // body -> global
};

struct LinkGeometry {
    double d = 0.0;  // full 3D separation [m]
    double dx = 0.0;
    double dy = 0.0;
    double dz = 0.0;
    double phi_theta = 0.0;  // arctan(dz / d)
    double phi_psi = 0.0;    // arctan(dy / d)
};

/// Offsets are rx.position - tx.position. Throws DomainError for coincident positions.
LinkGeometry link_geometry(const Pose& tx, const Pose& rx);

/// Elevation/azimuth of a global direction as seen in a pose's body frame.
struct BodyAngles {
    double elevation = 0.0;  // asin of the body-z component
    double azimuth = 0.0;    // atan2(body y, body x)
    double polar = 0.0;      // angle from the body z axis (dipole axis)
};
BodyAngles body_angles(const RotationMatrix& orientation, const Vec3& direction);

/// Normalizing interval of elevation_pdf: [atan(dz/d_max), atan(dz/d_min)].
struct ElevationSupport {
    double lower = 0.0;
    double upper = 0.0;
};
ElevationSupport elevation_support(double dz, double d_min, double d_max);

/// Density of the elevation angle induced by a uniform distance on [d_min, d_max]:
/// dz / (d_max - d_min) * csc^2(phi).
double elevation_pdf(double phi_theta, double dz, double d_min, double d_max);

/// Wraps an angle to (-pi, pi].
double wrap_pi(double angle);

/// Absolute angular distance on the circle, in [0, pi].
double angular_distance(double a, double b);

inline constexpr double deg_to_rad(double deg) { return deg * 0.017453292519943295769; }
inline constexpr double rad_to_deg(double rad) { return rad * 57.295779513082320877; }

}  // namespace threedpm::geom
