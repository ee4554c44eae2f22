#include "i2s/rotation.hpp"

#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>

namespace i2s {
namespace {

double wrap_angle(double a) {
  // [-pi, pi)
  a = std::remainder(a, 2.0 * std::numbers::pi);
  if (a >= std::numbers::pi) a -= 2.0 * std::numbers::pi;
  return a;
}

}  // namespace

Rotation Rotation::from_quaternion(double w, double x, double y, double z) {
  const double n = std::sqrt(w * w + x * x + y * y + z * z);
  if (!std::isfinite(n) || n == 0.0) {
    throw std::invalid_argument("quaternion must be finite and nonzero");
  }
  // already-unit input is kept bit-exact so stored rotations reload unchanged
  Rotation r = std::abs(n - 1.0) <= 4 * std::numeric_limits<double>::epsilon() ? Rotation(w, x, y, z)
                                                                                 : Rotation(w / n, x / n, y / n, z / n);
  r.canonicalize();
  return r;
}

void Rotation::canonicalize() {
  // first nonzero component (in w, x, y, z order) made positive
  const double comps[4] = {w_, x_, y_, z_};
  for (double c : comps) {
    if (c > 0.0) return;
    if (c < 0.0) {
      w_ = -w_;
      x_ = -x_;
      y_ = -y_;
      z_ = -z_;
      return;
    }
  }
}

Rotation Rotation::from_matrix(const Mat3& m) {
  // Shepperd: pivot on the largest of trace and diagonal
  const double tr = m.trace();
  double w, x, y, z;
  if (tr >= m(0, 0) && tr >= m(1, 1) && tr >= m(2, 2)) {
    const double s = 2.0 * std::sqrt(1.0 + tr);
    w = 0.25 * s;
    x = (m(2, 1) - m(1, 2)) / s;
    y = (m(0, 2) - m(2, 0)) / s;
    z = (m(1, 0) - m(0, 1)) / s;
  } else if (m(0, 0) >= m(1, 1) && m(0, 0) >= m(2, 2)) {
    const double s = 2.0 * std::sqrt(1.0 + m(0, 0) - m(1, 1) - m(2, 2));
    w = (m(2, 1) - m(1, 2)) / s;
    x = 0.25 * s;
    y = (m(0, 1) + m(1, 0)) / s;
    z = (m(0, 2) + m(2, 0)) / s;
  } else if (m(1, 1) >= m(2, 2)) {
    const double s = 2.0 * std::sqrt(1.0 + m(1, 1) - m(0, 0) - m(2, 2));
    w = (m(0, 2) - m(2, 0)) / s;
    x = (m(0, 1) + m(1, 0)) / s;
    y = 0.25 * s;
    z = (m(1, 2) + m(2, 1)) / s;
  } else {
    const double s = 2.0 * std::sqrt(1.0 + m(2, 2) - m(0, 0) - m(1, 1));
    w = (m(1, 0) - m(0, 1)) / s;
    x = (m(0, 2) + m(2, 0)) / s;
    y = (m(1, 2) + m(2, 1)) / s;
    z = 0.25 * s;
  }
  return from_quaternion(w, x, y, z);
}

Rotation Rotation::from_axis_angle(const Vec3& axis, double angle) {
  const double n = axis.norm();
  if (!(n > 0.0)) throw std::invalid_argument("rotation axis must be nonzero");
  const double s = std::sin(0.5 * angle) / n;
  return from_quaternion(std::cos(0.5 * angle), axis.x() * s, axis.y() * s, axis.z() * s);
}

Rotation Rotation::from_zyz(double alpha, double beta, double gamma) {
  return rot_z(alpha) * rot_y(beta) * rot_z(gamma);
}

Rotation Rotation::from_xyx(const EulerXYX& e) {
  return rot_x(e.alpha) * rot_y(e.beta) * rot_x(e.gamma);
}

Mat3 Rotation::matrix() const {
  const double w = w_, x = x_, y = y_, z = z_;
  Mat3 m;
  m << 1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y),
      2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x),
      2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y);
  return m;
}

Rotation Rotation::inverse() const { return from_quaternion(w_, -x_, -y_, -z_); }

Vec3 Rotation::apply(const Vec3& v) const { return matrix() * v; }

double Rotation::angle() const {
  const double s = std::sqrt(x_ * x_ + y_ * y_ + z_ * z_);
  return 2.0 * std::atan2(s, std::abs(w_));
}

EulerZYZ Rotation::to_zyz() const {
  const Mat3 m = matrix();
  const double sb = std::hypot(m(0, 2), m(1, 2));
  EulerZYZ e;
  e.beta = std::atan2(sb, m(2, 2));
  if (sb < 1e-12) {
    e.alpha = std::atan2(-m(0, 1), m(1, 1));
    e.gamma = 0.0;
  } else {
    e.alpha = std::atan2(m(1, 2), m(0, 2));
    e.gamma = std::atan2(m(2, 1), -m(2, 0));
  }
  return e;
}

Rotation operator*(const Rotation& a, const Rotation& b) {
  return Rotation::from_quaternion(
      a.w_ * b.w_ - a.x_ * b.x_ - a.y_ * b.y_ - a.z_ * b.z_,
      a.w_ * b.x_ + a.x_ * b.w_ + a.y_ * b.z_ - a.z_ * b.y_,
      a.w_ * b.y_ - a.x_ * b.z_ + a.y_ * b.w_ + a.z_ * b.x_,
      a.w_ * b.z_ + a.x_ * b.y_ - a.y_ * b.x_ + a.z_ * b.w_);
}

Mat3 quat_to_matrix(const Rotation& r) { return r.matrix(); }

double geodesic_distance(const Rotation& r1, const Rotation& r2) {
  return (r1.inverse() * r2).angle();
}

double quaternion_similarity(const Rotation& r1, const Rotation& r2) {
  return std::abs(r1.w() * r2.w() + r1.x() * r2.x() + r1.y() * r2.y() + r1.z() * r2.z());
}

Rotation sample_uniform(std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  for (;;) {
    const double w = normal(rng), x = normal(rng), y = normal(rng), z = normal(rng);
    if (w * w + x * x + y * y + z * z > 1e-20) return Rotation::from_quaternion(w, x, y, z);
  }
}

EulerXYX to_euler_xyx(const Rotation& r) {
  const Mat3 m = r.matrix();
  const double sb = std::hypot(m(0, 1), m(0, 2));
  EulerXYX e;
  e.beta = std::atan2(sb, m(0, 0));
  if (sb < 1e-12) {
    e.alpha = wrap_angle(std::atan2(m(2, 1), m(1, 1)));
    e.gamma = 0.0;
  } else {
    e.alpha = wrap_angle(std::atan2(m(1, 0), -m(2, 0)));
    e.gamma = wrap_angle(std::atan2(m(0, 1), m(0, 2)));
  }
  return e;
}

}  // namespace i2s
