#pragma once

#include <Eigen/Core>
#include <random>

namespace i2s {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

/// XYX intrinsic Euler angles: R = X(alpha) * Y(beta) * X(gamma).
/// beta in [0, pi]; alpha, gamma in [-pi, pi).
struct EulerXYX {
  double alpha = 0.0;
  double beta = 0.0;
  double gamma = 0.0;
};

/// ZYZ Euler angles: R = Z(alpha) * Y(beta) * Z(gamma). Used internally by the
/// Wigner factorization and the grid constructions.
struct EulerZYZ {
  double alpha = 0.0;
  double beta = 0.0;
  double gamma = 0.0;
};

/// Element of SO(3) stored as a unit quaternion (w, x, y, z).
///
/// The double cover is identified: every constructor canonicalizes so that
/// w >= 0, with ties broken on x, then y, then z. Composition renormalizes.
class Rotation {
 public:
  Rotation() = default;  // identity

  /// Normalizes and canonicalizes; throws std::invalid_argument on a
  /// zero or non-finite quaternion.
  static Rotation from_quaternion(double w, double x, double y, double z);
  static Rotation from_matrix(const Mat3& m);
  static Rotation from_axis_angle(const Vec3& axis, double angle);
  static Rotation from_zyz(double alpha, double beta, double gamma);
  static Rotation from_xyx(const EulerXYX& e);

  static Rotation rot_x(double angle) { return from_axis_angle(Vec3::UnitX(), angle); }
  static Rotation rot_y(double angle) { return from_axis_angle(Vec3::UnitY(), angle); }
  static Rotation rot_z(double angle) { return from_axis_angle(Vec3::UnitZ(), angle); }

  double w() const { return w_; }
  double x() const { return x_; }
  double y() const { return y_; }
  double z() const { return z_; }

  Mat3 matrix() const;
  Rotation inverse() const;
  Vec3 apply(const Vec3& v) const;

  /// Rotation angle in [0, pi].
  double angle() const;

  EulerZYZ to_zyz() const;

  friend Rotation operator*(const Rotation& a, const Rotation& b);
  friend bool operator==(const Rotation& a, const Rotation& b) = default;

 private:
  Rotation(double w, double x, double y, double z) : w_(w), x_(x), y_(y), z_(z) {}
  void canonicalize();

  double w_ = 1.0;
  double x_ = 0.0;
  double y_ = 0.0;
  double z_ = 0.0;
};

Mat3 quat_to_matrix(const Rotation& r);

/// Angle of r1^-1 r2 in radians, in [0, pi].
double geodesic_distance(const Rotation& r1, const Rotation& r2);

/// |<q1, q2>|; monotone decreasing in geodesic distance. Used by grid searches.
double quaternion_similarity(const Rotation& r1, const Rotation& r2);

/// Haar-uniform sample (normalized 4D Gaussian).
Rotation sample_uniform(std::mt19937_64& rng);

/// Gimbal cases beta in {0, pi} set gamma = 0 and fold the rotation into alpha.
EulerXYX to_euler_xyx(const Rotation& r);

}  // namespace i2s
