// Copyright 2026 The vggdrive-toy Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef VGGDRIVE__GEOMETRY_HPP_
#define VGGDRIVE__GEOMETRY_HPP_

#include <Eigen/Core>
#include <Eigen/LU>
#include <Eigen/SVD>

#include <array>
#include <cmath>
#include <cstddef>
#include <numbers>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "vggdrive/errors.hpp"

namespace vggdrive::geometry
{

using Mat3 = Eigen::Matrix<double, 3, 3, Eigen::RowMajor>;
using Mat4 = Eigen::Matrix<double, 4, 4, Eigen::RowMajor>;
using Vec3 = Eigen::Vector3d;
using CameraToken = std::array<double, 16>;

inline constexpr double kPivotThreshold = 1e-12;

struct ImageSize
{
  double width{0.0};
  double height{0.0};
};

/**
 * @brief One camera of the rig.
 *
 * `rotation` and `translation` follow the convention of the homogeneous
 * lidar->image composition: a lidar point p maps to camera coordinates
 * rotation^T (p - translation).
 */
struct CameraView
{
  Mat3 intrinsics{Mat3::Identity()};
  Mat3 rotation{Mat3::Identity()};
  Vec3 translation{Vec3::Zero()};
  ImageSize orig_size{1.0, 1.0};
  ImageSize target_size{1.0, 1.0};
};

struct CameraRig
{
  std::vector<CameraView> views;

  std::size_t size() const { return views.size(); }

  /// Orthonormal rotations with det +1, positive focal lengths and sizes.
  void validate() const
  {
    if (views.empty()) {
      throw ConfigError("camera rig has no views");
    }
    for (std::size_t c = 0; c < views.size(); ++c) {
      const auto & v = views[c];
      const std::string tag = "camera " + std::to_string(c) + ": ";
      const double ortho = (v.rotation.transpose() * v.rotation - Mat3::Identity()).cwiseAbs().maxCoeff();
      if (ortho > 1e-9 || std::abs(v.rotation.determinant() - 1.0) > 1e-9) {
        throw ConfigError(tag + "rotation is not a proper orthonormal matrix");
      }
      if (!(v.intrinsics(0, 0) > 0.0) || !(v.intrinsics(1, 1) > 0.0)) {
        throw ConfigError(tag + "focal lengths must be positive");
      }
      if (!(v.orig_size.width > 0.0) || !(v.orig_size.height > 0.0) ||
          !(v.target_size.width > 0.0) || !(v.target_size.height > 0.0))
      {
        throw ConfigError(tag + "image sizes must be positive");
      }
    }
  }
};

/// Gauss-Jordan inverse with partial pivoting; pivots below 1e-12 are singular.
template <int N>
Eigen::Matrix<double, N, N, Eigen::RowMajor> invert_pivoted(
  const Eigen::Matrix<double, N, N, Eigen::RowMajor> & m)
{
  Eigen::Matrix<double, N, N, Eigen::RowMajor> a = m;
  Eigen::Matrix<double, N, N, Eigen::RowMajor> inv =
    Eigen::Matrix<double, N, N, Eigen::RowMajor>::Identity();
  for (int col = 0; col < N; ++col) {
    int piv = col;
    for (int r = col + 1; r < N; ++r) {
      if (std::abs(a(r, col)) > std::abs(a(piv, col))) piv = r;
    }
    if (std::abs(a(piv, col)) < kPivotThreshold) {
      std::ostringstream os;
      os << "matrix is numerically singular: pivot " << std::abs(a(piv, col)) << " in column "
         << col << " below " << kPivotThreshold;
      throw NumericError(os.str());
    }
    if (piv != col) {
      a.row(piv).swap(a.row(col));
      inv.row(piv).swap(inv.row(col));
    }
    const double p = a(col, col);
    a.row(col) /= p;
    inv.row(col) /= p;
    for (int r = 0; r < N; ++r) {
      if (r == col) continue;
      const double f = a(r, col);
      if (f != 0.0) {
        a.row(r) -= f * a.row(col);
        inv.row(r) -= f * inv.row(col);
      }
    }
  }
  return inv;
}

/// Rescales the intrinsics from the original image size to the target size.
inline Mat3 scale_intrinsics(const Mat3 & k, ImageSize orig, ImageSize target)
{
  if (!(orig.width > 0.0) || !(orig.height > 0.0) || !(target.width > 0.0) ||
      !(target.height > 0.0))
  {
    throw ConfigError("scale_intrinsics: image sizes must be positive");
  }
  const double rw = target.width / orig.width;
  const double rh = target.height / orig.height;
  Mat3 out = k;
  out.row(0) *= rw;  // fx, skew, cx
  out.row(1) *= rh;  // fy, cy
  return out;
}

/**
 * @brief Homogeneous lidar->image matrix [[K,0],[0,1]] * [[R^T, -R^T t],[0,1]].
 *
 * The 3x3 intrinsics are embedded in a 4x4 identity before multiplying.
 */
inline Mat4 compose_lidar2img(const Mat3 & k, const Mat3 & r, const Vec3 & t)
{
  Eigen::JacobiSVD<Mat3> svd(k);
  const Vec3 sv = svd.singularValues();
  if (!(sv(2) > kPivotThreshold * std::max(1.0, sv(0)))) {
    std::ostringstream os;
    os << "intrinsic matrix is singular: singular values " << sv(0) << ", " << sv(1) << ", "
       << sv(2) << " (condition " << (sv(2) > 0.0 ? sv(0) / sv(2) : INFINITY) << ")";
    throw NumericError(os.str());
  }
  Mat4 k4 = Mat4::Identity();
  k4.topLeftCorner<3, 3>() = k;
  Mat4 ext = Mat4::Identity();
  ext.topLeftCorner<3, 3>() = r.transpose();
  ext.topRightCorner<3, 1>() = -(r.transpose() * t);
  return k4 * ext;
}

inline Mat4 lidar2img(const CameraRig & rig, std::size_t view)
{
  if (view >= rig.size()) {
    throw ConfigError("camera index " + std::to_string(view) + " outside rig");
  }
  const auto & v = rig.views[view];
  return compose_lidar2img(scale_intrinsics(v.intrinsics, v.orig_size, v.target_size), v.rotation,
                           v.translation);
}

/// Image homogeneous coordinates -> lidar coordinates, the exact inverse of lidar2img.
inline Mat4 img2lidar(const CameraRig & rig, std::size_t view)
{
  return invert_pivoted<4>(lidar2img(rig, view));
}

/// Row-major flatten of a 4x4 transform.
inline CameraToken camera_token(const Mat4 & t)
{
  CameraToken out{};
  for (int r = 0; r < 4; ++r)
    for (int c = 0; c < 4; ++c) out[static_cast<std::size_t>(r * 4 + c)] = t(r, c);
  return out;
}

inline Mat4 camera_token_to_matrix(const CameraToken & tok)
{
  Mat4 t;
  for (int r = 0; r < 4; ++r)
    for (int c = 0; c < 4; ++c) t(r, c) = tok[static_cast<std::size_t>(r * 4 + c)];
  return t;
}

/// Camera tokens of every view, in view order.
inline std::vector<CameraToken> camera_tokens(const CameraRig & rig)
{
  std::vector<CameraToken> out;
  out.reserve(rig.size());
  for (std::size_t c = 0; c < rig.size(); ++c) out.push_back(camera_token(img2lidar(rig, c)));
  return out;
}

/// Camera orientation looking along lidar-frame heading `yaw` (x right, y down, z forward).
inline Mat3 yaw_rotation(double yaw)
{
  Mat3 r;
  const double s = std::sin(yaw), c = std::cos(yaw);
  r.col(0) = Vec3(s, -c, 0.0);
  r.col(1) = Vec3(0.0, 0.0, -1.0);
  r.col(2) = Vec3(c, s, 0.0);
  return r;
}

/// Horizontal angle (rad) of lidar point p off the optical axis of `view`.
inline double horizontal_angle(const CameraView & view, const Vec3 & p)
{
  const Vec3 cam = view.rotation.transpose() * (p - view.translation);
  return std::atan2(cam.x(), cam.z());
}

/// Evenly spaced surround rig: camera c looks along yaw 2*pi*c/C, mounted 0.5 m out at 1.5 m.
inline CameraRig default_surround_rig(std::size_t views)
{
  if (views == 0) {
    throw ConfigError("surround rig needs at least one view");
  }
  CameraRig rig;
  for (std::size_t c = 0; c < views; ++c) {
    const double yaw = 2.0 * std::numbers::pi * static_cast<double>(c) / static_cast<double>(views);
    CameraView v;
    v.intrinsics << 1266.4, 0.0, 816.3, 0.0, 1266.4, 491.5, 0.0, 0.0, 1.0;
    v.rotation = yaw_rotation(yaw);
    v.translation = Vec3(0.5 * std::cos(yaw), 0.5 * std::sin(yaw), 1.5);
    v.orig_size = {1600.0, 900.0};
    v.target_size = {448.0, 252.0};
    rig.views.push_back(v);
  }
  return rig;
}

// ---------------------------------------------------------------------------
// JSON: {"K": [9], "R": [9], "t": [3], "orig_size": [W,H], "target_size": [W,H]} per view.

inline nlohmann::json view_to_json(const CameraView & v)
{
  auto flat3 = [](const Mat3 & m) {
    std::vector<double> out;
    for (int r = 0; r < 3; ++r)
      for (int c = 0; c < 3; ++c) out.push_back(m(r, c));
    return out;
  };
  return {
    {"K", flat3(v.intrinsics)},
    {"R", flat3(v.rotation)},
    {"t", {v.translation.x(), v.translation.y(), v.translation.z()}},
    {"orig_size", {v.orig_size.width, v.orig_size.height}},
    {"target_size", {v.target_size.width, v.target_size.height}},
  };
}

inline CameraView view_from_json(const nlohmann::json & j)
{
  auto numbers = [&](const char * key, std::size_t n) {
    if (!j.contains(key) || !j.at(key).is_array() || j.at(key).size() != n) {
      throw ConfigError(std::string("camera entry needs '") + key + "' with " + std::to_string(n) +
                        " numbers");
    }
    return j.at(key).get<std::vector<double>>();
  };
  CameraView v;
  const auto k = numbers("K", 9);
  const auto r = numbers("R", 9);
  const auto t = numbers("t", 3);
  const auto o = numbers("orig_size", 2);
  const auto s = numbers("target_size", 2);
  for (int i = 0; i < 9; ++i) {
    v.intrinsics(i / 3, i % 3) = k[static_cast<std::size_t>(i)];
    v.rotation(i / 3, i % 3) = r[static_cast<std::size_t>(i)];
  }
  v.translation = Vec3(t[0], t[1], t[2]);
  v.orig_size = {o[0], o[1]};
  v.target_size = {s[0], s[1]};
  return v;
}

inline nlohmann::json rig_to_json(const CameraRig & rig)
{
  nlohmann::json views = nlohmann::json::array();
  for (const auto & v : rig.views) views.push_back(view_to_json(v));
  return {{"views", views}};
}

inline CameraRig rig_from_json(const nlohmann::json & j)
{
  if (!j.contains("views") || !j.at("views").is_array()) {
    throw ConfigError("rig config needs a 'views' array");
  }
  CameraRig rig;
  for (const auto & v : j.at("views")) rig.views.push_back(view_from_json(v));
  rig.validate();
  return rig;
}

}  // namespace vggdrive::geometry

#endif  // VGGDRIVE__GEOMETRY_HPP_
