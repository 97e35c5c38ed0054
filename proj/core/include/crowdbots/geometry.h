// Copyright 2026 The Crowdbots Authors
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

#ifndef CROWDBOTS_GEOMETRY_H_
#define CROWDBOTS_GEOMETRY_H_

#include <array>
#include <cmath>

namespace crowdbots {

struct Vec3 {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;

  friend constexpr Vec3 operator+(Vec3 a, Vec3 b) {
    return {a.x + b.x, a.y + b.y, a.z + b.z};
  }
  friend constexpr Vec3 operator-(Vec3 a, Vec3 b) {
    return {a.x - b.x, a.y - b.y, a.z - b.z};
  }
  friend constexpr Vec3 operator*(double s, Vec3 v) {
    return {s * v.x, s * v.y, s * v.z};
  }
  friend constexpr bool operator==(const Vec3&, const Vec3&) = default;
};

inline double dot(Vec3 a, Vec3 b) { return a.x * b.x + a.y * b.y + a.z * b.z; }
inline double norm(Vec3 v) { return std::sqrt(dot(v, v)); }
inline double horizontal_distance(Vec3 a, Vec3 b) {
  return std::hypot(a.x - b.x, a.y - b.y);
}

// Row-major 3x3 matrix.
struct Mat3 {
  std::array<double, 9> m{1, 0, 0, 0, 1, 0, 0, 0, 1};

  static Mat3 identity() { return {}; }
  static Mat3 zero() { return Mat3{{0, 0, 0, 0, 0, 0, 0, 0, 0}}; }

  double operator()(int r, int c) const { return m[3 * r + c]; }
  double& operator()(int r, int c) { return m[3 * r + c]; }

  Vec3 operator*(Vec3 v) const {
    return {m[0] * v.x + m[1] * v.y + m[2] * v.z,
            m[3] * v.x + m[4] * v.y + m[5] * v.z,
            m[6] * v.x + m[7] * v.y + m[8] * v.z};
  }
  Mat3 operator*(const Mat3& b) const {
    Mat3 r = zero();
    for (int i = 0; i < 3; ++i)
      for (int k = 0; k < 3; ++k) {
        const double a = m[3 * i + k];
        for (int j = 0; j < 3; ++j) r.m[3 * i + j] += a * b.m[3 * k + j];
      }
    return r;
  }
  Mat3 operator+(const Mat3& b) const {
    Mat3 r;
    for (int i = 0; i < 9; ++i) r.m[i] = m[i] + b.m[i];
    return r;
  }
  Mat3 scaled(double s) const {
    Mat3 r;
    for (int i = 0; i < 9; ++i) r.m[i] = s * m[i];
    return r;
  }
  Mat3 transposed() const {
    Mat3 r;
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) r.m[3 * j + i] = m[3 * i + j];
    return r;
  }
  friend bool operator==(const Mat3&, const Mat3&) = default;
};

// Cross-product matrix K with K v = axis x v.
inline Mat3 skew(Vec3 a) { return Mat3{{0, -a.z, a.y, a.z, 0, -a.x, -a.y, a.x, 0}}; }

inline Mat3 rot_z(double rad) {
  const double c = std::cos(rad), s = std::sin(rad);
  return Mat3{{c, -s, 0, s, c, 0, 0, 0, 1}};
}

inline Mat3 rot_y(double rad) {
  const double c = std::cos(rad), s = std::sin(rad);
  return Mat3{{c, 0, s, 0, 1, 0, -s, 0, c}};
}

// Rodrigues rotation about a unit axis.
inline Mat3 rot_axis(Vec3 axis, double rad) {
  const Mat3 k = skew(axis);
  return Mat3::identity() + k.scaled(std::sin(rad)) + (k * k).scaled(1.0 - std::cos(rad));
}

}  // namespace crowdbots

#endif  // CROWDBOTS_GEOMETRY_H_
