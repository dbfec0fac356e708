// Copyright 2026 The latentdp Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <cmath>

namespace latentdp {

// Forward-mode dual number a + b*eps, eps^2 = 0. Running a gradient kernel
// on Dual parameters seeded with tangent v yields the Hessian-vector
// product H v in the tangent part of the output.
struct Dual {
  double v = 0.0;
  double d = 0.0;

  constexpr Dual() = default;
  constexpr Dual(double value) : v(value) {}  // NOLINT(google-explicit-constructor)
  constexpr Dual(double value, double tangent) : v(value), d(tangent) {}

  constexpr Dual& operator+=(const Dual& o) { v += o.v; d += o.d; return *this; }
  constexpr Dual& operator-=(const Dual& o) { v -= o.v; d -= o.d; return *this; }
  constexpr Dual& operator*=(const Dual& o) { d = d * o.v + v * o.d; v *= o.v; return *this; }
};

constexpr Dual operator+(Dual a, const Dual& b) { return a += b; }
constexpr Dual operator-(Dual a, const Dual& b) { return a -= b; }
constexpr Dual operator*(Dual a, const Dual& b) { return a *= b; }
constexpr Dual operator-(const Dual& a) { return {-a.v, -a.d}; }
constexpr Dual operator/(const Dual& a, const Dual& b) {
  return {a.v / b.v, (a.d * b.v - a.v * b.d) / (b.v * b.v)};
}

inline Dual tanh(const Dual& a) {
  const double t = std::tanh(a.v);
  return {t, a.d * (1.0 - t * t)};
}
inline Dual exp(const Dual& a) {
  const double e = std::exp(a.v);
  return {e, a.d * e};
}

constexpr double value_of(double x) { return x; }
constexpr double value_of(const Dual& x) { return x.v; }

}  // namespace latentdp
