/*
 * Copyright 2026 The scan-sim Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

/**
 * @file  scan_core.hpp
 * @brief Reduction operations over INT32 vectors and reference inclusive /
 *        exclusive prefix scans.
 *
 * Reference scans fold strictly left to right in rank order. They are the
 * ground truth every offloaded and software algorithm is checked against.
 */

#ifndef SCANSIM_SCAN_CORE_HPP
#define SCANSIM_SCAN_CORE_HPP

#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "common.hpp"

namespace scansim {

/// Wire values are frozen (see docs/wire-format.md).
enum class OpKind : std::uint16_t { Sum = 0, Prod = 1, Max = 2, Min = 3 };
enum class DataType : std::uint16_t { Int32 = 0 };

enum class ScanErrc { LengthMismatch, DtypeMismatch, NotInvertible, EmptyInput, BadName };

class ScanError : public Error {
 public:
  ScanError(ScanErrc code, const std::string& what) : Error(what), code_(code) {}
  ScanErrc code() const noexcept { return code_; }

 private:
  ScanErrc code_;
};

inline std::string_view to_string(OpKind k) {
  switch (k) {
    case OpKind::Sum: return "sum";
    case OpKind::Prod: return "prod";
    case OpKind::Max: return "max";
    case OpKind::Min: return "min";
  }
  return "?";
}

inline OpKind parse_op(std::string_view s) {
  for (auto k : {OpKind::Sum, OpKind::Prod, OpKind::Max, OpKind::Min})
    if (to_string(k) == s) return k;
  throw ScanError(ScanErrc::BadName, "unknown reduction operation '" + std::string(s) + "'");
}

/// Elementwise combiner for one element type. INT32 SUM/PROD wrap mod 2^32.
template <class T>
struct Combiner;

template <>
struct Combiner<std::int32_t> {
  using T = std::int32_t;
  using U = std::uint32_t;

  static constexpr T apply(OpKind k, T a, T b) {
    switch (k) {
      case OpKind::Sum: return static_cast<T>(static_cast<U>(a) + static_cast<U>(b));
      case OpKind::Prod: return static_cast<T>(static_cast<U>(a) * static_cast<U>(b));
      case OpKind::Max: return a < b ? b : a;
      case OpKind::Min: return b < a ? b : a;
    }
    return a;
  }
  /// Solves apply(a, b) == c for b. Only meaningful for Sum.
  static constexpr T unapply(T c, T a) { return static_cast<T>(static_cast<U>(c) - static_cast<U>(a)); }

  static constexpr T identity(OpKind k) {
    switch (k) {
      case OpKind::Sum: return 0;
      case OpKind::Prod: return 1;
      case OpKind::Max: return std::numeric_limits<T>::min();
      case OpKind::Min: return std::numeric_limits<T>::max();
    }
    return 0;
  }
};

/// The binary operator plus its algebraic properties.
struct ReduceOp {
  OpKind kind = OpKind::Sum;

  /// PROD has zero divisors, MAX/MIN lose information: only SUM inverts.
  constexpr bool invertible() const { return kind == OpKind::Sum; }
  constexpr std::int32_t identity() const { return Combiner<std::int32_t>::identity(kind); }
  constexpr std::int32_t operator()(std::int32_t a, std::int32_t b) const {
    return Combiner<std::int32_t>::apply(kind, a, b);
  }
  friend constexpr bool operator==(ReduceOp, ReduceOp) = default;
};

/// A typed sequence of data elements.
struct Vector {
  DataType dtype = DataType::Int32;
  std::vector<std::int32_t> values;

  Vector() = default;
  explicit Vector(std::vector<std::int32_t> v, DataType t = DataType::Int32)
      : dtype(t), values(std::move(v)) {}
  Vector(std::initializer_list<std::int32_t> v) : values(v) {}

  std::size_t size() const noexcept { return values.size(); }
  bool empty() const noexcept { return values.empty(); }
  friend bool operator==(const Vector&, const Vector&) = default;
};

inline Vector identity_vector(ReduceOp op, std::size_t n, DataType t = DataType::Int32) {
  return Vector(std::vector<std::int32_t>(n, op.identity()), t);
}

namespace detail {
inline void check_compatible(const Vector& a, const Vector& b) {
  if (a.dtype != b.dtype) throw ScanError(ScanErrc::DtypeMismatch, "vector dtype mismatch");
  if (a.size() != b.size())
    throw ScanError(ScanErrc::LengthMismatch, "vector length mismatch: " + std::to_string(a.size()) +
                                                  " vs " + std::to_string(b.size()));
}
}  // namespace detail

/// Elementwise a (+) b; `a` is always the left operand.
inline Vector apply_op(ReduceOp op, const Vector& a, const Vector& b) {
  detail::check_compatible(a, b);
  Vector out;
  out.dtype = a.dtype;
  out.values.resize(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) out.values[i] = op(a.values[i], b.values[i]);
  return out;
}

/// Returns b such that apply_op(op, a, b) == c.
inline Vector unapply_op(ReduceOp op, const Vector& c, const Vector& a) {
  if (!op.invertible())
    throw ScanError(ScanErrc::NotInvertible,
                    "operation '" + std::string(to_string(op.kind)) + "' has no inverse");
  detail::check_compatible(c, a);
  Vector out;
  out.dtype = c.dtype;
  out.values.resize(c.size());
  for (std::size_t i = 0; i < c.size(); ++i)
    out.values[i] = Combiner<std::int32_t>::unapply(c.values[i], a.values[i]);
  return out;
}

namespace detail {
inline void check_inputs(std::span<const Vector> inputs) {
  if (inputs.empty()) throw ScanError(ScanErrc::EmptyInput, "scan over zero ranks");
  for (const auto& v : inputs) check_compatible(inputs.front(), v);
}
}  // namespace detail

/// output[j] = inputs[0] (+) ... (+) inputs[j], folded left to right.
inline std::vector<Vector> oracle_inclusive_scan(ReduceOp op, std::span<const Vector> inputs) {
  detail::check_inputs(inputs);
  std::vector<Vector> out;
  out.reserve(inputs.size());
  out.push_back(inputs[0]);
  for (std::size_t j = 1; j < inputs.size(); ++j) out.push_back(apply_op(op, out.back(), inputs[j]));
  return out;
}

/// output[0] is the identity; output[j] = inputs[0] (+) ... (+) inputs[j-1].
inline std::vector<Vector> oracle_exclusive_scan(ReduceOp op, std::span<const Vector> inputs) {
  detail::check_inputs(inputs);
  std::vector<Vector> out;
  out.reserve(inputs.size());
  out.push_back(identity_vector(op, inputs[0].size(), inputs[0].dtype));
  for (std::size_t j = 1; j < inputs.size(); ++j) out.push_back(apply_op(op, out.back(), inputs[j - 1]));
  return out;
}

}  // namespace scansim

#endif  // SCANSIM_SCAN_CORE_HPP
