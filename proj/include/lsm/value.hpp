// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include <json.hpp>

namespace lsm {

enum class ValueType { Bool, Int64, Float64, Text, Enum, Vector3, Vector4, Matrix3 };

/// Declared kind of a variable, argument or return value.
///
/// Enumerations carry their admissible symbols; two enum kinds are equal only
/// if their symbol lists are equal.
struct ValueKind {
  ValueType type = ValueType::Text;
  std::vector<std::string> symbols;

  static ValueKind boolean() { return {ValueType::Bool, {}}; }
  static ValueKind int64() { return {ValueType::Int64, {}}; }
  static ValueKind float64() { return {ValueType::Float64, {}}; }
  static ValueKind text() { return {ValueType::Text, {}}; }
  static ValueKind vector3() { return {ValueType::Vector3, {}}; }
  static ValueKind vector4() { return {ValueType::Vector4, {}}; }
  static ValueKind matrix3() { return {ValueType::Matrix3, {}}; }
  static ValueKind enumeration(std::vector<std::string> symbols) {
    return {ValueType::Enum, std::move(symbols)};
  }

  /// "bool", "int64", "float64", "text", "enum", "float64[3]", "float64[4]", "float64[3x3]"
  std::string name() const;
  static ValueKind from_name(std::string_view name, std::vector<std::string> symbols = {});

  bool admits(std::string_view symbol) const;

  friend bool operator==(const ValueKind&, const ValueKind&) = default;
};

struct EnumSymbol {
  std::string symbol;
  friend bool operator==(const EnumSymbol&, const EnumSymbol&) = default;
};

class Value {
 public:
  using Storage = std::variant<bool, std::int64_t, double, std::string, EnumSymbol, Eigen::Vector3d,
                               Eigen::Vector4d, Eigen::Matrix3d>;

  Value() : data_(false) {}
  Value(bool v) : data_(v) {}
  Value(std::int64_t v) : data_(v) {}
  Value(int v) : data_(static_cast<std::int64_t>(v)) {}
  Value(double v) : data_(v) {}
  Value(std::string v) : data_(std::move(v)) {}
  Value(const char* v) : data_(std::string(v)) {}
  Value(EnumSymbol v) : data_(std::move(v)) {}
  Value(const Eigen::Vector3d& v) : data_(v) {}
  Value(const Eigen::Vector4d& v) : data_(v) {}
  Value(const Eigen::Matrix3d& v) : data_(v) {}

  ValueType type() const { return static_cast<ValueType>(data_.index()); }

  /// True when this value is an instance of `kind` (enum symbols checked).
  bool is(const ValueKind& kind) const;

  template <class T>
  const T& get() const {
    return std::get<T>(data_);
  }
  template <class T>
  const T* get_if() const {
    return std::get_if<T>(&data_);
  }
  const Storage& storage() const { return data_; }

  friend bool operator==(const Value& a, const Value& b);

 private:
  Storage data_;
};

using ValueMap = std::map<std::string, Value>;

struct Param {
  std::string name;
  ValueKind kind;
  friend bool operator==(const Param&, const Param&) = default;
};
using ParamList = std::vector<Param>;

/// Thrown when JSON cannot be turned into a value of the expected kind.
class ValueError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

nlohmann::json to_json(const Value& value);

/// Strict typed decoding. Integer literals are accepted for float kinds;
/// nothing else is converted.
Value value_from_json(const nlohmann::json& j, const ValueKind& kind);

/// Decoding without a kind hint: strings become Text, integer literals Int64,
/// arrays of 3/4 numbers vectors and 3x3 nested arrays matrices.
Value value_from_json(const nlohmann::json& j);

bool is_unit_quaternion(const Eigen::Vector4d& q, double tolerance = 1e-9);

/// Symmetric within `symmetry_tol` and smallest eigenvalue >= -psd_tol.
bool is_valid_covariance(const Eigen::Matrix3d& m, double symmetry_tol = 1e-12, double psd_tol = 1e-12);

inline Eigen::Vector4d identity_quaternion() { return {1.0, 0.0, 0.0, 0.0}; }

}  // namespace lsm
