// SPDX-License-Identifier: Apache-2.0
#include "lsm/value.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>

namespace lsm {

using nlohmann::json;

std::string ValueKind::name() const {
  switch (type) {
    case ValueType::Bool: return "bool";
    case ValueType::Int64: return "int64";
    case ValueType::Float64: return "float64";
    case ValueType::Text: return "text";
    case ValueType::Enum: return "enum";
    case ValueType::Vector3: return "float64[3]";
    case ValueType::Vector4: return "float64[4]";
    case ValueType::Matrix3: return "float64[3x3]";
  }
  return "unknown";
}

ValueKind ValueKind::from_name(std::string_view name, std::vector<std::string> symbols) {
  if (name == "bool") return boolean();
  if (name == "int64") return int64();
  if (name == "float64") return float64();
  if (name == "text") return text();
  if (name == "enum") return enumeration(std::move(symbols));
  if (name == "float64[3]") return vector3();
  if (name == "float64[4]") return vector4();
  if (name == "float64[3x3]") return matrix3();
  throw ValueError("unknown value kind '" + std::string(name) + "'");
}

bool ValueKind::admits(std::string_view symbol) const {
  return std::find(symbols.begin(), symbols.end(), symbol) != symbols.end();
}

bool Value::is(const ValueKind& kind) const {
  if (type() != kind.type) return false;
  if (kind.type == ValueType::Enum) return kind.admits(get<EnumSymbol>().symbol);
  return true;
}

bool operator==(const Value& a, const Value& b) {
  if (a.data_.index() != b.data_.index()) return false;
  return std::visit(
      [&](const auto& lhs) {
        using T = std::decay_t<decltype(lhs)>;
        const auto& rhs = std::get<T>(b.data_);
        if constexpr (std::is_base_of_v<Eigen::MatrixBase<T>, T>) {
          return lhs.cwiseEqual(rhs).all();
        } else {
          return lhs == rhs;
        }
      },
      a.data_);
}

namespace {

template <class Derived>
json matrix_rows(const Eigen::MatrixBase<Derived>& m) {
  json rows = json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    json row = json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    rows.push_back(std::move(row));
  }
  return rows;
}

double number(const json& j) {
  if (j.is_number_float()) return j.get<double>();
  if (j.is_number_integer()) return static_cast<double>(j.get<std::int64_t>());
  if (j.is_number_unsigned()) return static_cast<double>(j.get<std::uint64_t>());
  throw ValueError("expected a number, got " + std::string(j.type_name()));
}

template <int N>
Eigen::Matrix<double, N, 1> vector_from(const json& j) {
  if (!j.is_array() || j.size() != N)
    throw ValueError("expected an array of " + std::to_string(N) + " numbers");
  Eigen::Matrix<double, N, 1> v;
  for (int i = 0; i < N; ++i) v[i] = number(j[i]);
  return v;
}

Eigen::Matrix3d matrix_from(const json& j) {
  if (!j.is_array() || j.size() != 3) throw ValueError("expected a 3x3 nested array");
  Eigen::Matrix3d m;
  for (int r = 0; r < 3; ++r) m.row(r) = vector_from<3>(j[r]).transpose();
  return m;
}

bool all_numbers(const json& j) {
  return std::all_of(j.begin(), j.end(), [](const json& e) { return e.is_number(); });
}

}  // namespace

json to_json(const Value& value) {
  return std::visit(
      [](const auto& v) -> json {
        using T = std::decay_t<decltype(v)>;
        if constexpr (std::is_same_v<T, EnumSymbol>) {
          return v.symbol;
        } else if constexpr (std::is_same_v<T, Eigen::Matrix3d>) {
          return matrix_rows(v);
        } else if constexpr (std::is_base_of_v<Eigen::MatrixBase<T>, T>) {
          json arr = json::array();
          for (Eigen::Index i = 0; i < v.size(); ++i) arr.push_back(v[i]);
          return arr;
        } else {
          return v;
        }
      },
      value.storage());
}

Value value_from_json(const json& j, const ValueKind& kind) {
  switch (kind.type) {
    case ValueType::Bool:
      if (!j.is_boolean()) throw ValueError("expected bool");
      return j.get<bool>();
    case ValueType::Int64:
      if (j.is_number_integer()) return j.get<std::int64_t>();
      throw ValueError("expected int64");
    case ValueType::Float64:
      return number(j);
    case ValueType::Text:
      if (!j.is_string()) throw ValueError("expected text");
      return j.get<std::string>();
    case ValueType::Enum: {
      if (!j.is_string()) throw ValueError("expected enum symbol");
      auto symbol = j.get<std::string>();
      if (!kind.admits(symbol)) throw ValueError("'" + symbol + "' is not an admissible symbol");
      return EnumSymbol{std::move(symbol)};
    }
    case ValueType::Vector3: return Eigen::Vector3d(vector_from<3>(j));
    case ValueType::Vector4: return Eigen::Vector4d(vector_from<4>(j));
    case ValueType::Matrix3: return matrix_from(j);
  }
  throw ValueError("unsupported kind");
}

Value value_from_json(const json& j) {
  if (j.is_boolean()) return j.get<bool>();
  if (j.is_number_integer()) return j.get<std::int64_t>();
  if (j.is_number_float()) return j.get<double>();
  if (j.is_string()) return j.get<std::string>();
  if (j.is_array()) {
    if (j.size() == 3 && j[0].is_array()) return matrix_from(j);
    if (all_numbers(j)) {
      if (j.size() == 3) return Eigen::Vector3d(vector_from<3>(j));
      if (j.size() == 4) return Eigen::Vector4d(vector_from<4>(j));
    }
  }
  throw ValueError("JSON " + std::string(j.type_name()) + " is not a value");
}

bool is_unit_quaternion(const Eigen::Vector4d& q, double tolerance) {
  return q.allFinite() && std::abs(q.norm() - 1.0) <= tolerance;
}

bool is_valid_covariance(const Eigen::Matrix3d& m, double symmetry_tol, double psd_tol) {
  if (!m.allFinite()) return false;
  if ((m - m.transpose()).cwiseAbs().maxCoeff() > symmetry_tol) return false;
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> solver(m, Eigen::EigenvaluesOnly);
  return solver.eigenvalues().minCoeff() >= -psd_tol;
}

}  // namespace lsm
