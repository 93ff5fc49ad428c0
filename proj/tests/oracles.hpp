// SPDX-License-Identifier: Apache-2.0
// Reference implementations shared by the tests and the acceptance run.
#pragma once

#include "lsm/mqtt/codec.hpp"
#include "lsm/sim/spherical.hpp"

#include <boost/multiprecision/cpp_bin_float.hpp>
#include <boost/multiprecision/eigen.hpp>

#include <Eigen/Dense>

#include <cmath>
#include <random>
#include <regex>
#include <string>
#include <vector>

namespace lsm::test {

using namespace lsm::sim;
using namespace lsm::mqtt;

using Wide = boost::multiprecision::number<boost::multiprecision::cpp_bin_float<50>, boost::multiprecision::et_off>;

inline constexpr double kArcsec = 4.848e-6;

/// Covariance through a central-difference Jacobian evaluated in 50 digits.
inline Eigen::Matrix3d finite_difference_covariance(const SphericalReading<double>& r, const TrackerNoise<double>& n) {
  const Wide h("1e-7");
  const SphericalReading<Wide> base{Wide(r.distance), Wide(r.azimuth), Wide(r.elevation)};
  Matrix3<Wide> jac;
  for (int k = 0; k < 3; ++k) {
    auto plus = base, minus = base;
    Wide* p[] = {&plus.distance, &plus.azimuth, &plus.elevation};
    Wide* m[] = {&minus.distance, &minus.azimuth, &minus.elevation};
    *p[k] += h;
    *m[k] -= h;
    jac.col(k) = (spherical_to_cartesian(plus) - spherical_to_cartesian(minus)) / (2 * h);
  }
  const Vector3<Wide> var(Wide(n.sigma_distance) * n.sigma_distance, Wide(n.sigma_azimuth) * n.sigma_azimuth,
                          Wide(n.sigma_elevation) * n.sigma_elevation);
  const Matrix3<Wide> sigma = jac * var.asDiagonal() * jac.transpose();
  return sigma.cast<double>();
}

inline double relative_frobenius(const Eigen::Matrix3d& a, const Eigen::Matrix3d& reference) {
  return (a - reference).norm() / reference.norm();
}

inline SphericalReading<double> random_reading(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> distance(1.0, 50.0), azimuth(-M_PI, M_PI), elevation(-1.4, 1.4);
  return {distance(rng), azimuth(rng), elevation(rng)};
}

struct Generator {
  std::mt19937_64 rng;

  explicit Generator(std::uint64_t seed) : rng(seed) {}

  std::size_t below(std::size_t n) { return rng() % n; }
  bool coin() { return rng() % 2 == 0; }

  std::string text(std::size_t max_len = 12) {
    static const std::vector<std::string> pieces{"a", "b", "Z", "0", "_", "-", " ", "é", "中", "\xF0\x9F\x98\x80"};
    std::string s;
    for (auto n = below(max_len + 1); n > 0; --n) s += pieces[below(pieces.size())];
    return s;
  }

  std::string topic() {
    std::string t = "t" + text(4);
    for (auto n = below(4); n > 0; --n) t += "/" + text(4);
    return t;
  }

  std::string filter() {
    std::string f;
    const auto levels = 1 + below(4);
    for (std::size_t i = 0; i < levels; ++i) {
      if (i) f += "/";
      const auto r = below(5);
      if (r == 0) f += "+";
      else if (r == 1 && i + 1 == levels) f += "#";
      else f += "x" + text(3);
    }
    return f;
  }

  std::uint16_t packet_id() { return static_cast<std::uint16_t>(1 + below(65535)); }

  std::string payload() {
    std::string p(below(3) == 0 ? below(70000) : below(64), '\0');
    for (auto& c : p) c = static_cast<char>(rng());
    return p;
  }

  Packet packet() {
    switch (below(14)) {
      case 0: {
        Connect c;
        c.client_id = coin() ? "" : text();
        c.clean_session = c.client_id.empty() || coin();
        c.keep_alive = static_cast<std::uint16_t>(rng());
        if (coin()) c.will = Will{topic(), payload().substr(0, 100), std::uint8_t(below(3)), coin()};
        if (coin()) {
          c.username = text();
          if (coin()) c.password = payload().substr(0, 40);
        }
        return c;
      }
      case 1: return Connack{coin(), static_cast<ConnectReturn>(below(6))};
      case 2: {
        Publish p;
        p.topic = topic();
        p.payload = payload();
        p.qos = std::uint8_t(below(3));
        p.retain = coin();
        if (p.qos > 0) {
          p.dup = coin();
          p.packet_id = packet_id();
        }
        return p;
      }
      case 3: return Puback{packet_id()};
      case 4: return Pubrec{packet_id()};
      case 5: return Pubrel{packet_id()};
      case 6: return Pubcomp{packet_id()};
      case 7: {
        Subscribe s{packet_id(), {}};
        for (auto n = 1 + below(4); n > 0; --n) s.filters.emplace_back(filter(), std::uint8_t(below(3)));
        return s;
      }
      case 8: {
        Suback s{packet_id(), {}};
        for (auto n = 1 + below(4); n > 0; --n) s.codes.push_back(below(4) == 3 ? kSubackFailure : std::uint8_t(below(3)));
        return s;
      }
      case 9: {
        Unsubscribe u{packet_id(), {}};
        for (auto n = 1 + below(4); n > 0; --n) u.filters.push_back(filter());
        return u;
      }
      case 10: return Unsuback{packet_id()};
      case 11: return Pingreq{};
      case 12: return Pingresp{};
      default: return Disconnect{};
    }
  }
};

/// Reference matcher: translate the filter into a regular expression.
inline bool regex_matches(const std::string& filter, const std::string& topic) {
  if ((filter[0] == '+' || filter[0] == '#') && !topic.empty() && topic[0] == '$') return false;
  std::string pattern;
  std::size_t start = 0;
  bool first = true;
  while (true) {
    const auto slash = filter.find('/', start);
    const auto level = filter.substr(start, slash == std::string::npos ? std::string::npos : slash - start);
    if (level == "#") {
      pattern += first ? ".*" : "(/.*)?";
      break;
    }
    if (!first) pattern += "/";
    if (level == "+") {
      pattern += "[^/]*";
    } else {
      for (char c : level) {
        if (std::string("\\^$.|?*+()[]{}").find(c) != std::string::npos) pattern += '\\';
        pattern += c;
      }
    }
    first = false;
    if (slash == std::string::npos) break;
    start = slash + 1;
  }
  return std::regex_match(topic, std::regex(pattern));
}

}  // namespace lsm::test
