#pragma once

#include <charconv>
#include <fstream>
#include <sstream>
#include <string>
#include <system_error>

#include "fcmrdpa/model.hpp"

namespace fcmrdpa {

// Model files are line-oriented key/value text. Floats are written as C99
// hex-floats so a save/load round trip is exact at the bit level.

namespace detail {

inline std::string hex_float(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v,
                                 std::chars_format::hex);
  return std::string(buf, res.ptr);
}

inline double parse_hex_float(const std::string& tok) {
  double v = 0.0;
  std::string_view sv = tok;
  bool negative = false;
  if (!sv.empty() && (sv.front() == '-' || sv.front() == '+')) {
    negative = sv.front() == '-';
    sv.remove_prefix(1);
  }
  const auto res =
      std::from_chars(sv.data(), sv.data() + sv.size(), v,
                      std::chars_format::hex);
  if (res.ec != std::errc() || res.ptr != sv.data() + sv.size())
    throw std::runtime_error("model file: bad float token '" + tok + "'");
  return negative ? -v : v;
}

inline void write_matrix(std::ostream& os, const std::string& name,
                         const Matrix& m) {
  os << name << '\n';
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) {
      if (c) os << ' ';
      os << hex_float(m(r, c));
    }
    os << '\n';
  }
}

inline void expect_line(std::istream& is, const std::string& want) {
  std::string line;
  if (!std::getline(is, line) || line != want)
    throw std::runtime_error("model file: expected '" + want + "', got '" +
                             line + "'");
}

inline Matrix read_matrix(std::istream& is, const std::string& name,
                          Eigen::Index rows, Eigen::Index cols) {
  expect_line(is, name);
  Matrix m(rows, cols);
  std::string line;
  for (Eigen::Index r = 0; r < rows; ++r) {
    if (!std::getline(is, line))
      throw std::runtime_error("model file: truncated matrix " + name);
    std::istringstream ls(line);
    std::string tok;
    for (Eigen::Index c = 0; c < cols; ++c) {
      if (!(ls >> tok))
        throw std::runtime_error("model file: short row in " + name);
      m(r, c) = parse_hex_float(tok);
    }
    if (ls >> tok)
      throw std::runtime_error("model file: long row in " + name);
  }
  return m;
}

inline long read_keyed_int(std::istream& is, const std::string& key) {
  std::string line;
  if (!std::getline(is, line))
    throw std::runtime_error("model file: missing '" + key + "'");
  std::istringstream ls(line);
  std::string k;
  long v = 0;
  if (!(ls >> k >> v) || k != key)
    throw std::runtime_error("model file: expected '" + key + "', got '" +
                             line + "'");
  return v;
}

}  // namespace detail

inline constexpr const char* kModelMagic = "fcm-rdpa-model v1";

inline void save_model(std::ostream& os, const TskModel& model) {
  os << kModelMagic << '\n';
  os << "rules " << model.rules() << '\n';
  os << "antecedent_dim " << model.antecedent_dim() << '\n';
  os << "consequent_dim " << model.consequent_dim() << '\n';
  detail::write_matrix(os, "centers", model.centers);
  detail::write_matrix(os, "sigmas", model.sigmas);
  detail::write_matrix(os, "weights", model.weights);
}

inline void save_model(const std::string& path, const TskModel& model) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot open for write: " + path);
  save_model(os, model);
  os << "end\n";
  if (!os) throw std::runtime_error("write failed: " + path);
}

inline TskModel load_tsk_model(std::istream& is) {
  detail::expect_line(is, kModelMagic);
  const long rules = detail::read_keyed_int(is, "rules");
  const long ant = detail::read_keyed_int(is, "antecedent_dim");
  const long con = detail::read_keyed_int(is, "consequent_dim");
  if (rules < 1 || ant < 1 || con < 1)
    throw std::runtime_error("model file: bad dimensions");
  TskModel m;
  m.centers = detail::read_matrix(is, "centers", rules, ant);
  m.sigmas = detail::read_matrix(is, "sigmas", rules, ant);
  m.weights = detail::read_matrix(is, "weights", rules, con + 1);
  return m;
}

inline TskModel load_tsk_model(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open: " + path);
  return load_tsk_model(is);
}

}  // namespace fcmrdpa
