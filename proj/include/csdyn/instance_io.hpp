#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>
#include <string>

#include <nlohmann/json.hpp>

#include "csdyn/model.hpp"

// Instance dump/load.
//
// Binary layout (little-endian; asserted at compile time):
//   magic "CSDI", u32 version = 1,
//   u64 seed, u64 trial, u64 M, u64 N, f64 rho, f64 sigma_omega,
//   f64 A[M*N] row-major, f64 x0[N], f64 omega[M], f64 y[M].
// Files ending in ".json" use an equivalent JSON container instead; that
// form is meant for small instances and debugging.

namespace csdyn {

static_assert(std::endian::native == std::endian::little,
              "instance files are defined little-endian");

namespace detail {

inline constexpr char kInstanceMagic[4] = {'C', 'S', 'D', 'I'};
inline constexpr std::uint32_t kInstanceVersion = 1;

template <class T>
void put(std::ostream& os, T v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <class T>
T get(std::istream& is) {
  T v{};
  is.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!is) throw std::runtime_error("instance file truncated");
  return v;
}

inline bool ends_with(const std::string& s, const std::string& suffix) {
  return s.size() >= suffix.size() &&
         s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

}  // namespace detail

inline void save_instance(const ProblemInstance& inst,
                          const std::string& path) {
  const auto m = static_cast<std::uint64_t>(inst.m());
  const auto n = static_cast<std::uint64_t>(inst.n());
  if (detail::ends_with(path, ".json")) {
    nlohmann::json j;
    j["seed"] = inst.seed;
    j["trial"] = inst.trial;
    j["M"] = m;
    j["N"] = n;
    j["rho"] = inst.rho;
    j["sigma_omega"] = inst.sigma_omega;
    auto dump = [](const auto& v) {
      return std::vector<double>(v.data(), v.data() + v.size());
    };
    Eigen::MatrixXd a_rowmajor = inst.A.transpose();  // column buffer = rows
    j["A"] = dump(a_rowmajor.reshaped());
    j["x0"] = dump(inst.x0);
    j["omega"] = dump(inst.omega);
    j["y"] = dump(inst.y);
    std::ofstream os(path);
    if (!os) throw std::runtime_error("cannot open " + path);
    os << j.dump(2) << '\n';
    return;
  }
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open " + path);
  os.write(detail::kInstanceMagic, 4);
  detail::put(os, detail::kInstanceVersion);
  detail::put(os, inst.seed);
  detail::put(os, inst.trial);
  detail::put(os, m);
  detail::put(os, n);
  detail::put(os, inst.rho);
  detail::put(os, inst.sigma_omega);
  for (Eigen::Index r = 0; r < inst.m(); ++r)
    for (Eigen::Index col = 0; col < inst.n(); ++col)
      detail::put(os, inst.A(r, col));
  os.write(reinterpret_cast<const char*>(inst.x0.data()),
           static_cast<std::streamsize>(sizeof(double) * n));
  os.write(reinterpret_cast<const char*>(inst.omega.data()),
           static_cast<std::streamsize>(sizeof(double) * m));
  os.write(reinterpret_cast<const char*>(inst.y.data()),
           static_cast<std::streamsize>(sizeof(double) * m));
  if (!os) throw std::runtime_error("write failed: " + path);
}

inline ProblemInstance load_instance(const std::string& path) {
  ProblemInstance inst;
  if (detail::ends_with(path, ".json")) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("cannot open " + path);
    nlohmann::json j = nlohmann::json::parse(is);
    const auto m = j.at("M").get<std::uint64_t>();
    const auto n = j.at("N").get<std::uint64_t>();
    inst.seed = j.at("seed").get<std::uint64_t>();
    inst.trial = j.at("trial").get<std::uint64_t>();
    inst.rho = j.at("rho").get<double>();
    inst.sigma_omega = j.at("sigma_omega").get<double>();
    const auto a = j.at("A").get<std::vector<double>>();
    if (a.size() != m * n) throw std::runtime_error("bad A size in " + path);
    inst.A.resize(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(n));
    for (std::uint64_t r = 0; r < m; ++r)
      for (std::uint64_t col = 0; col < n; ++col)
        inst.A(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(col)) =
            a[r * n + col];
    auto vec = [&](const char* key, std::uint64_t len) {
      auto v = j.at(key).get<std::vector<double>>();
      if (v.size() != len)
        throw std::runtime_error(std::string("bad ") + key + " in " + path);
      return Eigen::Map<const Vector>(v.data(),
                                      static_cast<Eigen::Index>(len))
          .eval();
    };
    inst.x0 = vec("x0", n);
    inst.omega = vec("omega", m);
    inst.y = vec("y", m);
  } else {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("cannot open " + path);
    char magic[4];
    is.read(magic, 4);
    if (!is || std::memcmp(magic, detail::kInstanceMagic, 4) != 0)
      throw std::runtime_error("not an instance file: " + path);
    if (detail::get<std::uint32_t>(is) != detail::kInstanceVersion)
      throw std::runtime_error("unsupported instance version in " + path);
    inst.seed = detail::get<std::uint64_t>(is);
    inst.trial = detail::get<std::uint64_t>(is);
    const auto m = detail::get<std::uint64_t>(is);
    const auto n = detail::get<std::uint64_t>(is);
    inst.rho = detail::get<double>(is);
    inst.sigma_omega = detail::get<double>(is);
    inst.A.resize(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(n));
    for (std::uint64_t r = 0; r < m; ++r)
      for (std::uint64_t col = 0; col < n; ++col)
        inst.A(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(col)) =
            detail::get<double>(is);
    auto vec = [&](std::uint64_t len) {
      Vector v(static_cast<Eigen::Index>(len));
      is.read(reinterpret_cast<char*>(v.data()),
              static_cast<std::streamsize>(sizeof(double) * len));
      if (!is) throw std::runtime_error("instance file truncated: " + path);
      return v;
    };
    inst.x0 = vec(n);
    inst.omega = vec(m);
    inst.y = vec(m);
  }
  inst.delta = static_cast<double>(inst.m()) / static_cast<double>(inst.n());
  inst.overdetermined = inst.delta >= 1.0;
  return inst;
}

}  // namespace csdyn
