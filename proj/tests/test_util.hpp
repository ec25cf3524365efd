#pragma once

// Shared helpers for the test binaries: random geometry, rigid motions, and
// a self-cleaning temporary directory.

#include <array>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <unistd.h>
#include <vector>

#include "dilo/geometry.hpp"
#include "dilo/rng.hpp"

namespace testutil {

inline dilo::PointCloud random_cloud(dilo::CounterRng& rng, std::size_t v,
                                     double scale = 1.0) {
  dilo::PointCloud pc = dilo::PointCloud::zeros(v);
  for (double& x : pc.xyz) x = rng.next_uniform(-scale, scale);
  return pc;
}

inline std::vector<double> random_vec(dilo::CounterRng& rng, std::size_t n,
                                      double lo = -1.0, double hi = 1.0) {
  std::vector<double> out(n);
  for (double& x : out) x = rng.next_uniform(lo, hi);
  return out;
}

// Rotation about a random axis by a random angle (Rodrigues' formula).
inline std::array<double, 9> random_rotation(dilo::CounterRng& rng) {
  double ax = rng.next_normal(), ay = rng.next_normal(), az = rng.next_normal();
  double n = std::sqrt(ax * ax + ay * ay + az * az);
  if (n < 1e-12) {
    ax = 1.0;
    ay = az = 0.0;
    n = 1.0;
  }
  ax /= n;
  ay /= n;
  az /= n;
  const double th = rng.next_uniform(0.0, 6.2831853071795864769);
  const double c = std::cos(th), s = std::sin(th), t = 1.0 - c;
  return {c + t * ax * ax,      t * ax * ay - s * az, t * ax * az + s * ay,
          t * ax * ay + s * az, c + t * ay * ay,      t * ay * az - s * ax,
          t * ax * az - s * ay, t * ay * az + s * ax, c + t * az * az};
}

inline dilo::PointCloud apply_rigid(const dilo::PointCloud& x,
                                    const std::array<double, 9>& r,
                                    const std::array<double, 3>& t) {
  dilo::PointCloud y = dilo::PointCloud::zeros(x.V);
  for (std::size_t i = 0; i < x.V; ++i) {
    const double* p = x.point(i);
    double* q = y.point(i);
    for (int row = 0; row < 3; ++row) {
      q[row] = r[3 * row] * p[0] + r[3 * row + 1] * p[1] +
               r[3 * row + 2] * p[2] + t[row];
    }
  }
  return y;
}

inline bool bytes_equal(const std::vector<double>& a,
                        const std::vector<double>& b) {
  return a.size() == b.size() &&
         (a.empty() ||
          std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0);
}

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Unique temp directory removed (recursively) on scope exit.
struct TempDir {
  std::filesystem::path path;

  explicit TempDir(const std::string& tag) {
    static std::uint64_t counter = 0;
    const auto base = std::filesystem::temp_directory_path();
    path = base / ("dilo_" + tag + "_" + std::to_string(::getpid()) + "_" +
                   std::to_string(counter++));
    std::filesystem::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  std::string str() const { return path.string(); }
  std::string sub(const std::string& name) const {
    return (path / name).string();
  }
};

}  // namespace testutil
