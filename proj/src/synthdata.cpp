#include "dilo/synthdata.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "dilo/errors.hpp"
#include "dilo/mesh_io.hpp"
#include "json.hpp"

namespace dilo {

namespace {

constexpr double kPi = 3.14159265358979323846;

// Limb joint offsets in units of (torso_length, torso_radius, torso_radius).
constexpr double kJointX = 0.38, kJointY = 0.75, kJointZ = -0.45;
constexpr std::array<std::array<double, 2>, 4> kLimbSign{
    {{-1.0, -1.0}, {-1.0, 1.0}, {1.0, -1.0}, {1.0, 1.0}}};

}  // namespace

QuadrupedTemplate build_template(std::size_t v_target) {
  if (v_target < 50)
    throw ContractError("build_template: v_target " +
                        std::to_string(v_target) +
                        " too small to mesh 5 parts (need >= 50)");
  // Per part budget: R*S + 2 vertices; keep R near 4 and solve S.
  const double budget = static_cast<double>(v_target) / 5.0 - 2.0;
  std::size_t rings = budget < 12.0 ? 3 : 4;
  if (budget >= 40.0) rings = 4 + static_cast<std::size_t>((budget - 40.0) / 24.0);
  std::size_t segments = static_cast<std::size_t>(
      std::llround(budget / static_cast<double>(rings)));
  if (segments < 3) segments = 3;

  QuadrupedTemplate tpl;
  tpl.rings = rings;
  tpl.segments = segments;
  const std::size_t per_part = rings * segments + 2;
  tpl.V = 5 * per_part;
  tpl.local.reserve(tpl.V);
  tpl.part.reserve(tpl.V);
  for (int p = 0; p < 5; ++p) {
    for (std::size_t r = 0; r < rings; ++r) {
      const double along =
          static_cast<double>(r) / static_cast<double>(rings - 1);
      for (std::size_t s = 0; s < segments; ++s) {
        const double ang =
            2.0 * kPi * static_cast<double>(s) / static_cast<double>(segments);
        if (p == 0)
          tpl.local.push_back({along - 0.5, std::cos(ang), std::sin(ang)});
        else
          tpl.local.push_back({std::cos(ang), std::sin(ang), -along});
        tpl.part.push_back(p);
      }
    }
    if (p == 0) {
      tpl.local.push_back({-0.5, 0.0, 0.0});
      tpl.local.push_back({0.5, 0.0, 0.0});
    } else {
      tpl.local.push_back({0.0, 0.0, 0.0});
      tpl.local.push_back({0.0, 0.0, -1.0});
    }
    tpl.part.push_back(p);
    tpl.part.push_back(p);
  }
  // Faces: quad strips between rings plus cap fans, same for every part.
  const int R = static_cast<int>(rings), S = static_cast<int>(segments);
  for (int p = 0; p < 5; ++p) {
    const int base = p * static_cast<int>(per_part);
    auto vid = [&](int r, int s) { return base + r * S + (s % S); };
    for (int r = 0; r + 1 < R; ++r)
      for (int s = 0; s < S; ++s) {
        tpl.faces.push_back({vid(r, s), vid(r, s + 1), vid(r + 1, s + 1)});
        tpl.faces.push_back({vid(r, s), vid(r + 1, s + 1), vid(r + 1, s)});
      }
    const int c0 = base + R * S, c1 = base + R * S + 1;
    for (int s = 0; s < S; ++s) {
      tpl.faces.push_back({c0, vid(0, s + 1), vid(0, s)});
      tpl.faces.push_back({c1, vid(R - 1, s), vid(R - 1, s + 1)});
    }
  }
  return tpl;
}

PointCloud instantiate(const QuadrupedTemplate& tpl, const ShapeFactors& sf,
                       const DeformFactors& df) {
  auto in_range = [](double v, double lo, double hi) {
    return v >= lo && v <= hi;
  };
  if (!in_range(sf.torso_length, 0.8, 1.6) ||
      !in_range(sf.limb_length, 0.4, 1.0) ||
      !in_range(sf.torso_radius, 0.05, 0.25) ||
      !in_range(sf.limb_radius, 0.05, 0.25))
    throw ContractError(
        "instantiate: shape factors outside documented ranges "
        "(torso_length in [0.8,1.6], limb_length in [0.4,1.0], radii in "
        "[0.05,0.25])");
  for (double a : df.limb_angles)
    if (!(a >= -kPi / 2.0 && a <= kPi / 2.0))
      throw ContractError("instantiate: limb angle " + std::to_string(a) +
                          " outside [-pi/2, pi/2]");
  PointCloud out = PointCloud::zeros(tpl.V);
  double coss[4], sins[4], jx[4], jy[4], jz[4];
  for (int l = 0; l < 4; ++l) {
    coss[l] = std::cos(df.limb_angles[l]);
    sins[l] = std::sin(df.limb_angles[l]);
    jx[l] = kLimbSign[l][0] * kJointX * sf.torso_length;
    jy[l] = kLimbSign[l][1] * kJointY * sf.torso_radius;
    jz[l] = kJointZ * sf.torso_radius;
  }
  for (std::size_t i = 0; i < tpl.V; ++i) {
    const auto& u = tpl.local[i];
    double* p = out.point(i);
    const int part = tpl.part[i];
    if (part == 0) {
      p[0] = u[0] * sf.torso_length;
      p[1] = u[1] * sf.torso_radius;
      p[2] = u[2] * sf.torso_radius;
    } else {
      const int l = part - 1;
      const double lx = u[0] * sf.limb_radius;
      const double ly = u[1] * sf.limb_radius;
      const double lz = u[2] * sf.limb_length;
      // rotation about the y (lateral) axis through the joint
      p[0] = jx[l] + coss[l] * lx + sins[l] * lz;
      p[1] = jy[l] + ly;
      p[2] = jz[l] - sins[l] * lx + coss[l] * lz;
    }
  }
  return out;
}

int deform_class(const DeformFactors& df) {
  int c = 0, radix = 1;
  for (int l = 0; l < 4; ++l) {
    const double a = df.limb_angles[l];
    const int bin = a < -kPi / 6.0 ? 0 : (a <= kPi / 6.0 ? 1 : 2);
    c += bin * radix;
    radix *= 3;
  }
  return c;
}

ShapeFactors sample_shape(CounterRng& rng) {
  ShapeFactors sf;
  sf.torso_length = rng.next_uniform(0.8, 1.6);
  sf.torso_radius = rng.next_uniform(0.10, 0.25);
  sf.limb_length = rng.next_uniform(0.4, 1.0);
  sf.limb_radius = rng.next_uniform(0.05, 0.12);
  return sf;
}

DeformFactors sample_deform(CounterRng& rng) {
  DeformFactors df;
  for (int l = 0; l < 4; ++l)
    df.limb_angles[l] = rng.next_uniform(-kPi / 2.0, kPi / 2.0);
  return df;
}

namespace {

std::string zpad(std::size_t n) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%03zu", n);
  return buf;
}

}  // namespace

void generate_dataset(std::size_t n_groups, std::size_t n_deforms,
                      std::uint64_t seed, const std::string& out_dir,
                      std::size_t v_target, bool force, std::size_t n_pairs) {
  namespace fs = std::filesystem;
  if (n_groups < 2 || n_deforms < 2)
    throw ConfigError("generate_dataset: need at least 2 groups and 2 deforms");
  if (fs::exists(out_dir) && !fs::is_empty(out_dir) && !force)
    throw IoError("output dir " + out_dir +
                  " is not empty (use --force to overwrite)");
  fs::create_directories(fs::path(out_dir) / "obj");

  const QuadrupedTemplate tpl = build_template(v_target);
  const std::size_t tg = std::max<std::size_t>(2, n_groups / 2);
  const std::size_t td = std::max<std::size_t>(2, n_deforms / 4);

  CounterRng rng_shape(seed, "shape/train"), rng_shape_t(seed, "shape/test");
  CounterRng rng_def(seed, "deform/train"), rng_def_t(seed, "deform/test");
  std::vector<ShapeFactors> shapes, shapes_t;
  std::vector<DeformFactors> pool, pool_t;
  for (std::size_t g = 0; g < n_groups; ++g) shapes.push_back(sample_shape(rng_shape));
  for (std::size_t g = 0; g < tg; ++g) shapes_t.push_back(sample_shape(rng_shape_t));
  for (std::size_t d = 0; d < n_deforms; ++d) pool.push_back(sample_deform(rng_def));
  for (std::size_t d = 0; d < td; ++d) pool_t.push_back(sample_deform(rng_def_t));

  nlohmann::json entries = nlohmann::json::array();
  auto emit = [&](const std::string& gid, const std::string& did,
                  const ShapeFactors& sf, const DeformFactors& df,
                  const std::string& split) {
    const std::string id = gid + "_" + did;
    const std::string rel = "obj/" + id + ".obj";
    Mesh mesh{instantiate(tpl, sf, df), tpl.faces};
    save_obj((fs::path(out_dir) / rel).string(), mesh);
    entries.push_back({{"id", id},
                       {"group", gid},
                       {"deform_class", deform_class(df)},
                       {"split", split},
                       {"path", rel}});
  };
  for (std::size_t g = 0; g < n_groups; ++g)
    for (std::size_t d = 0; d < n_deforms; ++d)
      emit("g" + zpad(g), "d" + zpad(d), shapes[g], pool[d], "train");
  for (std::size_t g = 0; g < tg; ++g)
    for (std::size_t d = 0; d < n_deforms; ++d)
      emit("tg" + zpad(g), "d" + zpad(d), shapes_t[g], pool[d],
           "test_unseen_identity");
  for (std::size_t g = 0; g < n_groups; ++g)
    for (std::size_t d = 0; d < td; ++d)
      emit("g" + zpad(g), "td" + zpad(d), shapes[g], pool_t[d],
           "test_unseen_deform");
  for (std::size_t g = 0; g < tg; ++g)
    for (std::size_t d = 0; d < td; ++d)
      emit("tg" + zpad(g), "td" + zpad(d), shapes_t[g], pool_t[d],
           "test_unseen_both");

  nlohmann::json manifest{{"V", tpl.V},
                          {"F", tpl.faces.size()},
                          {"seed", seed},
                          {"entries", entries}};
  std::ofstream mf(fs::path(out_dir) / "manifest.json");
  mf << manifest.dump(2) << "\n";

  // Transfer pairs over the unseen-identity grid: ground truth is the grid
  // instance combining the shape source's identity with the deform source's
  // pose.
  CounterRng rng_pairs(seed, "pairs");
  nlohmann::json pairs = nlohmann::json::array();
  for (std::size_t i = 0; i < n_pairs; ++i) {
    const std::size_t ga = rng_pairs.next_index(tg);
    std::size_t gb = rng_pairs.next_index(tg - 1);
    if (gb >= ga) ++gb;
    const std::size_t da = rng_pairs.next_index(n_deforms);
    std::size_t db = rng_pairs.next_index(n_deforms - 1);
    if (db >= da) ++db;
    pairs.push_back({{"shape_source", "tg" + zpad(ga) + "_d" + zpad(da)},
                     {"deform_source", "tg" + zpad(gb) + "_d" + zpad(db)},
                     {"ground_truth", "tg" + zpad(ga) + "_d" + zpad(db)}});
  }
  std::ofstream pf(fs::path(out_dir) / "transfer_pairs.json");
  pf << nlohmann::json{{"pairs", pairs}}.dump(2) << "\n";
}

}  // namespace dilo
