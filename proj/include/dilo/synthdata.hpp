#pragma once

#include <array>
#include <cstdint>
#include <string>

#include "dilo/geometry.hpp"
#include "dilo/rng.hpp"

namespace dilo {

// Identity factors: per-part scale of the procedural quadruped.
// Valid ranges: torso_length in [0.8, 1.6], limb_length in [0.4, 1.0],
// both radii in [0.05, 0.25]; instantiate() rejects anything outside.
struct ShapeFactors {
  double torso_length = 1.2;
  double torso_radius = 0.15;
  double limb_length = 0.7;
  double limb_radius = 0.08;
};

// Pose factors: swing angle of each limb about the lateral axis, radians in
// [-pi/2, pi/2]. Order: back-left, front-left, back-right, front-right.
struct DeformFactors {
  std::array<double, 4> limb_angles{0.0, 0.0, 0.0, 0.0};
};

// Fixed-topology template: five capped cylinders (torso + 4 limbs) with
// `rings` rings of `segments` vertices plus two cap centers per part, in
// normalized per-part coordinates. Vertex order, part labels and faces are
// identical for every instance.
struct QuadrupedTemplate {
  std::size_t V = 0;
  std::size_t rings = 0, segments = 0;
  std::vector<std::array<double, 3>> local;  // normalized part-frame coords
  std::vector<int> part;                     // 0 = torso, 1..4 = limbs
  std::vector<std::array<int, 3>> faces;
};

// Chooses ring/segment counts so V approaches v_target (exactly 5*(R*S+2)).
// v_target < 50 cannot mesh five parts and raises ContractError.
QuadrupedTemplate build_template(std::size_t v_target);

// Exact analytic embedding: per-part scaling by the shape factors, then each
// limb rigidly rotated about its hip/shoulder joint by its angle. Bitwise
// deterministic; out-of-range factors raise ContractError.
PointCloud instantiate(const QuadrupedTemplate& tpl, const ShapeFactors& sf,
                       const DeformFactors& df);

// Ground-truth pose label: each angle binned into 3 equal bins over
// [-pi/2, pi/2], mixed-radix combined to 0..80.
int deform_class(const DeformFactors& df);

ShapeFactors sample_shape(CounterRng& rng);
DeformFactors sample_deform(CounterRng& rng);

// Writes OBJ instances plus manifest.json and transfer_pairs.json under
// out_dir. Instances form grids: n_groups x n_deforms train, plus held-out
// test grids (fresh identities with the seen pose pool, seen identities with
// a fresh pose pool, and fresh x fresh), so every split keeps exact
// analytic ground truth for cross-instance transfer. Refuses a non-empty
// out_dir unless force.
void generate_dataset(std::size_t n_groups, std::size_t n_deforms,
                      std::uint64_t seed, const std::string& out_dir,
                      std::size_t v_target = 128, bool force = false,
                      std::size_t n_pairs = 100);

}  // namespace dilo
