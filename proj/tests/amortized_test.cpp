// Stage-2 amortized inference: the anchored objective (MSE convention over
// code dimensions), its gradients, freezing of the stage-1 targets, the
// from-scratch ablation, and bit-exact training determinism.
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <numeric>
#include <string>
#include <vector>

#include "dilo/config.hpp"
#include "dilo/dataset.hpp"
#include "dilo/errors.hpp"
#include "dilo/geometry.hpp"
#include "dilo/gradcheck.hpp"
#include "dilo/nets.hpp"
#include "dilo/ops.hpp"
#include "dilo/rng.hpp"
#include "dilo/stage1.hpp"
#include "dilo/stage2.hpp"
#include "dilo/synthdata.hpp"
#include "test_util.hpp"

using namespace dilo;

namespace {

ModelConfig toy_model() {
  ModelConfig mc;
  mc.d_s = 4;
  mc.d_z = 4;
  mc.input_scale = 1.0;
  mc.gen.front_widths = {8};
  mc.gen.adain_widths = {8, 8};
  mc.gen.points_channels = 2;
  mc.gen.tail_widths = {8};
  mc.mod.hidden = 8;
  mc.enc.point_widths = {8, 8};
  mc.enc.head_widths = {8};
  mc.enc.feature_transform_at = 1;
  mc.enc.tnet_hidden = 4;
  return mc;
}

// Toy model with every symmetry broken so generated points do not coincide
// (the distance map is non-differentiable at coincident points).
Model spread_toy(std::uint64_t seed) {
  Model model = Model::build(toy_model(), 6, seed, /*with_encoders=*/true);
  CounterRng rng(seed, "test/spread");
  for (auto& p : model.params())
    for (std::size_t i = 0; i < p.tensor.size(); ++i)
      p.tensor.data()[i] += 0.2 * rng.next_normal();
  return model;
}

struct SmallData {
  testutil::TempDir dir{"amortized"};
  Dataset data;
  SmallData() {
    generate_dataset(2, 4, 99, dir.str(), 64, false, 4);
    data = load_dataset(dir.sub("manifest.json"));
  }
};

Checkpoint stage1_checkpoint(const Dataset& data, std::size_t epochs) {
  RunConfig cfg = default_config();
  cfg.seed = 7;
  cfg.stage1.epochs = epochs;
  Stage1Result r = train_stage1(data, cfg, false);
  Checkpoint ck;
  ck.kind = "stage1";
  ck.config = cfg;
  ck.V = data.V;
  ck.params = r.model.params();
  ck.adam = r.net_adam;
  ck.latents = r.latents;
  ck.params_hash = "0123456789abcdef";  // stands in for the saved-file hash
  return ck;
}

}  // namespace

TEST_CASE("code_mse is the mean over dimensions: [1,2] vs [1,0] -> 2") {
  Tensor pred = Tensor::from_data({2}, {1, 2});
  Tensor target = Tensor::from_data({2}, {1, 0});
  CHECK(code_mse(pred, target).item() == doctest::Approx(2.0).epsilon(1e-15));
  CHECK(code_mse(target, target).item() == 0.0);
  CHECK_THROWS_AS(code_mse(pred, Tensor::from_data({3}, {1, 0, 0})),
                  ContractError);
}

TEST_CASE("stage2 loss with all-zero weights is exactly zero") {
  Model model = spread_toy(61);
  CounterRng rng(62, "amo/zero");
  PointCloud x = testutil::random_cloud(rng, 6, 1.0);
  DistanceMatrix dm = pairwise(x);
  Stage2Config sc;
  sc.w_recon = sc.w_dis_z = sc.w_dis_s = 0.0;
  Tensor z_star = Tensor::zeros({4}), s_star = Tensor::zeros({4});
  rng.fill_normal(z_star.data(), 4);
  rng.fill_normal(s_star.data(), 4);
  Tensor loss = stage2_loss(model, cloud_to_tensor(x),
                            Tensor::from_data({dm.V, dm.V}, dm.d), z_star,
                            s_star, sc);
  CHECK(loss.item() == 0.0);
}

TEST_CASE("stage2 loss decomposes into recon + weighted code MSEs") {
  Model model = spread_toy(63);
  CounterRng rng(64, "amo/decomp");
  PointCloud x = testutil::random_cloud(rng, 6, 1.0);
  DistanceMatrix dm = pairwise(x);
  Tensor xt = cloud_to_tensor(x);
  Tensor target = Tensor::from_data({dm.V, dm.V}, dm.d);
  Tensor z_star = Tensor::zeros({4}), s_star = Tensor::zeros({4});
  rng.fill_normal(z_star.data(), 4);
  rng.fill_normal(s_star.data(), 4);

  auto part = [&](double wr, double wz, double ws) {
    Stage2Config sc;
    sc.w_recon = wr;
    sc.w_dis_z = wz;
    sc.w_dis_s = ws;
    return stage2_loss(model, xt, target, z_star, s_star, sc).item();
  };
  double recon = part(1, 0, 0), dz = part(0, 1, 0), ds = part(0, 0, 1);
  CHECK(part(1, 1, 1) == doctest::Approx(recon + dz + ds).epsilon(1e-12));
  CHECK(part(2, 3, 4) ==
        doctest::Approx(2 * recon + 3 * dz + 4 * ds).epsilon(1e-12));

  // The z anchor really is the mean-convention MSE of the encoded code.
  Tensor zh = model.encode_z(xt);
  CHECK(dz == doctest::Approx(code_mse(zh, z_star).item()).epsilon(1e-12));
}

TEST_CASE("stage2 loss gradients match finite differences") {
  Model model = spread_toy(65);
  CounterRng rng(66, "amo/fd");
  PointCloud x = testutil::random_cloud(rng, 6, 1.0);
  PointCloud xt_cloud = testutil::random_cloud(rng, 6, 1.2);
  DistanceMatrix dm = pairwise(xt_cloud);
  Tensor xt = cloud_to_tensor(x);
  Tensor target = Tensor::from_data({dm.V, dm.V}, dm.d);
  Tensor z_star = Tensor::zeros({4}), s_star = Tensor::zeros({4});
  rng.fill_normal(z_star.data(), 4);
  rng.fill_normal(s_star.data(), 4);
  Stage2Config sc;

  // Audit a representative slice: one tensor from each sub-network.
  std::vector<Tensor> audited;
  for (const auto& p : model.params()) {
    if (p.name == "gen/front0/w" || p.name == "mod/gamma0/w" ||
        p.name == "enc_z/conv0/w" || p.name == "enc_s/head0/w" ||
        p.name == "enc_s/conv1/b") {
      audited.push_back(p.tensor);
    }
  }
  REQUIRE(audited.size() >= 4);
  double err = fd_max_rel_err(
      [&] { return stage2_loss(model, xt, target, z_star, s_star, sc); },
      audited);
  CHECK(err < 1e-4);
}

TEST_CASE("stage2 loss is invariant to the input point order") {
  Model model = spread_toy(67);
  CounterRng rng(68, "amo/perm");
  PointCloud x = testutil::random_cloud(rng, 6, 1.0);
  DistanceMatrix dm = pairwise(x);
  Tensor target = Tensor::from_data({dm.V, dm.V}, dm.d);
  Tensor z_star = Tensor::zeros({4}), s_star = Tensor::zeros({4});
  Stage2Config sc;

  double base =
      stage2_loss(model, cloud_to_tensor(x), target, z_star, s_star, sc).item();

  std::vector<std::size_t> perm(6);
  std::iota(perm.begin(), perm.end(), 0);
  rng.shuffle(perm);
  PointCloud xp = PointCloud::zeros(6);
  for (std::size_t i = 0; i < 6; ++i)
    for (int c = 0; c < 3; ++c) xp.point(i)[c] = x.point(perm[i])[c];
  double permuted =
      stage2_loss(model, cloud_to_tensor(xp), target, z_star, s_star, sc).item();
  CHECK(std::fabs(base - permuted) < 1e-9);
}

TEST_CASE("train_stage2 keeps the stage-1 codes frozen and records parentage") {
  SmallData sd;
  Checkpoint ck1 = stage1_checkpoint(sd.data, 3);

  std::vector<std::vector<double>> before;
  for (const auto& [id, e] : ck1.latents->instances()) {
    (void)id;
    before.push_back(e.code.values());
  }

  RunConfig cfg = ck1.config;
  cfg.stage2.epochs = 3;
  Stage2Result r = train_stage2(sd.data, ck1, cfg, false);
  CHECK(r.parent_hash == ck1.params_hash);
  REQUIRE(r.curve.size() == 3);
  for (const auto& row : r.curve) CHECK(std::isfinite(row.loss));

  std::size_t i = 0;
  for (const auto& [id, e] : ck1.latents->instances()) {
    (void)id;
    CHECK(testutil::bytes_equal(e.code.values(), before[i++]));
  }

  // Encoders exist and the generator arrived from the parent checkpoint.
  CHECK(r.model.enc_s.has_value());
  CHECK(r.model.enc_z.has_value());
}

TEST_CASE("a longer stage-2 run reduces its objective") {
  SmallData sd;
  Checkpoint ck1 = stage1_checkpoint(sd.data, 6);
  RunConfig cfg = ck1.config;
  cfg.stage2.epochs = 12;
  Stage2Result r = train_stage2(sd.data, ck1, cfg, false);
  CHECK(r.curve.back().loss < r.curve.front().loss);
}

TEST_CASE("from_scratch re-initializes the generator instead of adopting it") {
  SmallData sd;
  Checkpoint ck1 = stage1_checkpoint(sd.data, 2);
  RunConfig cfg = ck1.config;
  cfg.stage2.epochs = 1;

  Stage2Result warm = train_stage2(sd.data, ck1, cfg, false);
  RunConfig cfg_scratch = cfg;
  cfg_scratch.stage2.from_scratch = true;
  Stage2Result cold = train_stage2(sd.data, ck1, cfg_scratch, false);

  bool any_diff = false;
  auto pw = warm.model.params(), pc = cold.model.params();
  REQUIRE(pw.size() == pc.size());
  for (std::size_t i = 0; i < pw.size(); ++i) {
    if (pw[i].name.rfind("gen/", 0) == 0 &&
        !testutil::bytes_equal(pw[i].tensor.values(), pc[i].tensor.values())) {
      any_diff = true;
    }
  }
  CHECK(any_diff);
}

TEST_CASE("identical config and seed reproduce stage 2 bit-for-bit") {
  SmallData sd;
  Checkpoint ck1 = stage1_checkpoint(sd.data, 2);
  RunConfig cfg = ck1.config;
  cfg.stage2.epochs = 3;

  Stage2Result a = train_stage2(sd.data, ck1, cfg, false);
  Stage2Result b = train_stage2(sd.data, ck1, cfg, false);
  REQUIRE(a.curve.size() == b.curve.size());
  for (std::size_t i = 0; i < a.curve.size(); ++i)
    CHECK(a.curve[i].loss == b.curve[i].loss);
  auto pa = a.model.params(), pb = b.model.params();
  REQUIRE(pa.size() == pb.size());
  for (std::size_t i = 0; i < pa.size(); ++i)
    CHECK(testutil::bytes_equal(pa[i].tensor.values(), pb[i].tensor.values()));
}

TEST_CASE("train_stage2 validates its parent checkpoint") {
  SmallData sd;
  Checkpoint ck1 = stage1_checkpoint(sd.data, 1);
  RunConfig cfg = ck1.config;
  cfg.stage2.epochs = 1;

  Checkpoint wrong_kind = ck1;
  wrong_kind.kind = "stage2";
  CHECK_THROWS_AS(train_stage2(sd.data, wrong_kind, cfg, false), ContractError);

  Checkpoint no_latents = ck1;
  no_latents.latents.reset();
  CHECK_THROWS_AS(train_stage2(sd.data, no_latents, cfg, false), ContractError);

  Checkpoint wrong_v = ck1;
  wrong_v.V = ck1.V + 1;
  CHECK_THROWS_AS(train_stage2(sd.data, wrong_v, cfg, false), ContractError);

  // A train instance whose stage-1 code the checkpoint is missing.
  Checkpoint gap = ck1;
  std::size_t first_train = sd.data.split_indices("train").front();
  gap.latents->instances().erase(sd.data.manifest.entries[first_train].id);
  CHECK_THROWS_AS(train_stage2(sd.data, gap, cfg, false), ContractError);
}
