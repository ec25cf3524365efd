// Stage-1 latent optimization: code-table seeding and sharing, the noisy
// regularized objective, shrinkage behaviour, and end-to-end determinism of
// short training runs.
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <map>
#include <string>
#include <vector>

#include "dilo/config.hpp"
#include "dilo/dataset.hpp"
#include "dilo/errors.hpp"
#include "dilo/geometry.hpp"
#include "dilo/latents.hpp"
#include "dilo/nets.hpp"
#include "dilo/ops.hpp"
#include "dilo/rng.hpp"
#include "dilo/stage1.hpp"
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
  return mc;
}

std::map<std::string, std::string> two_by_three() {
  return {{"a_0", "ga"}, {"a_1", "ga"}, {"a_2", "ga"},
          {"b_0", "gb"}, {"b_1", "gb"}, {"b_2", "gb"}};
}

// Small real dataset on disk for the training-loop tests.
struct SmallData {
  testutil::TempDir dir{"latentopt"};
  Dataset data;
  SmallData() {
    generate_dataset(2, 4, 99, dir.str(), 64, false, 4);
    data = load_dataset(dir.sub("manifest.json"));
  }
};

RunConfig small_run_config(std::size_t epochs) {
  RunConfig cfg = default_config();
  cfg.seed = 7;
  cfg.stage1.epochs = epochs;
  cfg.stage1.batch_size = 4;
  return cfg;
}

double mean_code_norm(const LatentTable& lt) {
  double acc = 0.0;
  std::size_t n = 0;
  for (const auto& [id, e] : lt.instances()) {
    (void)id;
    double sq = 0.0;
    for (double v : e.code.values()) sq += v * v;
    acc += std::sqrt(sq);
    ++n;
  }
  return acc / static_cast<double>(n);
}

}  // namespace

TEST_CASE("latent table: 2 groups x 3 instances make 2 + 6 codes") {
  LatentTable lt;
  lt.init(two_by_three(), 5, 3, 0.01, 11);
  CHECK(lt.groups().size() == 2);
  CHECK(lt.instances().size() == 6);
  CHECK(lt.d_s() == 5);
  CHECK(lt.d_z() == 3);
  CHECK(lt.shape_code("ga").size() == 5);
  CHECK(lt.deform_code("a_1").size() == 3);
  CHECK(lt.group_of("b_2") == "gb");
  CHECK(lt.shape_code("ga").requires_grad());
  CHECK(lt.deform_code("b_0").requires_grad());
  CHECK_THROWS_AS(lt.shape_code("nope"), ContractError);
  CHECK_THROWS_AS(lt.deform_code("nope"), ContractError);
}

TEST_CASE("same seed gives bit-identical codes, different seed differs") {
  LatentTable a, b, c;
  a.init(two_by_three(), 4, 4, 0.01, 123);
  b.init(two_by_three(), 4, 4, 0.01, 123);
  c.init(two_by_three(), 4, 4, 0.01, 124);
  bool all_same_ab = true, any_diff_ac = false;
  for (const auto& [id, e] : a.instances()) {
    all_same_ab &= testutil::bytes_equal(e.code.values(),
                                         b.deform_code(id).values());
    any_diff_ac |= !testutil::bytes_equal(e.code.values(),
                                          c.deform_code(id).values());
  }
  CHECK(all_same_ab);
  CHECK(any_diff_ac);
  CHECK(testutil::bytes_equal(a.shape_code("ga").values(),
                              b.shape_code("ga").values()));
}

TEST_CASE("instances of one group share one shape-code storage") {
  LatentTable lt;
  lt.init(two_by_three(), 4, 4, 0.01, 11);
  Tensor s1 = lt.shape_code(lt.group_of("a_0"));
  Tensor s2 = lt.shape_code(lt.group_of("a_2"));
  CHECK(s1.same_storage(s2));
  s1.data()[0] = 42.0;
  CHECK(lt.shape_code("ga").at(0) == 42.0);  // the update is visible to all
  CHECK_FALSE(lt.shape_code("gb").same_storage(s1));
}

TEST_CASE("with zero noise and zero lambda the objective is pure recon") {
  ModelConfig mc = toy_model();
  Model model = Model::build(mc, 6, 313);
  CounterRng rng(51, "lat/pure");
  Tensor z = Tensor::zeros({mc.d_z}), s = Tensor::zeros({mc.d_s});
  rng.fill_normal(z.data(), z.size());
  rng.fill_normal(s.data(), s.size());
  PointCloud target_cloud = testutil::random_cloud(rng, 6, 1.0);
  DistanceMatrix dm = pairwise(target_cloud);
  Tensor target = Tensor::from_data({dm.V, dm.V}, dm.d);

  Tensor loss = stage1_loss(model, z, s, target, 0.0, nullptr);
  PointCloud y = tensor_to_cloud(model.generate(z, s));
  CHECK(loss.item() == doctest::Approx(recon_loss(y, target_cloud)).epsilon(1e-12));
}

TEST_CASE("lambda adds exactly lambda * |z|^2: 8 + 0.1*4 -> 8.4 pattern") {
  ModelConfig mc = toy_model();
  Model model = Model::build(mc, 6, 313);
  Tensor z = Tensor::from_data({mc.d_z}, {2, 0, 0, 0});  // |z|^2 = 4
  Tensor s = Tensor::zeros({mc.d_s});
  CounterRng rng(52, "lat/lambda");
  PointCloud target_cloud = testutil::random_cloud(rng, 6, 1.0);
  DistanceMatrix dm = pairwise(target_cloud);
  Tensor target = Tensor::from_data({dm.V, dm.V}, dm.d);

  double base = stage1_loss(model, z, s, target, 0.0, nullptr).item();
  double reg = stage1_loss(model, z, s, target, 0.1, nullptr).item();
  CHECK(reg == doctest::Approx(base + 0.4).epsilon(1e-12));
}

TEST_CASE("code noise strictly hurts a perfectly fitted reconstruction") {
  ModelConfig mc = toy_model();
  Model model = Model::build(mc, 6, 313);
  CounterRng rng(53, "lat/noise");
  Tensor z = Tensor::zeros({mc.d_z}), s = Tensor::zeros({mc.d_s});
  rng.fill_normal(z.data(), z.size());
  rng.fill_normal(s.data(), s.size());
  // Target equals the model's own output, so the noiseless loss is zero.
  DistanceMatrix dm = pairwise(tensor_to_cloud(model.generate(z, s)));
  Tensor target = Tensor::from_data({dm.V, dm.V}, dm.d);
  CHECK(stage1_loss(model, z, s, target, 0.0, nullptr).item() < 1e-18);

  double acc = 0.0;
  Tensor noise = Tensor::zeros(z.shape());
  for (int t = 0; t < 300; ++t) {
    rng.fill_normal(noise.data(), noise.size(), 0.1);
    double l = stage1_loss(model, z, s, target, 0.0, &noise).item();
    CHECK(l >= 0.0);
    acc += l;
  }
  CHECK(acc / 300.0 > 1e-8);
}

TEST_CASE("noise tensors must match the code shape") {
  ModelConfig mc = toy_model();
  Model model = Model::build(mc, 6, 313);
  Tensor z = Tensor::zeros({mc.d_z}), s = Tensor::zeros({mc.d_s});
  Tensor target = Tensor::zeros({6, 6});
  Tensor bad_noise = Tensor::zeros({mc.d_z + 1});
  CHECK_THROWS_AS(stage1_loss(model, z, s, target, 0.0, &bad_noise),
                  DimensionError);
}

TEST_CASE("short training run: loss decreases and artifacts are complete") {
  SmallData sd;
  RunConfig cfg = small_run_config(10);
  Stage1Result r = train_stage1(sd.data, cfg, false);
  REQUIRE(r.curve.size() == 10);
  for (const auto& row : r.curve) CHECK(std::isfinite(row.loss));
  CHECK(r.curve.back().loss < r.curve.front().loss);
  CHECK(r.latents.groups().size() == 2);
  CHECK(r.latents.instances().size() == 8);
  CHECK(r.curve.front().lr_a == cfg.stage1.lr_net);
}

TEST_CASE("identical config and seed reproduce training bit-for-bit") {
  SmallData sd;
  RunConfig cfg = small_run_config(3);
  Stage1Result r1 = train_stage1(sd.data, cfg, false);
  Stage1Result r2 = train_stage1(sd.data, cfg, false);

  REQUIRE(r1.curve.size() == r2.curve.size());
  for (std::size_t i = 0; i < r1.curve.size(); ++i)
    CHECK(r1.curve[i].loss == r2.curve[i].loss);

  auto p1 = r1.model.params(), p2 = r2.model.params();
  REQUIRE(p1.size() == p2.size());
  for (std::size_t i = 0; i < p1.size(); ++i)
    CHECK(testutil::bytes_equal(p1[i].tensor.values(), p2[i].tensor.values()));

  for (const auto& [id, e] : r1.latents.instances())
    CHECK(testutil::bytes_equal(e.code.values(),
                                r2.latents.deform_code(id).values()));

  RunConfig other = cfg;
  other.seed = 8;
  Stage1Result r3 = train_stage1(sd.data, other, false);
  CHECK(r3.curve.back().loss != r1.curve.back().loss);
}

TEST_CASE("a positive lambda shrinks deformation codes") {
  SmallData sd;
  RunConfig free_cfg = small_run_config(12);
  free_cfg.stage1.lambda = 0.0;
  free_cfg.stage1.sigma2 = 0.0;
  RunConfig reg_cfg = free_cfg;
  reg_cfg.stage1.lambda = 0.05;

  Stage1Result rf = train_stage1(sd.data, free_cfg, false);
  Stage1Result rr = train_stage1(sd.data, reg_cfg, false);
  CHECK(mean_code_norm(rr.latents) < mean_code_norm(rf.latents));
}

TEST_CASE("training requires a train split") {
  SmallData sd;
  Dataset eval_only = sd.data;
  for (auto& e : eval_only.manifest.entries) e.split = "test_unseen_both";
  CHECK_THROWS_AS(train_stage1(eval_only, small_run_config(1), false),
                  ContractError);
}
