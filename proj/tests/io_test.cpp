// File formats and persistence: OBJ round-trips and diagnostics, manifest
// and dataset validation, config echo/overlay/rejection, and bit-exact
// checkpoint round-trips with corruption detection.
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cstdio>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "json.hpp"

#include "dilo/checkpoint.hpp"
#include "dilo/config.hpp"
#include "dilo/dataset.hpp"
#include "dilo/errors.hpp"
#include "dilo/mesh_io.hpp"
#include "dilo/optim.hpp"
#include "dilo/rng.hpp"
#include "dilo/stage1.hpp"
#include "test_util.hpp"

using namespace dilo;

namespace {

Mesh tetrahedron() {
  Mesh m;
  m.cloud = PointCloud::zeros(4);
  const double pts[12] = {0, 0, 0, 1, 0, 0, 0, 1, 0, 0, 0, 1};
  m.cloud.xyz.assign(pts, pts + 12);
  m.faces = {{0, 1, 2}, {0, 1, 3}, {0, 2, 3}, {1, 2, 3}};
  return m;
}

ModelConfig tiny_model_config() {
  ModelConfig mc;
  mc.d_s = 3;
  mc.d_z = 3;
  mc.gen.front_widths = {6};
  mc.gen.adain_widths = {6, 6};
  mc.gen.points_channels = 2;
  mc.gen.tail_widths = {6};
  mc.mod.hidden = 6;
  mc.enc.point_widths = {6, 6, 6};
  mc.enc.head_widths = {6};
  mc.enc.feature_transform_at = 1;
  mc.enc.tnet_hidden = 3;
  return mc;
}

// A complete stage-1 style checkpoint with non-trivial Adam state.
Checkpoint make_checkpoint(std::uint64_t seed) {
  Checkpoint ck;
  ck.kind = "stage1";
  ck.config = default_config();
  ck.config.model = tiny_model_config();
  ck.V = 5;
  Model model = Model::build(ck.config.model, ck.V, seed);
  ck.params = model.params();
  CounterRng rng(seed, "test/adamstate");
  for (const auto& p : ck.params) {
    AdamState st;
    st.init(p.tensor.size());
    rng.fill_normal(st.m.data(), st.m.size());
    for (double& v : st.v) v = rng.next_uniform();
    st.step = rng.next_index(100);
    ck.adam[p.name] = st;
  }
  LatentTable lt;
  lt.init({{"a_1", "ga"}, {"a_2", "ga"}, {"b_1", "gb"}}, ck.config.model.d_s,
          ck.config.model.d_z, 0.01, seed);
  ck.latents = lt;
  return ck;
}

void corrupt_byte(const std::string& path, long offset_from_mid) {
  std::fstream f(path, std::ios::in | std::ios::out | std::ios::binary);
  REQUIRE(f.good());
  f.seekg(0, std::ios::end);
  long size = static_cast<long>(f.tellg());
  long pos = size / 2 + offset_from_mid;
  REQUIRE(pos >= 0);
  REQUIRE(pos < size);
  f.seekg(pos);
  char c = 0;
  f.read(&c, 1);
  c = static_cast<char>(c ^ 0x40);
  f.seekp(pos);
  f.write(&c, 1);
}

}  // namespace

TEST_CASE("OBJ round-trip preserves vertices to full precision") {
  testutil::TempDir dir("obj");
  CounterRng rng(41, "io/obj");
  Mesh m;
  m.cloud = testutil::random_cloud(rng, 23, 3.0);
  m.faces = {{0, 1, 2}, {3, 4, 5}, {20, 21, 22}};
  const std::string path = dir.sub("m.obj");
  save_obj(path, m);
  Mesh back = load_obj(path);
  REQUIRE(back.cloud.V == m.cloud.V);
  CHECK(testutil::bytes_equal(back.cloud.xyz, m.cloud.xyz));
  CHECK(back.faces == m.faces);
}

TEST_CASE("tetrahedron OBJ has V=4, F=4") {
  testutil::TempDir dir("obj_tet");
  const std::string path = dir.sub("tet.obj");
  save_obj(path, tetrahedron());
  Mesh back = load_obj(path);
  CHECK(back.cloud.V == 4);
  CHECK(back.faces.size() == 4);
}

TEST_CASE("OBJ parser diagnostics") {
  testutil::TempDir dir("obj_err");

  auto write = [&](const std::string& name, const std::string& text) {
    std::ofstream(dir.sub(name)) << text;
    return dir.sub(name);
  };

  // Malformed vertex line; the message carries file:line.
  std::string p1 = write("bad_v.obj", "v 0 0 0\nv 1 2\nv 0 0 1\n");
  CHECK_THROWS_WITH_AS(load_obj(p1), doctest::Contains(":2"), ParseError);

  // Face index past the vertex count.
  std::string p2 = write("bad_f.obj", "v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 9\n");
  CHECK_THROWS_AS(load_obj(p2), ParseError);

  // Non-triangular face.
  std::string p3 = write(
      "quad.obj", "v 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\nf 1 2 3 4\n");
  CHECK_THROWS_AS(load_obj(p3), ParseError);

  // Unknown record types are skipped, not fatal.
  std::string p4 = write("extras.obj",
                         "# comment\nvn 0 0 1\nvt 0 0\nv 0 0 0\nv 1 0 0\n"
                         "v 0 1 0\nf 1/1/1 2/2/2 3/3/3\n");
  Mesh ok = load_obj(p4);
  CHECK(ok.cloud.V == 3);
  CHECK(ok.faces.size() == 1);

  CHECK_THROWS_AS(load_obj(dir.sub("missing.obj")), IoError);
}

TEST_CASE("manifest validation") {
  testutil::TempDir dir("manifest");
  auto write = [&](const std::string& name, const std::string& text) {
    std::ofstream(dir.sub(name)) << text;
    return dir.sub(name);
  };

  CHECK_THROWS_AS(load_manifest(dir.sub("absent.json")), IoError);
  CHECK_THROWS_AS(load_manifest(write("garbage.json", "{oops")), ParseError);
  CHECK_THROWS_AS(
      load_manifest(write("empty.json",
                          R"({"V":4,"F":0,"seed":1,"entries":[]})")),
      ManifestError);
  CHECK_THROWS_AS(
      load_manifest(write(
          "dup.json",
          R"({"V":4,"F":0,"seed":1,"entries":[
               {"id":"x","group":"g","deform_class":0,"split":"train","path":"a.obj"},
               {"id":"x","group":"g","deform_class":1,"split":"train","path":"b.obj"}]})")),
      ManifestError);
}

TEST_CASE("dataset loading: missing files, V mismatch, single-instance warning") {
  testutil::TempDir dir("dataset");
  Mesh tet = tetrahedron();
  save_obj(dir.sub("a.obj"), tet);
  save_obj(dir.sub("b.obj"), tet);
  Mesh tri;
  tri.cloud = PointCloud::zeros(3);
  save_obj(dir.sub("tri.obj"), tri);

  auto manifest = [&](const std::string& name, const std::string& entries) {
    std::ofstream(dir.sub(name))
        << R"({"V":4,"F":4,"seed":1,"entries":[)" << entries << "]}";
    return dir.sub(name);
  };

  std::string good = manifest(
      "good.json",
      R"({"id":"a","group":"g","deform_class":0,"split":"train","path":"a.obj"},
         {"id":"b","group":"g","deform_class":1,"split":"train","path":"b.obj"})");
  Dataset data = load_dataset(good);
  CHECK(data.V == 4);
  CHECK(data.meshes.size() == 2);
  CHECK(data.by_instance("b").cloud.V == 4);
  CHECK_THROWS_AS(data.by_instance("zzz"), ManifestError);
  CHECK(data.split_indices("train").size() == 2);
  CHECK(data.split_indices("nope").empty());

  std::string missing = manifest(
      "missing.json",
      R"({"id":"a","group":"g","deform_class":0,"split":"train","path":"gone.obj"})");
  CHECK_THROWS_WITH_AS(load_dataset(missing), doctest::Contains("gone.obj"),
                       IoError);

  std::string mismatch = manifest(
      "mismatch.json",
      R"({"id":"a","group":"g","deform_class":0,"split":"train","path":"a.obj"},
         {"id":"t","group":"h","deform_class":0,"split":"train","path":"tri.obj"})");
  CHECK_THROWS_AS(load_dataset(mismatch), ManifestError);

  // One-instance groups are tolerated (they just warn on stderr).
  std::string solo = manifest(
      "solo.json",
      R"({"id":"a","group":"g","deform_class":0,"split":"train","path":"a.obj"})");
  CHECK_NOTHROW(load_dataset(solo));
}

TEST_CASE("config JSON round-trips through the echo") {
  RunConfig cfg = default_config();
  cfg.seed = 123;
  cfg.stage1.lambda = 0.25;
  cfg.stage2.w_dis_z = 16.0;
  cfg.explain.encoder = "s";
  nlohmann::json echoed = config_to_json(cfg);

  RunConfig back = default_config();
  apply_config_json(back, echoed);
  CHECK(config_to_json(back).dump() == echoed.dump());
  CHECK(back.seed == 123);
  CHECK(back.stage1.lambda == 0.25);
  CHECK(back.stage2.w_dis_z == 16.0);
  CHECK(back.explain.encoder == "s");
}

TEST_CASE("partial configs overlay defaults; unknown keys are rejected") {
  RunConfig cfg = default_config();
  apply_config_json(cfg, nlohmann::json{{"stage1", {{"lambda", 0.5}}}});
  CHECK(cfg.stage1.lambda == 0.5);
  CHECK(cfg.stage1.epochs == default_config().stage1.epochs);

  RunConfig fresh = default_config();
  CHECK_THROWS_WITH_AS(
      apply_config_json(fresh, nlohmann::json{{"stage1", {{"lambada", 0.5}}}}),
      doctest::Contains("lambada"), ConfigError);
  CHECK_THROWS_AS(apply_config_json(fresh, nlohmann::json{{"bogus", 1}}),
                  ConfigError);
}

TEST_CASE("config validation rejects out-of-range values") {
  RunConfig cfg = default_config();
  cfg.stage1.lr_net = 0.0;
  CHECK_THROWS_AS(validate_config(cfg), ConfigError);

  cfg = default_config();
  cfg.stage1.lambda = -1.0;
  CHECK_THROWS_AS(validate_config(cfg), ConfigError);

  cfg = default_config();
  cfg.explain.mode = "odd";
  CHECK_THROWS_AS(validate_config(cfg), ConfigError);

  cfg = default_config();
  cfg.synth.groups = 1;
  CHECK_THROWS_AS(validate_config(cfg), ConfigError);
}

TEST_CASE("load_config_file diagnostics") {
  testutil::TempDir dir("cfg");
  CHECK_THROWS_AS(load_config_file(dir.sub("absent.json")), IoError);
  std::ofstream(dir.sub("bad.json")) << "{not json";
  CHECK_THROWS_AS(load_config_file(dir.sub("bad.json")), ParseError);
  std::ofstream(dir.sub("ok.json")) << R"({"seed": 9})";
  CHECK(load_config_file(dir.sub("ok.json")).seed == 9);
}

TEST_CASE("checkpoint round-trip is bit-exact, including Adam and latents") {
  testutil::TempDir dir("ckpt");
  Checkpoint ck = make_checkpoint(501);
  save_checkpoint(dir.str(), ck);

  Checkpoint back = load_checkpoint(dir.str());
  CHECK(back.kind == "stage1");
  CHECK(back.V == ck.V);
  CHECK(back.format_version == 1);
  CHECK(back.params_hash == file_fnv1a_hex(dir.sub("params.bin")));
  CHECK(!back.params_hash.empty());
  REQUIRE(back.params.size() == ck.params.size());
  for (std::size_t i = 0; i < ck.params.size(); ++i) {
    CHECK(back.params[i].name == ck.params[i].name);
    CHECK(testutil::bytes_equal(back.params[i].tensor.values(),
                                ck.params[i].tensor.values()));
    const AdamState& a = ck.adam.at(ck.params[i].name);
    const AdamState& b = back.adam.at(ck.params[i].name);
    CHECK(testutil::bytes_equal(a.m, b.m));
    CHECK(testutil::bytes_equal(a.v, b.v));
    CHECK(a.step == b.step);
  }
  REQUIRE(back.latents.has_value());
  for (const auto& [g, entry] : ck.latents->groups()) {
    CHECK(testutil::bytes_equal(back.latents->shape_code(g).values(),
                                entry.code.values()));
  }
  for (const auto& [id, entry] : ck.latents->instances()) {
    CHECK(back.latents->group_of(id) == entry.group);
    CHECK(testutil::bytes_equal(back.latents->deform_code(id).values(),
                                entry.code.values()));
  }
  CHECK(config_to_json(back.config).dump() == config_to_json(ck.config).dump());

  // save(load(x)) reproduces every byte.
  testutil::TempDir dir2("ckpt2");
  save_checkpoint(dir2.str(), back);
  for (const char* f : {"meta.json", "params.bin", "latents.bin"}) {
    CHECK(testutil::read_file(dir.sub(f)) == testutil::read_file(dir2.sub(f)));
    CHECK(!testutil::read_file(dir.sub(f)).empty());
  }
}

TEST_CASE("reloaded models reproduce forward passes bit-for-bit") {
  testutil::TempDir dir("ckpt_fw");
  Checkpoint ck = make_checkpoint(502);
  Model original = model_from_checkpoint(ck);
  save_checkpoint(dir.str(), ck);
  Model reloaded = model_from_checkpoint(load_checkpoint(dir.str()));

  CounterRng rng(43, "io/fw");
  Tensor z = Tensor::zeros({3}), s = Tensor::zeros({3});
  rng.fill_normal(z.data(), 3);
  rng.fill_normal(s.data(), 3);
  CHECK(testutil::bytes_equal(original.generate(z, s).values(),
                              reloaded.generate(z, s).values()));
}

TEST_CASE("checkpoint corruption and truncation are detected") {
  testutil::TempDir dir("ckpt_bad");
  save_checkpoint(dir.str(), make_checkpoint(503));

  corrupt_byte(dir.sub("params.bin"), 3);
  CHECK_THROWS_WITH_AS(load_checkpoint(dir.str()),
                       doctest::Contains("checksum"), IoError);

  testutil::TempDir dir2("ckpt_trunc");
  save_checkpoint(dir2.str(), make_checkpoint(503));
  std::string bytes = testutil::read_file(dir2.sub("params.bin"));
  std::ofstream(dir2.sub("params.bin"), std::ios::binary)
      << bytes.substr(0, bytes.size() / 2);
  CHECK_THROWS_AS(load_checkpoint(dir2.str()), IoError);

  testutil::TempDir dir3("ckpt_vers");
  save_checkpoint(dir3.str(), make_checkpoint(503));
  std::string meta = testutil::read_file(dir3.sub("meta.json"));
  auto pos = meta.find("\"format_version\": 1");
  REQUIRE(pos != std::string::npos);
  meta.replace(pos, 19, "\"format_version\": 9");
  std::ofstream(dir3.sub("meta.json")) << meta;
  CHECK_THROWS_WITH_AS(load_checkpoint(dir3.str()),
                       doctest::Contains("format_version"), IoError);

  CHECK_THROWS_AS(load_checkpoint(dir.sub("nowhere")), IoError);
}

TEST_CASE("loss curve CSV format") {
  testutil::TempDir dir("csv");
  std::vector<EpochLog> curve = {{0, 1.5, 1e-4, 3e-3}, {1, 1.25, 9e-5, 2.9e-3}};
  write_loss_csv(dir.sub("loss.csv"), curve, "epoch,loss,lr_net,lr_latent");
  std::string text = testutil::read_file(dir.sub("loss.csv"));
  CHECK(text.rfind("epoch,loss,lr_net,lr_latent\n", 0) == 0);
  CHECK(text.find("\n0,") != std::string::npos);
  CHECK(text.find("\n1,") != std::string::npos);
}
