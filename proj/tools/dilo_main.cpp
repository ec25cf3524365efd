// Command-line surface for the full pipeline: dataset synthesis, two-stage
// training, transfer and disentanglement evaluation, surrogate explanations,
// and a finite-difference gradient audit. Exit codes: 0 success, 1 runtime
// failure, 2 usage error.
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>

#include "CLI11.hpp"
#include "json.hpp"

#include "dilo/checkpoint.hpp"
#include "dilo/config.hpp"
#include "dilo/dataset.hpp"
#include "dilo/errors.hpp"
#include "dilo/evalkit.hpp"
#include "dilo/explain.hpp"
#include "dilo/gradcheck.hpp"
#include "dilo/kernels.hpp"
#include "dilo/mesh_io.hpp"
#include "dilo/stage1.hpp"
#include "dilo/stage2.hpp"
#include "dilo/synthdata.hpp"

namespace {

using nlohmann::json;

void ensure_dir(const std::string& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) {
    throw dilo::IoError("cannot create directory '" + dir + "': " + ec.message());
  }
}

void write_json(const std::string& path, const json& j) {
  std::ofstream out(path);
  if (!out) throw dilo::IoError("cannot open '" + path + "' for writing");
  out << j.dump(2) << "\n";
  if (!out) throw dilo::IoError("short write to '" + path + "'");
}

// Global options shared by every subcommand. Flags override config values.
struct Common {
  std::string config_path;
  std::string out;
  std::uint64_t seed = 0;
  int threads = -1;
  bool seed_set = false;

  dilo::RunConfig resolve() const {
    dilo::RunConfig cfg = config_path.empty() ? dilo::default_config()
                                              : dilo::load_config_file(config_path);
    if (seed_set) cfg.seed = seed;
    if (threads >= 0) {
      cfg.threads = threads;
    } else if (const char* env = std::getenv("DILO_THREADS")) {
      cfg.threads = std::atoi(env);
    }
    if (cfg.threads > 0) dilo::set_threads(cfg.threads);
    return cfg;
  }
};

void add_common(CLI::App* sub, Common& c) {
  sub->add_option("--config", c.config_path, "JSON config file (partial; overlays defaults)");
  sub->add_option("--out", c.out, "output directory or file");
  sub->add_option("--seed", c.seed, "RNG seed (overrides config)")
      ->each([&c](const std::string&) { c.seed_set = true; });
  sub->add_option("--threads", c.threads,
                  "worker thread cap, 0 = runtime default (env DILO_THREADS)");
}

dilo::Checkpoint checkpoint_of_stage1(const dilo::Stage1Result& r,
                                      const dilo::RunConfig& cfg,
                                      std::size_t v) {
  dilo::Checkpoint ck;
  ck.kind = "stage1";
  ck.config = cfg;
  ck.V = v;
  ck.params = r.model.params();
  ck.adam = r.net_adam;
  ck.latents = r.latents;
  return ck;
}

int run_synth(const Common& c, std::size_t groups, std::size_t deforms,
              std::size_t v_target, std::size_t pairs, bool force,
              bool flags_set[4]) {
  dilo::RunConfig cfg = c.resolve();
  if (flags_set[0]) cfg.synth.groups = groups;
  if (flags_set[1]) cfg.synth.deforms = deforms;
  if (flags_set[2]) cfg.synth.v_target = v_target;
  if (flags_set[3]) cfg.synth.pairs = pairs;
  dilo::validate_config(cfg);
  if (c.out.empty()) throw dilo::ConfigError("synth: --out directory required");
  dilo::generate_dataset(cfg.synth.groups, cfg.synth.deforms, cfg.seed, c.out,
                         cfg.synth.v_target, force, cfg.synth.pairs);
  dilo::Manifest m = dilo::load_manifest(c.out + "/manifest.json");
  write_json(c.out + "/run_config.json", dilo::config_to_json(cfg));
  std::printf("synth: %zu instances (V=%zu, F=%zu) under %s\n",
              m.entries.size(), m.V, m.F, c.out.c_str());
  return 0;
}

int run_train_stage1(const Common& c, const std::string& data_dir) {
  dilo::RunConfig cfg = c.resolve();
  if (c.out.empty()) throw dilo::ConfigError("train-stage1: --out directory required");
  dilo::Dataset data = dilo::load_dataset(data_dir + "/manifest.json");
  dilo::Stage1Result r = dilo::train_stage1(data, cfg);
  ensure_dir(c.out);
  dilo::save_checkpoint(c.out, checkpoint_of_stage1(r, cfg, data.V));
  dilo::write_loss_csv(c.out + "/loss_stage1.csv", r.curve,
                       "epoch,loss,lr_net,lr_latent");
  const double first = r.curve.front().loss, last = r.curve.back().loss;
  std::printf("stage1: epochs=%zu first_loss=%.6f last_loss=%.6f ratio=%.4f\n",
              cfg.stage1.epochs, first, last, last / first);
  std::printf("stage1: checkpoint at %s\n", c.out.c_str());
  return 0;
}

int run_train_stage2(const Common& c, const std::string& data_dir,
                     const std::string& stage1_dir) {
  dilo::RunConfig cfg = c.resolve();
  if (c.out.empty()) throw dilo::ConfigError("train-stage2: --out directory required");
  dilo::Dataset data = dilo::load_dataset(data_dir + "/manifest.json");
  dilo::Checkpoint ck1 = dilo::load_checkpoint(stage1_dir);
  dilo::Stage2Result r = dilo::train_stage2(data, ck1, cfg);
  ensure_dir(c.out);
  dilo::Checkpoint ck;
  ck.kind = "stage2";
  ck.config = cfg;
  ck.config.model = ck1.config.model;  // architecture comes from the parent
  ck.V = data.V;
  ck.params = r.model.params();
  ck.adam = r.adam;
  ck.parent_hash = r.parent_hash;
  dilo::save_checkpoint(c.out, ck);
  dilo::write_loss_csv(c.out + "/loss_stage2.csv", r.curve,
                       "epoch,loss,lr_net,lr_enc");
  std::printf("stage2: epochs=%zu first_loss=%.6f last_loss=%.6f\n",
              cfg.stage2.epochs, r.curve.front().loss, r.curve.back().loss);
  std::printf("stage2: checkpoint at %s (parent %s)\n", c.out.c_str(),
              r.parent_hash.c_str());
  return 0;
}

int run_transfer(const Common& c, const std::string& ckpt_dir,
                 const std::string& shape_path, const std::string& deform_path) {
  (void)c.resolve();
  dilo::Checkpoint ck = dilo::load_checkpoint(ckpt_dir);
  if (ck.kind != "stage2") {
    throw dilo::ContractError("transfer needs a stage2 checkpoint (encoders)");
  }
  if (c.out.empty()) throw dilo::ConfigError("transfer: --out file required");
  dilo::Model model = dilo::model_from_checkpoint(ck);
  dilo::Mesh shape = dilo::load_obj(shape_path);
  dilo::Mesh deform = dilo::load_obj(deform_path);
  dilo::PointCloud y = dilo::transfer(model, shape.cloud, deform.cloud);
  dilo::Mesh out_mesh;
  out_mesh.cloud = y;
  if (shape.cloud.V == y.V) out_mesh.faces = shape.faces;
  dilo::save_obj(c.out, out_mesh);
  std::printf("transfer: wrote %zu vertices to %s\n", y.V, c.out.c_str());
  return 0;
}

int run_eval_transfer(const Common& c, const std::string& data_dir,
                      const std::string& ckpt_dir, std::string pairs_path,
                      bool no_align, bool no_reflection) {
  (void)c.resolve();
  dilo::Dataset data = dilo::load_dataset(data_dir + "/manifest.json");
  dilo::Checkpoint ck = dilo::load_checkpoint(ckpt_dir);
  if (ck.kind != "stage2") {
    throw dilo::ContractError("eval-transfer needs a stage2 checkpoint");
  }
  dilo::Model model = dilo::model_from_checkpoint(ck);
  if (pairs_path.empty()) pairs_path = data_dir + "/transfer_pairs.json";
  auto pairs = dilo::load_pairs(pairs_path);
  dilo::TransferEval ev =
      dilo::eval_transfer(model, data, pairs, !no_align, !no_reflection);
  std::printf(
      "eval-transfer: pairs=%zu\n"
      "  PMD(ours)        mean=%.6g (x1e3: %s)\n"
      "  PMD(copy_shape)  mean=%.6g (x1e3: %s)\n"
      "  PMD(copy_deform) mean=%.6g (x1e3: %s)\n"
      "  CD(ours)         mean=%.6g (x1e3: %s)\n"
      "  median improvement ratio min(baselines)/ours = %.3f\n",
      pairs.size(), ev.mean_ours, dilo::format_milli(ev.mean_ours).c_str(),
      ev.mean_copy_shape, dilo::format_milli(ev.mean_copy_shape).c_str(),
      ev.mean_copy_deform, dilo::format_milli(ev.mean_copy_deform).c_str(),
      ev.mean_chamfer, dilo::format_milli(ev.mean_chamfer).c_str(),
      ev.median_ratio);
  if (!c.out.empty()) {
    ensure_dir(c.out);
    json j;
    j["pairs"] = pairs.size();
    j["mean_pmd_ours"] = ev.mean_ours;
    j["mean_pmd_copy_shape"] = ev.mean_copy_shape;
    j["mean_pmd_copy_deform"] = ev.mean_copy_deform;
    j["mean_chamfer_ours"] = ev.mean_chamfer;
    j["median_ratio"] = ev.median_ratio;
    j["per_pair"] = {{"ours", ev.ours},
                     {"copy_shape", ev.copy_shape},
                     {"copy_deform", ev.copy_deform},
                     {"ratio", ev.ratio},
                     {"chamfer_ours", ev.chamfer_ours}};
    write_json(c.out + "/transfer_eval.json", j);
    std::printf("eval-transfer: wrote %s/transfer_eval.json\n", c.out.c_str());
  }
  return 0;
}

int run_eval_dscore(const Common& c, const std::string& data_dir,
                    const std::string& ckpt_dir, const std::string& train_split,
                    const std::string& eval_split) {
  dilo::RunConfig cfg = c.resolve();
  dilo::Dataset data = dilo::load_dataset(data_dir + "/manifest.json");
  dilo::Checkpoint ck = dilo::load_checkpoint(ckpt_dir);
  if (ck.kind != "stage2") {
    throw dilo::ContractError("eval-dscore needs a stage2 checkpoint");
  }
  dilo::Model model = dilo::model_from_checkpoint(ck);
  dilo::DisentanglementEval ev =
      dilo::eval_dscore(model, data, train_split, eval_split, cfg.probe);
  std::printf(
      "eval-dscore: classes=%zu train=%zu eval=%zu\n"
      "  E(deform|z) = %.3f\n"
      "  E(deform|s) = %.3f (chance %.3f)\n"
      "  D_score     = %.3f\n",
      ev.n_classes, ev.n_train, ev.n_eval, ev.e_z, ev.e_s, ev.chance,
      ev.d_score);
  if (!c.out.empty()) {
    ensure_dir(c.out);
    write_json(c.out + "/dscore.json",
               json{{"classes", ev.n_classes},
                    {"train", ev.n_train},
                    {"eval", ev.n_eval},
                    {"e_z", ev.e_z},
                    {"e_s", ev.e_s},
                    {"chance", ev.chance},
                    {"d_score", ev.d_score}});
    std::printf("eval-dscore: wrote %s/dscore.json\n", c.out.c_str());
  }
  return 0;
}

int run_explain(const Common& c, const std::string& ckpt_dir,
                const std::string& mesh_path, const std::string& encoder,
                std::size_t k, std::size_t samples, const std::string& mode,
                std::size_t component, bool flip, bool flags_set[5]) {
  dilo::RunConfig cfg = c.resolve();
  if (flags_set[0]) cfg.explain.encoder = encoder;
  if (flags_set[1]) cfg.explain.k = k;
  if (flags_set[2]) cfg.explain.samples = samples;
  if (flags_set[3]) cfg.explain.mode = mode;
  if (flags_set[4]) cfg.explain.component = component;
  if (flip) cfg.explain.flip_colors = true;
  dilo::validate_config(cfg);
  if (c.out.empty()) throw dilo::ConfigError("explain: --out directory required");
  dilo::Checkpoint ck = dilo::load_checkpoint(ckpt_dir);
  if (ck.kind != "stage2") {
    throw dilo::ContractError("explain needs a stage2 checkpoint (encoders)");
  }
  dilo::Model model = dilo::model_from_checkpoint(ck);
  dilo::Mesh mesh = dilo::load_obj(mesh_path);
  dilo::Segmentation seg;
  dilo::ImportanceMap map =
      dilo::explain_encoder(model, mesh.cloud, cfg.explain, cfg.seed, &seg);
  ensure_dir(c.out);
  dilo::export_importance_ply(mesh.cloud, map, c.out + "/importance.ply",
                              cfg.explain.flip_colors);
  dilo::export_importance_csv(seg, map, c.out + "/importance.csv");
  std::printf("explain: encoder=%s mode=%s k=%zu samples=%zu\n",
              cfg.explain.encoder.c_str(), cfg.explain.mode.c_str(),
              cfg.explain.k, cfg.explain.samples);
  for (std::size_t j = 0; j < seg.k; ++j) {
    std::printf("  cluster %zu importance %+.6f\n", j,
                map.cluster_importance[j]);
  }
  std::printf("explain: wrote %s/importance.ply and importance.csv\n",
              c.out.c_str());
  return 0;
}

int run_gradcheck(const Common& c) {
  (void)c.resolve();
  auto results = dilo::gradcheck_all();
  bool all_pass = true;
  for (const auto& r : results) {
    std::printf("%-40s max_rel_err=%.3e %s\n", r.name.c_str(), r.max_rel_err,
                r.pass ? "ok" : "FAIL");
    all_pass = all_pass && r.pass;
  }
  std::printf("gradcheck: %s\n", all_pass ? "all gradients match" : "FAILURES");
  return all_pass ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Disentangled latent optimization for grouped deforming 3D shapes"};
  app.require_subcommand(1);

  Common c_synth, c_s1, c_s2, c_tr, c_evt, c_evd, c_exp, c_gc;

  auto* synth = app.add_subcommand("synth", "generate the synthetic quadruped dataset");
  add_common(synth, c_synth);
  std::size_t groups = 0, deforms = 0, v_target = 0, pairs = 0;
  bool force = false;
  static bool synth_set[4] = {false, false, false, false};
  synth->add_option("--groups", groups, "number of shape groups")
      ->each([](const std::string&) { synth_set[0] = true; });
  synth->add_option("--deforms", deforms, "deformations per group")
      ->each([](const std::string&) { synth_set[1] = true; });
  synth->add_option("--v-target", v_target, "target vertex count")
      ->each([](const std::string&) { synth_set[2] = true; });
  synth->add_option("--pairs", pairs, "transfer evaluation pairs")
      ->each([](const std::string&) { synth_set[3] = true; });
  synth->add_flag("--force", force, "overwrite a non-empty output directory");

  auto* s1 = app.add_subcommand("train-stage1", "latent optimization of codes + generator");
  add_common(s1, c_s1);
  std::string s1_data;
  s1->add_option("--data", s1_data, "dataset directory (contains manifest.json)")
      ->required();

  auto* s2 = app.add_subcommand("train-stage2", "amortized inference: train the encoders");
  add_common(s2, c_s2);
  std::string s2_data, s2_parent;
  s2->add_option("--data", s2_data, "dataset directory")->required();
  s2->add_option("--stage1", s2_parent, "stage-1 checkpoint directory")->required();

  auto* tr = app.add_subcommand("transfer", "swap factors between two meshes");
  add_common(tr, c_tr);
  std::string tr_ckpt, tr_shape, tr_deform;
  tr->add_option("--ckpt", tr_ckpt, "stage-2 checkpoint directory")->required();
  tr->add_option("--shape", tr_shape, "OBJ providing the identity")->required();
  tr->add_option("--deform", tr_deform, "OBJ providing the pose")->required();

  auto* evt = app.add_subcommand("eval-transfer", "transfer metrics against analytic ground truth");
  add_common(evt, c_evt);
  std::string evt_data, evt_ckpt, evt_pairs;
  bool no_align = false, no_reflection = false;
  evt->add_option("--data", evt_data, "dataset directory")->required();
  evt->add_option("--ckpt", evt_ckpt, "stage-2 checkpoint directory")->required();
  evt->add_option("--pairs", evt_pairs, "pairs JSON (default: <data>/transfer_pairs.json)");
  evt->add_flag("--no-align", no_align, "skip rigid alignment before PMD");
  evt->add_flag("--no-reflection", no_reflection, "forbid reflections in alignment");

  auto* evd = app.add_subcommand("eval-dscore", "probe-based disentanglement score");
  add_common(evd, c_evd);
  std::string evd_data, evd_ckpt, evd_train = "train",
                                  evd_eval = "test_unseen_identity";
  evd->add_option("--data", evd_data, "dataset directory")->required();
  evd->add_option("--ckpt", evd_ckpt, "stage-2 checkpoint directory")->required();
  evd->add_option("--train-split", evd_train, "probe training split");
  evd->add_option("--eval-split", evd_eval, "probe evaluation split");

  auto* exp = app.add_subcommand("explain", "surrogate importance map for one mesh");
  add_common(exp, c_exp);
  std::string exp_ckpt, exp_mesh, exp_encoder = "z",
                                  exp_mode = "latent_similarity";
  std::size_t exp_k = 0, exp_samples = 0, exp_component = 0;
  bool exp_flip = false;
  static bool exp_set[5] = {false, false, false, false, false};
  exp->add_option("--ckpt", exp_ckpt, "stage-2 checkpoint directory")->required();
  exp->add_option("--mesh", exp_mesh, "OBJ to explain")->required();
  exp->add_option("--encoder", exp_encoder, "which encoder: s or z")
      ->each([](const std::string&) { exp_set[0] = true; });
  exp->add_option("--k", exp_k, "cluster count")
      ->each([](const std::string&) { exp_set[1] = true; });
  exp->add_option("--samples", exp_samples, "perturbation samples")
      ->each([](const std::string&) { exp_set[2] = true; });
  exp->add_option("--mode", exp_mode, "latent_similarity or component")
      ->each([](const std::string&) { exp_set[3] = true; });
  exp->add_option("--component", exp_component, "code coordinate for component mode")
      ->each([](const std::string&) { exp_set[4] = true; });
  exp->add_flag("--flip-colors", exp_flip, "swap the blue/red polarity");

  auto* gc = app.add_subcommand("gradcheck", "finite-difference audit of all gradients");
  add_common(gc, c_gc);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (synth->parsed()) {
      return run_synth(c_synth, groups, deforms, v_target, pairs, force,
                       synth_set);
    }
    if (s1->parsed()) return run_train_stage1(c_s1, s1_data);
    if (s2->parsed()) return run_train_stage2(c_s2, s2_data, s2_parent);
    if (tr->parsed()) return run_transfer(c_tr, tr_ckpt, tr_shape, tr_deform);
    if (evt->parsed()) {
      return run_eval_transfer(c_evt, evt_data, evt_ckpt, evt_pairs, no_align,
                               no_reflection);
    }
    if (evd->parsed()) {
      return run_eval_dscore(c_evd, evd_data, evd_ckpt, evd_train, evd_eval);
    }
    if (exp->parsed()) {
      return run_explain(c_exp, exp_ckpt, exp_mesh, exp_encoder, exp_k,
                         exp_samples, exp_mode, exp_component, exp_flip,
                         exp_set);
    }
    if (gc->parsed()) return run_gradcheck(c_gc);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 2;
}
