#include "dilo/config.hpp"

#include <fstream>
#include <set>

#include "dilo/errors.hpp"

namespace dilo {

namespace {

void check_keys(const nlohmann::json& j, const char* ctx,
                std::initializer_list<const char*> keys) {
  if (!j.is_object())
    throw ConfigError(std::string("config: ") + ctx + " must be an object");
  std::set<std::string> known(keys.begin(), keys.end());
  for (const auto& [k, v] : j.items())
    if (!known.count(k))
      throw ConfigError(std::string("config: unknown key '") + k + "' in " +
                        ctx);
}

template <typename T>
void get_if(const nlohmann::json& j, const char* key, T& out) {
  if (auto it = j.find(key); it != j.end()) it->get_to(out);
}

}  // namespace

RunConfig default_config() { return RunConfig{}; }

nlohmann::json config_to_json(const RunConfig& c) {
  return {
      {"seed", c.seed},
      {"threads", c.threads},
      {"model",
       {{"d_s", c.model.d_s},
        {"d_z", c.model.d_z},
        {"input_scale", c.model.input_scale},
        {"generator",
         {{"front_widths", c.model.gen.front_widths},
          {"adain_widths", c.model.gen.adain_widths},
          {"adain_out_width", c.model.gen.adain_out_width},
          {"points_channels", c.model.gen.points_channels},
          {"tail_widths", c.model.gen.tail_widths},
          {"leaky_slope", c.model.gen.leaky_slope},
          {"eps_norm", c.model.gen.eps_norm}}},
        {"modulator", {{"hidden", c.model.mod.hidden}}},
        {"encoder",
         {{"point_widths", c.model.enc.point_widths},
          {"head_widths", c.model.enc.head_widths},
          {"input_transform", c.model.enc.input_transform},
          {"feature_transform", c.model.enc.feature_transform},
          {"feature_transform_at", c.model.enc.feature_transform_at},
          {"tnet_hidden", c.model.enc.tnet_hidden},
          {"eps_norm", c.model.enc.eps_norm}}}}},
      {"stage1",
       {{"lambda", c.stage1.lambda},
        {"sigma2", c.stage1.sigma2},
        {"lr_net", c.stage1.lr_net},
        {"lr_latent", c.stage1.lr_latent},
        {"lr_min", c.stage1.lr_min},
        {"latent_init_std", c.stage1.latent_init_std},
        {"epochs", c.stage1.epochs},
        {"batch_size", c.stage1.batch_size}}},
      {"stage2",
       {{"lr_net", c.stage2.lr_net},
        {"lr_enc", c.stage2.lr_enc},
        {"lr_min", c.stage2.lr_min},
        {"w_recon", c.stage2.w_recon},
        {"w_dis_z", c.stage2.w_dis_z},
        {"w_dis_s", c.stage2.w_dis_s},
        {"epochs", c.stage2.epochs},
        {"batch_size", c.stage2.batch_size},
        {"from_scratch", c.stage2.from_scratch}}},
      {"probe",
       {{"reg", c.probe.reg},
        {"lr", c.probe.lr},
        {"steps", c.probe.steps},
        {"standardize", c.probe.standardize}}},
      {"explain",
       {{"k", c.explain.k},
        {"samples", c.explain.samples},
        {"encoder", c.explain.encoder},
        {"mode", c.explain.mode},
        {"component", c.explain.component},
        {"flip_colors", c.explain.flip_colors}}},
      {"synth",
       {{"groups", c.synth.groups},
        {"deforms", c.synth.deforms},
        {"v_target", c.synth.v_target},
        {"pairs", c.synth.pairs}}},
  };
}

void apply_config_json(RunConfig& c, const nlohmann::json& j) {
  check_keys(j, "root",
             {"seed", "threads", "model", "stage1", "stage2", "probe",
              "explain", "synth"});
  get_if(j, "seed", c.seed);
  get_if(j, "threads", c.threads);
  if (auto it = j.find("model"); it != j.end()) {
    check_keys(*it, "model",
               {"d_s", "d_z", "input_scale", "generator", "modulator", "encoder"});
    get_if(*it, "d_s", c.model.d_s);
    get_if(*it, "d_z", c.model.d_z);
    get_if(*it, "input_scale", c.model.input_scale);
    if (auto g = it->find("generator"); g != it->end()) {
      check_keys(*g, "model.generator",
                 {"front_widths", "adain_widths", "adain_out_width",
                  "points_channels", "tail_widths", "leaky_slope", "eps_norm"});
      get_if(*g, "front_widths", c.model.gen.front_widths);
      get_if(*g, "adain_widths", c.model.gen.adain_widths);
      get_if(*g, "adain_out_width", c.model.gen.adain_out_width);
      get_if(*g, "points_channels", c.model.gen.points_channels);
      get_if(*g, "tail_widths", c.model.gen.tail_widths);
      get_if(*g, "leaky_slope", c.model.gen.leaky_slope);
      get_if(*g, "eps_norm", c.model.gen.eps_norm);
    }
    if (auto m = it->find("modulator"); m != it->end()) {
      check_keys(*m, "model.modulator", {"hidden"});
      get_if(*m, "hidden", c.model.mod.hidden);
    }
    if (auto e = it->find("encoder"); e != it->end()) {
      check_keys(*e, "model.encoder",
                 {"point_widths", "head_widths", "input_transform",
                  "feature_transform", "feature_transform_at", "tnet_hidden",
                  "eps_norm"});
      get_if(*e, "point_widths", c.model.enc.point_widths);
      get_if(*e, "head_widths", c.model.enc.head_widths);
      get_if(*e, "input_transform", c.model.enc.input_transform);
      get_if(*e, "feature_transform", c.model.enc.feature_transform);
      get_if(*e, "feature_transform_at", c.model.enc.feature_transform_at);
      get_if(*e, "tnet_hidden", c.model.enc.tnet_hidden);
      get_if(*e, "eps_norm", c.model.enc.eps_norm);
    }
  }
  if (auto it = j.find("stage1"); it != j.end()) {
    check_keys(*it, "stage1",
               {"lambda", "sigma2", "lr_net", "lr_latent", "lr_min",
                "latent_init_std", "epochs", "batch_size"});
    get_if(*it, "lambda", c.stage1.lambda);
    get_if(*it, "sigma2", c.stage1.sigma2);
    get_if(*it, "lr_net", c.stage1.lr_net);
    get_if(*it, "lr_latent", c.stage1.lr_latent);
    get_if(*it, "lr_min", c.stage1.lr_min);
    get_if(*it, "latent_init_std", c.stage1.latent_init_std);
    get_if(*it, "epochs", c.stage1.epochs);
    get_if(*it, "batch_size", c.stage1.batch_size);
  }
  if (auto it = j.find("stage2"); it != j.end()) {
    check_keys(*it, "stage2",
               {"lr_net", "lr_enc", "lr_min", "w_recon", "w_dis_z", "w_dis_s",
                "epochs", "batch_size", "from_scratch"});
    get_if(*it, "lr_net", c.stage2.lr_net);
    get_if(*it, "lr_enc", c.stage2.lr_enc);
    get_if(*it, "lr_min", c.stage2.lr_min);
    get_if(*it, "w_recon", c.stage2.w_recon);
    get_if(*it, "w_dis_z", c.stage2.w_dis_z);
    get_if(*it, "w_dis_s", c.stage2.w_dis_s);
    get_if(*it, "epochs", c.stage2.epochs);
    get_if(*it, "batch_size", c.stage2.batch_size);
    get_if(*it, "from_scratch", c.stage2.from_scratch);
  }
  if (auto it = j.find("probe"); it != j.end()) {
    check_keys(*it, "probe", {"reg", "lr", "steps", "standardize"});
    get_if(*it, "reg", c.probe.reg);
    get_if(*it, "lr", c.probe.lr);
    get_if(*it, "steps", c.probe.steps);
    get_if(*it, "standardize", c.probe.standardize);
  }
  if (auto it = j.find("explain"); it != j.end()) {
    check_keys(*it, "explain",
               {"k", "samples", "encoder", "mode", "component", "flip_colors"});
    get_if(*it, "k", c.explain.k);
    get_if(*it, "samples", c.explain.samples);
    get_if(*it, "encoder", c.explain.encoder);
    get_if(*it, "mode", c.explain.mode);
    get_if(*it, "component", c.explain.component);
    get_if(*it, "flip_colors", c.explain.flip_colors);
  }
  if (auto it = j.find("synth"); it != j.end()) {
    check_keys(*it, "synth", {"groups", "deforms", "v_target", "pairs"});
    get_if(*it, "groups", c.synth.groups);
    get_if(*it, "deforms", c.synth.deforms);
    get_if(*it, "v_target", c.synth.v_target);
    get_if(*it, "pairs", c.synth.pairs);
  }
}

RunConfig load_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError("config " + path + ": " + e.what());
  }
  RunConfig cfg = default_config();
  apply_config_json(cfg, j);
  validate_config(cfg);
  return cfg;
}

void validate_config(const RunConfig& c) {
  auto positive = [](double v, const char* name) {
    if (!(v > 0.0))
      throw ConfigError(std::string("config: ") + name + " must be positive");
  };
  positive(c.stage1.lr_net, "stage1.lr_net");
  positive(c.stage1.lr_latent, "stage1.lr_latent");
  positive(c.stage2.lr_net, "stage2.lr_net");
  positive(c.stage2.lr_enc, "stage2.lr_enc");
  positive(c.probe.lr, "probe.lr");
  if (c.stage1.lambda < 0.0 || c.stage1.sigma2 < 0.0)
    throw ConfigError("config: stage1 lambda/sigma2 must be >= 0");
  if (c.stage1.epochs == 0 || c.stage2.epochs == 0)
    throw ConfigError("config: epochs must be >= 1");
  if (c.stage1.batch_size == 0 || c.stage2.batch_size == 0)
    throw ConfigError("config: batch_size must be >= 1");
  if (c.probe.steps == 0) throw ConfigError("config: probe.steps must be >= 1");
  if (c.explain.k == 0 || c.explain.samples == 0)
    throw ConfigError("config: explain.k and explain.samples must be >= 1");
  if (c.explain.mode != "latent_similarity" && c.explain.mode != "component")
    throw ConfigError("config: explain.mode must be latent_similarity or "
                      "component, got '" + c.explain.mode + "'");
  if (c.explain.encoder != "s" && c.explain.encoder != "z")
    throw ConfigError("config: explain.encoder must be 's' or 'z', got '" +
                      c.explain.encoder + "'");
  if (c.synth.groups < 2 || c.synth.deforms < 2)
    throw ConfigError("config: synth needs >= 2 groups and >= 2 deforms");
}

}  // namespace dilo
