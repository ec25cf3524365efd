#include "dilo/nets.hpp"

#include <cmath>

#include "dilo/errors.hpp"
#include "dilo/ops.hpp"
#include "dilo/rng.hpp"

namespace dilo {

namespace {

Linear make_linear(std::size_t fan_in, std::size_t fan_out, CounterRng& rng) {
  Tensor w = Tensor::zeros({fan_in, fan_out}, true);
  const double a = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  for (std::size_t i = 0; i < w.size(); ++i)
    w.data()[i] = rng.next_uniform(-a, a);
  return {w, Tensor::zeros({fan_out}, true)};
}

Linear make_zero_linear(std::size_t fan_in, std::size_t fan_out,
                        double bias_value) {
  Tensor b = Tensor::zeros({fan_out}, true);
  for (std::size_t i = 0; i < fan_out; ++i) b.data()[i] = bias_value;
  return {Tensor::zeros({fan_in, fan_out}, true), b};
}

Linear make_affine_norm(std::size_t width) {
  Tensor g = Tensor::zeros({width}, true);
  for (std::size_t i = 0; i < width; ++i) g.data()[i] = 1.0;
  return {g, Tensor::zeros({width}, true)};
}

// x [V,C] or [C]; bias broadcast over rows in the matrix case.
Tensor linear_apply(const Linear& l, const Tensor& x) {
  Tensor y = matmul(x, l.w);
  if (y.rank() == 1) return add(y, l.b);
  return add(y, broadcast(l.b, y.shape()));
}

void push(std::vector<NamedParam>& out, const std::string& name,
          const Linear& l, const char* wn = "w", const char* bn = "b") {
  out.push_back({name + "/" + wn, l.w});
  out.push_back({name + "/" + bn, l.b});
}

}  // namespace

Tensor adain(const Tensor& h, const Tensor& gamma, const Tensor& beta,
             double eps) {
  if (h.rank() != 1 || !shape_eq(gamma.shape(), h.shape()) ||
      !shape_eq(beta.shape(), h.shape()))
    throw DimensionError("adain: h " + shape_str(h.shape()) + ", gamma " +
                         shape_str(gamma.shape()) + ", beta " +
                         shape_str(beta.shape()));
  Tensor mu = mean_over_axis(h, 0);
  Tensor denom = scalar_add(sqrt_elem(variance_over_axis(h, 0)), eps);
  Tensor norm = div(sub(h, broadcast(mu, h.shape())),
                    broadcast(denom, h.shape()));
  return add(mul(gamma, norm), beta);
}

Tensor feature_norm(const Tensor& h, const Tensor& gamma, const Tensor& beta,
                    double eps) {
  if (h.rank() != 2 || gamma.rank() != 1 || gamma.dim(0) != h.dim(1) ||
      !shape_eq(beta.shape(), gamma.shape()))
    throw DimensionError("feature_norm: h " + shape_str(h.shape()) +
                         ", gamma " + shape_str(gamma.shape()));
  Tensor mu = mean_over_axis(h, 0);
  Tensor denom = scalar_add(sqrt_elem(variance_over_axis(h, 0)), eps);
  Tensor norm = div(sub(h, broadcast(mu, h.shape())),
                    broadcast(denom, h.shape()));
  return add(mul(broadcast(gamma, h.shape()), norm),
             broadcast(beta, h.shape()));
}

void validate_model_config(const ModelConfig& cfg, std::size_t v) {
  if (v == 0) throw ConfigError("model: V must be positive");
  if (cfg.d_s == 0 || cfg.d_z == 0)
    throw ConfigError("model: code widths must be positive");
  if (!(cfg.input_scale > 0.0))
    throw ConfigError("model: input_scale must be positive");
  if (cfg.gen.adain_widths.empty())
    throw ConfigError("model: need at least one styled block");
  if (cfg.gen.points_channels == 0)
    throw ConfigError("model: points_channels must be positive");
  for (std::size_t w : cfg.gen.adain_widths)
    if (w == 0) throw ConfigError("model: zero block width");
  if (cfg.gen.adain_out_width > 0) {
    if (cfg.gen.adain_out_width % v != 0)
      throw ConfigError("model: final block width " +
                        std::to_string(cfg.gen.adain_out_width) +
                        " not divisible by V=" + std::to_string(v));
    if (cfg.gen.adain_out_width / v != cfg.gen.points_channels)
      throw ConfigError("model: final block width " +
                        std::to_string(cfg.gen.adain_out_width) +
                        " implies " +
                        std::to_string(cfg.gen.adain_out_width / v) +
                        " channels, config says " +
                        std::to_string(cfg.gen.points_channels));
  }
  if (cfg.enc.point_widths.empty())
    throw ConfigError("model: encoder needs per-point layers");
  if (cfg.enc.feature_transform &&
      cfg.enc.feature_transform_at >= cfg.enc.point_widths.size())
    throw ConfigError("model: feature transform index out of range");
}

GeneratorNet::GeneratorNet(const GeneratorConfig& cfg, std::size_t d_z,
                           std::size_t v, CounterRng& rng)
    : cfg_(cfg), v_(v) {
  widths_ = cfg.adain_widths;
  widths_.push_back(v * cfg.points_channels);
  std::size_t prev = d_z;
  for (std::size_t w : cfg.front_widths) {
    front_.push_back(make_linear(prev, w, rng));
    prev = w;
  }
  front_.push_back(make_linear(prev, widths_[0], rng));
  for (std::size_t j = 0; j < widths_.size(); ++j) {
    const std::size_t next = j + 1 < widths_.size() ? widths_[j + 1] : widths_[j];
    blocks_.push_back(make_linear(widths_[j], next, rng));
  }
  prev = cfg.points_channels;
  for (std::size_t w : cfg.tail_widths) {
    tail_.push_back(make_linear(prev, w, rng));
    prev = w;
  }
  tail_.push_back(make_linear(prev, 3, rng));
}

Tensor GeneratorNet::forward(const Tensor& z,
                             const std::vector<Tensor>& gammas,
                             const std::vector<Tensor>& betas) const {
  if (gammas.size() != widths_.size() || betas.size() != widths_.size())
    throw DimensionError("generate: expected " + std::to_string(widths_.size()) +
                         " style pairs, got " + std::to_string(gammas.size()));
  Tensor h = z;
  for (const Linear& l : front_)
    h = leaky_relu(linear_apply(l, h), cfg_.leaky_slope);
  for (std::size_t j = 0; j < widths_.size(); ++j) {
    h = adain(h, gammas[j], betas[j], cfg_.eps_norm);
    h = leaky_relu(linear_apply(blocks_[j], h), cfg_.leaky_slope);
  }
  Tensor p = reshape(h, {v_, cfg_.points_channels});
  for (std::size_t i = 0; i < tail_.size(); ++i) {
    p = linear_apply(tail_[i], p);
    if (i + 1 < tail_.size()) p = leaky_relu(p, cfg_.leaky_slope);
  }
  return p;
}

void GeneratorNet::collect_params(std::vector<NamedParam>& out) const {
  for (std::size_t i = 0; i < front_.size(); ++i)
    push(out, "gen/front" + std::to_string(i), front_[i]);
  for (std::size_t i = 0; i < blocks_.size(); ++i)
    push(out, "gen/block" + std::to_string(i), blocks_[i]);
  for (std::size_t i = 0; i < tail_.size(); ++i)
    push(out, "gen/tail" + std::to_string(i), tail_[i]);
}

ModulatorNet::ModulatorNet(const ModulatorConfig& cfg, std::size_t d_s,
                           const std::vector<std::size_t>& block_widths,
                           double leaky_slope, CounterRng& rng)
    : slope_(leaky_slope) {
  trunk_ = make_linear(d_s, cfg.hidden, rng);
  for (std::size_t w : block_widths) {
    gamma_heads_.push_back(make_zero_linear(cfg.hidden, w, 1.0));
    beta_heads_.push_back(make_zero_linear(cfg.hidden, w, 0.0));
  }
}

void ModulatorNet::forward(const Tensor& s, std::vector<Tensor>& gammas,
                           std::vector<Tensor>& betas) const {
  Tensor t = leaky_relu(linear_apply(trunk_, s), slope_);
  gammas.clear();
  betas.clear();
  for (std::size_t j = 0; j < gamma_heads_.size(); ++j) {
    gammas.push_back(linear_apply(gamma_heads_[j], t));
    betas.push_back(linear_apply(beta_heads_[j], t));
  }
}

void ModulatorNet::collect_params(std::vector<NamedParam>& out) const {
  push(out, "mod/trunk", trunk_);
  for (std::size_t j = 0; j < gamma_heads_.size(); ++j) {
    push(out, "mod/gamma" + std::to_string(j), gamma_heads_[j]);
    push(out, "mod/beta" + std::to_string(j), beta_heads_[j]);
  }
}

EncoderNet::EncoderNet(const EncoderConfig& cfg, std::size_t d_code,
                       CounterRng& rng)
    : cfg_(cfg) {
  std::size_t prev = 3;
  if (cfg.input_transform) {
    TNet t;
    t.dim = 3;
    t.mlp = make_linear(3, cfg.tnet_hidden, rng);
    t.head = make_zero_linear(cfg.tnet_hidden, 9, 0.0);
    for (std::size_t i = 0; i < 3; ++i) t.head.b.data()[i * 3 + i] = 1.0;
    input_t_ = std::move(t);
  }
  for (std::size_t i = 0; i < cfg.point_widths.size(); ++i) {
    if (cfg.feature_transform && i == cfg.feature_transform_at) {
      TNet t;
      t.dim = prev;
      t.mlp = make_linear(prev, cfg.tnet_hidden, rng);
      t.head = make_zero_linear(cfg.tnet_hidden, prev * prev, 0.0);
      for (std::size_t j = 0; j < prev; ++j)
        t.head.b.data()[j * prev + j] = 1.0;
      feature_t_ = std::move(t);
    }
    convs_.push_back(make_linear(prev, cfg.point_widths[i], rng));
    norms_.push_back(make_affine_norm(cfg.point_widths[i]));
    prev = cfg.point_widths[i];
  }
  for (std::size_t w : cfg.head_widths) {
    head_.push_back(make_linear(prev, w, rng));
    prev = w;
  }
  head_.push_back(make_linear(prev, d_code, rng));
}

Tensor EncoderNet::apply_tnet(const TNet& t, const Tensor& x) const {
  Tensor h = relu(linear_apply(t.mlp, x));
  Tensor pooled = max_over_axis(h, 0);
  Tensor flat = linear_apply(t.head, pooled);
  return matmul(x, reshape(flat, {t.dim, t.dim}));
}

Tensor EncoderNet::forward(const Tensor& x) const {
  if (x.rank() != 2 || x.dim(1) != 3 || x.dim(0) == 0)
    throw DimensionError("encode: expected nonempty [V,3], got " +
                         shape_str(x.shape()));
  Tensor h = x;
  if (input_t_) h = apply_tnet(*input_t_, h);
  for (std::size_t i = 0; i < convs_.size(); ++i) {
    if (feature_t_ && i == cfg_.feature_transform_at)
      h = apply_tnet(*feature_t_, h);
    h = linear_apply(convs_[i], h);
    h = feature_norm(h, norms_[i].w, norms_[i].b, cfg_.eps_norm);
    h = relu(h);
  }
  Tensor p = max_over_axis(h, 0);
  for (std::size_t i = 0; i < head_.size(); ++i) {
    p = linear_apply(head_[i], p);
    if (i + 1 < head_.size()) p = relu(p);
  }
  return p;
}

void EncoderNet::collect_params(std::vector<NamedParam>& out) const {
  // Names get an encoder prefix in Model::params.
  if (input_t_) {
    push(out, "t_in/mlp", input_t_->mlp);
    push(out, "t_in/head", input_t_->head);
  }
  if (feature_t_) {
    push(out, "t_feat/mlp", feature_t_->mlp);
    push(out, "t_feat/head", feature_t_->head);
  }
  for (std::size_t i = 0; i < convs_.size(); ++i) {
    push(out, "conv" + std::to_string(i), convs_[i]);
    push(out, "norm" + std::to_string(i), norms_[i], "g", "be");
  }
  for (std::size_t i = 0; i < head_.size(); ++i)
    push(out, "head" + std::to_string(i), head_[i]);
}

Model Model::build(const ModelConfig& cfg, std::size_t v, std::uint64_t seed,
                   bool with_encoders) {
  validate_model_config(cfg, v);
  Model m;
  m.cfg = cfg;
  m.V = v;
  {
    CounterRng rng(seed, "init/gen");
    m.gen = GeneratorNet(cfg.gen, cfg.d_z, v, rng);
  }
  {
    CounterRng rng(seed, "init/mod");
    m.mod = ModulatorNet(cfg.mod, cfg.d_s, m.gen.block_widths(),
                         cfg.gen.leaky_slope, rng);
  }
  if (with_encoders) m.add_encoders(seed);
  return m;
}

void Model::add_encoders(std::uint64_t seed) {
  {
    CounterRng rng(seed, "init/enc_s");
    enc_s = EncoderNet(cfg.enc, cfg.d_s, rng);
  }
  {
    CounterRng rng(seed, "init/enc_z");
    enc_z = EncoderNet(cfg.enc, cfg.d_z, rng);
  }
}

Tensor Model::generate(const Tensor& z_in, const Tensor& s) const {
  if (z_in.rank() != 1 || z_in.dim(0) != cfg.d_z)
    throw DimensionError("generate: z " + shape_str(z_in.shape()) +
                         ", expected [" + std::to_string(cfg.d_z) + "]");
  if (s.rank() != 1 || s.dim(0) != cfg.d_s)
    throw DimensionError("generate: s " + shape_str(s.shape()) +
                         ", expected [" + std::to_string(cfg.d_s) + "]");
  std::vector<Tensor> gammas, betas;
  mod.forward(s, gammas, betas);
  return gen.forward(z_in, gammas, betas);
}

Tensor Model::encode_s(const Tensor& x) const {
  if (!enc_s) throw ContractError("encode_s: model has no encoders");
  return enc_s->forward(x);
}

Tensor Model::encode_z(const Tensor& x) const {
  if (!enc_z) throw ContractError("encode_z: model has no encoders");
  return enc_z->forward(x);
}

std::vector<NamedParam> Model::params() const {
  std::vector<NamedParam> out;
  gen.collect_params(out);
  mod.collect_params(out);
  if (enc_s) {
    std::vector<NamedParam> tmp;
    enc_s->collect_params(tmp);
    for (auto& p : tmp) out.push_back({"enc_s/" + p.name, p.tensor});
  }
  if (enc_z) {
    std::vector<NamedParam> tmp;
    enc_z->collect_params(tmp);
    for (auto& p : tmp) out.push_back({"enc_z/" + p.name, p.tensor});
  }
  return out;
}

}  // namespace dilo
