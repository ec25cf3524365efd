#include "dilo/stage2.hpp"

#include <cstdio>
#include <numeric>

#include "dilo/errors.hpp"
#include "dilo/geometry.hpp"
#include "dilo/ops.hpp"
#include "dilo/rng.hpp"

namespace dilo {

Tensor code_mse(const Tensor& pred, const Tensor& target) {
  if (pred.size() != target.size() || pred.size() == 0) {
    throw ContractError("code_mse: prediction and target sizes differ (" +
                        std::to_string(pred.size()) + " vs " +
                        std::to_string(target.size()) + ")");
  }
  return scalar_mul(sum_of_squares(sub(pred, target)),
                    1.0 / static_cast<double>(pred.size()));
}

Tensor stage2_loss(Model& model, const Tensor& x_points,
                   const Tensor& target_dist, const Tensor& z_star,
                   const Tensor& s_star, const Stage2Config& sc) {
  Tensor zh = model.encode_z(x_points);
  Tensor sh = model.encode_s(x_points);
  Tensor y = model.generate(zh, sh);
  Tensor loss = scalar_mul(recon_loss_t(y, target_dist), sc.w_recon);
  loss = add(loss, scalar_mul(code_mse(zh, z_star), sc.w_dis_z));
  loss = add(loss, scalar_mul(code_mse(sh, s_star), sc.w_dis_s));
  return loss;
}

Stage2Result train_stage2(const Dataset& data, const Checkpoint& stage1_ck,
                          const RunConfig& cfg, bool verbose) {
  const Stage2Config& sc = cfg.stage2;
  if (stage1_ck.kind != "stage1") {
    throw ContractError("train_stage2: parent checkpoint has kind '" +
                        stage1_ck.kind + "', expected 'stage1'");
  }
  if (!stage1_ck.latents.has_value()) {
    throw ContractError("train_stage2: parent checkpoint carries no latent codes");
  }
  if (stage1_ck.V != data.V) {
    throw ContractError("train_stage2: checkpoint vertex count " +
                        std::to_string(stage1_ck.V) +
                        " does not match dataset (" + std::to_string(data.V) + ")");
  }
  const std::vector<std::size_t> train = data.split_indices("train");
  if (train.empty()) {
    throw ContractError("train_stage2: dataset has no train split");
  }
  const std::size_t n = train.size();
  const LatentTable& lt = *stage1_ck.latents;

  Stage2Result res;
  res.parent_hash = stage1_ck.params_hash;
  if (sc.from_scratch) {
    res.model = Model::build(stage1_ck.config.model, data.V, cfg.seed);
  } else {
    res.model = model_from_checkpoint(stage1_ck);
  }
  res.model.add_encoders(cfg.seed);

  // Frozen per-instance targets, cloned untracked so no gradient reaches them.
  // Encoder inputs and distance targets live in network space, i.e. world
  // geometry times input_scale, matching how the generator was trained.
  const double scale = stage1_ck.config.model.input_scale;
  std::vector<Tensor> z_star(n), s_star(n), xs(n), targets(n);
  for (std::size_t i = 0; i < n; ++i) {
    const ManifestEntry& me = data.manifest.entries[train[i]];
    if (lt.instances().find(me.id) == lt.instances().end()) {
      throw ContractError("train_stage2: checkpoint has no code for train instance '" +
                          me.id + "'; dataset and checkpoint disagree");
    }
    const Tensor& z = lt.deform_code(me.id);
    const Tensor& s = lt.shape_code(me.group);
    z_star[i] = Tensor::from_data(z.shape(), z.values());
    s_star[i] = Tensor::from_data(s.shape(), s.values());
    xs[i] = cloud_to_tensor(data.meshes[train[i]].cloud);
    if (scale != 1.0) {
      for (std::size_t t = 0; t < xs[i].size(); ++t) xs[i].data()[t] *= scale;
    }
    DistanceMatrix d = pairwise(data.meshes[train[i]].cloud);
    if (scale != 1.0) {
      for (double& x : d.d) x *= scale;
    }
    targets[i] = Tensor::from_data({d.V, d.V}, d.d);
  }

  auto all_params = res.model.params();
  for (const auto& p : all_params) res.adam[p.name].init(p.tensor.size());
  auto is_encoder = [](const std::string& name) {
    return name.rfind("enc_", 0) == 0;
  };

  CosineSchedule sched_net(sc.lr_net, sc.lr_min, sc.epochs);
  CosineSchedule sched_enc(sc.lr_enc, sc.lr_min, sc.epochs);
  AdamConfig adam_cfg;
  CounterRng shuffle_rng(cfg.seed, "stage2/shuffle");

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);

  for (std::size_t epoch = 0; epoch < sc.epochs; ++epoch) {
    const double lr_net = sched_net.lr_at(epoch);
    const double lr_enc = sched_enc.lr_at(epoch);
    shuffle_rng.shuffle(order);
    double total = 0.0;
    for (std::size_t k = 0; k < n; k += sc.batch_size) {
      const std::size_t b = std::min(sc.batch_size, n - k);
      for (auto& p : all_params) p.tensor.zero_grad();

      Graph graph;
      Tensor batch_loss;
      for (std::size_t j = 0; j < b; ++j) {
        const std::size_t i = order[k + j];
        Tensor li = stage2_loss(res.model, xs[i], targets[i], z_star[i],
                                s_star[i], sc);
        batch_loss = (j == 0) ? li : add(batch_loss, li);
      }
      batch_loss = scalar_mul(batch_loss, 1.0 / static_cast<double>(b));
      graph.backward(batch_loss);
      total += batch_loss.item() * static_cast<double>(b);

      for (auto& p : all_params) {
        adam_step(p.tensor, res.adam[p.name],
                  is_encoder(p.name) ? lr_enc : lr_net, adam_cfg, p.name);
      }
    }
    const double mean_loss = total / static_cast<double>(n);
    res.curve.push_back({epoch, mean_loss, lr_net, lr_enc});
    if (verbose &&
        (epoch % std::max<std::size_t>(1, sc.epochs / 10) == 0 ||
         epoch + 1 == sc.epochs)) {
      std::fprintf(stderr, "[stage2] epoch %zu/%zu loss=%.6f lr_net=%.3g lr_enc=%.3g\n",
                   epoch + 1, sc.epochs, mean_loss, lr_net, lr_enc);
    }
  }
  return res;
}

}  // namespace dilo
