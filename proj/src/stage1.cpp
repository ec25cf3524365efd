#include "dilo/stage1.hpp"

#include <cmath>
#include <cstdio>
#include <numeric>

#include "dilo/errors.hpp"
#include "dilo/geometry.hpp"
#include "dilo/ops.hpp"
#include "dilo/rng.hpp"

namespace dilo {

void write_loss_csv(const std::string& path, const std::vector<EpochLog>& curve,
                    const std::string& header) {
  std::FILE* f = std::fopen(path.c_str(), "wb");
  if (!f) throw IoError("cannot open '" + path + "' for writing");
  std::fprintf(f, "%s\n", header.c_str());
  for (const auto& row : curve) {
    std::fprintf(f, "%zu,%.17g,%.17g,%.17g\n", row.epoch, row.loss, row.lr_a,
                 row.lr_b);
  }
  std::fclose(f);
}

Tensor stage1_loss(Model& model, const Tensor& z, const Tensor& s,
                   const Tensor& target_dist, double lambda,
                   const Tensor* noise) {
  Tensor zn = z;
  if (noise != nullptr) {
    if (!shape_eq(noise->shape(), z.shape())) {
      throw DimensionError("stage1_loss: noise shape " + shape_str(noise->shape()) +
                           " does not match code shape " + shape_str(z.shape()));
    }
    zn = add(z, *noise);
  }
  Tensor y = model.generate(zn, s);
  Tensor loss = recon_loss_t(y, target_dist);
  if (lambda != 0.0) {
    loss = add(loss, scalar_mul(sum_of_squares(z), lambda));
  }
  return loss;
}

namespace {

// Precomputed, untracked target distance matrices for a list of instances.
// Targets live in network space: scaling every point by `scale` scales each
// pairwise distance by the same factor, so we apply it to the matrix directly.
std::vector<Tensor> target_dists(const Dataset& data,
                                 const std::vector<std::size_t>& indices,
                                 double scale) {
  std::vector<Tensor> out;
  out.reserve(indices.size());
  for (std::size_t idx : indices) {
    DistanceMatrix d = pairwise(data.meshes[idx].cloud);
    if (scale != 1.0) {
      for (double& x : d.d) x *= scale;
    }
    out.push_back(Tensor::from_data({d.V, d.V}, d.d));
  }
  return out;
}

}  // namespace

Stage1Result train_stage1(const Dataset& data, const RunConfig& cfg,
                          bool verbose) {
  const Stage1Config& sc = cfg.stage1;
  const std::vector<std::size_t> train = data.split_indices("train");
  if (train.empty()) {
    throw ContractError("train_stage1: dataset has no train split");
  }
  const std::size_t n = train.size();

  Stage1Result res;
  res.model = Model::build(cfg.model, data.V, cfg.seed);

  std::map<std::string, std::string> inst_groups;
  for (std::size_t idx : train) {
    inst_groups[data.manifest.entries[idx].id] = data.manifest.entries[idx].group;
  }
  res.latents.init(inst_groups, cfg.model.d_s, cfg.model.d_z,
                   sc.latent_init_std, cfg.seed);

  std::vector<Tensor> targets =
      target_dists(data, train, cfg.model.input_scale);

  auto net_params = res.model.params();
  for (const auto& p : net_params) {
    res.net_adam[p.name].init(p.tensor.size());
  }

  CosineSchedule sched_net(sc.lr_net, sc.lr_min, sc.epochs);
  CosineSchedule sched_lat(sc.lr_latent, sc.lr_min, sc.epochs);
  AdamConfig adam_cfg;
  CounterRng shuffle_rng(cfg.seed, "stage1/shuffle");
  CounterRng noise_rng(cfg.seed, "stage1/noise");
  const double sigma = std::sqrt(sc.sigma2);

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);

  for (std::size_t epoch = 0; epoch < sc.epochs; ++epoch) {
    const double lr_net = sched_net.lr_at(epoch);
    const double lr_lat = sched_lat.lr_at(epoch);
    shuffle_rng.shuffle(order);
    double total = 0.0;
    for (std::size_t k = 0; k < n; k += sc.batch_size) {
      const std::size_t b = std::min(sc.batch_size, n - k);
      for (auto& p : net_params) p.tensor.zero_grad();
      for (auto& [g, entry] : res.latents.groups()) {
        (void)g;
        entry.code.zero_grad();
      }
      for (auto& [id, entry] : res.latents.instances()) {
        (void)id;
        entry.code.zero_grad();
      }

      Graph graph;
      Tensor batch_loss;
      for (std::size_t j = 0; j < b; ++j) {
        const std::size_t local = order[k + j];
        const ManifestEntry& me = data.manifest.entries[train[local]];
        Tensor z = res.latents.deform_code(me.id);
        Tensor s = res.latents.shape_code(me.group);
        Tensor noise;
        const Tensor* noise_ptr = nullptr;
        if (sc.sigma2 > 0.0) {
          noise = Tensor::zeros(z.shape());
          noise_rng.fill_normal(noise.data(), noise.size(), sigma);
          noise_ptr = &noise;
        }
        Tensor li = stage1_loss(res.model, z, s, targets[local], sc.lambda,
                                noise_ptr);
        batch_loss = (j == 0) ? li : add(batch_loss, li);
      }
      batch_loss = scalar_mul(batch_loss, 1.0 / static_cast<double>(b));
      graph.backward(batch_loss);
      total += batch_loss.item() * static_cast<double>(b);

      for (auto& p : net_params) {
        adam_step(p.tensor, res.net_adam[p.name], lr_net, adam_cfg, p.name);
      }
      for (auto& [g, entry] : res.latents.groups()) {
        adam_step(entry.code, entry.adam, lr_lat, adam_cfg, "s/" + g);
      }
      for (auto& [id, entry] : res.latents.instances()) {
        adam_step(entry.code, entry.adam, lr_lat, adam_cfg, "z/" + id);
      }
    }
    const double mean_loss = total / static_cast<double>(n);
    res.curve.push_back({epoch, mean_loss, lr_net, lr_lat});
    if (verbose &&
        (epoch % std::max<std::size_t>(1, sc.epochs / 10) == 0 ||
         epoch + 1 == sc.epochs)) {
      std::fprintf(stderr, "[stage1] epoch %zu/%zu loss=%.6f lr_net=%.3g lr_latent=%.3g\n",
                   epoch + 1, sc.epochs, mean_loss, lr_net, lr_lat);
    }
  }
  return res;
}

}  // namespace dilo
