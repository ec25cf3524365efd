#include "dilo/latents.hpp"

#include "dilo/errors.hpp"
#include "dilo/rng.hpp"

namespace dilo {

void LatentTable::init(const std::map<std::string, std::string>& instance_groups,
                       std::size_t d_s, std::size_t d_z, double init_std,
                       std::uint64_t seed) {
  if (d_s == 0 || d_z == 0) {
    throw ContractError("LatentTable::init: latent dimensions must be positive");
  }
  if (instance_groups.empty()) {
    throw ContractError("LatentTable::init: no instances");
  }
  d_s_ = d_s;
  d_z_ = d_z;
  groups_.clear();
  instances_.clear();
  for (const auto& [inst, group] : instance_groups) {
    groups_[group];  // create
    instances_[inst].group = group;
  }
  CounterRng rng_s(seed, "latent/shape");
  for (auto& [name, entry] : groups_) {
    (void)name;
    entry.code = Tensor::zeros({d_s}, /*requires_grad=*/true);
    rng_s.fill_normal(entry.code.data(), d_s, init_std);
    entry.adam.init(d_s);
  }
  CounterRng rng_z(seed, "latent/deform");
  for (auto& [name, entry] : instances_) {
    (void)name;
    entry.code = Tensor::zeros({d_z}, /*requires_grad=*/true);
    rng_z.fill_normal(entry.code.data(), d_z, init_std);
    entry.adam.init(d_z);
  }
}

Tensor& LatentTable::shape_code(const std::string& group) {
  auto it = groups_.find(group);
  if (it == groups_.end()) {
    throw ContractError("LatentTable: unknown group '" + group + "'");
  }
  return it->second.code;
}

Tensor& LatentTable::deform_code(const std::string& instance) {
  auto it = instances_.find(instance);
  if (it == instances_.end()) {
    throw ContractError("LatentTable: unknown instance '" + instance + "'");
  }
  return it->second.code;
}

const Tensor& LatentTable::shape_code(const std::string& group) const {
  auto it = groups_.find(group);
  if (it == groups_.end()) {
    throw ContractError("LatentTable: unknown group '" + group + "'");
  }
  return it->second.code;
}

const Tensor& LatentTable::deform_code(const std::string& instance) const {
  auto it = instances_.find(instance);
  if (it == instances_.end()) {
    throw ContractError("LatentTable: unknown instance '" + instance + "'");
  }
  return it->second.code;
}

const std::string& LatentTable::group_of(const std::string& instance) const {
  auto it = instances_.find(instance);
  if (it == instances_.end()) {
    throw ContractError("LatentTable: unknown instance '" + instance + "'");
  }
  return it->second.group;
}

AdamState& LatentTable::shape_state(const std::string& group) {
  auto it = groups_.find(group);
  if (it == groups_.end()) {
    throw ContractError("LatentTable: unknown group '" + group + "'");
  }
  return it->second.adam;
}

AdamState& LatentTable::deform_state(const std::string& instance) {
  auto it = instances_.find(instance);
  if (it == instances_.end()) {
    throw ContractError("LatentTable: unknown instance '" + instance + "'");
  }
  return it->second.adam;
}

}  // namespace dilo
