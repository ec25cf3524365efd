#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "dilo/optim.hpp"
#include "dilo/tensor.hpp"

namespace dilo {

// Free latent codes for stage 1. Shape codes are stored once per group and
// handed out by reference, so instances of a group share storage and can
// never disagree; deformation codes are per instance. Iteration everywhere
// is in sorted id order.
class LatentTable {
 public:
  struct GroupEntry {
    Tensor code;
    AdamState adam;
  };
  struct InstanceEntry {
    std::string group;
    Tensor code;
    AdamState adam;
  };

  LatentTable() = default;

  // instance -> group map; codes drawn N(0, init_std^2) from the seed's
  // latent streams, groups first (sorted), then instances (sorted).
  void init(const std::map<std::string, std::string>& instance_groups,
            std::size_t d_s, std::size_t d_z, double init_std,
            std::uint64_t seed);

  Tensor& shape_code(const std::string& group);
  Tensor& deform_code(const std::string& instance);
  const Tensor& shape_code(const std::string& group) const;
  const Tensor& deform_code(const std::string& instance) const;
  const std::string& group_of(const std::string& instance) const;
  AdamState& shape_state(const std::string& group);
  AdamState& deform_state(const std::string& instance);

  std::map<std::string, GroupEntry>& groups() { return groups_; }
  std::map<std::string, InstanceEntry>& instances() { return instances_; }
  const std::map<std::string, GroupEntry>& groups() const { return groups_; }
  const std::map<std::string, InstanceEntry>& instances() const {
    return instances_;
  }

  std::size_t d_s() const { return d_s_; }
  std::size_t d_z() const { return d_z_; }

 private:
  std::size_t d_s_ = 0, d_z_ = 0;
  std::map<std::string, GroupEntry> groups_;
  std::map<std::string, InstanceEntry> instances_;
};

}  // namespace dilo
