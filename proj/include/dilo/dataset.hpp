#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "dilo/geometry.hpp"

namespace dilo {

struct ManifestEntry {
  std::string id, group, split, path;
  int deform_class = -1;
};

struct Manifest {
  std::size_t V = 0;
  std::size_t F = 0;
  std::uint64_t seed = 0;
  std::vector<ManifestEntry> entries;
};

// Parses and validates manifest.json: required fields, unique ids, non-empty
// entry list. Duplicate ids raise ManifestError.
Manifest load_manifest(const std::string& path);

// Instances grouped by shared identity. Works identically for generated
// datasets and external collections following the same manifest layout.
struct Dataset {
  Manifest manifest;
  std::string root;           // directory containing the manifest
  std::vector<Mesh> meshes;   // aligned with manifest.entries

  std::map<std::string, std::size_t> by_id;
  std::size_t V = 0;

  std::vector<std::size_t> split_indices(const std::string& split) const;
  const Mesh& by_instance(const std::string& id) const;
};

// Loads every instance named by the manifest; every mesh must agree on V
// (ManifestError otherwise). Groups with a single instance only warn: they
// train, they just cannot constrain shape-code sharing.
Dataset load_dataset(const std::string& manifest_path);

}  // namespace dilo
