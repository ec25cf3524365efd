#include "dilo/dataset.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>

#include "dilo/errors.hpp"
#include "dilo/mesh_io.hpp"
#include "json.hpp"

namespace dilo {

Manifest load_manifest(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open manifest " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError("manifest " + path + ": " + e.what());
  }
  Manifest m;
  try {
    m.V = j.at("V").get<std::size_t>();
    m.F = j.at("F").get<std::size_t>();
    m.seed = j.at("seed").get<std::uint64_t>();
    for (const auto& e : j.at("entries")) {
      ManifestEntry me;
      me.id = e.at("id").get<std::string>();
      me.group = e.at("group").get<std::string>();
      me.deform_class = e.at("deform_class").get<int>();
      me.split = e.at("split").get<std::string>();
      me.path = e.at("path").get<std::string>();
      m.entries.push_back(std::move(me));
    }
  } catch (const nlohmann::json::exception& e) {
    throw ParseError("manifest " + path + ": " + e.what());
  }
  if (m.entries.empty())
    throw ManifestError("manifest " + path + ": no entries");
  std::set<std::string> seen;
  for (const auto& e : m.entries)
    if (!seen.insert(e.id).second)
      throw ManifestError("manifest " + path + ": duplicate instance id '" +
                          e.id + "'");
  return m;
}

std::vector<std::size_t> Dataset::split_indices(const std::string& split) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < manifest.entries.size(); ++i)
    if (manifest.entries[i].split == split) out.push_back(i);
  return out;
}

const Mesh& Dataset::by_instance(const std::string& id) const {
  auto it = by_id.find(id);
  if (it == by_id.end())
    throw ManifestError("unknown instance id '" + id + "'");
  return meshes[it->second];
}

Dataset load_dataset(const std::string& manifest_path) {
  Dataset ds;
  ds.manifest = load_manifest(manifest_path);
  ds.root = std::filesystem::path(manifest_path).parent_path().string();
  std::map<std::string, std::size_t> group_counts;
  for (std::size_t i = 0; i < ds.manifest.entries.size(); ++i) {
    const auto& e = ds.manifest.entries[i];
    const std::string full =
        (std::filesystem::path(ds.root) / e.path).string();
    if (!std::filesystem::exists(full))
      throw IoError("instance '" + e.id + "': missing file " + full);
    ds.meshes.push_back(load_obj(full));
    if (ds.meshes.back().cloud.V != ds.manifest.V)
      throw ManifestError("instance '" + e.id + "' has " +
                          std::to_string(ds.meshes.back().cloud.V) +
                          " vertices, manifest says " +
                          std::to_string(ds.manifest.V));
    ds.by_id[e.id] = i;
    ++group_counts[e.group];
  }
  ds.V = ds.manifest.V;
  for (const auto& [group, count] : group_counts)
    if (count < 2)
      std::fprintf(stderr,
                   "warning: group '%s' has a single instance; its shape code "
                   "is unconstrained by sharing\n",
                   group.c_str());
  return ds;
}

}  // namespace dilo
