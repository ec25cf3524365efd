#include "dilo/checkpoint.hpp"

#include <bit>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <limits>

#include "json.hpp"

#include "dilo/errors.hpp"

namespace dilo {

static_assert(std::endian::native == std::endian::little,
              "checkpoint format assumes a little-endian host");
static_assert(std::numeric_limits<double>::is_iec559,
              "checkpoint format assumes IEEE-754 float64");

using nlohmann::json;

namespace {

constexpr std::uint64_t kFnvOffset = 1469598103934665603ull;
constexpr std::uint64_t kFnvPrime = 1099511628211ull;

std::string to_hex(std::uint64_t h) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return std::string(buf);
}

struct Entry {
  std::string name;
  Shape shape;
  std::uint64_t offset = 0;  // bytes from the start of the file
};

json entries_to_json(const std::vector<Entry>& entries) {
  json arr = json::array();
  for (const auto& e : entries) {
    json shape = json::array();
    for (std::size_t d : e.shape) shape.push_back(d);
    arr.push_back({{"name", e.name}, {"shape", shape}, {"offset", e.offset}});
  }
  return arr;
}

std::vector<Entry> entries_from_json(const json& arr, const std::string& where) {
  if (!arr.is_array()) {
    throw IoError("checkpoint meta.json: '" + where + "' is not an array");
  }
  std::vector<Entry> out;
  for (const auto& item : arr) {
    Entry e;
    e.name = item.at("name").get<std::string>();
    for (const auto& d : item.at("shape")) e.shape.push_back(d.get<std::size_t>());
    e.offset = item.at("offset").get<std::uint64_t>();
    out.push_back(std::move(e));
  }
  return out;
}

// Appends a named block of doubles to the buffer and records its index entry.
void put_block(std::vector<Entry>& entries, std::vector<double>& buf,
               const std::string& name, const Shape& shape,
               const double* vals, std::size_t n) {
  entries.push_back({name, shape, buf.size() * sizeof(double)});
  buf.insert(buf.end(), vals, vals + n);
}

void write_bin(const std::string& path, const std::vector<double>& buf) {
  std::FILE* f = std::fopen(path.c_str(), "wb");
  if (!f) throw IoError("cannot open '" + path + "' for writing");
  if (!buf.empty() &&
      std::fwrite(buf.data(), sizeof(double), buf.size(), f) != buf.size()) {
    std::fclose(f);
    throw IoError("short write to '" + path + "'");
  }
  std::fclose(f);
}

std::vector<unsigned char> read_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path + "' for reading");
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)),
                                   std::istreambuf_iterator<char>());
  return bytes;
}

// Validates the index against the file size and unpacks named blocks.
std::map<std::string, std::pair<Shape, std::vector<double>>> unpack(
    const std::vector<Entry>& entries, const std::vector<unsigned char>& bytes,
    const std::string& path) {
  std::uint64_t expected = 0;
  for (const auto& e : entries) expected += shape_size(e.shape) * sizeof(double);
  if (bytes.size() != expected) {
    throw IoError("'" + path + "': size " + std::to_string(bytes.size()) +
                  " bytes does not match index total " + std::to_string(expected));
  }
  std::map<std::string, std::pair<Shape, std::vector<double>>> out;
  for (const auto& e : entries) {
    std::size_t n = shape_size(e.shape);
    if (e.offset + n * sizeof(double) > bytes.size()) {
      throw IoError("'" + path + "': entry '" + e.name + "' overruns the file");
    }
    std::vector<double> vals(n);
    if (n > 0) std::memcpy(vals.data(), bytes.data() + e.offset, n * sizeof(double));
    if (!out.emplace(e.name, std::make_pair(e.shape, std::move(vals))).second) {
      throw IoError("'" + path + "': duplicate entry '" + e.name + "'");
    }
  }
  return out;
}

const std::pair<Shape, std::vector<double>>& need(
    const std::map<std::string, std::pair<Shape, std::vector<double>>>& blocks,
    const std::string& name, const std::string& path) {
  auto it = blocks.find(name);
  if (it == blocks.end()) {
    throw IoError("'" + path + "': missing entry '" + name + "'");
  }
  return it->second;
}

}  // namespace

std::string fnv1a_hex(const void* data, std::size_t n) {
  const auto* p = static_cast<const unsigned char*>(data);
  std::uint64_t h = kFnvOffset;
  for (std::size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= kFnvPrime;
  }
  return to_hex(h);
}

std::string file_fnv1a_hex(const std::string& path) {
  auto bytes = read_bytes(path);
  return fnv1a_hex(bytes.data(), bytes.size());
}

void save_checkpoint(const std::string& dir, const Checkpoint& ck) {
  if (ck.kind != "stage1" && ck.kind != "stage2") {
    throw ContractError("save_checkpoint: kind must be 'stage1' or 'stage2', got '" +
                        ck.kind + "'");
  }
  if (ck.kind == "stage1" && !ck.latents.has_value()) {
    throw ContractError("save_checkpoint: stage1 checkpoint requires latent codes");
  }
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create directory '" + dir + "': " + ec.message());

  // Parameter file: values in layout order, then Adam moments per parameter.
  std::vector<Entry> pentries;
  std::vector<double> pbuf;
  json adam_steps = json::object();
  for (const auto& p : ck.params) {
    put_block(pentries, pbuf, "p/" + p.name, p.tensor.shape(), p.tensor.data(),
              p.tensor.size());
  }
  for (const auto& p : ck.params) {
    auto it = ck.adam.find(p.name);
    if (it == ck.adam.end()) {
      throw ContractError("save_checkpoint: no Adam state for parameter '" +
                          p.name + "'");
    }
    const AdamState& st = it->second;
    if (st.m.size() != p.tensor.size() || st.v.size() != p.tensor.size()) {
      throw ContractError("save_checkpoint: Adam state size mismatch for '" +
                          p.name + "'");
    }
    put_block(pentries, pbuf, "m/" + p.name, p.tensor.shape(), st.m.data(),
              st.m.size());
    put_block(pentries, pbuf, "v/" + p.name, p.tensor.shape(), st.v.data(),
              st.v.size());
    adam_steps[p.name] = st.step;
  }
  const std::string params_path = dir + "/params.bin";
  write_bin(params_path, pbuf);
  std::string params_hash =
      fnv1a_hex(pbuf.data(), pbuf.size() * sizeof(double));

  json meta;
  meta["format_version"] = ck.format_version;
  meta["kind"] = ck.kind;
  meta["V"] = ck.V;
  meta["config"] = config_to_json(ck.config);
  meta["params"] = entries_to_json(pentries);
  meta["adam_steps"] = adam_steps;
  json checksums;
  checksums["params.bin"] = params_hash;

  if (ck.latents.has_value()) {
    const LatentTable& lt = *ck.latents;
    std::vector<Entry> lentries;
    std::vector<double> lbuf;
    json lsteps = json::object();
    json inst_groups = json::object();
    for (const auto& [g, entry] : lt.groups()) {
      put_block(lentries, lbuf, "s/" + g, entry.code.shape(), entry.code.data(),
                entry.code.size());
      put_block(lentries, lbuf, "m_s/" + g, entry.code.shape(),
                entry.adam.m.data(), entry.adam.m.size());
      put_block(lentries, lbuf, "v_s/" + g, entry.code.shape(),
                entry.adam.v.data(), entry.adam.v.size());
      lsteps["s/" + g] = entry.adam.step;
    }
    for (const auto& [id, entry] : lt.instances()) {
      inst_groups[id] = entry.group;
      put_block(lentries, lbuf, "z/" + id, entry.code.shape(), entry.code.data(),
                entry.code.size());
      put_block(lentries, lbuf, "m_z/" + id, entry.code.shape(),
                entry.adam.m.data(), entry.adam.m.size());
      put_block(lentries, lbuf, "v_z/" + id, entry.code.shape(),
                entry.adam.v.data(), entry.adam.v.size());
      lsteps["z/" + id] = entry.adam.step;
    }
    const std::string latents_path = dir + "/latents.bin";
    write_bin(latents_path, lbuf);
    checksums["latents.bin"] =
        fnv1a_hex(lbuf.data(), lbuf.size() * sizeof(double));
    json lmeta;
    lmeta["d_s"] = lt.d_s();
    lmeta["d_z"] = lt.d_z();
    lmeta["instances"] = inst_groups;
    lmeta["entries"] = entries_to_json(lentries);
    lmeta["adam_steps"] = lsteps;
    meta["latents"] = lmeta;
  }
  if (!ck.parent_hash.empty()) meta["parent_hash"] = ck.parent_hash;
  meta["checksums"] = checksums;

  std::ofstream out(dir + "/meta.json");
  if (!out) throw IoError("cannot open '" + dir + "/meta.json' for writing");
  out << meta.dump(2) << "\n";
  if (!out) throw IoError("short write to '" + dir + "/meta.json'");
}

Checkpoint load_checkpoint(const std::string& dir) {
  const std::string meta_path = dir + "/meta.json";
  std::ifstream in(meta_path);
  if (!in) throw IoError("cannot open '" + meta_path + "' for reading");
  json meta;
  try {
    in >> meta;
  } catch (const json::exception& e) {
    throw ParseError("'" + meta_path + "': " + e.what());
  }

  Checkpoint ck;
  try {
    ck.format_version = meta.at("format_version").get<int>();
    if (ck.format_version != 1) {
      throw IoError("'" + meta_path + "': unsupported format_version " +
                    std::to_string(ck.format_version));
    }
    ck.kind = meta.at("kind").get<std::string>();
    if (ck.kind != "stage1" && ck.kind != "stage2") {
      throw IoError("'" + meta_path + "': unknown kind '" + ck.kind + "'");
    }
    ck.V = meta.at("V").get<std::size_t>();
    apply_config_json(ck.config, meta.at("config"));
    if (meta.contains("parent_hash")) {
      ck.parent_hash = meta.at("parent_hash").get<std::string>();
    }

    const std::string params_path = dir + "/params.bin";
    auto pbytes = read_bytes(params_path);
    std::string want = meta.at("checksums").at("params.bin").get<std::string>();
    std::string got = fnv1a_hex(pbytes.data(), pbytes.size());
    if (got != want) {
      throw IoError("'" + params_path + "': checksum mismatch (expected " + want +
                    ", got " + got + "); file is corrupted");
    }
    ck.params_hash = got;
    auto pentries = entries_from_json(meta.at("params"), "params");
    auto blocks = unpack(pentries, pbytes, params_path);
    const json& steps = meta.at("adam_steps");
    for (const auto& e : pentries) {
      if (e.name.rfind("p/", 0) != 0) continue;
      std::string name = e.name.substr(2);
      const auto& pv = blocks.at(e.name);
      Tensor t = Tensor::from_data(pv.first, pv.second, /*requires_grad=*/true);
      ck.params.push_back({name, t});
      const auto& mv = need(blocks, "m/" + name, params_path);
      const auto& vv = need(blocks, "v/" + name, params_path);
      if (shape_size(mv.first) != t.size() || shape_size(vv.first) != t.size()) {
        throw IoError("'" + params_path + "': Adam buffer size mismatch for '" +
                      name + "'");
      }
      AdamState st;
      st.m = mv.second;
      st.v = vv.second;
      if (!steps.contains(name)) {
        throw IoError("'" + meta_path + "': missing Adam step for '" + name + "'");
      }
      st.step = steps.at(name).get<std::uint64_t>();
      ck.adam[name] = std::move(st);
    }

    if (ck.kind == "stage1") {
      if (!meta.contains("latents")) {
        throw IoError("'" + meta_path + "': stage1 checkpoint lacks latents");
      }
      const json& lmeta = meta.at("latents");
      const std::string latents_path = dir + "/latents.bin";
      auto lbytes = read_bytes(latents_path);
      want = meta.at("checksums").at("latents.bin").get<std::string>();
      got = fnv1a_hex(lbytes.data(), lbytes.size());
      if (got != want) {
        throw IoError("'" + latents_path + "': checksum mismatch (expected " +
                      want + ", got " + got + "); file is corrupted");
      }
      auto lentries = entries_from_json(lmeta.at("entries"), "latents.entries");
      auto lblocks = unpack(lentries, lbytes, latents_path);
      std::map<std::string, std::string> inst_groups;
      for (const auto& [id, g] : lmeta.at("instances").items()) {
        inst_groups[id] = g.get<std::string>();
      }
      std::size_t d_s = lmeta.at("d_s").get<std::size_t>();
      std::size_t d_z = lmeta.at("d_z").get<std::size_t>();
      LatentTable lt;
      lt.init(inst_groups, d_s, d_z, /*init_std=*/0.0, /*seed=*/0);
      const json& lsteps = lmeta.at("adam_steps");
      auto restore = [&](const std::string& code_name, Tensor& code,
                         AdamState& st, const char* mpfx, const char* vpfx,
                         const std::string& id) {
        const auto& cv = need(lblocks, code_name, latents_path);
        if (shape_size(cv.first) != code.size()) {
          throw IoError("'" + latents_path + "': size mismatch for '" +
                        code_name + "'");
        }
        std::copy(cv.second.begin(), cv.second.end(), code.data());
        const auto& mv2 = need(lblocks, mpfx + id, latents_path);
        const auto& vv2 = need(lblocks, vpfx + id, latents_path);
        st.m = mv2.second;
        st.v = vv2.second;
        if (!lsteps.contains(code_name)) {
          throw IoError("'" + meta_path + "': missing Adam step for '" +
                        code_name + "'");
        }
        st.step = lsteps.at(code_name).get<std::uint64_t>();
      };
      for (auto& [g, entry] : lt.groups()) {
        restore("s/" + g, entry.code, entry.adam, "m_s/", "v_s/", g);
      }
      for (auto& [id, entry] : lt.instances()) {
        restore("z/" + id, entry.code, entry.adam, "m_z/", "v_z/", id);
      }
      ck.latents = std::move(lt);
    }
  } catch (const json::exception& e) {
    throw IoError("'" + meta_path + "': " + e.what());
  }
  return ck;
}

Model model_from_checkpoint(const Checkpoint& ck) {
  Model model = Model::build(ck.config.model, ck.V, ck.config.seed);
  if (ck.kind == "stage2") model.add_encoders(ck.config.seed);
  std::map<std::string, Tensor> stored;
  for (const auto& p : ck.params) stored.emplace(p.name, p.tensor);
  auto live = model.params();
  if (live.size() != stored.size()) {
    throw IoError("checkpoint parameter count " + std::to_string(stored.size()) +
                  " does not match model (" + std::to_string(live.size()) +
                  "); config echo and checkpoint disagree");
  }
  for (auto& p : live) {
    auto it = stored.find(p.name);
    if (it == stored.end()) {
      throw IoError("checkpoint is missing parameter '" + p.name + "'");
    }
    if (!shape_eq(it->second.shape(), p.tensor.shape())) {
      throw IoError("checkpoint parameter '" + p.name + "' has shape " +
                    shape_str(it->second.shape()) + ", model expects " +
                    shape_str(p.tensor.shape()));
    }
    std::copy(it->second.data(), it->second.data() + it->second.size(),
              p.tensor.data());
  }
  return model;
}

}  // namespace dilo
