#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "dilo/config.hpp"
#include "dilo/latents.hpp"
#include "dilo/nets.hpp"
#include "dilo/optim.hpp"

namespace dilo {

// A checkpoint is a directory:
//   meta.json    format version, kind, effective config echo, binary entry
//                index (name, shape, byte offset), Adam step counters, and
//                an FNV-1a 64 checksum per binary file
//   params.bin   little-endian float64: parameter values followed by Adam
//                first/second-moment buffers, laid out per the index
//   latents.bin  (stage1 only) per-group shape codes and per-instance
//                deformation codes plus their Adam buffers
// Stage-2 checkpoints record parent_hash, the params.bin checksum of the
// stage-1 checkpoint they were initialized from.
struct Checkpoint {
  int format_version = 1;
  std::string kind;  // "stage1" or "stage2"
  RunConfig config;
  std::size_t V = 0;
  std::vector<NamedParam> params;          // layout order
  std::map<std::string, AdamState> adam;   // keyed by parameter name
  std::optional<LatentTable> latents;      // stage1 only
  std::string parent_hash;                 // stage2 only
  std::string params_hash;  // params.bin checksum; recorded in meta.json by
                            // save and filled into this field by load
};

void save_checkpoint(const std::string& dir, const Checkpoint& ck);
Checkpoint load_checkpoint(const std::string& dir);

// Rebuilds the model described by a checkpoint's config echo and copies the
// stored parameter values into it (encoders included for stage-2 kinds).
// Shape or name mismatches against the stored index raise IoError.
Model model_from_checkpoint(const Checkpoint& ck);

// FNV-1a 64 over raw bytes, as a 16-digit lowercase hex string.
std::string fnv1a_hex(const void* data, std::size_t n);
std::string file_fnv1a_hex(const std::string& path);

}  // namespace dilo
