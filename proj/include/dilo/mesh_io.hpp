#pragma once

#include <string>

#include "dilo/geometry.hpp"

namespace dilo {

// Minimal OBJ subset: `v x y z` and triangular `f` records (any of the
// i, i/j, i/j/k, i//k index forms). Other record types are skipped with one
// stderr warning per type. Malformed lines raise ParseError with the line
// number; face indices outside [1, V] raise ParseError after parsing.
Mesh load_obj(const std::string& path);

// Deterministic writer: %.17g coordinates (exact double round-trip),
// 1-based face indices, LF line endings.
void save_obj(const std::string& path, const Mesh& mesh);

}  // namespace dilo
