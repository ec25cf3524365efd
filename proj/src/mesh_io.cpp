#include "dilo/mesh_io.hpp"

#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include "dilo/errors.hpp"

namespace dilo {

namespace {

// "7", "7/2", "7/2/3", "7//3" -> 7. Anything else is malformed.
int parse_face_index(const std::string& tok, const std::string& path, int ln) {
  std::size_t pos = 0;
  int v = 0;
  bool any = false;
  while (pos < tok.size() && tok[pos] >= '0' && tok[pos] <= '9') {
    v = v * 10 + (tok[pos] - '0');
    ++pos;
    any = true;
  }
  if (!any || (pos < tok.size() && tok[pos] != '/'))
    throw ParseError(path + ":" + std::to_string(ln) +
                     ": bad face index '" + tok + "'");
  return v;
}

}  // namespace

Mesh load_obj(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  Mesh mesh;
  std::set<std::string> warned;
  std::string line;
  int ln = 0;
  while (std::getline(in, line)) {
    ++ln;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    std::istringstream ss(line);
    std::string kind;
    if (!(ss >> kind) || kind[0] == '#') continue;
    if (kind == "v") {
      double x, y, z;
      if (!(ss >> x >> y >> z))
        throw ParseError(path + ":" + std::to_string(ln) +
                         ": malformed vertex line");
      mesh.cloud.xyz.push_back(x);
      mesh.cloud.xyz.push_back(y);
      mesh.cloud.xyz.push_back(z);
    } else if (kind == "f") {
      std::string a, b, c, extra;
      if (!(ss >> a >> b >> c))
        throw ParseError(path + ":" + std::to_string(ln) +
                         ": malformed face line");
      if (ss >> extra)
        throw ParseError(path + ":" + std::to_string(ln) +
                         ": non-triangular face");
      mesh.faces.push_back({parse_face_index(a, path, ln) - 1,
                            parse_face_index(b, path, ln) - 1,
                            parse_face_index(c, path, ln) - 1});
    } else if (warned.insert(kind).second) {
      std::fprintf(stderr, "warning: %s: ignoring '%s' records\n",
                   path.c_str(), kind.c_str());
    }
  }
  mesh.cloud.V = mesh.cloud.xyz.size() / 3;
  for (const auto& f : mesh.faces)
    for (int ix : f)
      if (ix < 0 || ix >= static_cast<int>(mesh.cloud.V))
        throw ParseError(path + ": face index " + std::to_string(ix + 1) +
                         " outside vertex count " +
                         std::to_string(mesh.cloud.V));
  return mesh;
}

void save_obj(const std::string& path, const Mesh& mesh) {
  std::FILE* f = std::fopen(path.c_str(), "wb");
  if (!f) throw IoError("cannot write " + path);
  for (std::size_t i = 0; i < mesh.cloud.V; ++i) {
    const double* p = mesh.cloud.point(i);
    std::fprintf(f, "v %.17g %.17g %.17g\n", p[0], p[1], p[2]);
  }
  for (const auto& face : mesh.faces)
    std::fprintf(f, "f %d %d %d\n", face[0] + 1, face[1] + 1, face[2] + 1);
  std::fclose(f);
}

}  // namespace dilo
