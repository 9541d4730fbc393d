#include <charconv>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

#include "gr/error.hpp"
#include "gr/mesh.hpp"

namespace gr {
namespace {

[[noreturn]] void parse_fail(const std::string& source, std::size_t line, const std::string& what) {
  throw ValidationError(source + ":" + std::to_string(line) + ": " + what);
}

double parse_double(std::string_view tok, const std::string& source, std::size_t line) {
  double value = 0.0;
  const auto res = std::from_chars(tok.data(), tok.data() + tok.size(), value);
  if (res.ec != std::errc() || res.ptr != tok.data() + tok.size()) parse_fail(source, line, "bad number '" + std::string(tok) + "'");
  return value;
}

long parse_index(std::string_view tok, const std::string& source, std::size_t line) {
  long value = 0;
  const auto res = std::from_chars(tok.data(), tok.data() + tok.size(), value);
  if (res.ec != std::errc() || res.ptr != tok.data() + tok.size() || value == 0) {
    parse_fail(source, line, "bad index '" + std::string(tok) + "'");
  }
  return value;
}

int resolve(long idx, std::size_t count, const std::string& source, std::size_t line) {
  const long resolved = idx > 0 ? idx - 1 : static_cast<long>(count) + idx;
  if (resolved < 0 || resolved >= static_cast<long>(count)) {
    parse_fail(source, line, "index " + std::to_string(idx) + " out of range");
  }
  return static_cast<int>(resolved);
}

std::string fmt9(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.9g", v);
  return buf;
}

}  // namespace

TriMesh parse_obj(std::istream& in, const std::string& source) {
  TriMesh mesh;
  std::vector<Vec2> texcoords;
  struct Corner {
    long v, vt;
  };
  std::vector<std::array<Corner, 3>> raw_faces;
  std::vector<std::size_t> raw_lines;
  std::string line;
  std::size_t lineno = 0;
  std::vector<std::string_view> toks;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    toks.clear();
    std::string_view sv(line);
    std::size_t pos = 0;
    while (pos < sv.size()) {
      while (pos < sv.size() && (sv[pos] == ' ' || sv[pos] == '\t')) ++pos;
      std::size_t end = pos;
      while (end < sv.size() && sv[end] != ' ' && sv[end] != '\t') ++end;
      if (end > pos) toks.push_back(sv.substr(pos, end - pos));
      pos = end;
    }
    if (toks.empty() || toks[0][0] == '#') continue;
    const auto& kind = toks[0];
    if (kind == "v") {
      if (toks.size() < 4) parse_fail(source, lineno, "vertex record needs 3 coordinates");
      mesh.vertices.emplace_back(parse_double(toks[1], source, lineno), parse_double(toks[2], source, lineno),
                                 parse_double(toks[3], source, lineno));
    } else if (kind == "vt") {
      if (toks.size() < 3) parse_fail(source, lineno, "texcoord record needs 2 coordinates");
      texcoords.emplace_back(parse_double(toks[1], source, lineno), parse_double(toks[2], source, lineno));
    } else if (kind == "f") {
      if (toks.size() < 4) parse_fail(source, lineno, "face record needs at least 3 corners");
      std::vector<Corner> corners;
      for (std::size_t i = 1; i < toks.size(); ++i) {
        const auto tok = toks[i];
        const auto s1 = tok.find('/');
        Corner c{0, 0};
        c.v = parse_index(tok.substr(0, s1), source, lineno);
        if (s1 != std::string_view::npos) {
          const auto rest = tok.substr(s1 + 1);
          const auto s2 = rest.find('/');
          const auto vt = rest.substr(0, s2);
          if (!vt.empty()) c.vt = parse_index(vt, source, lineno);
        }
        corners.push_back(c);
      }
      for (std::size_t k = 1; k + 1 < corners.size(); ++k) {
        raw_faces.push_back({corners[0], corners[k], corners[k + 1]});
        raw_lines.push_back(lineno);
      }
    }
    // Other records (vn, o, g, s, usemtl, mtllib, l) carry nothing the engine uses.
  }

  bool any_uv = false, all_uv = true;
  for (const auto& f : raw_faces) {
    for (const auto& c : f) {
      any_uv |= c.vt != 0;
      all_uv &= c.vt != 0;
    }
  }
  if (any_uv && !all_uv) parse_fail(source, 0, "texture coordinates present on some face corners but not all");
  for (std::size_t i = 0; i < raw_faces.size(); ++i) {
    Face face;
    for (int k = 0; k < 3; ++k) {
      face[k] = resolve(raw_faces[i][k].v, mesh.vertices.size(), source, raw_lines[i]);
      if (any_uv) mesh.corner_uvs.push_back(texcoords[resolve(raw_faces[i][k].vt, texcoords.size(), source, raw_lines[i])]);
    }
    mesh.faces.push_back(face);
  }
  try {
    validate_mesh(mesh);
  } catch (const ValidationError& e) {
    throw ValidationError(source + ": " + e.what());
  }
  return mesh;
}

TriMesh load_obj(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open OBJ file " + path.string());
  return parse_obj(in, path.string());
}

void write_obj(std::ostream& out, const TriMesh& mesh, const ObjWriteOptions& options) {
  if (!options.mtllib.empty()) out << "mtllib " << options.mtllib << "\n";
  for (const auto& v : mesh.vertices) out << "v " << fmt9(v.x()) << ' ' << fmt9(v.y()) << ' ' << fmt9(v.z()) << "\n";
  std::vector<int> uv_index;
  if (mesh.has_uvs()) {
    std::map<std::pair<double, double>, int> unique;
    uv_index.resize(mesh.corner_uvs.size());
    for (std::size_t i = 0; i < mesh.corner_uvs.size(); ++i) {
      const auto key = std::make_pair(mesh.corner_uvs[i].x(), mesh.corner_uvs[i].y());
      auto [it, inserted] = unique.emplace(key, static_cast<int>(unique.size()));
      if (inserted) out << "vt " << fmt9(key.first) << ' ' << fmt9(key.second) << "\n";
      uv_index[i] = it->second;
    }
  }
  if (!options.material.empty()) out << "usemtl " << options.material << "\n";
  for (std::size_t f = 0; f < mesh.faces.size(); ++f) {
    out << 'f';
    for (int k = 0; k < 3; ++k) {
      out << ' ' << mesh.faces[f][k] + 1;
      if (mesh.has_uvs()) out << '/' << uv_index[3 * f + k] + 1;
    }
    out << "\n";
  }
}

void save_obj(const TriMesh& mesh, const std::filesystem::path& path, const ObjWriteOptions& options) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write OBJ file " + path.string());
  write_obj(out, mesh, options);
  if (!out) throw IoError("failed writing OBJ file " + path.string());
}

}  // namespace gr
