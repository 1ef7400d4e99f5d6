#include "convfield/error.hpp"
#include "convfield/mesh.hpp"

#include <algorithm>
#include <bit>
#include <charconv>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>

namespace convfield {

std::optional<MeshFormat> format_from_path(const std::filesystem::path& path) {
  std::string ext = path.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  if (ext == ".obj") return MeshFormat::Obj;
  if (ext == ".ply") return MeshFormat::Ply;
  return std::nullopt;
}

namespace {

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    fail(ErrorKind::Parse, "cannot open " + path.string());
  }
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

double parse_double(std::string_view tok, std::size_t line) {
  double value = 0.0;
  auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), value);
  if (ec != std::errc() || ptr != tok.data() + tok.size()) {
    fail(ErrorKind::Parse, "line " + std::to_string(line) + ": bad number '" + std::string(tok) + "'");
  }
  return value;
}

long long parse_int(std::string_view tok, std::size_t line) {
  long long value = 0;
  auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), value);
  if (ec != std::errc() || ptr != tok.data() + tok.size()) {
    fail(ErrorKind::Parse, "line " + std::to_string(line) + ": bad index '" + std::string(tok) + "'");
  }
  return value;
}

std::vector<std::string_view> split_ws(std::string_view s) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < s.size()) {
    while (i < s.size() && std::isspace(static_cast<unsigned char>(s[i]))) ++i;
    std::size_t j = i;
    while (j < s.size() && !std::isspace(static_cast<unsigned char>(s[j]))) ++j;
    if (j > i) out.push_back(s.substr(i, j - i));
    i = j;
  }
  return out;
}

} // namespace

TriangleMesh parse_obj(const std::string& text) {
  TriangleMesh mesh;
  std::vector<std::vector<long long>> polys;
  std::vector<std::size_t> poly_lines;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string::npos) end = text.size();
    std::string_view line(text.data() + pos, end - pos);
    ++line_no;
    pos = end + 1;
    if (auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    auto toks = split_ws(line);
    if (toks.empty()) continue;
    if (toks[0] == "v") {
      if (toks.size() < 4) fail(ErrorKind::Parse, "line " + std::to_string(line_no) + ": vertex needs 3 coordinates");
      mesh.vertices.emplace_back(parse_double(toks[1], line_no), parse_double(toks[2], line_no),
                                 parse_double(toks[3], line_no));
    } else if (toks[0] == "f") {
      if (toks.size() < 4) fail(ErrorKind::Parse, "line " + std::to_string(line_no) + ": face needs 3 vertices");
      std::vector<long long> poly;
      for (std::size_t i = 1; i < toks.size(); ++i) {
        auto slash = toks[i].find('/');
        long long idx = parse_int(toks[i].substr(0, slash), line_no);
        if (idx < 0) {
          idx = static_cast<long long>(mesh.vertices.size()) + idx + 1;
        }
        poly.push_back(idx);
      }
      polys.push_back(std::move(poly));
      poly_lines.push_back(line_no);
    }
  }
  const auto nv = static_cast<long long>(mesh.vertices.size());
  for (std::size_t p = 0; p < polys.size(); ++p) {
    for (long long idx : polys[p]) {
      if (idx < 1 || idx > nv) {
        fail(ErrorKind::Parse, "line " + std::to_string(poly_lines[p]) + ": vertex index " +
                                   std::to_string(idx) + " out of range (" + std::to_string(nv) +
                                   " vertices)");
      }
    }
    for (std::size_t i = 1; i + 1 < polys[p].size(); ++i) {
      mesh.faces.push_back({static_cast<std::uint32_t>(polys[p][0] - 1),
                            static_cast<std::uint32_t>(polys[p][i] - 1),
                            static_cast<std::uint32_t>(polys[p][i + 1] - 1)});
    }
  }
  return mesh;
}

namespace {

enum class PlyEncoding { Ascii, BinaryLE, BinaryBE };

struct PlyProperty {
  std::string name;
  std::string type;
  bool is_list = false;
  std::string count_type;
};

struct PlyElement {
  std::string name;
  std::size_t count = 0;
  std::vector<PlyProperty> props;
};

std::size_t ply_type_size(const std::string& t) {
  static const std::map<std::string, std::size_t> sizes{
      {"char", 1},   {"uchar", 1},  {"int8", 1},    {"uint8", 1},   {"short", 2},
      {"ushort", 2}, {"int16", 2},  {"uint16", 2},  {"int", 4},     {"uint", 4},
      {"int32", 4},  {"uint32", 4}, {"float", 4},   {"float32", 4}, {"double", 8},
      {"float64", 8}};
  auto it = sizes.find(t);
  if (it == sizes.end()) fail(ErrorKind::Parse, "unknown PLY type '" + t + "'");
  return it->second;
}

class PlyBinaryReader {
 public:
  PlyBinaryReader(const std::string& data, std::size_t pos, bool big_endian)
      : data_(data), pos_(pos), swap_(big_endian != (std::endian::native == std::endian::big)) {}

  double read(const std::string& type) {
    const std::size_t n = ply_type_size(type);
    if (pos_ + n > data_.size()) fail(ErrorKind::Parse, "PLY body truncated");
    unsigned char buf[8];
    std::memcpy(buf, data_.data() + pos_, n);
    pos_ += n;
    if (swap_) std::reverse(buf, buf + n);
    auto get = [&](auto v) {
      std::memcpy(&v, buf, sizeof(v));
      return static_cast<double>(v);
    };
    if (type == "char" || type == "int8") return get(std::int8_t{});
    if (type == "uchar" || type == "uint8") return get(std::uint8_t{});
    if (type == "short" || type == "int16") return get(std::int16_t{});
    if (type == "ushort" || type == "uint16") return get(std::uint16_t{});
    if (type == "int" || type == "int32") return get(std::int32_t{});
    if (type == "uint" || type == "uint32") return get(std::uint32_t{});
    if (type == "float" || type == "float32") return get(float{});
    return get(double{});
  }

 private:
  const std::string& data_;
  std::size_t pos_;
  bool swap_;
};

TriangleMesh parse_ply(const std::string& data) {
  std::size_t pos = 0;
  auto next_line = [&]() -> std::string {
    std::size_t end = data.find('\n', pos);
    if (end == std::string::npos) fail(ErrorKind::Parse, "PLY header truncated");
    std::string line = data.substr(pos, end - pos);
    pos = end + 1;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    return line;
  };
  if (next_line() != "ply") fail(ErrorKind::Parse, "missing 'ply' magic");
  PlyEncoding enc = PlyEncoding::Ascii;
  std::vector<PlyElement> elements;
  for (;;) {
    const std::string line = next_line();
    std::istringstream ls(line);
    std::string kw;
    ls >> kw;
    if (kw == "end_header") break;
    if (kw == "format") {
      std::string f;
      ls >> f;
      if (f == "ascii") enc = PlyEncoding::Ascii;
      else if (f == "binary_little_endian") enc = PlyEncoding::BinaryLE;
      else if (f == "binary_big_endian") enc = PlyEncoding::BinaryBE;
      else fail(ErrorKind::Parse, "unknown PLY format '" + f + "'");
    } else if (kw == "element") {
      PlyElement e;
      ls >> e.name >> e.count;
      if (!ls) fail(ErrorKind::Parse, "bad PLY element line");
      elements.push_back(e);
    } else if (kw == "property") {
      if (elements.empty()) fail(ErrorKind::Parse, "PLY property before element");
      PlyProperty p;
      std::string t;
      ls >> t;
      if (t == "list") {
        p.is_list = true;
        ls >> p.count_type >> p.type >> p.name;
      } else {
        p.type = t;
        ls >> p.name;
      }
      if (!ls) fail(ErrorKind::Parse, "bad PLY property line");
      ply_type_size(p.type);
      if (p.is_list) ply_type_size(p.count_type);
      elements.back().props.push_back(p);
    }
  }

  TriangleMesh mesh;
  std::vector<std::vector<long long>> polys;
  std::istringstream ascii(enc == PlyEncoding::Ascii ? data.substr(pos) : std::string());
  PlyBinaryReader bin(data, pos, enc == PlyEncoding::BinaryBE);
  auto read_value = [&](const std::string& type) -> double {
    if (enc == PlyEncoding::Ascii) {
      double v = 0.0;
      if (!(ascii >> v)) fail(ErrorKind::Parse, "PLY body truncated");
      return v;
    }
    return bin.read(type);
  };
  for (const auto& e : elements) {
    int ix = -1, iy = -1, iz = -1, iface = -1;
    for (int i = 0; i < static_cast<int>(e.props.size()); ++i) {
      const auto& n = e.props[i].name;
      if (n == "x") ix = i;
      if (n == "y") iy = i;
      if (n == "z") iz = i;
      if (e.props[i].is_list && (n == "vertex_indices" || n == "vertex_index")) iface = i;
    }
    const bool is_vertex = e.name == "vertex";
    const bool is_face = e.name == "face";
    if (is_vertex && (ix < 0 || iy < 0 || iz < 0)) fail(ErrorKind::Parse, "PLY vertex lacks x/y/z");
    if (is_face && iface < 0) fail(ErrorKind::Parse, "PLY face lacks vertex_indices");
    for (std::size_t r = 0; r < e.count; ++r) {
      Vec3 p = Vec3::Zero();
      for (int i = 0; i < static_cast<int>(e.props.size()); ++i) {
        const auto& prop = e.props[i];
        if (prop.is_list) {
          const auto n = static_cast<long long>(read_value(prop.count_type));
          if (n < 0) fail(ErrorKind::Parse, "negative PLY list length");
          std::vector<long long> poly;
          for (long long k = 0; k < n; ++k) poly.push_back(static_cast<long long>(read_value(prop.type)));
          if (is_face && i == iface) polys.push_back(std::move(poly));
        } else {
          const double v = read_value(prop.type);
          if (i == ix) p.x() = v;
          if (i == iy) p.y() = v;
          if (i == iz) p.z() = v;
        }
      }
      if (is_vertex) mesh.vertices.push_back(p);
    }
  }
  const auto nv = static_cast<long long>(mesh.vertices.size());
  for (const auto& poly : polys) {
    if (poly.size() < 3) fail(ErrorKind::Parse, "PLY face with fewer than 3 vertices");
    for (long long idx : poly) {
      if (idx < 0 || idx >= nv) {
        fail(ErrorKind::Parse, "PLY vertex index " + std::to_string(idx) + " out of range");
      }
    }
    for (std::size_t i = 1; i + 1 < poly.size(); ++i) {
      mesh.faces.push_back({static_cast<std::uint32_t>(poly[0]), static_cast<std::uint32_t>(poly[i]),
                            static_cast<std::uint32_t>(poly[i + 1])});
    }
  }
  return mesh;
}

} // namespace

TriangleMesh read_triangles(const std::filesystem::path& path, MeshFormat format) {
  const std::string data = read_file(path);
  TriangleMesh mesh = format == MeshFormat::Obj ? parse_obj(data) : parse_ply(data);
  if (mesh.faces.empty()) {
    fail(ErrorKind::Parse, path.string() + ": no faces");
  }
  return mesh;
}

TriangleMesh deduplicate_vertices(const TriangleMesh& mesh) {
  TriangleMesh out;
  std::map<std::array<double, 3>, std::uint32_t> index;
  std::vector<std::uint32_t> remap(mesh.vertices.size());
  for (std::size_t i = 0; i < mesh.vertices.size(); ++i) {
    const std::array<double, 3> key{mesh.vertices[i].x(), mesh.vertices[i].y(), mesh.vertices[i].z()};
    auto [it, inserted] = index.try_emplace(key, static_cast<std::uint32_t>(out.vertices.size()));
    if (inserted) out.vertices.push_back(mesh.vertices[i]);
    remap[i] = it->second;
  }
  out.faces.reserve(mesh.faces.size());
  for (const Face& f : mesh.faces) {
    out.faces.push_back({remap[f[0]], remap[f[1]], remap[f[2]]});
  }
  return out;
}

SolidMesh load_mesh(const std::filesystem::path& path, MeshFormat format,
                    std::vector<std::string>* warnings) {
  return SolidMesh::from_triangles(deduplicate_vertices(read_triangles(path, format)), warnings);
}

void write_obj(const std::filesystem::path& path, const std::vector<Vec3>& vertices,
               const std::vector<Face>& faces, const std::string& header) {
  std::ofstream out(path);
  if (!out) fail(ErrorKind::Io, "cannot write " + path.string());
  if (!header.empty()) out << "# " << header << '\n';
  char buf[96];
  for (const Vec3& v : vertices) {
    std::snprintf(buf, sizeof(buf), "v %.17g %.17g %.17g\n", v.x(), v.y(), v.z());
    out << buf;
  }
  for (const Face& f : faces) {
    out << "f " << f[0] + 1 << ' ' << f[1] + 1 << ' ' << f[2] + 1 << '\n';
  }
}

} // namespace convfield
