// Copyright 2026 The langocc Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "langocc/mesh.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>

#include "binary_io.hpp"

namespace langocc {

namespace fs = std::filesystem;

namespace {

enum class PlyType { kChar, kUchar, kShort, kUshort, kInt, kUint, kFloat, kDouble };

PlyType parse_type(const std::string& name, const fs::path& path) {
  if (name == "char" || name == "int8") return PlyType::kChar;
  if (name == "uchar" || name == "uint8") return PlyType::kUchar;
  if (name == "short" || name == "int16") return PlyType::kShort;
  if (name == "ushort" || name == "uint16") return PlyType::kUshort;
  if (name == "int" || name == "int32") return PlyType::kInt;
  if (name == "uint" || name == "uint32") return PlyType::kUint;
  if (name == "float" || name == "float32") return PlyType::kFloat;
  if (name == "double" || name == "float64") return PlyType::kDouble;
  throw FormatError(path.string() + ": unsupported PLY type " + name);
}

struct Property {
  std::string name;
  PlyType type = PlyType::kFloat;
  bool is_list = false;
  PlyType count_type = PlyType::kUchar;
};

struct Element {
  std::string name;
  std::size_t count = 0;
  std::vector<Property> props;
};

double read_binary(std::istream& in, PlyType t, const std::string& what) {
  switch (t) {
    case PlyType::kChar: return detail::read_pod<std::int8_t>(in, what);
    case PlyType::kUchar: return detail::read_pod<std::uint8_t>(in, what);
    case PlyType::kShort: return detail::read_pod<std::int16_t>(in, what);
    case PlyType::kUshort: return detail::read_pod<std::uint16_t>(in, what);
    case PlyType::kInt: return detail::read_pod<std::int32_t>(in, what);
    case PlyType::kUint: return detail::read_pod<std::uint32_t>(in, what);
    case PlyType::kFloat: return detail::read_pod<float>(in, what);
    case PlyType::kDouble: return detail::read_pod<double>(in, what);
  }
  return 0.0;
}

double read_ascii(std::istream& in, const std::string& what) {
  double v = 0.0;
  if (!(in >> v)) {
    throw FormatError(what + ": truncated ASCII PLY body");
  }
  return v;
}

}  // namespace

void write_ply(const fs::path& path, const Mesh& mesh, PlyFormat format) {
  mesh.validate();
  std::ofstream out(path, std::ios::binary);
  if (!out) {
    throw FormatError("cannot write " + path.string());
  }
  const bool has_class = !mesh.vertex_class.empty();
  const bool has_scalar = !mesh.vertex_scalar.empty();
  out << "ply\n"
      << (format == PlyFormat::kAscii ? "format ascii 1.0\n" : "format binary_little_endian 1.0\n")
      << "element vertex " << mesh.vertices.size() << "\n"
      << "property float x\nproperty float y\nproperty float z\n";
  if (has_class) {
    out << "property int class\n";
  }
  if (has_scalar) {
    out << "property float similarity\n";
  }
  out << "element face " << mesh.faces.size() << "\n"
      << "property list uchar int vertex_indices\n"
      << "end_header\n";
  if (format == PlyFormat::kAscii) {
    char buf[128];
    for (std::size_t i = 0; i < mesh.vertices.size(); ++i) {
      const Vec3& v = mesh.vertices[i];
      std::snprintf(buf, sizeof(buf), "%.9g %.9g %.9g", static_cast<float>(v[0]),
                    static_cast<float>(v[1]), static_cast<float>(v[2]));
      out << buf;
      if (has_class) {
        out << ' ' << mesh.vertex_class[i];
      }
      if (has_scalar) {
        std::snprintf(buf, sizeof(buf), " %.9g", mesh.vertex_scalar[i]);
        out << buf;
      }
      out << '\n';
    }
    for (const auto& f : mesh.faces) {
      out << "3 " << f[0] << ' ' << f[1] << ' ' << f[2] << '\n';
    }
  } else {
    for (std::size_t i = 0; i < mesh.vertices.size(); ++i) {
      const Vec3& v = mesh.vertices[i];
      for (int k = 0; k < 3; ++k) {
        detail::write_pod(out, static_cast<float>(v[k]));
      }
      if (has_class) {
        detail::write_pod(out, static_cast<std::int32_t>(mesh.vertex_class[i]));
      }
      if (has_scalar) {
        detail::write_pod(out, mesh.vertex_scalar[i]);
      }
    }
    for (const auto& f : mesh.faces) {
      detail::write_pod(out, std::uint8_t{3});
      for (std::uint32_t idx : f) {
        detail::write_pod(out, static_cast<std::int32_t>(idx));
      }
    }
  }
  if (!out) {
    throw FormatError("failed writing " + path.string());
  }
}

Mesh read_ply(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw FormatError("mesh file not found: " + path.string());
  }
  const std::string what = path.string();
  std::string line;
  std::getline(in, line);
  if (line != "ply" && line != "ply\r") {
    throw FormatError(what + ": not a PLY file");
  }
  bool binary = false;
  std::vector<Element> elements;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') {
      line.pop_back();
    }
    std::istringstream ls(line);
    std::string key;
    ls >> key;
    if (key == "format") {
      std::string fmt;
      ls >> fmt;
      if (fmt == "binary_little_endian") {
        binary = true;
      } else if (fmt != "ascii") {
        throw FormatError(what + ": unsupported PLY encoding " + fmt);
      }
    } else if (key == "element") {
      Element e;
      ls >> e.name >> e.count;
      elements.push_back(e);
    } else if (key == "property") {
      if (elements.empty()) {
        throw FormatError(what + ": property before element");
      }
      Property p;
      std::string type;
      ls >> type;
      if (type == "list") {
        std::string count_type;
        ls >> count_type >> type;
        p.is_list = true;
        p.count_type = parse_type(count_type, path);
      }
      p.type = parse_type(type, path);
      ls >> p.name;
      elements.back().props.push_back(p);
    } else if (key == "end_header") {
      break;
    }
  }
  if (!in) {
    throw FormatError(what + ": truncated PLY header");
  }

  Mesh mesh;
  for (const Element& e : elements) {
    const bool is_vertex = e.name == "vertex";
    const bool is_face = e.name == "face";
    if (is_vertex) {
      mesh.vertices.resize(e.count);
      for (const Property& p : e.props) {
        if (p.name == "class") {
          mesh.vertex_class.resize(e.count);
        } else if (p.name == "similarity") {
          mesh.vertex_scalar.resize(e.count);
        }
      }
    }
    for (std::size_t i = 0; i < e.count; ++i) {
      for (const Property& p : e.props) {
        if (p.is_list) {
          const auto n = static_cast<std::size_t>(binary ? read_binary(in, p.count_type, what)
                                                         : read_ascii(in, what));
          std::vector<std::uint32_t> idx(n);
          for (std::size_t k = 0; k < n; ++k) {
            const double v = binary ? read_binary(in, p.type, what) : read_ascii(in, what);
            idx[k] = static_cast<std::uint32_t>(v);
          }
          if (is_face && p.name == "vertex_indices") {
            for (std::size_t k = 1; k + 1 < n; ++k) {
              mesh.faces.push_back({idx[0], idx[k], idx[k + 1]});
            }
          }
          continue;
        }
        const double v = binary ? read_binary(in, p.type, what) : read_ascii(in, what);
        if (!is_vertex) {
          continue;
        }
        if (p.name == "x") {
          mesh.vertices[i][0] = v;
        } else if (p.name == "y") {
          mesh.vertices[i][1] = v;
        } else if (p.name == "z") {
          mesh.vertices[i][2] = v;
        } else if (p.name == "class") {
          mesh.vertex_class[i] = static_cast<int>(v);
        } else if (p.name == "similarity") {
          mesh.vertex_scalar[i] = static_cast<float>(v);
        }
      }
    }
  }
  mesh.validate();
  return mesh;
}

}  // namespace langocc
