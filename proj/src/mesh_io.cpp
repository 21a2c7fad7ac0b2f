#include "facewarp/error.hpp"
#include "facewarp/mesh.hpp"

#include <json.hpp>

#include <algorithm>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>

namespace facewarp {

namespace {

std::string lower_ext(const std::filesystem::path& path) {
    std::string ext = path.extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
    return ext;
}

int parse_obj_index(const std::string& token, int vertex_count, const std::string& file, std::size_t line) {
    const std::string head = token.substr(0, token.find('/'));
    int idx = 0;
    try {
        std::size_t used = 0;
        idx = std::stoi(head, &used);
        if (used != head.size()) {
            throw std::invalid_argument(head);
        }
    } catch (const std::exception&) {
        throw ParseError(file, line, "bad face index '" + token + "'");
    }
    return idx < 0 ? vertex_count + idx : idx - 1;
}

FaceMesh load_obj(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw IoError("cannot open " + path.string());
    }
    FaceMesh mesh;
    std::vector<std::pair<std::size_t, std::vector<int>>> polys;
    std::string line;
    std::size_t line_no = 0;
    const std::string name = path.string();
    while (std::getline(in, line)) {
        ++line_no;
        std::istringstream ls(line);
        std::string tag;
        if (!(ls >> tag) || tag[0] == '#') {
            continue;
        }
        if (tag == "v") {
            Point3 p;
            if (!(ls >> p.x() >> p.y() >> p.z())) {
                throw ParseError(name, line_no, "vertex needs three coordinates");
            }
            mesh.vertices.push_back(p);
        } else if (tag == "f") {
            std::vector<int> idx;
            std::string token;
            while (ls >> token) {
                idx.push_back(parse_obj_index(token, static_cast<int>(mesh.vertices.size()), name, line_no));
            }
            if (idx.size() < 3) {
                throw ParseError(name, line_no, "face needs at least three vertices");
            }
            polys.emplace_back(line_no, std::move(idx));
        }
    }
    const int nv = static_cast<int>(mesh.vertices.size());
    std::size_t face_no = 0;
    for (const auto& [ln, idx] : polys) {
        for (int v : idx) {
            if (v < 0 || v >= nv) {
                throw ParseError(name, ln, "face " + std::to_string(face_no) + " references vertex " +
                                               std::to_string(v + 1) + " but only " + std::to_string(nv) +
                                               " vertices exist");
            }
        }
        for (std::size_t k = 1; k + 1 < idx.size(); ++k) {
            mesh.faces.push_back({idx[0], idx[k], idx[k + 1]});
        }
        ++face_no;
    }
    return mesh;
}

// Minimal PLY reader: vertex x/y/z (any numeric type) and a face index list.
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
    if (t == "char" || t == "uchar" || t == "int8" || t == "uint8") return 1;
    if (t == "short" || t == "ushort" || t == "int16" || t == "uint16") return 2;
    if (t == "int" || t == "uint" || t == "float" || t == "int32" || t == "uint32" || t == "float32") return 4;
    if (t == "double" || t == "float64") return 8;
    return 0;
}

double read_binary(std::istream& in, const std::string& t) {
    unsigned char buf[8];
    const std::size_t n = ply_type_size(t);
    in.read(reinterpret_cast<char*>(buf), static_cast<std::streamsize>(n));
    auto as = [&]<class T>() {
        T v;
        std::memcpy(&v, buf, sizeof v);
        return static_cast<double>(v);
    };
    if (t == "char" || t == "int8") return as.template operator()<std::int8_t>();
    if (t == "uchar" || t == "uint8") return as.template operator()<std::uint8_t>();
    if (t == "short" || t == "int16") return as.template operator()<std::int16_t>();
    if (t == "ushort" || t == "uint16") return as.template operator()<std::uint16_t>();
    if (t == "int" || t == "int32") return as.template operator()<std::int32_t>();
    if (t == "uint" || t == "uint32") return as.template operator()<std::uint32_t>();
    if (t == "float" || t == "float32") return as.template operator()<float>();
    return as.template operator()<double>();
}

FaceMesh load_ply(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw IoError("cannot open " + path.string());
    }
    const std::string name = path.string();
    std::string line;
    std::size_t line_no = 0;
    std::getline(in, line);
    ++line_no;
    if (line.rfind("ply", 0) != 0) {
        throw ParseError(name, line_no, "missing 'ply' magic");
    }
    std::string format;
    std::vector<PlyElement> elements;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') {
            line.pop_back();
        }
        std::istringstream ls(line);
        std::string tag;
        ls >> tag;
        if (tag == "format") {
            ls >> format;
        } else if (tag == "element") {
            PlyElement e;
            ls >> e.name >> e.count;
            elements.push_back(e);
        } else if (tag == "property") {
            if (elements.empty()) {
                throw ParseError(name, line_no, "property before element");
            }
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
            if (ply_type_size(p.type) == 0 || (p.is_list && ply_type_size(p.count_type) == 0)) {
                throw ParseError(name, line_no, "unsupported property type");
            }
            elements.back().props.push_back(p);
        } else if (tag == "end_header") {
            break;
        }
    }
    const bool ascii = format == "ascii";
    if (!ascii && format != "binary_little_endian") {
        throw ParseError(name, line_no, "unsupported PLY format '" + format + "'");
    }

    FaceMesh mesh;
    std::size_t face_no = 0;
    for (const auto& e : elements) {
        for (std::size_t r = 0; r < e.count; ++r) {
            std::vector<int> list;
            std::istringstream row;
            if (ascii) {
                if (!std::getline(in, line)) {
                    throw ParseError(name, line_no, "unexpected end of file in element '" + e.name + "'");
                }
                ++line_no;
                row.str(line);
            }
            Point3 p = Point3::Zero();
            for (const auto& prop : e.props) {
                auto read_one = [&](const std::string& type) {
                    double v = 0.0;
                    if (ascii) {
                        if (!(row >> v)) {
                            throw ParseError(name, line_no, "missing value for '" + prop.name + "'");
                        }
                    } else {
                        v = read_binary(in, type);
                        if (!in) {
                            throw ParseError(name, line_no, "truncated binary body");
                        }
                    }
                    return v;
                };
                if (prop.is_list) {
                    const auto count = static_cast<std::size_t>(read_one(prop.count_type));
                    for (std::size_t k = 0; k < count; ++k) {
                        list.push_back(static_cast<int>(read_one(prop.type)));
                    }
                } else {
                    const double v = read_one(prop.type);
                    if (prop.name == "x") p.x() = v;
                    if (prop.name == "y") p.y() = v;
                    if (prop.name == "z") p.z() = v;
                }
            }
            if (e.name == "vertex") {
                mesh.vertices.push_back(p);
            } else if (e.name == "face") {
                if (list.size() < 3) {
                    throw ParseError(name, line_no, "face " + std::to_string(face_no) + " has fewer than 3 vertices");
                }
                for (int v : list) {
                    if (v < 0 || v >= static_cast<int>(mesh.vertices.size())) {
                        throw ParseError(name, line_no, "face " + std::to_string(face_no) + " references vertex " +
                                                            std::to_string(v) + " out of range");
                    }
                }
                for (std::size_t k = 1; k + 1 < list.size(); ++k) {
                    mesh.faces.push_back({list[0], list[k], list[k + 1]});
                }
                ++face_no;
            }
        }
    }
    return mesh;
}

void load_sidecar(FaceMesh& mesh, const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        return;
    }
    nlohmann::json j;
    try {
        in >> j;
        mesh.scheme = scheme_from_string(j.at("scheme").get<std::string>());
        mesh.landmark_map.clear();
        for (const auto& [key, value] : j.at("map").items()) {
            const int id = std::stoi(key);
            if (!mesh.landmark_map.emplace(id, value.get<int>()).second) {
                throw ParseError(path.string(), 0, "duplicate landmark id " + key);
            }
        }
        mesh.control_indices = j.value("controls", std::vector<int>{});
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(path.string(), 0, e.what());
    }
}

}  // namespace

std::filesystem::path sidecar_path(const std::filesystem::path& mesh_path) {
    std::filesystem::path p = mesh_path;
    p.replace_extension(".landmarks.json");
    return p;
}

FaceMesh load_mesh(const std::filesystem::path& path) {
    const std::string ext = lower_ext(path);
    FaceMesh mesh;
    if (ext == ".obj") {
        mesh = load_obj(path);
    } else if (ext == ".ply") {
        mesh = load_ply(path);
    } else {
        throw IoError("unsupported mesh extension '" + ext + "' (expected .obj or .ply)");
    }
    load_sidecar(mesh, sidecar_path(path));
    mesh.validate();
    return mesh;
}

void save_mesh(const FaceMesh& mesh, std::span<const Point3> warped_vertices, const std::filesystem::path& path) {
    const std::span<const Point3> verts = warped_vertices.empty() ? std::span<const Point3>(mesh.vertices)
                                                                  : warped_vertices;
    if (verts.size() != mesh.vertices.size()) {
        throw ArgumentError("warped vertex count does not match the mesh");
    }
    std::ofstream out(path);
    if (!out) {
        throw IoError("cannot create " + path.string());
    }
    out << std::setprecision(std::numeric_limits<double>::max_digits10);
    const std::string ext = lower_ext(path);
    if (ext == ".obj") {
        for (const auto& v : verts) {
            out << "v " << v.x() << ' ' << v.y() << ' ' << v.z() << '\n';
        }
        for (const auto& f : mesh.faces) {
            out << "f " << f[0] + 1 << ' ' << f[1] + 1 << ' ' << f[2] + 1 << '\n';
        }
    } else if (ext == ".ply") {
        out << "ply\nformat ascii 1.0\nelement vertex " << verts.size()
            << "\nproperty double x\nproperty double y\nproperty double z\nelement face " << mesh.faces.size()
            << "\nproperty list uchar int vertex_indices\nend_header\n";
        for (const auto& v : verts) {
            out << v.x() << ' ' << v.y() << ' ' << v.z() << '\n';
        }
        for (const auto& f : mesh.faces) {
            out << "3 " << f[0] << ' ' << f[1] << ' ' << f[2] << '\n';
        }
    } else {
        throw IoError("unsupported mesh extension '" + ext + "' (expected .obj or .ply)");
    }
    if (!out) {
        throw IoError("failed writing " + path.string());
    }

    nlohmann::json map = nlohmann::json::object();
    for (const auto& [id, v] : mesh.landmark_map) {
        map[std::to_string(id)] = v;
    }
    const nlohmann::json side = {{"scheme", to_string(mesh.scheme)}, {"map", map}, {"controls", mesh.control_indices}};
    std::ofstream sidecar(sidecar_path(path));
    if (!sidecar) {
        throw IoError("cannot create " + sidecar_path(path).string());
    }
    sidecar << side.dump(1) << '\n';
}

}  // namespace facewarp
