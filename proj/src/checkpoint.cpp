#include "facewarp/error.hpp"
#include "facewarp/estimator.hpp"

#include <bit>
#include <cstring>
#include <fstream>

namespace facewarp {

namespace {

static_assert(std::endian::native == std::endian::little, "checkpoints are written little-endian");

constexpr char kMagic[8] = {'F', 'W', 'M', 'O', 'D', 'E', 'L', '1'};
constexpr std::uint32_t kVersion = 1;

struct Tensor {
    std::string name;
    std::vector<std::int64_t> dims;
    std::vector<double> data;
};

template <class T>
void put(std::ostream& out, T v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <class T>
T take(std::istream& in, const std::string& what) {
    T v{};
    if (!in.read(reinterpret_cast<char*>(&v), sizeof(T))) {
        throw ParseError(what, 0, "truncated checkpoint");
    }
    return v;
}

std::string take_string(std::istream& in, std::size_t n, const std::string& what) {
    if (n > (std::size_t{1} << 30)) {
        throw ParseError(what, 0, "implausible string length in checkpoint");
    }
    std::string s(n, '\0');
    if (!in.read(s.data(), static_cast<std::streamsize>(n))) {
        throw ParseError(what, 0, "truncated checkpoint");
    }
    return s;
}

}  // namespace

void save_model(const Model& model, const std::filesystem::path& path) {
    const FaceMesh& mesh = model.mesh();
    nlohmann::json header;
    header["config"] = model.config();
    header["scheme"] = to_string(mesh.scheme);
    nlohmann::json map = nlohmann::json::object();
    for (const auto& [id, v] : mesh.landmark_map) {
        map[std::to_string(id)] = v;
    }
    header["landmark_map"] = map;
    header["control_indices"] = mesh.control_indices;
    const std::string text = header.dump();

    std::vector<Tensor> tensors;
    Tensor verts{"mesh.vertices", {static_cast<std::int64_t>(mesh.vertices.size()), 3}, {}};
    for (const auto& v : mesh.vertices) {
        verts.data.insert(verts.data.end(), {v.x(), v.y(), v.z()});
    }
    tensors.push_back(std::move(verts));
    Tensor faces{"mesh.faces", {static_cast<std::int64_t>(mesh.faces.size()), 3}, {}};
    for (const auto& f : mesh.faces) {
        faces.data.insert(faces.data.end(), {double(f[0]), double(f[1]), double(f[2])});
    }
    tensors.push_back(std::move(faces));
    for (const auto& p : model.parameters()) {
        Tensor t{p.name, {p.value.rows(), p.value.cols()}, {}};
        t.data.reserve(static_cast<std::size_t>(p.value.size()));
        for (Eigen::Index i = 0; i < p.value.size(); ++i) {
            t.data.push_back(static_cast<double>(p.value.data()[i]));
        }
        tensors.push_back(std::move(t));
    }

    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw IoError("cannot create " + path.string());
    }
    out.write(kMagic, sizeof kMagic);
    put<std::uint32_t>(out, kVersion);
    put<std::uint32_t>(out, static_cast<std::uint32_t>(text.size()));
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    put<std::uint32_t>(out, static_cast<std::uint32_t>(tensors.size()));
    for (const auto& t : tensors) {
        put<std::uint32_t>(out, static_cast<std::uint32_t>(t.name.size()));
        out.write(t.name.data(), static_cast<std::streamsize>(t.name.size()));
        put<std::uint32_t>(out, static_cast<std::uint32_t>(t.dims.size()));
        for (auto d : t.dims) {
            put<std::int64_t>(out, d);
        }
        out.write(reinterpret_cast<const char*>(t.data.data()),
                  static_cast<std::streamsize>(t.data.size() * sizeof(double)));
    }
    if (!out) {
        throw IoError("failed writing " + path.string());
    }
}

Model load_model(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw IoError("cannot open " + path.string());
    }
    const std::string what = path.string();
    char magic[8];
    if (!in.read(magic, sizeof magic) || std::memcmp(magic, kMagic, sizeof magic) != 0) {
        throw ParseError(what, 0, "not a facewarp model checkpoint");
    }
    const auto version = take<std::uint32_t>(in, what);
    if (version != kVersion) {
        throw ParseError(what, 0, "unsupported checkpoint version " + std::to_string(version));
    }
    nlohmann::json header;
    try {
        header = nlohmann::json::parse(take_string(in, take<std::uint32_t>(in, what), what));
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(what, 0, std::string("bad checkpoint header: ") + e.what());
    }
    const auto count = take<std::uint32_t>(in, what);
    std::vector<Tensor> tensors;
    for (std::uint32_t k = 0; k < count; ++k) {
        Tensor t;
        t.name = take_string(in, take<std::uint32_t>(in, what), what);
        const auto rank = take<std::uint32_t>(in, what);
        if (rank > 4) {
            throw ParseError(what, 0, "tensor '" + t.name + "' has rank " + std::to_string(rank));
        }
        std::int64_t total = 1;
        for (std::uint32_t r = 0; r < rank; ++r) {
            const auto d = take<std::int64_t>(in, what);
            if (d < 0 || d > (std::int64_t{1} << 31)) {
                throw ParseError(what, 0, "tensor '" + t.name + "' has a bad dimension");
            }
            t.dims.push_back(d);
            total *= d;
        }
        t.data.resize(static_cast<std::size_t>(total));
        if (!in.read(reinterpret_cast<char*>(t.data.data()), static_cast<std::streamsize>(total * 8))) {
            throw ParseError(what, 0, "truncated tensor '" + t.name + "'");
        }
        tensors.push_back(std::move(t));
    }
    auto find = [&](const std::string& name) -> const Tensor& {
        for (const auto& t : tensors) {
            if (t.name == name) {
                return t;
            }
        }
        throw ParseError(what, 0, "checkpoint lacks tensor '" + name + "'");
    };

    FaceMesh mesh;
    try {
        mesh.scheme = scheme_from_string(header.at("scheme").get<std::string>());
        for (const auto& [id, v] : header.at("landmark_map").items()) {
            mesh.landmark_map[std::stoi(id)] = v.get<int>();
        }
        mesh.control_indices = header.at("control_indices").get<std::vector<int>>();
    } catch (const std::exception& e) {
        throw ParseError(what, 0, std::string("bad checkpoint header: ") + e.what());
    }
    const Tensor& verts = find("mesh.vertices");
    const Tensor& faces = find("mesh.faces");
    if (verts.dims.size() != 2 || verts.dims[1] != 3 || faces.dims.size() != 2 || faces.dims[1] != 3) {
        throw ParseError(what, 0, "mesh tensors must be N x 3");
    }
    for (std::size_t i = 0; i < verts.data.size(); i += 3) {
        mesh.vertices.emplace_back(verts.data[i], verts.data[i + 1], verts.data[i + 2]);
    }
    for (std::size_t i = 0; i < faces.data.size(); i += 3) {
        mesh.faces.push_back({static_cast<int>(faces.data[i]), static_cast<int>(faces.data[i + 1]),
                              static_cast<int>(faces.data[i + 2])});
    }

    Model model(header.at("config").get<EstimatorConfig>(), std::move(mesh));
    for (auto& p : model.parameters()) {
        const Tensor& t = find(p.name);
        if (t.dims.size() != 2 || t.dims[0] != p.value.rows() || t.dims[1] != p.value.cols()) {
            throw ParseError(what, 0, "tensor '" + p.name + "' has the wrong shape");
        }
        for (Eigen::Index i = 0; i < p.value.size(); ++i) {
            p.value.data()[i] = static_cast<Real>(t.data[static_cast<std::size_t>(i)]);
        }
    }
    return model;
}

}  // namespace facewarp
