#include "facewarp/landmarks.hpp"

#include "facewarp/error.hpp"

#include <fstream>
#include <sstream>

namespace facewarp {

std::string to_string(LandmarkScheme scheme) {
    return scheme == LandmarkScheme::Aflw21 ? "aflw21" : "mpie68";
}

LandmarkScheme scheme_from_string(const std::string& name) {
    if (name == "aflw21") {
        return LandmarkScheme::Aflw21;
    }
    if (name == "mpie68") {
        return LandmarkScheme::Mpie68;
    }
    throw ArgumentError("unknown landmark scheme '" + name + "'");
}

int landmark_count(LandmarkScheme scheme) { return scheme == LandmarkScheme::Aflw21 ? 21 : 68; }

Points2 LandmarkSet2D::positions() const {
    Points2 out;
    out.reserve(points.size());
    for (const auto& p : points) {
        out.push_back(p.pos);
    }
    return out;
}

void LandmarkSet2D::check_compatible(const LandmarkSet2D& other) const {
    if (scheme != other.scheme) {
        throw SchemeMismatch("landmark schemes differ: " + to_string(scheme) + " vs " + to_string(other.scheme));
    }
    if (points.size() != other.points.size()) {
        throw SchemeMismatch("landmark counts differ: " + std::to_string(points.size()) + " vs " +
                             std::to_string(other.points.size()));
    }
    for (std::size_t i = 0; i < points.size(); ++i) {
        if (points[i].id != other.points[i].id) {
            throw SchemeMismatch("landmark ids differ at position " + std::to_string(i));
        }
    }
}

void to_json(nlohmann::json& j, const LandmarkSet2D& set) {
    auto pts = nlohmann::json::array();
    for (const auto& p : set.points) {
        pts.push_back({{"id", p.id}, {"x", p.pos.x()}, {"y", p.pos.y()}, {"visible", p.visible}});
    }
    j = {{"scheme", to_string(set.scheme)}, {"points", pts}};
}

void from_json(const nlohmann::json& j, LandmarkSet2D& set) {
    set.scheme = scheme_from_string(j.at("scheme").get<std::string>());
    set.points.clear();
    for (const auto& p : j.at("points")) {
        Landmark2D lm;
        lm.id = p.at("id").get<int>();
        lm.pos = Point2(p.at("x").get<double>(), p.at("y").get<double>());
        lm.visible = p.value("visible", true);
        set.points.push_back(lm);
    }
}

namespace {

LandmarkSet2D parse_pts(const std::string& text, const std::string& name) {
    std::istringstream is(text);
    std::string line;
    std::size_t line_no = 0;
    std::size_t expected = 0;
    bool in_block = false;
    LandmarkSet2D set;
    while (std::getline(is, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) {
            continue;
        }
        if (!in_block) {
            if (line.rfind("version", 0) == 0) {
                continue;
            }
            if (line.rfind("n_points", 0) == 0) {
                const auto colon = line.find(':');
                if (colon == std::string::npos) {
                    throw ParseError(name, line_no, "malformed n_points header");
                }
                expected = std::stoul(line.substr(colon + 1));
                continue;
            }
            if (line.find('{') != std::string::npos) {
                in_block = true;
                continue;
            }
            throw ParseError(name, line_no, "unexpected line before '{'");
        }
        if (line.find('}') != std::string::npos) {
            in_block = false;
            break;
        }
        std::istringstream ls(line);
        double x = 0.0;
        double y = 0.0;
        if (!(ls >> x >> y)) {
            throw ParseError(name, line_no, "expected 'x y'");
        }
        set.points.push_back({static_cast<int>(set.points.size()) + 1, Point2(x, y), true});
    }
    if (in_block) {
        throw ParseError(name, line_no, "missing closing '}'");
    }
    if (expected != 0 && expected != set.points.size()) {
        throw ParseError(name, line_no, "n_points says " + std::to_string(expected) + " but found " +
                                            std::to_string(set.points.size()));
    }
    if (set.points.size() == 21) {
        set.scheme = LandmarkScheme::Aflw21;
    } else if (set.points.size() == 68) {
        set.scheme = LandmarkScheme::Mpie68;
    } else {
        throw ParseError(name, line_no, "pts file has " + std::to_string(set.points.size()) +
                                            " points; only 21 and 68 point schemes are supported");
    }
    return set;
}

}  // namespace

LandmarkSet2D load_landmarks(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw IoError("cannot open " + path.string());
    }
    std::stringstream buffer;
    buffer << in.rdbuf();
    const std::string text = buffer.str();
    const auto first = text.find_first_not_of(" \t\r\n");
    if (first != std::string::npos && text[first] == '{' && path.extension() != ".pts") {
        try {
            return nlohmann::json::parse(text).get<LandmarkSet2D>();
        } catch (const nlohmann::json::exception& e) {
            throw ParseError(path.string(), 0, e.what());
        }
    }
    return parse_pts(text, path.string());
}

void save_landmarks(const LandmarkSet2D& set, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) {
        throw IoError("cannot create " + path.string());
    }
    out << nlohmann::json(set).dump(2) << '\n';
}

}  // namespace facewarp
