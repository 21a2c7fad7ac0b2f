#pragma once

#include "facewarp/landmarks.hpp"
#include "facewarp/projection.hpp"
#include "facewarp/types.hpp"

#include <array>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

namespace facewarp {

using Face = std::array<int, 3>;

/// The generic model: rest-shape vertices, counterclockwise (outward) faces,
/// the landmark id -> vertex map for one scheme, and the TPS control vertices.
struct FaceMesh {
    Points3 vertices;
    std::vector<Face> faces;
    LandmarkScheme scheme = LandmarkScheme::Mpie68;
    std::map<int, int> landmark_map;
    std::vector<int> control_indices;

    /// Index checks plus edge-manifoldness (no edge shared by more than two
    /// faces, consistent orientation). Throws ArgumentError or ManifoldError.
    void validate() const;

    /// Vertex indices of the landmarks in ascending id order.
    std::vector<int> landmark_vertices() const;
    std::vector<int> landmark_ids() const;

    Points3 gather(std::span<const Point3> source, std::span<const int> indices) const;
    Points3 control_points() const { return gather(vertices, control_indices); }
};

using VisibilityMask = std::vector<bool>;

/// Area-weighted average of incident face normals, normalized. Vertices with
/// no non-degenerate incident face get (0, 0, 1).
Points3 vertex_normals(const FaceMesh& mesh, std::span<const Point3> vertices);
inline Points3 vertex_normals(const FaceMesh& mesh) { return vertex_normals(mesh, mesh.vertices); }

/// -A^{-1} b, the point annihilated by M. Throws SingularA when |det A| <= 1e-12.
Point3 estimate_camera_center(const CameraParams& cam);

struct VisibilityOptions {
    bool zbuffer = true;
    int resolution = 256;
    /// Occlusion tolerance as a fraction of the scene's depth range.
    double depth_tolerance = 1e-3;
};

/// A vertex is visible when its normal faces the camera center and, if
/// enabled, no rendered triangle lies in front of it at its pixel.
VisibilityMask visibility(const FaceMesh& mesh, std::span<const Point3> warped_vertices,
                          const CameraParams& cam, const VisibilityOptions& options = {});

/// OBJ ("v", "f" records; polygons are fan-triangulated) or ASCII/binary PLY,
/// chosen by extension. Landmarks and controls come from the sidecar
/// `<mesh>.landmarks.json` when present.
FaceMesh load_mesh(const std::filesystem::path& path);

/// Writes `warped_vertices` (the mesh's own vertices when empty) with the
/// mesh faces, plus the sidecar.
void save_mesh(const FaceMesh& mesh, std::span<const Point3> warped_vertices,
               const std::filesystem::path& path);

std::filesystem::path sidecar_path(const std::filesystem::path& mesh_path);

struct SyntheticFaceOptions {
    /// Grid resolution of the front half-ellipsoid; rows*cols vertices.
    int rows = 71;
    int cols = 71;
    LandmarkScheme scheme = LandmarkScheme::Mpie68;
    int control_count = 40;
};

/// Deterministic procedural mean face: a front half-ellipsoid head (roughly
/// 2 x 2.6 x 1 model units) with nose, brow, eye socket and lip relief.
/// Controls are the landmark vertices plus evenly spaced face-boundary samples.
FaceMesh make_synthetic_face(const SyntheticFaceOptions& options = {});

/// Unit sphere subdivided from an icosahedron.
FaceMesh make_icosphere(int subdivisions);

}  // namespace facewarp
