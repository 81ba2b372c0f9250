#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "chainhoi/errors.hpp"
#include "chainhoi/skeleton.hpp"
#include "chainhoi/vec3.hpp"

namespace chainhoi {

// Rigid object pose: rotate (axis-angle) then translate.
struct ObjectPose {
    Vec3 rotation;     // axis-angle, radians
    Vec3 translation;  // meters

    Vec3 apply(const Vec3& p) const { return axis_angle_to_matrix(rotation) * p + translation; }
};

struct ClosestPointResult {
    double sqdist = 0.0;
    Vec3 point;  // closest point on the primitive
};

// Exact closest point on a triangle via the 7-region case analysis.
ClosestPointResult closest_point_triangle(const Vec3& p, const Vec3& a, const Vec3& b,
                                          const Vec3& c);
double point_triangle_sqdist(const Vec3& p, const Vec3& a, const Vec3& b, const Vec3& c);

struct TriangleMesh {
    std::vector<Vec3> vertices;
    std::vector<std::array<int, 3>> triangles;

    bool watertight() const;  // computed, cached on first call
    int dropped_degenerate = 0;  // faces removed at load/build time

    static TriangleMesh from_data(std::vector<Vec3> vertices,
                                  std::vector<std::array<int, 3>> triangles);
    // OBJ subset: `v x y z` and `f i j k ...` (1-based; polygons fan-triangulated)
    static TriangleMesh load_obj(const std::string& path);
    void save_obj(const std::string& path) const;

    // primitive generators used by the synthetic dataset
    static TriangleMesh box(double wx, double wy, double wz);
    static TriangleMesh icosphere(double radius, int subdivisions);
    static TriangleMesh cylinder(double radius, double height, int sides);

private:
    mutable int watertight_cache_ = -1;
};

// Mesh with an object pose applied; vertices are materialized once.
struct PosedMesh {
    PosedMesh(const TriangleMesh& base, const ObjectPose& pose);

    const TriangleMesh& mesh() const { return posed_; }

private:
    TriangleMesh posed_;
};

// BVH over mesh triangles for point queries. The traversal evaluates the same
// per-triangle distance as the exhaustive loop, so minima agree exactly.
class MeshDistanceQuery {
public:
    explicit MeshDistanceQuery(const TriangleMesh& mesh);

    double sqdist(const Vec3& p) const;                    // min over all faces
    ClosestPointResult closest(const Vec3& p) const;
    double sqdist_exhaustive(const Vec3& p) const;         // oracle path

    // ray-parity inside test; requires a watertight mesh
    bool inside(const Vec3& p, uint64_t seed = 12345) const;

    const TriangleMesh& mesh() const { return mesh_; }

private:
    struct BvhNode {
        Vec3 lo, hi;
        int left = -1, right = -1;   // children, or
        int first = 0, count = 0;    // leaf triangle range
    };

    int build(std::vector<int>& tri_order, int first, int count);
    void query(int node, const Vec3& p, double& best, Vec3& best_point) const;

    TriangleMesh mesh_;
    std::vector<BvhNode> nodes_;
    std::vector<int> tri_order_;
    int root_ = -1;
};

double point_mesh_sqdist(const Vec3& p, const PosedMesh& mesh);

// Joints plus 4 evenly spaced interior points per bone.
std::vector<Vec3> body_proxy_points(const std::vector<Vec3>& joint_positions,
                                    const SkeletonSpec& spec);

}  // namespace chainhoi
