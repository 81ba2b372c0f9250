#include "chainhoi/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

#include "chainhoi/errors.hpp"
#include "chainhoi/rng.hpp"

namespace chainhoi {

namespace {

ClosestPointResult closest_point_segment(const Vec3& p, const Vec3& a, const Vec3& b) {
    Vec3 ab = b - a;
    double denom = ab.norm2();
    double t = denom > 0.0 ? std::clamp((p - a).dot(ab) / denom, 0.0, 1.0) : 0.0;
    Vec3 q = a + ab * t;
    return {(p - q).norm2(), q};
}

double tri_area2(const Vec3& a, const Vec3& b, const Vec3& c) {
    return 0.5 * (b - a).cross(c - a).norm();
}

}  // namespace

namespace {
bool vec_less(const Vec3& u, const Vec3& v) {
    if (u.x != v.x) return u.x < v.x;
    if (u.y != v.y) return u.y < v.y;
    return u.z < v.z;
}
}  // namespace

ClosestPointResult closest_point_triangle(const Vec3& p, const Vec3& a_in, const Vec3& b_in,
                                          const Vec3& c_in) {
    // canonical vertex order makes the result exactly permutation-invariant
    const Vec3 *pa = &a_in, *pb = &b_in, *pc = &c_in;
    if (vec_less(*pb, *pa)) std::swap(pa, pb);
    if (vec_less(*pc, *pb)) std::swap(pb, pc);
    if (vec_less(*pb, *pa)) std::swap(pa, pb);
    const Vec3 &a = *pa, &b = *pb, &c = *pc;

    // Ericson-style region analysis over the triangle's barycentric regions
    Vec3 ab = b - a, ac = c - a, ap = p - a;
    double d1 = ab.dot(ap), d2 = ac.dot(ap);
    if (d1 <= 0.0 && d2 <= 0.0) return {(p - a).norm2(), a};  // vertex region A

    Vec3 bp = p - b;
    double d3 = ab.dot(bp), d4 = ac.dot(bp);
    if (d3 >= 0.0 && d4 <= d3) return {(p - b).norm2(), b};  // vertex region B

    double vc = d1 * d4 - d3 * d2;
    if (vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0) {  // edge AB
        double v = d1 / (d1 - d3);
        Vec3 q = a + ab * v;
        return {(p - q).norm2(), q};
    }

    Vec3 cp = p - c;
    double d5 = ab.dot(cp), d6 = ac.dot(cp);
    if (d6 >= 0.0 && d5 <= d6) return {(p - c).norm2(), c};  // vertex region C

    double vb = d5 * d2 - d1 * d6;
    if (vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0) {  // edge AC
        double w = d2 / (d2 - d6);
        Vec3 q = a + ac * w;
        return {(p - q).norm2(), q};
    }

    double va = d3 * d6 - d5 * d4;
    if (va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0) {  // edge BC
        double w = (d4 - d3) / ((d4 - d3) + (d5 - d6));
        Vec3 q = b + (c - b) * w;
        return {(p - q).norm2(), q};
    }

    double denom = va + vb + vc;
    if (denom <= 0.0) {
        // degenerate triangle: fall back to the best edge/point distance
        ClosestPointResult best = closest_point_segment(p, a, b);
        ClosestPointResult r2 = closest_point_segment(p, a, c);
        if (r2.sqdist < best.sqdist) best = r2;
        ClosestPointResult r3 = closest_point_segment(p, b, c);
        if (r3.sqdist < best.sqdist) best = r3;
        return best;
    }
    double v = vb / denom, w = vc / denom;  // face interior: p' = a + v*ab + w*ac
    Vec3 q = a + ab * v + ac * w;
    return {(p - q).norm2(), q};
}

double point_triangle_sqdist(const Vec3& p, const Vec3& a, const Vec3& b, const Vec3& c) {
    return closest_point_triangle(p, a, b, c).sqdist;
}

TriangleMesh TriangleMesh::from_data(std::vector<Vec3> vertices,
                                     std::vector<std::array<int, 3>> triangles) {
    TriangleMesh m;
    m.vertices = std::move(vertices);
    int v = static_cast<int>(m.vertices.size());
    for (const auto& t : triangles) {
        for (int idx : t)
            if (idx < 0 || idx >= v) throw DataError("triangle index out of range");
        if (tri_area2(m.vertices[static_cast<size_t>(t[0])], m.vertices[static_cast<size_t>(t[1])],
                      m.vertices[static_cast<size_t>(t[2])]) <= 1e-12) {
            ++m.dropped_degenerate;
            continue;
        }
        m.triangles.push_back(t);
    }
    if (m.dropped_degenerate > 0)
        std::fprintf(stderr, "warning: dropped %d degenerate triangle(s)\n", m.dropped_degenerate);
    return m;
}

bool TriangleMesh::watertight() const {
    if (watertight_cache_ >= 0) return watertight_cache_ == 1;
    // every undirected edge must be shared by exactly two faces with opposite direction
    std::map<std::pair<int, int>, int> directed;
    for (const auto& t : triangles)
        for (int e = 0; e < 3; ++e) {
            int u = t[static_cast<size_t>(e)], v = t[static_cast<size_t>((e + 1) % 3)];
            ++directed[{u, v}];
        }
    bool ok = !triangles.empty();
    for (const auto& [edge, count] : directed) {
        auto rev = directed.find({edge.second, edge.first});
        if (count != 1 || rev == directed.end() || rev->second != 1) {
            ok = false;
            break;
        }
    }
    watertight_cache_ = ok ? 1 : 0;
    return ok;
}

TriangleMesh TriangleMesh::load_obj(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw DataError("cannot open mesh: " + path);
    std::vector<Vec3> verts;
    std::vector<std::array<int, 3>> tris;
    std::string line;
    int lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        std::istringstream ls(line);
        std::string tag;
        if (!(ls >> tag)) continue;
        if (tag == "v") {
            Vec3 v;
            if (!(ls >> v.x >> v.y >> v.z))
                throw DataError(path + ":" + std::to_string(lineno) + ": bad vertex");
            verts.push_back(v);
        } else if (tag == "f") {
            std::vector<int> idx;
            std::string tok;
            while (ls >> tok) {
                // accept i, i/j, i/j/k forms; only the vertex index is used
                size_t slash = tok.find('/');
                int i = std::stoi(slash == std::string::npos ? tok : tok.substr(0, slash));
                if (i < 0) i = static_cast<int>(verts.size()) + i + 1;  // negative = relative
                idx.push_back(i - 1);
            }
            if (idx.size() < 3)
                throw DataError(path + ":" + std::to_string(lineno) + ": face needs 3+ vertices");
            for (size_t k = 1; k + 1 < idx.size(); ++k)
                tris.push_back({idx[0], idx[k], idx[k + 1]});  // fan triangulation
        }
        // all other tags ignored
    }
    return from_data(std::move(verts), std::move(tris));
}

void TriangleMesh::save_obj(const std::string& path) const {
    std::ofstream os(path);
    if (!os) throw DataError("cannot write mesh: " + path);
    os.precision(17);
    for (const Vec3& v : vertices) os << "v " << v.x << ' ' << v.y << ' ' << v.z << '\n';
    for (const auto& t : triangles)
        os << "f " << t[0] + 1 << ' ' << t[1] + 1 << ' ' << t[2] + 1 << '\n';
}

TriangleMesh TriangleMesh::box(double wx, double wy, double wz) {
    double x = wx / 2, y = wy / 2, z = wz / 2;
    std::vector<Vec3> v = {{-x, -y, -z}, {x, -y, -z}, {x, y, -z}, {-x, y, -z},
                           {-x, -y, z},  {x, -y, z},  {x, y, z},  {-x, y, z}};
    // outward-facing winding
    std::vector<std::array<int, 3>> t = {
        {0, 2, 1}, {0, 3, 2},  // -z
        {4, 5, 6}, {4, 6, 7},  // +z
        {0, 1, 5}, {0, 5, 4},  // -y
        {3, 7, 6}, {3, 6, 2},  // +y
        {0, 4, 7}, {0, 7, 3},  // -x
        {1, 2, 6}, {1, 6, 5},  // +x
    };
    return from_data(std::move(v), std::move(t));
}

TriangleMesh TriangleMesh::icosphere(double radius, int subdivisions) {
    double phi = (1.0 + std::sqrt(5.0)) / 2.0;
    std::vector<Vec3> v = {{-1, phi, 0}, {1, phi, 0},  {-1, -phi, 0}, {1, -phi, 0},
                           {0, -1, phi}, {0, 1, phi},  {0, -1, -phi}, {0, 1, -phi},
                           {phi, 0, -1}, {phi, 0, 1},  {-phi, 0, -1}, {-phi, 0, 1}};
    std::vector<std::array<int, 3>> t = {
        {0, 11, 5}, {0, 5, 1},  {0, 1, 7},   {0, 7, 10}, {0, 10, 11},
        {1, 5, 9},  {5, 11, 4}, {11, 10, 2}, {10, 7, 6}, {7, 1, 8},
        {3, 9, 4},  {3, 4, 2},  {3, 2, 6},   {3, 6, 8},  {3, 8, 9},
        {4, 9, 5},  {2, 4, 11}, {6, 2, 10},  {8, 6, 7},  {9, 8, 1}};
    for (int s = 0; s < subdivisions; ++s) {
        std::map<std::pair<int, int>, int> midpoint;
        auto mid = [&](int a, int b) {
            auto key = std::minmax(a, b);
            auto it = midpoint.find(key);
            if (it != midpoint.end()) return it->second;
            Vec3 m = (v[static_cast<size_t>(a)] + v[static_cast<size_t>(b)]) * 0.5;
            v.push_back(m);
            int idx = static_cast<int>(v.size()) - 1;
            midpoint[key] = idx;
            return idx;
        };
        std::vector<std::array<int, 3>> next;
        next.reserve(t.size() * 4);
        for (const auto& f : t) {
            int ab = mid(f[0], f[1]), bc = mid(f[1], f[2]), ca = mid(f[2], f[0]);
            next.push_back({f[0], ab, ca});
            next.push_back({f[1], bc, ab});
            next.push_back({f[2], ca, bc});
            next.push_back({ab, bc, ca});
        }
        t = std::move(next);
    }
    for (Vec3& p : v) p = p.normalized() * radius;
    return from_data(std::move(v), std::move(t));
}

TriangleMesh TriangleMesh::cylinder(double radius, double height, int sides) {
    if (sides < 3) throw DataError("cylinder needs at least 3 sides");
    std::vector<Vec3> v;
    double h = height / 2;
    for (int i = 0; i < sides; ++i) {
        double a = 2.0 * M_PI * i / sides;
        v.push_back({radius * std::cos(a), -h, radius * std::sin(a)});
    }
    for (int i = 0; i < sides; ++i) {
        double a = 2.0 * M_PI * i / sides;
        v.push_back({radius * std::cos(a), h, radius * std::sin(a)});
    }
    int bottom_center = static_cast<int>(v.size());
    v.push_back({0, -h, 0});
    int top_center = static_cast<int>(v.size());
    v.push_back({0, h, 0});
    std::vector<std::array<int, 3>> t;
    for (int i = 0; i < sides; ++i) {
        int j = (i + 1) % sides;
        t.push_back({i, j, sides + i});
        t.push_back({j, sides + j, sides + i});
        t.push_back({bottom_center, j, i});
        t.push_back({top_center, sides + i, sides + j});
    }
    return from_data(std::move(v), std::move(t));
}

PosedMesh::PosedMesh(const TriangleMesh& base, const ObjectPose& pose) {
    posed_.vertices.reserve(base.vertices.size());
    Mat3 r = axis_angle_to_matrix(pose.rotation);
    for (const Vec3& v : base.vertices) posed_.vertices.push_back(r * v + pose.translation);
    posed_.triangles = base.triangles;
}

MeshDistanceQuery::MeshDistanceQuery(const TriangleMesh& mesh) : mesh_(mesh) {
    if (mesh_.triangles.empty()) throw EmptyMesh("mesh has no triangles");
    tri_order_.resize(mesh_.triangles.size());
    for (size_t i = 0; i < tri_order_.size(); ++i) tri_order_[i] = static_cast<int>(i);
    nodes_.reserve(2 * mesh_.triangles.size());
    root_ = build(tri_order_, 0, static_cast<int>(tri_order_.size()));
}

int MeshDistanceQuery::build(std::vector<int>& tri_order, int first, int count) {
    BvhNode node;
    node.lo = {1e300, 1e300, 1e300};
    node.hi = {-1e300, -1e300, -1e300};
    std::vector<Vec3> centroids(static_cast<size_t>(count));
    for (int i = 0; i < count; ++i) {
        const auto& t = mesh_.triangles[static_cast<size_t>(tri_order[static_cast<size_t>(first + i)])];
        Vec3 cen{0, 0, 0};
        for (int k = 0; k < 3; ++k) {
            const Vec3& v = mesh_.vertices[static_cast<size_t>(t[static_cast<size_t>(k)])];
            node.lo = {std::min(node.lo.x, v.x), std::min(node.lo.y, v.y), std::min(node.lo.z, v.z)};
            node.hi = {std::max(node.hi.x, v.x), std::max(node.hi.y, v.y), std::max(node.hi.z, v.z)};
            cen += v;
        }
        centroids[static_cast<size_t>(i)] = cen * (1.0 / 3.0);
    }
    if (count <= 4) {
        node.first = first;
        node.count = count;
        nodes_.push_back(node);
        return static_cast<int>(nodes_.size()) - 1;
    }
    Vec3 extent = node.hi - node.lo;
    int axis = 0;
    if (extent.y > extent.x) axis = 1;
    if ((axis == 0 ? extent.x : extent.y) < extent.z) axis = 2;
    auto key = [axis](const Vec3& c) { return axis == 0 ? c.x : axis == 1 ? c.y : c.z; };
    std::vector<int> local(tri_order.begin() + first, tri_order.begin() + first + count);
    std::vector<std::pair<double, int>> order(static_cast<size_t>(count));
    for (int i = 0; i < count; ++i)
        order[static_cast<size_t>(i)] = {key(centroids[static_cast<size_t>(i)]), local[static_cast<size_t>(i)]};
    std::sort(order.begin(), order.end());
    for (int i = 0; i < count; ++i) tri_order[static_cast<size_t>(first + i)] = order[static_cast<size_t>(i)].second;
    int mid = count / 2;
    int self = static_cast<int>(nodes_.size());
    nodes_.push_back(node);
    int left = build(tri_order, first, mid);
    int right = build(tri_order, first + mid, count - mid);
    nodes_[static_cast<size_t>(self)].left = left;
    nodes_[static_cast<size_t>(self)].right = right;
    return self;
}

namespace {
double aabb_sqdist(const Vec3& p, const Vec3& lo, const Vec3& hi) {
    double d = 0.0;
    for (int k = 0; k < 3; ++k) {
        double v = k == 0 ? p.x : k == 1 ? p.y : p.z;
        double l = k == 0 ? lo.x : k == 1 ? lo.y : lo.z;
        double h = k == 0 ? hi.x : k == 1 ? hi.y : hi.z;
        if (v < l) d += (l - v) * (l - v);
        if (v > h) d += (v - h) * (v - h);
    }
    return d;
}
}  // namespace

void MeshDistanceQuery::query(int node_idx, const Vec3& p, double& best, Vec3& best_point) const {
    const BvhNode& node = nodes_[static_cast<size_t>(node_idx)];
    if (aabb_sqdist(p, node.lo, node.hi) > best) return;
    if (node.left < 0) {
        for (int i = 0; i < node.count; ++i) {
            const auto& t = mesh_.triangles[static_cast<size_t>(tri_order_[static_cast<size_t>(node.first + i)])];
            ClosestPointResult r = closest_point_triangle(
                p, mesh_.vertices[static_cast<size_t>(t[0])], mesh_.vertices[static_cast<size_t>(t[1])],
                mesh_.vertices[static_cast<size_t>(t[2])]);
            if (r.sqdist < best) {
                best = r.sqdist;
                best_point = r.point;
            }
        }
        return;
    }
    // visit the nearer child first for earlier pruning
    double dl = aabb_sqdist(p, nodes_[static_cast<size_t>(node.left)].lo, nodes_[static_cast<size_t>(node.left)].hi);
    double dr = aabb_sqdist(p, nodes_[static_cast<size_t>(node.right)].lo, nodes_[static_cast<size_t>(node.right)].hi);
    if (dl <= dr) {
        query(node.left, p, best, best_point);
        query(node.right, p, best, best_point);
    } else {
        query(node.right, p, best, best_point);
        query(node.left, p, best, best_point);
    }
}

double MeshDistanceQuery::sqdist(const Vec3& p) const { return closest(p).sqdist; }

ClosestPointResult MeshDistanceQuery::closest(const Vec3& p) const {
    double best = 1e300;
    Vec3 best_point;
    query(root_, p, best, best_point);
    return {best, best_point};
}

double MeshDistanceQuery::sqdist_exhaustive(const Vec3& p) const {
    double best = 1e300;
    for (const auto& t : mesh_.triangles)
        best = std::min(best, point_triangle_sqdist(p, mesh_.vertices[static_cast<size_t>(t[0])],
                                                    mesh_.vertices[static_cast<size_t>(t[1])],
                                                    mesh_.vertices[static_cast<size_t>(t[2])]));
    return best;
}

bool MeshDistanceQuery::inside(const Vec3& p, uint64_t seed) const {
    if (!mesh_.watertight()) throw NotWatertight("inside/outside test requires a watertight mesh");
    // early out: outside the root box means outside the mesh
    const BvhNode& root = nodes_[static_cast<size_t>(root_)];
    if (p.x < root.lo.x || p.x > root.hi.x || p.y < root.lo.y || p.y > root.hi.y ||
        p.z < root.lo.z || p.z > root.hi.z)
        return false;
    Rng rng(seed);
    for (int attempt = 0; attempt < 8; ++attempt) {
        // random direction; re-cast whenever a hit grazes an edge or runs parallel
        Vec3 dir{rng.normal(), rng.normal(), rng.normal()};
        if (dir.norm() < 1e-6) continue;
        dir = dir.normalized();
        int crossings = 0;
        bool robust = true;
        for (const auto& t : mesh_.triangles) {
            const Vec3& a = mesh_.vertices[static_cast<size_t>(t[0])];
            const Vec3& b = mesh_.vertices[static_cast<size_t>(t[1])];
            const Vec3& c = mesh_.vertices[static_cast<size_t>(t[2])];
            // Moller-Trumbore
            Vec3 e1 = b - a, e2 = c - a;
            Vec3 h = dir.cross(e2);
            double det = e1.dot(h);
            if (std::abs(det) < 1e-12) {
                // ray parallel to the face plane; only unsafe if the face could intersect
                continue;
            }
            double inv = 1.0 / det;
            Vec3 s = p - a;
            double u = s.dot(h) * inv;
            Vec3 q = s.cross(e1);
            double v = dir.dot(q) * inv;
            double ray_t = e2.dot(q) * inv;
            const double eps = 1e-9;
            if (ray_t <= 0.0) continue;
            if (u < -eps || v < -eps || u + v > 1.0 + eps) continue;
            if (u < eps || v < eps || u + v > 1.0 - eps || ray_t < eps) {
                robust = false;  // grazing hit, not trustworthy
                break;
            }
            ++crossings;
        }
        if (robust) return (crossings % 2) == 1;
    }
    throw NumericError("inside test failed to find a robust ray after 8 attempts");
}

double point_mesh_sqdist(const Vec3& p, const PosedMesh& mesh) {
    MeshDistanceQuery q(mesh.mesh());
    return q.sqdist(p);
}

std::vector<Vec3> body_proxy_points(const std::vector<Vec3>& joint_positions,
                                    const SkeletonSpec& spec) {
    if (static_cast<int>(joint_positions.size()) != spec.joint_count)
        throw ShapeError("joint position count does not match the skeleton");
    std::vector<Vec3> points = joint_positions;
    for (int j = 1; j < spec.joint_count; ++j) {
        const Vec3& child = joint_positions[static_cast<size_t>(j)];
        const Vec3& parent = joint_positions[static_cast<size_t>(spec.parent_of[static_cast<size_t>(j)])];
        for (int k = 1; k <= 4; ++k) {
            double s = k / 5.0;
            points.push_back(parent + (child - parent) * s);
        }
    }
    return points;
}

}  // namespace chainhoi
