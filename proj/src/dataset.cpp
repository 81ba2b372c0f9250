#include "chainhoi/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "chainhoi/model.hpp"

namespace chainhoi {

namespace fs = std::filesystem;
using ordered_json = nlohmann::ordered_json;

void save_jsonl(const std::vector<SequenceRecord>& records, const std::string& path) {
    std::ofstream os(path);
    if (!os) throw DataError("cannot write dataset: " + path);
    for (const SequenceRecord& r : records) {
        ordered_json j;
        j["id"] = r.id;
        j["text"] = r.text;
        j["object_id"] = r.object_id;
        j["fps"] = r.seq.fps;
        ordered_json frames = ordered_json::array();
        for (int t = 0; t < r.seq.length; ++t) {
            ordered_json frame = ordered_json::array();
            for (int n = 0; n < r.seq.node_count; ++n) {
                ordered_json node = ordered_json::array();
                for (int c = 0; c < kFeatureWidth; ++c) node.push_back(r.seq.at(t, n, c));
                frame.push_back(std::move(node));
            }
            frames.push_back(std::move(frame));
        }
        j["frames"] = std::move(frames);
        ordered_json labels = ordered_json::array();
        for (int t = 0; t < r.labels.length; ++t) {
            ordered_json row = ordered_json::array();
            for (int k = 0; k < 8; ++k) row.push_back(static_cast<int>(r.labels.at(t, k)));
            labels.push_back(std::move(row));
        }
        j["contact_labels"] = std::move(labels);
        os << j.dump() << '\n';
    }
}

std::vector<SequenceRecord> load_jsonl(const std::string& path, const SkeletonSpec& spec) {
    std::ifstream is(path);
    if (!is) throw DataError("cannot open dataset: " + path);
    std::vector<SequenceRecord> out;
    std::string line;
    int lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        if (line.empty()) continue;
        ordered_json j;
        try {
            j = ordered_json::parse(line);
        } catch (const std::exception& e) {
            throw DataError(path + ":" + std::to_string(lineno) + ": bad JSON: " + e.what());
        }
        SequenceRecord r;
        try {
            r.id = j.at("id").get<std::string>();
            r.text = j.at("text").get<std::string>();
            r.object_id = j.at("object_id").get<std::string>();
            r.seq.fps = j.at("fps").get<double>();
            const auto& frames = j.at("frames");
            r.seq.length = static_cast<int>(frames.size());
            r.seq.node_count = spec.node_count();
            r.seq.frames.reserve(static_cast<size_t>(r.seq.length) * r.seq.node_count * kFeatureWidth);
            for (const auto& frame : frames) {
                if (static_cast<int>(frame.size()) != r.seq.node_count)
                    throw DataError("node count mismatch");
                for (const auto& node : frame) {
                    if (static_cast<int>(node.size()) != kFeatureWidth)
                        throw DataError("feature width mismatch");
                    for (const auto& v : node) r.seq.frames.push_back(v.get<double>());
                }
            }
            const auto& labels = j.at("contact_labels");
            r.labels.length = static_cast<int>(labels.size());
            for (const auto& row : labels) {
                if (row.size() != 8) throw DataError("label width mismatch");
                for (const auto& v : row) r.labels.a.push_back(static_cast<uint8_t>(v.get<int>()));
            }
        } catch (const Error&) {
            throw;
        } catch (const std::exception& e) {
            throw DataError(path + ":" + std::to_string(lineno) + ": " + e.what());
        }
        r.seq.validate(spec);
        out.push_back(std::move(r));
    }
    return out;
}

void save_groups(const InstructionGroups& groups, const std::string& path) {
    ordered_json j;
    ordered_json arr = ordered_json::array();
    for (const auto& [gid, members] : groups.groups) {
        ordered_json g;
        g["id"] = gid;
        g["members"] = members;
        arr.push_back(std::move(g));
    }
    j["groups"] = std::move(arr);
    std::ofstream os(path);
    if (!os) throw DataError("cannot write groups: " + path);
    os << j.dump(2) << '\n';
}

InstructionGroups load_groups(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw DataError("cannot open groups: " + path);
    ordered_json j;
    try {
        is >> j;
    } catch (const std::exception& e) {
        throw DataError(path + ": bad JSON: " + std::string(e.what()));
    }
    InstructionGroups out;
    for (const auto& g : j.at("groups")) {
        std::string gid = g.at("id").get<std::string>();
        for (const auto& m : g.at("members")) out.groups[gid].push_back(m.get<std::string>());
    }
    return out;
}

std::vector<Vec3> sample_mesh_surface(const TriangleMesh& mesh, int count, uint64_t seed) {
    if (mesh.triangles.empty()) throw EmptyMesh("cannot sample an empty mesh");
    std::vector<double> cumulative;
    double total = 0.0;
    for (const auto& t : mesh.triangles) {
        const Vec3& a = mesh.vertices[static_cast<size_t>(t[0])];
        const Vec3& b = mesh.vertices[static_cast<size_t>(t[1])];
        const Vec3& c = mesh.vertices[static_cast<size_t>(t[2])];
        total += 0.5 * (b - a).cross(c - a).norm();
        cumulative.push_back(total);
    }
    Rng rng(seed);
    std::vector<Vec3> out;
    out.reserve(static_cast<size_t>(count));
    for (int i = 0; i < count; ++i) {
        double pick = rng.uniform() * total;
        size_t idx = static_cast<size_t>(
            std::lower_bound(cumulative.begin(), cumulative.end(), pick) - cumulative.begin());
        if (idx >= mesh.triangles.size()) idx = mesh.triangles.size() - 1;
        const auto& t = mesh.triangles[idx];
        double u = rng.uniform(), v = rng.uniform();
        if (u + v > 1.0) {
            u = 1.0 - u;
            v = 1.0 - v;
        }
        const Vec3& a = mesh.vertices[static_cast<size_t>(t[0])];
        const Vec3& b = mesh.vertices[static_cast<size_t>(t[1])];
        const Vec3& c = mesh.vertices[static_cast<size_t>(t[2])];
        out.push_back(a + (b - a) * u + (c - a) * v);
    }
    return out;
}

namespace {

double smoothstep(double u) {
    u = std::clamp(u, 0.0, 1.0);
    return u * u * (3.0 - 2.0 * u);
}

Vec3 lerp(const Vec3& a, const Vec3& b, double s) { return a + (b - a) * s; }

struct ScenarioDraw {
    ScenarioKind kind;
    std::string primitive;  // box / ball / cylinder
    std::string size_word;  // small / large
    std::string hand;       // left / right (grasp only)
    TriangleMesh mesh;
    double stand_height = 0.8;  // object center height while resting
};

ScenarioDraw draw_scenario(ScenarioKind kind, Rng& rng) {
    ScenarioDraw d;
    d.kind = kind;
    int prim = static_cast<int>(rng.index(3));
    bool small = rng.uniform() < 0.5;
    d.size_word = small ? "small" : "large";
    double scale = small ? 0.7 : 1.0;
    if (kind == ScenarioKind::SitOn) prim = static_cast<int>(rng.index(2)) * 2;  // box or cylinder
    switch (prim) {
        case 0: {
            d.primitive = "box";
            double wx = scale * rng.uniform(0.3, 0.5);
            double wy = scale * rng.uniform(0.3, 0.5);
            double wz = scale * rng.uniform(0.3, 0.5);
            if (kind == ScenarioKind::SitOn) wy = rng.uniform(0.4, 0.5);
            d.mesh = TriangleMesh::box(wx, wy, wz);
            d.stand_height = kind == ScenarioKind::SitOn ? wy / 2 : rng.uniform(0.7, 0.9);
            break;
        }
        case 1: {
            d.primitive = "ball";
            double r = scale * rng.uniform(0.12, 0.2);
            d.mesh = TriangleMesh::icosphere(r, 1);
            d.stand_height = rng.uniform(0.7, 0.9);
            break;
        }
        default: {
            d.primitive = "cylinder";
            double r = scale * rng.uniform(0.1, 0.18);
            double h = scale * rng.uniform(0.3, 0.5);
            if (kind == ScenarioKind::SitOn) h = rng.uniform(0.42, 0.5);
            d.mesh = TriangleMesh::cylinder(r, h, 16);
            d.stand_height = kind == ScenarioKind::SitOn ? h / 2 : rng.uniform(0.7, 0.9);
            break;
        }
    }
    d.hand = rng.uniform() < 0.5 ? "right" : "left";
    return d;
}

// nearest surface point on the -z side of the object (where the actor stands)
Vec3 near_face_point(const TriangleMesh& mesh) {
    Vec3 best{0, 0, 0};
    double best_z = 1e300;
    for (const Vec3& v : mesh.vertices)
        if (v.z < best_z) {
            best_z = v.z;
            best = v;
        }
    // prefer a point on the z face at mid height for boxes; vertices are fine
    // for all primitives since contacts only need a surface point
    return best;
}

// center of the top surface; on-face for boxes, the cap center for cylinders
Vec3 top_point(const TriangleMesh& mesh) {
    double best_y = -1e300;
    for (const Vec3& v : mesh.vertices) best_y = std::max(best_y, v.y);
    return Vec3{0, best_y, 0};
}

struct IntentLabel {
    int frame_begin = 0, frame_end = 0;  // [begin, end)
    std::vector<int> slots;              // interaction-joint slots
};

// Scripted reach: smooth to a hover point, two close-in frames (0.14 and 0.07
// off the surface, both outside tau_c), exact contact during [c_begin, c_end],
// then smooth return. Keeps the intent window and the geometric labels equal.
Vec3 scripted_reach(const Vec3& rest_pos, const Vec3& target, const Vec3& hover_dir, int t,
                    int approach_begin, int c_begin, int c_end, int L) {
    Vec3 hover_far = target + hover_dir * 0.14;
    Vec3 hover_near = target + hover_dir * 0.07;
    if (t < approach_begin) return rest_pos;
    if (t <= c_begin - 3) {
        double u = smoothstep(static_cast<double>(t - approach_begin) /
                              std::max(1, c_begin - 3 - approach_begin));
        return lerp(rest_pos, hover_far, u);
    }
    if (t == c_begin - 2) return hover_far;
    if (t == c_begin - 1) return hover_near;
    if (t <= c_end) return target;
    double u = smoothstep(static_cast<double>(t - c_end) / std::max(1, L - 1 - c_end));
    return lerp(target, rest_pos, u);
}

}  // namespace

GeneratedDataset generate_dataset(const GeneratorOptions& options, const SkeletonSpec& spec) {
    if (options.count < 1) throw ScenarioError("dataset count must be >= 1");
    if (options.scenarios.empty()) throw ScenarioError("no scenario templates selected");
    if (options.min_frames < 8 || options.max_frames < options.min_frames)
        throw ScenarioError("invalid frame range");
    spec.validate();

    GeneratedDataset out;
    std::vector<Vec3> rest = spec.rest_local_positions();
    const double root_h = 0.95;

    // interaction-joint slots by name
    auto slot_of = [&](int joint) {
        for (int k = 0; k < 8; ++k)
            if (spec.interaction_joints[static_cast<size_t>(k)] == joint) return k;
        throw ScenarioError("joint is not an interaction joint");
    };
    const int slot_pelvis = slot_of(0);
    const int slot_lwrist = slot_of(20);
    const int slot_rwrist = slot_of(21);

    for (int rec_idx = 0; rec_idx < options.count; ++rec_idx) {
        Rng rng(options.seed * 1000003ull + static_cast<uint64_t>(rec_idx) * 7919ull + 17ull);
        ScenarioKind kind = options.scenarios[rec_idx % options.scenarios.size()];
        ScenarioDraw draw = draw_scenario(kind, rng);

        char idbuf[32];
        std::snprintf(idbuf, sizeof(idbuf), "seq_%03d", rec_idx);
        std::string id = idbuf;
        std::string object_id = draw.primitive + "_" + std::string(idbuf + 4);

        int L = options.min_frames +
                static_cast<int>(rng.index(static_cast<uint64_t>(options.max_frames - options.min_frames + 1)));
        int approach = L / 4;
        int reach = L / 8 + 2;
        int hold_begin = approach + reach;
        int hold_end = L - L / 8;

        double obj_dist = kind == ScenarioKind::SitOn ? rng.uniform(0.5, 0.7) : rng.uniform(0.9, 1.2);
        Vec3 obj_base{rng.uniform(-0.1, 0.1), draw.stand_height, obj_dist};

        // root walks toward the object and stops at arm's reach
        double stop_z = obj_dist - (kind == ScenarioKind::SitOn ? 0.3 : rng.uniform(0.55, 0.65));
        Vec3 root_start{0, root_h, 0};
        Vec3 root_stop{obj_base.x * 0.5, root_h, stop_z};

        // feet planted at their rest ground positions for the whole take
        std::vector<Vec3> foot_anchor(static_cast<size_t>(spec.joint_count));
        for (int f : spec.foot_joints) {
            Vec3 p = root_start + rest[static_cast<size_t>(f)];
            p.y = std::max(0.02, p.y - (root_h - 0.93));
            foot_anchor[static_cast<size_t>(f)] = p;
        }

        GlobalMotion motion;
        motion.fps = options.fps;
        std::vector<ObjectPose> poses(static_cast<size_t>(L));
        IntentLabel intent;
        intent.frame_begin = hold_begin;
        intent.frame_end = hold_end + 1;  // scripted contact is exact through hold_end

        // object trajectory per template; a constant small yaw exercises the
        // rotation channels without moving the top face off vertical
        double obj_yaw = rng.uniform(-0.4, 0.4);
        Vec3 carry_lift{0, 0.12, -0.15};
        Vec3 push_shift{0, 0, rng.uniform(0.25, 0.4)};
        for (int t = 0; t < L; ++t) {
            Vec3 obj = obj_base;
            if (kind == ScenarioKind::Carry && t >= hold_begin) {
                double u = smoothstep(static_cast<double>(t - hold_begin) /
                                      std::max(1, hold_end - 1 - hold_begin));
                obj = obj_base + carry_lift * u;
            } else if (kind == ScenarioKind::Push && t >= hold_begin) {
                double u = smoothstep(static_cast<double>(t - hold_begin) /
                                      std::max(1, hold_end - 1 - hold_begin));
                obj = obj_base + push_shift * u;
            }
            poses[static_cast<size_t>(t)] = ObjectPose{{0, obj_yaw, 0}, obj};
        }

        // surface anchor points in object-local coordinates
        Vec3 grasp_local = near_face_point(draw.mesh);
        Vec3 top_local = top_point(draw.mesh);
        Vec3 side_l = grasp_local + Vec3{0.03, 0.01, 0};   // still on or near the -z face
        Vec3 side_r = grasp_local - Vec3{0.03, -0.01, 0};

        std::string text;
        std::vector<int> contact_joints;
        auto pick = [&rng](std::initializer_list<const char*> words) {
            auto it = words.begin();
            std::advance(it, static_cast<long>(rng.index(words.size())));
            return std::string(*it);
        };
        switch (kind) {
            case ScenarioKind::Grasp: {
                int wrist = draw.hand == "right" ? 21 : 20;
                contact_joints = {wrist};
                intent.slots = {draw.hand == "right" ? slot_rwrist : slot_lwrist};
                text = "a person " + pick({"grasps", "grips", "clutches"}) + " the " +
                       draw.size_word + " " + draw.primitive + " with the " + draw.hand + " hand";
                break;
            }
            case ScenarioKind::Carry:
                contact_joints = {20, 21};
                intent.slots = {slot_lwrist, slot_rwrist};
                text = "a person " + pick({"carries", "holds", "lifts"}) + " the " + draw.size_word +
                       " " + draw.primitive + " with both hands";
                break;
            case ScenarioKind::Push:
                contact_joints = {20, 21};
                intent.slots = {slot_lwrist, slot_rwrist};
                text = "a person " + pick({"pushes", "shoves", "slides"}) + " the " + draw.size_word +
                       " " + draw.primitive + " forward";
                break;
            case ScenarioKind::SitOn:
                contact_joints = {0};
                intent.slots = {slot_pelvis};
                text = "a person " + pick({"sits", "rests"}) + " on the " + draw.size_word + " " +
                       draw.primitive;
                break;
        }

        if (kind == ScenarioKind::SitOn) intent.frame_end = L;  // seated to the last frame

        for (int t = 0; t < L; ++t) {
            double u_approach = smoothstep(approach > 0 ? static_cast<double>(std::min(t, approach)) /
                                                              approach
                                                        : 1.0);
            Vec3 root = lerp(root_start, root_stop, u_approach);
            if (kind == ScenarioKind::SitOn) {
                // pelvis descends onto the seat's top center and stays there
                Vec3 seat = poses[static_cast<size_t>(t)].apply(top_local);
                Vec3 up = poses[static_cast<size_t>(t)].apply(top_local + Vec3{0, 1, 0}) - seat;
                root = scripted_reach(root, seat, up, t, approach, hold_begin, L - 1, L);
            }

            std::vector<Vec3> pos(static_cast<size_t>(spec.joint_count));
            std::vector<Mat3> rots(static_cast<size_t>(spec.joint_count), Mat3::identity());
            for (int j = 0; j < spec.joint_count; ++j) pos[static_cast<size_t>(j)] = root + rest[static_cast<size_t>(j)];
            for (int f : spec.foot_joints) pos[static_cast<size_t>(f)] = foot_anchor[static_cast<size_t>(f)];

            // wrists reach to their surface anchors during the hold window
            for (int joint : contact_joints) {
                if (joint == 0) continue;  // pelvis handled through the root
                Vec3 anchor_local = kind == ScenarioKind::Grasp
                                        ? grasp_local
                                        : (joint == 20 ? side_l : side_r);
                Vec3 target = poses[static_cast<size_t>(t)].apply(anchor_local);
                Vec3 out_dir = poses[static_cast<size_t>(t)].apply(anchor_local + Vec3{0, 0, -1}) - target;
                Vec3 rest_pos = root + rest[static_cast<size_t>(joint)];
                pos[static_cast<size_t>(joint)] =
                    scripted_reach(rest_pos, target, out_dir, t, approach, hold_begin, hold_end, L);
            }
            motion.positions.push_back(std::move(pos));
            motion.rotations.push_back(std::move(rots));
        }
        motion.object_poses = poses;

        SequenceRecord record;
        record.id = id;
        record.text = text;
        record.object_id = object_id;
        record.seq = encode_sequence(motion, spec);
        record.labels = compute_contact_labels(record.seq, draw.mesh, spec, options.tau_c);

        // template-intent labels, kept for the cross-check
        ContactLabels intent_l;
        intent_l.length = L;
        intent_l.tau_c = options.tau_c;
        intent_l.a.assign(static_cast<size_t>(L) * 8, 0);
        for (int t = intent.frame_begin; t < intent.frame_end; ++t)
            for (int s : intent.slots) intent_l.a[static_cast<size_t>(t) * 8 + static_cast<size_t>(s)] = 1;

        // group key: template + primitive + contacting joints
        std::string kind_name = kind == ScenarioKind::Grasp   ? "grasp"
                                : kind == ScenarioKind::Carry ? "carry"
                                : kind == ScenarioKind::Push  ? "push"
                                                              : "sit";
        std::string group_key = kind_name + "_" + draw.primitive;
        for (int s : intent.slots) group_key += "_j" + std::to_string(s);
        out.groups.groups[group_key].push_back(id);

        out.records.push_back(std::move(record));
        out.meshes[object_id] = draw.mesh;
        out.intent_labels.push_back(std::move(intent_l));
    }
    return out;
}

void write_dataset(const GeneratedDataset& data, const std::string& out_dir) {
    fs::create_directories(out_dir);
    fs::create_directories(fs::path(out_dir) / "meshes");
    save_jsonl(data.records, (fs::path(out_dir) / "dataset.jsonl").string());
    save_groups(data.groups, (fs::path(out_dir) / "groups.json").string());
    for (const auto& [object_id, mesh] : data.meshes)
        mesh.save_obj((fs::path(out_dir) / "meshes" / (object_id + ".obj")).string());
}

std::vector<std::string> build_vocabulary(const std::vector<SequenceRecord>& records) {
    std::set<std::string> words;
    for (const SequenceRecord& r : records)
        for (const std::string& w : split_words(r.text)) words.insert(w);
    return {words.begin(), words.end()};
}

}  // namespace chainhoi
