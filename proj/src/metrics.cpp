#include "chainhoi/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "chainhoi/errors.hpp"

namespace chainhoi {

double metric_fsr(const HoiSequence& seq, const SkeletonSpec& spec, double height_gate,
                  double skid_thresh) {
    if (seq.length < 2) throw TooShort("FSR needs at least 2 frames");
    DecodedMotion dec = decode_sequence(seq, spec);
    int gated_frames = 0, skating_frames = 0;
    for (int t = 0; t + 1 < seq.length; ++t) {
        bool any_gated = false, any_skid = false;
        for (int f : spec.foot_joints) {
            const Vec3& p = dec.positions[static_cast<size_t>(t)][static_cast<size_t>(f)];
            if (p.y >= height_gate) continue;
            any_gated = true;
            const Vec3& q = dec.positions[static_cast<size_t>(t + 1)][static_cast<size_t>(f)];
            double horiz = std::hypot(q.x - p.x, q.z - p.z);
            if (horiz > skid_thresh) any_skid = true;
        }
        gated_frames += any_gated ? 1 : 0;
        skating_frames += any_skid ? 1 : 0;
    }
    return gated_frames == 0 ? 0.0 : static_cast<double>(skating_frames) / gated_frames;
}

ContactDistanceResult metric_cd(const HoiSequence& gen, const ContactLabels& labels,
                                const TriangleMesh& mesh, const SkeletonSpec& spec) {
    DecodedMotion dec = decode_sequence(gen, spec);
    int frames = std::min(gen.length, labels.length);
    ContactDistanceResult res;
    double sum = 0.0;
    for (int t = 0; t < frames; ++t) {
        bool frame_has_label = false;
        for (int k = 0; k < 8; ++k) frame_has_label = frame_has_label || labels.at(t, k);
        if (!frame_has_label) continue;
        PosedMesh posed(mesh, dec.object_poses[static_cast<size_t>(t)]);
        MeshDistanceQuery query(posed.mesh());
        for (int k = 0; k < 8; ++k) {
            if (!labels.at(t, k)) continue;
            int joint = spec.interaction_joints[static_cast<size_t>(k)];
            sum += std::sqrt(query.sqdist(dec.positions[static_cast<size_t>(t)][static_cast<size_t>(joint)]));
            ++res.labeled_pairs;
        }
    }
    res.value = res.labeled_pairs ? sum / res.labeled_pairs : 0.0;
    return res;
}

double metric_ocd(const HoiSequence& gen, const std::vector<ContactLabels>& group,
                  const TriangleMesh& mesh, const SkeletonSpec& spec) {
    if (group.empty()) throw EmptyGroup("OCD group has no members");
    double best = 1e300;
    for (const ContactLabels& labels : group)
        best = std::min(best, metric_cd(gen, labels, mesh, spec).value);
    return best;
}

double metric_ps(const HoiSequence& gen, const TriangleMesh& mesh, const SkeletonSpec& spec) {
    if (!mesh.watertight()) throw NotWatertight("PS requires a watertight object mesh");
    DecodedMotion dec = decode_sequence(gen, spec);
    int64_t inside = 0, total = 0;
    for (int t = 0; t < gen.length; ++t) {
        PosedMesh posed(mesh, dec.object_poses[static_cast<size_t>(t)]);
        MeshDistanceQuery query(posed.mesh());
        std::vector<Vec3> pts = body_proxy_points(dec.positions[static_cast<size_t>(t)], spec);
        for (size_t i = 0; i < pts.size(); ++i) {
            inside += query.inside(pts[i], fnv1a(std::to_string(t) + ":" + std::to_string(i))) ? 1 : 0;
            ++total;
        }
    }
    return total ? static_cast<double>(inside) / static_cast<double>(total) : 0.0;
}

void symmetric_eigen(const std::vector<double>& m, int n, std::vector<double>& eigenvalues,
                     std::vector<double>& eigenvectors) {
    // cyclic Jacobi; plenty accurate for the feature dims used here
    std::vector<double> a = m;
    eigenvectors.assign(static_cast<size_t>(n) * n, 0.0);
    for (int i = 0; i < n; ++i) eigenvectors[static_cast<size_t>(i) * n + i] = 1.0;
    auto at = [&](std::vector<double>& mat, int r, int c) -> double& {
        return mat[static_cast<size_t>(r) * n + c];
    };
    for (int sweep = 0; sweep < 100; ++sweep) {
        double off = 0.0;
        for (int p = 0; p < n; ++p)
            for (int q = p + 1; q < n; ++q) off += at(a, p, q) * at(a, p, q);
        if (off < 1e-24) break;
        for (int p = 0; p < n; ++p)
            for (int q = p + 1; q < n; ++q) {
                double apq = at(a, p, q);
                if (std::abs(apq) < 1e-300) continue;
                double theta = (at(a, q, q) - at(a, p, p)) / (2.0 * apq);
                double t = (theta >= 0 ? 1.0 : -1.0) /
                           (std::abs(theta) + std::sqrt(theta * theta + 1.0));
                double c = 1.0 / std::sqrt(t * t + 1.0);
                double s = t * c;
                for (int k = 0; k < n; ++k) {
                    double akp = at(a, k, p), akq = at(a, k, q);
                    at(a, k, p) = c * akp - s * akq;
                    at(a, k, q) = s * akp + c * akq;
                }
                for (int k = 0; k < n; ++k) {
                    double apk = at(a, p, k), aqk = at(a, q, k);
                    at(a, p, k) = c * apk - s * aqk;
                    at(a, q, k) = s * apk + c * aqk;
                }
                for (int k = 0; k < n; ++k) {
                    double vkp = at(eigenvectors, k, p), vkq = at(eigenvectors, k, q);
                    at(eigenvectors, k, p) = c * vkp - s * vkq;
                    at(eigenvectors, k, q) = s * vkp + c * vkq;
                }
            }
    }
    eigenvalues.resize(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i) eigenvalues[static_cast<size_t>(i)] = at(a, i, i);
}

namespace {

void mean_and_cov(const Tensor& feats, std::vector<double>& mean, std::vector<double>& cov) {
    int n = feats.dim(0), d = feats.dim(1);
    mean.assign(static_cast<size_t>(d), 0.0);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < d; ++j) mean[static_cast<size_t>(j)] += feats.at({i, j});
    for (double& v : mean) v /= n;
    cov.assign(static_cast<size_t>(d) * d, 0.0);
    double denom = n > 1 ? n - 1.0 : 1.0;
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < d; ++j) {
            double cj = feats.at({i, j}) - mean[static_cast<size_t>(j)];
            for (int k = j; k < d; ++k) {
                double ck = feats.at({i, k}) - mean[static_cast<size_t>(k)];
                cov[static_cast<size_t>(j) * d + k] += cj * ck / denom;
            }
        }
    for (int j = 0; j < d; ++j)
        for (int k = 0; k < j; ++k) cov[static_cast<size_t>(j) * d + k] = cov[static_cast<size_t>(k) * d + j];
    if (n <= d) {  // regularize a rank-deficient estimate
        for (int j = 0; j < d; ++j) cov[static_cast<size_t>(j) * d + j] += 1e-6;
    }
}

std::vector<double> sqrtm_psd(const std::vector<double>& m, int n) {
    std::vector<double> evals, evecs;
    symmetric_eigen(m, n, evals, evecs);
    std::vector<double> out(static_cast<size_t>(n) * n, 0.0);
    for (int k = 0; k < n; ++k) {
        double lam = std::sqrt(std::max(0.0, evals[static_cast<size_t>(k)]));
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j)
                out[static_cast<size_t>(i) * n + j] +=
                    lam * evecs[static_cast<size_t>(i) * n + k] * evecs[static_cast<size_t>(j) * n + k];
    }
    return out;
}

std::vector<double> matmul_sq(const std::vector<double>& a, const std::vector<double>& b, int n) {
    std::vector<double> out(static_cast<size_t>(n) * n, 0.0);
    for (int i = 0; i < n; ++i)
        for (int k = 0; k < n; ++k) {
            double av = a[static_cast<size_t>(i) * n + k];
            if (av == 0.0) continue;
            for (int j = 0; j < n; ++j) out[static_cast<size_t>(i) * n + j] += av * b[static_cast<size_t>(k) * n + j];
        }
    return out;
}

}  // namespace

double metric_fid(const Tensor& feat_a, const Tensor& feat_b) {
    if (feat_a.ndim() != 2 || feat_b.ndim() != 2 || feat_a.dim(1) != feat_b.dim(1))
        throw ShapeError("FID expects [n, d] and [m, d] features");
    if (!feat_a.all_finite() || !feat_b.all_finite())
        throw InvalidFeatures("non-finite feature values");
    int d = feat_a.dim(1);
    std::vector<double> mu_a, mu_b, cov_a, cov_b;
    mean_and_cov(feat_a, mu_a, cov_a);
    mean_and_cov(feat_b, mu_b, cov_b);

    double mean_term = 0.0;
    for (int j = 0; j < d; ++j) {
        double diff = mu_a[static_cast<size_t>(j)] - mu_b[static_cast<size_t>(j)];
        mean_term += diff * diff;
    }
    double tr_a = 0.0, tr_b = 0.0;
    for (int j = 0; j < d; ++j) {
        tr_a += cov_a[static_cast<size_t>(j) * d + j];
        tr_b += cov_b[static_cast<size_t>(j) * d + j];
    }
    // Tr((Sa Sb)^1/2) = Tr((Sa^1/2 Sb Sa^1/2)^1/2), computed on the symmetrized product
    std::vector<double> a_half = sqrtm_psd(cov_a, d);
    std::vector<double> inner = matmul_sq(matmul_sq(a_half, cov_b, d), a_half, d);
    for (int i = 0; i < d; ++i)
        for (int j = i + 1; j < d; ++j) {
            double s = 0.5 * (inner[static_cast<size_t>(i) * d + j] + inner[static_cast<size_t>(j) * d + i]);
            inner[static_cast<size_t>(i) * d + j] = s;
            inner[static_cast<size_t>(j) * d + i] = s;
        }
    std::vector<double> evals, evecs;
    symmetric_eigen(inner, d, evals, evecs);
    double tr_sqrt = 0.0;
    for (double lam : evals) tr_sqrt += std::sqrt(std::max(0.0, lam));

    return std::max(0.0, mean_term + tr_a + tr_b - 2.0 * tr_sqrt);
}

RPrecisionResult metric_r_precision(const Tensor& motion_feats, const Tensor& text_feats,
                                    uint64_t seed, int pool, int rounds) {
    if (motion_feats.ndim() != 2 || motion_feats.shape() != text_feats.shape())
        throw ShapeError("R-Precision expects paired [n, d] features");
    int n = motion_feats.dim(0), d = motion_feats.dim(1);
    if (n < pool) throw PoolError("need at least " + std::to_string(pool) + " paired samples");
    Rng rng(seed);
    RPrecisionResult res;
    int hits1 = 0, hits2 = 0, hits3 = 0, trials = 0;
    std::vector<int> order(static_cast<size_t>(n));
    std::iota(order.begin(), order.end(), 0);
    for (int round = 0; round < rounds; ++round) {
        for (size_t i = order.size(); i > 1; --i)
            std::swap(order[i - 1], order[rng.index(i)]);
        for (int start = 0; start + pool <= n; start += pool) {
            for (int qi = 0; qi < pool; ++qi) {
                int query = order[static_cast<size_t>(start + qi)];
                // rank the true text among the pool by euclidean distance
                double true_dist = 0.0;
                std::vector<double> dists(static_cast<size_t>(pool));
                for (int ci = 0; ci < pool; ++ci) {
                    int cand = order[static_cast<size_t>(start + ci)];
                    double s = 0.0;
                    for (int j = 0; j < d; ++j) {
                        double diff = motion_feats.at({query, j}) - text_feats.at({cand, j});
                        s += diff * diff;
                    }
                    dists[static_cast<size_t>(ci)] = s;
                    if (cand == query) true_dist = s;
                }
                int rank = 0;
                for (int ci = 0; ci < pool; ++ci)
                    if (dists[static_cast<size_t>(ci)] < true_dist) ++rank;
                hits1 += rank < 1;
                hits2 += rank < 2;
                hits3 += rank < 3;
                ++trials;
            }
        }
    }
    res.top1 = static_cast<double>(hits1) / trials;
    res.top2 = static_cast<double>(hits2) / trials;
    res.top3 = static_cast<double>(hits3) / trials;
    res.trials = trials;
    return res;
}

double metric_multimodal_distance(const Tensor& motion_feats, const Tensor& text_feats) {
    if (motion_feats.shape() != text_feats.shape())
        throw ShapeError("MM distance expects paired features");
    int n = motion_feats.dim(0), d = motion_feats.dim(1);
    double sum = 0.0;
    for (int i = 0; i < n; ++i) {
        double s = 0.0;
        for (int j = 0; j < d; ++j) {
            double diff = motion_feats.at({i, j}) - text_feats.at({i, j});
            s += diff * diff;
        }
        sum += std::sqrt(s);
    }
    return n ? sum / n : 0.0;
}

double metric_diversity(const Tensor& feats, uint64_t seed, int subset) {
    int n = feats.dim(0), d = feats.dim(1);
    if (n < 2) return 0.0;
    int half = subset > 0 ? std::min(subset, n / 2) : n / 2;
    Rng rng(seed);
    std::vector<int> order(static_cast<size_t>(n));
    std::iota(order.begin(), order.end(), 0);
    for (size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.index(i)]);
    double sum = 0.0;
    for (int i = 0; i < half; ++i) {
        int a = order[static_cast<size_t>(i)], b = order[static_cast<size_t>(half + i)];
        double s = 0.0;
        for (int j = 0; j < d; ++j) {
            double diff = feats.at({a, j}) - feats.at({b, j});
            s += diff * diff;
        }
        sum += std::sqrt(s);
    }
    return sum / half;
}

std::optional<std::string> InstructionGroups::group_of(const std::string& member_id) const {
    for (const auto& [gid, members] : groups)
        for (const std::string& m : members)
            if (m == member_id) return gid;
    return std::nullopt;
}

std::string MetricReport::text_table() const {
    std::ostringstream os;
    auto line = [&](const std::string& name, double v) {
        os << name;
        for (size_t i = name.size(); i < 14; ++i) os << ' ';
        char buf[32];
        std::snprintf(buf, sizeof(buf), "%10.6f", v);
        os << buf << '\n';
    };
    line("FSR", fsr);
    line("CD", cd);
    line("OCD", ocd);
    line("PS", ps);
    if (fid) line("FID", *fid);
    if (r_top1) line("R-Top1", *r_top1);
    if (r_top2) line("R-Top2", *r_top2);
    if (r_top3) line("R-Top3", *r_top3);
    if (mm_dist) line("MM-Dist", *mm_dist);
    if (diversity) line("Diversity", *diversity);
    os << "invariants    " << (invariants_ok ? "ok" : "VIOLATED") << '\n';
    if (!per_sequence.empty()) {
        os << '\n';
        os << "id                  fsr        cd       ocd        ps\n";
        for (const auto& s : per_sequence) {
            char buf[128];
            std::snprintf(buf, sizeof(buf), "%-16s %7.4f %9.5f %9.5f %9.5f\n", s.id.c_str(), s.fsr,
                          s.cd, s.ocd, s.ps);
            os << buf;
        }
    }
    return os.str();
}

}  // namespace chainhoi
