#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "chainhoi/checkpoint.hpp"
#include "chainhoi/config.hpp"
#include "chainhoi/dataset.hpp"
#include "chainhoi/diffusion.hpp"
#include "chainhoi/evaluator.hpp"
#include "chainhoi/gradcheck.hpp"
#include "chainhoi/graph.hpp"
#include "chainhoi/metrics.hpp"
#include "chainhoi/trainer.hpp"

namespace fs = std::filesystem;
using namespace chainhoi;
using ordered_json = nlohmann::ordered_json;

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitData = 3;
constexpr int kExitNumeric = 4;

std::map<std::string, TriangleMesh> load_meshes(const std::string& mesh_dir,
                                                const std::vector<SequenceRecord>& records) {
    std::map<std::string, TriangleMesh> meshes;
    for (const auto& r : records) {
        if (meshes.count(r.object_id)) continue;
        fs::path p = fs::path(mesh_dir) / (r.object_id + ".obj");
        meshes[r.object_id] = TriangleMesh::load_obj(p.string());
    }
    return meshes;
}

int cmd_generate_data(const std::string& out_dir, int count, uint64_t seed, int min_frames,
                      int max_frames) {
    GeneratorOptions opt;
    opt.count = count;
    opt.seed = seed;
    opt.min_frames = min_frames;
    opt.max_frames = max_frames;
    SkeletonSpec spec = SkeletonSpec::smpl22();
    GeneratedDataset data = generate_dataset(opt, spec);
    write_dataset(data, out_dir);
    std::printf("wrote %zu sequences, %zu meshes, %zu groups under %s\n", data.records.size(),
                data.meshes.size(), data.groups.groups.size(), out_dir.c_str());
    return 0;
}

int cmd_train(const std::string& config_path, const std::string& out_dir,
              const std::string& resume, int64_t seed_override, bool diffusion_only) {
    RunConfig run = load_run_config(config_path);
    if (seed_override >= 0) run.seed = static_cast<uint64_t>(seed_override);
    if (run.dataset_path.empty()) throw ConfigError(config_path + ": dataset path missing");

    SkeletonSpec spec = SkeletonSpec::smpl22();
    std::vector<SequenceRecord> records = load_jsonl(run.dataset_path, spec);
    std::map<std::string, TriangleMesh> meshes = load_meshes(run.mesh_dir, records);

    ModelConfig mcfg = run.model_config_path.empty() ? ModelConfig{}
                                                     : load_model_config(run.model_config_path);
    if (mcfg.vocab.empty()) mcfg.vocab = build_vocabulary(records);
    mcfg.max_timesteps = run.timesteps;

    ChainHoiModel model;
    Rng init_rng(run.seed);
    model.init(mcfg, spec, init_rng);

    Trainer trainer(model, run, records, meshes, diffusion_only);
    if (!resume.empty()) trainer.load_checkpoint(resume);

    fs::create_directories(out_dir);
    std::string ckpt_path = (fs::path(out_dir) / "checkpoint.ckpt").string();
    while (trainer.epochs_done() < run.epochs) {
        trainer.run_epoch();
        const EpochLoss& e = trainer.history().back();
        std::printf("epoch %d: total %.6f (diff %.6f, h %.6f, o %.6f)\n", e.epoch, e.total, e.l_diff,
                    e.l_h, e.l_o);
        if (run.checkpoint_every > 0 && trainer.epochs_done() % run.checkpoint_every == 0)
            trainer.save_checkpoint(ckpt_path);
    }
    trainer.save_checkpoint(ckpt_path);
    Trainer::write_loss_csv(trainer.history(), (fs::path(out_dir) / "loss.csv").string());
    save_model_config(mcfg, (fs::path(out_dir) / "model.cfg").string());
    save_run_config(run, (fs::path(out_dir) / "run.cfg").string());
    std::printf("checkpoint: %s\n", ckpt_path.c_str());
    return 0;
}

int cmd_sample(const std::string& checkpoint, std::string model_config_path,
               const std::string& text, const std::string& object_path, int length, uint64_t seed,
               double guidance, int steps, const std::string& out_path, const std::string& id) {
    if (model_config_path.empty()) {
        fs::path next_to = fs::path(checkpoint).parent_path() / "model.cfg";
        if (!fs::exists(next_to))
            throw ConfigError("no --model-config given and " + next_to.string() + " not found");
        model_config_path = next_to.string();
    }
    ModelConfig mcfg = load_model_config(model_config_path);
    SkeletonSpec spec = SkeletonSpec::smpl22();
    ChainHoiModel model;
    Rng init_rng(0);
    model.init(mcfg, spec, init_rng);
    ParamList params = model.params();
    Checkpoint ck = Checkpoint::load(checkpoint);
    ck.load_params(params);

    TriangleMesh mesh = TriangleMesh::load_obj(object_path);
    std::vector<Vec3> points = sample_mesh_surface(mesh, 64, fnv1a(object_path));
    std::vector<int> ids = tokenize(text, mcfg.vocab);
    ConditionBundle cond = model.make_condition(ids, points);
    ConditionBundle uncond = model.make_null_condition(points);

    DiffusionSchedule sched = DiffusionSchedule::linear(mcfg.max_timesteps);
    GuidanceConfig gcfg;
    gcfg.scale = guidance;
    gcfg.enabled = true;
    Rng rng(seed);
    Tensor raw = sample(model, cond, uncond, length, sched, steps, gcfg, rng);
    HoiSequence seq = normalize_sampled_tensor(raw, spec, 20.0);

    SequenceRecord record;
    record.id = id;
    record.text = text;
    record.object_id = fs::path(object_path).stem().string();
    record.seq = seq;
    record.labels = compute_contact_labels(seq, mesh, spec, 0.05);
    save_jsonl({record}, out_path);
    std::printf("sampled %d frames -> %s\n", length, out_path.c_str());
    return 0;
}

int cmd_train_evaluator(const std::string& data_path, const std::string& mesh_dir,
                        const std::string& out_path, int steps, int batch, double lr,
                        uint64_t seed) {
    (void)mesh_dir;
    SkeletonSpec spec = SkeletonSpec::smpl22();
    std::vector<SequenceRecord> records = load_jsonl(data_path, spec);
    EvaluatorConfig cfg;
    cfg.vocab = build_vocabulary(records);
    ToyEvaluator evaluator;
    Rng init_rng(seed);
    evaluator.init(cfg, init_rng);
    std::vector<Tensor> motions;
    std::vector<std::vector<int>> texts;
    for (const auto& r : records) {
        motions.push_back(Tensor::from({r.seq.length, r.seq.node_count, kFeatureWidth}, r.seq.frames));
        texts.push_back(tokenize(r.text, cfg.vocab));
    }
    Rng train_rng(seed + 1);
    EvaluatorTrainStats stats =
        train_toy_evaluator(evaluator, motions, texts, steps, batch, lr, train_rng);
    save_evaluator(evaluator, out_path);
    std::printf("evaluator: loss %.4f -> %.4f over %d steps; saved %s\n", stats.initial_loss,
                stats.final_loss, stats.steps, out_path.c_str());
    return 0;
}

int cmd_evaluate(const std::string& generated_path, const std::string& references_path,
                 const std::string& groups_path, const std::string& mesh_dir,
                 const std::string& evaluator_path, const std::string& report_path, uint64_t seed) {
    SkeletonSpec spec = SkeletonSpec::smpl22();
    std::vector<SequenceRecord> generated = load_jsonl(generated_path, spec);
    std::vector<SequenceRecord> references = load_jsonl(references_path, spec);
    InstructionGroups groups;
    if (!groups_path.empty()) groups = load_groups(groups_path);
    std::map<std::string, TriangleMesh> meshes = load_meshes(mesh_dir, references);
    {
        auto gen_meshes = load_meshes(mesh_dir, generated);
        meshes.insert(gen_meshes.begin(), gen_meshes.end());
    }
    std::map<std::string, const SequenceRecord*> ref_by_id;
    for (const auto& r : references) ref_by_id[r.id] = &r;

    MetricReport report;
    bool any_cd = false;
    for (const auto& gen : generated) {
        auto ref_it = ref_by_id.find(gen.id);
        if (ref_it == ref_by_id.end())
            throw DataError("generated id '" + gen.id + "' has no reference");
        const SequenceRecord& ref = *ref_it->second;
        const TriangleMesh& mesh = meshes.at(gen.object_id);

        SequenceMetrics sm;
        sm.id = gen.id;
        sm.fsr = metric_fsr(gen.seq, spec);
        sm.cd = metric_cd(gen.seq, ref.labels, mesh, spec).value;
        any_cd = true;

        std::vector<ContactLabels> group_labels;
        if (auto gid = groups.group_of(ref.id)) {
            for (const std::string& member : groups.groups.at(*gid)) {
                auto it = ref_by_id.find(member);
                if (it == ref_by_id.end())
                    throw DataError("group member '" + member + "' missing from references");
                group_labels.push_back(it->second->labels);
            }
        } else {
            group_labels.push_back(ref.labels);  // singleton fallback
        }
        sm.ocd = metric_ocd(gen.seq, group_labels, mesh, spec);
        sm.ps = metric_ps(gen.seq, mesh, spec);
        if (sm.ocd > sm.cd + 1e-12) report.invariants_ok = false;  // reference is in the group

        report.fsr += sm.fsr;
        report.cd += sm.cd;
        report.ocd += sm.ocd;
        report.ps += sm.ps;
        report.per_sequence.push_back(sm);
    }
    int n = static_cast<int>(generated.size());
    if (n > 0) {
        report.fsr /= n;
        report.cd /= n;
        report.ocd /= n;
        report.ps /= n;
    }
    (void)any_cd;

    if (!evaluator_path.empty()) {
        ToyEvaluator evaluator = load_evaluator(evaluator_path);
        auto stack_features = [&](const std::vector<SequenceRecord>& records, bool motion) {
            Tensor out;
            for (const auto& r : records) {
                Tensor f = motion ? evaluator.motion_features(r.seq)
                                  : evaluator.text_features(tokenize(r.text, evaluator.cfg.vocab));
                out = out.defined() ? ops::concat(out, f, 0) : f;
            }
            return out;
        };
        Tensor gen_motion = stack_features(generated, true);
        Tensor ref_motion = stack_features(references, true);
        Tensor gen_text = stack_features(generated, false);
        report.fid = metric_fid(gen_motion, ref_motion);
        report.mm_dist = metric_multimodal_distance(gen_motion, gen_text);
        report.diversity = metric_diversity(gen_motion, seed);
        if (n >= 32) {
            RPrecisionResult rp = metric_r_precision(gen_motion, gen_text, seed);
            report.r_top1 = rp.top1;
            report.r_top2 = rp.top2;
            report.r_top3 = rp.top3;
        }
    }

    std::printf("%s", report.text_table().c_str());
    if (!report_path.empty()) {
        ordered_json j;
        j["fsr"] = report.fsr;
        j["cd"] = report.cd;
        j["ocd"] = report.ocd;
        j["ps"] = report.ps;
        if (report.fid) j["fid"] = *report.fid;
        if (report.r_top1) {
            j["r_top1"] = *report.r_top1;
            j["r_top2"] = *report.r_top2;
            j["r_top3"] = *report.r_top3;
        }
        if (report.mm_dist) j["mm_dist"] = *report.mm_dist;
        if (report.diversity) j["diversity"] = *report.diversity;
        j["invariants_ok"] = report.invariants_ok;
        ordered_json rows = ordered_json::array();
        for (const auto& s : report.per_sequence) {
            ordered_json row;
            row["id"] = s.id;
            row["fsr"] = s.fsr;
            row["cd"] = s.cd;
            row["ocd"] = s.ocd;
            row["ps"] = s.ps;
            rows.push_back(std::move(row));
        }
        j["per_sequence"] = std::move(rows);
        std::ofstream os(report_path);
        if (!os) throw DataError("cannot write report: " + report_path);
        os << j.dump(2) << '\n';
    }
    if (!report.invariants_ok) {
        std::fprintf(stderr, "metric invariant violated: OCD > CD with the reference in its group\n");
        return kExitNumeric;
    }
    return 0;
}

int cmd_gradcheck(uint64_t seed, int cases) {
    GradCheckReport report = run_gradcheck_suite(seed, cases);
    std::printf("%s", report.table().c_str());
    if (!report.passed()) {
        std::fprintf(stderr, "gradient check failed (tolerance %.1e)\n", report.tolerance);
        return kExitNumeric;
    }
    return 0;
}

int cmd_inspect_graph(bool dot, bool design_b) {
    SkeletonSpec spec = SkeletonSpec::smpl22();
    HoiGraph graph = build_hoi_graph(spec, design_b);
    KineticChains chains = build_kinetic_chains(spec);
    ChainAttentionMask mask = build_chain_attention_mask(chains, spec.node_count());

    auto node_name = [&](int n) -> std::string {
        if (n == spec.foot_contact_node()) return "foot_contact";
        if (n == spec.object_node()) return "object";
        return spec.joint_names[static_cast<size_t>(n)];
    };

    if (dot) {
        std::printf("graph hoi {\n");
        for (int n = 0; n < graph.node_count; ++n)
            std::printf("  n%d [label=\"%s\"];\n", n, node_name(n).c_str());
        for (auto [u, v] : graph.edges) std::printf("  n%d -- n%d;\n", u, v);
        std::printf("}\n");
        return 0;
    }

    std::printf("nodes: %d (J=%d + foot-contact + object)\n", graph.node_count, spec.joint_count);
    std::printf("edges: %zu\n", graph.edges.size());
    for (auto [u, v] : graph.edges)
        std::printf("  %-14s -- %s\n", node_name(u).c_str(), node_name(v).c_str());

    static const char* chain_names[] = {"torso_head", "left_arm", "right_arm",
                                        "left_leg",   "right_leg", "human_object"};
    std::printf("\nkinetic chains:\n");
    for (size_t c = 0; c < chains.chains.size(); ++c) {
        std::printf("  %-13s:", chain_names[c]);
        for (int n : chains.chains[c]) std::printf(" %s", node_name(n).c_str());
        std::printf("\n");
    }

    std::printf("\nattention mask (rows = chains, cols = nodes):\n      ");
    for (int n = 0; n < mask.node_count; ++n) std::printf("%2d", n % 10);
    std::printf("\n");
    for (int c = 0; c < mask.chain_count; ++c) {
        std::printf("  %-4.4s", chain_names[c]);
        for (int n = 0; n < mask.node_count; ++n) std::printf(" %c", mask.at(c, n) ? '1' : '.');
        std::printf("\n");
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"ChainHOI: text-driven human-object interaction generation"};
    app.require_subcommand(1);

    // generate-data
    auto* gen = app.add_subcommand("generate-data", "synthesize a dataset with meshes and groups");
    std::string gen_out = "data";
    int gen_count = 8;
    uint64_t gen_seed = 0;
    int gen_min_frames = 24, gen_max_frames = 48;
    gen->add_option("--out-dir", gen_out, "output directory");
    gen->add_option("--count", gen_count, "number of sequences");
    gen->add_option("--seed", gen_seed, "random seed");
    gen->add_option("--min-frames", gen_min_frames, "minimum sequence length");
    gen->add_option("--max-frames", gen_max_frames, "maximum sequence length");

    // train
    auto* train = app.add_subcommand("train", "train the denoiser");
    std::string train_config, train_out = "runs/latest", train_resume;
    int64_t train_seed = -1;
    bool train_diffusion_only = false;
    train->add_option("--config", train_config, "run config (key = value)")->required();
    train->add_option("--out-dir", train_out, "output directory");
    train->add_option("--resume", train_resume, "checkpoint to resume from");
    train->add_option("--seed", train_seed, "seed override");
    train->add_flag("--diffusion-only", train_diffusion_only, "train with the diffusion loss only");

    // sample
    auto* smp = app.add_subcommand("sample", "generate a sequence from text and an object mesh");
    std::string smp_ckpt, smp_model_cfg, smp_text, smp_object, smp_out = "sample.jsonl",
                          smp_id = "sample_000";
    int smp_length = 32, smp_steps = 50;
    uint64_t smp_seed = 0;
    double smp_guidance = 2.0;
    smp->add_option("--checkpoint", smp_ckpt, "model checkpoint")->required();
    smp->add_option("--model-config", smp_model_cfg, "model config (default: next to checkpoint)");
    smp->add_option("--text", smp_text, "text prompt")->required();
    smp->add_option("--object", smp_object, "object mesh (OBJ)")->required();
    smp->add_option("--length", smp_length, "frames to generate");
    smp->add_option("--seed", smp_seed, "sampling seed");
    smp->add_option("--guidance", smp_guidance, "classifier-free guidance scale");
    smp->add_option("--steps", smp_steps, "DDIM steps");
    smp->add_option("--out", smp_out, "output JSONL");
    smp->add_option("--id", smp_id, "record id for the output");

    // train-evaluator
    auto* tev = app.add_subcommand("train-evaluator", "train the contrastive feature extractor");
    std::string tev_data, tev_mesh_dir, tev_out = "evaluator.ckpt";
    int tev_steps = 600, tev_batch = 32;
    double tev_lr = 1e-2;
    uint64_t tev_seed = 0;
    tev->add_option("--data", tev_data, "dataset JSONL")->required();
    tev->add_option("--mesh-dir", tev_mesh_dir, "mesh directory (unused, kept for symmetry)");
    tev->add_option("--out", tev_out, "output checkpoint");
    tev->add_option("--steps", tev_steps, "training steps");
    tev->add_option("--batch", tev_batch, "contrastive batch size");
    tev->add_option("--lr", tev_lr, "learning rate");
    tev->add_option("--seed", tev_seed, "seed");

    // evaluate
    auto* ev = app.add_subcommand("evaluate", "compute the metric suite over generated sequences");
    std::string ev_gen, ev_ref, ev_groups, ev_mesh_dir, ev_evaluator, ev_report;
    uint64_t ev_seed = 0;
    ev->add_option("--generated", ev_gen, "generated JSONL")->required();
    ev->add_option("--references", ev_ref, "reference JSONL")->required();
    ev->add_option("--groups", ev_groups, "instruction groups JSON");
    ev->add_option("--mesh-dir", ev_mesh_dir, "mesh directory")->required();
    ev->add_option("--evaluator", ev_evaluator, "feature extractor checkpoint (enables FID/R-Prec)");
    ev->add_option("--report", ev_report, "write a JSON report here");
    ev->add_option("--seed", ev_seed, "seed for pooled metrics");

    // gradcheck
    auto* gc = app.add_subcommand("gradcheck", "finite-difference audit of every differentiable op");
    uint64_t gc_seed = 0;
    int gc_cases = 20;
    gc->add_option("--seed", gc_seed, "seed");
    gc->add_option("--cases", gc_cases, "random cases per op");

    // inspect-graph
    auto* ig = app.add_subcommand("inspect-graph", "print the HOI graph, chains and mask");
    bool ig_dot = false, ig_design_b = false;
    ig->add_flag("--dot", ig_dot, "emit a DOT graph instead of tables");
    ig->add_flag("--object-connect-all", ig_design_b, "connect the object node to every joint");

    CLI11_PARSE(app, argc, argv);

    try {
        if (gen->parsed())
            return cmd_generate_data(gen_out, gen_count, gen_seed, gen_min_frames, gen_max_frames);
        if (train->parsed())
            return cmd_train(train_config, train_out, train_resume, train_seed, train_diffusion_only);
        if (smp->parsed())
            return cmd_sample(smp_ckpt, smp_model_cfg, smp_text, smp_object, smp_length, smp_seed,
                              smp_guidance, smp_steps, smp_out, smp_id);
        if (tev->parsed())
            return cmd_train_evaluator(tev_data, tev_mesh_dir, tev_out, tev_steps, tev_batch, tev_lr,
                                       tev_seed);
        if (ev->parsed())
            return cmd_evaluate(ev_gen, ev_ref, ev_groups, ev_mesh_dir, ev_evaluator, ev_report,
                                ev_seed);
        if (gc->parsed()) return cmd_gradcheck(gc_seed, gc_cases);
        if (ig->parsed()) return cmd_inspect_graph(ig_dot, ig_design_b);
    } catch (const ConfigError& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return kExitConfig;
    } catch (const VocabError& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return kExitConfig;
    } catch (const NumericError& e) {
        std::fprintf(stderr, "numeric error: %s\n", e.what());
        return kExitNumeric;
    } catch (const Error& e) {
        std::fprintf(stderr, "data error: %s\n", e.what());
        return kExitData;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 0;
}
