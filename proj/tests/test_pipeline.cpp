#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "chainhoi/config.hpp"
#include "chainhoi/dataset.hpp"
#include "chainhoi/evaluator.hpp"
#include "chainhoi/trainer.hpp"

using namespace chainhoi;
namespace fs = std::filesystem;

namespace {

std::string slurp(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    std::stringstream ss;
    ss << is.rdbuf();
    return ss.str();
}

GeneratedDataset small_dataset(int count, uint64_t seed) {
    GeneratorOptions opt;
    opt.count = count;
    opt.seed = seed;
    opt.min_frames = 16;
    opt.max_frames = 24;
    return generate_dataset(opt, SkeletonSpec::smpl22());
}

RunConfig desk_run_config(const GeneratedDataset&, uint64_t seed) {
    RunConfig run;
    run.seed = seed;
    run.batch_size = 4;
    run.lr = 1e-3;
    return run;
}

ModelConfig desk_model_config(const GeneratedDataset& data) {
    ModelConfig cfg;
    cfg.n_blocks = 1;
    cfg.d_m = 8;
    cfg.d_t = 16;
    cfg.heads = 2;
    cfg.object_point_tokens = 4;
    cfg.vocab = build_vocabulary(data.records);
    return cfg;
}

}  // namespace

TEST_CASE("dataset generation is deterministic and schema-valid") {
    SkeletonSpec spec = SkeletonSpec::smpl22();
    GeneratedDataset a = small_dataset(8, 77);
    GeneratedDataset b = small_dataset(8, 77);
    REQUIRE(a.records.size() == 8);

    fs::path dir_a = fs::temp_directory_path() / "chainhoi_ds_a";
    fs::path dir_b = fs::temp_directory_path() / "chainhoi_ds_b";
    fs::remove_all(dir_a);
    fs::remove_all(dir_b);
    write_dataset(a, dir_a.string());
    write_dataset(b, dir_b.string());
    CHECK(slurp((dir_a / "dataset.jsonl").string()) == slurp((dir_b / "dataset.jsonl").string()));
    CHECK(slurp((dir_a / "groups.json").string()) == slurp((dir_b / "groups.json").string()));

    for (const auto& r : a.records) r.seq.validate(spec);

    // round trip through JSONL
    std::vector<SequenceRecord> loaded = load_jsonl((dir_a / "dataset.jsonl").string(), spec);
    REQUIRE(loaded.size() == a.records.size());
    for (size_t i = 0; i < loaded.size(); ++i) {
        CHECK(loaded[i].id == a.records[i].id);
        CHECK(loaded[i].text == a.records[i].text);
        CHECK(loaded[i].seq.frames == a.records[i].seq.frames);
        CHECK(loaded[i].labels.a == a.records[i].labels.a);
    }

    // meshes load back
    for (const auto& [object_id, mesh] : a.meshes) {
        TriangleMesh m = TriangleMesh::load_obj((dir_a / "meshes" / (object_id + ".obj")).string());
        CHECK(m.triangles.size() == mesh.triangles.size());
        CHECK(m.watertight());
    }

    // groups round trip and every member exists
    InstructionGroups g = load_groups((dir_a / "groups.json").string());
    CHECK(g.groups == a.groups.groups);
    for (const auto& [gid, members] : g.groups)
        for (const auto& m : members) {
            bool found = false;
            for (const auto& r : a.records) found = found || r.id == m;
            CHECK(found);
        }
}

TEST_CASE("generated contacts are geometrically true and intent agrees >= 99%") {
    SkeletonSpec spec = SkeletonSpec::smpl22();
    GeneratedDataset data = small_dataset(12, 31);
    int agree = 0, total = 0;
    bool any_contact = false;
    for (size_t i = 0; i < data.records.size(); ++i) {
        const SequenceRecord& r = data.records[i];
        // stored labels equal recomputed geometric labels (truth by construction)
        auto mesh_it = data.meshes.find(r.object_id);
        REQUIRE(mesh_it != data.meshes.end());
        ContactLabels recomputed = compute_contact_labels(r.seq, mesh_it->second, spec, 0.05);
        CHECK(recomputed.a == r.labels.a);

        const ContactLabels& intent = data.intent_labels[i];
        for (size_t j = 0; j < r.labels.a.size(); ++j) {
            agree += r.labels.a[j] == intent.a[j];
            ++total;
            any_contact = any_contact || intent.a[j];
        }
    }
    CHECK(any_contact);
    CHECK(static_cast<double>(agree) / total >= 0.99);
}

TEST_CASE("grouping rule: same template+object+hand together, grasp never with push") {
    GeneratedDataset data = small_dataset(16, 13);
    InstructionGroups& g = data.groups;
    for (const auto& [gid, members] : g.groups) {
        CHECK(!members.empty());
        bool is_grasp = gid.rfind("grasp", 0) == 0;
        bool is_push = gid.rfind("push", 0) == 0;
        CHECK((is_grasp || is_push || gid.rfind("carry", 0) == 0 || gid.rfind("sit", 0) == 0));
    }
    // two grasp records with the same primitive and hand share one group key by rule
    std::map<std::string, int> key_counts;
    for (const auto& [gid, members] : g.groups) key_counts[gid] = static_cast<int>(members.size());
    int grouped = 0;
    for (const auto& [gid, count] : key_counts)
        if (count > 1) ++grouped;
    // with 16 records over 4 templates some keys recur
    CHECK(grouped >= 1);
}

TEST_CASE("run and model config round trip; defaults match the paper table") {
    RunConfig run;  // defaults
    CHECK(run.timesteps == 1000);
    CHECK(run.beta_start == 1e-4);
    CHECK(run.beta_end == 0.02);
    CHECK(run.ddim_steps == 50);
    CHECK(run.guidance_scale == 2.0);
    CHECK(run.lr == 1e-4);
    CHECK(run.batch_size == 32);
    CHECK(run.epochs == 200);
    CHECK(run.lambda_h == 2.0);
    CHECK(run.lambda_o == 1.0);

    ModelConfig model;
    CHECK(model.n_blocks == 6);
    CHECK(model.d_m == 64);
    CHECK(model.d_t == 256);
    CHECK(model.object_point_tokens == 16);
    CHECK(model.max_timesteps == 1000);

    fs::path dir = fs::temp_directory_path() / "chainhoi_cfg";
    fs::create_directories(dir);
    run.dataset_path = "data.jsonl";
    run.seed = 42;
    save_run_config(run, (dir / "run.cfg").string());
    RunConfig run2 = load_run_config((dir / "run.cfg").string());
    CHECK(run2.dataset_path == run.dataset_path);
    CHECK(run2.seed == run.seed);
    CHECK(run2.lr == run.lr);

    model.vocab = {"a", "person"};
    save_model_config(model, (dir / "model.cfg").string());
    ModelConfig model2 = load_model_config((dir / "model.cfg").string());
    CHECK(model2.n_blocks == model.n_blocks);
    CHECK(model2.vocab == model.vocab);
    CHECK(model2.kim_mask_enabled == model.kim_mask_enabled);

    // unknown keys are rejected with context
    std::ofstream bad((dir / "bad.cfg").string());
    bad << "nblocks = 6\n";
    bad.close();
    CHECK_THROWS_AS(load_model_config((dir / "bad.cfg").string()), ConfigError);
}

TEST_CASE("trainer: loss drops, resume is bitwise, lambda-zero matches diffusion-only") {
    GeneratedDataset data = small_dataset(4, 5);
    ModelConfig mcfg = desk_model_config(data);
    RunConfig run = desk_run_config(data, 11);
    run.epochs = 4;

    auto fresh_model = [&]() {
        ChainHoiModel m;
        Rng rng(123);
        m.init(mcfg, SkeletonSpec::smpl22(), rng);
        return m;
    };

    // (a) full 4-epoch run
    ChainHoiModel model_a = fresh_model();
    Trainer trainer_a(model_a, run, data.records, data.meshes);
    for (int e = 0; e < 4; ++e) trainer_a.run_epoch();

    // (b) 2 epochs, checkpoint, resume into a fresh trainer, 2 more epochs
    fs::path dir = fs::temp_directory_path() / "chainhoi_train";
    fs::create_directories(dir);
    std::string ckpt = (dir / "mid.ckpt").string();
    ChainHoiModel model_b = fresh_model();
    {
        Trainer t(model_b, run, data.records, data.meshes);
        t.run_epoch();
        t.run_epoch();
        t.save_checkpoint(ckpt);
    }
    ChainHoiModel model_c = fresh_model();
    Trainer trainer_c(model_c, run, data.records, data.meshes);
    trainer_c.load_checkpoint(ckpt);
    trainer_c.run_epoch();
    trainer_c.run_epoch();

    REQUIRE(trainer_a.history().size() == 4);
    REQUIRE(trainer_c.history().size() == 2);
    for (int e = 2; e < 4; ++e) {
        const EpochLoss& full = trainer_a.history()[static_cast<size_t>(e)];
        const EpochLoss& resumed = trainer_c.history()[static_cast<size_t>(e - 2)];
        CHECK(full.epoch == resumed.epoch);
        CHECK(full.l_diff == resumed.l_diff);
        CHECK(full.l_h == resumed.l_h);
        CHECK(full.total == resumed.total);
    }

    // (c) lambda1 = lambda2 = 0 matches a structurally pure-diffusion run bitwise
    RunConfig zero = run;
    zero.lambda_h = 0.0;
    zero.lambda_o = 0.0;
    ChainHoiModel model_z = fresh_model();
    Trainer trainer_z(model_z, zero, data.records, data.meshes);
    ChainHoiModel model_d = fresh_model();
    Trainer trainer_d(model_d, zero, data.records, data.meshes, /*diffusion_only=*/true);
    for (int e = 0; e < 2; ++e) {
        trainer_z.run_epoch();
        trainer_d.run_epoch();
    }
    for (int e = 0; e < 2; ++e) {
        CHECK(trainer_z.history()[static_cast<size_t>(e)].l_diff ==
              trainer_d.history()[static_cast<size_t>(e)].l_diff);
        CHECK(trainer_z.history()[static_cast<size_t>(e)].total ==
              trainer_d.history()[static_cast<size_t>(e)].total);
    }

    // loss CSV writes one row per epoch
    Trainer::write_loss_csv(trainer_a.history(), (dir / "loss.csv").string());
    std::string csv = slurp((dir / "loss.csv").string());
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 5);  // header + 4 epochs
}

TEST_CASE("evaluator: InfoNCE starts near ln(batch) and overfits a small set") {
    GeneratedDataset data = small_dataset(12, 21);
    EvaluatorConfig cfg;
    cfg.vocab = build_vocabulary(data.records);
    ToyEvaluator eval;
    Rng rng(55);
    eval.init(cfg, rng);

    std::vector<Tensor> motions;
    std::vector<std::vector<int>> texts;
    for (const auto& r : data.records) {
        motions.push_back(Tensor::from({r.seq.length, r.seq.node_count, kFeatureWidth}, r.seq.frames));
        texts.push_back(tokenize(r.text, cfg.vocab));
    }

    // loss at initialization over a batch of 12 is about ln(12)
    {
        std::vector<Tensor> m_rows, t_rows;
        for (size_t i = 0; i < motions.size(); ++i) {
            m_rows.push_back(eval.motion_features(motions[i]));
            t_rows.push_back(eval.text_features(texts[i]));
        }
        Tensor m = m_rows[0], t = t_rows[0];
        for (size_t i = 1; i < m_rows.size(); ++i) {
            m = ops::concat(m, m_rows[i], 0);
            t = ops::concat(t, t_rows[i], 0);
        }
        double loss0 = eval.info_nce(m, t).item();
        CHECK(std::abs(loss0 - std::log(12.0)) < 0.1 * std::log(12.0));
    }

    Rng train_rng(56);
    EvaluatorTrainStats stats = train_toy_evaluator(eval, motions, texts, 600, 12, 1e-2, train_rng);
    CHECK(stats.final_loss < stats.initial_loss);

    // features distinguish training pairs: retrieval beats chance comfortably
    Tensor m = eval.motion_features(motions[0]);
    Tensor t = eval.text_features(texts[0]);
    for (size_t i = 1; i < motions.size(); ++i) {
        m = ops::concat(m, eval.motion_features(motions[i]), 0);
        t = ops::concat(t, eval.text_features(texts[i]), 0);
    }
    // rank convention of metric_r_precision: duplicates of the true text tie
    // at equal distance and do not displace it
    int hits = 0;
    for (int i = 0; i < 12; ++i) {
        double true_d = 0;
        for (int c = 0; c < cfg.proj_dim; ++c) {
            double diff = m.at({i, c}) - t.at({i, c});
            true_d += diff * diff;
        }
        int rank = 0;
        for (int j = 0; j < 12; ++j) {
            double d = 0;
            for (int c = 0; c < cfg.proj_dim; ++c) {
                double diff = m.at({i, c}) - t.at({j, c});
                d += diff * diff;
            }
            rank += d < true_d;
        }
        hits += rank == 0;
    }
    CHECK(hits >= 9);  // >= 75% top-1 on the training pairs
}

TEST_CASE("dataset rejects invalid options") {
    GeneratorOptions opt;
    opt.count = 0;
    CHECK_THROWS_AS(generate_dataset(opt, SkeletonSpec::smpl22()), ScenarioError);
    opt.count = 2;
    opt.min_frames = 30;
    opt.max_frames = 10;
    CHECK_THROWS_AS(generate_dataset(opt, SkeletonSpec::smpl22()), ScenarioError);
}
