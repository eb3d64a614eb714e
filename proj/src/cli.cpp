#include "man/cli.hpp"

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <stdexcept>

#include "man/analysis.hpp"
#include "man/metrics.hpp"

namespace man::cli {

namespace fs = std::filesystem;

Config load_run_config(const std::string& path) {
    Config cfg = Config::load(path);
    if (const char* env_seed = std::getenv("MAN_SEED"); env_seed && *env_seed)
        cfg.set("seed", env_seed);
    return cfg;
}

ModelConfig model_config_from(const Config& cfg) {
    ModelConfig mc;
    mc.seq_len = cfg.get_uint("model.seq_len", mc.seq_len);
    mc.item_dim = cfg.get_uint("model.item_dim", mc.item_dim);
    mc.domain_dim = cfg.get_uint("model.domain_dim", mc.domain_dim);
    mc.n_groups = cfg.get_uint("model.n_groups", mc.n_groups);
    mc.backbone = backbone_from_name(cfg.get_string("model.backbone", backbone_name(mc.backbone)));
    mc.enc_layers = cfg.get_uint("model.enc_layers", mc.enc_layers);
    mc.heads = cfg.get_uint("model.heads", mc.heads);
    mc.enc_mlp_hidden = cfg.get_uint("model.enc_mlp_hidden", mc.enc_mlp_hidden);
    mc.isa_hidden = cfg.get_size_list("model.isa_hidden", mc.isa_hidden);
    mc.sfa_hidden = cfg.get_size_list("model.sfa_hidden", mc.sfa_hidden);
    mc.gpa_pool_hidden = cfg.get_size_list("model.gpa_pool_hidden", mc.gpa_pool_hidden);
    mc.gpa_agg_hidden = cfg.get_size_list("model.gpa_agg_hidden", mc.gpa_agg_hidden);
    mc.head_hidden = cfg.get_size_list("model.head_hidden", mc.head_hidden);
    mc.use_isa = cfg.get_bool("model.use_isa", mc.use_isa);
    mc.use_sfa = cfg.get_bool("model.use_sfa", mc.use_sfa);
    mc.use_gpa = cfg.get_bool("model.use_gpa", mc.use_gpa);
    mc.mode = model_mode_from_name(cfg.get_string("model.mode", model_mode_name(mc.mode)));
    mc.mean_pool = cfg.get_bool("model.mean_pool", mc.mean_pool);
    mc.lambda_g = cfg.get_double("model.lambda_g", mc.lambda_g);
    return mc;
}

TrainConfig train_config_from(const Config& cfg) {
    TrainConfig tc;
    tc.learning_rate = cfg.get_double("train.learning_rate", tc.learning_rate);
    tc.beta1 = cfg.get_double("train.beta1", tc.beta1);
    tc.beta2 = cfg.get_double("train.beta2", tc.beta2);
    tc.eps = cfg.get_double("train.eps", tc.eps);
    tc.lambda_a = cfg.get_double("train.lambda_a", tc.lambda_a);
    tc.lambda_b = cfg.get_double("train.lambda_b", tc.lambda_b);
    tc.batch_size = cfg.get_uint("train.batch_size", tc.batch_size);
    tc.max_epochs = cfg.get_uint("train.max_epochs", tc.max_epochs);
    tc.early_stop_patience = cfg.get_uint("train.patience", tc.early_stop_patience);
    tc.seed = cfg.get_uint("seed", tc.seed);
    tc.update_mode =
        update_mode_from_name(cfg.get_string("train.update_mode", update_mode_name(tc.update_mode)));
    tc.early_stop_metric = cfg.get_string("train.early_stop_metric", tc.early_stop_metric);
    return tc;
}

SynthConfig synth_config_from(const Config& cfg) {
    SynthConfig sc;
    sc.users_per_domain = cfg.get_uint("synth.users_per_domain", sc.users_per_domain);
    sc.items_per_domain = cfg.get_uint("synth.items_per_domain", sc.items_per_domain);
    sc.n_groups = cfg.get_uint("synth.n_groups", sc.n_groups);
    sc.overlap_user_fraction =
        cfg.get_double("synth.overlap_user_fraction", sc.overlap_user_fraction);
    sc.overlap_item_fraction =
        cfg.get_double("synth.overlap_item_fraction", sc.overlap_item_fraction);
    sc.seq_len_mean = cfg.get_double("synth.seq_len_mean", sc.seq_len_mean);
    sc.seq_len_mean_b = cfg.get_double("synth.seq_len_mean_b", sc.seq_len_mean_b);
    sc.noise = cfg.get_double("synth.noise", sc.noise);
    sc.seed = cfg.get_uint("seed", sc.seed);
    return sc;
}

namespace {

PipelineConfig pipeline_config_from(const Config& cfg) {
    PipelineConfig pc;
    pc.seq_len = cfg.get_uint("model.seq_len", pc.seq_len);
    pc.k_core = cfg.get_uint("data.k_core", pc.k_core);
    pc.val_boundary = cfg.get_int("data.val_ts", pc.val_boundary);
    pc.test_boundary = cfg.get_int("data.test_ts", pc.test_boundary);
    pc.neg_train = cfg.get_uint("data.neg_train", pc.neg_train);
    pc.neg_eval = cfg.get_uint("data.neg_eval", pc.neg_eval);
    pc.seed = cfg.get_uint("seed", pc.seed);
    return pc;
}

void write_vocab_file(const std::string& path, const Vocabulary& vocab,
                      const std::vector<std::size_t>& to_global) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write vocabulary file: " + path);
    for (std::size_t i = 0; i < vocab.size(); ++i)
        out << vocab.items[i] << '\t' << i + 1 << '\t' << to_global[i + 1] << '\n';
}

struct VocabFile {
    Vocabulary vocab;
    std::vector<std::pair<std::size_t, std::size_t>> local_global;  // per item
};

VocabFile read_vocab_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open vocabulary file: " + path);
    VocabFile out;
    std::string item;
    std::size_t local, global;
    while (in >> item >> local >> global) {
        const std::size_t assigned = out.vocab.add(item);
        if (assigned != local)
            throw std::runtime_error("vocabulary file out of order: " + path);
        out.local_global.emplace_back(local, global);
    }
    return out;
}

DatasetSplit load_prepared_dataset(const Config& cfg, const std::string& dir) {
    const Config meta = Config::load((fs::path(dir) / "meta.cfg").string());
    auto read_domain = [&](Domain d) {
        std::vector<InteractionRecord> records;
        for (const char* split : {"train", "val", "test"}) {
            const auto path =
                fs::path(dir) / ("domain_" + std::string(domain_name(d)) + "." + split + ".tsv");
            auto part = load_interactions(path.string(), d);
            records.insert(records.end(), part.begin(), part.end());
        }
        return records;
    };
    const auto records_a = read_domain(Domain::A);
    const auto records_b = read_domain(Domain::B);

    const auto vf_a = read_vocab_file((fs::path(dir) / "vocab_a.tsv").string());
    const auto vf_b = read_vocab_file((fs::path(dir) / "vocab_b.tsv").string());
    // the shared vocabulary is reconstructed from the recorded global indices
    std::map<std::size_t, std::string> by_global;
    for (const auto& vf : {&vf_a, &vf_b})
        for (std::size_t i = 0; i < vf->vocab.size(); ++i)
            by_global[vf->local_global[i].second] = vf->vocab.items[i];
    Vocabulary global;
    for (const auto& [g, item] : by_global)
        if (global.add(item) != g)
            throw std::runtime_error("vocabulary files hold inconsistent global indices");

    PipelineConfig pc = pipeline_config_from(cfg);
    pc.seq_len = cfg.get_uint("model.seq_len", meta.get_uint("max_len", pc.seq_len));
    pc.k_core = 1;  // the prepared files are already filtered
    pc.val_boundary = meta.get_int("val_ts", pc.val_boundary);
    pc.test_boundary = meta.get_int("test_ts", pc.test_boundary);
    return build_dataset_with_vocabularies(records_a, records_b, pc, vf_a.vocab, vf_b.vocab,
                                           global);
}

}  // namespace

RunSetup build_run_setup(const Config& cfg) {
    RunSetup setup;
    setup.cfg = cfg;
    if (cfg.has("data.prepared_dir")) {
        setup.data = load_prepared_dataset(cfg, cfg.require_string("data.prepared_dir"));
    } else {
        const auto records_a = load_interactions(cfg.require_string("data.input_a"), Domain::A);
        const auto records_b = load_interactions(cfg.require_string("data.input_b"), Domain::B);
        setup.data = build_dataset(records_a, records_b, pipeline_config_from(cfg));
    }
    setup.model_cfg = model_config_from(cfg);
    setup.model_cfg.vocab_a = setup.data.vocab_a.size();
    setup.model_cfg.vocab_b = setup.data.vocab_b.size();
    setup.model_cfg.vocab_global = setup.data.vocab_global.size();
    setup.train_cfg = train_config_from(cfg);
    if (cfg.has("data.groups"))
        setup.ground_truth = load_ground_truth_groups(cfg.require_string("data.groups"));
    return setup;
}

void cmd_prepare(const PrepareArgs& args) {
    if (args.val_ts >= args.test_ts)
        throw std::runtime_error("prepare: --val-ts must be below --test-ts");
    fs::create_directories(args.out_dir);
    const auto raw_a = load_interactions(args.input_a, Domain::A);
    const auto raw_b = load_interactions(args.input_b, Domain::B);
    const auto filtered_a = apply_k_core(raw_a, args.k_core);
    const auto filtered_b = apply_k_core(raw_b, args.k_core);

    DatasetSplit vocabs;
    build_vocabularies(filtered_a, filtered_b, vocabs);
    write_vocab_file((fs::path(args.out_dir) / "vocab_a.tsv").string(), vocabs.vocab_a,
                     vocabs.local_to_global_a);
    write_vocab_file((fs::path(args.out_dir) / "vocab_b.tsv").string(), vocabs.vocab_b,
                     vocabs.local_to_global_b);

    auto write_splits = [&](const std::vector<InteractionRecord>& records, Domain d) {
        std::vector<InteractionRecord> train, val, test;
        for (const auto& r : records) {
            if (r.timestamp < args.val_ts)
                train.push_back(r);
            else if (r.timestamp < args.test_ts)
                val.push_back(r);
            else
                test.push_back(r);
        }
        const std::string stem = "domain_" + std::string(domain_name(d));
        write_interactions((fs::path(args.out_dir) / (stem + ".train.tsv")).string(), train);
        write_interactions((fs::path(args.out_dir) / (stem + ".val.tsv")).string(), val);
        write_interactions((fs::path(args.out_dir) / (stem + ".test.tsv")).string(), test);
    };
    write_splits(filtered_a, Domain::A);
    write_splits(filtered_b, Domain::B);

    Config meta;
    meta.set("k_core", std::to_string(args.k_core));
    meta.set("max_len", std::to_string(args.max_len));
    meta.set("val_ts", std::to_string(args.val_ts));
    meta.set("test_ts", std::to_string(args.test_ts));
    std::ofstream out(fs::path(args.out_dir) / "meta.cfg");
    out << meta.text();
    std::cerr << "prepare: " << filtered_a.size() << " domain-a records, " << filtered_b.size()
              << " domain-b records, |I_a|=" << vocabs.vocab_a.size()
              << " |I_b|=" << vocabs.vocab_b.size() << "\n";
}

void cmd_synth(const std::string& config_path, const std::string& out_dir) {
    const Config cfg = load_run_config(config_path);
    const SynthConfig sc = synth_config_from(cfg);
    const auto result = synth_generate(sc);
    fs::create_directories(out_dir);
    write_interactions((fs::path(out_dir) / "domain_a.tsv").string(), result.records_a);
    write_interactions((fs::path(out_dir) / "domain_b.tsv").string(), result.records_b);
    write_ground_truth_groups((fs::path(out_dir) / "groups.tsv").string(), result.user_group);
    std::cerr << "synth: wrote " << result.records_a.size() << " + " << result.records_b.size()
              << " interactions for " << result.user_group.size() << " users\n";
}

namespace {

std::vector<std::tuple<std::string, std::string, double>> evaluate_split(
    const ManModel& model, const DatasetSplit& data, const std::string& split) {
    std::vector<std::tuple<std::string, std::string, double>> rows;
    for (Domain d : {Domain::A, Domain::B}) {
        const auto& ds = data.domain(d);
        const auto& examples =
            split == "train" ? ds.train : (split == "validation" ? ds.validation : ds.test);
        if (examples.empty()) continue;
        for (const auto& [metric, value] : ranking_metrics(score_examples(model, examples)))
            rows.emplace_back(domain_name(d), metric, value);
    }
    return rows;
}

void audit_checkpoint_against_data(const ManModel& model, const DatasetSplit& data,
                                   std::size_t expected_seq_len) {
    if (model.cfg.vocab_a != data.vocab_a.size() || model.cfg.vocab_b != data.vocab_b.size() ||
        model.cfg.vocab_global != data.vocab_global.size())
        throw std::runtime_error(
            "checkpoint/config mismatch: checkpoint vocabularies (" +
            std::to_string(model.cfg.vocab_a) + "," + std::to_string(model.cfg.vocab_b) + "," +
            std::to_string(model.cfg.vocab_global) + ") vs dataset (" +
            std::to_string(data.vocab_a.size()) + "," + std::to_string(data.vocab_b.size()) +
            "," + std::to_string(data.vocab_global.size()) + ")");
    if (model.cfg.seq_len != expected_seq_len)
        throw std::runtime_error("checkpoint/config mismatch: sequence length " +
                                 std::to_string(model.cfg.seq_len) + " vs configured " +
                                 std::to_string(expected_seq_len));
}

}  // namespace

void cmd_train(const std::string& config_path, const std::string& out_dir) {
    const Config cfg = load_run_config(config_path);
    RunSetup setup = build_run_setup(cfg);
    fs::create_directories(out_dir);

    ManModel model(setup.model_cfg, setup.train_cfg.seed);
    const auto result = train(model, setup.data, setup.train_cfg);

    save_checkpoint((fs::path(out_dir) / "checkpoint.bin").string(), result.best);
    write_training_log((fs::path(out_dir) / "training_log.csv").string(), result.log);
    std::cerr << "train: " << result.epochs_run << " epochs, best epoch " << result.best_epoch
              << " (validation " << result.best_validation << ")\n";
}

void cmd_eval(const std::string& checkpoint_path, const std::string& config_path,
              const std::string& split, const std::string& out_dir) {
    if (split != "train" && split != "validation" && split != "test")
        throw std::runtime_error("eval: unknown split '" + split + "'");
    const Config cfg = load_run_config(config_path);
    RunSetup setup = build_run_setup(cfg);
    ManModel model = model_from_checkpoint(load_checkpoint(checkpoint_path));
    audit_checkpoint_against_data(model, setup.data, cfg.get_uint("model.seq_len", 8));

    const auto rows = evaluate_split(model, setup.data, split);
    fs::create_directories(out_dir);
    write_metrics_csv((fs::path(out_dir) / "metrics.csv").string(), rows);
    for (const auto& [domain, metric, value] : rows)
        std::cout << domain << ',' << metric << ',' << value << '\n';
}

namespace {

void run_variants(const Config& base_cfg, const std::string& out_dir,
                  const std::vector<std::pair<std::string, Config>>& variants,
                  const std::string& csv_name, const std::string& key_column) {
    RunSetup base = build_run_setup(base_cfg);
    fs::create_directories(out_dir);
    std::ofstream out(fs::path(out_dir) / csv_name);
    if (!out) throw std::runtime_error("cannot write " + csv_name);
    out << key_column << ",domain,metric,value\n";
    out.precision(15);
    for (const auto& [label, cfg] : variants) {
        ModelConfig mc = model_config_from(cfg);
        mc.vocab_a = base.data.vocab_a.size();
        mc.vocab_b = base.data.vocab_b.size();
        mc.vocab_global = base.data.vocab_global.size();
        TrainConfig tc = train_config_from(cfg);
        ManModel model(mc, tc.seed);
        train(model, base.data, tc);
        for (const auto& [domain, metric, value] : evaluate_split(model, base.data, "test"))
            out << label << ',' << domain << ',' << metric << ',' << value << '\n';
        std::cerr << csv_name << ": finished " << label << "\n";
    }
}

}  // namespace

void cmd_ablate(const std::string& config_path, const std::string& out_dir) {
    const Config cfg = load_run_config(config_path);
    std::vector<std::pair<std::string, Config>> variants;
    for (const char* label : {"wo_isa", "wo_sfa", "wo_gpa", "full"}) {
        Config variant = cfg;
        variant.set("model.mode", "cross");
        variant.set("model.use_isa", label == std::string("wo_isa") ? "false" : "true");
        variant.set("model.use_sfa", label == std::string("wo_sfa") ? "false" : "true");
        variant.set("model.use_gpa", label == std::string("wo_gpa") ? "false" : "true");
        variants.emplace_back(label, std::move(variant));
    }
    run_variants(cfg, out_dir, variants, "ablation.csv", "config");
}

void cmd_sweep_groups(const std::string& config_path, const std::vector<std::size_t>& values,
                      const std::string& out_dir) {
    if (values.empty()) throw std::runtime_error("sweep-groups: no values given");
    const Config cfg = load_run_config(config_path);
    std::vector<std::pair<std::string, Config>> variants;
    for (std::size_t n : values) {
        Config variant = cfg;
        variant.set("model.n_groups", std::to_string(n));
        variants.emplace_back(std::to_string(n), std::move(variant));
    }
    run_variants(cfg, out_dir, variants, "group_sweep.csv", "n_groups");
}

void cmd_analyze(const std::string& checkpoint_path, const std::string& config_path,
                 const std::string& out_dir, std::size_t k_override) {
    const Config cfg = load_run_config(config_path);
    RunSetup setup = build_run_setup(cfg);
    ManModel model = model_from_checkpoint(load_checkpoint(checkpoint_path));
    audit_checkpoint_against_data(model, setup.data, cfg.get_uint("model.seq_len", 8));

    std::size_t skipped = 0;
    const auto rows = export_group_representations(
        model, setup.data, setup.ground_truth ? &*setup.ground_truth : nullptr, &skipped);
    if (skipped) std::cerr << "analyze: skipped " << skipped << " users without sequences\n";
    fs::create_directories(out_dir);
    write_group_representations_csv((fs::path(out_dir) / "group_representations.csv").string(),
                                    rows);
    if (rows.size() < 2) throw std::runtime_error("analyze: not enough representations");

    std::vector<std::vector<double>> points;
    points.reserve(rows.size());
    for (const auto& r : rows) points.push_back(r.vector);
    const std::size_t k = k_override ? k_override : model.cfg.n_groups;
    const auto clusters = kmeans(points, k, cfg.get_uint("seed", 42));
    const auto projection = pca_2d(points);
    write_projection_csv((fs::path(out_dir) / "group_projection.csv").string(), rows, clusters,
                         projection);

    std::ofstream summary(fs::path(out_dir) / "analysis_summary.csv");
    summary << "metric,value\n";
    summary.precision(15);
    summary << "rows," << rows.size() << "\n";
    summary << "k," << k << "\n";
    summary << "inertia," << clusters.inertia_history.back() << "\n";
    summary << "explained_variance_1," << projection.explained_variance[0] << "\n";
    summary << "explained_variance_2," << projection.explained_variance[1] << "\n";

    std::vector<std::size_t> assignments, truth;
    for (std::size_t i = 0; i < rows.size(); ++i) {
        if (!rows[i].true_group) continue;
        assignments.push_back(clusters.assignments[i]);
        truth.push_back(*rows[i].true_group);
    }
    if (!assignments.empty()) {
        const double alignment = group_alignment_score(assignments, truth);
        summary << "group_alignment," << alignment << "\n";
        std::cout << "group_alignment," << alignment << "\n";
    }
}

}  // namespace man::cli
