#include "man/training.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace man {

const char* update_mode_name(UpdateMode mode) {
    switch (mode) {
        case UpdateMode::Joint: return "joint";
        case UpdateMode::Alternating: return "alternating";
        case UpdateMode::SingleA: return "single_a";
        case UpdateMode::SingleB: return "single_b";
    }
    return "joint";
}

UpdateMode update_mode_from_name(const std::string& name) {
    if (name == "joint") return UpdateMode::Joint;
    if (name == "alternating") return UpdateMode::Alternating;
    if (name == "single_a") return UpdateMode::SingleA;
    if (name == "single_b") return UpdateMode::SingleB;
    throw std::runtime_error("unknown update mode: " + name);
}

void adam_step(const ParameterStore& params, const std::vector<std::string>& active,
               AdamState& state, const TrainConfig& cfg) {
    for (const auto& name : active) {
        const ParamEntry& entry = params.entry(name);
        const TensorPtr& p = entry.value;
        const bool freeze_row0 = entry.freeze_row0;

        auto& st = state.by_name[name];
        if (st.m.empty()) {
            st.m.assign(p->size(), 0.0);
            st.v.assign(p->size(), 0.0);
        }
        const bool has_grad = !p->grad.empty();
        if (freeze_row0 && has_grad)
            for (std::size_t j = 0; j < p->cols; ++j) p->grad[j] = 0.0;
        if (has_grad)
            for (double g : p->grad)
                if (!std::isfinite(g))
                    throw std::runtime_error("adam_step: non-finite gradient in " + name);

        st.step += 1;
        const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(st.step));
        const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(st.step));
        for (std::size_t i = 0; i < p->size(); ++i) {
            const double g = has_grad ? p->grad[i] : 0.0;
            st.m[i] = cfg.beta1 * st.m[i] + (1.0 - cfg.beta1) * g;
            st.v[i] = cfg.beta2 * st.v[i] + (1.0 - cfg.beta2) * g * g;
            const double mhat = st.m[i] / bc1;
            const double vhat = st.v[i] / bc2;
            p->data[i] -= cfg.learning_rate * mhat / (std::sqrt(vhat) + cfg.eps);
        }
        if (freeze_row0)
            for (std::size_t j = 0; j < p->cols; ++j) p->data[j] = 0.0;
    }
}

// --- checkpoint file format --------------------------------------------------
// "MANCKPT" | u32 version | records: u32 name_len, name bytes, u32 rank,
// rank x u64 dims, little-endian f64 payload.

namespace {

constexpr char kMagic[7] = {'M', 'A', 'N', 'C', 'K', 'P', 'T'};

template <typename T>
void write_raw(std::ofstream& out, T value) {
    out.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <typename T>
T read_raw(std::ifstream& in) {
    T value{};
    if (!in.read(reinterpret_cast<char*>(&value), sizeof(T)))
        throw std::runtime_error("checkpoint: truncated file");
    return value;
}

std::vector<double> bytes_to_doubles(const std::string& text) {
    std::vector<double> out(text.size());
    for (std::size_t i = 0; i < text.size(); ++i)
        out[i] = static_cast<double>(static_cast<unsigned char>(text[i]));
    return out;
}

std::string doubles_to_bytes(const std::vector<double>& data) {
    std::string out(data.size(), '\0');
    for (std::size_t i = 0; i < data.size(); ++i)
        out[i] = static_cast<char>(static_cast<unsigned char>(data[i]));
    return out;
}

}  // namespace

const NamedTensor* Checkpoint::find(const std::string& name) const {
    for (const auto& r : records)
        if (r.name == name) return &r;
    return nullptr;
}

void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write checkpoint: " + path);
    out.write(kMagic, sizeof(kMagic));
    write_raw<std::uint32_t>(out, ckpt.version);
    for (const auto& r : ckpt.records) {
        write_raw<std::uint32_t>(out, static_cast<std::uint32_t>(r.name.size()));
        out.write(r.name.data(), static_cast<std::streamsize>(r.name.size()));
        write_raw<std::uint32_t>(out, static_cast<std::uint32_t>(r.dims.size()));
        std::uint64_t total = 1;
        for (std::uint64_t d : r.dims) {
            write_raw<std::uint64_t>(out, d);
            total *= d;
        }
        if (total != r.data.size())
            throw std::runtime_error("checkpoint: record " + r.name + " dims/data mismatch");
        out.write(reinterpret_cast<const char*>(r.data.data()),
                  static_cast<std::streamsize>(r.data.size() * sizeof(double)));
    }
    if (!out) throw std::runtime_error("checkpoint: write failed for " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open checkpoint: " + path);
    char magic[7];
    if (!in.read(magic, sizeof(magic)) || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
        throw std::runtime_error("checkpoint: bad magic in " + path);
    Checkpoint ckpt;
    ckpt.version = read_raw<std::uint32_t>(in);
    if (ckpt.version != 1)
        throw std::runtime_error("checkpoint: unsupported version " +
                                 std::to_string(ckpt.version));
    for (;;) {
        std::uint32_t name_len;
        if (!in.read(reinterpret_cast<char*>(&name_len), sizeof(name_len))) break;  // EOF
        NamedTensor rec;
        rec.name.resize(name_len);
        if (!in.read(rec.name.data(), name_len))
            throw std::runtime_error("checkpoint: truncated record name");
        const auto rank = read_raw<std::uint32_t>(in);
        std::uint64_t total = 1;
        for (std::uint32_t i = 0; i < rank; ++i) {
            rec.dims.push_back(read_raw<std::uint64_t>(in));
            total *= rec.dims.back();
        }
        rec.data.resize(total);
        if (!in.read(reinterpret_cast<char*>(rec.data.data()),
                     static_cast<std::streamsize>(total * sizeof(double))))
            throw std::runtime_error("checkpoint: truncated payload for " + rec.name);
        ckpt.records.push_back(std::move(rec));
    }
    return ckpt;
}

Checkpoint make_checkpoint(const ManModel& model, const AdamState* opt, const Rng* rng) {
    Checkpoint ckpt;
    ckpt.records.push_back(
        {"__config", {1, 0}, bytes_to_doubles(model_config_to_text(model.cfg))});
    ckpt.records[0].dims[1] = ckpt.records[0].data.size();
    for (const auto& e : model.params.entries())
        ckpt.records.push_back({e.name, {e.value->rows, e.value->cols}, e.value->data});
    if (opt) {
        for (const auto& e : model.params.entries()) {
            auto it = opt->by_name.find(e.name);
            if (it == opt->by_name.end()) continue;
            ckpt.records.push_back({"__opt/m/" + e.name, {e.value->rows, e.value->cols},
                                    it->second.m});
            ckpt.records.push_back({"__opt/v/" + e.name, {e.value->rows, e.value->cols},
                                    it->second.v});
            ckpt.records.push_back(
                {"__opt/t/" + e.name, {1, 1}, {static_cast<double>(it->second.step)}});
        }
    }
    if (rng) {
        const auto st = rng->state();
        NamedTensor rec{"__rng", {1, 4}, std::vector<double>(4)};
        std::memcpy(rec.data.data(), st.data(), sizeof(st));  // bit-exact u64 words
        ckpt.records.push_back(std::move(rec));
    }
    return ckpt;
}

void restore_model(ManModel& model, const Checkpoint& ckpt) {
    for (const auto& e : model.params.entries()) {
        const NamedTensor* rec = ckpt.find(e.name);
        if (!rec)
            throw std::runtime_error("checkpoint/config mismatch: parameter '" + e.name +
                                     "' missing from checkpoint");
        if (rec->dims.size() != 2 || rec->dims[0] != e.value->rows ||
            rec->dims[1] != e.value->cols)
            throw std::runtime_error("checkpoint/config mismatch: parameter '" + e.name +
                                     "' is " + e.value->shape_str() + " but checkpoint holds " +
                                     std::to_string(rec->dims.empty() ? 0 : rec->dims[0]) + "x" +
                                     std::to_string(rec->dims.size() < 2 ? 0 : rec->dims[1]));
        e.value->data = rec->data;
    }
}

ManModel model_from_checkpoint(const Checkpoint& ckpt) {
    const NamedTensor* cfg_rec = ckpt.find("__config");
    if (!cfg_rec) throw std::runtime_error("checkpoint: missing embedded config");
    ModelConfig cfg = model_config_from_text(doubles_to_bytes(cfg_rec->data));
    ManModel model(cfg, 0);
    restore_model(model, ckpt);
    return model;
}

AdamState adam_state_from_checkpoint(const Checkpoint& ckpt, const ManModel& model) {
    AdamState state;
    for (const auto& e : model.params.entries()) {
        const NamedTensor* m = ckpt.find("__opt/m/" + e.name);
        const NamedTensor* v = ckpt.find("__opt/v/" + e.name);
        const NamedTensor* t = ckpt.find("__opt/t/" + e.name);
        if (!m || !v || !t) continue;
        AdamParamState st;
        st.m = m->data;
        st.v = v->data;
        st.step = static_cast<std::uint64_t>(t->data[0]);
        state.by_name[e.name] = std::move(st);
    }
    return state;
}

// --- evaluation ---------------------------------------------------------------

std::vector<ScoredExample> score_examples(const ManModel& model,
                                          const std::vector<SequenceExample>& examples) {
    std::vector<ScoredExample> out;
    out.reserve(examples.size());
    for (const auto& ex : examples)
        out.push_back({ex.user_id, model.predict(ex), ex.label, ex.candidate_set});
    return out;
}

std::map<std::string, double> ranking_metrics(const std::vector<ScoredExample>& scored) {
    return {{"auc", auc(scored)},
            {"gauc", gauc(scored)},
            {"mrr", mrr(scored)},
            {"ndcg@10", ndcg_at_k(scored, 10)}};
}

// --- training loop ---------------------------------------------------------------

void write_training_log(const std::string& path, const std::vector<LogRow>& log) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write training log: " + path);
    out << "epoch,domain,split,metric,value\n";
    out.precision(15);
    for (const auto& row : log)
        out << row.epoch << ',' << row.domain << ',' << row.split << ',' << row.metric << ','
            << row.value << '\n';
}

namespace {

std::vector<std::string> active_parameter_names(const ParameterStore& params, bool domain_a,
                                                bool domain_b) {
    std::vector<std::string> names;
    for (const auto& e : params.entries()) {
        const Ownership o = ParameterStore::ownership_of(e.name);
        if (o == Ownership::Shared || (o == Ownership::DomainA && domain_a) ||
            (o == Ownership::DomainB && domain_b))
            names.push_back(e.name);
    }
    return names;
}

std::vector<const SequenceExample*> make_batch(const std::vector<SequenceExample>& pool,
                                               const std::vector<std::size_t>& order,
                                               std::size_t step, std::size_t batch_size) {
    std::vector<const SequenceExample*> batch;
    const std::size_t begin = step * batch_size;
    if (begin >= order.size()) return batch;
    const std::size_t end = std::min(order.size(), begin + batch_size);
    batch.reserve(end - begin);
    for (std::size_t i = begin; i < end; ++i) batch.push_back(&pool[order[i]]);
    return batch;
}

}  // namespace

TrainResult train(ManModel& model, const DatasetSplit& data, const TrainConfig& cfg) {
    const bool use_a = cfg.update_mode != UpdateMode::SingleB;
    const bool use_b = cfg.update_mode != UpdateMode::SingleA;
    if (use_a && data.a.train.empty())
        throw std::runtime_error("train: empty training split for active domain a");
    if (use_b && data.b.train.empty())
        throw std::runtime_error("train: empty training split for active domain b");

    AdamState opt;
    Rng loop_rng(cfg.seed, "train_loop");
    TrainResult result;
    result.best = make_checkpoint(model, &opt, &loop_rng);
    result.best_validation = -1.0;
    result.best_epoch = 0;

    const bool have_validation = (use_a && !data.a.validation.empty()) ||
                                 (use_b && !data.b.validation.empty());
    std::size_t epochs_since_best = 0;

    auto run_step = [&](const std::vector<const SequenceExample*>& batch_a,
                        const std::vector<const SequenceExample*>& batch_b, std::size_t epoch,
                        std::size_t step, LossBreakdown* bd) {
        model.params.zero_grads();
        TensorPtr loss_node;
        try {
            loss_node = model.loss(batch_a, batch_b, cfg.lambda_a, cfg.lambda_b, bd);
            backward(loss_node);
        } catch (const std::exception& e) {
            throw std::runtime_error("train: aborted at epoch " + std::to_string(epoch) +
                                     " step " + std::to_string(step) + ": " + e.what());
        }
        const auto active =
            active_parameter_names(model.params, !batch_a.empty(), !batch_b.empty());
        adam_step(model.params, active, opt, cfg);
    };

    for (std::size_t epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
        std::vector<std::size_t> order_a(data.a.train.size()), order_b(data.b.train.size());
        for (std::size_t i = 0; i < order_a.size(); ++i) order_a[i] = i;
        for (std::size_t i = 0; i < order_b.size(); ++i) order_b[i] = i;
        {
            Rng ra(cfg.seed, "shuffle/a/" + std::to_string(epoch));
            Rng rb(cfg.seed, "shuffle/b/" + std::to_string(epoch));
            ra.shuffle(order_a);
            rb.shuffle(order_b);
        }
        const std::size_t steps_a =
            use_a ? (order_a.size() + cfg.batch_size - 1) / cfg.batch_size : 0;
        const std::size_t steps_b =
            use_b ? (order_b.size() + cfg.batch_size - 1) / cfg.batch_size : 0;
        const std::size_t steps = std::max(steps_a, steps_b);

        double loss_sum_a = 0.0, loss_sum_b = 0.0;
        std::size_t loss_count_a = 0, loss_count_b = 0;
        for (std::size_t s = 0; s < steps; ++s) {
            auto batch_a = use_a ? make_batch(data.a.train, order_a, s, cfg.batch_size)
                                 : std::vector<const SequenceExample*>{};
            auto batch_b = use_b ? make_batch(data.b.train, order_b, s, cfg.batch_size)
                                 : std::vector<const SequenceExample*>{};
            if (batch_a.empty() && batch_b.empty()) continue;
            LossBreakdown bd;
            if (cfg.update_mode == UpdateMode::Alternating) {
                if (!batch_a.empty()) {
                    run_step(batch_a, {}, epoch, s, &bd);
                    loss_sum_a += bd.loss_a;
                    ++loss_count_a;
                }
                if (!batch_b.empty()) {
                    run_step({}, batch_b, epoch, s, &bd);
                    loss_sum_b += bd.loss_b;
                    ++loss_count_b;
                }
            } else {
                run_step(batch_a, batch_b, epoch, s, &bd);
                if (!batch_a.empty()) {
                    loss_sum_a += bd.loss_a;
                    ++loss_count_a;
                }
                if (!batch_b.empty()) {
                    loss_sum_b += bd.loss_b;
                    ++loss_count_b;
                }
            }
        }

        if (loss_count_a)
            result.log.push_back({epoch, "a", "train", "loss", loss_sum_a / loss_count_a});
        if (loss_count_b)
            result.log.push_back({epoch, "b", "train", "loss", loss_sum_b / loss_count_b});

        // per-epoch validation and early stopping
        double metric_sum = 0.0;
        std::size_t metric_count = 0;
        for (Domain d : {Domain::A, Domain::B}) {
            const bool active = d == Domain::A ? use_a : use_b;
            const auto& val = data.domain(d).validation;
            if (!active || val.empty()) continue;
            const auto metrics = ranking_metrics(score_examples(model, val));
            for (const auto& [name, value] : metrics)
                result.log.push_back({epoch, domain_name(d), "val", name, value});
            metric_sum += metrics.at(cfg.early_stop_metric);
            ++metric_count;
        }
        result.epochs_run = epoch;

        if (!have_validation) {
            result.best = make_checkpoint(model, &opt, &loop_rng);
            result.best_epoch = epoch;
            continue;
        }
        const double score = metric_sum / static_cast<double>(metric_count);
        if (score > result.best_validation) {
            result.best_validation = score;
            result.best_epoch = epoch;
            result.best = make_checkpoint(model, &opt, &loop_rng);
            epochs_since_best = 0;
        } else {
            ++epochs_since_best;
            if (epochs_since_best >= cfg.early_stop_patience) break;
        }
    }

    restore_model(model, result.best);
    return result;
}

// --- gradient verification -----------------------------------------------------

std::string module_of_parameter(const std::string& name) {
    if (name.find("/enc/") != std::string::npos) return "encoders";
    if (name.find("item_table") != std::string::npos ||
        name.find("pos_table") != std::string::npos ||
        name.find("domain_emb") != std::string::npos)
        return "embeddings";
    if (name.find("/isa/") != std::string::npos) return "isa";
    if (name.find("/sfa/") != std::string::npos) return "sfa";
    if (name.find("/gpa/") != std::string::npos || name.find("prototypes") != std::string::npos)
        return "gpa";
    if (name.find("/head") != std::string::npos) return "heads";
    return "other";
}

GradCheckReport verify_gradients(const GradCheckConfig& cfg) {
    SynthConfig synth_cfg;
    synth_cfg.users_per_domain = cfg.users_per_domain;
    synth_cfg.items_per_domain = cfg.items_per_domain;
    synth_cfg.n_groups = std::max<std::size_t>(1, cfg.n_groups);
    synth_cfg.seq_len_mean = 4.0;
    synth_cfg.noise = 0.3;
    synth_cfg.seed = cfg.seed;
    const auto synth = synth_generate(synth_cfg);

    PipelineConfig pipe;
    pipe.seq_len = cfg.seq_len;
    pipe.k_core = 1;
    pipe.val_boundary = synth_cfg.time_horizon * 8 / 10;
    pipe.test_boundary = synth_cfg.time_horizon * 9 / 10;
    pipe.neg_train = 1;
    pipe.neg_eval = 1;
    pipe.seed = cfg.seed;
    const auto data = build_dataset(synth.records_a, synth.records_b, pipe);

    ModelConfig mc;
    mc.seq_len = cfg.seq_len;
    mc.item_dim = cfg.item_dim;
    mc.n_groups = cfg.n_groups;
    mc.backbone = cfg.backbone;
    mc.enc_layers = 1;
    mc.heads = 1;
    mc.isa_hidden = {4};
    mc.head_hidden = {5};
    mc.use_isa = cfg.use_isa;
    mc.use_sfa = cfg.use_sfa;
    mc.use_gpa = cfg.use_gpa;
    mc.lambda_g = cfg.lambda_g;
    mc.vocab_a = data.vocab_a.size();
    mc.vocab_b = data.vocab_b.size();
    mc.vocab_global = data.vocab_global.size();
    ManModel model(mc, cfg.seed);

    auto take = [](const std::vector<SequenceExample>& pool, std::size_t n) {
        std::vector<const SequenceExample*> batch;
        for (std::size_t i = 0; i < std::min(n, pool.size()); ++i) batch.push_back(&pool[i]);
        return batch;
    };
    const auto batch_a = take(data.a.train, 4);
    const auto batch_b = take(data.b.train, 4);
    if (batch_a.empty() || batch_b.empty())
        throw std::runtime_error("verify_gradients: empty tiny batch");

    auto build_loss = [&]() { return model.loss(batch_a, batch_b, cfg.lambda_a, cfg.lambda_b); };

    GradCheckReport report;
    model.params.zero_grads();
    backward(build_loss());
    auto eval = [&]() {
        NoGradGuard guard;
        return build_loss()->scalar_value();
    };
    for (const auto& entry : model.params.entries()) {
        auto& p = entry.value;
        p->ensure_grad();
        const std::string module = module_of_parameter(entry.name);
        double worst = 0.0;
        for (std::size_t i = 0; i < p->size(); ++i) {
            const double saved = p->data[i];
            p->data[i] = saved + cfg.step;
            const double up = eval();
            p->data[i] = saved - cfg.step;
            const double down = eval();
            p->data[i] = saved;
            const double numeric = (up - down) / (2.0 * cfg.step);
            worst = std::max(worst, max_rel_error(p->grad[i], numeric));
            ++report.parameters_checked;
        }
        auto it = report.per_module.find(module);
        if (it == report.per_module.end())
            report.per_module[module] = worst;
        else
            it->second = std::max(it->second, worst);
        report.max_rel_error = std::max(report.max_rel_error, worst);
    }

    // stop-gradient audit: a loss fed only by the SFA/GPA outputs must leave
    // every encoder parameter with an exactly zero gradient
    if ((cfg.use_sfa || cfg.use_gpa) && model.has_local() && model.has_global()) {
        model.params.zero_grads();
        TensorPtr acc;
        auto accumulate = [&acc](const TensorPtr& t) { acc = acc ? add(acc, t) : t; };
        for (const auto* ex : {batch_a[0], batch_b[0]}) {
            const bool is_a = ex->domain == Domain::A;
            auto e_local = embed_local(model.tables, ex->history, ex->domain);
            auto e_global = embed_global(model.tables, ex->history_global, ex->domain);
            auto s_local = encode(is_a ? *model.enc_a : *model.enc_b, e_local, ex->mask);
            auto s_global = encode(*model.enc_g, e_global, ex->mask);
            if (cfg.use_sfa) {
                auto fused = sequence_fusion(is_a ? *model.sfa_a : *model.sfa_b, s_local,
                                             s_global, ex->mask);
                accumulate(sum_all(fused));
            }
            if (cfg.use_gpa) {
                const auto& gpa = is_a ? *model.gpa_a : *model.gpa_b;
                auto weighted = group_weight(group_pool(gpa, s_local, ex->mask),
                                             group_aggregate(gpa, model.prototypes, s_local,
                                                             ex->mask));
                accumulate(sum_all(weighted));
            }
        }
        backward(acc);
        report.stop_gradient_exact = true;
        for (const auto& entry : model.params.entries()) {
            if (module_of_parameter(entry.name) != "encoders") continue;
            for (double g : entry.value->grad)
                if (g != 0.0) report.stop_gradient_exact = false;
        }
    }
    return report;
}

}  // namespace man
