#include "mtlforge/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <numeric>

#include <json.hpp>

#include "mtlforge/error.hpp"

namespace mtlforge {

namespace {

using ordered_json = nlohmann::ordered_json;

struct Batch {
    std::vector<size_t> indices;
};

std::vector<Batch> make_batches(size_t n, int batch_size, Rng& rng) {
    std::vector<size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    rng.shuffle(order);
    std::vector<Batch> batches;
    for (size_t start = 0; start < n; start += static_cast<size_t>(batch_size)) {
        Batch b;
        const size_t end = std::min(n, start + static_cast<size_t>(batch_size));
        b.indices.assign(order.begin() + static_cast<long>(start),
                         order.begin() + static_cast<long>(end));
        batches.push_back(std::move(b));
    }
    return batches;
}

// Pre-tokenized view of one task's splits plus its head and step counter.
struct TaskRuntime {
    std::string role;  // "primary" or "auxiliary"
    const DatasetSplits* splits = nullptr;
    TaskHead head;
    std::vector<TokenSequence> train_seqs, val_seqs, test_seqs;
    std::vector<int> train_targets, val_targets, test_targets;
    long long step_count = 0;
    double epoch_loss_sum = 0.0;
    long long epoch_loss_batches = 0;
};

void tokenize_split(const Vocabulary& vocab, const Dataset& ds, int max_len,
                    std::vector<TokenSequence>& seqs, std::vector<int>& targets) {
    seqs.clear();
    targets.clear();
    seqs.reserve(ds.size());
    targets.reserve(ds.size());
    for (const auto& ex : ds.examples) {
        seqs.push_back(encode(vocab, ex.text, max_len));
        const int idx = ds.label_space.index_of(ex.label);
        if (idx < 0) throw ValueError("example '" + ex.id + "' has label outside the schema");
        targets.push_back(idx);
    }
}

std::vector<TensorPtr> collect_params(const EncoderParams& enc,
                                      const std::vector<TaskHead*>& heads) {
    std::vector<TensorPtr> out = enc.tensors();
    for (const TaskHead* h : heads) {
        for (auto& t : h->tensors()) out.push_back(t);
    }
    return out;
}

void zero_grads(const std::vector<TensorPtr>& params) {
    for (const auto& p : params) {
        p->ensure_grad();
        p->zero_grad();
    }
}

std::vector<std::vector<double>> snapshot(const std::vector<TensorPtr>& params) {
    std::vector<std::vector<double>> out;
    out.reserve(params.size());
    for (const auto& p : params) out.push_back(p->data);
    return out;
}

void restore(const std::vector<TensorPtr>& params, const std::vector<std::vector<double>>& snap) {
    for (size_t i = 0; i < params.size(); ++i) params[i]->data = snap[i];
}

ordered_json encoder_to_json(const EncoderConfig& c) {
    ordered_json j;
    j["n_layers"] = c.n_layers;
    j["d_model"] = c.d_model;
    j["n_heads"] = c.n_heads;
    j["d_ff"] = c.d_ff;
    j["max_len"] = c.max_len;
    j["vocab_size"] = c.vocab_size;
    j["dropout_p"] = c.dropout_p;
    return j;
}

ordered_json train_config_to_json(const TrainConfig& c) {
    ordered_json j;
    j["batch_size"] = c.batch_size;
    j["learning_rate"] = c.learning_rate;
    j["dropout_p"] = c.dropout_p;
    j["lambda"] = c.lambda;
    j["max_epochs"] = c.max_epochs;
    j["patience"] = c.patience;
    j["seed"] = c.seed;
    j["mode"] = to_string(c.mode);
    j["schedule"] = to_string(c.schedule);
    j["grad_clip"] = c.grad_clip;
    return j;
}

}  // namespace

std::string to_string(TrainMode m) { return m == TrainMode::kStl ? "stl" : "mtl"; }

std::string to_string(ScheduleMode s) {
    switch (s) {
        case ScheduleMode::kProportional: return "proportional";
        case ScheduleMode::kPrimaryOnly: return "primary-only";
        case ScheduleMode::kJoint: return "joint";
    }
    return "?";
}

TrainMode train_mode_from_string(const std::string& s) {
    if (s == "stl") return TrainMode::kStl;
    if (s == "mtl") return TrainMode::kMtl;
    throw ConfigError("unknown mode '" + s + "' (expected stl or mtl)");
}

ScheduleMode schedule_from_string(const std::string& s) {
    if (s == "proportional") return ScheduleMode::kProportional;
    if (s == "primary-only") return ScheduleMode::kPrimaryOnly;
    if (s == "joint") return ScheduleMode::kJoint;
    throw ConfigError("unknown schedule '" + s + "' (expected proportional, primary-only or joint)");
}

void TrainConfig::validate() const {
    if (batch_size != 32 && batch_size != 64 && batch_size != 128) {
        throw ConfigError("batch_size must be one of {32, 64, 128}, got " +
                          std::to_string(batch_size));
    }
    if (learning_rate < 1e-6 || learning_rate > 1e-3) {
        throw ConfigError("learning_rate must lie in [1e-6, 1e-3]");
    }
    if (dropout_p < 0.0 || dropout_p > 1.0) throw ConfigError("dropout_p must lie in [0,1]");
    if (lambda < 0.0 || lambda > 1.0) throw ConfigError("lambda must lie in [0,1]");
    if (max_epochs < 1) throw ConfigError("max_epochs must be >= 1");
    if (patience < 0) throw ConfigError("patience must be >= 0");
}

AdamState::AdamState(double beta1, double beta2, double eps)
    : beta1_(beta1), beta2_(beta2), eps_(eps) {}

void AdamState::step(const std::vector<TensorPtr>& params, double lr) {
    if (lr <= 0.0) throw ConfigError("adam: learning rate must be positive");
    for (const auto& p : params) {
        p->ensure_grad();
        for (double g : p->grad) {
            if (!std::isfinite(g)) {
                throw NumericError("adam: non-finite gradient in tensor '" +
                                   (p->name.empty() ? std::string("<unnamed>") : p->name) + "'");
            }
        }
        Slot& slot = slots_[p.get()];
        if (slot.m.empty()) {
            slot.m.assign(p->data.size(), 0.0);
            slot.v.assign(p->data.size(), 0.0);
        }
        ++slot.t;
        const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(slot.t));
        const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(slot.t));
        for (size_t i = 0; i < p->data.size(); ++i) {
            const double g = p->grad[i];
            slot.m[i] = beta1_ * slot.m[i] + (1.0 - beta1_) * g;
            slot.v[i] = beta2_ * slot.v[i] + (1.0 - beta2_) * g * g;
            const double mhat = slot.m[i] / bc1;
            const double vhat = slot.v[i] / bc2;
            p->data[i] -= lr * mhat / (std::sqrt(vhat) + eps_);
        }
    }
}

double clip_global_norm(const std::vector<TensorPtr>& params, double max_norm) {
    double sq = 0.0;
    for (const auto& p : params) {
        for (double g : p->grad) sq += g * g;
    }
    const double norm = std::sqrt(sq);
    if (max_norm > 0.0 && norm > max_norm) {
        const double s = max_norm / norm;
        for (const auto& p : params) {
            for (double& g : p->grad) g *= s;
        }
    }
    return norm;
}

std::string RunReport::cell() const {
    return primary_dataset + "@L" + std::to_string(encoder.n_layers) + "d" +
           std::to_string(encoder.d_model);
}

std::string RunReport::to_json_string() const {
    ordered_json j;
    j["format"] = "mtlforge-report-1";
    j["mode"] = mode;
    j["schedule"] = schedule;
    j["seed"] = seed;
    j["rng"] = rng_version;
    j["cell"] = cell();
    j["encoder"] = encoder_to_json(encoder);
    j["train_config"] = train_config_to_json(config);
    j["primary_dataset"] = primary_dataset;
    j["auxiliary_dataset"] = auxiliary_dataset;
    {
        ordered_json sizes;
        for (const auto& [role, parts] : split_sizes) {
            sizes[role] = {parts[0], parts[1], parts[2]};
        }
        j["split_sizes"] = sizes;
    }
    j["decisions"] = decisions;
    {
        ordered_json eps = ordered_json::array();
        for (const auto& e : epochs) {
            ordered_json ej;
            ej["epoch"] = e.epoch;
            ej["train_loss"] = e.train_loss;
            ej["val_loss"] = e.val_loss;
            ej["val_macro_f1"] = e.val_macro_f1;
            eps.push_back(ej);
        }
        j["epochs"] = eps;
    }
    j["best_epoch"] = best_epoch;
    j["epochs_run"] = epochs_run;
    j["test_macro_f1"] = test_macro_f1;
    j["steps"] = steps;
    j["grad_clip_events"] = grad_clip_events;
    {
        char buf[32];
        std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(vocab_hash));
        j["vocab_hash"] = buf;
    }
    return j.dump(2) + "\n";
}

void RunReport::save(const std::string& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ValueError("RunReport::save: cannot write " + path);
    out << to_json_string();
}

ReportSummary load_report_summary(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ValueError("load_report_summary: cannot open " + path);
    ordered_json j;
    try {
        in >> j;
    } catch (const std::exception& e) {
        throw ParseError("load_report_summary: " + path + ": " + e.what());
    }
    if (!j.contains("format") || j["format"] != "mtlforge-report-1") {
        throw ParseError("load_report_summary: " + path + " is not a run report");
    }
    ReportSummary s;
    s.mode = j["mode"].get<std::string>();
    s.cell = j["cell"].get<std::string>();
    s.seed = j["seed"].get<uint64_t>();
    s.primary_test_f1 = j["test_macro_f1"]["primary"].get<double>();
    return s;
}

EvalResult evaluate_split(const EncoderParams& params, const TaskHead& head,
                          const std::vector<TokenSequence>& seqs,
                          const std::vector<int>& targets, int batch_size) {
    if (seqs.empty()) throw ValueError("evaluate_split: empty split");
    EvalResult res{ConfusionMatrix(head.label_space.num_classes()), 0.0, 0.0};
    double loss_sum = 0.0;
    for (size_t start = 0; start < seqs.size(); start += static_cast<size_t>(batch_size)) {
        const size_t end = std::min(seqs.size(), start + static_cast<size_t>(batch_size));
        std::vector<TokenSequence> batch(seqs.begin() + static_cast<long>(start),
                                         seqs.begin() + static_cast<long>(end));
        std::vector<int> batch_targets(targets.begin() + static_cast<long>(start),
                                       targets.begin() + static_cast<long>(end));
        auto h = encode_batch(nullptr, params, batch, /*train_mode=*/false);
        auto pooled = pool_cls(nullptr, h);
        auto logits = head_forward(nullptr, head, pooled);
        auto loss = cross_entropy(nullptr, logits, batch_targets);
        loss_sum += loss->data[0] * static_cast<double>(batch.size());

        const int k = logits->cols();
        for (size_t i = 0; i < batch.size(); ++i) {
            const double* row = logits->data.data() + i * static_cast<size_t>(k);
            int best = 0;
            for (int j = 1; j < k; ++j)
                if (row[j] > row[best]) best = j;
            res.confusion.add(batch_targets[i], best);
        }
    }
    res.mean_loss = loss_sum / static_cast<double>(seqs.size());
    res.macro_f1 = macro_f1(res.confusion);
    return res;
}

EvalResult evaluate_dataset(const EncoderParams& params, const TaskHead& head,
                            const Vocabulary& vocab, const Dataset& ds, int batch_size) {
    std::vector<TokenSequence> seqs;
    std::vector<int> targets;
    tokenize_split(vocab, ds, params.config.max_len, seqs, targets);
    return evaluate_split(params, head, seqs, targets, batch_size);
}

namespace {

// Shared STL/MTL loop. `tasks[0]` is the primary task; a second entry, when
// present and scheduled, is the auxiliary one.
TrainOutput run_training(std::vector<TaskRuntime>& tasks, const TrainConfig& cfg,
                         const EncoderConfig& enc_cfg_in, const Vocabulary& vocab) {
    const auto t_start = std::chrono::steady_clock::now();
    cfg.validate();

    EncoderConfig enc_cfg = enc_cfg_in;
    enc_cfg.dropout_p = cfg.dropout_p;
    enc_cfg.vocab_size = vocab.size();
    enc_cfg.validate();
    if (cfg.mode == TrainMode::kStl && tasks.size() != 1) {
        throw ContractError("train: STL mode takes exactly one task");
    }

    for (auto& task : tasks) {
        if (task.splits->train.examples.empty()) {
            throw ValueError("train: empty training split for task '" + task.splits->train.name + "'");
        }
        // The primary task drives model selection, so only it needs a
        // validation split; an auxiliary task without one just goes
        // unreported per epoch.
        if (task.role == "primary" && task.splits->val.examples.empty()) {
            throw ValueError("train: empty validation split for task '" + task.splits->val.name + "'");
        }
        tokenize_split(vocab, task.splits->train, enc_cfg.max_len, task.train_seqs,
                       task.train_targets);
        tokenize_split(vocab, task.splits->val, enc_cfg.max_len, task.val_seqs, task.val_targets);
        if (!task.splits->test.examples.empty()) {
            tokenize_split(vocab, task.splits->test, enc_cfg.max_len, task.test_seqs,
                           task.test_targets);
        }
        task.head = init_head(enc_cfg.d_model, task.splits->train.label_space, cfg.seed);
    }

    EncoderParams params = init_params(enc_cfg, cfg.seed);
    AdamState adam;

    std::vector<TaskHead*> all_heads;
    for (auto& t : tasks) all_heads.push_back(&t.head);
    const std::vector<TensorPtr> all_params = collect_params(params, all_heads);

    RunReport report;
    report.mode = to_string(cfg.mode);
    report.schedule = cfg.mode == TrainMode::kStl ? "sequential" : to_string(cfg.schedule);
    report.seed = cfg.seed;
    report.rng_version = kRngVersion;
    report.encoder = enc_cfg;
    report.config = cfg;
    report.vocab_hash = vocab.hash();
    report.primary_dataset = tasks[0].splits->train.label_space.task_name;
    if (tasks.size() > 1) {
        report.auxiliary_dataset = tasks[1].splits->train.label_space.task_name;
    }
    for (const auto& task : tasks) {
        report.split_sizes[task.role] = {task.splits->train.size(), task.splits->val.size(),
                                         task.splits->test.size()};
    }
    report.decisions["loss_reduction"] = "batch_mean";
    report.decisions["lambda_role"] = "weight_on_primary_loss";
    report.decisions["scheduling"] =
        cfg.mode == TrainMode::kStl ? "sequential" : to_string(cfg.schedule) + " (aux capped at 3x primary steps)";
    report.decisions["grad_clip"] = format_double(cfg.grad_clip);
    report.decisions["preprocessing"] = "whitespace-split only, no dedup";
    report.decisions["pooling"] = "raw h_cls, no extra pooler layer";
    report.decisions["optimizer"] = "adam b1=0.9 b2=0.999 eps=1e-8, fixed lr";

    double best_val = -1.0;
    int best_epoch = 0;
    std::vector<std::vector<double>> best_snap = snapshot(all_params);
    int wait = 0;

    for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
        // Per-task batch order for this epoch.
        std::vector<std::vector<Batch>> task_batches;
        for (auto& task : tasks) {
            Rng order_rng = Rng::stream(cfg.seed, "train/order/" + task.role + "/epoch/" +
                                                      std::to_string(epoch));
            task_batches.push_back(
                make_batches(task.train_seqs.size(), cfg.batch_size, order_rng));
            task.epoch_loss_sum = 0.0;
            task.epoch_loss_batches = 0;
        }

        // Step schedule: which task trains on each optimization step.
        std::vector<int> schedule;
        const bool joint = cfg.mode == TrainMode::kMtl && cfg.schedule == ScheduleMode::kJoint;
        if (cfg.mode == TrainMode::kStl || cfg.schedule == ScheduleMode::kPrimaryOnly || joint) {
            schedule.assign(task_batches[0].size(), 0);
        } else {
            const size_t primary_steps = task_batches[0].size();
            const size_t aux_steps = std::min(task_batches[1].size(), 3 * primary_steps);
            schedule.assign(primary_steps, 0);
            schedule.insert(schedule.end(), aux_steps, 1);
            Rng sched_rng =
                Rng::stream(cfg.seed, "train/schedule/epoch/" + std::to_string(epoch));
            sched_rng.shuffle(schedule);
        }

        std::vector<size_t> batch_cursor(tasks.size(), 0);
        for (int scheduled_task : schedule) {
            Tape tape;
            if (joint) {
                // One batch of each task, single backward on the combined loss.
                Rng step_rng = Rng::stream(cfg.seed, "train/dropout/joint/step/" +
                                                         std::to_string(tasks[0].step_count));
                std::vector<TensorPtr> losses;
                for (size_t ti = 0; ti < tasks.size(); ++ti) {
                    auto& task = tasks[ti];
                    const auto& batches = task_batches[ti];
                    const Batch& b = batches[batch_cursor[ti] % batches.size()];
                    ++batch_cursor[ti];
                    std::vector<TokenSequence> seqs;
                    std::vector<int> targets;
                    for (size_t idx : b.indices) {
                        seqs.push_back(task.train_seqs[idx]);
                        targets.push_back(task.train_targets[idx]);
                    }
                    auto h = encode_batch(&tape, params, seqs, true, &step_rng);
                    auto pooled = dropout(&tape, pool_cls(&tape, h), cfg.dropout_p, step_rng);
                    auto loss = cross_entropy(&tape, head_forward(&tape, task.head, pooled), targets);
                    task.epoch_loss_sum += loss->data[0];
                    ++task.epoch_loss_batches;
                    losses.push_back(loss);
                }
                auto total = combined_loss(&tape, losses[0], losses[1], cfg.lambda);
                if (!std::isfinite(total->data[0])) {
                    throw NumericError("train: loss diverged at joint step " +
                                       std::to_string(tasks[0].step_count));
                }
                zero_grads(all_params);
                tape.backward(total);
                if (clip_global_norm(all_params, cfg.grad_clip) > cfg.grad_clip &&
                    cfg.grad_clip > 0) {
                    ++report.grad_clip_events;
                }
                adam.step(all_params, cfg.learning_rate);
                for (auto& task : tasks) ++task.step_count;
                continue;
            }

            auto& task = tasks[static_cast<size_t>(scheduled_task)];
            const Batch& b = task_batches[static_cast<size_t>(scheduled_task)]
                                         [batch_cursor[static_cast<size_t>(scheduled_task)]];
            ++batch_cursor[static_cast<size_t>(scheduled_task)];

            Rng step_rng = Rng::stream(cfg.seed, "train/dropout/" + task.role + "/step/" +
                                                     std::to_string(task.step_count));
            std::vector<TokenSequence> seqs;
            std::vector<int> targets;
            for (size_t idx : b.indices) {
                seqs.push_back(task.train_seqs[idx]);
                targets.push_back(task.train_targets[idx]);
            }
            auto h = encode_batch(&tape, params, seqs, true, &step_rng);
            auto pooled = dropout(&tape, pool_cls(&tape, h), cfg.dropout_p, step_rng);
            auto raw_loss = cross_entropy(&tape, head_forward(&tape, task.head, pooled), targets);
            task.epoch_loss_sum += raw_loss->data[0];
            ++task.epoch_loss_batches;

            // Per-step term of the joint objective: lambda*l1 for a primary
            // batch, (1-lambda)*l2 for an auxiliary one. STL keeps the raw
            // loss so STL and lambda=1 MTL share the exact float path.
            TensorPtr loss = raw_loss;
            if (cfg.mode == TrainMode::kMtl) {
                loss = scale(&tape, raw_loss,
                             task.role == "primary" ? cfg.lambda : 1.0 - cfg.lambda);
            }
            if (!std::isfinite(loss->data[0])) {
                throw NumericError("train: loss diverged on task '" + task.role + "' step " +
                                   std::to_string(task.step_count));
            }

            std::vector<TensorPtr> stepped = collect_params(params, {&task.head});
            zero_grads(stepped);
            tape.backward(loss);
            if (clip_global_norm(stepped, cfg.grad_clip) > cfg.grad_clip && cfg.grad_clip > 0) {
                ++report.grad_clip_events;
            }
            adam.step(stepped, cfg.learning_rate);
            ++task.step_count;
        }

        EpochStats stats;
        stats.epoch = epoch;
        for (auto& task : tasks) {
            stats.train_loss[task.role] =
                task.epoch_loss_batches > 0
                    ? task.epoch_loss_sum / static_cast<double>(task.epoch_loss_batches)
                    : 0.0;
            if (task.val_seqs.empty()) continue;
            auto val = evaluate_split(params, task.head, task.val_seqs, task.val_targets,
                                      cfg.batch_size);
            stats.val_loss[task.role] = val.mean_loss;
            stats.val_macro_f1[task.role] = val.macro_f1;
        }
        report.epochs.push_back(stats);
        report.epochs_run = epoch;

        const double primary_val = stats.val_macro_f1.at("primary");
        if (primary_val > best_val) {
            best_val = primary_val;
            best_epoch = epoch;
            best_snap = snapshot(all_params);
            wait = 0;
        } else {
            ++wait;
        }
        if (wait >= cfg.patience) break;
    }

    restore(all_params, best_snap);
    report.best_epoch = best_epoch;
    for (auto& task : tasks) {
        report.steps[task.role] = task.step_count;
        if (!task.test_seqs.empty()) {
            auto test = evaluate_split(params, task.head, task.test_seqs, task.test_targets,
                                       cfg.batch_size);
            report.test_macro_f1[task.role] = test.macro_f1;
        }
    }

    TrainOutput out;
    out.checkpoint.encoder = std::move(params);
    for (auto& task : tasks) out.checkpoint.heads.push_back(task.head);
    out.checkpoint.vocab_hash = vocab.hash();
    out.checkpoint.seed = cfg.seed;
    out.report = std::move(report);
    out.wall_time_s =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
    return out;
}

}  // namespace

TrainOutput train_stl(const DatasetSplits& task, const TrainConfig& cfg,
                      const EncoderConfig& enc_cfg, const Vocabulary& vocab) {
    if (cfg.mode != TrainMode::kStl) throw ContractError("train_stl: cfg.mode must be stl");
    std::vector<TaskRuntime> tasks(1);
    tasks[0].role = "primary";
    tasks[0].splits = &task;
    return run_training(tasks, cfg, enc_cfg, vocab);
}

TrainOutput train_mtl(const DatasetSplits& primary, const DatasetSplits& auxiliary,
                      const TrainConfig& cfg, const EncoderConfig& enc_cfg,
                      const Vocabulary& vocab) {
    if (cfg.mode != TrainMode::kMtl) throw ContractError("train_mtl: cfg.mode must be mtl");
    std::vector<TaskRuntime> tasks;
    tasks.emplace_back();
    tasks.back().role = "primary";
    tasks.back().splits = &primary;
    if (cfg.schedule != ScheduleMode::kPrimaryOnly) {
        // Under a primary-only schedule the auxiliary task gets zero steps,
        // so its head is never materialized and the checkpoint matches STL
        // byte for byte.
        tasks.emplace_back();
        tasks.back().role = "auxiliary";
        tasks.back().splits = &auxiliary;
    }
    return run_training(tasks, cfg, enc_cfg, vocab);
}

}  // namespace mtlforge
