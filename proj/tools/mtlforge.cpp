#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "mtlforge/checkpoint.hpp"
#include "mtlforge/data.hpp"
#include "mtlforge/error.hpp"
#include "mtlforge/experiment.hpp"
#include "mtlforge/hpo.hpp"
#include "mtlforge/metrics.hpp"
#include "mtlforge/tokenizer.hpp"
#include "mtlforge/trainer.hpp"
#include "mtlforge/verify.hpp"

namespace fs = std::filesystem;
using namespace mtlforge;
using ordered_json = nlohmann::ordered_json;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitInput = 2;    // input/config errors
constexpr int kExitNumeric = 3;  // divergence, NaN, failed gradient gate

struct VocabArgs {
    std::string corpus, out;
    int max_size = 4000;
    int min_freq = 2;
};

struct TrainArgs {
    std::string config_path, out_dir;
    std::string mode, schedule;
    uint64_t seed = 0;
    double lambda = -1, lr = -1, dropout = -1;
    int batch_size = 0, max_epochs = 0, patience = -1;
    CLI::Option *opt_mode = nullptr, *opt_schedule = nullptr, *opt_seed = nullptr,
                *opt_lambda = nullptr, *opt_lr = nullptr, *opt_dropout = nullptr,
                *opt_batch = nullptr, *opt_epochs = nullptr, *opt_patience = nullptr,
                *opt_out = nullptr;
};

struct EvalArgs {
    std::string checkpoint, vocab, data, schema, task, out;
    int batch_size = 64;
};

struct CompareArgs {
    std::vector<std::string> stl_reports, mtl_reports;
    std::string out;
    bool pool = false;
};

struct SearchArgs {
    std::string config_path, ledger, out_dir;
    int budget = 25;
    uint64_t master_seed = 1;
};

struct GradcheckArgs {
    std::string preset = "tiny";
    int sample = 200;
    double h = 1e-5;
    uint64_t seed = 7;
    bool negative_control = false;
};

struct SynthArgs {
    std::string out_dir;
    int n = 1000;
    int vocab_words = 200;
    double correlation = 0.7;
    uint64_t seed = 1;
};

int cmd_vocab(const VocabArgs& args) {
    std::ifstream in(args.corpus, std::ios::binary);
    if (!in) throw ValueError("cannot open corpus file " + args.corpus);
    std::vector<std::string> corpus;
    std::string line;
    while (std::getline(in, line)) corpus.push_back(line);

    Vocabulary vocab = Vocabulary::build(corpus, args.max_size, args.min_freq);
    vocab.save(args.out);
    std::cout << "vocabulary: " << vocab.size() << " tokens -> " << args.out << "\n";
    return kExitOk;
}

ExperimentConfig load_with_overrides(const TrainArgs& args) {
    ExperimentConfig cfg = ExperimentConfig::load(args.config_path);
    if (args.opt_mode->count()) cfg.train.mode = train_mode_from_string(args.mode);
    if (args.opt_schedule->count()) cfg.train.schedule = schedule_from_string(args.schedule);
    if (args.opt_seed->count()) cfg.train.seed = args.seed;
    if (args.opt_lambda->count()) cfg.train.lambda = args.lambda;
    if (args.opt_lr->count()) cfg.train.learning_rate = args.lr;
    if (args.opt_dropout->count()) cfg.train.dropout_p = args.dropout;
    if (args.opt_batch->count()) cfg.train.batch_size = args.batch_size;
    if (args.opt_epochs->count()) cfg.train.max_epochs = args.max_epochs;
    if (args.opt_patience->count()) cfg.train.patience = args.patience;
    if (args.opt_out->count()) cfg.out_dir = args.out_dir;
    return cfg;
}

int cmd_train(const TrainArgs& args) {
    ExperimentConfig cfg = load_with_overrides(args);
    PreparedRun run = prepare_run(cfg);

    fs::create_directories(cfg.out_dir);
    TrainOutput out;
    if (cfg.train.mode == TrainMode::kStl) {
        out = train_stl(run.primary, cfg.train, cfg.encoder, run.vocab);
    } else {
        out = train_mtl(run.primary, *run.auxiliary, cfg.train, cfg.encoder, run.vocab);
    }

    const std::string ckpt_path = cfg.out_dir + "/checkpoint.ckpt";
    const std::string report_path = cfg.out_dir + "/report.json";
    save_checkpoint(out.checkpoint, ckpt_path);
    out.report.save(report_path);
    if (run.vocab_auto_built) run.vocab.save(cfg.out_dir + "/vocab.txt");
    {
        // Wall time lives outside the canonical report so reports stay
        // byte-identical across reruns of the same seed.
        std::ofstream timing(cfg.out_dir + "/timing.txt");
        timing << "wall_time_seconds=" << out.wall_time_s << "\n";
    }

    std::cout << "mode=" << out.report.mode << " seed=" << out.report.seed
              << " best_epoch=" << out.report.best_epoch << "/" << out.report.epochs_run;
    for (const auto& [role, f1] : out.report.test_macro_f1) {
        std::cout << " test_f1[" << role << "]=" << format_percent(f1);
    }
    std::cout << " wall=" << out.wall_time_s << "s\n";
    std::cout << "checkpoint: " << ckpt_path << "\nreport: " << report_path << "\n";
    return kExitOk;
}

int cmd_eval(const EvalArgs& args) {
    Vocabulary vocab = Vocabulary::load(args.vocab);
    Checkpoint ckpt = load_checkpoint(args.checkpoint, vocab.hash());
    const LabelSpace& schema = schema_by_name(args.schema);
    const std::string task = args.task.empty() ? schema.task_name : args.task;
    const TaskHead& head = ckpt.head_for(task);
    if (head.label_space.labels != schema.labels) {
        throw ValueError("schema '" + args.schema + "' does not match the labels of head '" +
                         task + "' in the checkpoint");
    }

    Dataset ds = load_dataset(args.data, schema);
    EvalResult res = evaluate_dataset(ckpt.encoder, head, vocab, ds, args.batch_size);
    auto per_class = per_class_scores(res.confusion);

    std::cout << "dataset: " << args.data << " (" << ds.size() << " examples)\n";
    std::cout << "macro_f1: " << format_percent(res.macro_f1) << "  mean_loss: " << res.mean_loss
              << "\n\nper-class:\n";
    for (size_t c = 0; c < per_class.size(); ++c) {
        const auto& s = per_class[c];
        std::printf("  %-26s P=%.4f R=%.4f F1=%.4f support=%lld\n", schema.labels[c].c_str(),
                    s.precision, s.recall, s.f1, s.support);
    }
    std::cout << "\nconfusion (rows=gold, cols=predicted):\n"
              << res.confusion.to_string(schema.labels);

    if (!args.out.empty()) {
        ordered_json j;
        j["dataset"] = args.data;
        j["schema"] = args.schema;
        j["task"] = task;
        j["examples"] = ds.size();
        j["macro_f1"] = res.macro_f1;
        j["mean_loss"] = res.mean_loss;
        ordered_json pc = ordered_json::array();
        for (size_t c = 0; c < per_class.size(); ++c) {
            ordered_json e;
            e["label"] = schema.labels[c];
            e["precision"] = per_class[c].precision;
            e["recall"] = per_class[c].recall;
            e["f1"] = per_class[c].f1;
            e["support"] = per_class[c].support;
            pc.push_back(e);
        }
        j["per_class"] = pc;
        ordered_json cm = ordered_json::array();
        for (int g = 0; g < res.confusion.num_classes(); ++g) {
            ordered_json row = ordered_json::array();
            for (int p = 0; p < res.confusion.num_classes(); ++p) row.push_back(res.confusion.at(g, p));
            cm.push_back(row);
        }
        j["confusion"] = cm;
        std::ofstream outf(args.out, std::ios::binary);
        if (!outf) throw ValueError("cannot write " + args.out);
        outf << j.dump(2) << "\n";
        std::cout << "metrics: " << args.out << "\n";
    }
    return kExitOk;
}

int cmd_compare(const CompareArgs& args) {
    if (args.stl_reports.empty() || args.mtl_reports.empty()) {
        throw ValueError("compare needs at least one --stl and one --mtl report");
    }
    // Group by experiment cell (dataset + encoder size).
    std::map<std::string, SeedRunSet> stl_cells, mtl_cells;
    for (const auto& path : args.stl_reports) {
        ReportSummary s = load_report_summary(path);
        if (s.mode != "stl") throw ValueError(path + ": expected an stl report, got " + s.mode);
        stl_cells[s.cell].runs.emplace_back(s.seed, s.primary_test_f1);
    }
    for (const auto& path : args.mtl_reports) {
        ReportSummary s = load_report_summary(path);
        if (s.mode != "mtl") throw ValueError(path + ": expected an mtl report, got " + s.mode);
        mtl_cells[s.cell].runs.emplace_back(s.seed, s.primary_test_f1);
    }
    if (stl_cells.size() != mtl_cells.size()) {
        throw ValueError("compare: stl and mtl reports cover different experiment cells");
    }

    std::vector<ComparisonReport> rows;
    for (const auto& [cell, stl_runs] : stl_cells) {
        auto it = mtl_cells.find(cell);
        if (it == mtl_cells.end()) {
            throw ValueError("compare: no mtl reports for cell " + cell);
        }
        rows.push_back(compare_systems(stl_runs, it->second, cell));
    }
    if (args.pool && rows.size() > 1) rows.push_back(pooled_comparison(rows));

    std::cout << comparison_table(rows);

    if (!args.out.empty()) {
        ordered_json j = ordered_json::array();
        for (const auto& r : rows) {
            ordered_json e;
            e["label"] = r.label;
            e["n_pairs"] = r.n_pairs;
            e["stl_mean"] = r.baseline_mean;
            e["stl_stddev"] = r.baseline_stddev;
            e["mtl_mean"] = r.candidate_mean;
            e["mtl_stddev"] = r.candidate_stddev;
            e["delta"] = r.delta;
            e["direction"] = r.direction;
            e["wilcoxon_w"] = r.wilcoxon.w;
            e["p_two_sided"] = r.wilcoxon.p_two_sided;
            e["min_attainable_p"] = r.min_attainable_p;
            e["method"] = r.wilcoxon.method;
            e["degenerate"] = r.wilcoxon.degenerate;
            e["significant_at_0.05"] = r.significant;
            j.push_back(e);
        }
        std::ofstream outf(args.out, std::ios::binary);
        if (!outf) throw ValueError("cannot write " + args.out);
        outf << j.dump(2) << "\n";
        std::cout << "comparison: " << args.out << "\n";
    }
    return kExitOk;
}

int cmd_search(const SearchArgs& args) {
    ExperimentConfig base = ExperimentConfig::load(args.config_path);
    base.validate();
    fs::create_directories(args.out_dir.empty() ? base.out_dir : args.out_dir);
    const std::string out_dir = args.out_dir.empty() ? base.out_dir : args.out_dir;
    const std::string ledger = args.ledger.empty() ? out_dir + "/trials.jsonl" : args.ledger;

    // One fixed training seed for every trial; matches run_search's internal
    // derivation so the data can be prepared once.
    uint64_t seed_state = args.master_seed;
    const uint64_t fixed_seed = splitmix64(seed_state);
    ExperimentConfig data_cfg = base;
    data_cfg.train.seed = fixed_seed;
    PreparedRun run = prepare_run(data_cfg);

    SearchSpace space;
    space.include_lambda = base.train.mode == TrainMode::kMtl;

    auto objective = [&](const TrainConfig& sampled) {
        TrainConfig cfg = sampled;
        cfg.max_epochs = base.train.max_epochs;
        cfg.patience = base.train.patience;
        cfg.schedule = base.train.schedule;
        cfg.grad_clip = base.train.grad_clip;
        TrainOutput out;
        if (cfg.mode == TrainMode::kStl) {
            out = train_stl(run.primary, cfg, base.encoder, run.vocab);
        } else {
            out = train_mtl(run.primary, *run.auxiliary, cfg, base.encoder, run.vocab);
        }
        return out.report.epochs[static_cast<size_t>(out.report.best_epoch - 1)]
            .val_macro_f1.at("primary");
    };

    SearchResult res = run_search(space, args.budget, objective, args.master_seed, ledger);

    std::cout << "trials: " << res.trials.size() << "  (ledger: " << ledger << ")\n";
    std::cout << "best trial " << res.best_trial << ": val_macro_f1="
              << format_percent(res.best_objective) << "\n";
    const TrainConfig& b = res.best_config;
    std::cout << "  batch_size=" << b.batch_size << " learning_rate=" << b.learning_rate
              << " dropout=" << b.dropout_p;
    if (space.include_lambda) std::cout << " lambda=" << b.lambda;
    std::cout << "\n";

    ordered_json j;
    j["best_trial"] = res.best_trial;
    j["best_objective"] = res.best_objective;
    j["batch_size"] = b.batch_size;
    j["learning_rate"] = b.learning_rate;
    j["dropout_p"] = b.dropout_p;
    j["lambda"] = b.lambda;
    j["mode"] = to_string(b.mode);
    std::ofstream outf(out_dir + "/best_config.json", std::ios::binary);
    outf << j.dump(2) << "\n";
    std::cout << "best config: " << out_dir << "/best_config.json\n";
    return kExitOk;
}

int cmd_gradcheck(const GradcheckArgs& args) {
    auto rep = run_encoder_gradcheck(args.preset, args.sample, args.h, args.seed,
                                     args.negative_control);
    std::cout << "gradcheck preset=" << args.preset << " coords=" << rep.coords_checked
              << " h=" << args.h << "\n";
    std::cout << "max relative error: " << rep.max_rel_error << "\n";
    if (rep.max_rel_error > 1e-4) {
        std::cout << "FAIL (threshold 1e-4)\n";
        return kExitNumeric;
    }
    std::cout << "PASS (threshold 1e-4)\n";
    return kExitOk;
}

int cmd_synth(const SynthArgs& args) {
    SynthPair pair = synth_generate(args.n, args.vocab_words, args.seed, args.correlation);
    fs::create_directories(args.out_dir);
    const std::string ppath = args.out_dir + "/primary.jsonl";
    const std::string apath = args.out_dir + "/auxiliary.jsonl";
    save_dataset(pair.primary, ppath);
    save_dataset(pair.auxiliary, apath);
    std::cout << "wrote " << pair.primary.size() << " examples to " << ppath << " and " << apath
              << " (correlation=" << args.correlation << ", seed=" << args.seed << ")\n";
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{
        "mtlforge - multitask text-classification training engine\n"
        "Shared transformer encoder with task-specific heads, trained single-task or\n"
        "jointly with an auxiliary task under L = lambda*l1 + (1-lambda)*l2.\n"
        "MTLFORGE_THREADS caps search worker threads (default 1)."};
    app.require_subcommand(1);

    VocabArgs vocab_args;
    auto* vocab_cmd = app.add_subcommand("vocab", "Build a subword vocabulary from a text corpus");
    vocab_cmd->add_option("--corpus", vocab_args.corpus, "Corpus file, one document per line")
        ->required();
    vocab_cmd->add_option("--out", vocab_args.out, "Output vocabulary file (one token per line)")
        ->required();
    vocab_cmd->add_option("--max-size", vocab_args.max_size,
                          "Vocabulary cap incl. 4 reserved + 256 byte tokens (>= 260)");
    vocab_cmd->add_option("--min-freq", vocab_args.min_freq,
                          "Minimum corpus frequency for learned tokens (>= 1)");

    TrainArgs train_args;
    auto* train_cmd = app.add_subcommand("train", "Train a model (single-task or multitask)");
    train_cmd->add_option("--config", train_args.config_path, "Experiment config file")->required();
    train_args.opt_mode = train_cmd->add_option("--mode", train_args.mode, "stl or mtl");
    train_args.opt_schedule = train_cmd->add_option(
        "--schedule", train_args.schedule,
        "Task schedule for mtl: proportional (default), primary-only or joint");
    train_args.opt_seed = train_cmd->add_option("--seed", train_args.seed,
                                                "Run seed (controls split, init, batching, dropout)");
    train_args.opt_lambda = train_cmd->add_option("--lambda", train_args.lambda,
                                                  "Primary loss weight, in [0,1]");
    train_args.opt_lr =
        train_cmd->add_option("--lr", train_args.lr, "Learning rate, in [1e-6, 1e-3]");
    train_args.opt_dropout =
        train_cmd->add_option("--dropout", train_args.dropout, "Dropout probability, in [0,1]");
    train_args.opt_batch = train_cmd->add_option("--batch-size", train_args.batch_size,
                                                 "Batch size, one of {32, 64, 128}");
    train_args.opt_epochs =
        train_cmd->add_option("--max-epochs", train_args.max_epochs, "Epoch cap (>= 1)");
    train_args.opt_patience = train_cmd->add_option(
        "--patience", train_args.patience, "Epochs without val improvement before stopping (0 stops after one epoch)");
    train_args.opt_out = train_cmd->add_option("--out", train_args.out_dir, "Output directory");

    EvalArgs eval_args;
    auto* eval_cmd = app.add_subcommand("eval", "Evaluate a checkpoint on a dataset file");
    eval_cmd->add_option("--checkpoint", eval_args.checkpoint, "Checkpoint file")->required();
    eval_cmd->add_option("--vocab", eval_args.vocab, "Vocabulary the checkpoint was trained with")
        ->required();
    eval_cmd->add_option("--data", eval_args.data, "Dataset file (JSONL)")->required();
    eval_cmd->add_option("--schema", eval_args.schema,
                         "Schema name: phm2017, hmc2019, self2020, ill2021, goemotions, "
                         "synth-health, synth-emotion")
        ->required();
    eval_cmd->add_option("--task", eval_args.task, "Head to evaluate (default: schema name)");
    eval_cmd->add_option("--batch-size", eval_args.batch_size, "Evaluation batch size");
    eval_cmd->add_option("--out", eval_args.out, "Write the metrics record to this JSON file");

    CompareArgs compare_args;
    auto* compare_cmd =
        app.add_subcommand("compare", "Seed-paired STL vs MTL comparison with Wilcoxon p-values");
    compare_cmd->add_option("--stl", compare_args.stl_reports, "STL run report files")
        ->required()
        ->expected(-1);
    compare_cmd->add_option("--mtl", compare_args.mtl_reports, "MTL run report files")
        ->required()
        ->expected(-1);
    compare_cmd->add_flag("--pool", compare_args.pool,
                          "Add a pooled row combining seed pairs across all cells");
    compare_cmd->add_option("--out", compare_args.out, "Write comparison records to this JSON file");

    SearchArgs search_args;
    auto* search_cmd = app.add_subcommand(
        "search",
        "Hyperparameter search (TPE) over batch size {32,64,128}, learning rate [1e-6,1e-3], "
        "dropout [0,1] and lambda [0,1] (mtl only), maximizing primary val macro-F1");
    search_cmd->add_option("--config", search_args.config_path, "Experiment config file")
        ->required();
    search_cmd->add_option("--budget", search_args.budget, "Number of trials (>= 1)");
    search_cmd->add_option("--ledger", search_args.ledger,
                           "Trial ledger (JSONL, append-only); resumes when it exists");
    search_cmd->add_option("--seed", search_args.master_seed, "Search seed");
    search_cmd->add_option("--out", search_args.out_dir, "Output directory override");

    GradcheckArgs gradcheck_args;
    auto* gradcheck_cmd = app.add_subcommand(
        "gradcheck", "Verify encoder+heads gradients against central finite differences");
    gradcheck_cmd->add_option("--preset", gradcheck_args.preset,
                              "Model preset: tiny (2 layers, d_model=64) or micro (1 layer)");
    gradcheck_cmd->add_option("--sample", gradcheck_args.sample,
                              "Number of parameter coordinates to probe");
    gradcheck_cmd->add_option("--step", gradcheck_args.h,
                              "Finite-difference step h, in [1e-7, 1e-3]");
    gradcheck_cmd->add_option("--seed", gradcheck_args.seed, "Seed for model and probe sampling");
    gradcheck_cmd->add_flag("--negative-control", gradcheck_args.negative_control,
                            "Corrupt one backward rule; the check must then fail");

    SynthArgs synth_args;
    auto* synth_cmd = app.add_subcommand(
        "synth", "Generate the synthetic correlated two-task dataset pair");
    synth_cmd->add_option("--out", synth_args.out_dir, "Output directory")->required();
    synth_cmd->add_option("--n", synth_args.n, "Number of examples per task (>= 20)");
    synth_cmd->add_option("--vocab-words", synth_args.vocab_words, "Filler vocabulary size");
    synth_cmd->add_option("--correlation", synth_args.correlation,
                          "P(auxiliary label = canonical emotion of the health class), in [0,1]");
    synth_cmd->add_option("--seed", synth_args.seed, "Generator seed");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kExitInput;
    }

    try {
        if (app.got_subcommand(vocab_cmd)) return cmd_vocab(vocab_args);
        if (app.got_subcommand(train_cmd)) return cmd_train(train_args);
        if (app.got_subcommand(eval_cmd)) return cmd_eval(eval_args);
        if (app.got_subcommand(compare_cmd)) return cmd_compare(compare_args);
        if (app.got_subcommand(search_cmd)) return cmd_search(search_args);
        if (app.got_subcommand(gradcheck_cmd)) return cmd_gradcheck(gradcheck_args);
        if (app.got_subcommand(synth_cmd)) return cmd_synth(synth_args);
    } catch (const NumericError& e) {
        std::cerr << "numeric error: " << e.what() << "\n";
        return kExitNumeric;
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitInput;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitInput;
    }
    return kExitOk;
}
