#include "mtlforge/experiment.hpp"

#include <fstream>
#include <set>

#include "mtlforge/checkpoint.hpp"
#include "mtlforge/error.hpp"

namespace mtlforge {

namespace {

std::string trim(const std::string& s) {
    size_t a = s.find_first_not_of(" \t\r\n");
    if (a == std::string::npos) return "";
    size_t b = s.find_last_not_of(" \t\r\n");
    return s.substr(a, b - a + 1);
}

long long parse_int_value(const std::string& key, const std::string& value) {
    try {
        size_t pos = 0;
        long long v = std::stoll(value, &pos);
        if (pos != value.size()) throw std::invalid_argument("");
        return v;
    } catch (const std::exception&) {
        throw ConfigError("config key '" + key + "': not an integer: '" + value + "'");
    }
}

double parse_float_value(const std::string& key, const std::string& value) {
    try {
        return parse_double(value);
    } catch (const ParseError&) {
        throw ConfigError("config key '" + key + "': not a number: '" + value + "'");
    }
}

}  // namespace

ExperimentConfig ExperimentConfig::load(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ValueError("config: cannot open " + path);

    ExperimentConfig cfg;
    std::string section;
    std::string line;
    long long line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        std::string t = trim(line);
        if (t.empty() || t[0] == '#' || t[0] == ';') continue;
        if (t.front() == '[' && t.back() == ']') {
            section = trim(t.substr(1, t.size() - 2));
            static const std::set<std::string> known = {"data", "encoder", "train", "split",
                                                        "output"};
            if (!known.count(section)) {
                throw ConfigError("config line " + std::to_string(line_no) +
                                  ": unknown section [" + section + "]");
            }
            continue;
        }
        size_t eq = t.find('=');
        if (eq == std::string::npos) {
            throw ConfigError("config line " + std::to_string(line_no) +
                              ": expected key=value, got '" + t + "'");
        }
        const std::string key = trim(t.substr(0, eq));
        const std::string value = trim(t.substr(eq + 1));
        const std::string full = section + "." + key;

        if (full == "data.primary") cfg.primary_path = value;
        else if (full == "data.primary_schema") cfg.primary_schema = value;
        else if (full == "data.auxiliary") cfg.auxiliary_path = value;
        else if (full == "data.auxiliary_schema") cfg.auxiliary_schema = value;
        else if (full == "data.auxiliary_train") cfg.auxiliary_train_path = value;
        else if (full == "data.auxiliary_val") cfg.auxiliary_val_path = value;
        else if (full == "data.auxiliary_test") cfg.auxiliary_test_path = value;
        else if (full == "data.vocab") cfg.vocab_path = value;
        else if (full == "data.vocab_max_size") cfg.vocab_max_size = static_cast<int>(parse_int_value(full, value));
        else if (full == "data.vocab_min_freq") cfg.vocab_min_freq = static_cast<int>(parse_int_value(full, value));
        else if (full == "encoder.n_layers") cfg.encoder.n_layers = static_cast<int>(parse_int_value(full, value));
        else if (full == "encoder.d_model") cfg.encoder.d_model = static_cast<int>(parse_int_value(full, value));
        else if (full == "encoder.n_heads") cfg.encoder.n_heads = static_cast<int>(parse_int_value(full, value));
        else if (full == "encoder.d_ff") cfg.encoder.d_ff = static_cast<int>(parse_int_value(full, value));
        else if (full == "encoder.max_len") cfg.encoder.max_len = static_cast<int>(parse_int_value(full, value));
        else if (full == "train.batch_size") cfg.train.batch_size = static_cast<int>(parse_int_value(full, value));
        else if (full == "train.learning_rate") cfg.train.learning_rate = parse_float_value(full, value);
        else if (full == "train.dropout") cfg.train.dropout_p = parse_float_value(full, value);
        else if (full == "train.lambda") cfg.train.lambda = parse_float_value(full, value);
        else if (full == "train.max_epochs") cfg.train.max_epochs = static_cast<int>(parse_int_value(full, value));
        else if (full == "train.patience") cfg.train.patience = static_cast<int>(parse_int_value(full, value));
        else if (full == "train.seed") cfg.train.seed = static_cast<uint64_t>(parse_int_value(full, value));
        else if (full == "train.mode") cfg.train.mode = train_mode_from_string(value);
        else if (full == "train.schedule") cfg.train.schedule = schedule_from_string(value);
        else if (full == "train.grad_clip") cfg.train.grad_clip = parse_float_value(full, value);
        else if (full == "split.train_frac") cfg.train_frac = parse_float_value(full, value);
        else if (full == "split.val_frac") cfg.val_frac = parse_float_value(full, value);
        else if (full == "split.seed") cfg.split_seed = static_cast<uint64_t>(parse_int_value(full, value));
        else if (full == "output.dir") cfg.out_dir = value;
        else {
            throw ConfigError("config line " + std::to_string(line_no) + ": unknown key '" +
                              full + "'");
        }
    }
    return cfg;
}

void ExperimentConfig::validate() const {
    if (primary_path.empty()) throw ConfigError("config: data.primary is required");
    if (primary_schema.empty()) throw ConfigError("config: data.primary_schema is required");
    schema_by_name(primary_schema);
    if (train.mode == TrainMode::kMtl) {
        const bool pooled = !auxiliary_path.empty();
        const bool official = !auxiliary_train_path.empty() || !auxiliary_val_path.empty() ||
                              !auxiliary_test_path.empty();
        if (pooled == official) {
            throw ConfigError("config: mtl mode needs either data.auxiliary or the "
                              "data.auxiliary_train/val/test triple (not both)");
        }
        if (official && (auxiliary_train_path.empty() || auxiliary_val_path.empty() ||
                         auxiliary_test_path.empty())) {
            throw ConfigError("config: official auxiliary splits need all three paths");
        }
        if (auxiliary_schema.empty()) throw ConfigError("config: data.auxiliary_schema is required");
        schema_by_name(auxiliary_schema);
    }
    if (vocab_max_size < 260) throw ConfigError("config: vocab_max_size must be >= 260");
    if (vocab_min_freq < 1) throw ConfigError("config: vocab_min_freq must be >= 1");
    encoder.validate();
    train.validate();
    if (train_frac < 0 || val_frac < 0 || train_frac + val_frac > 1.0) {
        throw ConfigError("config: split fractions must be non-negative and sum to at most 1");
    }
}

PreparedRun prepare_run(const ExperimentConfig& cfg) {
    cfg.validate();
    PreparedRun run;

    const uint64_t split_seed = cfg.split_seed.value_or(cfg.train.seed);
    {
        Dataset pool = load_dataset(cfg.primary_path, schema_by_name(cfg.primary_schema));
        run.primary = split(pool, SplitSpec{cfg.train_frac, cfg.val_frac, split_seed});
    }

    if (cfg.train.mode == TrainMode::kMtl) {
        if (!cfg.auxiliary_train_path.empty()) {
            if (cfg.auxiliary_schema == "goemotions") {
                run.auxiliary = goemotions_splits(cfg.auxiliary_train_path, cfg.auxiliary_val_path,
                                                  cfg.auxiliary_test_path);
            } else {
                const LabelSpace& schema = schema_by_name(cfg.auxiliary_schema);
                DatasetSplits aux;
                aux.train = load_dataset(cfg.auxiliary_train_path, schema);
                aux.val = load_dataset(cfg.auxiliary_val_path, schema);
                aux.test = load_dataset(cfg.auxiliary_test_path, schema);
                run.auxiliary = std::move(aux);
            }
        } else {
            Dataset pool = load_dataset(cfg.auxiliary_path, schema_by_name(cfg.auxiliary_schema));
            run.auxiliary = split(pool, SplitSpec{cfg.train_frac, cfg.val_frac, split_seed});
        }
    }

    if (!cfg.vocab_path.empty()) {
        run.vocab = Vocabulary::load(cfg.vocab_path);
    } else {
        // Auto-built from the primary train split only, so STL and MTL runs
        // of the same seed share one vocabulary.
        std::vector<std::string> corpus;
        corpus.reserve(run.primary.train.size());
        for (const auto& ex : run.primary.train.examples) corpus.push_back(ex.text);
        run.vocab = Vocabulary::build(corpus, cfg.vocab_max_size, cfg.vocab_min_freq);
        run.vocab_auto_built = true;
    }
    return run;
}

}  // namespace mtlforge
