#include "mtlforge/checkpoint.hpp"

#include <algorithm>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>

#include "mtlforge/error.hpp"

namespace mtlforge {

namespace {

constexpr const char* kMagic = "mtlforge-checkpoint";

void write_le_doubles(std::ostream& out, const std::vector<double>& values) {
    for (double v : values) {
        uint64_t bits;
        std::memcpy(&bits, &v, sizeof(bits));
        unsigned char bytes[8];
        for (int i = 0; i < 8; ++i) bytes[i] = static_cast<unsigned char>((bits >> (8 * i)) & 0xff);
        out.write(reinterpret_cast<const char*>(bytes), 8);
    }
}

void read_le_doubles(std::istream& in, std::vector<double>& values) {
    for (double& v : values) {
        unsigned char bytes[8];
        in.read(reinterpret_cast<char*>(bytes), 8);
        if (!in) throw ParseError("checkpoint: blob truncated");
        uint64_t bits = 0;
        for (int i = 0; i < 8; ++i) bits |= static_cast<uint64_t>(bytes[i]) << (8 * i);
        std::memcpy(&v, &bits, sizeof(v));
    }
}

std::vector<std::pair<std::string, TensorPtr>> all_named(const Checkpoint& ckpt) {
    auto named = ckpt.encoder.named();
    for (const auto& head : ckpt.heads) {
        for (auto& nv : head.named()) named.push_back(nv);
    }
    std::sort(named.begin(), named.end(),
              [](const auto& a, const auto& b) { return a.first < b.first; });
    return named;
}

}  // namespace

std::string format_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

double parse_double(const std::string& s) {
    try {
        size_t pos = 0;
        double v = std::stod(s, &pos);
        if (pos != s.size()) throw ParseError("trailing characters in number '" + s + "'");
        return v;
    } catch (const std::invalid_argument&) {
        throw ParseError("not a number: '" + s + "'");
    }
}

const TaskHead& Checkpoint::head_for(const std::string& task_name) const {
    for (const auto& h : heads) {
        if (h.label_space.task_name == task_name) return h;
    }
    throw ValueError("checkpoint has no head for task '" + task_name + "'");
}

void save_checkpoint(const Checkpoint& ckpt, const std::string& path) {
    for (const auto& head : ckpt.heads) {
        for (const auto& label : head.label_space.labels) {
            if (label.find(',') != std::string::npos) {
                throw ValueError("checkpoint: label '" + label + "' must not contain a comma");
            }
        }
    }

    std::map<std::string, std::string> manifest;
    manifest["format_version"] = std::to_string(kCheckpointVersion);
    manifest["encoder.n_layers"] = std::to_string(ckpt.encoder.config.n_layers);
    manifest["encoder.d_model"] = std::to_string(ckpt.encoder.config.d_model);
    manifest["encoder.n_heads"] = std::to_string(ckpt.encoder.config.n_heads);
    manifest["encoder.d_ff"] = std::to_string(ckpt.encoder.config.d_ff);
    manifest["encoder.max_len"] = std::to_string(ckpt.encoder.config.max_len);
    manifest["encoder.vocab_size"] = std::to_string(ckpt.encoder.config.vocab_size);
    manifest["encoder.dropout_p"] = format_double(ckpt.encoder.config.dropout_p);
    {
        char buf[32];
        std::snprintf(buf, sizeof(buf), "%016llx",
                      static_cast<unsigned long long>(ckpt.vocab_hash));
        manifest["vocab_hash"] = buf;
    }
    manifest["seed"] = std::to_string(ckpt.seed);
    {
        std::string tasks;
        for (const auto& head : ckpt.heads) {
            tasks += (tasks.empty() ? "" : ",") + head.label_space.task_name;
        }
        manifest["heads"] = tasks;
        for (const auto& head : ckpt.heads) {
            std::string labels;
            for (const auto& l : head.label_space.labels) {
                labels += (labels.empty() ? "" : ",") + l;
            }
            manifest["head." + head.label_space.task_name + ".labels"] = labels;
        }
    }

    auto named = all_named(ckpt);

    std::ofstream out(path, std::ios::binary);
    if (!out) throw ValueError("save_checkpoint: cannot write " + path);
    out << kMagic << "\n";
    for (const auto& [k, v] : manifest) out << k << "=" << v << "\n";
    for (const auto& [name, t] : named) {
        out << "tensor " << name << " " << t->ndim();
        for (int d : t->shape) out << " " << d;
        out << "\n";
    }
    long long blob_bytes = 0;
    for (const auto& [name, t] : named) {
        (void)name;
        blob_bytes += 8LL * t->size();
    }
    out << "blob " << blob_bytes << "\n";
    for (const auto& [name, t] : named) {
        (void)name;
        write_le_doubles(out, t->data);
    }
    if (!out) throw ValueError("save_checkpoint: write failed for " + path);
}

Checkpoint load_checkpoint(const std::string& path, std::optional<uint64_t> expected_vocab_hash) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ValueError("load_checkpoint: cannot open " + path);

    std::string line;
    if (!std::getline(in, line) || line != kMagic) {
        throw ParseError("load_checkpoint: " + path + " is not a checkpoint file");
    }

    std::map<std::string, std::string> manifest;
    std::vector<std::pair<std::string, std::vector<int>>> tensor_specs;
    long long blob_bytes = -1;
    while (std::getline(in, line)) {
        if (line.rfind("tensor ", 0) == 0) {
            std::istringstream ls(line);
            std::string kw, name;
            int ndim;
            ls >> kw >> name >> ndim;
            std::vector<int> shape(static_cast<size_t>(ndim));
            for (int& d : shape) ls >> d;
            if (!ls) throw ParseError("load_checkpoint: bad tensor line: " + line);
            tensor_specs.emplace_back(name, std::move(shape));
        } else if (line.rfind("blob ", 0) == 0) {
            blob_bytes = std::stoll(line.substr(5));
            break;
        } else {
            size_t eq = line.find('=');
            if (eq == std::string::npos) {
                throw ParseError("load_checkpoint: bad manifest line: " + line);
            }
            manifest[line.substr(0, eq)] = line.substr(eq + 1);
        }
    }
    if (blob_bytes < 0) throw ParseError("load_checkpoint: missing blob section");

    auto need = [&](const std::string& key) -> const std::string& {
        auto it = manifest.find(key);
        if (it == manifest.end()) throw ParseError("load_checkpoint: manifest missing " + key);
        return it->second;
    };

    if (std::stoi(need("format_version")) != kCheckpointVersion) {
        throw ValueError("load_checkpoint: refusing format version " + need("format_version") +
                         " (expected " + std::to_string(kCheckpointVersion) + ")");
    }

    Checkpoint ckpt;
    ckpt.vocab_hash = std::stoull(need("vocab_hash"), nullptr, 16);
    ckpt.seed = std::stoull(need("seed"));
    if (expected_vocab_hash && *expected_vocab_hash != ckpt.vocab_hash) {
        throw ValueError("load_checkpoint: vocabulary hash mismatch; the checkpoint was trained "
                         "with a different vocabulary");
    }

    EncoderConfig cfg;
    cfg.n_layers = std::stoi(need("encoder.n_layers"));
    cfg.d_model = std::stoi(need("encoder.d_model"));
    cfg.n_heads = std::stoi(need("encoder.n_heads"));
    cfg.d_ff = std::stoi(need("encoder.d_ff"));
    cfg.max_len = std::stoi(need("encoder.max_len"));
    cfg.vocab_size = std::stoi(need("encoder.vocab_size"));
    cfg.dropout_p = parse_double(need("encoder.dropout_p"));
    cfg.validate();

    // Materialize parameter holders, then fill them from the blob.
    ckpt.encoder = init_params(cfg, 0);
    ckpt.encoder.config = cfg;
    {
        std::istringstream tasks(need("heads"));
        std::string task;
        while (std::getline(tasks, task, ',')) {
            if (task.empty()) continue;
            LabelSpace space;
            space.task_name = task;
            std::istringstream labels(need("head." + task + ".labels"));
            std::string label;
            while (std::getline(labels, label, ',')) space.labels.push_back(label);
            ckpt.heads.push_back(init_head(cfg.d_model, space, 0));
        }
    }

    auto named = all_named(ckpt);
    if (named.size() != tensor_specs.size()) {
        throw ParseError("load_checkpoint: tensor inventory mismatch (" +
                         std::to_string(tensor_specs.size()) + " in file, " +
                         std::to_string(named.size()) + " expected)");
    }
    long long expect_bytes = 0;
    for (size_t i = 0; i < named.size(); ++i) {
        const auto& [name, t] = named[i];
        const auto& [spec_name, spec_shape] = tensor_specs[i];
        if (name != spec_name || t->shape != spec_shape) {
            throw ParseError("load_checkpoint: tensor mismatch at '" + spec_name + "'");
        }
        expect_bytes += 8LL * t->size();
    }
    if (expect_bytes != blob_bytes) {
        throw ParseError("load_checkpoint: blob length " + std::to_string(blob_bytes) +
                         " does not match tensor inventory (" + std::to_string(expect_bytes) + ")");
    }

    for (auto& [name, t] : named) {
        (void)name;
        read_le_doubles(in, t->data);
    }
    // Exactly at EOF now: any trailing bytes mean corruption.
    char extra;
    if (in.read(&extra, 1)) throw ParseError("load_checkpoint: trailing bytes after blob");
    return ckpt;
}

}  // namespace mtlforge
