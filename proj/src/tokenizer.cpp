#include "mtlforge/tokenizer.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <sstream>

#include "mtlforge/error.hpp"
#include "mtlforge/rng.hpp"

namespace mtlforge {

namespace {

constexpr size_t kMaxWordBytes = 200;

const char* kReserved[4] = {"[PAD]", "[UNK]", "[CLS]", "[SEP]"};

std::vector<std::string> whitespace_split(const std::string& text) {
    std::vector<std::string> words;
    size_t i = 0;
    while (i < text.size()) {
        while (i < text.size() && std::isspace(static_cast<unsigned char>(text[i]))) ++i;
        size_t start = i;
        while (i < text.size() && !std::isspace(static_cast<unsigned char>(text[i]))) ++i;
        if (i > start) words.emplace_back(text.substr(start, i - start));
    }
    return words;
}

}  // namespace

std::string escape_token(const std::string& raw) {
    std::string out;
    out.reserve(raw.size());
    char buf[8];
    for (unsigned char c : raw) {
        if (c == '\\') {
            out += "\\\\";
        } else if (c >= 0x21 && c <= 0x7e) {
            out += static_cast<char>(c);
        } else {
            std::snprintf(buf, sizeof(buf), "\\x%02x", c);
            out += buf;
        }
    }
    return out;
}

std::string unescape_token(const std::string& escaped) {
    std::string out;
    out.reserve(escaped.size());
    for (size_t i = 0; i < escaped.size(); ++i) {
        if (escaped[i] != '\\') {
            out += escaped[i];
            continue;
        }
        if (i + 1 < escaped.size() && escaped[i + 1] == '\\') {
            out += '\\';
            ++i;
        } else if (i + 3 < escaped.size() && escaped[i + 1] == 'x') {
            int hi = std::tolower(escaped[i + 2]);
            int lo = std::tolower(escaped[i + 3]);
            auto hexval = [](int c) {
                if (c >= '0' && c <= '9') return c - '0';
                if (c >= 'a' && c <= 'f') return c - 'a' + 10;
                throw ParseError("vocabulary: bad hex escape");
            };
            out += static_cast<char>((hexval(hi) << 4) | hexval(lo));
            i += 3;
        } else {
            throw ParseError("vocabulary: dangling escape");
        }
    }
    return out;
}

void Vocabulary::add(const std::string& token) {
    if (token_to_id_.count(token)) return;
    token_to_id_.emplace(token, static_cast<int>(id_to_token_.size()));
    id_to_token_.push_back(token);
}

Vocabulary Vocabulary::build(const std::vector<std::string>& corpus, int max_size, int min_freq) {
    if (corpus.empty()) throw ValueError("build_vocab: empty corpus");
    if (max_size < 260) {
        throw ValueError("build_vocab: max_size must be >= 260 (4 reserved + 256 byte tokens), got " +
                         std::to_string(max_size));
    }
    if (min_freq < 1) throw ValueError("build_vocab: min_freq must be >= 1");

    Vocabulary v;
    for (const char* r : kReserved) v.add(r);
    for (int b = 0; b < 256; ++b) v.add(std::string(1, static_cast<char>(b)));

    // Candidates: whole words plus "##"-marked suffix pieces of each word.
    std::unordered_map<std::string, long long> freq;
    for (const auto& line : corpus) {
        for (const auto& word : whitespace_split(line)) {
            if (word.size() > kMaxWordBytes) continue;
            ++freq[word];
            for (size_t start = 1; start < word.size(); ++start) {
                ++freq["##" + word.substr(start)];
            }
        }
    }

    std::vector<std::pair<std::string, long long>> ranked;
    ranked.reserve(freq.size());
    for (auto& kv : freq)
        if (kv.second >= min_freq) ranked.emplace_back(kv.first, kv.second);
    std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
        if (a.second != b.second) return a.second > b.second;
        return a.first < b.first;
    });

    for (const auto& [token, count] : ranked) {
        (void)count;
        if (v.size() >= max_size) break;
        v.add(token);
    }
    return v;
}

int Vocabulary::id_of(const std::string& token) const {
    auto it = token_to_id_.find(token);
    return it == token_to_id_.end() ? -1 : it->second;
}

const std::string& Vocabulary::token_of(int id) const {
    if (id < 0 || id >= size()) throw ValueError("vocabulary: id out of range: " + std::to_string(id));
    return id_to_token_[static_cast<size_t>(id)];
}

std::string Vocabulary::serialize() const {
    std::string out;
    for (const auto& tok : id_to_token_) {
        out += escape_token(tok);
        out += '\n';
    }
    return out;
}

Vocabulary Vocabulary::deserialize(const std::string& text) {
    Vocabulary v;
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line)) {
        std::string token = unescape_token(line);
        if (v.token_to_id_.count(token)) throw ParseError("vocabulary: duplicate token at id " +
                                                          std::to_string(v.size()));
        v.add(token);
    }
    if (v.size() < 260) throw ParseError("vocabulary: too few tokens for a valid file");
    for (int i = 0; i < 4; ++i) {
        if (v.id_to_token_[static_cast<size_t>(i)] != kReserved[i]) {
            throw ParseError("vocabulary: reserved token layout violated at id " + std::to_string(i));
        }
    }
    return v;
}

void Vocabulary::save(const std::string& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ValueError("vocabulary: cannot write " + path);
    out << serialize();
}

Vocabulary Vocabulary::load(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ValueError("vocabulary: cannot open " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    return deserialize(buf.str());
}

uint64_t Vocabulary::hash() const {
    return fnv1a64(serialize());
}

int TokenSequence::content_tokens() const {
    int n = 0;
    for (int id : ids)
        if (id != kPadId && id != kClsId && id != kSepId) ++n;
    return n;
}

std::vector<int> segment_word(const Vocabulary& vocab, const std::string& word) {
    std::vector<int> out;
    if (word.empty()) return out;
    if (word.size() > kMaxWordBytes) {
        out.push_back(kUnkId);
        return out;
    }
    size_t pos = 0;
    while (pos < word.size()) {
        size_t best_len = 0;
        int best_id = -1;
        const size_t remaining = word.size() - pos;
        for (size_t len = remaining; len >= 1; --len) {
            std::string cand = word.substr(pos, len);
            if (pos > 0) cand = "##" + cand;
            int id = vocab.id_of(cand);
            // Reserved ids never match raw text (a literal "[PAD]" in a
            // document segments into bytes instead).
            if (id >= 4) {
                best_len = len;
                best_id = id;
                break;
            }
        }
        if (best_id < 0) {
            // Continuation position with no "##" match: fall back to the
            // plain single-byte token so encoding stays total.
            best_id = vocab.id_of(word.substr(pos, 1));
            best_len = 1;
        }
        out.push_back(best_id);
        pos += best_len;
    }
    return out;
}

std::vector<int> tokenize_text(const Vocabulary& vocab, const std::string& text) {
    std::vector<int> ids;
    for (const auto& word : whitespace_split(text)) {
        auto piece = segment_word(vocab, word);
        ids.insert(ids.end(), piece.begin(), piece.end());
    }
    return ids;
}

TokenSequence encode(const Vocabulary& vocab, const std::string& text, int max_len) {
    if (max_len < 3) throw ValueError("encode: max_len must be >= 3");
    std::vector<int> content = tokenize_text(vocab, text);
    const size_t keep = static_cast<size_t>(max_len - 2);
    if (content.size() > keep) content.resize(keep);

    TokenSequence seq;
    seq.ids.reserve(static_cast<size_t>(max_len));
    seq.ids.push_back(kClsId);
    seq.ids.insert(seq.ids.end(), content.begin(), content.end());
    seq.ids.push_back(kSepId);
    seq.ids.resize(static_cast<size_t>(max_len), kPadId);

    seq.attention_mask.assign(static_cast<size_t>(max_len), 0);
    for (size_t i = 0; i < seq.ids.size(); ++i)
        if (seq.ids[i] != kPadId) seq.attention_mask[i] = 1;
    return seq;
}

}  // namespace mtlforge
