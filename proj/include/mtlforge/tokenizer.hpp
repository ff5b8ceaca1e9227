#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

namespace mtlforge {

// Reserved ids, fixed for every vocabulary.
inline constexpr int kPadId = 0;
inline constexpr int kUnkId = 1;
inline constexpr int kClsId = 2;
inline constexpr int kSepId = 3;

// Subword vocabulary: 4 reserved tokens, 256 single-byte base tokens, then
// learned whole words and "##"-prefixed continuation pieces ranked by corpus
// frequency. Immutable after build; encode() is pure.
class Vocabulary {
public:
    static Vocabulary build(const std::vector<std::string>& corpus, int max_size, int min_freq);

    // One token per line, line number = id. Tokens are escaped (\xHH for
    // bytes outside printable ASCII and for backslash) so byte tokens such
    // as the newline byte survive the line-oriented format bit-exactly.
    void save(const std::string& path) const;
    static Vocabulary load(const std::string& path);

    std::string serialize() const;
    static Vocabulary deserialize(const std::string& text);

    int size() const { return static_cast<int>(id_to_token_.size()); }
    int id_of(const std::string& token) const;  // -1 when absent
    const std::string& token_of(int id) const;
    bool contains(const std::string& token) const { return id_of(token) >= 0; }

    // FNV-1a over the serialized form; ties checkpoints to the vocabulary.
    uint64_t hash() const;

private:
    void add(const std::string& token);
    std::unordered_map<std::string, int> token_to_id_;
    std::vector<std::string> id_to_token_;
};

// Fixed-length encoded text: [CLS] content... [SEP] [PAD]...
struct TokenSequence {
    std::vector<int> ids;
    std::vector<int> attention_mask;  // 1 where ids != PAD

    int length() const { return static_cast<int>(ids.size()); }
    int content_tokens() const;  // tokens strictly between CLS and SEP
};

// Whitespace split, then greedy longest-match segmentation against the
// vocabulary with single-byte fallback. Continuation matches require the
// "##" marker; pathologically long words (> 200 bytes) become UNK.
std::vector<int> segment_word(const Vocabulary& vocab, const std::string& word);
std::vector<int> tokenize_text(const Vocabulary& vocab, const std::string& text);

TokenSequence encode(const Vocabulary& vocab, const std::string& text, int max_len);

std::string escape_token(const std::string& raw);
std::string unescape_token(const std::string& escaped);

}  // namespace mtlforge
