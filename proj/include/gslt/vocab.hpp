#pragma once

#include <string>
#include <unordered_map>
#include <vector>

#include "gslt/errors.hpp"

namespace gslt {

// Dense token <-> id mapping. Gloss vocabularies reserve only PAD/blank
// (id 0); word vocabularies additionally reserve BOS, EOS, UNK.
class Vocabulary {
public:
    static constexpr int kPad = 0;
    static constexpr int kBos = 1;
    static constexpr int kEos = 2;
    static constexpr int kUnk = 3;

    static Vocabulary glosses(const std::vector<std::string>& content);
    static Vocabulary words(const std::vector<std::string>& content);
    // Rebuild from a serialized token list (reserved tokens included).
    static Vocabulary from_tokens(std::vector<std::string> tokens, bool has_word_reserved);

    int size() const { return static_cast<int>(tokens_.size()); }
    bool has_word_reserved() const { return has_word_reserved_; }
    int first_content_id() const { return has_word_reserved_ ? kUnk + 1 : kPad + 1; }

    const std::string& token(int id) const;
    int id_of(const std::string& token) const;      // throws VocabularyError
    int id_or_unk(const std::string& token) const;  // word vocabularies only
    bool contains(const std::string& token) const { return index_.count(token) > 0; }

    std::vector<int> encode(const std::vector<std::string>& tokens, bool allow_unk) const;
    std::vector<std::string> decode(const std::vector<int>& ids) const;

    const std::vector<std::string>& tokens() const { return tokens_; }

private:
    std::vector<std::string> tokens_;
    std::unordered_map<std::string, int> index_;
    bool has_word_reserved_ = false;

    void rebuild_index();
};

// Whitespace split, lower-cased.
std::vector<std::string> tokenize(const std::string& line);

}  // namespace gslt
