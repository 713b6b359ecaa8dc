#include "gslt/vocab.hpp"

#include <algorithm>
#include <cctype>
#include <sstream>

namespace gslt {

namespace {
const char* kPadToken = "<pad>";
const char* kBosToken = "<bos>";
const char* kEosToken = "<eos>";
const char* kUnkToken = "<unk>";
}  // namespace

Vocabulary Vocabulary::glosses(const std::vector<std::string>& content) {
    Vocabulary v;
    v.tokens_.push_back(kPadToken);
    for (const auto& t : content) v.tokens_.push_back(t);
    v.has_word_reserved_ = false;
    v.rebuild_index();
    return v;
}

Vocabulary Vocabulary::words(const std::vector<std::string>& content) {
    Vocabulary v;
    v.tokens_ = {kPadToken, kBosToken, kEosToken, kUnkToken};
    for (const auto& t : content) v.tokens_.push_back(t);
    v.has_word_reserved_ = true;
    v.rebuild_index();
    return v;
}

Vocabulary Vocabulary::from_tokens(std::vector<std::string> tokens, bool has_word_reserved) {
    Vocabulary v;
    v.tokens_ = std::move(tokens);
    v.has_word_reserved_ = has_word_reserved;
    v.rebuild_index();
    return v;
}

void Vocabulary::rebuild_index() {
    index_.clear();
    for (std::size_t i = 0; i < tokens_.size(); ++i) {
        if (!index_.emplace(tokens_[i], static_cast<int>(i)).second)
            throw VocabularyError("duplicate token '" + tokens_[i] + "'");
    }
}

const std::string& Vocabulary::token(int id) const {
    if (id < 0 || id >= size()) throw VocabularyError("token id " + std::to_string(id));
    return tokens_[static_cast<std::size_t>(id)];
}

int Vocabulary::id_of(const std::string& token) const {
    auto it = index_.find(token);
    if (it == index_.end()) throw VocabularyError("unknown token '" + token + "'");
    return it->second;
}

int Vocabulary::id_or_unk(const std::string& token) const {
    auto it = index_.find(token);
    if (it != index_.end()) return it->second;
    if (!has_word_reserved_) throw VocabularyError("unknown gloss '" + token + "'");
    return kUnk;
}

std::vector<int> Vocabulary::encode(const std::vector<std::string>& tokens, bool allow_unk) const {
    std::vector<int> ids;
    ids.reserve(tokens.size());
    for (const auto& t : tokens) ids.push_back(allow_unk ? id_or_unk(t) : id_of(t));
    return ids;
}

std::vector<std::string> Vocabulary::decode(const std::vector<int>& ids) const {
    std::vector<std::string> out;
    out.reserve(ids.size());
    for (int id : ids) out.push_back(token(id));
    return out;
}

std::vector<std::string> tokenize(const std::string& line) {
    std::istringstream in(line);
    std::vector<std::string> tokens;
    std::string t;
    while (in >> t) {
        std::transform(t.begin(), t.end(), t.begin(),
                       [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
        tokens.push_back(t);
    }
    return tokens;
}

}  // namespace gslt
