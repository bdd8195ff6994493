#include "ccd/vocab.hpp"

#include <unordered_set>

#include "ccd/errors.hpp"
#include "ccd/hashing.hpp"

namespace ccd {

namespace {

// hex via hashing.cpp; here only tokenizer helpers

// number of bytes in the UTF-8 code point starting at text[pos]
size_t utf8_len(std::string_view text, size_t pos) {
    unsigned char c = static_cast<unsigned char>(text[pos]);
    size_t n = 1;
    if ((c & 0xe0) == 0xc0) n = 2;
    else if ((c & 0xf0) == 0xe0) n = 3;
    else if ((c & 0xf8) == 0xf0) n = 4;
    // clamp to the remaining bytes for malformed input
    return std::min(n, text.size() - pos);
}

} // namespace

std::optional<token_id> vocabulary::find(std::string_view tok) const {
    for (size_t i = 0; i < tokens.size(); ++i) {
        if (tokens[i] == tok) {
            return token_id(i);
        }
    }
    return std::nullopt;
}

void vocabulary::validate() const {
    if (tokens.empty()) {
        throw ccd_error(errc::invalid_argument, "vocabulary has no tokens");
    }
    std::unordered_set<std::string_view> seen;
    for (const auto & t : tokens) {
        if (t.empty()) {
            throw ccd_error(errc::invalid_argument, "vocabulary contains an empty token");
        }
        if (!seen.insert(t).second) {
            throw ccd_error(errc::invalid_argument, "duplicate token '" + t + "'");
        }
    }
    if (!valid(eos)) {
        throw ccd_error(errc::invalid_argument, "eos id out of range");
    }
    if (unk && !valid(*unk)) {
        throw ccd_error(errc::invalid_argument, "unk id out of range");
    }
}

std::string vocabulary::content_hash() const {
    // canonical serialization: count, NUL-terminated tokens, eos, unk
    std::string bytes = "vocab.v1\n" + std::to_string(tokens.size()) + "\n";
    for (const auto & t : tokens) {
        bytes += t;
        bytes.push_back('\0');
    }
    bytes += "eos=" + std::to_string(eos);
    bytes += ";unk=" + (unk ? std::to_string(*unk) : std::string("none"));
    return ccd::content_hash(bytes);
}

std::vector<token_id> tokenize_longest_match(const vocabulary & v, std::string_view text) {
    std::vector<token_id> out;
    size_t pos = 0;
    while (pos < text.size()) {
        token_id best = -1;
        size_t best_len = 0;
        for (size_t i = 0; i < v.tokens.size(); ++i) {
            const std::string & tok = v.tokens[i];
            if (tok.size() > best_len && tok.size() <= text.size() - pos
                && text.compare(pos, tok.size(), tok) == 0) {
                best = token_id(i);
                best_len = tok.size();
            }
        }
        if (best >= 0) {
            out.push_back(best);
            pos += best_len;
        } else if (v.unk) {
            out.push_back(*v.unk);
            pos += utf8_len(text, pos);
        } else {
            throw ccd_error(errc::unencodable_input,
                            "no token matches input at byte " + std::to_string(pos)
                                + " and the vocabulary has no unk token");
        }
    }
    return out;
}

std::vector<token_id> tokenize_whitespace(const vocabulary & v, std::string_view text) {
    std::vector<token_id> out;
    size_t pos = 0;
    auto is_space = [](char c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r'; };
    while (pos < text.size()) {
        while (pos < text.size() && is_space(text[pos])) ++pos;
        size_t end = pos;
        while (end < text.size() && !is_space(text[end])) ++end;
        if (end > pos) {
            std::string_view word = text.substr(pos, end - pos);
            if (auto id = v.find(word)) {
                out.push_back(*id);
            } else if (v.unk) {
                out.push_back(*v.unk);
            } else {
                throw ccd_error(errc::unencodable_input,
                                "word '" + std::string(word)
                                    + "' is not in the vocabulary and there is no unk token");
            }
        }
        pos = end;
    }
    return out;
}

std::string detokenize_concat(const vocabulary & v, std::span<const token_id> ids) {
    std::string out;
    for (token_id id : ids) {
        if (!v.valid(id)) {
            throw ccd_error(errc::vocabulary_mismatch,
                            "token id " + std::to_string(id) + " out of range");
        }
        out += v.tokens[id];
    }
    return out;
}

std::string detokenize_spaced(const vocabulary & v, std::span<const token_id> ids) {
    std::string out;
    for (size_t i = 0; i < ids.size(); ++i) {
        if (!v.valid(ids[i])) {
            throw ccd_error(errc::vocabulary_mismatch,
                            "token id " + std::to_string(ids[i]) + " out of range");
        }
        if (i > 0) out += ' ';
        out += v.tokens[ids[i]];
    }
    return out;
}

} // namespace ccd
