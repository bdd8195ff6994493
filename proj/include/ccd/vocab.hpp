#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace ccd {

using token_id = int32_t;

// finite token inventory shared by every backend in a run; identity is the
// content hash, two backends may only be contrasted when hashes match
struct vocabulary {
    std::vector<std::string> tokens;
    token_id eos = 0;
    std::optional<token_id> unk;

    size_t size() const { return tokens.size(); }
    bool valid(token_id id) const { return id >= 0 && size_t(id) < tokens.size(); }
    std::optional<token_id> find(std::string_view tok) const;

    // throws invalid_argument on duplicate/empty tokens or out-of-range eos/unk
    void validate() const;

    // stable hex digest over the canonical serialization (tokens, eos, unk)
    std::string content_hash() const;
};

// greedy longest-match against the token inventory (table/remote backends);
// unmatched input maps to unk one UTF-8 code point at a time, or throws
// unencodable_input when the vocabulary has no unk token
std::vector<token_id> tokenize_longest_match(const vocabulary & v, std::string_view text);

// whitespace-word tokenizer (n-gram backend); each word must be a token or
// map to unk, same unencodable_input rule
std::vector<token_id> tokenize_whitespace(const vocabulary & v, std::string_view text);

// inverses for in-vocabulary text: concat for longest-match, single spaces
// for whitespace words
std::string detokenize_concat(const vocabulary & v, std::span<const token_id> ids);
std::string detokenize_spaced(const vocabulary & v, std::span<const token_id> ids);

} // namespace ccd
