#pragma once

#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "ccd/logits.hpp"
#include "ccd/vocab.hpp"

namespace ccd {

// one decoding context: fixed prompt plus tokens generated so far;
// the step index is always generated.size()
struct generation_state {
    std::vector<token_id> prompt_tokens;
    std::vector<token_id> generated;

    size_t step() const { return generated.size(); }
    // prompt followed by generated, the sequence the next token conditions on
    std::vector<token_id> full_sequence() const;
};

struct backend_descriptor {
    std::string name;
    std::string vocab_hash;
    bool concurrent_queries_safe = false;
    bool deterministic = false;
};

// minimal scoring interface every language-model backend implements;
// next_logits returns raw (unnormalized) scores, one per vocabulary entry
class lm_backend {
public:
    virtual ~lm_backend() = default;

    virtual const vocabulary & vocab() const = 0;
    virtual backend_descriptor descriptor() const = 0;
    virtual std::vector<token_id> tokenize(std::string_view text) const = 0;
    virtual std::string detokenize(std::span<const token_id> ids) const = 0;
    virtual logit_vector next_logits(const generation_state & state) const = 0;

protected:
    // throws vocabulary_mismatch when the state references ids this backend
    // does not have
    void validate_state(const generation_state & state) const;
};

} // namespace ccd
