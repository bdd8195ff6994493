#include "ccd/backend.hpp"

#include "ccd/errors.hpp"

namespace ccd {

std::vector<token_id> generation_state::full_sequence() const {
    std::vector<token_id> seq;
    seq.reserve(prompt_tokens.size() + generated.size());
    seq.insert(seq.end(), prompt_tokens.begin(), prompt_tokens.end());
    seq.insert(seq.end(), generated.begin(), generated.end());
    return seq;
}

void lm_backend::validate_state(const generation_state & state) const {
    const vocabulary & v = vocab();
    for (token_id id : state.prompt_tokens) {
        if (!v.valid(id)) {
            throw ccd_error(errc::vocabulary_mismatch,
                            "prompt token id " + std::to_string(id) + " out of range");
        }
    }
    for (token_id id : state.generated) {
        if (!v.valid(id)) {
            throw ccd_error(errc::vocabulary_mismatch,
                            "generated token id " + std::to_string(id) + " out of range");
        }
    }
}

} // namespace ccd
