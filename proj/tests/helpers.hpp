#pragma once

#include <optional>
#include <string>
#include <vector>

#include "ccd/table_lm.hpp"
#include "ccd/vocab.hpp"

namespace ccd::testing {

inline vocabulary make_vocab(std::vector<std::string> tokens,
                             token_id eos = 0,
                             std::optional<token_id> unk = std::nullopt) {
    vocabulary v;
    v.tokens = std::move(tokens);
    v.eos = eos;
    v.unk = unk;
    v.validate();
    return v;
}

// tiny two-word vocabulary used by several decoder tests:
//   0 "</s>"  1 "a"  2 "b"
inline vocabulary tiny_vocab() {
    return make_vocab({"</s>", "a", "b"}, 0);
}

} // namespace ccd::testing
