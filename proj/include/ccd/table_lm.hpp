#pragma once

#include <string>
#include <unordered_map>
#include <vector>

#include "ccd/backend.hpp"

namespace ccd {

// fixture-driven backend: arbitrary finite scores per (context, prefix) pair,
// with optional default scores for anything unprogrammed; fully deterministic
class table_lm : public lm_backend {
public:
    explicit table_lm(vocabulary v);

    // program scores for the state whose prompt tokenizes from `context` and
    // whose generated tokens equal `prefix`; scores length must equal |V|
    void program(const std::string & context, std::vector<token_id> prefix, logit_vector scores);
    void set_default_scores(logit_vector scores);

    // fixture JSON: {"vocab":{"tokens":[...],"eos":int,"unk":int|null},
    //               "entries":[{"context":str,"prefix":[int],"scores":[...]}],
    //               "default_scores":[...]}  (default_scores optional)
    static table_lm from_json_text(std::string_view text);
    static table_lm load(const std::string & path);
    std::string to_json_text() const;
    void save(const std::string & path) const;

    const vocabulary & vocab() const override { return vocab_; }
    backend_descriptor descriptor() const override;
    std::vector<token_id> tokenize(std::string_view text) const override;
    std::string detokenize(std::span<const token_id> ids) const override;
    // exact entry match, else default scores, else throws table_miss
    logit_vector next_logits(const generation_state & state) const override;

private:
    struct entry {
        std::string context;  // kept for serialization
        std::vector<token_id> prefix;
        logit_vector scores;
    };

    void check_scores(const logit_vector & scores) const;
    static std::string key_of(const std::vector<token_id> & prompt,
                              const std::vector<token_id> & prefix);

    vocabulary vocab_;
    std::vector<entry> entries_;  // serialization order
    std::unordered_map<std::string, size_t> index_;
    logit_vector default_scores_;
    bool has_default_ = false;
};

} // namespace ccd
