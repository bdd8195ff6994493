#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "ccd/backend.hpp"

namespace ccd {

// word-level n-gram model with add-k smoothing and stupid backoff: the
// longest context with any observed continuation wins, shrinking one token
// at a time down to the unigram level
class ngram_lm : public lm_backend {
public:
    // corpus lines are whitespace-separated words; every line is closed with
    // an implicit eos; throws empty_corpus / invalid_argument
    static ngram_lm train(const std::vector<std::string> & corpus_lines,
                          int order, double smoothing);

    // model JSON: {"kind":"ngram_model","order":int,"smoothing":float,
    //              "vocab":{...},"levels":[[{"context":[int],"counts":[[id,n],...]}...]]}
    // corpus JSON: {"kind":"ngram_corpus","order":int,"smoothing":float,
    //               "lines":[str,...]}  (trains on load)
    static ngram_lm from_json_text(std::string_view text);
    static ngram_lm load(const std::string & path);
    std::string to_json_text() const;
    void save(const std::string & path) const;

    int order() const { return order_; }
    double smoothing() const { return smoothing_; }

    const vocabulary & vocab() const override { return vocab_; }
    backend_descriptor descriptor() const override;
    std::vector<token_id> tokenize(std::string_view text) const override;
    std::string detokenize(std::span<const token_id> ids) const override;
    // log p(t | backed-off context); exp of the vector sums to 1
    logit_vector next_logits(const generation_state & state) const override;

private:
    ngram_lm() = default;

    struct context_counts {
        std::unordered_map<token_id, int64_t> counts;
        int64_t total = 0;
    };

    static std::string pack_key(std::span<const token_id> ids);
    void count_corpus(const std::vector<std::vector<token_id>> & lines);

    vocabulary vocab_;
    int order_ = 1;
    double smoothing_ = 0.5;
    // levels_[len] maps packed contexts of that length to continuation counts
    std::vector<std::unordered_map<std::string, context_counts>> levels_;
};

} // namespace ccd
