#pragma once

#include <cstdint>
#include <ostream>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "ccd/backend.hpp"
#include "ccd/logits.hpp"
#include "ccd/paradigm.hpp"

namespace ccd {

struct decoding_params {
    double alpha = 1.0;       // contrast strength, >= 0
    double beta  = 0.2;       // plausibility cutoff, in [0, 1]
    int max_tokens = 16;      // > 0
    enum class gen_mode { greedy, sample } mode = gen_mode::greedy;
    uint64_t seed = 0;        // sample mode only

    void validate() const;    // throws invalid_argument
};

// the two prompts a collaborative run decodes against
struct prompt_pair {
    std::string neutral;
    std::string induced;
    paradigm par;
    std::string source_id;
};

// adaptive plausibility head: tokens whose reference probability clears
// threshold = beta * max, plus the threshold itself for tracing
struct plausible_set {
    std::vector<token_id> members;  // ascending
    double threshold = 0.0;

    bool contains(token_id id) const;
    size_t size() const { return members.size(); }
};

// everything one decode step saw, enough to replay the step offline;
// contrast_scores are pre-mask (always finite)
struct step_trace {
    int step = 0;
    logit_vector neutral_logits;
    logit_vector induced_logits;
    logit_vector contrast_scores;
    plausible_set plausible;
    token_id chosen = 0;
    double chosen_prob = 0.0;
};

struct generation_result {
    std::vector<token_id> tokens;   // at most one eos, only as final element
    std::string text;               // detokenize(tokens)
    std::vector<step_trace> traces; // one per token
    enum class stop { eos, max_tokens } stop_reason = stop::max_tokens;
};

// contrast kernel: result[t] = (1+alpha)*neutral[t] - alpha*induced[t],
// evaluated as neutral[t] + alpha*(neutral[t] - induced[t]) so identical
// inputs cancel exactly and alpha == 0 returns neutral unchanged.
// No normalization happens here. Throws length_mismatch / invalid_argument.
logit_vector combine_logits(const logit_vector & neutral,
                            const logit_vector & induced,
                            double alpha);

// membership rule: p(t) >= beta * max(p) and p(t) > 0 — zero-probability
// tokens are never plausible, so beta == 0 keeps exactly the support.
// `reference` must be a distribution (sums to 1 within 1e-9).
plausible_set plausibility_head(const prob_vector & reference, double beta);

struct step_result {
    prob_vector probs;       // masked tokens are exactly 0
    plausible_set head;      // computed on softmax(neutral)
    logit_vector contrast;   // pre-mask combine_logits output
};

// one collaborative step: plausibility head from the neutral context,
// contrast of the two logit vectors, renormalized over the head
step_result ccd_step(const logit_vector & neutral_logits,
                     const logit_vector & induced_logits,
                     const decoding_params & params);

// the two-model baseline runs the identical kernel with the expert in the
// neutral slot and the amateur in the induced slot
step_result vanilla_cd_step(const logit_vector & expert_logits,
                            const logit_vector & amateur_logits,
                            const decoding_params & params);

// greedy: lowest-id argmax; sample: inverse-CDF walk on the given rng;
// never selects a zero-probability token
token_id select_token(const prob_vector & probs,
                      const decoding_params & params,
                      std::mt19937_64 & rng);

// synchronized dual-context loop: each step queries both contexts, runs the
// collaborative step, and appends the same chosen token to both states;
// stops at eos or max_tokens. Distinct backends must share a vocab hash.
generation_result decode_dual(const lm_backend & neutral_backend,
                              const lm_backend & induced_backend,
                              std::string_view neutral_prompt,
                              std::string_view induced_prompt,
                              const decoding_params & params);

// collaborative decode against a single backend
generation_result decode(const lm_backend & backend,
                         const prompt_pair & pair,
                         const decoding_params & params);

// plain autoregressive decode (alpha and beta are ignored); bit-identical to
// a collaborative run whose contexts coincide at alpha = 0, beta = 0
generation_result decode_single(const lm_backend & backend,
                                std::string_view prompt,
                                const decoding_params & params);

// one JSON object per step: {"step","chosen","chosen_prob","threshold",
// "members_count","neutral_top5","induced_top5","contrast_top5"}; full
// score vectors and the member list are added when `full` is set
void write_trace_jsonl(std::ostream & out,
                       std::span<const step_trace> traces,
                       bool full = false);

} // namespace ccd
