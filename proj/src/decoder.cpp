#include "ccd/decoder.hpp"

#include <algorithm>
#include <cmath>

#include "ccd/errors.hpp"

#include "json_util.hpp"

namespace ccd {

void decoding_params::validate() const {
    if (!(alpha >= 0.0) || !std::isfinite(alpha)) {
        throw ccd_error(errc::invalid_argument, "alpha must be finite and >= 0");
    }
    if (!(beta >= 0.0 && beta <= 1.0)) {
        throw ccd_error(errc::invalid_argument, "beta must be in [0, 1]");
    }
    if (max_tokens <= 0) {
        throw ccd_error(errc::invalid_argument, "max_tokens must be > 0");
    }
}

bool plausible_set::contains(token_id id) const {
    return std::binary_search(members.begin(), members.end(), id);
}

logit_vector combine_logits(const logit_vector & neutral,
                            const logit_vector & induced,
                            double alpha) {
    if (neutral.size() != induced.size()) {
        throw ccd_error(errc::length_mismatch,
                        "neutral has " + std::to_string(neutral.size())
                            + " entries, induced has " + std::to_string(induced.size()));
    }
    if (neutral.empty()) {
        throw ccd_error(errc::invalid_argument, "cannot combine empty logit vectors");
    }
    if (!(alpha >= 0.0) || !std::isfinite(alpha)) {
        throw ccd_error(errc::invalid_argument, "alpha must be finite and >= 0");
    }
    logit_vector out(neutral.size());
    for (size_t t = 0; t < neutral.size(); ++t) {
        // (1+a)*n - a*i, evaluated so that n == i and a == 0 are exact
        out[t] = neutral[t] + alpha * (neutral[t] - induced[t]);
    }
    return out;
}

plausible_set plausibility_head(const prob_vector & reference, double beta) {
    if (reference.empty()) {
        throw ccd_error(errc::invalid_argument, "empty reference distribution");
    }
    if (!(beta >= 0.0 && beta <= 1.0)) {
        throw ccd_error(errc::invalid_argument, "beta must be in [0, 1]");
    }
    double sum = 0.0;
    double max_p = 0.0;
    for (double p : reference) {
        if (!(p >= 0.0) || !std::isfinite(p)) {
            throw ccd_error(errc::invalid_argument, "reference entries must be in [0, 1]");
        }
        sum += p;
        if (p > max_p) max_p = p;
    }
    if (std::fabs(sum - 1.0) > 1e-9) {
        throw ccd_error(errc::invalid_argument, "reference must sum to 1");
    }

    plausible_set out;
    out.threshold = beta * max_p;
    for (size_t t = 0; t < reference.size(); ++t) {
        // zero-probability tokens are never plausible, even at beta == 0
        if (reference[t] >= out.threshold && reference[t] > 0.0) {
            out.members.push_back(token_id(t));
        }
    }
    return out;
}

step_result ccd_step(const logit_vector & neutral_logits,
                     const logit_vector & induced_logits,
                     const decoding_params & params) {
    params.validate();

    // the head is always computed on the neutral context's distribution
    const prob_vector reference = softmax(neutral_logits);
    plausible_set head = plausibility_head(reference, params.beta);
    logit_vector contrast = combine_logits(neutral_logits, induced_logits, params.alpha);

    logit_vector masked = contrast;
    std::vector<char> member(masked.size(), 0);
    for (token_id id : head.members) {
        member[size_t(id)] = 1;
    }
    for (size_t t = 0; t < masked.size(); ++t) {
        if (!member[t]) masked[t] = MASKED_LOGIT;
    }

    step_result res;
    res.probs = softmax(masked);  // masked entries come out exactly 0
    res.head = std::move(head);
    res.contrast = std::move(contrast);
    return res;
}

step_result vanilla_cd_step(const logit_vector & expert_logits,
                            const logit_vector & amateur_logits,
                            const decoding_params & params) {
    // identical kernel; the expert plays the neutral role
    return ccd_step(expert_logits, amateur_logits, params);
}

token_id select_token(const prob_vector & probs,
                      const decoding_params & params,
                      std::mt19937_64 & rng) {
    if (probs.empty()) {
        throw ccd_error(errc::invalid_argument, "empty distribution");
    }
    if (params.mode == decoding_params::gen_mode::greedy) {
        size_t best = 0;
        for (size_t t = 1; t < probs.size(); ++t) {
            if (probs[t] > probs[best]) best = t;  // ties keep the lowest id
        }
        return token_id(best);
    }
    // portable inverse-CDF draw: 53-bit uniform in [0, 1)
    const double u = double(rng() >> 11) * 0x1.0p-53;
    double acc = 0.0;
    token_id last_positive = -1;
    for (size_t t = 0; t < probs.size(); ++t) {
        if (probs[t] <= 0.0) continue;
        acc += probs[t];
        last_positive = token_id(t);
        if (u < acc) return token_id(t);
    }
    if (last_positive < 0) {
        throw ccd_error(errc::all_masked, "distribution has no positive mass");
    }
    return last_positive;  // guard against fp undershoot in the final bucket
}

generation_result decode_dual(const lm_backend & neutral_backend,
                              const lm_backend & induced_backend,
                              std::string_view neutral_prompt,
                              std::string_view induced_prompt,
                              const decoding_params & params) {
    params.validate();
    if (neutral_prompt.empty() || induced_prompt.empty()) {
        throw ccd_error(errc::invalid_argument, "prompts must be nonempty");
    }
    if (&neutral_backend != &induced_backend) {
        const std::string h1 = neutral_backend.descriptor().vocab_hash;
        const std::string h2 = induced_backend.descriptor().vocab_hash;
        if (h1 != h2) {
            throw ccd_error(errc::vocabulary_mismatch,
                            "backends disagree on vocabulary: " + h1 + " vs " + h2);
        }
    }

    generation_state neutral_state{neutral_backend.tokenize(neutral_prompt), {}};
    generation_state induced_state{induced_backend.tokenize(induced_prompt), {}};

    // identical backend + identical context means one query serves both slots
    const bool shared_context = &neutral_backend == &induced_backend
        && neutral_state.prompt_tokens == induced_state.prompt_tokens;

    const token_id eos = neutral_backend.vocab().eos;
    std::mt19937_64 rng(params.seed);

    generation_result res;
    res.stop_reason = generation_result::stop::max_tokens;
    for (int step = 0; step < params.max_tokens; ++step) {
        logit_vector neutral_logits = neutral_backend.next_logits(neutral_state);
        logit_vector induced_logits =
            shared_context ? neutral_logits : induced_backend.next_logits(induced_state);

        step_result sr = ccd_step(neutral_logits, induced_logits, params);
        const token_id chosen = select_token(sr.probs, params, rng);

        step_trace tr;
        tr.step = step;
        tr.neutral_logits = std::move(neutral_logits);
        tr.induced_logits = std::move(induced_logits);
        tr.contrast_scores = std::move(sr.contrast);
        tr.plausible = std::move(sr.head);
        tr.chosen = chosen;
        tr.chosen_prob = sr.probs[size_t(chosen)];
        res.traces.push_back(std::move(tr));

        // the same token extends both contexts, keeping them synchronized
        neutral_state.generated.push_back(chosen);
        induced_state.generated.push_back(chosen);
        res.tokens.push_back(chosen);

        if (chosen == eos) {
            res.stop_reason = generation_result::stop::eos;
            break;
        }
    }
    res.text = neutral_backend.detokenize(res.tokens);
    return res;
}

generation_result decode(const lm_backend & backend,
                         const prompt_pair & pair,
                         const decoding_params & params) {
    return decode_dual(backend, backend, pair.neutral, pair.induced, params);
}

generation_result decode_single(const lm_backend & backend,
                                std::string_view prompt,
                                const decoding_params & params) {
    // a degenerate collaborative run over one context is exactly plain
    // sampling: alpha = 0 leaves the logits untouched, beta = 0 keeps the
    // whole support
    decoding_params single = params;
    single.alpha = 0.0;
    single.beta = 0.0;
    return decode_dual(backend, backend, prompt, prompt, single);
}

namespace {

json top5_of(const logit_vector & scores) {
    std::vector<size_t> idx(scores.size());
    for (size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    const size_t k = std::min<size_t>(5, idx.size());
    std::partial_sort(idx.begin(), idx.begin() + long(k), idx.end(),
                      [&scores](size_t a, size_t b) {
                          if (scores[a] != scores[b]) return scores[a] > scores[b];
                          return a < b;  // ties by ascending id
                      });
    json out = json::array();
    for (size_t i = 0; i < k; ++i) {
        out.push_back({token_id(idx[i]), scores[idx[i]]});
    }
    return out;
}

} // namespace

void write_trace_jsonl(std::ostream & out,
                       std::span<const step_trace> traces,
                       bool full) {
    for (const step_trace & tr : traces) {
        json j;
        j["step"] = tr.step;
        j["chosen"] = tr.chosen;
        j["chosen_prob"] = tr.chosen_prob;
        j["threshold"] = tr.plausible.threshold;
        j["members_count"] = tr.plausible.members.size();
        j["neutral_top5"] = top5_of(tr.neutral_logits);
        j["induced_top5"] = top5_of(tr.induced_logits);
        j["contrast_top5"] = top5_of(tr.contrast_scores);
        if (full) {
            j["neutral_logits"] = tr.neutral_logits;
            j["induced_logits"] = tr.induced_logits;
            j["contrast_scores"] = tr.contrast_scores;
            j["members"] = tr.plausible.members;
        }
        out << j.dump() << "\n";
    }
}

} // namespace ccd
