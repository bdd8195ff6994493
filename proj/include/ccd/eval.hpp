#pragma once

#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "ccd/backend.hpp"
#include "ccd/decoder.hpp"
#include "ccd/prompt_forge.hpp"

namespace ccd {

// evaluation conditions; base/induced/neutral_only decode one context,
// ccd contrasts neutral vs induced, vanilla_cd contrasts two backends on the
// induced prompt
enum class method_kind { base, induced, neutral_only, ccd, vanilla_cd };

const char * method_kind_name(method_kind m);
method_kind parse_method_kind(std::string_view name);  // throws invalid_argument

enum class sentiment_label { positive, negative, unparsed };

const char * sentiment_label_name(sentiment_label l);

struct classification_outcome {
    std::string example_id;
    sentiment_label predicted = sentiment_label::unparsed;
    sentiment_label true_label = sentiment_label::positive;
    std::string raw_text;  // generation the prediction was parsed from
};

// multiple-choice item; induced_statement is the planted false answer
// (empty means the induced condition degenerates to the base prompt)
struct mc_item {
    std::string id;
    std::string question;
    std::vector<std::string> choices;
    std::vector<char> correct_mask;  // 1 = correct, at least one of each
    std::string induced_statement;

    void validate() const;  // throws malformed_item
};

struct mc_scores {
    std::vector<double> per_choice_logprob;  // finite, floored at MIN_LOGPROB
};

struct mc_summary {
    double mc1 = 0.0;            // % items whose unique top choice is correct
    double mc2 = 0.0;            // % mean normalized mass on correct choices
    double mc3 = 0.0;            // % correct choices beating every incorrect
    double mc2_over_half = 0.0;  // % items with correct mass > 0.5
};

// case-insensitive scan for "positive"/"negative": first occurrence after an
// "Answer:" marker wins, else first occurrence anywhere, else unparsed
sentiment_label parse_sentiment(std::string_view raw);

// percentages; macro-F1 over {positive, negative}; an unparsed prediction is
// wrong and counts as a false negative for its true class; throws
// empty_outcomes
std::pair<double, double> accuracy_f1(std::span<const classification_outcome> outcomes);

// teacher-force each choice and sum per-token log-probs under the given
// condition; for ccd/vanilla_cd both contexts are fed the forced token;
// masked tokens score MIN_LOGPROB so sums stay finite
mc_scores score_choices(const lm_backend & backend,
                        const lm_backend * second_backend,
                        const mc_item & item,
                        method_kind condition,
                        const decoding_params & params);

mc_summary mc_metrics(std::span<const mc_item> items,
                      std::span<const mc_scores> scores);  // throws empty_outcomes

struct eval_report {
    method_kind method = method_kind::base;
    task_kind task = task_kind::sentiment;
    int n_examples = 0;
    std::optional<double> accuracy, f1;                      // sentiment
    std::optional<double> mc1, mc2, mc3, mc2_over_half;      // fact
    decoding_params params;
    backend_descriptor backend;
    std::optional<backend_descriptor> backend2;
};

struct eval_run {
    eval_report report;
    // one serialized JSON object per example, input order
    std::vector<std::string> per_example_jsonl;
};

// evaluate one method over a forged dataset; jobs > 1 fans examples out over
// threads with deterministic, input-ordered aggregation; vanilla_cd requires
// second_backend (method_backend_mismatch otherwise)
eval_run run_eval(task_kind task,
                  std::span<const induced_example> examples,
                  method_kind method,
                  const lm_backend & backend,
                  const lm_backend * second_backend,
                  const decoding_params & params,
                  int jobs = 1);

} // namespace ccd
