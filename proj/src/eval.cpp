#include "ccd/eval.hpp"

#include <algorithm>
#include <atomic>
#include <cctype>
#include <cmath>
#include <exception>
#include <functional>
#include <mutex>
#include <thread>

#include "ccd/errors.hpp"

#include "json_util.hpp"

namespace ccd {

const char * method_kind_name(method_kind m) {
    switch (m) {
        case method_kind::base:         return "base";
        case method_kind::induced:      return "induced";
        case method_kind::neutral_only: return "neutral_only";
        case method_kind::ccd:          return "ccd";
        case method_kind::vanilla_cd:   return "vanilla_cd";
    }
    return "base";
}

method_kind parse_method_kind(std::string_view name) {
    if (name == "base") return method_kind::base;
    if (name == "induced") return method_kind::induced;
    if (name == "neutral_only") return method_kind::neutral_only;
    if (name == "ccd") return method_kind::ccd;
    if (name == "vanilla_cd") return method_kind::vanilla_cd;
    throw ccd_error(errc::invalid_argument, "unknown method '" + std::string(name) + "'");
}

const char * sentiment_label_name(sentiment_label l) {
    switch (l) {
        case sentiment_label::positive: return "positive";
        case sentiment_label::negative: return "negative";
        case sentiment_label::unparsed: return "unparsed";
    }
    return "unparsed";
}

void mc_item::validate() const {
    if (choices.empty()) {
        throw ccd_error(errc::malformed_item, "item '" + id + "' has no choices");
    }
    if (correct_mask.size() != choices.size()) {
        throw ccd_error(errc::malformed_item,
                        "item '" + id + "' mask length does not match choices");
    }
    bool any_correct = false, any_incorrect = false;
    for (char c : correct_mask) {
        (c ? any_correct : any_incorrect) = true;
    }
    if (!any_correct || !any_incorrect) {
        throw ccd_error(errc::malformed_item,
                        "item '" + id + "' needs at least one correct and one incorrect choice");
    }
    for (const std::string & c : choices) {
        if (c.empty()) {
            throw ccd_error(errc::malformed_item, "item '" + id + "' has an empty choice");
        }
    }
    if (question.empty()) {
        throw ccd_error(errc::malformed_item, "item '" + id + "' has an empty question");
    }
}

sentiment_label parse_sentiment(std::string_view raw) {
    std::string lower(raw);
    std::transform(lower.begin(), lower.end(), lower.begin(),
                   [](unsigned char c) { return char(std::tolower(c)); });

    auto first_keyword = [](std::string_view hay) -> sentiment_label {
        const size_t p = hay.find("positive");
        const size_t n = hay.find("negative");
        if (p == std::string_view::npos && n == std::string_view::npos) {
            return sentiment_label::unparsed;
        }
        if (n == std::string_view::npos || p < n) return sentiment_label::positive;
        return sentiment_label::negative;
    };

    // the span after an explicit answer marker wins, then anywhere
    const size_t marker = lower.find("answer:");
    if (marker != std::string::npos) {
        const sentiment_label l =
            first_keyword(std::string_view(lower).substr(marker + 7));
        if (l != sentiment_label::unparsed) return l;
    }
    return first_keyword(lower);
}

std::pair<double, double> accuracy_f1(std::span<const classification_outcome> outcomes) {
    if (outcomes.empty()) {
        throw ccd_error(errc::empty_outcomes, "no outcomes to aggregate");
    }
    int correct = 0;
    // confusion counts per class; unparsed predictions are nobody's positive
    int tp_pos = 0, fp_pos = 0, fn_pos = 0;
    int tp_neg = 0, fp_neg = 0, fn_neg = 0;
    for (const auto & o : outcomes) {
        if (o.predicted == o.true_label && o.predicted != sentiment_label::unparsed) {
            ++correct;
        }
        const bool true_pos = o.true_label == sentiment_label::positive;
        if (o.predicted == sentiment_label::positive) {
            (true_pos ? tp_pos : fp_pos) += 1;
        } else if (true_pos) {
            ++fn_pos;  // covers both "negative" and unparsed predictions
        }
        if (o.predicted == sentiment_label::negative) {
            (!true_pos ? tp_neg : fp_neg) += 1;
        } else if (!true_pos) {
            ++fn_neg;
        }
    }
    auto f1_of = [](int tp, int fp, int fn) {
        const int denom = 2 * tp + fp + fn;
        return denom == 0 ? 0.0 : 2.0 * tp / double(denom);
    };
    const double accuracy = 100.0 * correct / double(outcomes.size());
    const double macro_f1 =
        100.0 * (f1_of(tp_pos, fp_pos, fn_pos) + f1_of(tp_neg, fp_neg, fn_neg)) / 2.0;
    return {accuracy, macro_f1};
}

namespace {

// clamped per-token log-prob from raw logits (single-context conditions)
double forced_logprob_single(const lm_backend & backend,
                             const generation_state & state,
                             token_id tok) {
    const logit_vector lp = log_softmax(backend.next_logits(state));
    return std::max(lp[size_t(tok)], MIN_LOGPROB);
}

struct condition_prompts {
    std::string primary;              // single-context prompt
    std::string neutral, induced;     // dual-context prompts
    bool dual = false;
};

condition_prompts prompts_for(const mc_item & item, method_kind condition) {
    // the induced prompt is reconstructible from the item; an empty planted
    // statement degenerates to the bare question
    const std::string induced = item.induced_statement.empty()
        ? item.question
        : inject_false_answer(item.question, item.induced_statement);
    switch (condition) {
        case method_kind::base:
        case method_kind::neutral_only:
            return {item.question, {}, {}, false};
        case method_kind::induced:
            return {induced, {}, {}, false};
        case method_kind::ccd:
            return {{}, item.question, induced, true};
        case method_kind::vanilla_cd:
            return {{}, induced, induced, true};
    }
    return {item.question, {}, {}, false};
}

} // namespace

mc_scores score_choices(const lm_backend & backend,
                        const lm_backend * second_backend,
                        const mc_item & item,
                        method_kind condition,
                        const decoding_params & params) {
    params.validate();
    item.validate();
    if (condition == method_kind::vanilla_cd && second_backend == nullptr) {
        throw ccd_error(errc::method_backend_mismatch,
                        "vanilla_cd scoring needs a second backend");
    }

    const condition_prompts cp = prompts_for(item, condition);
    const lm_backend & neutral_b = backend;
    const lm_backend & induced_b =
        (condition == method_kind::vanilla_cd) ? *second_backend : backend;
    if (&neutral_b != &induced_b) {
        if (neutral_b.descriptor().vocab_hash != induced_b.descriptor().vocab_hash) {
            throw ccd_error(errc::vocabulary_mismatch,
                            "backends disagree on vocabulary");
        }
    }

    mc_scores out;
    out.per_choice_logprob.reserve(item.choices.size());
    for (const std::string & choice : item.choices) {
        const std::vector<token_id> forced = backend.tokenize(choice);
        double lp = 0.0;
        if (!cp.dual) {
            generation_state state{backend.tokenize(cp.primary), {}};
            for (token_id tok : forced) {
                lp += forced_logprob_single(backend, state, tok);
                state.generated.push_back(tok);
            }
        } else {
            // teacher forcing drives both contexts with the same choice token
            generation_state ns{neutral_b.tokenize(cp.neutral), {}};
            generation_state is{induced_b.tokenize(cp.induced), {}};
            for (token_id tok : forced) {
                const step_result sr = ccd_step(neutral_b.next_logits(ns),
                                                induced_b.next_logits(is), params);
                const double p = sr.probs[size_t(tok)];
                lp += p > 0.0 ? std::max(std::log(p), MIN_LOGPROB) : MIN_LOGPROB;
                ns.generated.push_back(tok);
                is.generated.push_back(tok);
            }
        }
        out.per_choice_logprob.push_back(lp);
    }
    return out;
}

mc_summary mc_metrics(std::span<const mc_item> items, std::span<const mc_scores> scores) {
    if (items.empty() || items.size() != scores.size()) {
        throw ccd_error(errc::empty_outcomes, "need matching, nonempty items and scores");
    }
    double mc1_sum = 0.0, mc2_sum = 0.0, mc3_sum = 0.0, over_half = 0.0;
    for (size_t i = 0; i < items.size(); ++i) {
        const mc_item & item = items[i];
        item.validate();
        const auto & lp = scores[i].per_choice_logprob;
        if (lp.size() != item.choices.size()) {
            throw ccd_error(errc::malformed_item,
                            "score vector does not match choices for '" + item.id + "'");
        }

        // MC1: the single top choice must be correct; ties fail
        size_t best = 0;
        int best_count = 1;
        for (size_t c = 1; c < lp.size(); ++c) {
            if (lp[c] > lp[best]) {
                best = c;
                best_count = 1;
            } else if (lp[c] == lp[best]) {
                ++best_count;
            }
        }
        if (best_count == 1 && item.correct_mask[best]) {
            mc1_sum += 1.0;
        }

        // MC2: normalized probability mass on the correct choices,
        // max-subtracted for stability
        double mx = lp[0];
        for (double x : lp) mx = std::max(mx, x);
        double num = 0.0, den = 0.0;
        for (size_t c = 0; c < lp.size(); ++c) {
            const double w = std::exp(lp[c] - mx);
            den += w;
            if (item.correct_mask[c]) num += w;
        }
        const double mass = num / den;
        mc2_sum += mass;
        if (mass > 0.5) over_half += 1.0;

        // MC3: fraction of correct choices strictly above every incorrect one
        double max_incorrect = -std::numeric_limits<double>::infinity();
        for (size_t c = 0; c < lp.size(); ++c) {
            if (!item.correct_mask[c]) max_incorrect = std::max(max_incorrect, lp[c]);
        }
        int n_correct = 0, n_above = 0;
        for (size_t c = 0; c < lp.size(); ++c) {
            if (item.correct_mask[c]) {
                ++n_correct;
                if (lp[c] > max_incorrect) ++n_above;
            }
        }
        mc3_sum += double(n_above) / double(n_correct);
    }
    const double n = double(items.size());
    return {100.0 * mc1_sum / n, 100.0 * mc2_sum / n, 100.0 * mc3_sum / n,
            100.0 * over_half / n};
}

namespace {

mc_item item_of(const induced_example & ex) {
    mc_item item;
    item.id = ex.id;
    item.question = ex.text;
    for (const std::string & c : ex.correct_answers) {
        item.choices.push_back(c);
        item.correct_mask.push_back(1);
    }
    for (const std::string & c : ex.incorrect_answers) {
        item.choices.push_back(c);
        item.correct_mask.push_back(0);
    }
    item.induced_statement =
        ex.par.kind == paradigm_kind::false_answer_prefix ? ex.par.induced_label : "";
    return item;
}

sentiment_label label_of(const std::string & s) {
    if (s == "positive") return sentiment_label::positive;
    if (s == "negative") return sentiment_label::negative;
    return sentiment_label::unparsed;
}

// evaluate one sentiment example under the given method
classification_outcome eval_sentiment_one(const induced_example & ex,
                                          method_kind method,
                                          const lm_backend & backend,
                                          const lm_backend * second,
                                          const decoding_params & params) {
    generation_result res;
    switch (method) {
        case method_kind::base:
            res = decode_single(backend, ex.base_prompt, params);
            break;
        case method_kind::induced:
            res = decode_single(backend, ex.induced_prompt, params);
            break;
        case method_kind::neutral_only:
            res = decode_single(backend, ex.neutral_prompt, params);
            break;
        case method_kind::ccd:
            res = decode_dual(backend, backend, ex.neutral_prompt, ex.induced_prompt, params);
            break;
        case method_kind::vanilla_cd:
            res = decode_dual(backend, *second, ex.induced_prompt, ex.induced_prompt, params);
            break;
    }
    classification_outcome o;
    o.example_id = ex.id;
    o.predicted = parse_sentiment(res.text);
    o.true_label = label_of(ex.true_label);
    o.raw_text = res.text;
    return o;
}

// run fn(i) over [0, n) on `jobs` threads, rethrowing the first failure
void parallel_for(size_t n, int jobs, const std::function<void(size_t)> & fn) {
    const int threads = std::max(1, jobs);
    if (threads == 1 || n <= 1) {
        for (size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<size_t> next{0};
    std::exception_ptr failure;
    std::mutex failure_mutex;
    auto worker = [&]() {
        for (;;) {
            const size_t i = next.fetch_add(1);
            if (i >= n) return;
            try {
                fn(i);
            } catch (...) {
                std::lock_guard<std::mutex> lock(failure_mutex);
                if (!failure) failure = std::current_exception();
                return;
            }
        }
    };
    std::vector<std::thread> pool;
    for (int t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (auto & th : pool) th.join();
    if (failure) std::rethrow_exception(failure);
}

} // namespace

eval_run run_eval(task_kind task,
                  std::span<const induced_example> examples,
                  method_kind method,
                  const lm_backend & backend,
                  const lm_backend * second_backend,
                  const decoding_params & params,
                  int jobs) {
    params.validate();
    if (examples.empty()) {
        throw ccd_error(errc::empty_outcomes, "dataset has no examples");
    }
    if (method == method_kind::vanilla_cd && second_backend == nullptr) {
        throw ccd_error(errc::method_backend_mismatch, "vanilla_cd needs --backend2");
    }

    eval_run run;
    run.report.method = method;
    run.report.task = task;
    run.report.n_examples = int(examples.size());
    run.report.params = params;
    run.report.backend = backend.descriptor();
    if (method == method_kind::vanilla_cd) {
        run.report.backend2 = second_backend->descriptor();
    }

    if (task == task_kind::sentiment) {
        std::vector<classification_outcome> outcomes(examples.size());
        parallel_for(examples.size(), jobs, [&](size_t i) {
            outcomes[i] = eval_sentiment_one(examples[i], method, backend,
                                             second_backend, params);
        });
        auto [accuracy, f1] = accuracy_f1(outcomes);
        run.report.accuracy = accuracy;
        run.report.f1 = f1;
        for (const auto & o : outcomes) {
            json row;
            row["example_id"] = o.example_id;
            row["method"] = method_kind_name(method);
            row["predicted"] = sentiment_label_name(o.predicted);
            row["true_label"] = sentiment_label_name(o.true_label);
            run.per_example_jsonl.push_back(row.dump());
        }
    } else {
        std::vector<mc_item> items(examples.size());
        std::vector<mc_scores> scores(examples.size());
        parallel_for(examples.size(), jobs, [&](size_t i) {
            items[i] = item_of(examples[i]);
            scores[i] = score_choices(backend, second_backend, items[i], method, params);
        });
        const mc_summary summary = mc_metrics(items, scores);
        run.report.mc1 = summary.mc1;
        run.report.mc2 = summary.mc2;
        run.report.mc3 = summary.mc3;
        run.report.mc2_over_half = summary.mc2_over_half;
        for (size_t i = 0; i < examples.size(); ++i) {
            json row;
            row["example_id"] = items[i].id;
            row["method"] = method_kind_name(method);
            row["choice_logprobs"] = scores[i].per_choice_logprob;
            json mask = json::array();
            for (char c : items[i].correct_mask) mask.push_back(bool(c));
            row["correct_mask"] = mask;
            run.per_example_jsonl.push_back(row.dump());
        }
    }
    return run;
}

} // namespace ccd
