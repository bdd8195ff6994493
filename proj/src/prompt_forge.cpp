#include "ccd/prompt_forge.hpp"

#include <algorithm>
#include <fstream>
#include <random>
#include <sstream>

#include "ccd/decoder.hpp"
#include "ccd/errors.hpp"

#include "json_util.hpp"

namespace ccd {

const char * task_kind_name(task_kind task) {
    return task == task_kind::sentiment ? "sentiment" : "fact";
}

task_kind parse_task_kind(std::string_view name) {
    if (name == "sentiment") return task_kind::sentiment;
    if (name == "fact") return task_kind::fact;
    throw ccd_error(errc::invalid_argument, "unknown task '" + std::string(name) + "'");
}

const char * paradigm_kind_name(paradigm_kind kind) {
    switch (kind) {
        case paradigm_kind::base:                return "base";
        case paradigm_kind::misleading_query:    return "misleading";
        case paradigm_kind::fabricated_details:  return "fabricated";
        case paradigm_kind::false_answer_prefix: return "false_answer";
    }
    return "base";
}

paradigm_kind parse_paradigm_kind(std::string_view name) {
    if (name == "base") return paradigm_kind::base;
    if (name == "misleading") return paradigm_kind::misleading_query;
    if (name == "fabricated") return paradigm_kind::fabricated_details;
    if (name == "false_answer") return paradigm_kind::false_answer_prefix;
    throw ccd_error(errc::invalid_argument, "unknown paradigm '" + std::string(name) + "'");
}

void paradigm::validate() const {
    const bool fab = kind == paradigm_kind::fabricated_details;
    if (fab && detail_count <= 0) {
        throw ccd_error(errc::invalid_argument, "fabricated paradigm needs detail_count > 0");
    }
    if (!fab && detail_count != 0) {
        throw ccd_error(errc::invalid_argument, "detail_count only applies to fabricated");
    }
    if (kind == paradigm_kind::base && !induced_label.empty()) {
        throw ccd_error(errc::invalid_argument, "base paradigm carries no induced label");
    }
}

namespace {

bool is_sentiment_label(std::string_view label) {
    return label == "positive" || label == "negative";
}

void require_sentiment_label(std::string_view label) {
    if (!is_sentiment_label(label)) {
        throw ccd_error(errc::invalid_argument,
                        "induced label must be 'positive' or 'negative', got '"
                            + std::string(label) + "'");
    }
}

std::string flip_label(const std::string & label) {
    return label == "positive" ? "negative" : "positive";
}

bool ends_with(std::string_view s, std::string_view suffix) {
    return s.size() >= suffix.size()
        && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

std::string misleading_suffix(std::string_view label) {
    return std::string(MISLEADING_PREFIX) + std::string(label) + ".";
}

std::string fabricated_question_tail(std::string_view label) {
    return std::string(FABRICATED_MID) + std::string(label) + "?";
}

} // namespace

void detail_bank::validate() const {
    if (clauses.empty()) {
        throw ccd_error(errc::invalid_argument, "detail bank is empty");
    }
    for (const auto & [label, list] : clauses) {
        require_sentiment_label(label);
        if (list.empty()) {
            throw ccd_error(errc::invalid_argument, "no clauses for label '" + label + "'");
        }
        for (const std::string & clause : list) {
            if (clause.empty() || clause.find('\n') != std::string::npos) {
                throw ccd_error(errc::invalid_argument,
                                "detail clauses must be nonempty single lines");
            }
        }
    }
}

const std::vector<std::string> & detail_bank::for_label(const std::string & label) const {
    auto it = clauses.find(label);
    if (it == clauses.end()) {
        throw ccd_error(errc::invalid_argument, "detail bank has no label '" + label + "'");
    }
    return it->second;
}

detail_bank detail_bank::builtin() {
    detail_bank bank;
    bank.clauses["positive"] = {
        "the service being described as attentive and warm",
        "a dish the reviewer calls unforgettable",
        "the staff greeting regulars by name",
        "the acting being praised as heartfelt",
        "the pacing keeping the audience engaged",
        "a cozy atmosphere mentioned near the end",
    };
    bank.clauses["negative"] = {
        "the service being described as slow and inattentive",
        "a dish the reviewer sends back untouched",
        "the staff ignoring repeated requests",
        "the acting being dismissed as wooden",
        "the pacing dragging through the middle act",
        "a lingering smell mentioned near the entrance",
    };
    return bank;
}

detail_bank detail_bank::from_json_text(std::string_view text) {
    json j = parse_json_text(text, "detail bank");
    detail_bank bank;
    for (auto it = j.begin(); it != j.end(); ++it) {
        bank.clauses[it.key()] = it.value().get<std::vector<std::string>>();
    }
    bank.validate();
    return bank;
}

detail_bank detail_bank::load(const std::string & path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw ccd_error(errc::io_error, "cannot open detail bank '" + path + "'");
    }
    std::ostringstream ss;
    ss << in.rdbuf();
    return from_json_text(ss.str());
}

std::string make_base_prompt(std::string_view text, task_kind task) {
    if (text.empty()) {
        throw ccd_error(errc::empty_text, "source text is empty");
    }
    if (task == task_kind::sentiment) {
        return std::string(text) + "\n" + std::string(BASE_SENTIMENT_QUESTION);
    }
    return std::string(text);  // fact prompts are the bare question
}

std::string inject_misleading(std::string_view base_prompt, std::string_view induced_label) {
    if (base_prompt.empty()) {
        throw ccd_error(errc::empty_text, "base prompt is empty");
    }
    require_sentiment_label(induced_label);
    return std::string(base_prompt) + misleading_suffix(induced_label);
}

std::string inject_fabricated(std::string_view base_prompt,
                              std::span<const std::string> details,
                              std::string_view induced_label) {
    if (details.empty()) {
        throw ccd_error(errc::no_details, "fabricated injection needs at least one detail");
    }
    require_sentiment_label(induced_label);
    for (const std::string & d : details) {
        if (d.empty() || d.find('\n') != std::string::npos) {
            throw ccd_error(errc::invalid_argument,
                            "detail clauses must be nonempty single lines");
        }
    }
    const std::string question_mark = "\n" + std::string(BASE_SENTIMENT_QUESTION);
    if (!ends_with(base_prompt, question_mark)) {
        throw ccd_error(errc::invalid_argument,
                        "base prompt does not end with the base question");
    }

    // "D1", "D1 and D2", "D1, D2 and D3", ...
    std::string joined;
    for (size_t i = 0; i < details.size(); ++i) {
        if (i > 0) {
            joined += (i + 1 == details.size()) ? " and " : ", ";
        }
        joined += details[i];
    }

    std::string out(base_prompt.substr(0, base_prompt.size() - BASE_SENTIMENT_QUESTION.size()));
    out += std::string(FABRICATED_PREFIX) + joined + fabricated_question_tail(induced_label);
    return out;
}

std::string inject_false_answer(std::string_view question, std::string_view false_answer) {
    if (question.empty()) {
        throw ccd_error(errc::empty_text, "question is empty");
    }
    if (false_answer.empty()) {
        throw ccd_error(errc::empty_injection, "false answer is empty");
    }
    return std::string(FALSE_ANSWER_PREFIX) + std::string(false_answer) + ". "
        + std::string(question);
}

namespace {

std::string neutralize_template(std::string_view induced, const paradigm & par) {
    switch (par.kind) {
        case paradigm_kind::base:
            return std::string(induced);  // fixed point

        case paradigm_kind::misleading_query: {
            // strip exactly one appended opinion clause
            std::vector<std::string> candidates;
            if (!par.induced_label.empty()) {
                candidates.push_back(misleading_suffix(par.induced_label));
            } else {
                candidates.push_back(misleading_suffix("positive"));
                candidates.push_back(misleading_suffix("negative"));
            }
            for (const std::string & suffix : candidates) {
                if (ends_with(induced, suffix)) {
                    return std::string(induced.substr(0, induced.size() - suffix.size()));
                }
            }
            throw ccd_error(errc::unknown_paradigm,
                            "prompt does not end with a misleading clause");
        }

        case paradigm_kind::fabricated_details: {
            // the injected question is the suffix that starts at the last
            // fabricated marker; anything matching earlier belongs to the text
            const std::string marker = "\n" + std::string(FABRICATED_PREFIX);
            const size_t at = induced.rfind(marker);
            if (at == std::string_view::npos) {
                throw ccd_error(errc::unknown_paradigm, "no fabricated-details question found");
            }
            std::vector<std::string> tails;
            if (!par.induced_label.empty()) {
                tails.push_back(fabricated_question_tail(par.induced_label));
            } else {
                tails.push_back(fabricated_question_tail("positive"));
                tails.push_back(fabricated_question_tail("negative"));
            }
            for (const std::string & tail : tails) {
                if (ends_with(induced, tail) && induced.size() - tail.size() > at) {
                    return std::string(induced.substr(0, at)) + "\n"
                        + std::string(BASE_SENTIMENT_QUESTION);
                }
            }
            throw ccd_error(errc::unknown_paradigm,
                            "fabricated-details question has an unexpected tail");
        }

        case paradigm_kind::false_answer_prefix: {
            if (!induced.starts_with(FALSE_ANSWER_PREFIX)) {
                throw ccd_error(errc::unknown_paradigm, "no false-answer statement found");
            }
            if (!par.induced_label.empty()) {
                // the paradigm carries the planted statement: strip it exactly
                const std::string prefix = std::string(FALSE_ANSWER_PREFIX)
                    + par.induced_label + ". ";
                if (!induced.starts_with(prefix)) {
                    throw ccd_error(errc::unknown_paradigm,
                                    "false-answer statement does not match the paradigm");
                }
                return std::string(induced.substr(prefix.size()));
            }
            // structural fallback: statement runs to the first sentence break
            const size_t brk = induced.find(". ", FALSE_ANSWER_PREFIX.size());
            if (brk == std::string_view::npos) {
                throw ccd_error(errc::unknown_paradigm, "false-answer statement never ends");
            }
            return std::string(induced.substr(brk + 2));
        }
    }
    throw ccd_error(errc::unknown_paradigm, "unhandled paradigm");
}

} // namespace

std::string neutralize(std::string_view induced_prompt,
                       const paradigm & par,
                       const lm_backend * rewriter) {
    if (induced_prompt.empty()) {
        throw ccd_error(errc::empty_text, "induced prompt is empty");
    }
    if (rewriter != nullptr) {
        // freeform mode mirrors an LLM-based cleanup of wild prompts
        decoding_params params;
        params.max_tokens = 128;
        generation_result res = decode_single(
            *rewriter, std::string(NEUTRALIZE_INSTRUCTION) + std::string(induced_prompt),
            params);
        return res.text;
    }
    return neutralize_template(induced_prompt, par);
}

std::vector<induced_example> forge_dataset(std::span<const source_record> records,
                                           task_kind task,
                                           const paradigm & spec,
                                           const detail_bank & bank,
                                           uint64_t seed) {
    if (task == task_kind::sentiment) {
        if (spec.kind == paradigm_kind::false_answer_prefix) {
            throw ccd_error(errc::invalid_argument,
                            "false_answer is a fact-task paradigm");
        }
    } else {
        if (spec.kind == paradigm_kind::misleading_query
            || spec.kind == paradigm_kind::fabricated_details) {
            throw ccd_error(errc::invalid_argument,
                            paradigm_kind_name(spec.kind)
                                + std::string(" is a sentiment-task paradigm"));
        }
    }
    if (spec.kind == paradigm_kind::fabricated_details && spec.detail_count <= 0) {
        throw ccd_error(errc::invalid_argument, "fabricated paradigm needs detail_count > 0");
    }

    std::mt19937_64 rng(seed);
    std::vector<induced_example> out;
    out.reserve(records.size());

    for (const source_record & rec : records) {
        induced_example ex;
        ex.id = rec.id;
        ex.text = rec.text;
        ex.base_prompt = make_base_prompt(rec.text, task);
        ex.par.kind = spec.kind;

        if (task == task_kind::sentiment) {
            if (!is_sentiment_label(rec.label)) {
                throw ccd_error(errc::unlabeled_record,
                                "record '" + rec.id + "' has no usable sentiment label");
            }
            ex.true_label = rec.label;
            const std::string induced_label = flip_label(rec.label);

            switch (spec.kind) {
                case paradigm_kind::base:
                    ex.induced_prompt = ex.base_prompt;
                    break;
                case paradigm_kind::misleading_query:
                    ex.par.induced_label = induced_label;
                    ex.induced_prompt = inject_misleading(ex.base_prompt, induced_label);
                    break;
                case paradigm_kind::fabricated_details: {
                    ex.par.induced_label = induced_label;
                    ex.par.detail_count = spec.detail_count;
                    const auto & pool = bank.for_label(induced_label);
                    if (pool.size() < size_t(spec.detail_count)) {
                        throw ccd_error(errc::invalid_argument,
                                        "detail bank has " + std::to_string(pool.size())
                                            + " clauses for '" + induced_label + "', need "
                                            + std::to_string(spec.detail_count));
                    }
                    // seeded partial shuffle = sample without replacement
                    std::vector<size_t> idx(pool.size());
                    for (size_t i = 0; i < idx.size(); ++i) idx[i] = i;
                    for (int k = 0; k < spec.detail_count; ++k) {
                        const size_t j = k + size_t(rng() % (idx.size() - size_t(k)));
                        std::swap(idx[size_t(k)], idx[j]);
                    }
                    std::vector<std::string> picked;
                    for (int k = 0; k < spec.detail_count; ++k) {
                        picked.push_back(pool[idx[size_t(k)]]);
                    }
                    ex.induced_prompt = inject_fabricated(ex.base_prompt, picked, induced_label);
                    break;
                }
                case paradigm_kind::false_answer_prefix:
                    break;  // rejected above
            }
        } else {
            if (rec.correct_answers.empty() || rec.incorrect_answers.empty()) {
                throw ccd_error(errc::unlabeled_record,
                                "record '" + rec.id + "' needs correct and incorrect answers");
            }
            ex.true_label = rec.correct_answers.front();
            ex.correct_answers = rec.correct_answers;
            ex.incorrect_answers = rec.incorrect_answers;

            if (spec.kind == paradigm_kind::base) {
                ex.induced_prompt = ex.base_prompt;
            } else {
                const size_t pick = size_t(rng() % rec.incorrect_answers.size());
                const std::string & false_answer = rec.incorrect_answers[pick];
                ex.par.induced_label = false_answer;
                ex.induced_prompt = inject_false_answer(ex.base_prompt, false_answer);
            }
        }

        // template inverse restores the base prompt byte-identically
        ex.neutral_prompt = neutralize(ex.induced_prompt, ex.par);
        if (ex.neutral_prompt != ex.base_prompt) {
            throw ccd_error(errc::unknown_paradigm,
                            "neutralize failed to invert the injection for '" + rec.id + "'");
        }
        out.push_back(std::move(ex));
    }
    return out;
}

} // namespace ccd
