#include "ccd/table_lm.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include "ccd/errors.hpp"

#include "json_util.hpp"

namespace ccd {

table_lm::table_lm(vocabulary v) : vocab_(std::move(v)) {
    vocab_.validate();
}

void table_lm::check_scores(const logit_vector & scores) const {
    if (scores.size() != vocab_.size()) {
        throw ccd_error(errc::length_mismatch,
                        "scores length " + std::to_string(scores.size())
                            + " != vocab size " + std::to_string(vocab_.size()));
    }
    for (double s : scores) {
        if (!std::isfinite(s)) {
            throw ccd_error(errc::invalid_argument, "table scores must be finite");
        }
    }
}

std::string table_lm::key_of(const std::vector<token_id> & prompt,
                             const std::vector<token_id> & prefix) {
    // packed ids with a separator that cannot be an id
    std::string key;
    key.reserve((prompt.size() + prefix.size()) * 4 + 1);
    auto put = [&key](token_id id) {
        key.append(reinterpret_cast<const char *>(&id), sizeof(id));
    };
    for (token_id id : prompt) put(id);
    key.push_back('|');
    for (token_id id : prefix) put(id);
    return key;
}

void table_lm::program(const std::string & context, std::vector<token_id> prefix,
                       logit_vector scores) {
    check_scores(scores);
    for (token_id id : prefix) {
        if (!vocab_.valid(id)) {
            throw ccd_error(errc::vocabulary_mismatch,
                            "prefix id " + std::to_string(id) + " out of range");
        }
    }
    std::vector<token_id> prompt = tokenize(context);
    std::string key = key_of(prompt, prefix);
    auto it = index_.find(key);
    if (it != index_.end()) {
        entries_[it->second] = {context, std::move(prefix), std::move(scores)};
        return;
    }
    index_.emplace(std::move(key), entries_.size());
    entries_.push_back({context, std::move(prefix), std::move(scores)});
}

void table_lm::set_default_scores(logit_vector scores) {
    check_scores(scores);
    default_scores_ = std::move(scores);
    has_default_ = true;
}

backend_descriptor table_lm::descriptor() const {
    return {"table", vocab_.content_hash(), /*concurrent*/ true, /*deterministic*/ true};
}

std::vector<token_id> table_lm::tokenize(std::string_view text) const {
    return tokenize_longest_match(vocab_, text);
}

std::string table_lm::detokenize(std::span<const token_id> ids) const {
    return detokenize_concat(vocab_, ids);
}

logit_vector table_lm::next_logits(const generation_state & state) const {
    validate_state(state);
    auto it = index_.find(key_of(state.prompt_tokens, state.generated));
    if (it != index_.end()) {
        return entries_[it->second].scores;
    }
    if (has_default_) {
        return default_scores_;
    }
    throw ccd_error(errc::table_miss,
                    "no entry for state at step " + std::to_string(state.step())
                        + " and no default scores");
}

table_lm table_lm::from_json_text(std::string_view text) {
    json j = parse_json_text(text, "table fixture");
    if (!j.contains("vocab")) {
        throw ccd_error(errc::schema_violation, "table fixture: missing 'vocab'");
    }
    table_lm lm(vocab_from_json(j.at("vocab")));
    if (j.contains("entries")) {
        for (const auto & e : j.at("entries")) {
            lm.program(e.at("context").get<std::string>(),
                       e.value("prefix", std::vector<token_id>{}),
                       e.at("scores").get<logit_vector>());
        }
    }
    if (j.contains("default_scores") && !j.at("default_scores").is_null()) {
        lm.set_default_scores(j.at("default_scores").get<logit_vector>());
    }
    return lm;
}

table_lm table_lm::load(const std::string & path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw ccd_error(errc::io_error, "cannot open table fixture '" + path + "'");
    }
    std::ostringstream ss;
    ss << in.rdbuf();
    return from_json_text(ss.str());
}

std::string table_lm::to_json_text() const {
    json j;
    j["vocab"] = vocab_to_json(vocab_);
    j["entries"] = json::array();
    for (const auto & e : entries_) {
        j["entries"].push_back({{"context", e.context},
                                {"prefix", e.prefix},
                                {"scores", e.scores}});
    }
    if (has_default_) {
        j["default_scores"] = default_scores_;
    }
    return j.dump(2) + "\n";
}

void table_lm::save(const std::string & path) const {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw ccd_error(errc::io_error, "cannot write table fixture '" + path + "'");
    }
    out << to_json_text();
}

} // namespace ccd
