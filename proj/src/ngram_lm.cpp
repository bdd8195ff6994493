#include "ccd/ngram_lm.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include "ccd/errors.hpp"

#include "json_util.hpp"

namespace ccd {

static constexpr const char * EOS_TOKEN = "</s>";
static constexpr const char * UNK_TOKEN = "<unk>";

std::string ngram_lm::pack_key(std::span<const token_id> ids) {
    std::string key;
    key.reserve(ids.size() * sizeof(token_id));
    for (token_id id : ids) {
        key.append(reinterpret_cast<const char *>(&id), sizeof(id));
    }
    return key;
}

void ngram_lm::count_corpus(const std::vector<std::vector<token_id>> & lines) {
    levels_.assign(size_t(order_), {});
    for (const auto & line : lines) {
        for (size_t j = 0; j < line.size(); ++j) {
            const token_id next = line[j];
            const size_t max_len = std::min(size_t(order_ - 1), j);
            for (size_t len = 0; len <= max_len; ++len) {
                std::span<const token_id> ctx(line.data() + (j - len), len);
                context_counts & cc = levels_[len][pack_key(ctx)];
                cc.counts[next] += 1;
                cc.total += 1;
            }
        }
    }
}

ngram_lm ngram_lm::train(const std::vector<std::string> & corpus_lines,
                         int order, double smoothing) {
    if (order < 1) {
        throw ccd_error(errc::invalid_argument, "order must be >= 1");
    }
    if (!(smoothing > 0.0) || !std::isfinite(smoothing)) {
        throw ccd_error(errc::invalid_argument, "smoothing must be > 0");
    }

    ngram_lm lm;
    lm.order_ = order;
    lm.smoothing_ = smoothing;
    lm.vocab_.tokens = {EOS_TOKEN, UNK_TOKEN};
    lm.vocab_.eos = 0;
    lm.vocab_.unk = 1;

    // first-occurrence word ids, then one implicit eos per line
    std::unordered_map<std::string, token_id> word_ids;
    word_ids.emplace(EOS_TOKEN, 0);
    word_ids.emplace(UNK_TOKEN, 1);
    std::vector<std::vector<token_id>> lines;
    for (const std::string & raw : corpus_lines) {
        std::vector<token_id> ids;
        std::istringstream ss(raw);
        std::string word;
        while (ss >> word) {
            auto [it, inserted] = word_ids.emplace(word, token_id(lm.vocab_.tokens.size()));
            if (inserted) {
                lm.vocab_.tokens.push_back(word);
            }
            ids.push_back(it->second);
        }
        if (ids.empty()) {
            continue;  // blank lines carry no signal
        }
        ids.push_back(lm.vocab_.eos);
        lines.push_back(std::move(ids));
    }
    if (lines.empty()) {
        throw ccd_error(errc::empty_corpus, "no non-empty corpus lines");
    }
    lm.vocab_.validate();
    lm.count_corpus(lines);
    return lm;
}

backend_descriptor ngram_lm::descriptor() const {
    return {"ngram", vocab_.content_hash(), /*concurrent*/ true, /*deterministic*/ true};
}

std::vector<token_id> ngram_lm::tokenize(std::string_view text) const {
    return tokenize_whitespace(vocab_, text);
}

std::string ngram_lm::detokenize(std::span<const token_id> ids) const {
    return detokenize_spaced(vocab_, ids);
}

logit_vector ngram_lm::next_logits(const generation_state & state) const {
    validate_state(state);
    const std::vector<token_id> seq = state.full_sequence();

    // stupid backoff: longest context with observed continuations wins
    const context_counts * cc = nullptr;
    size_t len = std::min(size_t(order_ - 1), seq.size());
    for (;; --len) {
        std::span<const token_id> ctx(seq.data() + (seq.size() - len), len);
        auto it = levels_[len].find(pack_key(ctx));
        if (it != levels_[len].end() && it->second.total > 0) {
            cc = &it->second;
            break;
        }
        if (len == 0) break;
    }

    const double v_size = double(vocab_.size());
    const int64_t total = cc ? cc->total : 0;
    const double log_denom = std::log(double(total) + smoothing_ * v_size);
    logit_vector out(vocab_.size());
    for (size_t t = 0; t < vocab_.size(); ++t) {
        int64_t c = 0;
        if (cc) {
            auto it = cc->counts.find(token_id(t));
            if (it != cc->counts.end()) c = it->second;
        }
        // add-k estimate in log space; exp(out) sums to 1 by construction
        out[t] = std::log(double(c) + smoothing_) - log_denom;
    }
    return out;
}

std::string ngram_lm::to_json_text() const {
    json j;
    j["kind"] = "ngram_model";
    j["order"] = order_;
    j["smoothing"] = smoothing_;
    j["vocab"] = vocab_to_json(vocab_);
    json levels = json::array();
    for (const auto & level : levels_) {
        // sort contexts for a deterministic file
        std::vector<const std::string *> keys;
        keys.reserve(level.size());
        for (const auto & [key, _] : level) keys.push_back(&key);
        std::sort(keys.begin(), keys.end(),
                  [](const std::string * a, const std::string * b) { return *a < *b; });
        json out_level = json::array();
        for (const std::string * key : keys) {
            const context_counts & cc = level.at(*key);
            std::vector<token_id> ctx(key->size() / sizeof(token_id));
            std::memcpy(ctx.data(), key->data(), key->size());
            std::vector<std::pair<token_id, int64_t>> counts(cc.counts.begin(), cc.counts.end());
            std::sort(counts.begin(), counts.end());
            json jcounts = json::array();
            for (auto & [id, n] : counts) jcounts.push_back({id, n});
            out_level.push_back({{"context", ctx}, {"counts", jcounts}});
        }
        levels.push_back(std::move(out_level));
    }
    j["levels"] = std::move(levels);
    return j.dump() + "\n";
}

ngram_lm ngram_lm::from_json_text(std::string_view text) {
    json j = parse_json_text(text, "ngram model");
    const std::string kind = j.value("kind", "");
    if (kind == "ngram_corpus") {
        return train(j.at("lines").get<std::vector<std::string>>(),
                     j.at("order").get<int>(), j.at("smoothing").get<double>());
    }
    if (kind != "ngram_model") {
        throw ccd_error(errc::schema_violation,
                        "ngram file kind must be 'ngram_model' or 'ngram_corpus'");
    }
    ngram_lm lm;
    lm.order_ = j.at("order").get<int>();
    lm.smoothing_ = j.at("smoothing").get<double>();
    if (lm.order_ < 1 || !(lm.smoothing_ > 0.0)) {
        throw ccd_error(errc::schema_violation, "ngram model has invalid order/smoothing");
    }
    lm.vocab_ = vocab_from_json(j.at("vocab"));
    const json & levels = j.at("levels");
    if (!levels.is_array() || levels.size() != size_t(lm.order_)) {
        throw ccd_error(errc::schema_violation, "ngram model levels do not match order");
    }
    lm.levels_.assign(size_t(lm.order_), {});
    for (size_t len = 0; len < levels.size(); ++len) {
        for (const auto & e : levels[len]) {
            auto ctx = e.at("context").get<std::vector<token_id>>();
            if (ctx.size() != len) {
                throw ccd_error(errc::schema_violation, "ngram context length mismatch");
            }
            context_counts cc;
            for (const auto & pair : e.at("counts")) {
                token_id id = pair.at(0).get<token_id>();
                int64_t n = pair.at(1).get<int64_t>();
                if (!lm.vocab_.valid(id) || n <= 0) {
                    throw ccd_error(errc::schema_violation, "ngram count entry invalid");
                }
                cc.counts[id] = n;
                cc.total += n;
            }
            lm.levels_[len].emplace(pack_key(ctx), std::move(cc));
        }
    }
    return lm;
}

ngram_lm ngram_lm::load(const std::string & path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw ccd_error(errc::io_error, "cannot open ngram file '" + path + "'");
    }
    std::ostringstream ss;
    ss << in.rdbuf();
    return from_json_text(ss.str());
}

void ngram_lm::save(const std::string & path) const {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw ccd_error(errc::io_error, "cannot write ngram file '" + path + "'");
    }
    out << to_json_text();
}

} // namespace ccd
