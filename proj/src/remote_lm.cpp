#include "ccd/remote_lm.hpp"

#include <httplib.h>

#include "ccd/errors.hpp"

#include "json_util.hpp"

namespace ccd {

struct remote_lm::http_impl {
    explicit http_impl(const std::string & url) : client(url) {
        client.set_connection_timeout(5, 0);
        client.set_read_timeout(30, 0);
        client.set_write_timeout(30, 0);
        client.set_keep_alive(true);
    }
    httplib::Client client;
};

remote_lm::remote_lm(const std::string & base_url)
    : base_url_(base_url), http_(std::make_unique<http_impl>(base_url)) {
    if (base_url_.empty()) {
        throw ccd_error(errc::invalid_argument, "remote backend needs a URL");
    }
    httplib::Result res = http_->client.Get("/v1/vocab");
    if (!res) {
        throw ccd_error(errc::backend_unavailable,
                        "cannot reach '" + base_url_ + "/v1/vocab'");
    }
    if (res->status != 200) {
        throw ccd_error(errc::backend_unavailable,
                        "vocab endpoint returned status " + std::to_string(res->status));
    }
    json j = parse_json_text(res->body, "vocab response");
    vocab_ = vocab_from_json(j);
    vocab_.validate();
    if (!j.contains("vocab_hash") || !j.at("vocab_hash").is_string()) {
        throw ccd_error(errc::schema_violation, "vocab response lacks vocab_hash");
    }
    const std::string served = j.at("vocab_hash").get<std::string>();
    if (served != vocab_.content_hash()) {
        throw ccd_error(errc::vocabulary_mismatch,
                        "served vocab_hash " + served + " does not match token content");
    }
    if (j.contains("deterministic") && j.at("deterministic").is_boolean()) {
        deterministic_ = j.at("deterministic").get<bool>();
    }
}

remote_lm::~remote_lm() = default;

backend_descriptor remote_lm::descriptor() const {
    backend_descriptor d;
    d.name = "remote:" + base_url_;
    d.vocab_hash = vocab_.content_hash();
    d.concurrent_queries_safe = false;
    d.deterministic = deterministic_;
    return d;
}

std::vector<token_id> remote_lm::tokenize(std::string_view text) const {
    return tokenize_longest_match(vocab_, text);
}

std::string remote_lm::detokenize(std::span<const token_id> ids) const {
    return detokenize_concat(vocab_, ids);
}

logit_vector remote_lm::next_logits(const generation_state & state) const {
    json req;
    req["prompt_tokens"] = state.prompt_tokens;
    req["generated_tokens"] = state.generated;

    std::lock_guard<std::mutex> guard(mutex_);
    httplib::Result res = http_->client.Post("/v1/logits", req.dump(), "application/json");
    if (!res) {
        throw ccd_error(errc::backend_unavailable,
                        "cannot reach '" + base_url_ + "/v1/logits'");
    }
    switch (res->status) {
        case 200: break;
        case 409:
            throw ccd_error(errc::vocabulary_mismatch,
                            "server rejected token ids (vocabulary changed?)");
        case 413:
            throw ccd_error(errc::context_overflow,
                            "server rejected the request as too long");
        case 503:
            throw ccd_error(errc::backend_unavailable, "server reports it is unavailable");
        default:
            throw ccd_error(errc::backend_unavailable,
                            "logits endpoint returned status " + std::to_string(res->status));
    }

    json j = parse_json_text(res->body, "logits response");
    if (j.contains("vocab_hash") && j.at("vocab_hash").is_string()
        && j.at("vocab_hash").get<std::string>() != vocab_.content_hash()) {
        throw ccd_error(errc::vocabulary_mismatch, "vocab_hash changed between requests");
    }
    if (!j.contains("scores") || !j.at("scores").is_array()) {
        throw ccd_error(errc::schema_violation, "logits response lacks scores");
    }
    logit_vector scores = j.at("scores").get<logit_vector>();
    if (scores.size() != size_t(vocab_.size())) {
        throw ccd_error(errc::length_mismatch,
                        "server returned " + std::to_string(scores.size()) + " scores for a "
                            + std::to_string(vocab_.size()) + "-token vocabulary");
    }
    return scores;
}

} // namespace ccd
