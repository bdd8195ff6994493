#include "logits_service.hpp"

#include "ccd/errors.hpp"

#include "json_util.hpp"

namespace ccd {

namespace {

bool ids_in_range(const std::vector<token_id> & ids, token_id vocab_size) {
    for (token_id id : ids) {
        if (id < 0 || id >= vocab_size) return false;
    }
    return true;
}

} // namespace

void register_logits_routes(httplib::Server & server, const lm_backend & backend) {
    const std::string vocab_body = [&] {
        json j = vocab_to_json(backend.vocab());
        j["vocab_hash"] = backend.vocab().content_hash();
        j["deterministic"] = backend.descriptor().deterministic;
        return j.dump();
    }();

    server.Get("/v1/vocab", [vocab_body](const httplib::Request &, httplib::Response & res) {
        res.set_content(vocab_body, "application/json");
    });

    server.Post("/v1/logits", [&backend](const httplib::Request & req, httplib::Response & res) {
        json body = json::parse(req.body, nullptr, false);
        if (body.is_discarded() || !body.is_object() || !body.contains("prompt_tokens")
            || !body.at("prompt_tokens").is_array() || !body.contains("generated_tokens")
            || !body.at("generated_tokens").is_array()) {
            res.status = 400;
            res.set_content(json{{"error", "malformed request"}}.dump(), "application/json");
            return;
        }
        generation_state state;
        try {
            state.prompt_tokens = body.at("prompt_tokens").get<std::vector<token_id>>();
            state.generated = body.at("generated_tokens").get<std::vector<token_id>>();
        } catch (const json::exception &) {
            res.status = 400;
            res.set_content(json{{"error", "token ids must be integers"}}.dump(),
                            "application/json");
            return;
        }
        // ids outside the served vocabulary mean the client holds a different
        // vocabulary than we do: that is a mismatch, not a malformed request
        if (!ids_in_range(state.prompt_tokens, backend.vocab().size())
            || !ids_in_range(state.generated, backend.vocab().size())) {
            res.status = 409;
            res.set_content(json{{"error", "token ids outside served vocabulary"}}.dump(),
                            "application/json");
            return;
        }
        try {
            logit_vector scores = backend.next_logits(state);
            json out;
            out["scores"] = scores;
            out["vocab_hash"] = backend.vocab().content_hash();
            res.set_content(out.dump(), "application/json");
        } catch (const std::exception & e) {
            res.status = 503;
            res.set_content(json{{"error", e.what()}}.dump(), "application/json");
        }
    });
}

} // namespace ccd
