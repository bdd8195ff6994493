#pragma once

#include <memory>
#include <mutex>
#include <string>

#include "ccd/backend.hpp"

namespace ccd {

// client for the HTTP logits protocol:
//   GET  /v1/vocab  -> {"tokens":[str],"eos":int,"unk":int|null,"vocab_hash":hex}
//   POST /v1/logits    {"prompt_tokens":[int],"generated_tokens":[int]}
//                   -> {"scores":[float],"vocab_hash":hex}
// status 409 -> vocabulary_mismatch, 503 -> backend_unavailable.
// Token ids are NOT validated locally: the server is authoritative, so a
// stale vocabulary genuinely surfaces as a 409.
class remote_lm : public lm_backend {
public:
    // fetches and verifies the vocabulary; throws backend_unavailable when
    // the endpoint cannot be reached
    explicit remote_lm(const std::string & base_url);
    ~remote_lm() override;

    const vocabulary & vocab() const override { return vocab_; }
    backend_descriptor descriptor() const override;
    std::vector<token_id> tokenize(std::string_view text) const override;
    std::string detokenize(std::span<const token_id> ids) const override;
    logit_vector next_logits(const generation_state & state) const override;

private:
    struct http_impl;  // hides the HTTP client from this header

    std::string base_url_;
    vocabulary vocab_;
    bool deterministic_ = true;
    std::unique_ptr<http_impl> http_;
    mutable std::mutex mutex_;  // serialize requests; client is not thread-safe
};

} // namespace ccd
