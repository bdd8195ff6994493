#pragma once

#include <httplib.h>

#include "ccd/backend.hpp"

namespace ccd {

// mounts the logits protocol onto an httplib server, answering from `backend`:
//   GET  /v1/vocab   -> 200 {"tokens","eos","unk","vocab_hash","deterministic"}
//   POST /v1/logits  -> 200 {"scores","vocab_hash"}
//                       400 malformed request body
//                       409 token ids outside the served vocabulary
//                       503 backend failed to score the request
// `backend` must outlive the server.
void register_logits_routes(httplib::Server & server, const lm_backend & backend);

} // namespace ccd
