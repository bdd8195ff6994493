#pragma once

#include <memory>
#include <string>
#include <string_view>

#include "ccd/backend.hpp"

namespace ccd {

// "table:path" | "ngram:path" | "remote:url"; bare "remote" (or "remote:")
// falls back to the CCD_REMOTE_URL environment variable
std::unique_ptr<lm_backend> make_backend(std::string_view spec);

} // namespace ccd
