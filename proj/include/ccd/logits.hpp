#pragma once

#include <limits>
#include <vector>

namespace ccd {

// raw backend scores and normalized distributions are both plain doubles;
// invariants live in the functions, not the container
using logit_vector = std::vector<double>;
using prob_vector  = std::vector<double>;

// internal masking sentinel; it never crosses a module boundary except as an
// exactly-zero probability after softmax
constexpr double MASKED_LOGIT = -std::numeric_limits<double>::infinity();

// floor for stored per-token log-probs: just below log(DBL_TRUE_MIN), so
// exp(floor) underflows to exactly 0 while the stored score stays finite
constexpr double MIN_LOGPROB = -745.0;

// max-subtracted softmax; -inf entries come out as exactly 0; throws
// all_masked when nothing is finite, invalid_argument on NaN or +inf
prob_vector softmax(const logit_vector & logits);

// log softmax with the same masking rules; masked entries are -inf (callers
// that persist scores clamp with MIN_LOGPROB)
logit_vector log_softmax(const logit_vector & logits);

} // namespace ccd
