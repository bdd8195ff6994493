#include "ccd/logits.hpp"

#include <cmath>
#include <string>

#include "ccd/errors.hpp"

namespace ccd {

namespace {

// finite or -inf; NaN and +inf are precondition violations
double checked_max(const logit_vector & logits) {
    if (logits.empty()) {
        throw ccd_error(errc::invalid_argument, "softmax of an empty vector");
    }
    double mx = MASKED_LOGIT;
    bool any_finite = false;
    for (double x : logits) {
        if (std::isnan(x) || x == std::numeric_limits<double>::infinity()) {
            throw ccd_error(errc::invalid_argument, "logit entries must be finite or -inf");
        }
        if (std::isfinite(x)) {
            any_finite = true;
            if (x > mx) mx = x;
        }
    }
    if (!any_finite) {
        throw ccd_error(errc::all_masked, "every logit entry is masked");
    }
    return mx;
}

} // namespace

prob_vector softmax(const logit_vector & logits) {
    const double mx = checked_max(logits);
    prob_vector out(logits.size());
    double total = 0.0;
    for (size_t i = 0; i < logits.size(); ++i) {
        // exp(-inf - mx) == 0 exactly, masked entries carry no mass
        out[i] = std::exp(logits[i] - mx);
        total += out[i];
    }
    for (double & p : out) {
        p /= total;
    }
    return out;
}

logit_vector log_softmax(const logit_vector & logits) {
    const double mx = checked_max(logits);
    double total = 0.0;
    for (double x : logits) {
        total += std::exp(x - mx);
    }
    const double lse = mx + std::log(total);
    logit_vector out(logits.size());
    for (size_t i = 0; i < logits.size(); ++i) {
        out[i] = logits[i] == MASKED_LOGIT ? MASKED_LOGIT : logits[i] - lse;
    }
    return out;
}

} // namespace ccd
