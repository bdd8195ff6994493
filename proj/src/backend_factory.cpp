#include "ccd/backend_factory.hpp"

#include <cstdlib>

#include "ccd/errors.hpp"
#include "ccd/ngram_lm.hpp"
#include "ccd/remote_lm.hpp"
#include "ccd/table_lm.hpp"

namespace ccd {

std::unique_ptr<lm_backend> make_backend(std::string_view spec) {
    if (spec.rfind("table:", 0) == 0) {
        return std::make_unique<table_lm>(table_lm::load(std::string(spec.substr(6))));
    }
    if (spec.rfind("ngram:", 0) == 0) {
        return std::make_unique<ngram_lm>(ngram_lm::load(std::string(spec.substr(6))));
    }
    if (spec.rfind("remote:", 0) == 0) {
        std::string url(spec.substr(7));
        if (url.empty()) {
            if (const char * env = std::getenv("CCD_REMOTE_URL"); env && *env) {
                url = env;
            } else {
                throw ccd_error(errc::invalid_argument,
                                "'remote:' needs a URL or CCD_REMOTE_URL set");
            }
        }
        return std::make_unique<remote_lm>(url);
    }
    throw ccd_error(errc::invalid_argument,
                    "unknown backend spec '" + std::string(spec)
                        + "' (use table:, ngram:, or remote:)");
}

} // namespace ccd
