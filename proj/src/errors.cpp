#include "ccd/errors.hpp"

namespace ccd {

const char * errc_name(errc code) {
    switch (code) {
        case errc::invalid_argument:        return "invalid_argument";
        case errc::unencodable_input:       return "unencodable_input";
        case errc::backend_unavailable:     return "backend_unavailable";
        case errc::vocabulary_mismatch:     return "vocabulary_mismatch";
        case errc::length_mismatch:         return "length_mismatch";
        case errc::all_masked:              return "all_masked";
        case errc::empty_corpus:            return "empty_corpus";
        case errc::context_overflow:        return "context_overflow";
        case errc::table_miss:              return "table_miss";
        case errc::unknown_paradigm:        return "unknown_paradigm";
        case errc::no_details:              return "no_details";
        case errc::empty_injection:         return "empty_injection";
        case errc::empty_text:              return "empty_text";
        case errc::unlabeled_record:        return "unlabeled_record";
        case errc::empty_outcomes:          return "empty_outcomes";
        case errc::malformed_item:          return "malformed_item";
        case errc::method_backend_mismatch: return "method_backend_mismatch";
        case errc::schema_violation:        return "schema_violation";
        case errc::io_error:                return "io_error";
    }
    return "unknown";
}

ccd_error::ccd_error(errc code, const std::string & msg)
    : std::runtime_error(std::string(errc_name(code)) + ": " + msg), code_(code) {}

schema_error::schema_error(int line, const std::string & field, const std::string & msg)
    : ccd_error(errc::schema_violation,
                (line > 0 ? "line " + std::to_string(line) + ", " : std::string())
                    + "field '" + field + "': " + msg),
      line_(line), field_(field) {}

} // namespace ccd
