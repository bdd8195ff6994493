#pragma once

#include <stdexcept>
#include <string>

namespace ccd {

// error taxonomy shared by every module; CLI maps these onto exit codes
enum class errc {
    invalid_argument,     // violated precondition (bad alpha, bad label, ...)
    unencodable_input,    // text cannot be tokenized and there is no unk token
    backend_unavailable,  // remote endpoint down / returned 5xx
    vocabulary_mismatch,  // token ids or vocab hashes disagree between parties
    length_mismatch,      // logit vectors of different sizes were combined
    all_masked,           // softmax input had no finite entry
    empty_corpus,         // n-gram training saw no usable lines
    context_overflow,     // backend-enforced context limit exceeded
    table_miss,           // table backend has no entry and no default scores
    unknown_paradigm,     // induced prompt does not match any known template
    no_details,           // fabricated-details injection got an empty list
    empty_injection,      // false-answer injection got an empty statement
    empty_text,           // base prompt construction got empty source text
    unlabeled_record,     // forge input record is missing a usable label
    empty_outcomes,       // metric aggregation over zero examples
    malformed_item,       // multiple-choice item fails its own invariants
    method_backend_mismatch,  // e.g. vanilla_cd without a second backend
    schema_violation,     // config/dataset content violates its schema
    io_error,             // filesystem or serialization failure
};

const char * errc_name(errc code);

class ccd_error : public std::runtime_error {
public:
    ccd_error(errc code, const std::string & msg);
    errc code() const noexcept { return code_; }

private:
    errc code_;
};

// schema violations carry the offending line and field for diagnostics;
// line is 1-based, 0 means "not line-addressed" (e.g. a config file)
class schema_error : public ccd_error {
public:
    schema_error(int line, const std::string & field, const std::string & msg);
    int line() const noexcept { return line_; }
    const std::string & field() const noexcept { return field_; }

private:
    int line_;
    std::string field_;
};

} // namespace ccd
