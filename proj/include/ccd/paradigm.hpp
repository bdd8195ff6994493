#pragma once

#include <string>
#include <string_view>

namespace ccd {

// how an induced prompt was (or will be) constructed from a base prompt
enum class paradigm_kind {
    base,                // no injection, induced == base
    misleading_query,    // sentiment: append "I'm pretty sure it's ..."
    fabricated_details,  // sentiment: replace question with fabricated details
    false_answer_prefix, // fact: prepend "It is said that ..."
};

struct paradigm {
    paradigm_kind kind = paradigm_kind::base;
    // number of fabricated detail clauses; > 0 iff kind == fabricated_details
    int detail_count = 0;
    // "positive"/"negative" for sentiment paradigms, the planted incorrect
    // answer for false_answer_prefix, empty for base
    std::string induced_label;

    // throws invalid_argument when the fields contradict the kind
    void validate() const;
};

const char * paradigm_kind_name(paradigm_kind kind);
paradigm_kind parse_paradigm_kind(std::string_view name);  // throws invalid_argument

} // namespace ccd
