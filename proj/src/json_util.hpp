#pragma once

// internal JSON helpers shared by the .cpp files; keeps json.hpp out of the
// public headers

#include <optional>
#include <string>

#include <nlohmann/json.hpp>

#include "ccd/errors.hpp"
#include "ccd/vocab.hpp"

namespace ccd {

using json = nlohmann::json;

inline json vocab_to_json(const vocabulary & v) {
    json j;
    j["tokens"] = v.tokens;
    j["eos"] = v.eos;
    j["unk"] = v.unk ? json(*v.unk) : json(nullptr);
    return j;
}

inline vocabulary vocab_from_json(const json & j) {
    vocabulary v;
    if (!j.is_object() || !j.contains("tokens") || !j.contains("eos")) {
        throw ccd_error(errc::schema_violation, "vocab object needs 'tokens' and 'eos'");
    }
    v.tokens = j.at("tokens").get<std::vector<std::string>>();
    v.eos = j.at("eos").get<token_id>();
    if (j.contains("unk") && !j.at("unk").is_null()) {
        v.unk = j.at("unk").get<token_id>();
    }
    v.validate();
    return v;
}

inline json parse_json_text(std::string_view text, const char * what) {
    json j = json::parse(text, nullptr, false);
    if (j.is_discarded()) {
        throw ccd_error(errc::schema_violation, std::string(what) + ": malformed JSON");
    }
    return j;
}

} // namespace ccd
