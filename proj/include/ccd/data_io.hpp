#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "ccd/eval.hpp"
#include "ccd/prompt_forge.hpp"

namespace ccd {

inline constexpr int FORGED_SCHEMA_VERSION = 1;

// effective run configuration; serialized canonically (sorted keys, no
// whitespace) for hashing, so the hash is stable across field order
struct run_config {
    task_kind task = task_kind::sentiment;
    std::vector<method_kind> methods;
    double alpha = 1.0;
    double beta = 0.2;
    int max_tokens = 16;
    uint64_t seed = 0;
    std::vector<std::string> backend_specs;
    std::string dataset_path;
    std::string output_dir;

    void validate() const;                // throws invalid_argument / schema_error
    std::string to_json_text() const;     // canonical form
    std::string config_hash() const;      // hex digest of the canonical form
    // strict parse: unknown fields are rejected with schema_error
    static run_config from_json_text(std::string_view text);
    static run_config load(const std::string & path);
};

struct dataset_balance {
    std::map<std::string, int> per_label;  // sentiment labels or "fact"
    int total = 0;
};

struct loaded_records {
    std::vector<source_record> records;
    dataset_balance balance;
};

// JSONL, one record per line; schema violations carry the 1-based line number
loaded_records load_source_records(const std::string & path, task_kind task);

// forged datasets round-trip byte-identically: load(write(x)) == x
std::vector<induced_example> load_forged(const std::string & path, task_kind task);
void write_forged(const std::string & path, std::span<const induced_example> examples);
std::string induced_example_to_json(const induced_example & ex);

// run manifest: one per output directory, updated under a lock file
struct manifest {
    std::string config_hash;
    std::string dataset_hash;
    std::string tool_version;
    std::vector<std::string> reports;  // basenames, sorted

    static manifest load(const std::string & path);
    void save(const std::string & path) const;
};

struct report_paths {
    std::string summary_path;
    std::string examples_path;
};

// write {task}_{method}_{hash8}.json plus the per-example JSONL next to it,
// both atomically (temp file + rename), and fold them into manifest.json;
// deterministic: identical inputs produce identical bytes
report_paths write_report(const eval_run & run,
                          const run_config & config,
                          const std::string & dataset_hash);

// helpers shared across the CLI and tests
std::string read_file(const std::string & path);            // throws io_error
void atomic_write_file(const std::string & path, std::string_view bytes);
std::string hash_file(const std::string & path);
// RFC 3339 UTC; honors SOURCE_DATE_EPOCH for reproducible runs
std::string current_timestamp();

} // namespace ccd
