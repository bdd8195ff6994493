#include "ccd/data_io.hpp"

#include <cerrno>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <thread>

#include <fcntl.h>
#include <unistd.h>

#include "ccd/errors.hpp"
#include "ccd/hashing.hpp"
#include "ccd/version.hpp"

#include "json_util.hpp"

namespace fs = std::filesystem;

namespace ccd {

std::string read_file(const std::string & path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw ccd_error(errc::io_error, "cannot open '" + path + "'");
    }
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void atomic_write_file(const std::string & path, std::string_view bytes) {
    // write the full content next to the target, then rename into place so a
    // crash can never leave a truncated file under the final name
    const std::string tmp = path + ".tmp." + std::to_string(::getpid());
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) {
            throw ccd_error(errc::io_error, "cannot create temp file for '" + path + "'");
        }
        out.write(bytes.data(), std::streamsize(bytes.size()));
        out.flush();
        if (!out) {
            std::error_code ec;
            fs::remove(tmp, ec);
            throw ccd_error(errc::io_error, "short write for '" + path + "'");
        }
    }
    std::error_code ec;
    fs::rename(tmp, path, ec);
    if (ec) {
        fs::remove(tmp, ec);
        throw ccd_error(errc::io_error, "cannot rename into '" + path + "'");
    }
}

std::string hash_file(const std::string & path) {
    return content_hash(read_file(path));
}

std::string current_timestamp() {
    // reproducible runs pin the clock via SOURCE_DATE_EPOCH
    std::time_t t = 0;
    if (const char * env = std::getenv("SOURCE_DATE_EPOCH"); env && *env) {
        t = std::time_t(std::strtoll(env, nullptr, 10));
    } else {
        t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    }
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%04d-%02d-%02dT%02d:%02d:%02dZ",
                  tm.tm_year + 1900, tm.tm_mon + 1, tm.tm_mday,
                  tm.tm_hour, tm.tm_min, tm.tm_sec);
    return buf;
}

// ---------- run_config ----------

void run_config::validate() const {
    decoding_params params;
    params.alpha = alpha;
    params.beta = beta;
    params.max_tokens = max_tokens;
    params.validate();
    if (backend_specs.empty()) {
        throw ccd_error(errc::invalid_argument, "config needs at least one backend spec");
    }
    if (backend_specs.size() > 2) {
        throw ccd_error(errc::invalid_argument, "config supports at most two backend specs");
    }
}

std::string run_config::to_json_text() const {
    json j;
    j["task"] = task_kind_name(task);
    json ms = json::array();
    for (method_kind m : methods) ms.push_back(method_kind_name(m));
    j["methods"] = ms;
    j["alpha"] = alpha;
    j["beta"] = beta;
    j["max_tokens"] = max_tokens;
    j["seed"] = seed;
    j["backend_specs"] = backend_specs;
    j["dataset_path"] = dataset_path;
    j["output_dir"] = output_dir;
    // nlohmann objects iterate in key order, so dump() is already canonical
    return j.dump();
}

std::string run_config::config_hash() const {
    return content_hash(to_json_text());
}

run_config run_config::from_json_text(std::string_view text) {
    json j = parse_json_text(text, "run config");
    if (!j.is_object()) {
        throw schema_error(0, "(root)", "config must be a JSON object");
    }
    static const char * known[] = {"task", "methods", "alpha", "beta", "max_tokens",
                                   "seed", "backend_specs", "dataset_path", "output_dir"};
    for (auto it = j.begin(); it != j.end(); ++it) {
        bool ok = false;
        for (const char * k : known) {
            if (it.key() == k) {
                ok = true;
                break;
            }
        }
        if (!ok) {
            throw schema_error(0, it.key(), "unknown config field");
        }
    }

    run_config cfg;
    try {
        if (j.contains("task")) cfg.task = parse_task_kind(j.at("task").get<std::string>());
        if (j.contains("methods")) {
            for (const auto & m : j.at("methods")) {
                cfg.methods.push_back(parse_method_kind(m.get<std::string>()));
            }
        }
        if (j.contains("alpha")) cfg.alpha = j.at("alpha").get<double>();
        if (j.contains("beta")) cfg.beta = j.at("beta").get<double>();
        if (j.contains("max_tokens")) cfg.max_tokens = j.at("max_tokens").get<int>();
        if (j.contains("seed")) cfg.seed = j.at("seed").get<uint64_t>();
        if (j.contains("backend_specs")) {
            cfg.backend_specs = j.at("backend_specs").get<std::vector<std::string>>();
        }
        if (j.contains("dataset_path")) cfg.dataset_path = j.at("dataset_path").get<std::string>();
        if (j.contains("output_dir")) cfg.output_dir = j.at("output_dir").get<std::string>();
    } catch (const json::exception & e) {
        throw schema_error(0, "(config)", e.what());
    }
    return cfg;
}

run_config run_config::load(const std::string & path) {
    return from_json_text(read_file(path));
}

// ---------- datasets ----------

namespace {

json parse_jsonl_line(const std::string & line, int lineno) {
    json j = json::parse(line, nullptr, false);
    if (j.is_discarded() || !j.is_object()) {
        throw schema_error(lineno, "(line)", "not a JSON object");
    }
    return j;
}

std::string require_string(const json & j, const char * field, int lineno) {
    if (!j.contains(field) || !j.at(field).is_string()) {
        throw schema_error(lineno, field, "missing or not a string");
    }
    std::string v = j.at(field).get<std::string>();
    if (v.empty()) {
        throw schema_error(lineno, field, "must be nonempty");
    }
    return v;
}

std::vector<std::string> require_string_list(const json & j, const char * field, int lineno) {
    if (!j.contains(field) || !j.at(field).is_array() || j.at(field).empty()) {
        throw schema_error(lineno, field, "missing or not a nonempty array");
    }
    std::vector<std::string> out;
    for (const auto & e : j.at(field)) {
        if (!e.is_string() || e.get<std::string>().empty()) {
            throw schema_error(lineno, field, "entries must be nonempty strings");
        }
        out.push_back(e.get<std::string>());
    }
    return out;
}

std::vector<std::string> read_lines(const std::string & path) {
    std::string content = read_file(path);
    std::vector<std::string> lines;
    size_t pos = 0;
    while (pos < content.size()) {
        size_t end = content.find('\n', pos);
        if (end == std::string::npos) end = content.size();
        lines.push_back(content.substr(pos, end - pos));
        pos = end + 1;
    }
    return lines;
}

} // namespace

loaded_records load_source_records(const std::string & path, task_kind task) {
    loaded_records out;
    const std::vector<std::string> lines = read_lines(path);
    int lineno = 0;
    for (const std::string & line : lines) {
        ++lineno;
        if (line.empty()) continue;
        json j = parse_jsonl_line(line, lineno);
        source_record rec;
        rec.id = require_string(j, "id", lineno);
        if (task == task_kind::sentiment) {
            rec.text = require_string(j, "text", lineno);
            rec.label = require_string(j, "label", lineno);
            if (rec.label != "positive" && rec.label != "negative") {
                throw schema_error(lineno, "label", "must be 'positive' or 'negative'");
            }
            out.balance.per_label[rec.label] += 1;
        } else {
            rec.text = require_string(j, "question", lineno);
            rec.correct_answers = require_string_list(j, "correct_answers", lineno);
            rec.incorrect_answers = require_string_list(j, "incorrect_answers", lineno);
            out.balance.per_label["fact"] += 1;
        }
        out.balance.total += 1;
        out.records.push_back(std::move(rec));
    }
    return out;
}

// ---------- forged datasets ----------

namespace {

json paradigm_to_json(const paradigm & p) {
    json j;
    j["kind"] = paradigm_kind_name(p.kind);
    j["detail_count"] = p.detail_count;
    j["induced_label"] = p.induced_label;
    return j;
}

paradigm paradigm_from_json(const json & j, int lineno) {
    if (!j.is_object()) {
        throw schema_error(lineno, "paradigm", "must be an object");
    }
    paradigm p;
    try {
        p.kind = parse_paradigm_kind(j.at("kind").get<std::string>());
        p.detail_count = j.value("detail_count", 0);
        p.induced_label = j.value("induced_label", std::string());
    } catch (const std::exception & e) {
        throw schema_error(lineno, "paradigm", e.what());
    }
    return p;
}

} // namespace

std::string induced_example_to_json(const induced_example & ex) {
    json j;
    j["id"] = ex.id;
    j["text"] = ex.text;
    j["true_label"] = ex.true_label;
    if (!ex.correct_answers.empty()) j["correct_answers"] = ex.correct_answers;
    if (!ex.incorrect_answers.empty()) j["incorrect_answers"] = ex.incorrect_answers;
    j["base_prompt"] = ex.base_prompt;
    j["induced_prompt"] = ex.induced_prompt;
    j["neutral_prompt"] = ex.neutral_prompt;
    j["paradigm"] = paradigm_to_json(ex.par);
    j["schema_version"] = FORGED_SCHEMA_VERSION;
    return j.dump();
}

void write_forged(const std::string & path, std::span<const induced_example> examples) {
    std::string out;
    for (const induced_example & ex : examples) {
        out += induced_example_to_json(ex);
        out += '\n';
    }
    atomic_write_file(path, out);
}

std::vector<induced_example> load_forged(const std::string & path, task_kind task) {
    std::vector<induced_example> out;
    const std::vector<std::string> lines = read_lines(path);
    int lineno = 0;
    for (const std::string & line : lines) {
        ++lineno;
        if (line.empty()) continue;
        json j = parse_jsonl_line(line, lineno);
        if (!j.contains("schema_version") || !j.at("schema_version").is_number_integer()
            || j.at("schema_version").get<int>() != FORGED_SCHEMA_VERSION) {
            throw schema_error(lineno, "schema_version",
                               "must be " + std::to_string(FORGED_SCHEMA_VERSION));
        }
        induced_example ex;
        ex.id = require_string(j, "id", lineno);
        ex.text = require_string(j, "text", lineno);
        ex.true_label = require_string(j, "true_label", lineno);
        ex.base_prompt = require_string(j, "base_prompt", lineno);
        ex.induced_prompt = require_string(j, "induced_prompt", lineno);
        ex.neutral_prompt = require_string(j, "neutral_prompt", lineno);
        if (!j.contains("paradigm")) {
            throw schema_error(lineno, "paradigm", "missing");
        }
        ex.par = paradigm_from_json(j.at("paradigm"), lineno);
        if (task == task_kind::sentiment) {
            if (ex.true_label != "positive" && ex.true_label != "negative") {
                throw schema_error(lineno, "true_label", "must be 'positive' or 'negative'");
            }
            // induced labels must contradict the truth on sentiment data
            if (!ex.par.induced_label.empty() && ex.par.induced_label == ex.true_label) {
                throw schema_error(lineno, "paradigm",
                                   "induced_label must differ from true_label");
            }
        } else {
            if (j.contains("correct_answers")) {
                ex.correct_answers = require_string_list(j, "correct_answers", lineno);
            }
            if (j.contains("incorrect_answers")) {
                ex.incorrect_answers = require_string_list(j, "incorrect_answers", lineno);
            }
            if (ex.correct_answers.empty() || ex.incorrect_answers.empty()) {
                throw schema_error(lineno, "correct_answers",
                                   "fact examples need correct and incorrect answers");
            }
        }
        out.push_back(std::move(ex));
    }
    return out;
}

// ---------- manifest + reports ----------

manifest manifest::load(const std::string & path) {
    manifest m;
    json j = parse_json_text(read_file(path), "manifest");
    m.config_hash = j.value("config_hash", "");
    m.dataset_hash = j.value("dataset_hash", "");
    m.tool_version = j.value("tool_version", "");
    if (j.contains("reports")) {
        m.reports = j.at("reports").get<std::vector<std::string>>();
    }
    return m;
}

void manifest::save(const std::string & path) const {
    json j;
    j["config_hash"] = config_hash;
    j["dataset_hash"] = dataset_hash;
    j["tool_version"] = tool_version;
    j["reports"] = reports;
    atomic_write_file(path, j.dump(2) + "\n");
}

namespace {

// cross-process serialization of manifest updates
class manifest_lock {
public:
    explicit manifest_lock(const std::string & dir) : path_(dir + "/manifest.lock") {
        const auto deadline = std::chrono::steady_clock::now() + std::chrono::seconds(10);
        for (;;) {
            fd_ = ::open(path_.c_str(), O_CREAT | O_EXCL | O_WRONLY, 0644);
            if (fd_ >= 0) return;
            if (errno != EEXIST) {
                throw ccd_error(errc::io_error,
                                "cannot create lock file '" + path_ + "': " + std::strerror(errno));
            }
            if (std::chrono::steady_clock::now() > deadline) {
                throw ccd_error(errc::io_error, "timed out waiting for '" + path_ + "'");
            }
            std::this_thread::sleep_for(std::chrono::milliseconds(10));
        }
    }
    ~manifest_lock() {
        if (fd_ >= 0) {
            ::close(fd_);
            ::unlink(path_.c_str());
        }
    }
    manifest_lock(const manifest_lock &) = delete;
    manifest_lock & operator=(const manifest_lock &) = delete;

private:
    std::string path_;
    int fd_ = -1;
};

json report_to_json(const eval_run & run, const std::string & examples_basename) {
    const eval_report & r = run.report;
    json j;
    j["method"] = method_kind_name(r.method);
    j["task"] = task_kind_name(r.task);
    j["n_examples"] = r.n_examples;
    if (r.accuracy) j["accuracy"] = *r.accuracy;
    if (r.f1) j["f1"] = *r.f1;
    if (r.mc1) j["mc1"] = *r.mc1;
    if (r.mc2) j["mc2"] = *r.mc2;
    if (r.mc3) j["mc3"] = *r.mc3;
    if (r.mc2_over_half) j["mc2_over_half"] = *r.mc2_over_half;
    j["params"] = {
        {"alpha", r.params.alpha},
        {"beta", r.params.beta},
        {"max_tokens", r.params.max_tokens},
        {"mode", r.params.mode == decoding_params::gen_mode::greedy ? "greedy" : "sample"},
        {"seed", r.params.seed},
    };
    auto backend_json = [](const backend_descriptor & b) {
        return json{{"name", b.name},
                    {"vocab_hash", b.vocab_hash},
                    {"deterministic", b.deterministic},
                    {"concurrent_queries_safe", b.concurrent_queries_safe}};
    };
    j["backend"] = backend_json(r.backend);
    if (r.backend2) j["backend2"] = backend_json(*r.backend2);
    // flat copies kept for quick scanning of report directories
    j["alpha"] = r.params.alpha;
    j["beta"] = r.params.beta;
    j["seed"] = r.params.seed;
    j["vocab_hash"] = r.backend.vocab_hash;
    j["timestamp"] = current_timestamp();
    j["examples_path"] = examples_basename;
    j["tool_version"] = TOOL_VERSION;
    return j;
}

} // namespace

report_paths write_report(const eval_run & run,
                          const run_config & config,
                          const std::string & dataset_hash) {
    if (config.output_dir.empty()) {
        throw ccd_error(errc::invalid_argument, "config has no output_dir");
    }
    std::error_code ec;
    fs::create_directories(config.output_dir, ec);
    if (ec) {
        throw ccd_error(errc::io_error, "cannot create '" + config.output_dir + "'");
    }

    const std::string hash8 = config.config_hash().substr(0, 8);
    const std::string stem = std::string(task_kind_name(run.report.task)) + "_"
        + method_kind_name(run.report.method) + "_" + hash8;
    const std::string summary_base = stem + ".json";
    const std::string examples_base = stem + ".examples.jsonl";

    std::string examples_bytes;
    for (const std::string & row : run.per_example_jsonl) {
        examples_bytes += row;
        examples_bytes += '\n';
    }

    report_paths paths;
    paths.summary_path = config.output_dir + "/" + summary_base;
    paths.examples_path = config.output_dir + "/" + examples_base;
    atomic_write_file(paths.examples_path, examples_bytes);
    atomic_write_file(paths.summary_path, report_to_json(run, examples_base).dump(2) + "\n");

    {
        manifest_lock lock(config.output_dir);
        const std::string manifest_path = config.output_dir + "/manifest.json";
        manifest m;
        if (fs::exists(manifest_path)) {
            m = manifest::load(manifest_path);
        }
        m.config_hash = config.config_hash();
        m.dataset_hash = dataset_hash;
        m.tool_version = TOOL_VERSION;
        if (std::find(m.reports.begin(), m.reports.end(), summary_base) == m.reports.end()) {
            m.reports.push_back(summary_base);
        }
        std::sort(m.reports.begin(), m.reports.end());
        m.save(manifest_path);
    }
    return paths;
}

} // namespace ccd
