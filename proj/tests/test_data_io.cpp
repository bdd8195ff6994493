#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <string>
#include <vector>

#include <sys/types.h>
#include <sys/wait.h>
#include <signal.h>
#include <unistd.h>

#include <nlohmann/json.hpp>

#include "ccd/data_io.hpp"
#include "ccd/errors.hpp"
#include "ccd/hashing.hpp"
#include "ccd/version.hpp"

using namespace ccd;
namespace fs = std::filesystem;

namespace {

// self-cleaning scratch directory per test
struct temp_dir {
    fs::path path;
    temp_dir() {
        static int counter = 0;
        path = fs::temp_directory_path()
            / ("ccd_test_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
        fs::create_directories(path);
    }
    ~temp_dir() {
        std::error_code ec;
        fs::remove_all(path, ec);
    }
    std::string file(const std::string & name) const { return (path / name).string(); }
};

run_config small_config(const temp_dir & dir) {
    run_config cfg;
    cfg.task = task_kind::sentiment;
    cfg.methods = {method_kind::base, method_kind::ccd};
    cfg.alpha = 1.0;
    cfg.beta = 0.2;
    cfg.max_tokens = 8;
    cfg.seed = 7;
    cfg.backend_specs = {"table:fixture.json"};
    cfg.dataset_path = dir.file("forged.jsonl");
    cfg.output_dir = dir.file("out");
    return cfg;
}

std::vector<induced_example> tiny_forged() {
    source_record r1;
    r1.id = "r1";
    r1.text = "Loved it.";
    r1.label = "positive";
    source_record r2;
    r2.id = "r2";
    r2.text = "Hated it.";
    r2.label = "negative";
    paradigm spec;
    spec.kind = paradigm_kind::misleading_query;
    return forge_dataset(std::vector<source_record>{r1, r2}, task_kind::sentiment, spec,
                         detail_bank::builtin(), 3);
}

} // namespace

TEST_CASE("source records load with balance counts") {
    temp_dir dir;
    const std::string path = dir.file("records.jsonl");
    atomic_write_file(path,
                      R"({"id":"a","text":"Nice.","label":"positive"})" "\n"
                      R"({"id":"b","text":"Bad.","label":"negative"})" "\n"
                      "\n"
                      R"({"id":"c","text":"Fine.","label":"positive"})" "\n");
    const loaded_records got = load_source_records(path, task_kind::sentiment);
    CHECK(got.records.size() == 3);
    CHECK(got.balance.total == 3);
    CHECK(got.balance.per_label.at("positive") == 2);
    CHECK(got.balance.per_label.at("negative") == 1);
    CHECK(got.records[0].id == "a");
    CHECK(got.records[1].label == "negative");
}

TEST_CASE("fact records need answer lists") {
    temp_dir dir;
    const std::string path = dir.file("facts.jsonl");
    atomic_write_file(
        path,
        R"({"id":"q1","question":"Q?","correct_answers":["yes"],"incorrect_answers":["no"]})"
        "\n");
    const loaded_records got = load_source_records(path, task_kind::fact);
    CHECK(got.records.size() == 1);
    CHECK(got.records[0].text == "Q?");
    CHECK(got.records[0].correct_answers == std::vector<std::string>{"yes"});
    CHECK(got.balance.per_label.at("fact") == 1);
}

TEST_CASE("schema violations carry the line and field") {
    temp_dir dir;
    const std::string path = dir.file("bad.jsonl");
    atomic_write_file(path,
                      R"({"id":"a","text":"Nice.","label":"positive"})" "\n"
                      "this is not json\n");
    try {
        (void)load_source_records(path, task_kind::sentiment);
        FAIL("expected schema_error");
    } catch (const schema_error & e) {
        CHECK(e.line() == 2);
    }

    atomic_write_file(path,
                      R"({"id":"a","text":"Nice.","label":"positive"})" "\n"
                      R"({"id":"b","text":"Bad."})" "\n");
    try {
        (void)load_source_records(path, task_kind::sentiment);
        FAIL("expected schema_error");
    } catch (const schema_error & e) {
        CHECK(e.line() == 2);
        CHECK(e.field() == "label");
        CHECK(e.code() == errc::schema_violation);
    }

    atomic_write_file(path, R"({"id":"a","text":"Nice.","label":"meh"})" "\n");
    CHECK_THROWS_AS((void)load_source_records(path, task_kind::sentiment), schema_error);
}

TEST_CASE("forged datasets round-trip byte-identically") {
    temp_dir dir;
    const std::vector<induced_example> forged = tiny_forged();
    const std::string path = dir.file("forged.jsonl");
    write_forged(path, forged);
    const std::string bytes = read_file(path);
    write_forged(path, forged);
    CHECK(read_file(path) == bytes);  // deterministic writer

    const std::vector<induced_example> back = load_forged(path, task_kind::sentiment);
    REQUIRE(back.size() == forged.size());
    for (size_t i = 0; i < back.size(); ++i) {
        CHECK(induced_example_to_json(back[i]) == induced_example_to_json(forged[i]));
    }
}

TEST_CASE("forged loader rejects structural problems") {
    temp_dir dir;
    const std::string path = dir.file("forged.jsonl");

    // wrong schema version
    atomic_write_file(path, R"({"id":"a","schema_version":99})" "\n");
    CHECK_THROWS_AS((void)load_forged(path, task_kind::sentiment), schema_error);

    // induced label agreeing with the truth contradicts the forge contract
    nlohmann::json j;
    j["id"] = "a";
    j["text"] = "Nice.";
    j["true_label"] = "positive";
    j["base_prompt"] = "p";
    j["induced_prompt"] = "p2";
    j["neutral_prompt"] = "p";
    j["paradigm"] = {{"kind", "misleading"}, {"detail_count", 0}, {"induced_label", "positive"}};
    j["schema_version"] = FORGED_SCHEMA_VERSION;
    atomic_write_file(path, j.dump() + "\n");
    try {
        (void)load_forged(path, task_kind::sentiment);
        FAIL("expected schema_error");
    } catch (const schema_error & e) {
        CHECK(e.line() == 1);
    }
}

TEST_CASE("config hashing is canonical across key order and rejects unknown fields") {
    const std::string a = R"({"task":"sentiment","alpha":1.5,"beta":0.1,
        "backend_specs":["table:x.json"],"dataset_path":"d.jsonl","output_dir":"out"})";
    const std::string b = R"({"output_dir":"out","dataset_path":"d.jsonl",
        "backend_specs":["table:x.json"],"beta":0.1,"alpha":1.5,"task":"sentiment"})";
    const run_config ca = run_config::from_json_text(a);
    const run_config cb = run_config::from_json_text(b);
    CHECK(ca.config_hash() == cb.config_hash());
    CHECK(ca.to_json_text() == cb.to_json_text());

    run_config changed = ca;
    changed.alpha = 2.0;
    CHECK(changed.config_hash() != ca.config_hash());

    try {
        (void)run_config::from_json_text(R"({"task":"sentiment","bogus":1})");
        FAIL("expected schema_error");
    } catch (const schema_error & e) {
        CHECK(e.field() == "bogus");
    }
    CHECK_THROWS_AS((void)run_config::from_json_text("["), ccd_error);
    CHECK_THROWS_AS((void)run_config::from_json_text("[]"), schema_error);
}

TEST_CASE("config validation enforces parameter ranges") {
    temp_dir dir;
    run_config cfg = small_config(dir);
    CHECK_NOTHROW(cfg.validate());
    run_config no_backend = cfg;
    no_backend.backend_specs.clear();
    CHECK_THROWS_AS(no_backend.validate(), ccd_error);
    run_config too_many = cfg;
    too_many.backend_specs = {"a", "b", "c"};
    CHECK_THROWS_AS(too_many.validate(), ccd_error);
    run_config bad_alpha = cfg;
    bad_alpha.alpha = -1.0;
    CHECK_THROWS_AS(bad_alpha.validate(), ccd_error);
}

TEST_CASE("manifest round-trips through disk") {
    temp_dir dir;
    manifest m;
    m.config_hash = "abc";
    m.dataset_hash = "def";
    m.tool_version = TOOL_VERSION;
    m.reports = {"one.json", "two.json"};
    const std::string path = dir.file("manifest.json");
    m.save(path);
    const manifest back = manifest::load(path);
    CHECK(back.config_hash == "abc");
    CHECK(back.dataset_hash == "def");
    CHECK(back.tool_version == TOOL_VERSION);
    CHECK(back.reports == m.reports);
}

TEST_CASE("atomic writes fail cleanly when the destination is unusable") {
    temp_dir dir;
    const std::string blocker = dir.file("blocker");
    atomic_write_file(blocker, "plain file\n");
    // the parent of the target is a regular file, so creation must fail
    try {
        atomic_write_file(blocker + "/child.json", "{}");
        FAIL("expected io_error");
    } catch (const ccd_error & e) {
        CHECK(e.code() == errc::io_error);
    }
    // no temp leftovers anywhere in the scratch dir
    size_t files = 0;
    for (const auto & entry : fs::directory_iterator(dir.path)) {
        (void)entry;
        ++files;
    }
    CHECK(files == 1);  // just the blocker

    CHECK_THROWS_AS((void)read_file(dir.file("missing.json")), ccd_error);
}

TEST_CASE("a killed writer never leaves a torn file behind") {
    temp_dir dir;
    const std::string target = dir.file("contended.json");
    const std::string a = R"({"payload":")" + std::string(4096, 'a') + R"("})";
    const std::string b = R"({"payload":")" + std::string(4096, 'b') + R"("})";
    atomic_write_file(target, a);

    const pid_t child = fork();
    REQUIRE(child >= 0);
    if (child == 0) {
        // hammer the same path until killed; every write is temp + rename
        for (;;) {
            atomic_write_file(target, a);
            atomic_write_file(target, b);
        }
        _exit(0);
    }
    ::usleep(50 * 1000);
    ::kill(child, SIGKILL);
    int status = 0;
    ::waitpid(child, &status, 0);

    // whatever survived must be one of the two complete payloads
    const std::string got = read_file(target);
    CHECK((got == a || got == b));
    const auto parsed = nlohmann::json::parse(got, nullptr, false);
    CHECK(!parsed.is_discarded());
}

TEST_CASE("current_timestamp honors SOURCE_DATE_EPOCH") {
    ::setenv("SOURCE_DATE_EPOCH", "0", 1);
    CHECK(current_timestamp() == "1970-01-01T00:00:00Z");
    ::setenv("SOURCE_DATE_EPOCH", "1700000000", 1);
    CHECK(current_timestamp() == "2023-11-14T22:13:20Z");
    ::unsetenv("SOURCE_DATE_EPOCH");
    CHECK(current_timestamp().size() == 20);  // well-formed wall-clock stamp
}

TEST_CASE("reports land next to a manifest and rewrite byte-identically") {
    ::setenv("SOURCE_DATE_EPOCH", "1700000000", 1);
    temp_dir dir;
    const run_config cfg = small_config(dir);

    eval_run run;
    run.report.method = method_kind::ccd;
    run.report.task = task_kind::sentiment;
    run.report.n_examples = 2;
    run.report.accuracy = 100.0;
    run.report.f1 = 100.0;
    run.report.params.alpha = cfg.alpha;
    run.report.params.beta = cfg.beta;
    run.report.params.max_tokens = cfg.max_tokens;
    run.report.params.seed = cfg.seed;
    run.report.backend = {"table", "0123456789abcdef", true, true};
    run.per_example_jsonl = {R"({"example_id":"r1"})", R"({"example_id":"r2"})"};

    const report_paths paths = write_report(run, cfg, "feedfacefeedface");
    CHECK(fs::exists(paths.summary_path));
    CHECK(fs::exists(paths.examples_path));
    const std::string first = read_file(paths.summary_path);

    const auto j = nlohmann::json::parse(first);
    CHECK(j.at("method") == "ccd");
    CHECK(j.at("task") == "sentiment");
    CHECK(j.at("accuracy") == 100.0);
    CHECK(j.at("n_examples") == 2);
    CHECK(j.at("alpha") == 1.0);
    CHECK(j.at("params").at("mode") == "greedy");
    CHECK(j.at("vocab_hash") == "0123456789abcdef");
    CHECK(j.at("timestamp") == "2023-11-14T22:13:20Z");
    CHECK(j.at("tool_version") == TOOL_VERSION);
    const std::string stem = fs::path(paths.summary_path).filename().string();
    CHECK(stem == "sentiment_ccd_" + cfg.config_hash().substr(0, 8) + ".json");
    CHECK(j.at("examples_path") == "sentiment_ccd_" + cfg.config_hash().substr(0, 8)
                                       + ".examples.jsonl");

    const std::string examples = read_file(paths.examples_path);
    CHECK(examples == R"({"example_id":"r1"})" "\n" R"({"example_id":"r2"})" "\n");

    // the manifest tracks the report exactly once, even across rewrites
    const report_paths again = write_report(run, cfg, "feedfacefeedface");
    CHECK(read_file(again.summary_path) == first);
    const manifest m = manifest::load(dir.file("out/manifest.json"));
    CHECK(m.config_hash == cfg.config_hash());
    CHECK(m.dataset_hash == "feedfacefeedface");
    CHECK(m.reports == std::vector<std::string>{stem});
    CHECK(!fs::exists(dir.file("out/manifest.lock")));

    ::unsetenv("SOURCE_DATE_EPOCH");
}

TEST_CASE("hash_file digests the exact bytes") {
    temp_dir dir;
    const std::string path = dir.file("blob.bin");
    atomic_write_file(path, "some bytes");
    CHECK(hash_file(path) == content_hash("some bytes"));
    atomic_write_file(path, "other bytes");
    CHECK(hash_file(path) != content_hash("some bytes"));
}
