// ccd — collaborative contrastive decoding toolkit
//
// exit codes: 0 success, 2 usage/validation error, 3 runtime error
// (backend unreachable, I/O failure, ...)

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include <CLI/CLI.hpp>

#include "ccd/backend_factory.hpp"
#include "ccd/data_io.hpp"
#include "ccd/decoder.hpp"
#include "ccd/errors.hpp"
#include "ccd/eval.hpp"
#include "ccd/prompt_forge.hpp"
#include "ccd/version.hpp"

namespace {

using namespace ccd;

int exit_code_for(errc code) {
    switch (code) {
        case errc::invalid_argument:
        case errc::schema_violation:
        case errc::unknown_paradigm:
        case errc::no_details:
        case errc::empty_injection:
        case errc::empty_text:
        case errc::unlabeled_record:
        case errc::empty_outcomes:
        case errc::malformed_item:
        case errc::method_backend_mismatch:
        case errc::empty_corpus:
            return 2;  // the request itself was unusable
        default:
            return 3;  // the request was fine but the run failed
    }
}

struct cli_options {
    // shared
    std::string task = "sentiment";
    std::string in_path;
    std::string out_path;
    std::string config_path;
    double alpha = 1.0;
    double beta = 0.2;
    int max_tokens = 16;
    uint64_t seed = 0;
    std::string backend_spec;
    std::string backend2_spec;
    int jobs = 1;

    // forge
    std::string paradigm_name = "misleading";
    int details = 2;
    std::string detail_bank_path;

    // decode
    std::string neutral_prompt;
    std::string induced_prompt;
    bool auto_neutralize = false;
    std::string mode = "greedy";
    std::string trace_path;
    bool trace_full = false;
    std::string decode_method = "ccd";

    // eval / compare
    std::vector<std::string> methods;

    // sweep
    std::string alphas_csv;
    std::string betas_csv;
    std::string details_grid_csv;
};

std::vector<double> parse_double_list(const std::string & csv, const char * what) {
    std::vector<double> out;
    std::stringstream ss(csv);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (item.empty()) continue;
        try {
            size_t used = 0;
            double v = std::stod(item, &used);
            if (used != item.size()) throw std::invalid_argument(item);
            out.push_back(v);
        } catch (const std::exception &) {
            throw ccd_error(errc::invalid_argument,
                            std::string(what) + " list has a non-numeric entry '" + item + "'");
        }
    }
    return out;
}

std::vector<int> parse_int_list(const std::string & csv, const char * what) {
    std::vector<int> out;
    for (double v : parse_double_list(csv, what)) {
        int i = int(v);
        if (double(i) != v) {
            throw ccd_error(errc::invalid_argument,
                            std::string(what) + " list needs integers");
        }
        out.push_back(i);
    }
    return out;
}

decoding_params params_from(const cli_options & opt) {
    decoding_params p;
    p.alpha = opt.alpha;
    p.beta = opt.beta;
    p.max_tokens = opt.max_tokens;
    p.seed = opt.seed;
    if (opt.mode == "greedy") {
        p.mode = decoding_params::gen_mode::greedy;
    } else if (opt.mode == "sample") {
        p.mode = decoding_params::gen_mode::sample;
    } else {
        throw ccd_error(errc::invalid_argument, "--mode must be greedy or sample");
    }
    p.validate();
    return p;
}

// merge a config file (when given) with explicit flags; flags win
run_config effective_config(const cli_options & opt, const CLI::App * cmd) {
    run_config cfg;
    if (!opt.config_path.empty()) {
        cfg = run_config::load(opt.config_path);
    }
    auto given = [cmd](const std::string & flag) {
        const CLI::Option * o = cmd->get_option_no_throw(flag);
        return o != nullptr && o->count() > 0;
    };
    if (opt.config_path.empty() || given("--task")) cfg.task = parse_task_kind(opt.task);
    if (opt.config_path.empty() || given("--alpha")) cfg.alpha = opt.alpha;
    if (opt.config_path.empty() || given("--beta")) cfg.beta = opt.beta;
    if (opt.config_path.empty() || given("--max-tokens")) cfg.max_tokens = opt.max_tokens;
    if (opt.config_path.empty() || given("--seed")) cfg.seed = opt.seed;
    if (given("--in")) cfg.dataset_path = opt.in_path;
    if (given("--out")) cfg.output_dir = opt.out_path;
    if (given("--backend") || given("--backend2") || cfg.backend_specs.empty()) {
        cfg.backend_specs.clear();
        if (!opt.backend_spec.empty()) cfg.backend_specs.push_back(opt.backend_spec);
        if (!opt.backend2_spec.empty()) cfg.backend_specs.push_back(opt.backend2_spec);
    }
    if (given("--method") || cfg.methods.empty()) {
        cfg.methods.clear();
        for (const std::string & m : opt.methods) {
            cfg.methods.push_back(parse_method_kind(m));
        }
    }
    if (cfg.dataset_path.empty()) {
        throw ccd_error(errc::invalid_argument, "no dataset given (--in or config dataset_path)");
    }
    if (cfg.output_dir.empty()) {
        throw ccd_error(errc::invalid_argument, "no output dir given (--out or config output_dir)");
    }
    cfg.validate();
    return cfg;
}

struct opened_backends {
    std::unique_ptr<lm_backend> first;
    std::unique_ptr<lm_backend> second;  // may be null
};

opened_backends open_backends(const run_config & cfg) {
    opened_backends b;
    b.first = make_backend(cfg.backend_specs.at(0));
    if (cfg.backend_specs.size() > 1) {
        b.second = make_backend(cfg.backend_specs.at(1));
    }
    return b;
}

decoding_params params_from(const run_config & cfg) {
    decoding_params p;
    p.alpha = cfg.alpha;
    p.beta = cfg.beta;
    p.max_tokens = cfg.max_tokens;
    p.seed = cfg.seed;
    p.validate();
    return p;
}

void print_balance(const dataset_balance & balance) {
    std::ostringstream line;
    line << "loaded " << balance.total << " records (";
    bool first = true;
    for (const auto & [label, count] : balance.per_label) {
        if (!first) line << ", ";
        line << label << "=" << count;
        first = false;
    }
    line << ")";
    std::cerr << line.str() << "\n";
}

std::string metric_summary(const eval_report & r) {
    std::ostringstream out;
    out.setf(std::ios::fixed);
    out.precision(2);
    out << "method=" << method_kind_name(r.method) << " n=" << r.n_examples;
    if (r.accuracy) out << " accuracy=" << *r.accuracy;
    if (r.f1) out << " macro_f1=" << *r.f1;
    if (r.mc1) out << " mc1=" << *r.mc1;
    if (r.mc2) out << " mc2=" << *r.mc2;
    if (r.mc3) out << " mc3=" << *r.mc3;
    return out.str();
}

// ---------- forge ----------

int run_forge(const cli_options & opt) {
    const task_kind task = parse_task_kind(opt.task);
    if (opt.in_path.empty() || opt.out_path.empty()) {
        throw ccd_error(errc::invalid_argument, "forge needs --in and --out");
    }
    paradigm spec;
    spec.kind = parse_paradigm_kind(opt.paradigm_name);
    spec.detail_count = opt.details;
    detail_bank bank =
        opt.detail_bank_path.empty() ? detail_bank::builtin() : detail_bank::load(opt.detail_bank_path);

    loaded_records loaded = load_source_records(opt.in_path, task);
    print_balance(loaded.balance);
    std::vector<induced_example> examples =
        forge_dataset(loaded.records, task, spec, bank, opt.seed);
    write_forged(opt.out_path, examples);
    std::cout << "forged " << examples.size() << " examples ("
              << paradigm_kind_name(spec.kind) << ") -> " << opt.out_path << "\n";
    return 0;
}

// ---------- decode ----------

int run_decode(const cli_options & opt, const CLI::App * cmd) {
    if (opt.backend_spec.empty()) {
        throw ccd_error(errc::invalid_argument, "decode needs --backend");
    }
    const decoding_params params = params_from(opt);
    auto backend = make_backend(opt.backend_spec);

    std::string neutral = opt.neutral_prompt;
    std::string induced = opt.induced_prompt;
    paradigm par;
    par.kind = parse_paradigm_kind(opt.paradigm_name);
    par.detail_count = opt.details;

    if (opt.auto_neutralize) {
        if (induced.empty()) {
            throw ccd_error(errc::invalid_argument, "--auto-neutralize needs --induced");
        }
        neutral = neutralize(induced, par);
        std::cerr << "neutralized prompt: " << neutral << "\n";
    }

    generation_result result;
    const bool method_given = cmd->get_option("--method")->count() > 0;
    std::string method = opt.decode_method;
    if (!method_given) {
        method = induced.empty() ? "neutral_only" : "ccd";
    }

    if (method == "ccd") {
        if (neutral.empty() || induced.empty()) {
            throw ccd_error(errc::invalid_argument,
                            "ccd decode needs --neutral and --induced (or --auto-neutralize)");
        }
        prompt_pair pair;
        pair.neutral = neutral;
        pair.induced = induced;
        pair.par = par;
        result = decode(*backend, pair, params);
    } else if (method == "neutral_only") {
        if (neutral.empty()) {
            throw ccd_error(errc::invalid_argument, "neutral_only decode needs --neutral");
        }
        result = decode_single(*backend, neutral, params);
    } else if (method == "induced_only") {
        if (induced.empty()) {
            throw ccd_error(errc::invalid_argument, "induced_only decode needs --induced");
        }
        result = decode_single(*backend, induced, params);
    } else if (method == "vanilla_cd") {
        if (opt.backend2_spec.empty()) {
            throw ccd_error(errc::method_backend_mismatch,
                            "vanilla_cd needs --backend2 (the amateur model)");
        }
        if (neutral.empty()) {
            throw ccd_error(errc::invalid_argument, "vanilla_cd decode needs --neutral");
        }
        auto amateur = make_backend(opt.backend2_spec);
        result = decode_dual(*backend, *amateur, neutral, neutral, params);
    } else {
        throw ccd_error(errc::invalid_argument,
                        "--method must be ccd, neutral_only, induced_only, or vanilla_cd");
    }

    if (!opt.trace_path.empty()) {
        std::ofstream trace(opt.trace_path, std::ios::binary | std::ios::trunc);
        if (!trace) {
            throw ccd_error(errc::io_error, "cannot write trace '" + opt.trace_path + "'");
        }
        write_trace_jsonl(trace, result.traces, opt.trace_full);
    }
    std::cout << result.text << "\n";
    std::cerr << "generated " << result.tokens.size() << " tokens, stop="
              << (result.stop_reason == generation_result::stop::eos ? "eos" : "max_tokens")
              << "\n";
    return 0;
}

// ---------- eval / compare ----------

int run_eval_like(const cli_options & opt, const CLI::App * cmd, bool multi) {
    run_config cfg = effective_config(opt, cmd);
    if (cfg.methods.empty()) {
        throw ccd_error(errc::invalid_argument, "no method given (--method or config methods)");
    }
    if (!multi && cfg.methods.size() != 1) {
        throw ccd_error(errc::invalid_argument, "eval takes exactly one --method; use compare");
    }

    std::vector<induced_example> examples = load_forged(cfg.dataset_path, cfg.task);
    const std::string dataset_hash = hash_file(cfg.dataset_path);
    opened_backends backends = open_backends(cfg);
    const decoding_params params = params_from(cfg);

    struct row {
        eval_report report;
        std::string summary_path;
    };
    std::vector<row> rows;
    for (method_kind method : cfg.methods) {
        eval_run run = run_eval(cfg.task, examples, method, *backends.first,
                                backends.second.get(), params, opt.jobs);
        report_paths paths = write_report(run, cfg, dataset_hash);
        std::cout << metric_summary(run.report) << "\n";
        rows.push_back({run.report, paths.summary_path});
    }

    if (multi) {
        // side-by-side table plus a CSV for downstream plotting
        const bool sentiment = cfg.task == task_kind::sentiment;
        std::ostringstream table;
        table.setf(std::ios::fixed);
        table.precision(2);
        table << "\n" << std::left;
        table.width(14);
        table << "method";
        if (sentiment) {
            table << "accuracy  macro_f1\n";
        } else {
            table << "mc1     mc2     mc3\n";
        }
        std::ostringstream csv;
        csv.setf(std::ios::fixed);
        csv.precision(6);
        csv << (sentiment ? "method,accuracy,macro_f1\n" : "method,mc1,mc2,mc3\n");
        for (const row & r : rows) {
            table << std::left;
            table.width(14);
            table << method_kind_name(r.report.method);
            if (sentiment) {
                table.width(10);
                table << *r.report.accuracy;
                table << *r.report.f1 << "\n";
                csv << method_kind_name(r.report.method) << "," << *r.report.accuracy << ","
                    << *r.report.f1 << "\n";
            } else {
                table.width(8);
                table << *r.report.mc1;
                table.width(8);
                table << *r.report.mc2;
                table << *r.report.mc3 << "\n";
                csv << method_kind_name(r.report.method) << "," << *r.report.mc1 << ","
                    << *r.report.mc2 << "," << *r.report.mc3 << "\n";
            }
        }
        std::cout << table.str();
        const std::string csv_path = cfg.output_dir + "/" + task_kind_name(cfg.task)
            + "_compare_" + cfg.config_hash().substr(0, 8) + ".csv";
        atomic_write_file(csv_path, csv.str());
        std::cout << "\nwrote " << csv_path << "\n";
    }
    for (const row & r : rows) {
        std::cerr << "report: " << r.summary_path << "\n";
    }
    return 0;
}

// ---------- sweep ----------

int run_sweep(const cli_options & opt, const CLI::App * cmd) {
    run_config cfg = effective_config(opt, cmd);
    const decoding_params base_params = params_from(cfg);
    (void)base_params;

    std::ostringstream csv;
    csv.setf(std::ios::fixed);
    csv.precision(6);
    std::string csv_path;

    if (!opt.details_grid_csv.empty()) {
        // detail-count sweep: forge per count from raw records, then evaluate
        // the induced and collaborative conditions at each point
        const std::vector<int> counts = parse_int_list(opt.details_grid_csv, "--details-grid");
        if (counts.empty()) {
            throw ccd_error(errc::invalid_argument, "--details-grid is empty");
        }
        if (cfg.task != task_kind::sentiment) {
            throw ccd_error(errc::invalid_argument, "--details-grid needs --task sentiment");
        }
        loaded_records loaded = load_source_records(cfg.dataset_path, cfg.task);
        print_balance(loaded.balance);
        detail_bank bank = opt.detail_bank_path.empty() ? detail_bank::builtin()
                                                        : detail_bank::load(opt.detail_bank_path);
        opened_backends backends = open_backends(cfg);

        csv << "detail_count,method,accuracy,macro_f1,config_hash\n";
        for (int count : counts) {
            paradigm spec;
            spec.kind = count == 0 ? paradigm_kind::base : paradigm_kind::fabricated_details;
            spec.detail_count = count;
            std::vector<induced_example> examples =
                forge_dataset(loaded.records, cfg.task, spec, bank, cfg.seed);

            run_config point = cfg;
            point.dataset_path = cfg.dataset_path + "#details=" + std::to_string(count);
            const std::string point_hash = point.config_hash();

            for (method_kind method : {method_kind::induced, method_kind::ccd}) {
                eval_run run = run_eval(cfg.task, examples, method, *backends.first,
                                        backends.second.get(), params_from(cfg), opt.jobs);
                std::cout << "details=" << count << " " << metric_summary(run.report) << "\n";
                csv << count << "," << method_kind_name(method) << "," << *run.report.accuracy
                    << "," << *run.report.f1 << "," << point_hash << "\n";
            }
        }
        csv_path = cfg.output_dir + "/" + task_kind_name(cfg.task) + "_sweep_details_"
            + cfg.config_hash().substr(0, 8) + ".csv";
    } else {
        // alpha/beta grid over an existing forged dataset, collaborative only
        std::vector<double> alphas = opt.alphas_csv.empty()
            ? std::vector<double>{cfg.alpha}
            : parse_double_list(opt.alphas_csv, "--alphas");
        std::vector<double> betas = opt.betas_csv.empty()
            ? std::vector<double>{cfg.beta}
            : parse_double_list(opt.betas_csv, "--betas");
        if (opt.alphas_csv.empty() && opt.betas_csv.empty()) {
            throw ccd_error(errc::invalid_argument,
                            "sweep needs --alphas, --betas, or --details-grid");
        }
        if (alphas.empty() || betas.empty()) {
            throw ccd_error(errc::invalid_argument, "sweep grid is empty");
        }
        std::vector<induced_example> examples = load_forged(cfg.dataset_path, cfg.task);
        opened_backends backends = open_backends(cfg);

        const bool sentiment = cfg.task == task_kind::sentiment;
        csv << (sentiment ? "alpha,beta,accuracy,macro_f1,config_hash\n"
                          : "alpha,beta,mc1,mc2,mc3,config_hash\n");
        for (double a : alphas) {
            for (double b : betas) {
                run_config point = cfg;
                point.alpha = a;
                point.beta = b;
                eval_run run = run_eval(cfg.task, examples, method_kind::ccd, *backends.first,
                                        backends.second.get(), params_from(point), opt.jobs);
                std::cout << "alpha=" << a << " beta=" << b << " "
                          << metric_summary(run.report) << "\n";
                csv << a << "," << b << ",";
                if (sentiment) {
                    csv << *run.report.accuracy << "," << *run.report.f1;
                } else {
                    csv << *run.report.mc1 << "," << *run.report.mc2 << "," << *run.report.mc3;
                }
                csv << "," << point.config_hash() << "\n";
            }
        }
        csv_path = cfg.output_dir + "/" + task_kind_name(cfg.task) + "_sweep_"
            + cfg.config_hash().substr(0, 8) + ".csv";
    }

    std::error_code ec;
    std::filesystem::create_directories(cfg.output_dir, ec);
    if (ec) {
        throw ccd_error(errc::io_error, "cannot create '" + cfg.output_dir + "'");
    }
    atomic_write_file(csv_path, csv.str());
    std::cout << "wrote " << csv_path << "\n";
    return 0;
}

} // namespace

int main(int argc, char ** argv) {
    CLI::App app{"collaborative contrastive decoding toolkit"};
    app.set_version_flag("--version", std::string("ccd ") + ccd::TOOL_VERSION);
    app.require_subcommand(1);
    cli_options opt;

    auto add_params = [&opt](CLI::App * cmd) {
        cmd->add_option("--alpha", opt.alpha, "contrast strength (>= 0)");
        cmd->add_option("--beta", opt.beta, "plausibility cutoff in [0,1]");
        cmd->add_option("--max-tokens", opt.max_tokens, "generation cap (> 0)");
        cmd->add_option("--seed", opt.seed, "rng seed");
    };
    auto add_backends = [&opt](CLI::App * cmd) {
        cmd->add_option("--backend", opt.backend_spec, "backend spec (table:F | ngram:F | remote:URL)");
        cmd->add_option("--backend2", opt.backend2_spec, "second backend (vanilla_cd amateur)");
    };

    CLI::App * forge = app.add_subcommand("forge", "build induced/neutral prompts from raw records");
    forge->add_option("--task", opt.task, "sentiment | fact");
    forge->add_option("--paradigm", opt.paradigm_name, "base | misleading | fabricated | false_answer");
    forge->add_option("--details", opt.details, "fabricated detail count per prompt");
    forge->add_option("--detail-bank", opt.detail_bank_path, "JSON detail bank (default: builtin)");
    forge->add_option("--in", opt.in_path, "raw records JSONL")->required();
    forge->add_option("--out", opt.out_path, "forged dataset JSONL")->required();
    forge->add_option("--seed", opt.seed, "rng seed");

    CLI::App * decode = app.add_subcommand("decode", "run one decode and print the generation");
    decode->add_option("--neutral", opt.neutral_prompt, "neutral-context prompt");
    decode->add_option("--induced", opt.induced_prompt, "induced-context prompt");
    decode->add_flag("--auto-neutralize", opt.auto_neutralize,
                     "derive the neutral prompt from --induced via the paradigm inverse");
    decode->add_option("--paradigm", opt.paradigm_name, "paradigm for --auto-neutralize");
    decode->add_option("--details", opt.details, "detail count for --auto-neutralize");
    decode->add_option("--method", opt.decode_method,
                       "ccd | neutral_only | induced_only | vanilla_cd");
    decode->add_option("--mode", opt.mode, "greedy | sample");
    decode->add_option("--trace", opt.trace_path, "write per-step trace JSONL here");
    decode->add_flag("--trace-full", opt.trace_full, "include full score vectors in the trace");
    add_params(decode);
    add_backends(decode);

    CLI::App * eval = app.add_subcommand("eval", "evaluate one method over a forged dataset");
    CLI::App * compare = app.add_subcommand("compare", "evaluate several methods side by side");
    for (CLI::App * cmd : {eval, compare}) {
        cmd->add_option("--task", opt.task, "sentiment | fact");
        cmd->add_option("--method", opt.methods,
                        "base | induced | neutral_only | ccd | vanilla_cd")
            ->delimiter(',');
        cmd->add_option("--in", opt.in_path, "forged dataset JSONL");
        cmd->add_option("--out", opt.out_path, "output directory for reports");
        cmd->add_option("--config", opt.config_path, "run config JSON (flags override it)");
        cmd->add_option("--jobs", opt.jobs, "worker threads")->check(CLI::PositiveNumber);
        add_params(cmd);
        add_backends(cmd);
    }

    CLI::App * sweep = app.add_subcommand("sweep", "grid-sweep alpha/beta or detail counts");
    sweep->add_option("--task", opt.task, "sentiment | fact");
    sweep->add_option("--alphas", opt.alphas_csv, "comma-separated alpha grid");
    sweep->add_option("--betas", opt.betas_csv, "comma-separated beta grid");
    sweep->add_option("--details-grid", opt.details_grid_csv,
                      "comma-separated detail counts (forges internally; --in is raw records)");
    sweep->add_option("--detail-bank", opt.detail_bank_path, "JSON detail bank (default: builtin)");
    sweep->add_option("--in", opt.in_path, "dataset (forged, or raw for --details-grid)");
    sweep->add_option("--out", opt.out_path, "output directory");
    sweep->add_option("--config", opt.config_path, "run config JSON (flags override it)");
    sweep->add_option("--jobs", opt.jobs, "worker threads")->check(CLI::PositiveNumber);
    add_params(sweep);
    add_backends(sweep);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp & e) {
        return app.exit(e);
    } catch (const CLI::CallForVersion & e) {
        return app.exit(e);
    } catch (const CLI::ParseError & e) {
        app.exit(e);
        return 2;
    }

    try {
        if (forge->parsed()) return run_forge(opt);
        if (decode->parsed()) return run_decode(opt, decode);
        if (eval->parsed()) return run_eval_like(opt, eval, false);
        if (compare->parsed()) return run_eval_like(opt, compare, true);
        if (sweep->parsed()) return run_sweep(opt, sweep);
        return 2;
    } catch (const ccd::schema_error & e) {
        if (e.line() > 0) {
            std::cerr << "error: line " << e.line() << ", field '" << e.field() << "': "
                      << e.what() << "\n";
        } else {
            std::cerr << "error: " << e.what() << "\n";
        }
        return exit_code_for(e.code());
    } catch (const ccd::ccd_error & e) {
        std::cerr << "error: " << e.what() << "\n";
        return exit_code_for(e.code());
    } catch (const std::exception & e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    }
}
