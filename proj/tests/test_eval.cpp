#include <doctest.h>

#include <cmath>
#include <random>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ccd/errors.hpp"
#include "ccd/eval.hpp"
#include "ccd/table_lm.hpp"

#include "helpers.hpp"

using namespace ccd;
using testing::make_vocab;

namespace {

decoding_params params_of(double alpha, double beta, int max_tokens = 8) {
    decoding_params p;
    p.alpha = alpha;
    p.beta = beta;
    p.max_tokens = max_tokens;
    return p;
}

classification_outcome outcome(sentiment_label predicted, sentiment_label truth) {
    classification_outcome o;
    o.predicted = predicted;
    o.true_label = truth;
    return o;
}

mc_item yes_no_item(std::string question, std::string induced_statement = "") {
    mc_item item;
    item.id = "item";
    item.question = std::move(question);
    item.choices = {"yes", "no"};
    item.correct_mask = {1, 0};
    item.induced_statement = std::move(induced_statement);
    return item;
}

} // namespace

TEST_CASE("method names round-trip") {
    for (method_kind m : {method_kind::base, method_kind::induced, method_kind::neutral_only,
                          method_kind::ccd, method_kind::vanilla_cd}) {
        CHECK(parse_method_kind(method_kind_name(m)) == m);
    }
    CHECK_THROWS_AS((void)parse_method_kind("magic"), ccd_error);
}

TEST_CASE("sentiment parsing rules") {
    CHECK(parse_sentiment("positive") == sentiment_label::positive);
    CHECK(parse_sentiment("The sentiment is NEGATIVE.") == sentiment_label::negative);
    // first keyword wins
    CHECK(parse_sentiment("negative, though some positive notes") == sentiment_label::negative);
    // the span after an explicit marker takes priority
    CHECK(parse_sentiment("positive context. Answer: negative") == sentiment_label::negative);
    // marker without a usable keyword falls back to the whole string
    CHECK(parse_sentiment("positive answer: hmm") == sentiment_label::positive);
    CHECK(parse_sentiment("neither one") == sentiment_label::unparsed);
    CHECK(parse_sentiment("") == sentiment_label::unparsed);
}

TEST_CASE("accuracy and macro-F1 match hand-computed confusion counts") {
    const std::vector<classification_outcome> outcomes = {
        outcome(sentiment_label::positive, sentiment_label::positive),
        outcome(sentiment_label::negative, sentiment_label::negative),
        outcome(sentiment_label::negative, sentiment_label::positive),
        outcome(sentiment_label::unparsed, sentiment_label::negative),
    };
    const auto [accuracy, f1] = accuracy_f1(outcomes);
    CHECK(accuracy == 50.0);
    // positive: tp=1 fp=0 fn=1 -> F1 = 2/3; negative: tp=1 fp=1 fn=1 -> F1 = 1/2
    CHECK(f1 == doctest::Approx(100.0 * (2.0 / 3.0 + 0.5) / 2.0).epsilon(1e-12));
}

TEST_CASE("accuracy and F1 hit the boundary values") {
    const std::vector<classification_outcome> perfect = {
        outcome(sentiment_label::positive, sentiment_label::positive),
        outcome(sentiment_label::negative, sentiment_label::negative),
    };
    auto [acc_p, f1_p] = accuracy_f1(perfect);
    CHECK(acc_p == 100.0);
    CHECK(f1_p == 100.0);

    const std::vector<classification_outcome> inverted = {
        outcome(sentiment_label::negative, sentiment_label::positive),
        outcome(sentiment_label::positive, sentiment_label::negative),
    };
    auto [acc_i, f1_i] = accuracy_f1(inverted);
    CHECK(acc_i == 0.0);
    CHECK(f1_i == 0.0);

    try {
        (void)accuracy_f1({});
        FAIL("expected empty_outcomes");
    } catch (const ccd_error & e) {
        CHECK(e.code() == errc::empty_outcomes);
    }
}

TEST_CASE("unparsed predictions are wrong and count as false negatives") {
    const std::vector<classification_outcome> outcomes = {
        outcome(sentiment_label::unparsed, sentiment_label::positive),
        outcome(sentiment_label::unparsed, sentiment_label::negative),
    };
    const auto [accuracy, f1] = accuracy_f1(outcomes);
    CHECK(accuracy == 0.0);
    CHECK(f1 == 0.0);
}

TEST_CASE("single-context choice scoring matches the log-softmax closed form") {
    table_lm lm(make_vocab({"</s>", "yes", "no", "Q"}, 0));
    lm.program("Q", {}, {-700.0, std::log(3.0), std::log(1.0), -700.0});
    lm.program("Q", {1}, {-700.0, std::log(1.0), std::log(1.0), -700.0});

    const mc_item item = yes_no_item("Q");
    const mc_scores s = score_choices(lm, nullptr, item, method_kind::base, params_of(1.0, 0.2));
    REQUIRE(s.per_choice_logprob.size() == 2);
    CHECK(s.per_choice_logprob[0] == doctest::Approx(std::log(0.75)).epsilon(1e-12));
    CHECK(s.per_choice_logprob[1] == doctest::Approx(std::log(0.25)).epsilon(1e-12));

    // a multi-token choice accumulates per-token log-probs
    mc_item longer = item;
    longer.choices = {"yesno", "no"};
    const mc_scores s2 =
        score_choices(lm, nullptr, longer, method_kind::base, params_of(1.0, 0.2));
    CHECK(s2.per_choice_logprob[0]
          == doctest::Approx(std::log(0.75) + std::log(0.5)).epsilon(1e-12));
}

TEST_CASE("a collaborative singleton head scores the forced token at exactly zero") {
    table_lm lm(make_vocab({"</s>", "yes", "no", "Q"}, 0));
    lm.program("Q", {}, {-9.0, 2.0, 0.0, -9.0});
    // beta = 1 keeps only the argmax; its renormalized probability is exactly 1
    const mc_scores s = score_choices(lm, nullptr, yes_no_item("Q"), method_kind::ccd,
                                      params_of(1.0, 1.0));
    CHECK(s.per_choice_logprob[0] == 0.0);
    // the masked "no" choice is floored, keeping every score finite
    CHECK(s.per_choice_logprob[1] == MIN_LOGPROB);
}

TEST_CASE("degenerate collaborative scoring equals single-context scoring") {
    table_lm lm(make_vocab({"</s>", "yes", "no", "Q"}, 0));
    lm.program("Q", {}, {-2.0, 1.3, 0.4, -2.0});
    lm.program("Q", {1}, {-1.0, 0.2, 0.2, -1.0});
    lm.program("Q", {2}, {-1.0, 0.2, 0.2, -1.0});

    const mc_item item = yes_no_item("Q");  // empty statement: induced == base
    const mc_scores base = score_choices(lm, nullptr, item, method_kind::base,
                                         params_of(0.0, 0.0));
    const mc_scores ccd = score_choices(lm, nullptr, item, method_kind::ccd,
                                        params_of(0.0, 0.0));
    REQUIRE(base.per_choice_logprob.size() == ccd.per_choice_logprob.size());
    for (size_t c = 0; c < base.per_choice_logprob.size(); ++c) {
        CHECK(base.per_choice_logprob[c]
              == doctest::Approx(ccd.per_choice_logprob[c]).epsilon(1e-9));
    }
}

TEST_CASE("the induced context shifts choice scores and the contrast undoes it") {
    const std::string question = "Q?";
    const std::string statement = "the sky is green";
    const std::string induced_prompt = inject_false_answer(question, statement);
    table_lm lm(make_vocab({"</s>", "yes", "no", question, induced_prompt}, 0));
    lm.program(question, {}, {-9.0, 1.0, 0.0, -9.0, -9.0});
    lm.program(induced_prompt, {}, {-9.0, -1.0, 2.0, -9.0, -9.0});

    const mc_item item = yes_no_item(question, statement);
    const decoding_params p = params_of(1.0, 0.0);

    const mc_scores base = score_choices(lm, nullptr, item, method_kind::base, p);
    CHECK(base.per_choice_logprob[0] > base.per_choice_logprob[1]);

    const mc_scores induced = score_choices(lm, nullptr, item, method_kind::induced, p);
    CHECK(induced.per_choice_logprob[1] > induced.per_choice_logprob[0]);

    const mc_scores ccd = score_choices(lm, nullptr, item, method_kind::ccd, p);
    CHECK(ccd.per_choice_logprob[0] > ccd.per_choice_logprob[1]);
}

TEST_CASE("vanilla_cd scoring needs a second backend with the same vocabulary") {
    table_lm lm(make_vocab({"</s>", "yes", "no", "Q"}, 0));
    lm.set_default_scores({0.0, 0.0, 0.0, 0.0});
    try {
        (void)score_choices(lm, nullptr, yes_no_item("Q"), method_kind::vanilla_cd,
                            params_of(1.0, 0.0));
        FAIL("expected method_backend_mismatch");
    } catch (const ccd_error & e) {
        CHECK(e.code() == errc::method_backend_mismatch);
    }

    table_lm other(make_vocab({"</s>", "yes", "maybe", "Q"}, 0));
    other.set_default_scores({0.0, 0.0, 0.0, 0.0});
    CHECK_THROWS_AS((void)score_choices(lm, &other, yes_no_item("Q"),
                                        method_kind::vanilla_cd, params_of(1.0, 0.0)),
                    ccd_error);

    table_lm amateur(make_vocab({"</s>", "yes", "no", "Q"}, 0));
    amateur.set_default_scores({0.0, 0.0, 1.0, 0.0});
    CHECK_NOTHROW((void)score_choices(lm, &amateur, yes_no_item("Q"),
                                      method_kind::vanilla_cd, params_of(1.0, 0.0)));
}

TEST_CASE("multiple-choice metrics match the hand-computed sigmoid example") {
    const mc_item item = yes_no_item("Q");
    mc_scores right;
    right.per_choice_logprob = {0.0, -1.0};
    const mc_summary won = mc_metrics({&item, 1}, {&right, 1});
    CHECK(won.mc1 == 100.0);
    CHECK(won.mc3 == 100.0);
    CHECK(won.mc2 == doctest::Approx(73.10585786300049).epsilon(1e-12));
    CHECK(won.mc2_over_half == 100.0);

    mc_scores wrong;
    wrong.per_choice_logprob = {-1.0, 0.0};
    const mc_summary lost = mc_metrics({&item, 1}, {&wrong, 1});
    CHECK(lost.mc1 == 0.0);
    CHECK(lost.mc3 == 0.0);
    CHECK(lost.mc2 == doctest::Approx(26.89414213699951).epsilon(1e-12));
    CHECK(lost.mc2_over_half == 0.0);
}

TEST_CASE("tied top scores fail MC1 and strict MC3") {
    const mc_item item = yes_no_item("Q");
    mc_scores tied;
    tied.per_choice_logprob = {0.0, 0.0};
    const mc_summary s = mc_metrics({&item, 1}, {&tied, 1});
    CHECK(s.mc1 == 0.0);
    CHECK(s.mc3 == 0.0);
    CHECK(s.mc2 == doctest::Approx(50.0).epsilon(1e-12));
    CHECK(s.mc2_over_half == 0.0);
}

TEST_CASE("metrics are invariant under choice permutation and score shifts") {
    mc_item item;
    item.id = "p";
    item.question = "Q";
    item.choices = {"a", "b", "c", "d"};
    item.correct_mask = {1, 0, 1, 0};
    mc_scores s;
    s.per_choice_logprob = {-0.3, -2.0, -1.1, -0.9};
    const mc_summary original = mc_metrics({&item, 1}, {&s, 1});

    mc_item permuted = item;
    permuted.choices = {"b", "d", "a", "c"};
    permuted.correct_mask = {0, 0, 1, 1};
    mc_scores ps;
    ps.per_choice_logprob = {-2.0, -0.9, -0.3, -1.1};
    const mc_summary shuffled = mc_metrics({&permuted, 1}, {&ps, 1});
    CHECK(shuffled.mc1 == original.mc1);
    CHECK(shuffled.mc2 == doctest::Approx(original.mc2).epsilon(1e-12));
    CHECK(shuffled.mc3 == original.mc3);

    mc_scores shifted;
    for (double x : s.per_choice_logprob) shifted.per_choice_logprob.push_back(x - 123.0);
    const mc_summary moved = mc_metrics({&item, 1}, {&shifted, 1});
    CHECK(moved.mc1 == original.mc1);
    CHECK(moved.mc2 == doctest::Approx(original.mc2).epsilon(1e-12));
    CHECK(moved.mc3 == original.mc3);
}

TEST_CASE("metrics stay within [0, 100] on random inputs") {
    std::mt19937_64 rng(2024);
    std::uniform_real_distribution<double> lp(-20.0, 0.0);
    std::uniform_int_distribution<int> nc(2, 6);
    std::vector<mc_item> items;
    std::vector<mc_scores> scores;
    for (int i = 0; i < 50; ++i) {
        mc_item item;
        item.id = "r" + std::to_string(i);
        item.question = "Q";
        const int n = nc(rng);
        for (int c = 0; c < n; ++c) {
            item.choices.push_back("c" + std::to_string(c));
            item.correct_mask.push_back(c == 0 || (c == 1 && n > 3) ? 1 : 0);
        }
        mc_scores s;
        for (int c = 0; c < n; ++c) s.per_choice_logprob.push_back(lp(rng));
        items.push_back(std::move(item));
        scores.push_back(std::move(s));
    }
    const mc_summary s = mc_metrics(items, scores);
    for (double m : {s.mc1, s.mc2, s.mc3, s.mc2_over_half}) {
        CHECK(m >= 0.0);
        CHECK(m <= 100.0);
    }
}

TEST_CASE("malformed items and score mismatches are rejected") {
    mc_item bad = yes_no_item("Q");
    bad.correct_mask = {1};
    CHECK_THROWS_AS(bad.validate(), ccd_error);

    mc_item all_correct = yes_no_item("Q");
    all_correct.correct_mask = {1, 1};
    CHECK_THROWS_AS(all_correct.validate(), ccd_error);

    mc_item no_question = yes_no_item("");
    CHECK_THROWS_AS(no_question.validate(), ccd_error);

    const mc_item fine = yes_no_item("Q");
    mc_scores short_scores;
    short_scores.per_choice_logprob = {0.0};
    CHECK_THROWS_AS((void)mc_metrics({&fine, 1}, {&short_scores, 1}), ccd_error);
    CHECK_THROWS_AS((void)mc_metrics({}, {}), ccd_error);
}

namespace {

// two misleading sentiment examples whose prompts are single table tokens:
// the neutral context mildly prefers the truth, the induced context strongly
// prefers the planted flip
struct sentiment_fixture {
    std::vector<induced_example> examples;
    table_lm lm;
};

sentiment_fixture make_sentiment_fixture() {
    const std::vector<source_record> records = [] {
        std::vector<source_record> r(2);
        r[0].id = "r-pos";
        r[0].text = "Loved the whole thing.";
        r[0].label = "positive";
        r[1].id = "r-neg";
        r[1].text = "Bitterly disappointing.";
        r[1].label = "negative";
        return r;
    }();
    std::vector<induced_example> examples =
        forge_dataset(records, task_kind::sentiment,
                      [] {
                          paradigm p;
                          p.kind = paradigm_kind::misleading_query;
                          return p;
                      }(),
                      detail_bank::builtin(), 0);

    std::vector<std::string> tokens = {"</s>", "positive", "negative"};
    for (const induced_example & ex : examples) {
        tokens.push_back(ex.base_prompt);
        tokens.push_back(ex.induced_prompt);
    }
    table_lm lm(testing::make_vocab(std::move(tokens), 0));
    const size_t v = lm.vocab().size();
    auto scores = [v](double eos, double pos, double neg) {
        logit_vector s(v, -9.0);
        s[0] = eos;
        s[1] = pos;
        s[2] = neg;
        return s;
    };
    for (const induced_example & ex : examples) {
        const bool truth_positive = ex.true_label == "positive";
        // neutral: margin +1 toward the truth
        lm.program(ex.base_prompt, {},
                   truth_positive ? scores(-9, 3, 2) : scores(-9, 2, 3));
        // induced: margin +3 toward the planted flip
        lm.program(ex.induced_prompt, {},
                   truth_positive ? scores(-9, 1, 4) : scores(-9, 4, 1));
    }
    lm.set_default_scores(scores(5, 0, 0));  // one label token, then eos
    return {std::move(examples), std::move(lm)};
}

} // namespace

TEST_CASE("run_eval separates the induced failure from the collaborative recovery") {
    sentiment_fixture fx = make_sentiment_fixture();
    const decoding_params p = params_of(1.0, 0.2, 4);

    const eval_run base = run_eval(task_kind::sentiment, fx.examples, method_kind::base,
                                   fx.lm, nullptr, p);
    CHECK(*base.report.accuracy == 100.0);

    const eval_run induced = run_eval(task_kind::sentiment, fx.examples, method_kind::induced,
                                      fx.lm, nullptr, p);
    CHECK(*induced.report.accuracy == 0.0);  // the flip wins everywhere

    const eval_run ccd = run_eval(task_kind::sentiment, fx.examples, method_kind::ccd,
                                  fx.lm, nullptr, p);
    CHECK(*ccd.report.accuracy == 100.0);  // the contrast restores the truth

    const eval_run neutral = run_eval(task_kind::sentiment, fx.examples,
                                      method_kind::neutral_only, fx.lm, nullptr, p);
    CHECK(*neutral.report.accuracy == 100.0);

    CHECK(base.report.n_examples == 2);
    CHECK(!base.report.mc1.has_value());
    REQUIRE(base.per_example_jsonl.size() == 2);
    const auto row = nlohmann::json::parse(base.per_example_jsonl[0]);
    CHECK(row.at("example_id") == "r-pos");
    CHECK(row.at("method") == "base");
    CHECK(row.at("predicted") == "positive");
    CHECK(row.at("true_label") == "positive");
}

TEST_CASE("parallel evaluation matches the sequential run exactly") {
    sentiment_fixture fx = make_sentiment_fixture();
    const decoding_params p = params_of(1.0, 0.2, 4);
    const eval_run seq = run_eval(task_kind::sentiment, fx.examples, method_kind::ccd,
                                  fx.lm, nullptr, p, 1);
    const eval_run par = run_eval(task_kind::sentiment, fx.examples, method_kind::ccd,
                                  fx.lm, nullptr, p, 4);
    CHECK(*seq.report.accuracy == *par.report.accuracy);
    CHECK(seq.per_example_jsonl == par.per_example_jsonl);
}

TEST_CASE("worker exceptions surface from parallel runs") {
    sentiment_fixture fx = make_sentiment_fixture();
    table_lm gappy(make_vocab({"</s>", "positive", "negative"}, 0));
    // prompts are not tokenizable: no unk and no matching tokens
    const decoding_params p = params_of(1.0, 0.2, 4);
    CHECK_THROWS_AS((void)run_eval(task_kind::sentiment, fx.examples, method_kind::base,
                                   gappy, nullptr, p, 4),
                    ccd_error);
}

TEST_CASE("fact evaluation populates multiple-choice metrics end to end") {
    const std::string question = "Q?";
    const std::string statement = "the sky is green";
    induced_example ex;
    ex.id = "q1";
    ex.text = question;
    ex.true_label = "yes";
    ex.correct_answers = {"yes"};
    ex.incorrect_answers = {"no"};
    ex.base_prompt = question;
    ex.induced_prompt = inject_false_answer(question, statement);
    ex.neutral_prompt = question;
    ex.par.kind = paradigm_kind::false_answer_prefix;
    ex.par.induced_label = statement;

    table_lm lm(make_vocab({"</s>", "yes", "no", question, ex.induced_prompt}, 0));
    lm.program(question, {}, {-9.0, 1.0, 0.0, -9.0, -9.0});
    lm.program(ex.induced_prompt, {}, {-9.0, -1.0, 2.0, -9.0, -9.0});

    const std::vector<induced_example> examples = {ex};
    const decoding_params p = params_of(1.0, 0.0, 4);

    const eval_run induced = run_eval(task_kind::fact, examples, method_kind::induced,
                                      lm, nullptr, p);
    CHECK(*induced.report.mc1 == 0.0);

    const eval_run ccd = run_eval(task_kind::fact, examples, method_kind::ccd,
                                  lm, nullptr, p);
    CHECK(*ccd.report.mc1 == 100.0);
    CHECK(*ccd.report.mc3 == 100.0);
    CHECK(ccd.report.mc2_over_half.has_value());
    CHECK(!ccd.report.accuracy.has_value());

    REQUIRE(ccd.per_example_jsonl.size() == 1);
    const auto row = nlohmann::json::parse(ccd.per_example_jsonl[0]);
    CHECK(row.at("example_id") == "q1");
    CHECK(row.at("choice_logprobs").size() == 2);
    CHECK(row.at("correct_mask") == nlohmann::json::array({true, false}));
}

TEST_CASE("run_eval rejects unusable requests") {
    sentiment_fixture fx = make_sentiment_fixture();
    const decoding_params p = params_of(1.0, 0.2, 4);
    CHECK_THROWS_AS((void)run_eval(task_kind::sentiment, {}, method_kind::base,
                                   fx.lm, nullptr, p),
                    ccd_error);
    try {
        (void)run_eval(task_kind::sentiment, fx.examples, method_kind::vanilla_cd,
                       fx.lm, nullptr, p);
        FAIL("expected method_backend_mismatch");
    } catch (const ccd_error & e) {
        CHECK(e.code() == errc::method_backend_mismatch);
    }
}
