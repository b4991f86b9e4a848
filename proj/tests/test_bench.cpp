#include <doctest.h>

#include "sciqag/bench.hpp"
#include "sciqag/mock_backend.hpp"
#include "test_support.hpp"

using namespace sciqag;

namespace {

std::vector<BenchQuestion> make_pool(int n) {
    std::vector<BenchQuestion> pool;
    for (int i = 0; i < n; ++i) {
        BenchQuestion q;
        q.paper_id = "p" + std::to_string(i / 10);
        q.pair_index = i % 10 + 1;
        q.id = q.paper_id + "#" + std::to_string(q.pair_index);
        q.question = "Benchmark question " + std::to_string(i) + "?";
        q.reference_answer = "Reference " + std::to_string(i) + ".";
        pool.push_back(std::move(q));
    }
    return pool;
}

}  // namespace

TEST_CASE("sample_questions: size, determinism, clamping") {
    const SampleResult a = sample_questions(8531, 1000, 23);
    CHECK(a.indices.size() == 1000);
    CHECK(a.warnings.empty());
    const SampleResult b = sample_questions(8531, 1000, 23);
    CHECK(a.indices == b.indices);
    const SampleResult c = sample_questions(8531, 1000, 24);
    CHECK(a.indices != c.indices);

    // Without replacement and in ascending pool order.
    for (std::size_t i = 1; i < a.indices.size(); ++i) CHECK(a.indices[i] > a.indices[i - 1]);
    for (std::size_t idx : a.indices) CHECK(idx < 8531);

    const SampleResult small = sample_questions(5, 1000, 1);
    CHECK(small.indices.size() == 5);
    REQUIRE(small.warnings.size() == 1);

    CHECK_THROWS_WITH_AS(sample_questions(0, 10, 1), doctest::Contains("EmptyInput"), Error);
}

TEST_CASE("answer_questions answers everything with a healthy mock") {
    const PromptSet prompts = PromptSet::load(test::prompt_dir());
    ChatGateway model(std::make_shared<MockChatBackend>(MockChatOptions{}));
    const auto pool = make_pool(20);
    ChatRequest params;
    params.temperature = 0.8;
    params.top_p = 0.75;
    const auto answers = answer_questions(model, prompts, pool, params);
    REQUIRE(answers.size() == 20);
    for (std::size_t i = 0; i < answers.size(); ++i) {
        CHECK(answers[i].answered);
        CHECK(answers[i].question_id == pool[i].id);
        CHECK_FALSE(answers[i].text.empty());
    }
}

TEST_CASE("failed generations are recorded as unanswered, not fatal") {
    const PromptSet prompts = PromptSet::load(test::prompt_dir());
    MockChatOptions opts;
    opts.fail_if_prompt_contains = {"question 3?", "question 7?", "question 11?"};
    ChatGateway model(std::make_shared<MockChatBackend>(opts));
    const auto pool = make_pool(50);
    const auto answers = answer_questions(model, prompts, pool, {});
    std::size_t unanswered = 0;
    for (const auto& a : answers) {
        if (!a.answered) {
            ++unanswered;
            CHECK(a.error_kind == "BackendUnavailable");
        }
    }
    CHECK(unanswered == 3);
}

TEST_CASE("grade_and_aggregate with a constant judge gives constant means") {
    const PromptSet prompts = PromptSet::load(test::prompt_dir());
    MockChatOptions judge_opts;
    judge_opts.fixed_judge_score = 4;
    ChatGateway judge(std::make_shared<MockChatBackend>(judge_opts));
    ChatGateway model(std::make_shared<MockChatBackend>(MockChatOptions{}));

    BenchRun run;
    run.model_tag = "mock-model";
    run.sampled = make_pool(25);
    run.answers = answer_questions(model, prompts, run.sampled, {});
    const LeaderboardRow row = grade_and_aggregate(judge, prompts, run);
    CHECK(row.sampled == 25);
    CHECK(row.graded == 25);
    CHECK(row.unanswered == 0);
    CHECK(row.completeness == 4.0);
    CHECK(row.accuracy == 4.0);
    CHECK(row.reasonableness == 4.0);
    CHECK(run.car_scores.size() == 25);
}

TEST_CASE("unanswered questions are excluded from the means and counted") {
    const PromptSet prompts = PromptSet::load(test::prompt_dir());
    MockChatOptions judge_opts;
    judge_opts.fixed_judge_score = 5;
    ChatGateway judge(std::make_shared<MockChatBackend>(judge_opts));
    MockChatOptions model_opts;
    model_opts.fail_if_prompt_contains = {"question 1?", "question 2?"};
    ChatGateway model(std::make_shared<MockChatBackend>(model_opts));

    BenchRun run;
    run.model_tag = "m";
    run.sampled = make_pool(10);
    run.answers = answer_questions(model, prompts, run.sampled, {});
    const LeaderboardRow row = grade_and_aggregate(judge, prompts, run);
    CHECK(row.unanswered == 2);
    CHECK(row.graded == 8);
    CHECK(row.completeness == 5.0);  // mean over graded only
    CHECK(row.graded + row.unanswered + row.grade_failures == row.sampled);
}

TEST_CASE("aggregate means stay within the scale bounds") {
    const PromptSet prompts = PromptSet::load(test::prompt_dir());
    ChatGateway judge(std::make_shared<MockChatBackend>(MockChatOptions{}));  // varied scores
    ChatGateway model(std::make_shared<MockChatBackend>(MockChatOptions{}));
    BenchRun run;
    run.model_tag = "m";
    run.sampled = make_pool(30);
    run.answers = answer_questions(model, prompts, run.sampled, {});
    const LeaderboardRow row = grade_and_aggregate(judge, prompts, run);
    for (double mean : {row.completeness, row.accuracy, row.reasonableness}) {
        CHECK(mean >= 1.0);
        CHECK(mean <= 5.0);
    }
}

TEST_CASE("leaderboard csv formats means to 4 decimals and deltas against the baseline") {
    LeaderboardRow base;
    base.model = "base-model";
    base.sampled = base.graded = 960;
    base.completeness = 2.7813;
    base.accuracy = 2.9625;
    base.reasonableness = 3.2917;
    LeaderboardRow tuned;
    tuned.model = "tuned-model";
    tuned.sampled = tuned.graded = 960;
    tuned.completeness = 3.1479;
    tuned.accuracy = 3.8875;
    tuned.reasonableness = 4.3896;

    const std::string csv = leaderboard_csv({base, tuned}, "base-model");
    CHECK(csv.find("base-model,2.7813,2.9625,3.2917,960,960,0,,,") != std::string::npos);
    CHECK(csv.find("tuned-model,3.1479,3.8875,4.3896,960,960,0,+13.18%,+31.22%,+33.35%") !=
          std::string::npos);

    const std::string no_baseline = leaderboard_csv({base, tuned}, "");
    CHECK(no_baseline.find("+13.18%") == std::string::npos);
}

TEST_CASE("four-decimal formatting of exact means") {
    LeaderboardRow row;
    row.model = "m";
    row.sampled = row.graded = 10;
    row.completeness = row.accuracy = row.reasonableness = 4.0;
    const std::string csv = leaderboard_csv({row}, "");
    CHECK(csv.find("m,4.0000,4.0000,4.0000,10,10,0") != std::string::npos);
}
