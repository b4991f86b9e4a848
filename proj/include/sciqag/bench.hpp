#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "sciqag/dataset_builder.hpp"
#include "sciqag/gateway.hpp"
#include "sciqag/prompts.hpp"
#include "sciqag/qa_evaluator.hpp"
#include "sciqag/util.hpp"

namespace sciqag {

struct BenchQuestion {
    std::string id;  // "<paper_id>#<pair_index>"
    std::string paper_id;
    int pair_index = 0;
    std::string question;
    std::string reference_answer;
};

inline std::vector<BenchQuestion> collect_test_questions(const DatasetSplit& split) {
    std::vector<BenchQuestion> out;
    for (const auto& paper : split.test) {
        for (const auto& pair : paper.kept.pairs) {
            BenchQuestion q;
            q.paper_id = paper.paper_id;
            q.pair_index = pair.index;
            q.id = paper.paper_id + "#" + std::to_string(pair.index);
            q.question = pair.question;
            q.reference_answer = pair.answer;
            out.push_back(std::move(q));
        }
    }
    return out;
}

struct SampleResult {
    std::vector<std::size_t> indices;  // ascending, into the question pool
    std::vector<std::string> warnings;
};

/// Uniform sample without replacement, clamped to the pool size with a
/// warning. Output order follows the pool so downstream artifacts are stable.
inline SampleResult sample_questions(std::size_t total, std::size_t n, std::uint64_t seed) {
    SampleResult result;
    if (total == 0) throw Error("EmptyInput", "no test questions to sample from");
    if (n > total) {
        result.warnings.push_back("requested " + std::to_string(n) + " questions but only " +
                                  std::to_string(total) + " are available");
        n = total;
    }
    std::vector<std::size_t> indices(total);
    for (std::size_t i = 0; i < total; ++i) indices[i] = i;
    DetRng rng(mix64(seed));
    rng.shuffle(indices);
    indices.resize(n);
    std::sort(indices.begin(), indices.end());
    result.indices = std::move(indices);
    return result;
}

struct BenchAnswer {
    std::string question_id;
    std::string text;
    bool answered = false;
    std::string error_kind;  // set when the model call failed
};

/// One answer per question; backend failures are recorded as unanswered
/// rather than aborting the run.
inline std::vector<BenchAnswer> answer_questions(ChatGateway& model, const PromptSet& prompts,
                                                 const std::vector<BenchQuestion>& questions,
                                                 const ChatRequest& params) {
    std::vector<BenchAnswer> answers;
    answers.reserve(questions.size());
    for (const auto& q : questions) {
        BenchAnswer a;
        a.question_id = q.id;
        ChatRequest req = params;
        req.prompt = prompts.bench_answer.render({{"question", q.question}});
        try {
            a.text = model.complete(req).text;
            a.answered = true;
        } catch (const Error& e) {
            a.answered = false;
            a.error_kind = e.kind();
        }
        answers.push_back(std::move(a));
    }
    return answers;
}

struct LeaderboardRow {
    std::string model;
    std::size_t sampled = 0;
    std::size_t graded = 0;
    std::size_t unanswered = 0;
    std::size_t grade_failures = 0;
    double completeness = 0.0;
    double accuracy = 0.0;
    double reasonableness = 0.0;
};

struct BenchRun {
    std::string model_tag;
    std::vector<BenchQuestion> sampled;
    std::vector<BenchAnswer> answers;
    std::map<std::string, CarScore> car_scores;  // question_id -> grade
    LeaderboardRow row;
};

/// CAR-grades every answered question and aggregates arithmetic means.
/// Unanswered questions and per-question judge failures are excluded from
/// the means and reported in the row.
inline LeaderboardRow grade_and_aggregate(ChatGateway& judge, const PromptSet& prompts,
                                          BenchRun& run, int judge_retries = 2,
                                          const ChatRequest& judge_params = {}) {
    LeaderboardRow row;
    row.model = run.model_tag;
    row.sampled = run.sampled.size();
    double sum_c = 0.0, sum_a = 0.0, sum_r = 0.0;
    for (std::size_t i = 0; i < run.sampled.size(); ++i) {
        const BenchAnswer& answer = run.answers.at(i);
        if (!answer.answered) {
            ++row.unanswered;
            continue;
        }
        QaPair pair;
        pair.index = run.sampled[i].pair_index;
        pair.question = run.sampled[i].question;
        pair.answer = answer.text;
        try {
            const CarScore car = evaluate_car(judge, prompts, pair, judge_retries, judge_params);
            run.car_scores[answer.question_id] = car;
            sum_c += car.completeness.score;
            sum_a += car.accuracy.score;
            sum_r += car.reasonableness.score;
            ++row.graded;
        } catch (const Error&) {
            ++row.grade_failures;
        }
    }
    if (row.graded > 0) {
        row.completeness = sum_c / static_cast<double>(row.graded);
        row.accuracy = sum_a / static_cast<double>(row.graded);
        row.reasonableness = sum_r / static_cast<double>(row.graded);
    }
    run.row = row;
    return row;
}

// ---------------------------------------------------------------------------
// Leaderboard CSV: means to 4 decimals, plus per-dimension percentage deltas
// against a named baseline row when one is configured.
// ---------------------------------------------------------------------------

inline std::string leaderboard_csv(const std::vector<LeaderboardRow>& rows,
                                   const std::string& baseline_model = "") {
    const LeaderboardRow* baseline = nullptr;
    for (const auto& r : rows) {
        if (!baseline_model.empty() && r.model == baseline_model) baseline = &r;
    }
    std::string csv =
        "model,completeness,accuracy,reasonableness,graded,sampled,unanswered,"
        "delta_completeness,delta_accuracy,delta_reasonableness\n";
    auto delta = [&](double value, double base) -> std::string {
        if (base == 0.0) return "";
        const double pct = (value - base) / base * 100.0;
        return (pct >= 0 ? "+" : "") + format_fixed(pct, 2) + "%";
    };
    for (const auto& r : rows) {
        csv += r.model + ",";
        if (r.graded > 0) {
            csv += format_fixed(r.completeness, 4) + "," + format_fixed(r.accuracy, 4) + "," +
                   format_fixed(r.reasonableness, 4);
        } else {
            csv += ",,";
        }
        csv += "," + std::to_string(r.graded) + "," + std::to_string(r.sampled) + "," +
               std::to_string(r.unanswered);
        if (baseline && baseline->model != r.model && r.graded > 0) {
            csv += "," + delta(r.completeness, baseline->completeness) + "," +
                   delta(r.accuracy, baseline->accuracy) + "," +
                   delta(r.reasonableness, baseline->reasonableness);
        } else {
            csv += ",,,";
        }
        csv += "\n";
    }
    return csv;
}

inline nlohmann::ordered_json bench_answer_to_json(const BenchQuestion& q, const BenchAnswer& a) {
    return nlohmann::ordered_json{{"question_id", a.question_id},
                                  {"question", q.question},
                                  {"answer", a.text},
                                  {"answered", a.answered},
                                  {"error", a.error_kind}};
}

inline nlohmann::ordered_json bench_grade_to_json(const std::string& question_id, const CarScore& car) {
    return nlohmann::ordered_json{{"question_id", question_id},
                                  {"completeness", car.completeness.score},
                                  {"accuracy", car.accuracy.score},
                                  {"reasonableness", car.reasonableness.score}};
}

}  // namespace sciqag
