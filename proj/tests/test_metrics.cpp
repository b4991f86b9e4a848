#include <doctest.h>

#include <json.hpp>

#include "sciqag/gateway.hpp"
#include "sciqag/mock_backend.hpp"
#include "sciqag/quality_metrics.hpp"
#include "test_support.hpp"

using namespace sciqag;

namespace {

std::vector<std::string> canonicals_of(const std::string& text) {
    std::vector<std::string> out;
    for (const auto& tok : extract_numbers(text)) out.push_back(tok.canonical);
    return out;
}

/// 100 distinct sentences; the sentences of chunks {1,3,5} (1-indexed) share
/// the token "alpha", every other sentence uses fully disjoint vocabulary.
/// With the hash embedding this pins each answer's top-k inside those three
/// chunks (verified inside the tests that use it).
PaperRecord make_coverage_paper() {
    std::string text;
    for (int i = 0; i < 100; ++i) {
        const int chunk = i / 10;  // 0-based; chunks {0,2,4} are 1-indexed {1,3,5}
        const bool shared = chunk == 0 || chunk == 2 || chunk == 4;
        if (shared) {
            text += "alpha s" + std::to_string(i) + " w" + std::to_string(i) + "a w" +
                    std::to_string(i) + "b.";
        } else {
            text += "q" + std::to_string(i) + " r" + std::to_string(i) + " u" + std::to_string(i) +
                    "x.";
        }
        if (i != 99) text += " ";
    }
    return make_paper("coverage", "cat", text);
}

}  // namespace

TEST_CASE("number extraction matches the 40-string hand-labeled fixture") {
    const auto cases = nlohmann::json::parse(read_file(test::fixture_path("number_cases.json")));
    REQUIRE(cases.size() == 40);
    for (const auto& c : cases) {
        const std::string text = c.at("text").get<std::string>();
        std::vector<std::string> want;
        for (const auto& v : c.at("canonicals")) want.push_back(v.get<std::string>());
        INFO("text: ", text);
        CHECK(canonicals_of(text) == want);
    }
}

TEST_CASE("canonicalization is idempotent") {
    const auto cases = nlohmann::json::parse(read_file(test::fixture_path("number_cases.json")));
    for (const auto& c : cases) {
        for (const auto& tok : extract_numbers(c.at("text").get<std::string>())) {
            const auto again = canonicalize_number(tok.canonical);
            REQUIRE(again.has_value());
            INFO("canonical: ", tok.canonical);
            CHECK(*again == tok.canonical);
        }
    }
    DetRng rng(55);
    for (int iter = 0; iter < 300; ++iter) {
        std::string s = std::to_string(rng.below(100000));
        if (rng.below(2)) s += "." + std::to_string(rng.below(10000));
        if (rng.below(3) == 0) s += "e" + std::string(rng.below(2) ? "-" : "") + std::to_string(rng.below(30));
        if (rng.below(4) == 0) s += "%";
        const auto first = canonicalize_number(s);
        REQUIRE(first.has_value());
        CHECK(*canonicalize_number(*first) == *first);
    }
}

TEST_CASE("numeric source ratio: exact counting per the audit definition") {
    const PaperRecord paper =
        make_paper("p", "c", "The yield was 99.15% at 1,200 K. A control used 0.5 molar acid.");
    // Paper numbers (canonical): 99.15, 1200, 0.5.

    SUBCASE("all sourced gives ratio exactly 1.0") {
        const NumericAudit audit = numeric_source_ratio(
            {"Yield reached 99.15 percent.", "Temperature was 1200 kelvin and acid 0.50 molar."},
            paper);
        CHECK(audit.total_numbers == 3);
        CHECK(audit.matched_numbers == 3);
        REQUIRE(audit.ratio.has_value());
        CHECK(*audit.ratio == 1.0);
        CHECK(audit.answers_with_numbers_fraction == 1.0);
    }

    SUBCASE("one fabricated number gives exactly (K-1)/K") {
        const NumericAudit audit = numeric_source_ratio(
            {"Yield reached 99.15 percent.", "Temperature was 777 kelvin and acid 0.50 molar."},
            paper);
        CHECK(audit.total_numbers == 3);
        CHECK(audit.matched_numbers == 2);
        CHECK(*audit.ratio == static_cast<double>(2) / static_cast<double>(3));
    }

    SUBCASE("no numbers leaves the ratio absent") {
        const NumericAudit audit = numeric_source_ratio({"No digits anywhere."}, paper);
        CHECK(audit.total_numbers == 0);
        CHECK_FALSE(audit.ratio.has_value());
        CHECK(audit.answers_with_numbers_fraction == 0.0);
    }

    SUBCASE("normalization drives matching, not raw text") {
        const NumericAudit audit = numeric_source_ratio({"About 99.150 percent at 1.2e3 K."}, paper);
        CHECK(audit.matched_numbers == 2);  // 99.150 -> 99.15, 1.2e3 -> 1200
        CHECK(audit.total_numbers == 2);
    }
}

TEST_CASE("audit properties: fabrication strictly lowers, sourcing never lowers") {
    const PaperRecord paper = make_paper("p", "c", "Constants 3.5 and 42 appear.");
    std::vector<std::string> answers = {"First constant is 3.5."};
    const NumericAudit base = numeric_source_ratio(answers, paper);
    REQUIRE(base.ratio.has_value());

    answers.push_back("A fabricated 123456 value.");
    const NumericAudit worse = numeric_source_ratio(answers, paper);
    CHECK(*worse.ratio < *base.ratio);

    answers.push_back("The second constant is 42.");
    const NumericAudit better = numeric_source_ratio(answers, paper);
    CHECK(better.matched_numbers == worse.matched_numbers + 1);
    CHECK(better.total_numbers == worse.total_numbers + 1);
}

TEST_CASE("parse_similarity_score anchors on the exact phrase") {
    CHECK(parse_similarity_score("similarity score: 100") == 1.0);
    CHECK(parse_similarity_score("Similarity score: 0") == 0.0);
    CHECK(parse_similarity_score("After consideration...\nSimilarity Score: 35\n") == 0.35);
    CHECK_THROWS_WITH_AS(parse_similarity_score("score is about 35 I think"),
                         doctest::Contains("Unparseable"), Error);
    CHECK_THROWS_WITH_AS(parse_similarity_score("similarity score: 105"),
                         doctest::Contains("OutOfRange"), Error);
    CHECK_THROWS_WITH_AS(parse_similarity_score("similarity score: none"),
                         doctest::Contains("Unparseable"), Error);
}

TEST_CASE("similarity_matrix sizes, symmetry convention, identity") {
    const PromptSet prompts = PromptSet::load(test::prompt_dir());
    ChatGateway judge(std::make_shared<MockChatBackend>(MockChatOptions{}));

    std::vector<std::string> questions;
    for (int i = 0; i < 10; ++i) questions.push_back("Question " + std::to_string(i) + "?");
    const SimilarityMatrix m = similarity_matrix(judge, prompts, questions, "p");
    CHECK(m.scores.size() == 45);
    for (double s : m.scores) {
        CHECK(s >= 0.0);
        CHECK(s <= 1.0);
    }
    CHECK(m.at(3, 7) == m.at(7, 3));
    CHECK(m.at(4, 4) == 1.0);

    std::vector<std::string> same(4, "Identical question?");
    const SimilarityMatrix id = similarity_matrix(judge, prompts, same, "p");
    for (double s : id.scores) CHECK(s == 1.0);

    CHECK_THROWS_WITH_AS(similarity_matrix(judge, prompts, {"only one?"}, "p"),
                         doctest::Contains("InvalidArgument"), Error);
}

TEST_CASE("tri_index walks the upper triangle row-major") {
    const std::size_t n = 5;
    std::size_t expected = 0;
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i + 1; j < n; ++j) {
            CHECK(SimilarityMatrix::tri_index(i, j, n) == expected);
            ++expected;
        }
    }
    CHECK(expected == n * (n - 1) / 2);
}

TEST_CASE("diversity_stats pooled mean and threshold fractions") {
    SimilarityMatrix m;
    m.n = 10;
    for (int i = 0; i < 45; ++i) m.scores.push_back(static_cast<double>(i) / 44.0);

    const DiversityStats stats = diversity_stats({m});
    CHECK(stats.count == 45);
    CHECK(stats.mean == doctest::Approx(0.5).epsilon(1e-12));
    // i/44 < 0.3 for i <= 13 (14 values); i/44 > 0.7 for i >= 31 (14 values).
    CHECK(stats.frac_below.at(0.3) == doctest::Approx(14.0 / 45.0).epsilon(1e-12));
    CHECK(stats.frac_above.at(0.7) == doctest::Approx(14.0 / 45.0).epsilon(1e-12));

    SimilarityMatrix zeros;
    zeros.n = 3;
    zeros.scores = {0.0, 0.0, 0.0};
    const DiversityStats z = diversity_stats({zeros});
    CHECK(z.mean == 0.0);
    CHECK(z.frac_below.at(0.3) == 1.0);
    CHECK(z.frac_above.at(0.7) == 0.0);

    CHECK_THROWS_WITH_AS(diversity_stats({}), doctest::Contains("EmptyInput"), Error);
}

TEST_CASE("pooled similarity count over many matrices") {
    const PromptSet prompts = PromptSet::load(test::prompt_dir());
    ChatGateway judge(std::make_shared<MockChatBackend>(MockChatOptions{}));
    std::vector<SimilarityMatrix> matrices;
    for (int paper = 0; paper < 5; ++paper) {
        std::vector<std::string> questions;
        for (int i = 0; i < 10; ++i) {
            questions.push_back("Paper " + std::to_string(paper) + " question " + std::to_string(i) + "?");
        }
        matrices.push_back(similarity_matrix(judge, prompts, questions, "p" + std::to_string(paper)));
    }
    const DiversityStats stats = diversity_stats(matrices);
    CHECK(stats.count == 5 * 45);
}

TEST_CASE("coverage rate: constructed hit set gives exactly 0.3") {
    const PaperRecord paper = make_coverage_paper();
    REQUIRE(paper.sentences.size() == 100);
    EmbeddingGateway embedder(std::make_shared<HashEmbeddingBackend>(512));

    // Answers are verbatim copies of sentences in chunks 1, 3 and 5.
    const std::vector<std::string> answers = {paper.sentences[5].text, paper.sentences[25].text,
                                              paper.sentences[45].text};

    // Construction guarantee: sentences outside the shared-vocabulary chunks
    // are exactly orthogonal to every answer under the hash embedding.
    for (const auto& answer : answers) {
        const EmbeddingVector av = embedder.embed(answer);
        for (int i = 0; i < 100; ++i) {
            const int chunk = i / 10;
            if (chunk == 0 || chunk == 2 || chunk == 4) continue;
            CHECK(cosine(av, embedder.embed(paper.sentences[i].text)) == 0.0);
        }
    }

    const CoverageReport report = coverage_rate(embedder, answers, paper, 0.15, 10);
    CHECK(report.n_chunks == 10);
    CHECK(report.hits == 3);
    CHECK(report.rate == 3.0 / 10.0);
    CHECK(report.chunk_hits == std::vector<bool>{true, false, true, false, true, false, false, false,
                                                 false, false});
}

TEST_CASE("coverage rate: k_fraction=1 hits every chunk") {
    const PaperRecord paper = make_coverage_paper();
    EmbeddingGateway embedder(std::make_shared<HashEmbeddingBackend>(512));
    const CoverageReport report = coverage_rate(embedder, {paper.sentences[5].text}, paper, 1.0, 10);
    CHECK(report.hits == 10);
    CHECK(report.rate == 1.0);
}

TEST_CASE("coverage rate is monotone in k and in added answers, and quantized") {
    const PaperRecord paper = make_coverage_paper();
    EmbeddingGateway embedder(std::make_shared<HashEmbeddingBackend>(512));
    const std::vector<std::string> answers = {paper.sentences[5].text, paper.sentences[25].text};

    double prev = -1.0;
    for (double k : {0.05, 0.15, 0.5, 1.0}) {
        const CoverageReport r = coverage_rate(embedder, answers, paper, k, 10);
        CHECK(r.rate >= prev);
        prev = r.rate;
        const double scaled = r.rate * 10.0;
        CHECK(scaled == static_cast<double>(r.hits));  // rate is hits/n exactly
    }

    const CoverageReport one = coverage_rate(embedder, {paper.sentences[5].text}, paper, 0.15, 10);
    const CoverageReport two = coverage_rate(embedder, answers, paper, 0.15, 10);
    CHECK(two.rate >= one.rate);
}

TEST_CASE("coverage clamps the chunk count for short papers") {
    const PaperRecord tiny = make_paper("tiny", "c", "One alpha. Two alpha. Three alpha.");
    EmbeddingGateway embedder(std::make_shared<HashEmbeddingBackend>(128));
    const CoverageReport r = coverage_rate(embedder, {"One alpha."}, tiny, 0.5, 10);
    CHECK(r.n_chunks == 3);  // denominator never counts unreachable chunks
    CHECK(r.rate <= 1.0);
}

TEST_CASE("coverage input validation") {
    EmbeddingGateway embedder(std::make_shared<HashEmbeddingBackend>(64));
    PaperRecord empty;
    empty.paper_id = "x";
    CHECK_THROWS_WITH_AS(coverage_rate(embedder, {"a"}, empty, 0.15, 10),
                         doctest::Contains("EmptyPaper"), Error);
    const PaperRecord ok = make_paper("p", "c", "Sentence one. Sentence two.");
    CHECK_THROWS_WITH_AS(coverage_rate(embedder, {}, ok, 0.15, 10), doctest::Contains("EmptyInput"),
                         Error);
    CHECK_THROWS_WITH_AS(coverage_rate(embedder, {"a"}, ok, 0.0, 10),
                         doctest::Contains("InvalidArgument"), Error);
}
