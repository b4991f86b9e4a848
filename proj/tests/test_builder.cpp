#include <doctest.h>

#include <json.hpp>

#include "sciqag/dataset_builder.hpp"
#include "sciqag/qa_generator.hpp"
#include "test_support.hpp"

using namespace sciqag;
using sciqag::test::TempDir;

namespace {

QaSet qa_with(const std::string& paper_id, int n) {
    QaSet qa;
    qa.paper_id = paper_id;
    for (int i = 1; i <= 2; ++i) qa.keywords.keywords.push_back(paper_id + "-kw" + std::to_string(i));
    for (int i = 1; i <= n; ++i) {
        qa.pairs.push_back({i, paper_id + " question " + std::to_string(i) + "?",
                            paper_id + " answer " + std::to_string(i) + "."});
    }
    return qa;
}

RacarScore uniform_score(const std::string& paper_id, int pair_index, int value) {
    RacarScore s;
    s.paper_id = paper_id;
    s.pair_index = pair_index;
    s.scale_max = 5;
    for (RacarDim d : kRacarDims) s.dim(d).score = value;
    return s;
}

/// Toy world: catA has p1 (train) and p2 (test), catB has p3 (test).
struct ToyWorld {
    CorpusManifest manifest;
    std::map<std::string, QaSet> qa_sets;
    std::map<std::string, std::vector<RacarScore>> scores;
    std::vector<FilterDecision> decisions;
    SplitResult splits;
};

ToyWorld make_toy() {
    ToyWorld w;
    w.manifest.categories = {"catA", "catB"};
    w.manifest.papers = {{"p1", "catA", "x"}, {"p2", "catA", "x"}, {"p3", "catB", "x"}};

    w.qa_sets["p1"] = qa_with("p1", 10);
    w.qa_sets["p1"].pairs[6].answer = "In this study the effect doubled.";  // phrase-filtered
    w.qa_sets["p2"] = qa_with("p2", 10);
    w.qa_sets["p3"] = qa_with("p3", 10);

    for (const std::string id : {"p2", "p3"}) {
        for (int i = 1; i <= 10; ++i) {
            w.scores[id].push_back(uniform_score(id, i, i == 4 ? 1 : 5));  // pair 4 under threshold
        }
    }

    w.splits.assignments = {{"p1", Split::train}, {"p2", Split::test}, {"p3", Split::test}};

    for (const auto& d : filter_train("p1", w.qa_sets["p1"].pairs)) w.decisions.push_back(d);
    for (const std::string id : {"p2", "p3"}) {
        for (const auto& d : filter_test(w.scores[id], 3)) w.decisions.push_back(d);
    }
    return w;
}

}  // namespace

TEST_CASE("paper-level records reproduce the fine-tuning schema") {
    const PromptSet prompts = PromptSet::load(test::prompt_dir());
    const PaperRecord paper = make_paper("p1", "catA", "Body of the paper.");
    const QaSet qa = qa_with("p1", 10);

    const auto records = to_instruction_records(prompts, paper, qa, ExportMode::paper_level);
    REQUIRE(records.size() == 1);
    CHECK(records[0].instruction.rfind("Here is a two-step task for you.", 0) == 0);
    CHECK(records[0].instruction.find("Here is a scientific paper") == std::string::npos);
    CHECK(records[0].input == "Body of the paper.");
    CHECK(records[0].output.find("Q10:") != std::string::npos);

    // Round-trip through the generation parser reproduces the kept pairs.
    const GenerationParse parsed = parse_generation_output(records[0].output, 10, 2);
    REQUIRE(parsed.ok());
    REQUIRE(parsed.pairs.size() == 10);
    for (int i = 0; i < 10; ++i) {
        CHECK(parsed.pairs[i].question == qa.pairs[i].question);
        CHECK(parsed.pairs[i].answer == qa.pairs[i].answer);
    }
}

TEST_CASE("pair-level records emit one closed-book QA record per pair") {
    const PromptSet prompts = PromptSet::load(test::prompt_dir());
    const PaperRecord paper = make_paper("p1", "catA", "Body.");
    const auto records = to_instruction_records(prompts, paper, qa_with("p1", 7), ExportMode::pair_level);
    REQUIRE(records.size() == 7);
    CHECK(records[0].instruction == std::string(kAnswerDirective));
    CHECK(records[3].input == "p1 question 4?");
    CHECK(records[3].output == "p1 answer 4.");
}

TEST_CASE("empty kept set is an error") {
    const PromptSet prompts = PromptSet::load(test::prompt_dir());
    const PaperRecord paper = make_paper("p1", "catA", "Body.");
    QaSet empty;
    empty.paper_id = "p1";
    CHECK_THROWS_WITH_AS(to_instruction_records(prompts, paper, empty, ExportMode::pair_level),
                         doctest::Contains("EmptySet"), Error);
}

TEST_CASE("build_dataset applies the asymmetric rules and books categories") {
    const ToyWorld w = make_toy();
    const DatasetSplit ds = build_dataset(w.manifest, w.qa_sets, w.scores, w.decisions, w.splits);

    REQUIRE(ds.train.size() == 1);
    CHECK(ds.train[0].paper_id == "p1");
    CHECK(ds.train[0].kept.pairs.size() == 9);  // phrase rule dropped pair 7
    for (const auto& p : ds.train[0].kept.pairs) CHECK(p.index != 7);

    REQUIRE(ds.test.size() == 2);
    for (const auto& paper : ds.test) {
        CHECK(paper.kept.pairs.size() == 9);  // score rule dropped pair 4
        for (const auto& p : paper.kept.pairs) CHECK(p.index != 4);
    }

    const CategoryStats& catA = ds.stats.at("catA");
    CHECK(catA.original_papers == 2);
    CHECK(catA.train_papers == 1);
    CHECK(catA.train_qa == 10);
    CHECK(catA.train_papers_filtered == 1);
    CHECK(catA.train_qa_filtered == 9);
    CHECK(catA.test_papers_filtered == 1);
    CHECK(catA.test_qa_filtered == 9);
    const CategoryStats& catB = ds.stats.at("catB");
    CHECK(catB.original_papers == 1);
    CHECK(catB.train_papers == 0);
    CHECK(catB.test_qa_filtered == 9);
}

TEST_CASE("rule independence: test pairs never phrase-filtered, train never score-filtered") {
    ToyWorld w = make_toy();
    // Give a test paper a blacklisted phrase; it must survive (score rule only).
    w.qa_sets["p2"].pairs[0].answer = "As shown in this paper, values agree.";
    const DatasetSplit ds = build_dataset(w.manifest, w.qa_sets, w.scores, w.decisions, w.splits);
    bool found = false;
    for (const auto& paper : ds.test) {
        if (paper.paper_id != "p2") continue;
        for (const auto& p : paper.kept.pairs) found |= p.index == 1;
    }
    CHECK(found);
}

TEST_CASE("missing judge records for a test paper is an error") {
    ToyWorld w = make_toy();
    w.scores.erase("p3");
    CHECK_THROWS_WITH_AS(build_dataset(w.manifest, w.qa_sets, w.scores, w.decisions, w.splits),
                         doctest::Contains("MissingScores"), Error);
}

TEST_CASE("empty decisions leave the dataset unfiltered") {
    ToyWorld w = make_toy();
    const DatasetSplit ds = build_dataset(w.manifest, w.qa_sets, w.scores, {}, w.splits);
    CHECK(ds.train[0].kept.pairs.size() == 10);
    for (const auto& paper : ds.test) CHECK(paper.kept.pairs.size() == 10);
}

TEST_CASE("papers losing every pair drop out of the filtered paper counts") {
    ToyWorld w = make_toy();
    for (auto& pair : w.qa_sets["p1"].pairs) pair.answer = "All about this study.";
    w.decisions.clear();
    for (const auto& d : filter_train("p1", w.qa_sets["p1"].pairs)) w.decisions.push_back(d);
    for (const std::string id : {"p2", "p3"}) {
        for (const auto& d : filter_test(w.scores.at(id), 3)) w.decisions.push_back(d);
    }
    const DatasetSplit ds = build_dataset(w.manifest, w.qa_sets, w.scores, w.decisions, w.splits);
    CHECK(ds.train.empty());
    CHECK(ds.stats.at("catA").train_papers == 1);           // pre-filter support
    CHECK(ds.stats.at("catA").train_papers_filtered == 0);  // dropped post-filter
}

TEST_CASE("stats_table appends an exact Sum row") {
    const ToyWorld w = make_toy();
    const DatasetSplit ds = build_dataset(w.manifest, w.qa_sets, w.scores, w.decisions, w.splits);
    const auto rows = stats_table(ds);
    REQUIRE(rows.size() == 3);  // catA, catB, Sum
    const CategoryStats& sum = rows.back();
    CHECK(sum.category == "Sum");
    CHECK(sum.original_papers == rows[0].original_papers + rows[1].original_papers);
    CHECK(sum.train_qa_filtered == rows[0].train_qa_filtered + rows[1].train_qa_filtered);
    CHECK(sum.test_qa_filtered == 18);
    CHECK(sum.original_papers == 3);
}

TEST_CASE("stats csv quotes categories containing commas") {
    CategoryStats cs;
    cs.category = "Chemistry, Analytical";
    cs.original_papers = 1;
    const std::string csv = stats_csv({cs});
    CHECK(csv.find("\"Chemistry, Analytical\",1,") != std::string::npos);
}

TEST_CASE("jsonl export: canonical bytes, NFC normalization, round-trip") {
    TempDir tmp("export");
    std::vector<InstructionRecord> records;
    records.push_back({"Do the task.", "input text", "output text"});
    // "e" + combining acute accent; NFC composes it to a single code point.
    records.push_back({"Compose", "caf\x65\xCC\x81", "ok"});

    const ExportReport report = export_jsonl(records, tmp.path() / "a.jsonl");
    CHECK(report.records == 2);
    const std::string body = read_file(tmp.path() / "a.jsonl");
    CHECK(body.back() == '\n');
    CHECK(body.find("caf\xC3\xA9") != std::string::npos);  // composed form in the bytes

    const ExportReport again = export_jsonl(records, tmp.path() / "b.jsonl");
    CHECK(read_file(tmp.path() / "a.jsonl") == read_file(tmp.path() / "b.jsonl"));

    // Round-trip: one JSON object per line with the three schema fields.
    std::size_t lines = 0;
    for (const auto& line : split(body, '\n')) {
        if (line.empty()) continue;
        const auto doc = nlohmann::json::parse(line);
        CHECK(doc.contains("instruction"));
        CHECK(doc.contains("input"));
        CHECK(doc.contains("output"));
        CHECK(doc.size() == 3);
        ++lines;
    }
    CHECK(lines == 2);
}

TEST_CASE("export_dataset writes the four dataset files and records validate against the schema") {
    const PromptSet prompts = PromptSet::load(test::prompt_dir());
    const ToyWorld w = make_toy();
    const DatasetSplit ds = build_dataset(w.manifest, w.qa_sets, w.scores, w.decisions, w.splits);
    std::map<std::string, PaperRecord> papers;
    for (const auto& entry : w.manifest.papers) {
        papers.emplace(entry.id, make_paper(entry.id, entry.category, "Body of " + entry.id + "."));
    }

    TempDir tmp("dataset");
    const DatasetExportReport report = export_dataset(ds, prompts, papers, tmp.path());
    CHECK(std::filesystem::exists(tmp.path() / "train.jsonl"));
    CHECK(std::filesystem::exists(tmp.path() / "test.jsonl"));
    CHECK(std::filesystem::exists(tmp.path() / "stats.csv"));
    CHECK(std::filesystem::exists(tmp.path() / "schema.json"));
    CHECK(report.train.records == 1);   // paper-level
    CHECK(report.test.records == 18);   // pair-level

    // Validate every record against the published schema file.
    const auto schema = nlohmann::json::parse(read_file(tmp.path() / "schema.json"));
    std::vector<std::string> required;
    for (const auto& r : schema.at("required")) required.push_back(r.get<std::string>());
    const bool no_extras = !schema.value("additionalProperties", true);
    for (const auto& file : {"train.jsonl", "test.jsonl"}) {
        for (const auto& line : split(read_file(tmp.path() / file), '\n')) {
            if (line.empty()) continue;
            const auto doc = nlohmann::json::parse(line);
            REQUIRE(doc.is_object());
            for (const auto& key : required) {
                REQUIRE(doc.contains(key));
                const std::string type =
                    schema.at("properties").at(key).at("type").get<std::string>();
                if (type == "string") CHECK(doc.at(key).is_string());
            }
            if (no_extras) CHECK(doc.size() == required.size());
        }
    }
}
