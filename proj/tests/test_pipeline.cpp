#include <doctest.h>

#include <cstdlib>
#include <map>

#include "sciqag/pipeline.hpp"
#include "test_support.hpp"

using namespace sciqag;
using sciqag::test::TempDir;

namespace {

PipelineConfig toy_config(const std::filesystem::path& out_dir) {
    PipelineConfig cfg;
    cfg.manifest_path = test::data_path("toy_corpus/manifest.json");
    cfg.prompt_dir = test::prompt_dir();
    cfg.output_dir = out_dir;
    cfg.per_category_test = 1;
    cfg.split_seed = 17;
    cfg.force_mock = true;
    cfg.mock.judge_fixed_score = 5;
    cfg.mock.judge_low_score_pair = 4;  // one test pair per paper under threshold
    cfg.mock.taint_phrase_pair = 7;     // one train pair per paper phrase-filtered
    cfg.bench_models = {"mock-answerer"};
    cfg.bench_n = 12;
    cfg.bench_seed = 23;
    cfg.workers = 2;
    return cfg;
}

void run_all(Pipeline& p) {
    REQUIRE(p.run_generate().exit_code() == 0);
    REQUIRE(p.run_evaluate().exit_code() == 0);
    REQUIRE(p.run_filter().exit_code() == 0);
    REQUIRE(p.run_metrics().exit_code() == 0);
    REQUIRE(p.run_build().exit_code() == 0);
    REQUIRE(p.run_bench().exit_code() == 0);
}

/// All artifact files under the output dir except logs, as relative path -> bytes.
std::map<std::string, std::string> snapshot(const std::filesystem::path& dir) {
    std::map<std::string, std::string> out;
    for (const auto& entry : std::filesystem::recursive_directory_iterator(dir)) {
        if (!entry.is_regular_file()) continue;
        const std::string rel = std::filesystem::relative(entry.path(), dir).string();
        if (rel.rfind("logs/", 0) == 0) continue;
        out[rel] = read_file(entry.path());
    }
    return out;
}

std::size_t count_lines(const std::filesystem::path& path) {
    std::size_t n = 0;
    for (const auto& line : split(read_file(path), '\n')) {
        if (!trim_view(line).empty()) ++n;
    }
    return n;
}

}  // namespace

TEST_CASE("toy corpus runs end to end with the expected artifacts") {
    TempDir tmp("pipeline_e2e");
    PipelineConfig cfg = toy_config(tmp.path() / "out");
    Pipeline pipeline(cfg);

    const StageSummary gen = pipeline.run_generate();
    CHECK(gen.processed == 3);
    CHECK(gen.failed == 0);
    CHECK(count_lines(pipeline.generation_jsonl()) == 3);

    const StageSummary eval = pipeline.run_evaluate();
    CHECK(eval.processed == 2);  // one test paper per category
    CHECK(count_lines(pipeline.scores_jsonl()) == 20);

    const StageSummary filt = pipeline.run_filter();
    CHECK(filt.processed == 3);
    CHECK(count_lines(pipeline.decisions_path()) == 30);  // one decision per pair

    const StageSummary metrics = pipeline.run_metrics();
    CHECK(metrics.processed == 2);
    CHECK(std::filesystem::exists(pipeline.metrics_rollup_path()));
    CHECK(std::filesystem::exists(pipeline.histogram_path()));

    const StageSummary build = pipeline.run_build();
    CHECK(build.exit_code() == 0);
    CHECK(count_lines(pipeline.dataset_dir() / "train.jsonl") == 1);   // paper-level record
    CHECK(count_lines(pipeline.dataset_dir() / "test.jsonl") == 18);  // pair-level records

    const StageSummary bench = pipeline.run_bench();
    CHECK(bench.exit_code() == 0);
    const std::string csv = read_file(pipeline.bench_csv_path());
    CHECK(csv.find("mock-answerer,5.0000,5.0000,5.0000,12,12,0") != std::string::npos);

    // Hand ledger for the stats table: each train paper loses exactly one
    // pair to the phrase rule, each test paper exactly one to the threshold.
    const std::string stats = read_file(pipeline.dataset_dir() / "stats.csv");
    CHECK(stats.find("\"Chemistry, Analytical\",2,1,10,1,9,1,9") != std::string::npos);
    CHECK(stats.find("\"Physics, Applied\",1,0,0,0,0,1,9") != std::string::npos);
    CHECK(stats.find("Sum,3,1,10,1,9,2,18") != std::string::npos);

    // The decision log records which rule and phrase fired.
    const std::string decisions = read_file(pipeline.decisions_path());
    CHECK(decisions.find("phrase_blacklist") != std::string::npos);
    CHECK(decisions.find("this study") != std::string::npos);
    CHECK(decisions.find("score_threshold") != std::string::npos);
}

TEST_CASE("two full runs are byte-identical, and stages resume from artifacts") {
    TempDir tmp("pipeline_repro");
    PipelineConfig cfg1 = toy_config(tmp.path() / "run1");
    PipelineConfig cfg2 = toy_config(tmp.path() / "run2");
    Pipeline p1(cfg1), p2(cfg2);
    run_all(p1);
    run_all(p2);
    const auto snap1 = snapshot(tmp.path() / "run1");
    const auto snap2 = snapshot(tmp.path() / "run2");
    REQUIRE(snap1.size() == snap2.size());
    for (const auto& [rel, bytes] : snap1) {
        INFO("artifact: ", rel);
        REQUIRE(snap2.count(rel));
        CHECK(bytes == snap2.at(rel));
    }

    // Deleting one paper's generation artifact regenerates only that paper.
    const auto target = p1.generation_path("paperB");
    const std::string before = read_file(target);
    std::filesystem::remove(target);
    const StageSummary again = p1.run_generate();
    CHECK(again.processed == 1);
    CHECK(again.skipped == 2);
    CHECK(read_file(target) == before);

    // Re-running later stages off unchanged artifacts is a no-op byte-wise.
    const std::string scores_before = read_file(p1.scores_jsonl());
    const StageSummary eval_again = p1.run_evaluate();
    CHECK(eval_again.skipped == 2);
    CHECK(read_file(p1.scores_jsonl()) == scores_before);
}

TEST_CASE("later stages demand their inputs") {
    TempDir tmp("pipeline_missing");
    PipelineConfig cfg = toy_config(tmp.path() / "out");
    Pipeline pipeline(cfg);
    CHECK_THROWS_WITH_AS(pipeline.run_filter(), doctest::Contains("MissingStageInput"), Error);
    CHECK_THROWS_WITH_AS(pipeline.run_build(), doctest::Contains("MissingStageInput"), Error);
    CHECK_THROWS_WITH_AS(pipeline.run_bench(), doctest::Contains("MissingStageInput"), Error);

    REQUIRE(pipeline.run_generate().exit_code() == 0);
    REQUIRE(pipeline.run_evaluate().exit_code() == 0);
    CHECK_THROWS_WITH_AS(pipeline.run_build(), doctest::Contains("MissingStageInput"), Error);
}

TEST_CASE("config errors stop the pipeline before any backend call") {
    TempDir tmp("pipeline_cfg");
    PipelineConfig cfg = toy_config(tmp.path() / "out");
    cfg.threshold = 6;  // beyond scale_max 5
    CHECK_THROWS_WITH_AS(Pipeline{cfg}, doctest::Contains("ConfigError"), Error);
    CHECK_FALSE(std::filesystem::exists(tmp.path() / "out" / "generation"));
}

TEST_CASE("metrics scope widens to every paper when configured") {
    TempDir tmp("pipeline_scope");
    PipelineConfig cfg = toy_config(tmp.path() / "out");
    cfg.metrics_scope = "all";
    Pipeline pipeline(cfg);
    REQUIRE(pipeline.run_generate().exit_code() == 0);
    REQUIRE(pipeline.run_evaluate().exit_code() == 0);
    const StageSummary metrics = pipeline.run_metrics();
    CHECK(metrics.processed == 3);
}

TEST_CASE("the CLI binary wires the subcommands") {
    TempDir tmp("cli");
    const std::string config_path = (tmp.path() / "sciqag.toml").string();
    write_file_atomic(config_path, std::string("[corpus]\nmanifest = \"") +
                                       test::data_path("toy_corpus/manifest.json").string() +
                                       "\"\n\n[prompts]\ndir = \"" + test::prompt_dir().string() +
                                       "\"\n\n[output]\ndir = \"" + (tmp.path() / "out").string() +
                                       "\"\n\n[filter]\nper_category_test = 1\nseed = 17\n\n" +
                                       "[mock]\njudge_fixed_score = 5\njudge_low_score_pair = 4\n" +
                                       "taint_phrase_pair = 7\n");
    const std::string base =
        std::string(SCIQAG_CLI_PATH) + " --mock --config " + config_path;

    CHECK(std::system((base + " validate-config > /dev/null").c_str()) == 0);
    CHECK(std::system((base + " generate > /dev/null").c_str()) == 0);
    CHECK(std::filesystem::exists(tmp.path() / "out" / "generation.jsonl"));
    CHECK(std::system((base + " evaluate > /dev/null").c_str()) == 0);
    CHECK(std::system((base + " filter > /dev/null").c_str()) == 0);
    CHECK(std::filesystem::exists(tmp.path() / "out" / "splits.json"));
    CHECK(std::system((base + " metrics > /dev/null").c_str()) == 0);
    CHECK(std::system((base + " build > /dev/null").c_str()) == 0);
    CHECK(std::filesystem::exists(tmp.path() / "out" / "dataset" / "train.jsonl"));
    CHECK(std::system((base + " bench --models mock-answerer --n 5 --seed 3 > /dev/null").c_str()) ==
          0);
    CHECK(std::filesystem::exists(tmp.path() / "out" / "bench.csv"));

    // Config errors exit nonzero before touching any backend.
    CHECK(std::system((base + " filter --threshold 6 > /dev/null").c_str()) != 0);
}
