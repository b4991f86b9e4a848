#include <doctest.h>

#include "sciqag/config.hpp"
#include "test_support.hpp"

using namespace sciqag;
using sciqag::test::TempDir;

TEST_CASE("toml subset: tables, types, arrays, comments") {
    const std::string text = R"(# top comment
title = "demo"  # trailing comment
count = 42
ratio = 0.15
flag = true
names = ["a", "b,c", "d"]
numbers = [1, 2, 3]

[section]
key = "value"

[nested.inner]
deep = -7
)";
    const auto doc = toml::parse(text);
    CHECK(doc.at("title").get<std::string>() == "demo");
    CHECK(doc.at("count").get<int>() == 42);
    CHECK(doc.at("ratio").get<double>() == 0.15);
    CHECK(doc.at("flag").get<bool>() == true);
    CHECK(doc.at("names").size() == 3);
    CHECK(doc.at("names")[1].get<std::string>() == "b,c");
    CHECK(doc.at("numbers")[2].get<int>() == 3);
    CHECK(doc.at("section").at("key").get<std::string>() == "value");
    CHECK(doc.at("nested").at("inner").at("deep").get<int>() == -7);
}

TEST_CASE("toml subset: string escapes and errors") {
    CHECK(toml::parse("s = \"a\\nb\\\"c\\\\d\"").at("s").get<std::string>() == "a\nb\"c\\d");
    CHECK_THROWS_WITH_AS(toml::parse("broken"), doctest::Contains("ConfigError"), Error);
    CHECK_THROWS_WITH_AS(toml::parse("x = "), doctest::Contains("ConfigError"), Error);
    CHECK_THROWS_WITH_AS(toml::parse("x = \"unterminated"), doctest::Contains("ConfigError"), Error);
    CHECK_THROWS_WITH_AS(toml::parse("[broken"), doctest::Contains("ConfigError"), Error);
    CHECK_THROWS_WITH_AS(toml::parse("x = [1, 2"), doctest::Contains("ConfigError"), Error);
    CHECK_THROWS_WITH_AS(toml::parse("x = 1 y"), doctest::Contains("ConfigError"), Error);
}

TEST_CASE("pipeline config defaults carry the workflow constants") {
    const PipelineConfig cfg;
    CHECK(cfg.n_keywords == 15);
    CHECK(cfg.n_pairs == 10);
    CHECK(cfg.threshold == 3);
    CHECK(cfg.scale_max == 5);
    CHECK(cfg.per_category_test == 50);
    CHECK(cfg.k_fraction == 0.15);
    CHECK(cfg.n_chunks == 10);
    CHECK(cfg.bench_n == 1000);
    CHECK(cfg.blacklist == std::vector<std::string>{"this paper", "this study"});
    CHECK(cfg.below_thresholds == std::vector<double>{0.3});
    CHECK(cfg.above_thresholds == std::vector<double>{0.7});
    CHECK(cfg.max_in_flight == 8);
}

TEST_CASE("config loads from TOML with overrides") {
    const std::string text = R"(
[corpus]
manifest = "m.json"

[output]
dir = "outdir"

[generation]
pairs = 8
keywords = 12
strict = false

[evaluation]
scale_max = 3

[filter]
threshold = 2
blacklist = ["this paper"]
per_category_test = 5
seed = 99

[metrics]
k_fraction = 0.25
scope = "all"

[bench]
n = 100
models = ["m1", "m2"]
baseline = "m1"

[bench.overrides.m2]
max_tokens = 1024
repetition_penalty = 1.2

[backends.generator]
kind = "openai"
base_url = "https://example.test"
model = "gen-model"

[backends.embedder]
kind = "hash"
dim = 256

[mock]
judge_fixed_score = 5
taint_phrase_pair = 7
)";
    const PipelineConfig cfg = PipelineConfig::from_toml(toml::parse(text));
    CHECK(cfg.manifest_path == "m.json");
    CHECK(cfg.output_dir == "outdir");
    CHECK(cfg.n_pairs == 8);
    CHECK(cfg.n_keywords == 12);
    CHECK_FALSE(cfg.strict_parse);
    CHECK(cfg.scale_max == 3);
    CHECK(cfg.threshold == 2);
    CHECK(cfg.blacklist == std::vector<std::string>{"this paper"});
    CHECK(cfg.per_category_test == 5);
    CHECK(cfg.split_seed == 99);
    CHECK(cfg.k_fraction == 0.25);
    CHECK(cfg.metrics_scope == "all");
    CHECK(cfg.bench_n == 100);
    CHECK(cfg.bench_models == std::vector<std::string>{"m1", "m2"});
    CHECK(cfg.bench_baseline == "m1");
    REQUIRE(cfg.bench_overrides.count("m2"));
    CHECK(*cfg.bench_overrides.at("m2").max_tokens == 1024);
    CHECK(*cfg.bench_overrides.at("m2").repetition_penalty == 1.2);
    CHECK(cfg.generator.kind == "openai");
    CHECK(cfg.generator.base_url == "https://example.test");
    CHECK(cfg.embedder.dim == 256);
    CHECK(*cfg.mock.judge_fixed_score == 5);
    CHECK(*cfg.mock.taint_phrase_pair == 7);
    CHECK_FALSE(cfg.mock.judge_low_score_pair.has_value());
}

TEST_CASE("validate rejects out-of-range settings before any backend call") {
    TempDir tmp("cfg");
    write_file_atomic(tmp.path() / "manifest.json", R"({"categories":[],"papers":[]})");
    std::filesystem::create_directories(tmp.path() / "prompts");

    PipelineConfig cfg;
    cfg.manifest_path = tmp.path() / "manifest.json";
    cfg.prompt_dir = test::prompt_dir();
    cfg.validate();  // baseline is fine

    SUBCASE("threshold above scale") {
        cfg.threshold = 6;  // scale_max defaults to 5
        CHECK_THROWS_WITH_AS(cfg.validate(), doctest::Contains("ConfigError"), Error);
    }
    SUBCASE("missing manifest") {
        cfg.manifest_path = tmp.path() / "ghost.json";
        CHECK_THROWS_WITH_AS(cfg.validate(), doctest::Contains("ConfigError"), Error);
    }
    SUBCASE("bad k fraction") {
        cfg.k_fraction = 0.0;
        CHECK_THROWS_WITH_AS(cfg.validate(), doctest::Contains("ConfigError"), Error);
    }
    SUBCASE("openai backend without base_url") {
        cfg.generator.kind = "openai";
        CHECK_THROWS_WITH_AS(cfg.validate(), doctest::Contains("ConfigError"), Error);
    }
    SUBCASE("unknown backend kind") {
        cfg.judge.kind = "quantum";
        CHECK_THROWS_WITH_AS(cfg.validate(), doctest::Contains("ConfigError"), Error);
    }
    SUBCASE("bad metrics scope") {
        cfg.metrics_scope = "everything";
        CHECK_THROWS_WITH_AS(cfg.validate(), doctest::Contains("ConfigError"), Error);
    }
}
