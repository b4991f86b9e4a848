// Command-line front end for the paper-to-QA dataset pipeline.
//
// Stages: generate -> evaluate -> filter -> metrics -> build -> bench.
// Each stage is resumable: per-paper artifacts already on disk are skipped,
// aggregates are rebuilt deterministically.

#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "sciqag/config.hpp"
#include "sciqag/pipeline.hpp"

using namespace sciqag;

namespace {

struct CliOverrides {
    std::string config_path;
    bool mock = false;
    std::string prompt_dir;
    std::string output_dir;
    std::string manifest;

    std::optional<int> threshold;
    std::vector<std::string> blacklist;
    std::optional<int> per_category_test;
    std::optional<std::uint64_t> filter_seed;

    std::vector<std::string> bench_models;
    std::optional<std::size_t> bench_n;
    std::optional<std::uint64_t> bench_seed;
    std::string bench_judge;

    std::string train_mode;
    std::string test_mode;
};

PipelineConfig make_config(const CliOverrides& cli) {
    PipelineConfig cfg;
    if (!cli.config_path.empty()) {
        cfg = PipelineConfig::load(cli.config_path);
    } else if (std::filesystem::exists("sciqag.toml")) {
        cfg = PipelineConfig::load("sciqag.toml");
    }
    if (cli.mock) cfg.force_mock = true;
    if (!cli.prompt_dir.empty()) cfg.prompt_dir = cli.prompt_dir;
    if (!cli.output_dir.empty()) cfg.output_dir = cli.output_dir;
    if (!cli.manifest.empty()) cfg.manifest_path = cli.manifest;
    if (cli.threshold) cfg.threshold = *cli.threshold;
    if (!cli.blacklist.empty()) cfg.blacklist = cli.blacklist;
    if (cli.per_category_test) cfg.per_category_test = *cli.per_category_test;
    if (cli.filter_seed) cfg.split_seed = *cli.filter_seed;
    if (!cli.bench_models.empty()) cfg.bench_models = cli.bench_models;
    if (cli.bench_n) cfg.bench_n = *cli.bench_n;
    if (cli.bench_seed) cfg.bench_seed = *cli.bench_seed;
    if (!cli.bench_judge.empty()) {
        if (cli.bench_judge == "mock") {
            cfg.judge.kind = "mock";
        } else {
            cfg.judge.model = cli.bench_judge;
        }
    }
    return cfg;
}

int finish(const StageSummary& summary) {
    std::cout << summary.to_json().dump() << "\n";
    return summary.exit_code();
}

int report_error(const Error& e) {
    nlohmann::ordered_json doc;
    doc["error"] = e.kind();
    doc["message"] = e.what();
    std::cout << doc.dump() << "\n";
    return 2;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"SciQAG-style paper-to-QA dataset pipeline"};
    app.require_subcommand(1);

    CliOverrides cli;
    app.add_option("--config", cli.config_path, "TOML config file (default: ./sciqag.toml if present)");
    app.add_flag("--mock", cli.mock, "force deterministic mock backends for all roles");
    app.add_option("--prompt-dir", cli.prompt_dir, "prompt template directory override");
    app.add_option("--output-dir", cli.output_dir, "output directory override");
    app.add_option("--manifest", cli.manifest, "corpus manifest override");

    auto* generate = app.add_subcommand("generate", "generate keyword/QA sets for every paper");
    auto* evaluate = app.add_subcommand("evaluate", "judge test-split QA sets on the five dimensions");
    auto* filter = app.add_subcommand("filter", "assign splits and apply both filter rules");
    filter->add_option("--threshold", cli.threshold, "minimum per-dimension score kept in the test set");
    filter->add_option("--blacklist", cli.blacklist, "train-set phrase blacklist (repeatable)");
    filter->add_option("--per-category-test", cli.per_category_test, "test papers per category");
    filter->add_option("--seed", cli.filter_seed, "split sampling seed");
    auto* metrics = app.add_subcommand("metrics", "numeric audit, question similarity, coverage");
    auto* build = app.add_subcommand("build", "assemble and export the instruction dataset");
    build->add_option("--train-mode", cli.train_mode, "train export mode: paper|pair (default paper)");
    build->add_option("--test-mode", cli.test_mode, "test export mode: paper|pair (default pair)");
    auto* bench = app.add_subcommand("bench", "zero-shot benchmark over candidate answer models");
    bench->add_option("--models", cli.bench_models, "model tags to benchmark (repeatable)");
    bench->add_option("--n", cli.bench_n, "questions to sample");
    bench->add_option("--seed", cli.bench_seed, "sampling seed");
    bench->add_option("--judge", cli.bench_judge, "judge backend: 'mock' or a model tag");
    auto* validate = app.add_subcommand("validate-config", "check config, paths and templates");

    CLI11_PARSE(app, argc, argv);

    try {
        PipelineConfig cfg = make_config(cli);
        if (validate->parsed()) {
            Pipeline pipeline(cfg);
            pipeline.validate_config_strict();
            std::cout << R"({"config":"ok"})" << "\n";
            return 0;
        }
        Pipeline pipeline(cfg);
        if (generate->parsed()) return finish(pipeline.run_generate());
        if (evaluate->parsed()) return finish(pipeline.run_evaluate());
        if (filter->parsed()) return finish(pipeline.run_filter());
        if (metrics->parsed()) return finish(pipeline.run_metrics());
        if (build->parsed()) {
            std::optional<ExportMode> train_mode, test_mode;
            if (!cli.train_mode.empty()) train_mode = export_mode_from_string(cli.train_mode);
            if (!cli.test_mode.empty()) test_mode = export_mode_from_string(cli.test_mode);
            return finish(pipeline.run_build(train_mode, test_mode));
        }
        if (bench->parsed()) return finish(pipeline.run_bench());
    } catch (const Error& e) {
        return report_error(e);
    } catch (const std::exception& e) {
        nlohmann::ordered_json doc;
        doc["error"] = "InternalError";
        doc["message"] = e.what();
        std::cout << doc.dump() << "\n";
        return 2;
    }
    return 0;
}
