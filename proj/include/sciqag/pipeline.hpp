#pragma once

#include <atomic>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "sciqag/bench.hpp"
#include "sciqag/config.hpp"
#include "sciqag/corpus.hpp"
#include "sciqag/dataset_builder.hpp"
#include "sciqag/gateway.hpp"
#include "sciqag/http_backend.hpp"
#include "sciqag/log.hpp"
#include "sciqag/mock_backend.hpp"
#include "sciqag/prompts.hpp"
#include "sciqag/qa_evaluator.hpp"
#include "sciqag/qa_generator.hpp"
#include "sciqag/quality_filter.hpp"
#include "sciqag/quality_metrics.hpp"
#include "sciqag/util.hpp"

namespace sciqag {

struct StageError {
    std::string paper_id;
    std::string kind;
    std::string message;
};

struct StageSummary {
    std::string stage;
    std::size_t processed = 0;
    std::size_t skipped = 0;
    std::size_t failed = 0;
    std::vector<StageError> errors;

    int exit_code() const { return failed > 0 ? 1 : 0; }

    nlohmann::ordered_json to_json() const {
        nlohmann::ordered_json doc;
        doc["stage"] = stage;
        doc["processed"] = processed;
        doc["skipped"] = skipped;
        doc["failed"] = failed;
        doc["errors"] = nlohmann::ordered_json::array();
        for (const auto& e : errors) {
            doc["errors"].push_back(
                {{"paper_id", e.paper_id}, {"kind", e.kind}, {"message", e.message}});
        }
        return doc;
    }
};

inline void parallel_for(std::size_t n, int workers, const std::function<void(std::size_t)>& fn) {
    if (n == 0) return;
    const int threads = std::max(1, std::min(workers, static_cast<int>(n)));
    if (threads == 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    pool.reserve(threads);
    for (int w = 0; w < threads; ++w) {
        pool.emplace_back([&] {
            for (std::size_t i = next.fetch_add(1); i < n; i = next.fetch_add(1)) fn(i);
        });
    }
    for (auto& t : pool) t.join();
}

/// Stage orchestrator. Every stage is idempotent: per-paper artifacts are
/// skipped when already present, aggregate artifacts are rebuilt
/// deterministically from them, and under mock backends two runs of the same
/// config produce byte-identical outputs (logs excepted).
class Pipeline {
public:
    explicit Pipeline(PipelineConfig cfg) : cfg_(std::move(cfg)) {
        cfg_.validate();
        prompts_ = PromptSet::load(cfg_.prompt_dir);
        in_flight_ = std::make_shared<Semaphore>(cfg_.max_in_flight);
        ensure_dir(cfg_.output_dir);
        cache_.emplace(cfg_.effective_cache_dir());
    }

    const PipelineConfig& config() const { return cfg_; }
    const PromptSet& prompts() const { return prompts_; }

    // -- artifact layout -----------------------------------------------------

    std::filesystem::path generation_dir() const { return cfg_.output_dir / "generation"; }
    std::filesystem::path generation_path(const std::string& id) const {
        return generation_dir() / (id + ".json");
    }
    std::filesystem::path generation_jsonl() const { return cfg_.output_dir / "generation.jsonl"; }
    std::filesystem::path evaluation_dir() const { return cfg_.output_dir / "evaluation"; }
    std::filesystem::path evaluation_path(const std::string& id) const {
        return evaluation_dir() / (id + ".json");
    }
    std::filesystem::path scores_jsonl() const { return cfg_.output_dir / "scores.jsonl"; }
    std::filesystem::path splits_path() const { return cfg_.output_dir / "splits.json"; }
    std::filesystem::path decisions_path() const { return cfg_.output_dir / "decisions.jsonl"; }
    std::filesystem::path metrics_dir() const { return cfg_.output_dir / "metrics"; }
    std::filesystem::path metrics_path(const std::string& id) const {
        return metrics_dir() / (id + ".json");
    }
    std::filesystem::path metrics_rollup_path() const { return cfg_.output_dir / "metrics.json"; }
    std::filesystem::path histogram_path() const { return cfg_.output_dir / "sim_histogram.csv"; }
    std::filesystem::path dataset_dir() const { return cfg_.output_dir / "dataset"; }
    std::filesystem::path bench_dir() const { return cfg_.output_dir / "bench"; }
    std::filesystem::path bench_csv_path() const { return cfg_.output_dir / "bench.csv"; }
    std::filesystem::path logs_dir() const { return cfg_.output_dir / "logs"; }

    // -- stages ----------------------------------------------------------------

    StageSummary run_generate() {
        JsonLogger log(logs_dir() / "generate.jsonl");
        StageSummary summary;
        summary.stage = "generate";
        const CorpusManifest manifest = load_manifest(cfg_.manifest_path);
        ensure_dir(generation_dir());
        ChatGateway gateway = generator_gateway();

        GenerateOptions opts;
        opts.expected_pairs = cfg_.n_pairs;
        opts.expected_keywords = cfg_.n_keywords;
        opts.strict = cfg_.strict_parse;
        opts.regen_attempts = cfg_.regen_attempts;
        opts.prompt_budget = cfg_.prompt_budget_chars;

        ChatRequest params;
        params.temperature = cfg_.gen_temperature;
        params.top_p = cfg_.gen_top_p;
        params.max_tokens = cfg_.gen_max_tokens;
        params.model_tag = cfg_.generator.model;

        std::mutex mu;
        log.log("generate", "stage_start", {{"papers", manifest.papers.size()}});
        parallel_for(manifest.papers.size(), cfg_.workers, [&](std::size_t i) {
            const ManifestEntry& entry = manifest.papers[i];
            const auto path = generation_path(entry.id);
            if (artifact_ok(path)) {
                std::lock_guard l(mu);
                ++summary.skipped;
                log.log("generate", "paper_skipped", {{"paper_id", entry.id}});
                return;
            }
            try {
                const PaperRecord paper = ingest_paper(manifest, entry);
                const GenerateResult result = generate_qa(gateway, prompts_, paper, params, opts);
                write_file_atomic(path, qa_set_to_json(result.qa_set).dump(2) + "\n");
                std::lock_guard l(mu);
                ++summary.processed;
                log.log("generate", "paper_done",
                        {{"paper_id", entry.id},
                         {"attempts", result.attempts},
                         {"truncated_prompt", result.truncated_prompt}});
            } catch (const Error& e) {
                std::lock_guard l(mu);
                ++summary.failed;
                summary.errors.push_back({entry.id, e.kind(), e.what()});
                log.log("generate", "paper_failed",
                        {{"paper_id", entry.id}, {"error_kind", e.kind()}, {"message", e.what()}},
                        "error");
            }
        });

        // Aggregate JSONL in manifest order from whatever artifacts exist.
        std::string combined;
        for (const auto& entry : manifest.papers) {
            const auto path = generation_path(entry.id);
            if (!std::filesystem::exists(path)) continue;
            combined += nlohmann::ordered_json::parse(read_file(path)).dump();
            combined += "\n";
        }
        write_file_atomic(generation_jsonl(), combined);

        log.log("generate", "stage_done", summary.to_json());
        return summary;
    }

    StageSummary run_evaluate() {
        JsonLogger log(logs_dir() / "evaluate.jsonl");
        StageSummary summary;
        summary.stage = "evaluate";
        const CorpusManifest manifest = load_manifest(cfg_.manifest_path);
        require_stage_dir(generation_dir(), "generate");
        ensure_dir(evaluation_dir());
        ChatGateway judge = judge_gateway();

        const SplitResult splits = assign_splits(manifest, cfg_.per_category_test, cfg_.split_seed);
        const auto split_of = splits.by_paper();
        std::vector<ManifestEntry> test_papers;
        for (const auto& entry : manifest.papers) {
            if (split_of.at(entry.id) == Split::test) test_papers.push_back(entry);
        }

        EvaluateOptions opts;
        opts.scale_max = cfg_.scale_max;
        opts.judge_retries = cfg_.judge_retries;
        ChatRequest params;
        params.model_tag = cfg_.judge.model;

        std::mutex mu;
        log.log("evaluate", "stage_start", {{"test_papers", test_papers.size()}});
        parallel_for(test_papers.size(), cfg_.workers, [&](std::size_t i) {
            const ManifestEntry& entry = test_papers[i];
            const auto path = evaluation_path(entry.id);
            if (artifact_ok(path)) {
                std::lock_guard l(mu);
                ++summary.skipped;
                log.log("evaluate", "paper_skipped", {{"paper_id", entry.id}});
                return;
            }
            try {
                const QaSet qa = load_generation(entry.id);
                const PaperRecord paper = ingest_paper(manifest, entry);
                const std::vector<RacarScore> scores =
                    evaluate_racar(judge, prompts_, paper, qa, opts, params);
                nlohmann::ordered_json doc;
                doc["paper_id"] = entry.id;
                doc["scale_max"] = cfg_.scale_max;
                doc["scores"] = nlohmann::ordered_json::array();
                for (const auto& s : scores) doc["scores"].push_back(racar_to_json(s));
                write_file_atomic(path, doc.dump(2) + "\n");
                std::lock_guard l(mu);
                ++summary.processed;
                log.log("evaluate", "paper_done", {{"paper_id", entry.id}, {"pairs", scores.size()}});
            } catch (const Error& e) {
                std::lock_guard l(mu);
                ++summary.failed;
                summary.errors.push_back({entry.id, e.kind(), e.what()});
                log.log("evaluate", "paper_failed",
                        {{"paper_id", entry.id}, {"error_kind", e.kind()}, {"message", e.what()}},
                        "error");
            }
        });

        std::string combined;
        for (const auto& entry : test_papers) {
            const auto path = evaluation_path(entry.id);
            if (!std::filesystem::exists(path)) continue;
            const auto doc = nlohmann::ordered_json::parse(read_file(path));
            for (const auto& s : doc.at("scores")) {
                combined += s.dump();
                combined += "\n";
            }
        }
        write_file_atomic(scores_jsonl(), combined);

        log.log("evaluate", "stage_done", summary.to_json());
        return summary;
    }

    StageSummary run_filter() {
        JsonLogger log(logs_dir() / "filter.jsonl");
        StageSummary summary;
        summary.stage = "filter";
        const CorpusManifest manifest = load_manifest(cfg_.manifest_path);
        require_stage_dir(generation_dir(), "generate");

        const SplitResult splits = assign_splits(manifest, cfg_.per_category_test, cfg_.split_seed);
        for (const auto& w : splits.warnings) log.log("filter", "split_warning", {{"message", w}}, "warn");
        write_file_atomic(splits_path(),
                          splits_to_json(splits, cfg_.split_seed, cfg_.per_category_test).dump(2) + "\n");

        const auto split_of = splits.by_paper();
        std::string decisions_body;
        std::size_t kept = 0, dropped = 0;
        for (const auto& entry : manifest.papers) {
            if (!std::filesystem::exists(generation_path(entry.id))) continue;
            try {
                const QaSet qa = load_generation(entry.id);
                std::vector<FilterDecision> decisions;
                if (split_of.at(entry.id) == Split::test) {
                    const auto score_path = evaluation_path(entry.id);
                    if (!std::filesystem::exists(score_path)) {
                        throw Error("MissingStageInput",
                                    "test paper '" + entry.id + "' has no evaluation artifact");
                    }
                    decisions = filter_test(load_scores(entry.id), cfg_.threshold);
                } else {
                    decisions = filter_train(entry.id, qa.pairs, cfg_.blacklist,
                                             cfg_.blacklist_word_boundary);
                }
                for (const auto& d : decisions) {
                    decisions_body += decision_to_json(d).dump();
                    decisions_body += "\n";
                    d.kept ? ++kept : ++dropped;
                }
                ++summary.processed;
            } catch (const Error& e) {
                ++summary.failed;
                summary.errors.push_back({entry.id, e.kind(), e.what()});
                log.log("filter", "paper_failed",
                        {{"paper_id", entry.id}, {"error_kind", e.kind()}, {"message", e.what()}},
                        "error");
            }
        }
        write_file_atomic(decisions_path(), decisions_body);
        log.log("filter", "stage_done",
                {{"papers", summary.processed}, {"kept", kept}, {"dropped", dropped}});
        return summary;
    }

    StageSummary run_metrics() {
        JsonLogger log(logs_dir() / "metrics.jsonl");
        StageSummary summary;
        summary.stage = "metrics";
        const CorpusManifest manifest = load_manifest(cfg_.manifest_path);
        require_stage_dir(generation_dir(), "generate");
        ensure_dir(metrics_dir());

        std::vector<ManifestEntry> scope;
        if (cfg_.metrics_scope == "all") {
            scope = manifest.papers;
        } else {
            const SplitResult splits = assign_splits(manifest, cfg_.per_category_test, cfg_.split_seed);
            const auto split_of = splits.by_paper();
            for (const auto& entry : manifest.papers) {
                if (split_of.at(entry.id) == Split::test) scope.push_back(entry);
            }
        }

        ChatGateway sim_judge = similarity_gateway();
        EmbeddingGateway embedder = embedding_gateway();
        ChatRequest sim_params;
        sim_params.model_tag =
            cfg_.similarity.kind.empty() ? cfg_.judge.model : cfg_.similarity.model;

        std::mutex mu;
        log.log("metrics", "stage_start", {{"papers", scope.size()}});
        parallel_for(scope.size(), cfg_.workers, [&](std::size_t i) {
            const ManifestEntry& entry = scope[i];
            const auto path = metrics_path(entry.id);
            if (artifact_ok(path)) {
                std::lock_guard l(mu);
                ++summary.skipped;
                log.log("metrics", "paper_skipped", {{"paper_id", entry.id}});
                return;
            }
            try {
                const QaSet qa = load_generation(entry.id);
                const PaperRecord paper = ingest_paper(manifest, entry);
                std::vector<std::string> questions, answers;
                for (const auto& p : qa.pairs) {
                    questions.push_back(p.question);
                    answers.push_back(p.answer);
                }
                nlohmann::ordered_json doc;
                doc["paper_id"] = entry.id;
                doc["numeric_audit"] = numeric_audit_to_json(numeric_source_ratio(answers, paper));
                if (questions.size() >= 2) {
                    doc["similarity"] = similarity_to_json(
                        similarity_matrix(sim_judge, prompts_, questions, entry.id, sim_params));
                } else {
                    doc["similarity"] = nullptr;
                }
                doc["coverage"] = coverage_to_json(
                    coverage_rate(embedder, answers, paper, cfg_.k_fraction,
                                  static_cast<std::size_t>(cfg_.n_chunks)));
                write_file_atomic(path, doc.dump(2) + "\n");
                std::lock_guard l(mu);
                ++summary.processed;
                log.log("metrics", "paper_done", {{"paper_id", entry.id}});
            } catch (const Error& e) {
                std::lock_guard l(mu);
                ++summary.failed;
                summary.errors.push_back({entry.id, e.kind(), e.what()});
                log.log("metrics", "paper_failed",
                        {{"paper_id", entry.id}, {"error_kind", e.kind()}, {"message", e.what()}},
                        "error");
            }
        });

        write_metric_rollups(scope);
        log.log("metrics", "stage_done", summary.to_json());
        return summary;
    }

    StageSummary run_build(std::optional<ExportMode> train_mode = std::nullopt,
                           std::optional<ExportMode> test_mode = std::nullopt) {
        JsonLogger log(logs_dir() / "build.jsonl");
        StageSummary summary;
        summary.stage = "build";
        const CorpusManifest manifest = load_manifest(cfg_.manifest_path);
        require_stage_dir(generation_dir(), "generate");
        if (!std::filesystem::exists(splits_path()) || !std::filesystem::exists(decisions_path())) {
            throw Error("MissingStageInput", "run the filter stage before build");
        }

        const DatasetSplit ds = assemble_dataset(manifest);
        std::map<std::string, PaperRecord> papers;
        for (const auto& entry : manifest.papers) {
            if (std::filesystem::exists(generation_path(entry.id))) {
                papers.emplace(entry.id, ingest_paper(manifest, entry));
            }
        }
        const DatasetExportReport report =
            export_dataset(ds, prompts_, papers, dataset_dir(),
                           train_mode.value_or(ExportMode::paper_level),
                           test_mode.value_or(ExportMode::pair_level));
        summary.processed = ds.train.size() + ds.test.size();
        log.log("build", "stage_done",
                {{"train_papers", ds.train.size()},
                 {"test_papers", ds.test.size()},
                 {"train_records", report.train.records},
                 {"test_records", report.test.records}});
        return summary;
    }

    StageSummary run_bench() {
        JsonLogger log(logs_dir() / "bench.jsonl");
        StageSummary summary;
        summary.stage = "bench";
        const CorpusManifest manifest = load_manifest(cfg_.manifest_path);
        require_stage_dir(generation_dir(), "generate");
        if (!std::filesystem::exists(splits_path()) || !std::filesystem::exists(decisions_path())) {
            throw Error("MissingStageInput", "run the filter stage before bench");
        }

        const DatasetSplit ds = assemble_dataset(manifest);
        const std::vector<BenchQuestion> pool = collect_test_questions(ds);
        const SampleResult sample = sample_questions(pool.size(), cfg_.bench_n, cfg_.bench_seed);
        for (const auto& w : sample.warnings) log.log("bench", "sample_warning", {{"message", w}}, "warn");

        std::vector<BenchQuestion> sampled;
        sampled.reserve(sample.indices.size());
        for (std::size_t idx : sample.indices) sampled.push_back(pool[idx]);
        log.log("bench", "stage_start",
                {{"pool", pool.size()}, {"sampled", sampled.size()}, {"models", cfg_.bench_models}});

        ChatGateway judge = judge_gateway();
        ChatRequest judge_params;
        judge_params.model_tag = cfg_.judge.model;

        std::vector<LeaderboardRow> rows;
        for (const auto& tag : cfg_.bench_models) {
            try {
                rows.push_back(bench_one_model(tag, sampled, judge, judge_params, log));
                ++summary.processed;
            } catch (const Error& e) {
                ++summary.failed;
                summary.errors.push_back({tag, e.kind(), e.what()});
                log.log("bench", "model_failed",
                        {{"model", tag}, {"error_kind", e.kind()}, {"message", e.what()}}, "error");
            }
        }
        write_file_atomic(bench_csv_path(), leaderboard_csv(rows, cfg_.bench_baseline));
        log.log("bench", "stage_done", summary.to_json());
        return summary;
    }

    void validate_config_strict() const {
        cfg_.validate();
        // Prompt templates were loaded in the constructor; render each once
        // so slot typos surface before any backend call.
        PaperRecord probe;
        probe.paper_id = "probe";
        probe.full_text = "Probe text.";
        probe.sentences = segment_sentences(probe.full_text);
        QaSet qa;
        qa.paper_id = "probe";
        qa.pairs.push_back({1, "Is this a probe?", "Yes."});
        render_generation_prompt(prompts_, probe);
        for (RacarDim d : kRacarDims) render_racar_prompt(prompts_, d, probe, qa, cfg_.scale_max);
        render_car_prompt(prompts_, qa.pairs[0]);
        render_similarity_prompt(prompts_, "a?", "b?");
        prompts_.bench_answer.render({{"question", "q?"}});
    }

private:
    // -- backend wiring --------------------------------------------------------

    bool use_mock(const BackendConfig& bc) const { return cfg_.force_mock || bc.kind == "mock"; }

    MockChatOptions base_mock_options(std::uint64_t seed) const {
        MockChatOptions opts;
        opts.seed = seed;
        opts.n_keywords = cfg_.n_keywords;
        opts.n_pairs = cfg_.n_pairs;
        opts.fixed_judge_score = cfg_.mock.judge_fixed_score;
        opts.low_score_pair = cfg_.mock.judge_low_score_pair;
        opts.taint_phrase_pair = cfg_.mock.taint_phrase_pair;
        opts.fixed_similarity_score = cfg_.mock.fixed_similarity_score;
        return opts;
    }

    std::shared_ptr<ChatBackend> chat_backend(const BackendConfig& bc) const {
        if (use_mock(bc)) {
            return std::make_shared<MockChatBackend>(base_mock_options(bc.seed));
        }
        HttpBackendOptions http;
        http.base_url = bc.base_url;
        http.model = bc.model;
        http.api_key = api_key_for(bc);
        http.repetition_penalty = bc.repetition_penalty;
        return std::make_shared<HttpChatBackend>(http);
    }

    ChatGateway generator_gateway() const { return ChatGateway(chat_backend(cfg_.generator), cache_, {}, in_flight_); }
    ChatGateway judge_gateway() const { return ChatGateway(chat_backend(cfg_.judge), cache_, {}, in_flight_); }

    ChatGateway similarity_gateway() const {
        BackendConfig bc = cfg_.similarity.kind.empty() ? cfg_.judge : cfg_.similarity;
        if (cfg_.similarity.kind.empty()) bc.seed = cfg_.judge.seed;
        return ChatGateway(chat_backend(bc), cache_, {}, in_flight_);
    }

    EmbeddingGateway embedding_gateway() const {
        std::shared_ptr<EmbeddingBackend> backend;
        if (cfg_.force_mock || cfg_.embedder.kind == "hash") {
            backend = std::make_shared<HashEmbeddingBackend>(cfg_.embedder.dim);
        } else {
            HttpBackendOptions http;
            http.base_url = cfg_.embedder.base_url;
            http.model = cfg_.embedder.model;
            http.api_key = api_key_for(cfg_.embedder);
            backend = std::make_shared<HttpEmbeddingBackend>(http);
        }
        return EmbeddingGateway(std::move(backend), cache_, in_flight_);
    }

    static std::string api_key_for(const BackendConfig& bc) {
        const char* key = std::getenv(bc.api_key_env.c_str());
        return key ? key : "";
    }

    // -- shared artifact access ------------------------------------------------

    static bool artifact_ok(const std::filesystem::path& path) {
        if (!std::filesystem::exists(path)) return false;
        return nlohmann::json::accept(read_file(path));  // a torn artifact is rebuilt
    }

    static void require_stage_dir(const std::filesystem::path& dir, const std::string& stage) {
        if (!std::filesystem::is_directory(dir)) {
            throw Error("MissingStageInput", "run the " + stage + " stage first (missing " +
                                                 dir.string() + ")");
        }
    }

    QaSet load_generation(const std::string& id) const {
        const auto path = generation_path(id);
        if (!std::filesystem::exists(path)) {
            throw Error("MissingStageInput", "no generation artifact for paper '" + id + "'");
        }
        return qa_set_from_json(nlohmann::json::parse(read_file(path)));
    }

    std::vector<RacarScore> load_scores(const std::string& id) const {
        const auto doc = nlohmann::json::parse(read_file(evaluation_path(id)));
        std::vector<RacarScore> scores;
        for (const auto& s : doc.at("scores")) scores.push_back(racar_from_json(s));
        return scores;
    }

    DatasetSplit assemble_dataset(const CorpusManifest& manifest) const {
        std::map<std::string, QaSet> qa_sets;
        for (const auto& entry : manifest.papers) {
            if (std::filesystem::exists(generation_path(entry.id))) {
                qa_sets.emplace(entry.id, load_generation(entry.id));
            }
        }
        std::map<std::string, std::vector<RacarScore>> scores;
        for (const auto& entry : manifest.papers) {
            if (std::filesystem::exists(evaluation_path(entry.id))) {
                scores.emplace(entry.id, load_scores(entry.id));
            }
        }
        std::vector<FilterDecision> decisions;
        for (const auto& line : split(read_file(decisions_path()), '\n')) {
            if (trim_view(line).empty()) continue;
            decisions.push_back(decision_from_json(nlohmann::json::parse(line)));
        }
        const SplitResult splits = splits_from_json(nlohmann::json::parse(read_file(splits_path())));
        return build_dataset(manifest, qa_sets, scores, decisions, splits);
    }

    // -- metrics rollups ---------------------------------------------------------

    void write_metric_rollups(const std::vector<ManifestEntry>& scope) const {
        std::size_t papers = 0;
        std::size_t total_numbers = 0, matched_numbers = 0;
        std::size_t answers_total = 0, answers_with_numbers = 0;
        std::vector<SimilarityMatrix> matrices;
        double coverage_sum = 0.0;
        std::size_t coverage_count = 0;

        for (const auto& entry : scope) {
            const auto path = metrics_path(entry.id);
            if (!std::filesystem::exists(path)) continue;
            const auto doc = nlohmann::json::parse(read_file(path));
            ++papers;
            const auto& numeric = doc.at("numeric_audit");
            total_numbers += numeric.at("total_numbers").get<std::size_t>();
            matched_numbers += numeric.at("matched_numbers").get<std::size_t>();
            answers_total += numeric.at("answers_total").get<std::size_t>();
            answers_with_numbers += numeric.at("answers_with_numbers").get<std::size_t>();
            if (!doc.at("similarity").is_null()) {
                SimilarityMatrix m;
                m.paper_id = entry.id;
                m.n = doc.at("similarity").at("n").get<std::size_t>();
                for (const auto& s : doc.at("similarity").at("scores")) {
                    m.scores.push_back(s.get<double>());
                }
                matrices.push_back(std::move(m));
            }
            coverage_sum += doc.at("coverage").at("rate").get<double>();
            ++coverage_count;
        }

        nlohmann::ordered_json rollup;
        rollup["papers"] = papers;
        nlohmann::ordered_json numeric;
        numeric["total_numbers"] = total_numbers;
        numeric["matched_numbers"] = matched_numbers;
        if (total_numbers > 0) {
            numeric["ratio"] =
                static_cast<double>(matched_numbers) / static_cast<double>(total_numbers);
        }
        numeric["answers_total"] = answers_total;
        numeric["answers_with_numbers"] = answers_with_numbers;
        if (answers_total > 0) {
            numeric["answers_with_numbers_fraction"] =
                static_cast<double>(answers_with_numbers) / static_cast<double>(answers_total);
        }
        rollup["numeric"] = numeric;
        if (!matrices.empty()) {
            const DiversityStats stats =
                diversity_stats(matrices, cfg_.below_thresholds, cfg_.above_thresholds);
            nlohmann::ordered_json diversity;
            diversity["mean"] = stats.mean;
            diversity["count"] = stats.count;
            nlohmann::ordered_json below, above;
            for (const auto& [t, f] : stats.frac_below) below[format_double(t)] = f;
            for (const auto& [t, f] : stats.frac_above) above[format_double(t)] = f;
            diversity["frac_below"] = below;
            diversity["frac_above"] = above;
            rollup["diversity"] = diversity;
        } else {
            rollup["diversity"] = nullptr;
        }
        if (coverage_count > 0) {
            rollup["coverage"] = {{"mean_rate", coverage_sum / static_cast<double>(coverage_count)},
                                  {"papers", coverage_count}};
        } else {
            rollup["coverage"] = nullptr;
        }
        write_file_atomic(metrics_rollup_path(), rollup.dump(2) + "\n");

        // Histogram CSV of the pooled similarity scores, for external plotting.
        const int bins = cfg_.histogram_bins;
        std::vector<std::size_t> counts(static_cast<std::size_t>(bins), 0);
        std::size_t n_scores = 0;
        for (const auto& m : matrices) {
            for (double s : m.scores) {
                int b = static_cast<int>(s * bins);
                if (b >= bins) b = bins - 1;
                if (b < 0) b = 0;
                ++counts[static_cast<std::size_t>(b)];
                ++n_scores;
            }
        }
        std::string csv = "bin_low,bin_high,count,fraction\n";
        for (int b = 0; b < bins; ++b) {
            const double lo = static_cast<double>(b) / bins;
            const double hi = static_cast<double>(b + 1) / bins;
            const double frac =
                n_scores == 0 ? 0.0
                              : static_cast<double>(counts[static_cast<std::size_t>(b)]) /
                                    static_cast<double>(n_scores);
            csv += format_double(lo) + "," + format_double(hi) + "," +
                   std::to_string(counts[static_cast<std::size_t>(b)]) + "," + format_double(frac) +
                   "\n";
        }
        write_file_atomic(histogram_path(), csv);
    }

    // -- bench ---------------------------------------------------------------------

    LeaderboardRow bench_one_model(const std::string& tag, const std::vector<BenchQuestion>& sampled,
                                   ChatGateway& judge, const ChatRequest& judge_params,
                                   JsonLogger& log) {
        const auto model_dir = bench_dir() / tag;
        ensure_dir(model_dir);
        const auto answers_path = model_dir / "answers.jsonl";
        const auto grades_path = model_dir / "grades.jsonl";

        ChatRequest params;
        params.model_tag = tag;
        params.temperature = cfg_.bench_temperature;
        params.top_p = cfg_.bench_top_p;
        params.max_tokens = cfg_.bench_max_tokens;
        std::optional<double> repetition_penalty;
        if (auto it = cfg_.bench_overrides.find(tag); it != cfg_.bench_overrides.end()) {
            if (it->second.temperature) params.temperature = *it->second.temperature;
            if (it->second.top_p) params.top_p = *it->second.top_p;
            if (it->second.max_tokens) params.max_tokens = *it->second.max_tokens;
            repetition_penalty = it->second.repetition_penalty;
        }

        BenchRun run;
        run.model_tag = tag;
        run.sampled = sampled;

        bool resumed_answers = false;
        if (std::filesystem::exists(answers_path)) {
            const auto loaded = load_bench_answers(answers_path);
            if (loaded.size() == sampled.size()) {
                run.answers = loaded;
                resumed_answers = true;
                log.log("bench", "answers_resumed", {{"model", tag}});
            }
        }
        if (!resumed_answers) {
            ChatGateway model = model_gateway(tag, repetition_penalty);
            run.answers = answer_questions(model, prompts_, sampled, params);
            std::string body;
            for (std::size_t i = 0; i < sampled.size(); ++i) {
                body += bench_answer_to_json(sampled[i], run.answers[i]).dump();
                body += "\n";
            }
            write_file_atomic(answers_path, body);
        }

        LeaderboardRow row;
        bool resumed_grades = false;
        if (std::filesystem::exists(grades_path)) {
            const auto maybe_row = row_from_grades(grades_path, run);
            if (maybe_row) {
                row = *maybe_row;
                resumed_grades = true;
                log.log("bench", "grades_resumed", {{"model", tag}});
            }
        }
        if (!resumed_grades) {
            row = grade_and_aggregate(judge, prompts_, run, cfg_.judge_retries, judge_params);
            std::string body;
            for (std::size_t i = 0; i < sampled.size(); ++i) {
                const auto it = run.car_scores.find(run.answers[i].question_id);
                if (it == run.car_scores.end()) continue;
                body += bench_grade_to_json(it->first, it->second).dump();
                body += "\n";
            }
            write_file_atomic(grades_path, body);
        }
        log.log("bench", "model_done",
                {{"model", tag},
                 {"graded", row.graded},
                 {"unanswered", row.unanswered},
                 {"completeness", row.completeness},
                 {"accuracy", row.accuracy},
                 {"reasonableness", row.reasonableness}});
        return row;
    }

    ChatGateway model_gateway(const std::string& tag, std::optional<double> repetition_penalty) const {
        if (cfg_.force_mock || cfg_.generator.kind == "mock") {
            MockChatOptions opts = base_mock_options(mix64(cfg_.bench_seed ^ fnv1a64(tag)));
            return ChatGateway(std::make_shared<MockChatBackend>(opts), cache_, {}, in_flight_);
        }
        HttpBackendOptions http;
        http.base_url = cfg_.generator.base_url;
        http.model = tag;
        http.api_key = api_key_for(cfg_.generator);
        http.repetition_penalty = repetition_penalty;
        return ChatGateway(std::make_shared<HttpChatBackend>(http), cache_, {}, in_flight_);
    }

    static std::vector<BenchAnswer> load_bench_answers(const std::filesystem::path& path) {
        std::vector<BenchAnswer> out;
        for (const auto& line : split(read_file(path), '\n')) {
            if (trim_view(line).empty()) continue;
            const auto doc = nlohmann::json::parse(line);
            BenchAnswer a;
            a.question_id = doc.at("question_id").get<std::string>();
            a.text = doc.at("answer").get<std::string>();
            a.answered = doc.at("answered").get<bool>();
            a.error_kind = doc.at("error").get<std::string>();
            out.push_back(std::move(a));
        }
        return out;
    }

    std::optional<LeaderboardRow> row_from_grades(const std::filesystem::path& path,
                                                  const BenchRun& run) const {
        LeaderboardRow row;
        row.model = run.model_tag;
        row.sampled = run.sampled.size();
        double sum_c = 0, sum_a = 0, sum_r = 0;
        for (const auto& line : split(read_file(path), '\n')) {
            if (trim_view(line).empty()) continue;
            const auto doc = nlohmann::json::parse(line);
            sum_c += doc.at("completeness").get<int>();
            sum_a += doc.at("accuracy").get<int>();
            sum_r += doc.at("reasonableness").get<int>();
            ++row.graded;
        }
        if (row.graded == 0) return std::nullopt;
        for (const auto& a : run.answers) {
            if (!a.answered) ++row.unanswered;
        }
        row.completeness = sum_c / static_cast<double>(row.graded);
        row.accuracy = sum_a / static_cast<double>(row.graded);
        row.reasonableness = sum_r / static_cast<double>(row.graded);
        return row;
    }

    PipelineConfig cfg_;
    PromptSet prompts_;
    std::shared_ptr<Semaphore> in_flight_;
    std::optional<DiskCache> cache_;
};

}  // namespace sciqag
