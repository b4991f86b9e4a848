#pragma once

#include <map>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "sciqag/corpus.hpp"
#include "sciqag/qa_evaluator.hpp"
#include "sciqag/qa_generator.hpp"
#include "sciqag/quality_filter.hpp"
#include "sciqag/prompts.hpp"
#include "sciqag/util.hpp"
#include "sciqag/util_unicode.hpp"

namespace sciqag {

/// Supervised fine-tuning record.
struct InstructionRecord {
    std::string instruction;
    std::string input;
    std::string output;
};

enum class ExportMode { paper_level, pair_level };

inline ExportMode export_mode_from_string(std::string_view s) {
    if (s == "paper") return ExportMode::paper_level;
    if (s == "pair") return ExportMode::pair_level;
    throw Error("ConfigError", "export mode must be 'paper' or 'pair', got '" + std::string(s) + "'");
}

inline constexpr std::string_view kAnswerDirective = "Answer the following question.";

/// The generation prompt with the paper slot removed: what remains is the
/// task directive that becomes the <instruction> of paper-level records.
inline std::string generation_instruction_body(const PromptSet& prompts) {
    const std::string& tpl = prompts.generation.text();
    const std::size_t slot = tpl.find("{text}\n\n");
    if (slot == std::string::npos) {
        throw Error("TemplateError", "generation template lacks the '{text}' paper slot");
    }
    return tpl.substr(slot + 8);
}

/// Paper-level mode reproduces the fine-tuning schema: one record whose
/// output is the keywords-plus-scaffold serialization of the kept pairs.
/// Pair-level mode emits one closed-book QA record per kept pair.
inline std::vector<InstructionRecord> to_instruction_records(const PromptSet& prompts,
                                                             const PaperRecord& paper,
                                                             const QaSet& qa_set, ExportMode mode) {
    if (qa_set.pairs.empty()) {
        throw Error("EmptySet", "paper '" + qa_set.paper_id + "' has no kept pairs to export");
    }
    std::vector<InstructionRecord> records;
    if (mode == ExportMode::paper_level) {
        InstructionRecord rec;
        rec.instruction = generation_instruction_body(prompts);
        rec.input = paper.full_text;
        rec.output = serialize_scaffold(qa_set.keywords, qa_set.pairs);
        records.push_back(std::move(rec));
    } else {
        for (const auto& pair : qa_set.pairs) {
            InstructionRecord rec;
            rec.instruction = std::string(kAnswerDirective);
            rec.input = pair.question;
            rec.output = pair.answer;
            records.push_back(std::move(rec));
        }
    }
    return records;
}

// ---------------------------------------------------------------------------
// Dataset assembly: phrase-filtered train pairs, score-filtered test pairs,
// and the bookkeeping needed for the per-category statistics table.
// ---------------------------------------------------------------------------

struct DatasetPaper {
    std::string paper_id;
    std::string category;
    QaSet kept;                     // pairs that survived the split's filter
    std::size_t original_pairs = 0;
};

struct CategoryStats {
    std::string category;
    std::size_t original_papers = 0;
    std::size_t train_papers = 0;
    std::size_t train_qa = 0;
    std::size_t train_papers_filtered = 0;
    std::size_t train_qa_filtered = 0;
    std::size_t test_papers_filtered = 0;
    std::size_t test_qa_filtered = 0;
};

struct DatasetSplit {
    std::vector<DatasetPaper> train;  // manifest order
    std::vector<DatasetPaper> test;
    std::vector<std::string> categories;          // manifest order
    std::map<std::string, CategoryStats> stats;   // per category
};

inline DatasetSplit build_dataset(const CorpusManifest& manifest,
                                  const std::map<std::string, QaSet>& qa_sets,
                                  const std::map<std::string, std::vector<RacarScore>>& scores,
                                  const std::vector<FilterDecision>& decisions,
                                  const SplitResult& splits) {
    // Index decisions: rule -> paper -> pair_index -> kept.
    std::map<std::string, std::map<int, bool>> phrase_kept;
    std::map<std::string, std::map<int, bool>> score_kept;
    for (const auto& d : decisions) {
        if (d.rule == "phrase_blacklist") {
            phrase_kept[d.paper_id][d.pair_index] = d.kept;
        } else if (d.rule == "score_threshold") {
            score_kept[d.paper_id][d.pair_index] = d.kept;
        }
    }

    const auto split_of = splits.by_paper();
    DatasetSplit out;
    out.categories = manifest.categories;
    for (const auto& c : manifest.categories) out.stats[c].category = c;

    for (const auto& entry : manifest.papers) {
        CategoryStats& cs = out.stats.at(entry.category);
        ++cs.original_papers;

        const auto qa_it = qa_sets.find(entry.id);
        if (qa_it == qa_sets.end()) continue;  // never generated; stays out of both splits
        const QaSet& qa = qa_it->second;

        const auto split_it = split_of.find(entry.id);
        const Split split = split_it == split_of.end() ? Split::train : split_it->second;

        DatasetPaper paper;
        paper.paper_id = entry.id;
        paper.category = entry.category;
        paper.original_pairs = qa.pairs.size();
        paper.kept.paper_id = qa.paper_id;
        paper.kept.keywords = qa.keywords;

        if (split == Split::train) {
            cs.train_papers += 1;
            cs.train_qa += qa.pairs.size();
            const auto kept_map = phrase_kept.find(entry.id);
            for (const auto& pair : qa.pairs) {
                bool kept = true;
                if (kept_map != phrase_kept.end()) {
                    const auto it = kept_map->second.find(pair.index);
                    if (it != kept_map->second.end()) kept = it->second;
                }
                if (kept) paper.kept.pairs.push_back(pair);
            }
            if (!paper.kept.pairs.empty()) {
                cs.train_papers_filtered += 1;
                cs.train_qa_filtered += paper.kept.pairs.size();
                out.train.push_back(std::move(paper));
            }
        } else {
            if (!scores.count(entry.id)) {
                throw Error("MissingScores",
                            "test paper '" + entry.id + "' has no judge score records");
            }
            const auto kept_map = score_kept.find(entry.id);
            for (const auto& pair : qa.pairs) {
                bool kept = true;
                if (kept_map != score_kept.end()) {
                    const auto it = kept_map->second.find(pair.index);
                    if (it != kept_map->second.end()) kept = it->second;
                }
                if (kept) paper.kept.pairs.push_back(pair);
            }
            if (!paper.kept.pairs.empty()) {
                cs.test_papers_filtered += 1;
                cs.test_qa_filtered += paper.kept.pairs.size();
                out.test.push_back(std::move(paper));
            }
        }
    }
    return out;
}

/// One row per category in manifest order, plus a Sum row whose columns are
/// exact column totals.
inline std::vector<CategoryStats> stats_table(const DatasetSplit& split) {
    std::vector<CategoryStats> rows;
    CategoryStats sum;
    sum.category = "Sum";
    for (const auto& category : split.categories) {
        const CategoryStats& cs = split.stats.at(category);
        rows.push_back(cs);
        sum.original_papers += cs.original_papers;
        sum.train_papers += cs.train_papers;
        sum.train_qa += cs.train_qa;
        sum.train_papers_filtered += cs.train_papers_filtered;
        sum.train_qa_filtered += cs.train_qa_filtered;
        sum.test_papers_filtered += cs.test_papers_filtered;
        sum.test_qa_filtered += cs.test_qa_filtered;
    }
    rows.push_back(sum);
    return rows;
}

// ---------------------------------------------------------------------------
// Exports. JSONL is canonical: fixed key order, NFC-normalized strings, one
// compact object per line, trailing newline; re-exports are byte-identical.
// ---------------------------------------------------------------------------

struct ExportReport {
    std::filesystem::path path;
    std::size_t records = 0;
    std::size_t bytes = 0;
};

inline nlohmann::ordered_json instruction_to_json(const InstructionRecord& rec) {
    return nlohmann::ordered_json{{"instruction", nfc_normalize(rec.instruction)},
                                  {"input", nfc_normalize(rec.input)},
                                  {"output", nfc_normalize(rec.output)}};
}

inline ExportReport export_jsonl(const std::vector<InstructionRecord>& records,
                                 const std::filesystem::path& path) {
    std::string body;
    for (const auto& rec : records) {
        body += instruction_to_json(rec).dump();
        body += "\n";
    }
    write_file_atomic(path, body);
    return {path, records.size(), body.size()};
}

inline std::string stats_csv(const std::vector<CategoryStats>& rows) {
    std::string csv =
        "category,original_papers,train_papers,train_qa,train_papers_filtered,"
        "train_qa_filtered,test_papers_filtered,test_qa_filtered\n";
    for (const auto& r : rows) {
        std::string category = r.category;
        if (category.find(',') != std::string::npos || category.find('"') != std::string::npos) {
            category = "\"" + replace_all(category, "\"", "\"\"") + "\"";
        }
        csv += category + "," + std::to_string(r.original_papers) + "," +
               std::to_string(r.train_papers) + "," + std::to_string(r.train_qa) + "," +
               std::to_string(r.train_papers_filtered) + "," + std::to_string(r.train_qa_filtered) +
               "," + std::to_string(r.test_papers_filtered) + "," +
               std::to_string(r.test_qa_filtered) + "\n";
    }
    return csv;
}

inline std::string instruction_schema_json() {
    nlohmann::ordered_json schema;
    schema["$schema"] = "http://json-schema.org/draft-07/schema#";
    schema["title"] = "InstructionRecord";
    schema["type"] = "object";
    schema["required"] = {"instruction", "input", "output"};
    schema["properties"] = {{"instruction", {{"type", "string"}}},
                            {"input", {{"type", "string"}}},
                            {"output", {{"type", "string"}}}};
    schema["additionalProperties"] = false;
    return schema.dump(2) + "\n";
}

struct DatasetExportReport {
    ExportReport train;
    ExportReport test;
    std::filesystem::path stats_path;
    std::filesystem::path schema_path;
};

/// Writes dataset/train.jsonl, dataset/test.jsonl, dataset/stats.csv and
/// dataset/schema.json. Paper-level records need the ingested papers for
/// their <input> field.
inline DatasetExportReport export_dataset(const DatasetSplit& split, const PromptSet& prompts,
                                          const std::map<std::string, PaperRecord>& papers,
                                          const std::filesystem::path& out_dir,
                                          ExportMode train_mode = ExportMode::paper_level,
                                          ExportMode test_mode = ExportMode::pair_level) {
    ensure_dir(out_dir);
    auto records_for = [&](const std::vector<DatasetPaper>& part, ExportMode mode) {
        std::vector<InstructionRecord> records;
        for (const auto& p : part) {
            const auto paper_it = papers.find(p.paper_id);
            if (mode == ExportMode::paper_level && paper_it == papers.end()) {
                throw Error("MissingStageInput",
                            "paper-level export needs the ingested paper '" + p.paper_id + "'");
            }
            static const PaperRecord empty_paper{};
            const PaperRecord& paper =
                paper_it == papers.end() ? empty_paper : paper_it->second;
            auto recs = to_instruction_records(prompts, paper, p.kept, mode);
            records.insert(records.end(), std::make_move_iterator(recs.begin()),
                           std::make_move_iterator(recs.end()));
        }
        return records;
    };

    DatasetExportReport report;
    report.train = export_jsonl(records_for(split.train, train_mode), out_dir / "train.jsonl");
    report.test = export_jsonl(records_for(split.test, test_mode), out_dir / "test.jsonl");
    report.stats_path = out_dir / "stats.csv";
    write_file_atomic(report.stats_path, stats_csv(stats_table(split)));
    report.schema_path = out_dir / "schema.json";
    write_file_atomic(report.schema_path, instruction_schema_json());
    return report;
}

}  // namespace sciqag
