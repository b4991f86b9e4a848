#pragma once

#include <chrono>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <string>
#include <string_view>

#include <json.hpp>

#include "sciqag/util.hpp"

namespace sciqag {

/// JSON-lines logger. Each record carries a stage, an event and arbitrary
/// fields (per-paper correlation via a "paper_id" field). Log files carry
/// timestamps and are therefore the one part of an output tree that is not
/// byte-reproducible.
class JsonLogger {
public:
    JsonLogger() = default;

    explicit JsonLogger(const std::filesystem::path& file) {
        if (file.has_parent_path()) ensure_dir(file.parent_path());
        out_.open(file, std::ios::trunc);
        if (!out_) throw Error("IoError", "cannot open log file: " + file.string());
    }

    void log(std::string_view stage, std::string_view event,
             nlohmann::ordered_json fields = nlohmann::ordered_json::object(),
             std::string_view level = "info") {
        if (!out_.is_open()) return;
        nlohmann::ordered_json record;
        record["ts_ms"] = std::chrono::duration_cast<std::chrono::milliseconds>(
                              std::chrono::system_clock::now().time_since_epoch())
                              .count();
        record["level"] = std::string(level);
        record["stage"] = std::string(stage);
        record["event"] = std::string(event);
        for (auto it = fields.begin(); it != fields.end(); ++it) record[it.key()] = it.value();
        std::lock_guard lock(m_);
        out_ << record.dump() << "\n";
        out_.flush();
    }

private:
    std::ofstream out_;
    std::mutex m_;
};

}  // namespace sciqag
