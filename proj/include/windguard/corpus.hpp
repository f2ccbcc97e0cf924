#pragma once

#include <filesystem>
#include <functional>
#include <istream>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "windguard/embedding.hpp"

namespace windguard {

using WarningSink = std::function<void(const std::string&)>;

// JSONL, one object per line:
//   {"text": str, "category": int, "label": "safe"|"unsafe"|"unlabeled",
//    "embedding": [float, ...]}
// "label" and "embedding" are optional. Blank lines are skipped. Malformed
// lines raise ParseError with the 1-based line number. Duplicate text within a
// category is reported through `warn` and kept.
std::vector<SentenceRecord> parse_corpus(std::istream& in, const WarningSink& warn = {});
std::vector<SentenceRecord> load_corpus(const std::filesystem::path& path,
                                        const WarningSink& warn = {});

nlohmann::ordered_json to_json(const SentenceRecord& record);
SentenceRecord record_from_json(const nlohmann::json& j);

std::string serialize_corpus(const std::vector<SentenceRecord>& records);
void save_corpus(const std::filesystem::path& path, const std::vector<SentenceRecord>& records);

// Writes to a sibling temp file, fsyncs, then renames over `path`.
void write_file_atomic(const std::filesystem::path& path, std::string_view contents);
std::string read_file(const std::filesystem::path& path);

}  // namespace windguard
