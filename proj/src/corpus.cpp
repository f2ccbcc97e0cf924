#include "windguard/corpus.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>
#include <fstream>
#include <set>
#include <sstream>
#include <utility>

#include "windguard/errors.hpp"

namespace windguard {

nlohmann::ordered_json to_json(const SentenceRecord& record) {
  nlohmann::ordered_json j;
  j["text"] = record.text;
  j["category"] = record.category;
  j["label"] = std::string(to_string(record.label));
  if (record.embedding) {
    auto values = record.embedding->values();
    j["embedding"] = std::vector<double>(values.begin(), values.end());
  }
  return j;
}

SentenceRecord record_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ContractError("record must be a JSON object");
  SentenceRecord r;
  if (!j.contains("text") || !j["text"].is_string()) {
    throw ContractError("missing string field \"text\"");
  }
  r.text = j["text"].get<std::string>();
  if (!j.contains("category") || !j["category"].is_number_integer()) {
    throw ContractError("missing integer field \"category\"");
  }
  r.category = j["category"].get<int>();
  if (j.contains("label") && !j["label"].is_null()) {
    if (!j["label"].is_string()) throw ContractError("\"label\" must be a string");
    auto label = parse_label(j["label"].get<std::string>());
    if (!label) throw ContractError("unknown label \"" + j["label"].get<std::string>() + "\"");
    r.label = *label;
  }
  if (j.contains("embedding") && !j["embedding"].is_null()) {
    const auto& e = j["embedding"];
    if (!e.is_array()) throw ContractError("\"embedding\" must be an array");
    std::vector<double> values;
    values.reserve(e.size());
    for (const auto& x : e) {
      if (!x.is_number()) throw ContractError("\"embedding\" holds a non-number");
      values.push_back(x.get<double>());
    }
    r.embedding = EmbeddingVector(std::move(values));
  }
  validate(r);
  return r;
}

std::vector<SentenceRecord> parse_corpus(std::istream& in, const WarningSink& warn) {
  std::vector<SentenceRecord> records;
  std::set<std::pair<int, std::string>> seen;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    SentenceRecord r;
    try {
      r = record_from_json(nlohmann::json::parse(line));
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(line_no, e.what());
    } catch (const ContractError& e) {
      throw ParseError(line_no, e.what());
    }
    if (!seen.emplace(r.category, r.text).second && warn) {
      warn("line " + std::to_string(line_no) + ": duplicate text in category " +
           std::to_string(r.category));
    }
    records.push_back(std::move(r));
  }
  return records;
}

std::vector<SentenceRecord> load_corpus(const std::filesystem::path& path, const WarningSink& warn) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path.string());
  return parse_corpus(in, warn);
}

std::string serialize_corpus(const std::vector<SentenceRecord>& records) {
  std::string out;
  for (const auto& r : records) {
    out += to_json(r).dump();
    out += '\n';
  }
  return out;
}

void save_corpus(const std::filesystem::path& path, const std::vector<SentenceRecord>& records) {
  write_file_atomic(path, serialize_corpus(records));
}

void write_file_atomic(const std::filesystem::path& path, std::string_view contents) {
  auto tmp = path;
  tmp += ".tmp";
  const int fd = ::open(tmp.c_str(), O_WRONLY | O_CREAT | O_TRUNC, 0644);
  if (fd < 0) throw Error("cannot write " + tmp.string() + ": " + std::strerror(errno));
  std::size_t written = 0;
  while (written < contents.size()) {
    const auto n = ::write(fd, contents.data() + written, contents.size() - written);
    if (n < 0) {
      if (errno == EINTR) continue;
      const std::string msg = std::strerror(errno);
      ::close(fd);
      throw Error("write failed on " + tmp.string() + ": " + msg);
    }
    written += static_cast<std::size_t>(n);
  }
  ::fsync(fd);
  ::close(fd);
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw Error("rename to " + path.string() + " failed: " + ec.message());
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace windguard
