#include "windguard/store.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>
#include <sstream>

#include "windguard/corpus.hpp"
#include "windguard/errors.hpp"

namespace windguard {

namespace {

constexpr const char* kJournal = "journal.jsonl";
constexpr const char* kState = "state.json";
constexpr const char* kDictionary = "dictionary.jsonl";
constexpr const char* kDictionaryHeader = "dictionary.header.json";

void write_all(int fd, const char* data, std::size_t size, const std::filesystem::path& path) {
  std::size_t written = 0;
  while (written < size) {
    const auto n = ::write(fd, data + written, size - written);
    if (n < 0) {
      if (errno == EINTR) continue;
      throw Error("write failed on " + path.string() + ": " + std::strerror(errno));
    }
    written += static_cast<std::size_t>(n);
  }
}

}  // namespace

std::string_view to_string(ReviewState state) noexcept {
  switch (state) {
    case ReviewState::pending:
      return "pending";
    case ReviewState::confirmed_unsafe:
      return "confirmed_unsafe";
    case ReviewState::rejected:
      break;
  }
  return "rejected";
}

std::optional<ReviewState> parse_review_state(std::string_view text) noexcept {
  if (text == "pending") return ReviewState::pending;
  if (text == "confirmed_unsafe") return ReviewState::confirmed_unsafe;
  if (text == "rejected") return ReviewState::rejected;
  return std::nullopt;
}

FilterDecision decision_from_json(const nlohmann::json& j) {
  FilterDecision d;
  d.verdict = j.at("verdict").get<std::string>() == "unsafe" ? Verdict::unsafe : Verdict::safe;
  d.category = j.at("category").get<int>();
  d.score = j.at("score").get<double>();
  d.threshold = j.value("threshold", 0.0);
  d.metric = parse_metric(j.at("metric").get<std::string>()).value_or(Metric::emd);
  if (j.contains("matched_entry") && !j["matched_entry"].is_null()) {
    d.matched_entry = j["matched_entry"].get<std::size_t>();
  }
  d.matched_text = j.value("matched_text", std::string{});
  d.dictionary_version = j.value("dictionary_version", std::uint64_t{0});
  return d;
}

nlohmann::json to_json(const ReviewItem& item) {
  nlohmann::json j;
  j["id"] = item.id;
  j["request_id"] = item.request_id;
  j["prompt"] = item.prompt;
  j["response"] = item.response;
  j["sentence"] = item.sentence;
  j["decision"] = to_json(item.decision);
  j["created_ms"] = item.created_ms;
  j["decided_ms"] = item.decided_ms ? nlohmann::json(*item.decided_ms) : nlohmann::json(nullptr);
  j["sequence"] = item.sequence;
  j["state"] = to_string(item.state);
  return j;
}

ReviewItem review_from_json(const nlohmann::json& j) {
  ReviewItem item;
  item.id = j.at("id").get<std::string>();
  item.request_id = j.at("request_id").get<std::string>();
  item.prompt = j.at("prompt").get<std::string>();
  item.response = j.at("response").get<std::string>();
  item.sentence = j.value("sentence", item.response);
  item.decision = decision_from_json(j.at("decision"));
  item.created_ms = j.at("created_ms").get<std::int64_t>();
  if (j.contains("decided_ms") && !j["decided_ms"].is_null()) {
    item.decided_ms = j["decided_ms"].get<std::int64_t>();
  }
  item.sequence = j.value("sequence", std::uint64_t{0});
  auto state = parse_review_state(j.at("state").get<std::string>());
  if (!state) throw ContractError("unknown review state");
  item.state = *state;
  return item;
}

Store::Store(Options options) : options_(std::move(options)) {
  if (options_.checkpoint_every == 0) options_.checkpoint_every = 1;
  std::filesystem::create_directories(options_.dir);
  recover();
}

void Store::crash_point(std::string_view point) const {
  if (options_.crash_hook) options_.crash_hook(point);
}

void Store::recover() {
  const auto& dir = options_.dir;
  std::uint64_t state_seq = 0;
  std::uint64_t dict_seq = 0;

  if (std::filesystem::exists(dir / kState)) {
    const auto j = nlohmann::json::parse(read_file(dir / kState));
    state_seq = j.at("journal_seq").get<std::uint64_t>();
    state_.config = config_from_json(j.at("config"));
    state_.calibration_report = j.value("calibration_report", nlohmann::json(nullptr));
    state_.next_review = j.value("next_review", std::uint64_t{1});
    for (const auto& r : j.at("reviews")) {
      auto item = review_from_json(r);
      state_.review_by_request[item.request_id] = item.id;
      state_.reviews.emplace(item.id, std::move(item));
    }
  }

  if (std::filesystem::exists(dir / kDictionaryHeader)) {
    const auto header = nlohmann::json::parse(read_file(dir / kDictionaryHeader));
    dict_seq = header.at("journal_seq").get<std::uint64_t>();
    const auto count = header.at("entries").get<std::size_t>();
    auto entries = load_corpus(dir / kDictionary);
    // dictionary.jsonl may be one checkpoint ahead of its header. Adds only
    // append, so the header's prefix is the committed set; a replace that made
    // the file differ is still in the journal and replays over this.
    if (entries.size() > count) entries.resize(count);
    state_.dictionary = UnsafeConceptsDictionary(std::move(entries), header.at("version").get<std::uint64_t>());
  }

  seq_ = std::max(state_seq, dict_seq);
  if (std::filesystem::exists(dir / kJournal)) {
    const auto text = read_file(dir / kJournal);
    std::size_t pos = 0;
    while (pos < text.size()) {
      const auto nl = text.find('\n', pos);
      if (nl == std::string::npos) break;  // torn tail
      nlohmann::json entry;
      try {
        entry = nlohmann::json::parse(text.substr(pos, nl - pos));
      } catch (const nlohmann::json::exception&) {
        break;
      }
      pos = nl + 1;
      const auto seq = entry.at("seq").get<std::uint64_t>();
      apply(entry, seq > state_seq, seq > dict_seq);
      seq_ = std::max(seq_, seq);
    }
  }
  checkpoint();
}

void Store::apply(const nlohmann::json& entry, bool to_state, bool to_dictionary) {
  const auto op = entry.at("op").get<std::string>();
  if (op == "enqueue") {
    if (!to_state) return;
    auto item = review_from_json(entry.at("item"));
    state_.next_review = std::max(state_.next_review, entry.at("next_review").get<std::uint64_t>());
    state_.review_by_request[item.request_id] = item.id;
    state_.reviews[item.id] = std::move(item);
  } else if (op == "verdict") {
    if (to_state) {
      auto& item = state_.reviews.at(entry.at("id").get<std::string>());
      item.state = *parse_review_state(entry.at("state").get<std::string>());
      item.decided_ms = entry.at("decided_ms").get<std::int64_t>();
    }
    if (to_dictionary && !entry.at("entry").is_null()) {
      state_.dictionary.add(record_from_json(entry.at("entry")));
    }
  } else if (op == "dictionary_add") {
    if (to_dictionary) state_.dictionary.add(record_from_json(entry.at("entry")));
  } else if (op == "dictionary_replace") {
    if (!to_dictionary) return;
    std::vector<SentenceRecord> entries;
    for (const auto& e : entry.at("entries")) entries.push_back(record_from_json(e));
    state_.dictionary = UnsafeConceptsDictionary(std::move(entries), entry.at("version").get<std::uint64_t>());
  } else if (op == "config") {
    if (to_state) state_.config = config_from_json(entry.at("config"));
  } else if (op == "report") {
    if (to_state) state_.calibration_report = entry.at("report");
  } else {
    throw Error("unknown journal op \"" + op + "\"");
  }
}

void Store::append(nlohmann::json entry) {
  entry["seq"] = seq_ + 1;
  const std::string line = entry.dump() + "\n";
  const auto path = options_.dir / kJournal;

  crash_point("journal.before_append");
  const int fd = ::open(path.c_str(), O_WRONLY | O_CREAT | O_APPEND, 0644);
  if (fd < 0) throw Error("cannot open " + path.string() + ": " + std::strerror(errno));
  try {
    const std::size_t half = line.size() / 2;
    write_all(fd, line.data(), half, path);
    ::fsync(fd);
    crash_point("journal.partial_append");
    write_all(fd, line.data() + half, line.size() - half, path);
    ::fsync(fd);
  } catch (...) {
    ::close(fd);
    throw;
  }
  ::close(fd);
  ++seq_;
  crash_point("journal.after_append");

  apply(entry, true, true);
  if (++since_checkpoint_ >= options_.checkpoint_every) checkpoint();
}

void Store::checkpoint() {
  const auto& dir = options_.dir;

  crash_point("checkpoint.dictionary");
  write_file_atomic(dir / kDictionary, serialize_corpus(state_.dictionary.entries()));

  crash_point("checkpoint.header");
  nlohmann::ordered_json header;
  header["version"] = state_.dictionary.version();
  header["dimension"] = state_.dictionary.dimension();
  header["metric_defaults"] = to_json(state_.config.pipeline.thresholds);
  header["journal_seq"] = seq_;
  header["entries"] = state_.dictionary.size();
  write_file_atomic(dir / kDictionaryHeader, header.dump(2) + "\n");

  crash_point("checkpoint.state");
  nlohmann::json s;
  s["journal_seq"] = seq_;
  s["config"] = to_json(state_.config);
  s["calibration_report"] = state_.calibration_report;
  s["next_review"] = state_.next_review;
  s["reviews"] = nlohmann::json::array();
  for (const auto& [id, item] : state_.reviews) s["reviews"].push_back(to_json(item));
  write_file_atomic(dir / kState, s.dump() + "\n");

  crash_point("checkpoint.journal_reset");
  write_file_atomic(dir / kJournal, "");
  since_checkpoint_ = 0;
  crash_point("checkpoint.done");
}

void Store::record_enqueue(const ReviewItem& item) {
  append({{"op", "enqueue"}, {"item", to_json(item)}, {"next_review", state_.next_review + 1}});
}

void Store::record_verdict(const std::string& id, ReviewState state, std::int64_t decided_ms,
                           const std::optional<SentenceRecord>& dictionary_entry) {
  nlohmann::json e = {{"op", "verdict"}, {"id", id}, {"state", to_string(state)}, {"decided_ms", decided_ms}};
  e["entry"] = dictionary_entry ? nlohmann::json(to_json(*dictionary_entry)) : nlohmann::json(nullptr);
  append(std::move(e));
}

void Store::record_dictionary_add(const SentenceRecord& entry) {
  append({{"op", "dictionary_add"}, {"entry", to_json(entry)}});
}

void Store::record_config(const SystemConfig& config) {
  append({{"op", "config"}, {"config", to_json(config)}});
}

void Store::record_report(const nlohmann::json& report) {
  append({{"op", "report"}, {"report", report}});
}

void Store::replace_dictionary(const UnsafeConceptsDictionary& dict) {
  nlohmann::json entries = nlohmann::json::array();
  for (const auto& e : dict.entries()) entries.push_back(nlohmann::json(to_json(e)));
  const auto version = std::max(dict.version(), state_.dictionary.version() + 1);
  append({{"op", "dictionary_replace"}, {"entries", std::move(entries)}, {"version", version}});
}

}  // namespace windguard
