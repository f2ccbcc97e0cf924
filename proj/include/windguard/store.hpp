#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "windguard/config.hpp"
#include "windguard/safety_filter.hpp"

namespace windguard {

enum class ReviewState { pending, confirmed_unsafe, rejected };

std::string_view to_string(ReviewState state) noexcept;
std::optional<ReviewState> parse_review_state(std::string_view text) noexcept;

struct ReviewItem {
  std::string id;
  std::string request_id;
  std::string prompt;
  std::string response;   // full blocked response
  std::string sentence;   // the sentence that triggered the block
  FilterDecision decision;
  std::int64_t created_ms = 0;
  std::optional<std::int64_t> decided_ms;
  std::uint64_t sequence = 0;  // creation order
  ReviewState state = ReviewState::pending;
};

nlohmann::json to_json(const ReviewItem& item);
ReviewItem review_from_json(const nlohmann::json& j);
FilterDecision decision_from_json(const nlohmann::json& j);

struct StoreState {
  UnsafeConceptsDictionary dictionary;
  std::map<std::string, ReviewItem> reviews;
  std::map<std::string, std::string> review_by_request;
  SystemConfig config;
  nlohmann::json calibration_report;  // null until a calibration run
  std::uint64_t next_review = 1;
};

// Thrown by crash hooks in tests to abandon a store mid-operation.
struct SimulatedCrash {
  std::string point;
};

// Durable state in a directory:
//   journal.jsonl            append-only; one committed change per line
//   state.json               reviews, config, report (+ journal_seq)
//   dictionary.jsonl         dictionary entries
//   dictionary.header.json   {"version", "dimension", "metric_defaults", "journal_seq", "entries"}
// A change is committed once its full journal line (with newline) is on disk.
// Snapshots are written by rename and record the last journal sequence they
// contain; recovery replays newer journal lines and drops a torn tail.
class Store {
 public:
  // Crash points: "journal.before_append", "journal.partial_append",
  // "journal.after_append", "checkpoint.dictionary", "checkpoint.header",
  // "checkpoint.state", "checkpoint.journal_reset", "checkpoint.done".
  using CrashHook = std::function<void(std::string_view point)>;

  struct Options {
    std::filesystem::path dir;
    std::size_t checkpoint_every = 64;  // journal lines between snapshots
    CrashHook crash_hook;
  };

  // Opens (creating if needed) and recovers the directory.
  explicit Store(Options options);

  const StoreState& state() const noexcept { return state_; }
  std::uint64_t journal_seq() const noexcept { return seq_; }

  // Each call journals one change and applies it. Preconditions are the
  // caller's job; these only persist.
  void record_enqueue(const ReviewItem& item);
  void record_verdict(const std::string& id, ReviewState state, std::int64_t decided_ms,
                      const std::optional<SentenceRecord>& dictionary_entry);
  void record_dictionary_add(const SentenceRecord& entry);
  void record_config(const SystemConfig& config);
  void record_report(const nlohmann::json& report);
  void replace_dictionary(const UnsafeConceptsDictionary& dict);

  void checkpoint();

 private:
  void recover();
  void append(nlohmann::json entry);
  void apply(const nlohmann::json& entry, bool to_state, bool to_dictionary);
  void crash_point(std::string_view point) const;

  Options options_;
  StoreState state_;
  std::uint64_t seq_ = 0;
  std::size_t since_checkpoint_ = 0;
};

}  // namespace windguard
