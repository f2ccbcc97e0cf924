#pragma once

#include <cstdint>
#include <string>

#include <nlohmann/json.hpp>

#include "windguard/gateway.hpp"

namespace windguard {

// Runtime-tunable settings. `version` increases with every accepted change.
struct SystemConfig {
  std::uint64_t version = 1;
  PipelineSettings pipeline;
  std::string chat_base_url;
  std::string embed_base_url;
};

// {
//   "version": 1, "metric": "emd", "n": 10,
//   "thresholds": {"emd": {"1": 0.02}, "cosine": {...}},
//   "hallucination": {"limiting_threshold": 0.0042, "occurrence_threshold": 0.4, "metric": "emd"},
//   "generation": {"n_min": 0, "max_retries": 2, "temperature": 0.7, "jobs": 1},
//   "order": "hallucination_first",
//   "providers": {"chat_base_url": "", "embed_base_url": ""}
// }
nlohmann::json to_json(const SystemConfig& cfg);

// Throws ContractError on unknown keys, wrong types, or out-of-range values.
SystemConfig config_from_json(const nlohmann::json& j);

// Applies an RFC 7386 merge patch and validates the result. The version is
// not patchable; the caller bumps it.
SystemConfig apply_config_patch(const SystemConfig& current, const nlohmann::json& patch);

}  // namespace windguard
