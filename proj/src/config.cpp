#include "windguard/config.hpp"

#include <set>

#include "windguard/errors.hpp"

namespace windguard {

namespace {

void reject_unknown(const nlohmann::json& j, const std::set<std::string>& allowed, const std::string& where) {
  for (const auto& [key, value] : j.items()) {
    if (!allowed.contains(key)) throw ContractError("unknown key \"" + key + "\" in " + where);
  }
}

template <typename T>
T read(const nlohmann::json& j, const char* key, T fallback) {
  if (!j.contains(key)) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const nlohmann::json::exception&) {
    throw ContractError(std::string("\"") + key + "\" has the wrong type");
  }
}

Metric read_metric(const nlohmann::json& j, const char* key, Metric fallback) {
  if (!j.contains(key)) return fallback;
  if (!j[key].is_string()) throw ContractError(std::string("\"") + key + "\" must be a string");
  auto m = parse_metric(j[key].get<std::string>());
  if (!m) throw ContractError("unknown metric \"" + j[key].get<std::string>() + "\"");
  return *m;
}

std::size_t read_count(const nlohmann::json& j, const char* key, std::size_t fallback) {
  if (!j.contains(key)) return fallback;
  if (!j[key].is_number_integer() || j[key].get<long long>() < 0) {
    throw ContractError(std::string("\"") + key + "\" must be a non-negative integer");
  }
  return j[key].get<std::size_t>();
}

}  // namespace

nlohmann::json to_json(const SystemConfig& cfg) {
  const auto& p = cfg.pipeline;
  nlohmann::json j;
  j["version"] = cfg.version;
  j["metric"] = to_string(p.metric);
  j["n"] = p.generation.n;
  j["thresholds"] = to_json(p.thresholds);
  j["hallucination"] = {{"limiting_threshold", p.hallucination.limiting_threshold},
                        {"occurrence_threshold", p.hallucination.occurrence_threshold},
                        {"metric", to_string(p.hallucination.metric)}};
  j["generation"] = {{"n_min", p.generation.n_min},
                     {"max_retries", p.generation.max_retries},
                     {"temperature", p.generation.temperature},
                     {"jobs", p.generation.jobs}};
  j["order"] = p.order == CheckOrder::safety_first ? "safety_first" : "hallucination_first";
  j["providers"] = {{"chat_base_url", cfg.chat_base_url}, {"embed_base_url", cfg.embed_base_url}};
  return j;
}

SystemConfig config_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ContractError("config must be a JSON object");
  reject_unknown(j, {"version", "metric", "n", "thresholds", "hallucination", "generation", "order", "providers"},
                 "config");
  SystemConfig cfg;
  auto& p = cfg.pipeline;
  cfg.version = read<std::uint64_t>(j, "version", 1);
  p.metric = read_metric(j, "metric", Metric::emd);
  p.generation.n = read_count(j, "n", 10);
  p.hallucination.samples = p.generation.n;
  if (j.contains("thresholds")) p.thresholds = thresholds_from_json(j["thresholds"]);

  if (j.contains("hallucination")) {
    const auto& h = j["hallucination"];
    if (!h.is_object()) throw ContractError("\"hallucination\" must be an object");
    reject_unknown(h, {"limiting_threshold", "occurrence_threshold", "metric"}, "hallucination");
    p.hallucination.limiting_threshold = read<double>(h, "limiting_threshold", 0.0042);
    p.hallucination.occurrence_threshold = read<double>(h, "occurrence_threshold", 0.40);
    p.hallucination.metric = read_metric(h, "metric", Metric::emd);
  }
  p.hallucination.validate();

  if (j.contains("generation")) {
    const auto& g = j["generation"];
    if (!g.is_object()) throw ContractError("\"generation\" must be an object");
    reject_unknown(g, {"n_min", "max_retries", "temperature", "jobs"}, "generation");
    p.generation.n_min = read_count(g, "n_min", 0);
    p.generation.max_retries = read_count(g, "max_retries", 2);
    p.generation.temperature = read<double>(g, "temperature", 0.7);
    p.generation.jobs = read_count(g, "jobs", 1);
  }
  if (p.generation.required() > p.generation.n) throw ContractError("n_min exceeds n");
  if (!(p.generation.temperature > 0.0)) throw ContractError("temperature must be > 0");
  if (p.generation.jobs == 0) throw ContractError("jobs must be >= 1");

  const auto order = read<std::string>(j, "order", "hallucination_first");
  if (order == "hallucination_first") p.order = CheckOrder::hallucination_first;
  else if (order == "safety_first") p.order = CheckOrder::safety_first;
  else throw ContractError("unknown order \"" + order + "\"");

  if (j.contains("providers")) {
    const auto& pr = j["providers"];
    if (!pr.is_object()) throw ContractError("\"providers\" must be an object");
    reject_unknown(pr, {"chat_base_url", "embed_base_url"}, "providers");
    cfg.chat_base_url = read<std::string>(pr, "chat_base_url", "");
    cfg.embed_base_url = read<std::string>(pr, "embed_base_url", "");
  }
  return cfg;
}

SystemConfig apply_config_patch(const SystemConfig& current, const nlohmann::json& patch) {
  if (!patch.is_object()) throw ContractError("config patch must be a JSON object");
  auto doc = to_json(current);
  auto p = patch;
  p.erase("version");
  doc.merge_patch(p);
  auto next = config_from_json(doc);
  next.version = current.version;
  return next;
}

}  // namespace windguard
