#include "windguard/service.hpp"

#include <httplib.h>

#include <algorithm>
#include <atomic>
#include <chrono>
#include <thread>

#include "windguard/corpus.hpp"

namespace windguard {

namespace {

std::int64_t now_ms() {
  return std::chrono::duration_cast<std::chrono::milliseconds>(
             std::chrono::system_clock::now().time_since_epoch())
      .count();
}

std::string review_id_for(std::uint64_t n) {
  std::string digits = std::to_string(n);
  if (digits.size() < 6) digits.insert(0, 6 - digits.size(), '0');
  return "r" + digits;
}

}  // namespace

Service::Service(ChatProvider& chat, EmbeddingProvider& embedder, ServiceOptions options)
    : chat_(chat),
      embedder_(embedder),
      options_(std::move(options)),
      store_(Store::Options{options_.state_dir, options_.checkpoint_every, options_.crash_hook}) {
  std::lock_guard lock(commit_mu_);
  publish_locked();
}

Role Service::authorize(const std::string& header) const {
  if (options_.operator_token.empty() && options_.manager_token.empty()) return Role::manager;
  constexpr std::string_view prefix = "Bearer ";
  if (header.size() <= prefix.size() || header.compare(0, prefix.size(), prefix) != 0) return Role::none;
  const auto token = header.substr(prefix.size());
  if (!options_.manager_token.empty() && token == options_.manager_token) return Role::manager;
  if (!options_.operator_token.empty() && token == options_.operator_token) return Role::operator_role;
  return Role::none;
}

std::shared_ptr<const Service::Published> Service::published() const {
  std::lock_guard lock(publish_mu_);
  return published_;
}

void Service::publish_locked() {
  auto next = std::make_shared<Published>();
  next->dictionary = std::make_shared<const UnsafeConceptsDictionary>(store_.state().dictionary);
  next->config = store_.state().config;
  std::lock_guard lock(publish_mu_);
  published_ = std::move(next);
}

void Service::set_stage_hook(Gateway::StageHook hook) {
  std::lock_guard lock(hook_mu_);
  stage_hook_ = std::move(hook);
}

std::uint64_t Service::journal_seq() const {
  std::lock_guard lock(commit_mu_);
  return store_.journal_seq();
}

PipelineOutcome Service::submit_query(const std::string& prompt, const std::string& request_id) {
  if (trim(prompt).empty()) throw ServiceError(400, "bad_request", "prompt is empty");
  const auto snap = published();
  const auto& settings = snap->config.pipeline;
  if (snap->dictionary->empty()) {
    throw ServiceError(409, "unconfigured", "unsafe concepts dictionary is empty");
  }
  for (const auto& [category, entries] : snap->dictionary->categories()) {
    if (!settings.thresholds.get(category, settings.metric)) {
      throw ServiceError(409, "unconfigured",
                         "no " + std::string(to_string(settings.metric)) + " threshold for category " +
                             std::to_string(category));
    }
  }

  PromptRequest request;
  request.prompt = prompt;
  if (request_id.empty()) {
    std::lock_guard lock(hook_mu_);
    request.id = "q" + std::to_string(now_ms()) + "-" + std::to_string(++request_counter_);
  } else {
    request.id = request_id;
  }

  Gateway gateway(chat_, embedder_, this);
  {
    std::lock_guard lock(hook_mu_);
    if (stage_hook_) gateway.set_stage_hook(stage_hook_);
  }
  return gateway.process_query(request, PipelineSnapshot{snap->dictionary, settings});
}

std::string Service::enqueue(const PromptRequest& request, const std::string& response,
                             const std::string& sentence, const FilterDecision& decision) {
  std::lock_guard lock(commit_mu_);
  const auto& state = store_.state();
  if (auto it = state.review_by_request.find(request.id); it != state.review_by_request.end()) {
    return it->second;
  }
  ReviewItem item;
  item.sequence = state.next_review;
  item.id = review_id_for(item.sequence);
  item.request_id = request.id;
  item.prompt = request.prompt;
  item.response = response;
  item.sentence = sentence.empty() ? response : sentence;
  item.decision = decision;
  item.created_ms = now_ms();
  store_.record_enqueue(item);
  return item.id;
}

ReviewItem Service::post_verdict(const std::string& id, ReviewState verdict) {
  if (verdict == ReviewState::pending) {
    throw ServiceError(400, "bad_request", "verdict must be confirmed_unsafe or rejected");
  }
  std::lock_guard lock(commit_mu_);
  const auto& state = store_.state();
  const auto it = state.reviews.find(id);
  if (it == state.reviews.end()) throw ServiceError(404, "not_found", "no review item " + id);
  const ReviewItem& item = it->second;
  if (item.state != ReviewState::pending) {
    if (item.state == verdict) return item;
    throw ServiceError(409, "already_decided",
                       "review item " + id + " already decided as " + std::string(to_string(item.state)));
  }

  std::optional<SentenceRecord> entry;
  if (verdict == ReviewState::confirmed_unsafe) {
    SentenceRecord sentence{item.sentence, item.decision.category, Label::unsafe, std::nullopt};
    auto outcome = add_verified_unsafe(sentence, state.dictionary, embedder_);
    if (outcome.added) entry = outcome.dictionary.entries().back();
  }
  store_.record_verdict(id, verdict, now_ms(), entry);
  publish_locked();
  return store_.state().reviews.at(id);
}

std::vector<ReviewItem> Service::review_queue(bool pending_only) const {
  std::vector<ReviewItem> items;
  {
    std::lock_guard lock(commit_mu_);
    for (const auto& [id, item] : store_.state().reviews) {
      if (!pending_only || item.state == ReviewState::pending) items.push_back(item);
    }
  }
  std::sort(items.begin(), items.end(),
            [](const ReviewItem& a, const ReviewItem& b) { return a.sequence > b.sequence; });
  return items;
}

std::optional<ReviewItem> Service::review(const std::string& id) const {
  std::lock_guard lock(commit_mu_);
  const auto& reviews = store_.state().reviews;
  if (auto it = reviews.find(id); it != reviews.end()) return it->second;
  return std::nullopt;
}

SystemConfig Service::config() const { return published()->config; }

SystemConfig Service::update_config(const nlohmann::json& patch) {
  std::lock_guard lock(commit_mu_);
  SystemConfig next;
  try {
    next = apply_config_patch(store_.state().config, patch);
  } catch (const ContractError& e) {
    throw ServiceError(422, "invalid_config", e.what());
  } catch (const DomainError& e) {
    throw ServiceError(422, "invalid_config", e.what());
  }
  next.version = store_.state().config.version + 1;
  store_.record_config(next);
  publish_locked();
  return next;
}

std::shared_ptr<const UnsafeConceptsDictionary> Service::dictionary() const { return published()->dictionary; }

DictionaryAddResult Service::add_dictionary_entry(SentenceRecord entry) {
  try {
    entry.label = Label::unsafe;
    validate(entry);
  } catch (const ContractError& e) {
    throw ServiceError(400, "bad_request", e.what());
  }
  std::lock_guard lock(commit_mu_);
  const auto& dict = store_.state().dictionary;
  if (!entry.embedding || (!dict.empty() && entry.embedding->dimension() != dict.dimension())) {
    entry.embedding = embedder_.embed(entry.text);
  }
  DictionaryAddResult result;
  if (dict.contains(entry.category, entry.text)) {
    result.notice = "duplicate: text already present in category " + std::to_string(entry.category);
  } else {
    store_.record_dictionary_add(entry);
    result.added = true;
    publish_locked();
  }
  result.version = store_.state().dictionary.version();
  result.size = store_.state().dictionary.size();
  return result;
}

void Service::replace_dictionary(const UnsafeConceptsDictionary& dict) {
  std::lock_guard lock(commit_mu_);
  store_.replace_dictionary(dict);
  publish_locked();
}

nlohmann::json Service::run_calibration(CalibrationRequest request) {
  if (request.corpus.empty()) throw ServiceError(400, "bad_request", "calibration corpus is empty");
  if (request.metrics.empty()) throw ServiceError(400, "bad_request", "no metrics requested");
  const auto dict = dictionary();
  if (dict->empty()) throw ServiceError(409, "unconfigured", "unsafe concepts dictionary is empty");

  std::vector<SentenceRecord> corpus;
  try {
    corpus = cache_embeddings(std::move(request.corpus), embedder_);
  } catch (const EmbeddingFailure& e) {
    if (e.from_provider()) throw ServiceError(502, "provider_error", e.what());
    throw ServiceError(400, "bad_request", e.what());
  }
  CalibrationReport report;
  try {
    report = calibrate(corpus, *dict, request.metrics, request.sweep);
  } catch (const ContractError& e) {
    throw ServiceError(422, "invalid_calibration", e.what());
  }

  nlohmann::json bundle;
  bundle["calibration"] = to_json(report);
  bundle["accuracy_table_csv"] = accuracy_table_csv(report);
  nlohmann::json rocs = nlohmann::json::object();
  for (const auto& e : report.entries) {
    if (e.roc) rocs[std::string(to_string(e.metric))][std::to_string(e.category)] = roc_csv(*e.roc);
  }
  bundle["roc_csv"] = std::move(rocs);
  bundle["created_ms"] = now_ms();

  std::lock_guard lock(commit_mu_);
  bundle["dictionary_version"] = dict->version();
  store_.record_report(bundle);
  if (request.apply_thresholds) {
    auto next = store_.state().config;
    const auto best = report.thresholds();
    for (const auto& [key, tau] : best.values()) {
      next.pipeline.thresholds.set(key.first, key.second, tau);
    }
    next.version += 1;
    store_.record_config(next);
  }
  publish_locked();
  return bundle;
}

nlohmann::json Service::reports() const {
  std::lock_guard lock(commit_mu_);
  return store_.state().calibration_report;
}

// ---------------------------------------------------------------------------
// HTTP

namespace {

void send_json(httplib::Response& res, int status, const nlohmann::json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

void send_error(httplib::Response& res, int status, const std::string& code, const std::string& message) {
  send_json(res, status, {{"error", {{"code", code}, {"message", message}}}});
}

nlohmann::json parse_body(const httplib::Request& req) {
  try {
    return nlohmann::json::parse(req.body);
  } catch (const nlohmann::json::exception& e) {
    throw ServiceError(400, "bad_request", std::string("malformed JSON: ") + e.what());
  }
}

int status_for(PipelineStatus status) {
  switch (status) {
    case PipelineStatus::delivered:
    case PipelineStatus::blocked_unsafe:
    case PipelineStatus::blocked_hallucination:
      return 200;
    case PipelineStatus::provider_error:
      return 502;
    case PipelineStatus::pipeline_error:
      break;
  }
  return 500;
}

std::vector<SentenceRecord> records_from_body(const nlohmann::json& arr) {
  if (!arr.is_array()) throw ServiceError(400, "bad_request", "\"corpus\" must be an array");
  std::vector<SentenceRecord> out;
  out.reserve(arr.size());
  for (std::size_t i = 0; i < arr.size(); ++i) {
    try {
      out.push_back(record_from_json(arr[i]));
    } catch (const std::exception& e) {
      throw ServiceError(400, "bad_request", "corpus[" + std::to_string(i) + "]: " + e.what());
    }
  }
  return out;
}

}  // namespace

struct ApiServer::Impl {
  Service& service;
  httplib::Server server;
  std::thread thread;

  explicit Impl(Service& s) : service(s) { routes(); }

  // Wraps a handler with auth and error mapping.
  template <typename F>
  httplib::Server::Handler guarded(Role needed, F body) {
    return [this, needed, body](const httplib::Request& req, httplib::Response& res) {
      try {
        if (needed != Role::none) {
          const Role role = service.authorize(req.get_header_value("Authorization"));
          if (role == Role::none) {
            send_error(res, 401, "unauthorized", "missing or unknown bearer token");
            return;
          }
          if (needed == Role::manager && role != Role::manager) {
            send_error(res, 403, "forbidden", "manager role required");
            return;
          }
        }
        body(req, res);
      } catch (const ServiceError& e) {
        send_error(res, e.status(), e.code(), e.what());
      } catch (const ContractError& e) {
        send_error(res, 400, "bad_request", e.what());
      } catch (const ProviderError& e) {
        send_error(res, 502, "provider_error", e.what());
      } catch (const std::exception& e) {
        send_error(res, 500, "internal", e.what());
      }
    };
  }

  void routes() {
    const auto& origin = service.options().cors_origin;
    server.set_default_headers({{"Access-Control-Allow-Origin", origin},
                                {"Access-Control-Allow-Headers", "Authorization, Content-Type"},
                                {"Access-Control-Allow-Methods", "GET, POST, PATCH, OPTIONS"}});
    server.Options(R"(/v1/.*)", [](const httplib::Request&, httplib::Response& res) { res.status = 204; });

    server.Get("/v1/health", guarded(Role::none, [this](const httplib::Request&, httplib::Response& res) {
      const auto dict = service.dictionary();
      send_json(res, 200,
                {{"status", "ok"},
                 {"config_version", service.config().version},
                 {"dictionary_version", dict->version()},
                 {"dictionary_size", dict->size()}});
    }));

    server.Post("/v1/query", guarded(Role::operator_role, [this](const httplib::Request& req, httplib::Response& res) {
      const auto body = parse_body(req);
      if (!body.is_object() || !body.contains("prompt") || !body["prompt"].is_string()) {
        throw ServiceError(400, "bad_request", "body must be {\"prompt\": string}");
      }
      std::string request_id;
      if (body.contains("request_id")) {
        if (!body["request_id"].is_string()) throw ServiceError(400, "bad_request", "request_id must be a string");
        request_id = body["request_id"].get<std::string>();
      }
      const auto outcome = service.submit_query(body["prompt"].get<std::string>(), request_id);
      send_json(res, status_for(outcome.status), to_json(outcome));
    }));

    server.Get("/v1/review/queue", guarded(Role::operator_role, [this](const httplib::Request& req, httplib::Response& res) {
      const bool all = req.get_param_value("state") == "all";
      nlohmann::json items = nlohmann::json::array();
      for (const auto& item : service.review_queue(!all)) items.push_back(to_json(item));
      send_json(res, 200, {{"items", std::move(items)}});
    }));

    server.Post(R"(/v1/review/([^/]+)/verdict)",
                guarded(Role::manager, [this](const httplib::Request& req, httplib::Response& res) {
                  const auto body = parse_body(req);
                  if (!body.is_object() || !body.contains("verdict") || !body["verdict"].is_string()) {
                    throw ServiceError(400, "bad_request", "body must be {\"verdict\": string}");
                  }
                  const auto verdict = parse_review_state(body["verdict"].get<std::string>());
                  if (!verdict || *verdict == ReviewState::pending) {
                    throw ServiceError(400, "bad_request", "verdict must be confirmed_unsafe or rejected");
                  }
                  const auto item = service.post_verdict(req.matches[1], *verdict);
                  auto j = to_json(item);
                  j["dictionary_version"] = service.dictionary()->version();
                  j["dictionary_size"] = service.dictionary()->size();
                  send_json(res, 200, j);
                }));

    server.Get("/v1/config", guarded(Role::operator_role, [this](const httplib::Request&, httplib::Response& res) {
      send_json(res, 200, to_json(service.config()));
    }));

    server.Patch("/v1/config", guarded(Role::manager, [this](const httplib::Request& req, httplib::Response& res) {
      send_json(res, 200, to_json(service.update_config(parse_body(req))));
    }));

    server.Get("/v1/dictionary", guarded(Role::operator_role, [this](const httplib::Request& req, httplib::Response& res) {
      const auto dict = service.dictionary();
      const bool with_embeddings = req.get_param_value("embeddings") == "1";
      nlohmann::json entries = nlohmann::json::array();
      for (std::size_t i = 0; i < dict->size(); ++i) {
        const auto& e = dict->entries()[i];
        nlohmann::json j = {{"index", i}, {"text", e.text}, {"category", e.category}};
        if (with_embeddings && e.embedding) {
          j["embedding"] = std::vector<double>(e.embedding->values().begin(), e.embedding->values().end());
        }
        entries.push_back(std::move(j));
      }
      send_json(res, 200,
                {{"version", dict->version()},
                 {"dimension", dict->dimension()},
                 {"size", dict->size()},
                 {"entries", std::move(entries)}});
    }));

    server.Post("/v1/dictionary", guarded(Role::manager, [this](const httplib::Request& req, httplib::Response& res) {
      const auto body = parse_body(req);
      SentenceRecord entry;
      try {
        entry = record_from_json(body);
      } catch (const std::exception& e) {
        throw ServiceError(400, "bad_request", e.what());
      }
      const auto result = service.add_dictionary_entry(std::move(entry));
      nlohmann::json j = {{"added", result.added}, {"version", result.version}, {"size", result.size}};
      if (!result.notice.empty()) j["notice"] = result.notice;
      send_json(res, result.added ? 201 : 200, j);
    }));

    server.Post("/v1/calibration", guarded(Role::manager, [this](const httplib::Request& req, httplib::Response& res) {
      const auto body = parse_body(req);
      if (!body.is_object() || !body.contains("corpus")) {
        throw ServiceError(400, "bad_request", "body must carry \"corpus\"");
      }
      CalibrationRequest request;
      request.corpus = records_from_body(body["corpus"]);
      if (body.contains("metrics")) {
        request.metrics.clear();
        for (const auto& m : body["metrics"]) {
          const auto parsed = m.is_string() ? parse_metric(m.get<std::string>()) : std::nullopt;
          if (!parsed) throw ServiceError(400, "bad_request", "unknown metric " + m.dump());
          request.metrics.push_back(*parsed);
        }
      }
      try {
        request.sweep.step = body.value("step", request.sweep.step);
        request.sweep.lo = body.value("lo", request.sweep.lo);
        request.sweep.hi = body.value("hi", request.sweep.hi);
        request.apply_thresholds = body.value("apply_thresholds", false);
      } catch (const nlohmann::json::exception& e) {
        throw ServiceError(400, "bad_request", e.what());
      }
      const auto bundle = service.run_calibration(std::move(request));
      send_json(res, 200, bundle["calibration"]);
    }));

    server.Get(R"(/v1/reports/(calibration|roc))",
               guarded(Role::operator_role, [this](const httplib::Request& req, httplib::Response& res) {
                 const auto bundle = service.reports();
                 if (bundle.is_null()) throw ServiceError(404, "not_found", "no calibration run yet");
                 const bool csv = req.get_param_value("format") == "csv";
                 const auto& report = bundle["calibration"];
                 if (req.matches[1] == "calibration") {
                   if (csv) {
                     res.set_content(bundle["accuracy_table_csv"].get<std::string>(), "text/csv");
                   } else {
                     send_json(res, 200, report);
                   }
                   return;
                 }
                 if (csv) {
                   const auto metric = req.get_param_value("metric");
                   const auto category = req.get_param_value("category");
                   const auto& rocs = bundle["roc_csv"];
                   if (!rocs.contains(metric) || !rocs[metric].contains(category)) {
                     throw ServiceError(404, "not_found", "no ROC for metric=" + metric + " category=" + category);
                   }
                   res.set_content(rocs[metric][category].get<std::string>(), "text/csv");
                   return;
                 }
                 nlohmann::json curves = nlohmann::json::array();
                 for (const auto& e : report["entries"]) {
                   if (!e["roc"].is_null()) curves.push_back(e["roc"]);
                 }
                 send_json(res, 200, {{"mean_auc", report["mean_auc"]}, {"curves", std::move(curves)}});
               }));
  }
};

ApiServer::ApiServer(Service& service) : impl_(std::make_unique<Impl>(service)) {}

ApiServer::~ApiServer() { stop(); }

int ApiServer::start(const std::string& host, int port) {
  int bound = port;
  if (port == 0) {
    bound = impl_->server.bind_to_any_port(host);
  } else if (!impl_->server.bind_to_port(host, port)) {
    bound = -1;
  }
  if (bound < 0) throw Error("cannot bind " + host + ":" + std::to_string(port));
  impl_->thread = std::thread([this] { impl_->server.listen_after_bind(); });
  impl_->server.wait_until_ready();
  return bound;
}

void ApiServer::run(const std::string& host, int port) {
  if (!impl_->server.listen(host, port)) throw Error("cannot listen on " + host + ":" + std::to_string(port));
}

void ApiServer::stop() {
  impl_->server.stop();
  if (impl_->thread.joinable()) impl_->thread.join();
}

}  // namespace windguard
