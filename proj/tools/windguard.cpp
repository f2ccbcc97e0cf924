// windguard: batch harness and server entry point.
//
// Exit codes: 0 ok, 2 usage, 3 bad input data or configuration, 4 provider
// failure.

#include <CLI11.hpp>

#include <csignal>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <pthread.h>

#include <nlohmann/json.hpp>

#include "windguard/calibration.hpp"
#include "windguard/chat.hpp"
#include "windguard/config.hpp"
#include "windguard/corpus.hpp"
#include "windguard/embedding.hpp"
#include "windguard/errors.hpp"
#include "windguard/hallucination.hpp"
#include "windguard/safety_filter.hpp"
#include "windguard/service.hpp"

namespace fs = std::filesystem;
using namespace windguard;

namespace {

constexpr int kExitUsage = 2;
constexpr int kExitData = 3;
constexpr int kExitProvider = 4;

struct EmbedderFlags {
  std::string kind = "test";
  std::size_t dimension = kDefaultDimension;
  std::string url;
  std::string token_env;
  std::string cache;
};

void add_embedder_flags(CLI::App* cmd, EmbedderFlags& f) {
  cmd->add_option("--embedder", f.kind, "Embedding provider")
      ->check(CLI::IsMember({"test", "external", "cache"}))
      ->capture_default_str();
  cmd->add_option("--dim", f.dimension, "Embedding dimension")->capture_default_str();
  cmd->add_option("--embed-url", f.url, "External embedding service base URL");
  cmd->add_option("--embed-token-env", f.token_env, "Env var holding the embedding service token");
  cmd->add_option("--embed-cache", f.cache, "Embedded JSONL used as a lookup cache (--embedder cache)");
}

std::unique_ptr<EmbeddingProvider> make_embedder(const EmbedderFlags& f) {
  if (f.kind == "external") {
    if (f.url.empty()) throw ConfigurationError("--embed-url is required with --embedder external");
    ExternalEmbedderOptions o;
    o.base_url = f.url;
    o.token_env = f.token_env;
    o.dimension = f.dimension;
    return std::make_unique<ExternalEmbedder>(o);
  }
  if (f.kind == "cache") {
    if (f.cache.empty()) throw ConfigurationError("--embed-cache is required with --embedder cache");
    return std::make_unique<FileCacheEmbedder>(load_corpus(f.cache));
  }
  return std::make_unique<HashingEmbedder>(f.dimension);
}

std::vector<Metric> metrics_from_flag(const std::string& flag) {
  if (flag == "both") return {Metric::emd, Metric::cosine};
  return {*parse_metric(flag)};
}

void warn(const std::string& message) { std::cerr << "warning: " << message << "\n"; }

std::vector<SentenceRecord> load_embedded(const std::string& path, EmbeddingProvider& embedder) {
  return cache_embeddings(load_corpus(path, warn), embedder);
}

UnsafeConceptsDictionary load_dict(const std::string& path, EmbeddingProvider& embedder) {
  return load_dictionary(path, &embedder);
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  write_file_atomic(path, text);
}

std::string dump(const nlohmann::json& j) { return j.dump(2) + "\n"; }

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"windguard: safety filter and hallucination checks for maintenance LLM output"};
  app.require_subcommand(1);

  std::string metric_flag = "emd";
  double step = 0.005;
  std::uint64_t seed = 1;
  std::size_t jobs = 1;
  std::string out_dir = ".";
  EmbedderFlags emb;

  auto add_common = [&](CLI::App* cmd, bool allow_both) {
    std::vector<std::string> allowed{"emd", "cosine"};
    if (allow_both) allowed.push_back("both");
    cmd->add_option("--metric", metric_flag, "Distance metric")->check(CLI::IsMember(allowed))->capture_default_str();
    cmd->add_option("--step", step, "Threshold sweep step")->check(CLI::PositiveNumber)->capture_default_str();
    cmd->add_option("--seed", seed, "Seed for every random draw")->capture_default_str();
    cmd->add_option("--jobs", jobs, "Worker threads")->check(CLI::PositiveNumber)->capture_default_str();
    cmd->add_option("--out", out_dir, "Output directory")->capture_default_str();
  };

  // gen
  auto* gen = app.add_subcommand("gen", "Emit a synthetic labelled corpus and its dictionary");
  SyntheticSpec spec;
  std::size_t per_category = 20;
  add_common(gen, false);
  gen->add_option("--eta", spec.eta, "Displacement of safe records (0 = uninformative labels)")->capture_default_str();
  gen->add_option("--categories", spec.categories, "Number of categories")->capture_default_str();
  gen->add_option("--per-category", per_category, "Sentences per category, half safe half unsafe")->capture_default_str();
  gen->add_option("--anchors", spec.anchors_per_category, "Dictionary entries per category")->capture_default_str();
  gen->add_option("--noise", spec.noise, "Per-component noise bound on unsafe records")->capture_default_str();
  gen->add_option("--dim", spec.dimension, "Vector dimension")->capture_default_str();

  // embed-cache
  auto* embed_cache = app.add_subcommand("embed-cache", "Embed a corpus and write it with vectors attached");
  std::string embed_in;
  add_common(embed_cache, false);
  embed_cache->add_option("--corpus", embed_in, "Corpus JSONL")->required();
  add_embedder_flags(embed_cache, emb);

  // calibrate
  auto* calibrate_cmd = app.add_subcommand("calibrate", "Sweep thresholds per category and report accuracy");
  std::string corpus_path, dict_path;
  double lo = 0.0, hi = 1.0;
  add_common(calibrate_cmd, true);
  calibrate_cmd->add_option("--corpus", corpus_path, "Labelled corpus JSONL")->required();
  calibrate_cmd->add_option("--dict", dict_path, "Dictionary JSONL")->required();
  calibrate_cmd->add_option("--lo", lo, "Sweep start")->capture_default_str();
  calibrate_cmd->add_option("--hi", hi, "Sweep end")->capture_default_str();
  add_embedder_flags(calibrate_cmd, emb);

  // roc
  auto* roc_cmd = app.add_subcommand("roc", "Write ROC curves per category and pooled");
  add_common(roc_cmd, true);
  roc_cmd->add_option("--corpus", corpus_path, "Labelled corpus JSONL")->required();
  roc_cmd->add_option("--dict", dict_path, "Dictionary JSONL")->required();
  add_embedder_flags(roc_cmd, emb);

  // filter
  auto* filter_cmd = app.add_subcommand("filter", "Classify every record of a corpus against a dictionary");
  std::string thresholds_path;
  std::optional<double> tau;
  add_common(filter_cmd, false);
  filter_cmd->add_option("--corpus", corpus_path, "Corpus JSONL")->required();
  filter_cmd->add_option("--dict", dict_path, "Dictionary JSONL")->required();
  auto* thr_opt = filter_cmd->add_option("--thresholds", thresholds_path, "Threshold JSON (as written by calibrate)");
  filter_cmd->add_option("--tau", tau, "One threshold for every category")->excludes(thr_opt);
  add_embedder_flags(filter_cmd, emb);

  // detect
  auto* detect_cmd = app.add_subcommand("detect", "Run the N-sample consistency check on response samples");
  std::string samples_path, references_path;
  HallucinationConfig hcfg;
  double theta = 0.1, w_r = 0.5, w_f = 0.5;
  add_common(detect_cmd, false);
  detect_cmd->add_option("--samples", samples_path, "Sample JSONL: {\"prompt\", \"responses\"} lines or one record per line")->required();
  detect_cmd->add_option("--limit", hcfg.limiting_threshold, "Limiting threshold")->capture_default_str();
  detect_cmd->add_option("--occurrence", hcfg.occurrence_threshold, "Occurrence threshold (fraction)")->capture_default_str();
  detect_cmd->add_option("--references", references_path, "Ground-truth JSONL; adds the fidelity report for the first sample set");
  detect_cmd->add_option("--theta", theta, "Consistency tolerance for the fidelity report")->capture_default_str();
  detect_cmd->add_option("--w-r", w_r, "Weight of C_R")->capture_default_str();
  detect_cmd->add_option("--w-f", w_f, "Weight of C_F")->capture_default_str();
  add_embedder_flags(detect_cmd, emb);

  // serve
  auto* serve_cmd = app.add_subcommand("serve", "Start the REST service");
  std::string host = "127.0.0.1", state_dir = "windguard-state", chat_kind = "mock", mock_file, chat_url,
              chat_key_env, config_path, operator_env = "WINDGUARD_OPERATOR_TOKEN",
              manager_env = "WINDGUARD_MANAGER_TOKEN", cors_origin = "*";
  int port = 8080;
  add_common(serve_cmd, false);
  serve_cmd->add_option("--host", host, "Bind address")->capture_default_str();
  serve_cmd->add_option("--port", port, "Port")->capture_default_str();
  serve_cmd->add_option("--state", state_dir, "State directory")->capture_default_str();
  serve_cmd->add_option("--chat", chat_kind, "Chat provider")->check(CLI::IsMember({"mock", "http"}))->capture_default_str();
  serve_cmd->add_option("--mock-file", mock_file, "Mock chat JSONL");
  serve_cmd->add_option("--chat-url", chat_url, "Chat service base URL");
  serve_cmd->add_option("--chat-key-env", chat_key_env, "Env var holding the chat API key");
  serve_cmd->add_option("--dict", dict_path, "Dictionary to seed an empty state directory");
  serve_cmd->add_option("--config", config_path, "Config JSON to seed a fresh state directory");
  serve_cmd->add_option("--operator-token-env", operator_env, "Env var holding the operator token")->capture_default_str();
  serve_cmd->add_option("--manager-token-env", manager_env, "Env var holding the manager token")->capture_default_str();
  serve_cmd->add_option("--cors-origin", cors_origin, "Allowed CORS origin")->capture_default_str();
  add_embedder_flags(serve_cmd, emb);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n\n" << app.help();
    return kExitUsage;
  }

  const fs::path out(out_dir);
  try {
    if (*gen) {
      spec.seed = seed;
      spec.unsafe_per_category = per_category / 2;
      spec.safe_per_category = per_category - per_category / 2;
      const auto synthetic = generate_synthetic_corpus(spec);
      fs::create_directories(out);
      save_corpus(out / "corpus.jsonl", synthetic.corpus);
      save_dictionary(out / "dictionary.jsonl", synthetic.dictionary);
      std::cout << "wrote " << synthetic.corpus.size() << " records and " << synthetic.dictionary.size()
                << " dictionary entries to " << out.string() << "\n";
      return 0;
    }

    auto embedder = make_embedder(emb);

    if (*embed_cache) {
      auto records = load_embedded(embed_in, *embedder);
      const auto target = out / fs::path(embed_in).filename();
      if (fs::exists(target) && fs::equivalent(target, embed_in)) {
        throw ConfigurationError("--out would overwrite the input corpus");
      }
      fs::create_directories(out);
      save_corpus(target, records);
      std::cout << "embedded " << records.size() << " records into " << target.string() << "\n";
      return 0;
    }

    if (*calibrate_cmd) {
      const auto corpus = load_embedded(corpus_path, *embedder);
      const auto dict = load_dict(dict_path, *embedder);
      SweepOptions opts;
      opts.step = step;
      opts.lo = lo;
      opts.hi = hi;
      opts.jobs = jobs;
      const auto metrics = metrics_from_flag(metric_flag);
      const auto report = calibrate(corpus, dict, metrics, opts);
      fs::create_directories(out);
      write_text(out / "calibration.json", dump(to_json(report)));
      write_text(out / "accuracy_table.csv", accuracy_table_csv(report));
      write_text(out / "thresholds.json", dump(to_json(report.thresholds())));
      std::cout << accuracy_table_csv(report);
      for (Metric m : metrics) {
        if (auto auc = report.mean_auc(m)) std::cout << "mean_auc," << to_string(m) << "," << *auc << "\n";
      }
      return 0;
    }

    if (*roc_cmd) {
      const auto corpus = load_embedded(corpus_path, *embedder);
      const auto dict = load_dict(dict_path, *embedder);
      SweepOptions opts;
      opts.step = step;
      opts.jobs = jobs;
      const auto metrics = metrics_from_flag(metric_flag);
      const auto report = calibrate(corpus, dict, metrics, opts);
      nlohmann::json summary = nlohmann::json::object();
      for (Metric m : metrics) {
        const std::string name(to_string(m));
        nlohmann::json ms;
        ms["mean_auc"] = report.mean_auc(m) ? nlohmann::json(*report.mean_auc(m)) : nlohmann::json(nullptr);
        nlohmann::json cats = nlohmann::json::object();
        for (const auto& e : report.entries) {
          if (e.metric != m || !e.roc) continue;
          cats[std::to_string(e.category)] = e.roc->auc;
          write_text(out / "roc" / (name + "_" + std::to_string(e.category) + ".csv"), roc_csv(*e.roc));
        }
        ms["categories"] = std::move(cats);
        const auto pooled = roc_curve(corpus, dict, m, Label::safe);
        ms["pooled_auc"] = pooled.auc;
        write_text(out / "roc" / (name + "_pooled.csv"), roc_csv(pooled));
        summary[name] = std::move(ms);
      }
      write_text(out / "roc_summary.json", dump(summary));
      std::cout << dump(summary);
      return 0;
    }

    if (*filter_cmd) {
      const auto metric = *parse_metric(metric_flag);
      const auto corpus = load_embedded(corpus_path, *embedder);
      const auto dict = load_dict(dict_path, *embedder);
      ThresholdConfig thresholds;
      if (tau) {
        std::vector<int> cats;
        for (const auto& [c, idx] : dict.categories()) cats.push_back(c);
        thresholds.set_all(cats, metric, *tau);
      } else if (!thresholds_path.empty()) {
        thresholds = thresholds_from_json(nlohmann::json::parse(read_file(thresholds_path)));
      } else {
        throw ConfigurationError("filter needs --thresholds or --tau");
      }
      std::string lines;
      std::size_t unsafe = 0, labelled = 0, correct = 0;
      for (const auto& r : corpus) {
        const auto d = classify(*r.embedding, dict, metric, thresholds);
        nlohmann::ordered_json j;
        j["text"] = r.text;
        j["category"] = r.category;
        j["label"] = to_string(r.label);
        j["decision"] = to_json(d);
        lines += j.dump() + "\n";
        if (d.verdict == Verdict::unsafe) ++unsafe;
        if (r.label != Label::unlabeled) {
          ++labelled;
          if ((d.verdict == Verdict::unsafe) == (r.label == Label::unsafe)) ++correct;
        }
      }
      write_text(out / "filter.jsonl", lines);
      nlohmann::ordered_json summary;
      summary["records"] = corpus.size();
      summary["unsafe"] = unsafe;
      summary["labelled"] = labelled;
      summary["accuracy"] = labelled ? nlohmann::json(100.0 * correct / labelled) : nlohmann::json(nullptr);
      std::cout << summary.dump(2) << "\n";
      return 0;
    }

    if (*detect_cmd) {
      hcfg.metric = *parse_metric(metric_flag);
      std::vector<ResponseSampleSet> sets;
      std::ifstream in(samples_path);
      if (!in) throw Error("cannot open " + samples_path);
      std::string line;
      std::size_t line_no = 0;
      ResponseSampleSet loose;
      while (std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty()) continue;
        nlohmann::json j;
        try {
          j = nlohmann::json::parse(line);
        } catch (const nlohmann::json::exception& e) {
          throw ParseError(line_no, e.what());
        }
        if (j.is_object() && j.contains("responses")) {
          ResponseSampleSet set;
          set.prompt = j.value("prompt", std::string{});
          for (const auto& r : j["responses"]) {
            set.responses.push_back(r.is_string() ? SentenceRecord{r.get<std::string>(), 1, Label::unlabeled, std::nullopt}
                                                  : record_from_json(r));
          }
          sets.push_back(std::move(set));
        } else {
          loose.responses.push_back(record_from_json(j));
        }
      }
      if (!loose.responses.empty()) sets.push_back(std::move(loose));
      if (sets.empty()) throw ContractError("no samples in " + samples_path);

      nlohmann::json results = nlohmann::json::array();
      for (auto& set : sets) {
        set.responses = cache_embeddings(std::move(set.responses), *embedder);
        auto cfg = hcfg;
        cfg.samples = set.responses.size();
        auto v = to_json(detect_inconsistency(set, cfg));
        v["prompt"] = set.prompt;
        results.push_back(std::move(v));
      }
      nlohmann::json doc = {{"limiting_threshold", hcfg.limiting_threshold},
                            {"occurrence_threshold", hcfg.occurrence_threshold},
                            {"metric", to_string(hcfg.metric)},
                            {"results", std::move(results)}};
      if (!references_path.empty()) {
        const auto refs = load_embedded(references_path, *embedder);
        std::vector<EmbeddingVector> facts;
        for (const auto& r : refs) facts.push_back(*r.embedding);
        const auto hyps = sets.front().embeddings();
        doc["fidelity"] = to_json(fidelity_report(hyps, facts, hcfg.metric, theta, w_r, w_f));
      }
      write_text(out / "detect.json", dump(doc));
      std::cout << dump(doc);
      return 0;
    }

    if (*serve_cmd) {
      std::unique_ptr<ChatProvider> chat;
      if (chat_kind == "http") {
        if (chat_url.empty()) throw ConfigurationError("--chat-url is required with --chat http");
        chat = std::make_unique<HttpChatProvider>(HttpChatOptions{chat_url, chat_key_env, 60});
      } else if (!mock_file.empty()) {
        chat = MockChatProvider::from_jsonl(mock_file);
      } else {
        chat = std::make_unique<MockChatProvider>(std::vector<std::string>{"No response configured."});
      }
      ServiceOptions so;
      so.state_dir = state_dir;
      if (const char* t = std::getenv(operator_env.c_str())) so.operator_token = t;
      if (const char* t = std::getenv(manager_env.c_str())) so.manager_token = t;
      so.cors_origin = cors_origin;

      Service service(*chat, *embedder, so);
      if (!dict_path.empty() && service.dictionary()->empty()) {
        service.replace_dictionary(load_dict(dict_path, *embedder));
      }
      if (!config_path.empty() && service.config().version == 1) {
        auto patch = nlohmann::json::parse(read_file(config_path));
        service.update_config(patch);
      }
      if (so.operator_token.empty() && so.manager_token.empty()) {
        std::cerr << "warning: no tokens configured; authentication is disabled\n";
      }

      sigset_t signals;
      sigemptyset(&signals);
      sigaddset(&signals, SIGINT);
      sigaddset(&signals, SIGTERM);
      pthread_sigmask(SIG_BLOCK, &signals, nullptr);

      ApiServer server(service);
      const int bound = server.start(host, port);
      std::cout << "listening on " << host << ":" << bound << std::endl;
      int received = 0;
      sigwait(&signals, &received);
      server.stop();
      return 0;
    }
  } catch (const EmbeddingFailure& e) {
    std::cerr << (e.from_provider() ? "provider error: " : "error: ") << e.what() << "\n";
    return e.from_provider() ? kExitProvider : kExitData;
  } catch (const ProviderError& e) {
    std::cerr << "provider error: " << e.what() << "\n";
    return kExitProvider;
  } catch (const ServiceError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitData;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitData;
  }
  return kExitUsage;
}
