#include "graphshield/scorer.hpp"

#include <algorithm>
#include <atomic>
#include <cctype>
#include <charconv>
#include <chrono>
#include <cmath>
#include <fstream>
#include <thread>

#include <httplib.h>
#include <json.hpp>

#include "graphshield/log.hpp"

namespace gshield {

namespace {

using nlohmann::json;

const std::string kSystemPrompt =
    "In the context of graph neural networks, attackers manipulate models by adding irrelevant "
    "edges or removing relevant ones, leading to incorrect predictions. Your role is crucial in "
    "defending against such attacks by evaluating the relevance between pairs of nodes, which "
    "will help in identifying and removing the irrelevant edges to mitigate the impact of "
    "adversarial attacks on graph-based models. Given textual information about two nodes, "
    "analyze the relevance of these two nodes. Provide a concise analysis(approximately 100 "
    "words) and assign an integer relevance score from 1 to 6, where 1 indicates completely "
    "irrelevant and 6 indicates directly relevant. Your response should be formatted in JSON, "
    "with two keys: \"Analysis\" for your written analysis and \"Relevance Score\" for your "
    "numerical evaluation.";

}  // namespace

const std::string& relevance_system_prompt() { return kSystemPrompt; }

RelevancePrompt render_prompt(const std::string& text_i, const std::string& text_j) {
  RelevancePrompt prompt;
  prompt.system = kSystemPrompt;
  prompt.user = "Node v1→{" + text_i + "}.\n\nNode v2→{" + text_j + "}.";
  return prompt;
}

namespace {

// Returns one past the end of the balanced JSON object starting at `start`
// (which must index a '{'), or npos when the braces never balance.
std::size_t balanced_object_end(const std::string& s, std::size_t start) {
  int depth = 0;
  bool in_string = false;
  bool escaped = false;
  for (std::size_t i = start; i < s.size(); ++i) {
    const char c = s[i];
    if (in_string) {
      if (escaped) {
        escaped = false;
      } else if (c == '\\') {
        escaped = true;
      } else if (c == '"') {
        in_string = false;
      }
      continue;
    }
    if (c == '"') {
      in_string = true;
    } else if (c == '{') {
      ++depth;
    } else if (c == '}') {
      if (--depth == 0) return i + 1;
    }
  }
  return std::string::npos;
}

std::int32_t extract_score(const json& value) {
  if (value.is_number_integer() || value.is_number_unsigned()) {
    return value.get<std::int32_t>();
  }
  if (value.is_number_float()) {
    const double d = value.get<double>();
    if (d == std::trunc(d)) return static_cast<std::int32_t>(d);
    throw ParseError("relevance score is not an integer");
  }
  if (value.is_string()) {
    const std::string s = value.get<std::string>();
    std::size_t a = 0, b = s.size();
    while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
    while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
    std::int32_t out = 0;
    auto [p, ec] = std::from_chars(s.data() + a, s.data() + b, out);
    if (ec == std::errc() && p == s.data() + b && b > a) return out;
    throw ParseError("relevance score string \"" + s + "\" is not an integer");
  }
  throw ParseError("relevance score has unsupported JSON type");
}

}  // namespace

RelevanceJudgment parse_judgment(const std::string& raw) {
  std::size_t pos = raw.find('{');
  json obj;
  bool found = false;
  while (pos != std::string::npos) {
    const std::size_t end = balanced_object_end(raw, pos);
    if (end == std::string::npos) break;
    const auto candidate = raw.substr(pos, end - pos);
    obj = json::parse(candidate, nullptr, false);
    if (!obj.is_discarded()) {
      found = true;
      break;
    }
    pos = raw.find('{', pos + 1);
  }
  if (!found || !obj.is_object()) throw ParseError("no JSON object found in response");
  if (!obj.contains("Analysis")) throw ParseError("response is missing \"Analysis\"");
  if (!obj.contains("Relevance Score")) throw ParseError("response is missing \"Relevance Score\"");
  if (!obj.at("Analysis").is_string()) throw ParseError("\"Analysis\" is not a string");
  const std::int32_t score = extract_score(obj.at("Relevance Score"));
  if (score < 1 || score > 6) {
    throw ParseError("relevance score " + std::to_string(score) + " out of range 1..6");
  }
  RelevanceJudgment judgment;
  judgment.score = score;
  judgment.analysis = obj.at("Analysis").get<std::string>();
  judgment.raw = raw;
  return judgment;
}

std::string canonical_judgment_json(const RelevanceJudgment& judgment) {
  if (!judgment.score) throw ValidationError("cannot render an unscored judgment");
  return json{{"Analysis", judgment.analysis}, {"Relevance Score", *judgment.score}}.dump();
}

ScoreCache ScoreCache::load(const std::filesystem::path& path) {
  ScoreCache cache;
  std::ifstream in(path);
  if (!in) return cache;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    json j;
    try {
      j = json::parse(line);
      RelevanceJudgment judgment;
      judgment.pair = make_edge(j.at("i").get<std::int32_t>(), j.at("j").get<std::int32_t>());
      judgment.score = j.at("score").get<std::int32_t>();
      judgment.analysis = j.at("analysis").get<std::string>();
      judgment.source = j.at("source").get<std::string>();
      if (*judgment.score < 1 || *judgment.score > 6) {
        throw ParseError("score out of range");
      }
      cache.entries_.emplace(judgment.pair, std::move(judgment));
    } catch (const json::exception& e) {
      throw ParseError(path.string() + ":" + std::to_string(line_no) + ": bad cache line: " +
                       e.what());
    }
  }
  return cache;
}

void ScoreCache::save(const std::filesystem::path& path) const {
  std::lock_guard lock(mu_);
  std::ofstream out(path);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  for (const auto& [pair, judgment] : entries_) {
    out << json{{"i", pair.u},
                {"j", pair.v},
                {"score", *judgment.score},
                {"analysis", judgment.analysis},
                {"source", judgment.source}}
               .dump()
        << '\n';
  }
  if (!out) throw IoError("failed writing " + path.string());
}

bool ScoreCache::insert(const RelevanceJudgment& judgment) {
  if (!judgment.score) return false;
  std::lock_guard lock(mu_);
  return entries_.emplace(judgment.pair, judgment).second;
}

std::optional<RelevanceJudgment> ScoreCache::find(Edge pair) const {
  std::lock_guard lock(mu_);
  auto it = entries_.find(pair);
  if (it == entries_.end()) return std::nullopt;
  return it->second;
}

std::size_t ScoreCache::size() const {
  std::lock_guard lock(mu_);
  return entries_.size();
}

void ScoreCache::bind_graph(const std::string& graph_id) {
  std::lock_guard lock(mu_);
  if (graph_id_.empty()) {
    graph_id_ = graph_id;
    return;
  }
  if (graph_id_ != graph_id) {
    throw ValidationError("score cache is bound to graph " + graph_id_ +
                          " but was queried for graph " + graph_id);
  }
}

RelevanceJudgment heuristic_score(const EmbeddingMatrix& emb, Edge pair) {
  if (pair.v >= emb.node_count()) {
    throw ValidationError("pair " + to_string(pair) + " outside embedding rows");
  }
  const double c = cosine_similarity(emb.values.row(pair.u).transpose(),
                                     emb.values.row(pair.v).transpose());
  std::int32_t score = 6;
  if (c < 0.05) {
    score = 1;
  } else if (c < 0.15) {
    score = 2;
  } else if (c < 0.30) {
    score = 3;
  } else if (c < 0.55) {
    score = 4;
  } else if (c < 0.80) {
    score = 5;
  }
  RelevanceJudgment judgment;
  judgment.pair = pair;
  judgment.score = score;
  judgment.analysis = "heuristic cosine bin";
  judgment.source = "heuristic";
  judgment.raw = canonical_judgment_json(judgment);
  return judgment;
}

namespace {

// base_url -> (scheme://host[:port], path prefix)
std::pair<std::string, std::string> split_base_url(const std::string& base_url) {
  const auto scheme_end = base_url.find("://");
  if (scheme_end == std::string::npos) {
    throw ValidationError("base_url \"" + base_url + "\" must start with http:// or https://");
  }
  const std::string scheme = base_url.substr(0, scheme_end);
  if (scheme != "http" && scheme != "https") {
    throw ValidationError("unsupported scheme \"" + scheme + "\" in base_url");
  }
  const auto path_start = base_url.find('/', scheme_end + 3);
  if (path_start == std::string::npos) return {base_url, ""};
  std::string prefix = base_url.substr(path_start);
  while (!prefix.empty() && prefix.back() == '/') prefix.pop_back();
  return {base_url.substr(0, path_start), prefix};
}

}  // namespace

RemoteScorer::RemoteScorer(RemoteScorerConfig config) : config_(std::move(config)) {
  std::tie(origin_, path_prefix_) = split_base_url(config_.base_url);
}

RelevanceJudgment RemoteScorer::score(const std::string& text_i, const std::string& text_j,
                                      Edge pair) {
  const RelevancePrompt prompt = render_prompt(text_i, text_j);
  const std::string body = json{{"model", config_.model},
                                {"temperature", 0},
                                {"messages",
                                 {{{"role", "system"}, {"content", prompt.system}},
                                  {{"role", "user"}, {"content", prompt.user}}}}}
                               .dump();
  const std::string path = path_prefix_ + "/v1/chat/completions";

  std::string last_content;
  for (std::int32_t attempt = 0; attempt < config_.retry.max_attempts; ++attempt) {
    if (attempt > 0) {
      const auto idx = static_cast<std::size_t>(attempt - 1);
      const std::int32_t delay = idx < config_.retry.backoff_ms.size()
                                     ? config_.retry.backoff_ms[idx]
                                     : config_.retry.backoff_ms.empty()
                                           ? 0
                                           : config_.retry.backoff_ms.back();
      if (delay > 0) std::this_thread::sleep_for(std::chrono::milliseconds(delay));
    }
    httplib::Client client(origin_);
    client.set_connection_timeout(std::chrono::milliseconds(
        static_cast<std::int64_t>(config_.timeout_s * 1000)));
    client.set_read_timeout(
        std::chrono::milliseconds(static_cast<std::int64_t>(config_.timeout_s * 1000)));
    httplib::Headers headers;
    if (!config_.api_key.empty()) {
      headers.emplace("Authorization", "Bearer " + config_.api_key);
    }
    auto res = client.Post(path, headers, body, "application/json");
    if (!res) continue;  // transport error, retry
    if (res->status == 401 || res->status == 403) {
      throw RemoteError("remote scorer rejected credentials (HTTP " +
                        std::to_string(res->status) + ")");
    }
    if (res->status == 429 || res->status >= 500) continue;
    if (res->status != 200) break;  // other 4xx will not improve on retry
    try {
      const json reply = json::parse(res->body);
      last_content = reply.at("choices").at(0).at("message").at("content").get<std::string>();
      RelevanceJudgment judgment = parse_judgment(last_content);
      if (judgment.analysis.empty()) throw ParseError("empty analysis");
      judgment.pair = pair;
      judgment.source = "remote";
      return judgment;
    } catch (const json::exception&) {
      continue;
    } catch (const ParseError&) {
      continue;
    }
  }
  RelevanceJudgment failed;
  failed.pair = pair;
  failed.source = "failed";
  failed.raw = last_content;
  return failed;
}

std::vector<RelevanceJudgment> score_edges(const TextAttributedGraph& graph,
                                           const std::vector<Edge>& pairs, ScorerBackend* backend,
                                           ScoreCache& cache, std::int32_t max_in_flight) {
  cache.bind_graph(graph.text_fingerprint());
  validate_edges_in_range(EdgeSet(pairs.begin(), pairs.end()), graph.node_count());

  std::vector<RelevanceJudgment> results(pairs.size());
  std::vector<char> resolved(pairs.size(), 0);
  std::vector<Edge> misses;  // unique, first-appearance order
  EdgeSet miss_set;
  for (std::size_t idx = 0; idx < pairs.size(); ++idx) {
    if (auto hit = cache.find(pairs[idx])) {
      results[idx] = *hit;
      resolved[idx] = 1;
    } else if (miss_set.insert(pairs[idx]).second) {
      misses.push_back(pairs[idx]);
    }
  }
  if (misses.empty()) return results;

  if (backend == nullptr) {
    std::vector<Edge> missing(miss_set.begin(), miss_set.end());
    std::string msg = "replay cache is missing " + std::to_string(missing.size()) + " pair(s):";
    const std::size_t shown = std::min<std::size_t>(missing.size(), 8);
    for (std::size_t k = 0; k < shown; ++k) msg += " " + to_string(missing[k]);
    if (missing.size() > shown) msg += " ...";
    throw ReplayMissError(std::move(msg), std::move(missing));
  }

  std::vector<RelevanceJudgment> fresh(misses.size());
  auto score_one = [&](std::size_t k) {
    const Edge e = misses[k];
    fresh[k] = backend->score(graph.text(e.u), graph.text(e.v), e);
    fresh[k].pair = e;
  };
  const auto workers = std::min<std::size_t>(
      static_cast<std::size_t>(std::max<std::int32_t>(max_in_flight, 1)), misses.size());
  if (backend->concurrent() && workers > 1) {
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    std::exception_ptr failure;
    std::mutex failure_mu;
    pool.reserve(workers);
    for (std::size_t w = 0; w < workers; ++w) {
      pool.emplace_back([&] {
        for (;;) {
          const std::size_t k = next.fetch_add(1);
          if (k >= misses.size()) return;
          try {
            score_one(k);
          } catch (...) {
            std::lock_guard lock(failure_mu);
            if (!failure) failure = std::current_exception();
            return;
          }
        }
      });
    }
    for (auto& t : pool) t.join();
    if (failure) std::rethrow_exception(failure);
  } else {
    for (std::size_t k = 0; k < misses.size(); ++k) score_one(k);
  }

  std::map<Edge, const RelevanceJudgment*> by_pair;
  std::size_t failed = 0;
  for (std::size_t k = 0; k < misses.size(); ++k) {
    cache.insert(fresh[k]);
    if (!fresh[k].scored()) ++failed;
    by_pair.emplace(misses[k], &fresh[k]);
  }
  if (failed > 0) {
    log_warn(std::to_string(failed) + " of " + std::to_string(misses.size()) +
             " pairs could not be scored; failing open (edges preserved)");
  }
  for (std::size_t idx = 0; idx < pairs.size(); ++idx) {
    if (!resolved[idx]) results[idx] = *by_pair.at(pairs[idx]);
  }
  return results;
}

}  // namespace gshield
