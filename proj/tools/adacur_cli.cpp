// Command-line front end: build indexes, run single searches, execute
// benchmark plans. Exit codes: 0 success, 1 runtime/transport failure,
// 2 usage or configuration error.

#include <CLI11.hpp>

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>

#include <nlohmann/json.hpp>

#include "adacur/errors.hpp"
#include "adacur/eval.hpp"
#include "adacur/index.hpp"
#include "adacur/plan.hpp"
#include "adacur/retrievers.hpp"
#include "adacur/search.hpp"

namespace {

using namespace adacur;

struct ScorerFlags {
  double latency_ms = 0.0;
  int remote_timeout_ms = 5000;
  int remote_retries = 2;
};

void add_scorer_flags(CLI::App* cmd, ScorerFlags& flags) {
  cmd->add_option("--scorer-latency-ms", flags.latency_ms,
                  "Simulated per-call scorer latency (accounted, not slept)");
  cmd->add_option("--remote-timeout-ms", flags.remote_timeout_ms,
                  "Remote scorer request timeout");
  cmd->add_option("--remote-retries", flags.remote_retries,
                  "Remote scorer retry count");
}

std::shared_ptr<Scorer> scorer_from_flags(const std::string& spec,
                                          const ScorerFlags& flags) {
  auto scorer =
      make_scorer_from_spec(spec, flags.remote_timeout_ms, flags.remote_retries);
  scorer->latency.per_call_ms = flags.latency_ms;
  return scorer;
}

std::vector<std::string> read_id_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open id file " + path);
  std::vector<std::string> ids;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty()) ids.push_back(line);
  }
  return ids;
}

int cmd_index(const std::string& corpus_spec, const std::string& scorer_spec,
              const std::string& queries_file, const std::string& items_file,
              const std::string& out_path, const ScorerFlags& flags) {
  std::shared_ptr<Scorer> scorer;
  std::vector<QueryId> queries;
  std::vector<ItemId> items;
  if (!corpus_spec.empty()) {
    BenchmarkCorpus corpus = make_benchmark_corpus(corpus_spec);
    queries = corpus.train_queries;
    items = corpus.items;
    scorer = corpus.make_scorer();
    scorer->latency.per_call_ms = flags.latency_ms;
  } else {
    if (scorer_spec.empty() || queries_file.empty() || items_file.empty()) {
      throw ConfigError("index: need --corpus, or --scorer with --queries and --items");
    }
    scorer = scorer_from_flags(scorer_spec, flags);
    queries = read_id_file(queries_file);
    items = read_id_file(items_file);
  }

  BuildStats stats;
  CurIndex index = build_index(*scorer, queries, items, &stats);
  save_index(index, out_path);
  std::printf("k_q=%zu items=%zu calls=%llu build_ms=%.1f fingerprint=%s wrote %s\n",
              index.num_train_queries(), index.num_items(),
              static_cast<unsigned long long>(stats.scorer_calls), stats.wall_ms,
              index.scorer_fingerprint.c_str(), out_path.c_str());
  return 0;
}

int cmd_search(const std::string& index_path, const std::string& scorer_spec,
               const QueryId& query, std::uint64_t budget, std::uint32_t rounds,
               const std::string& strategy, const std::string& init, std::size_t k,
               std::uint64_t pool, std::uint64_t seed, bool no_timing,
               const ScorerFlags& flags) {
  CurIndex index = load_index(index_path);
  auto scorer = scorer_from_flags(scorer_spec, flags);
  if (scorer->fingerprint() != index.scorer_fingerprint) {
    std::fprintf(stderr, "warning: scorer fingerprint %s != index fingerprint %s\n",
                 scorer->fingerprint().c_str(), index.scorer_fingerprint.c_str());
  }

  SearchConfig cfg;
  cfg.budget = budget;
  cfg.rounds = rounds;
  cfg.strategy = strategy_from_string(strategy);
  cfg.k = k;
  cfg.seed = seed;
  if (pool > 0) cfg.candidate_pool = pool;

  // A retriever is only available when the scorer spec regenerates a
  // corpus with embedding tables.
  std::unique_ptr<EmbeddingRetriever> retriever;
  if (init == "retriever" || pool > 0) {
    const bool generative = scorer_spec.rfind("synth:", 0) == 0 ||
                            scorer_spec.rfind("clustered:", 0) == 0;
    if (!generative) {
      throw ConfigError(
          "search: --init retriever / --pool need a synth: or clustered: scorer");
    }
    BenchmarkCorpus corpus = make_benchmark_corpus(scorer_spec);
    retriever = std::make_unique<EmbeddingRetriever>(
        corpus.item_embeddings, corpus.items, corpus.query_embeddings,
        corpus.all_queries());
    cfg.retriever = retriever.get();
    if (init == "retriever") cfg.init = InitMethod::kRetriever;
  } else if (init != "random") {
    throw ConfigError("search: --init must be random|retriever");
  }

  SearchResult result = adacur_search(query, index, *scorer, cfg);

  nlohmann::json out;
  out["query"] = query;
  out["budget"] = budget;
  out["rounds"] = rounds;
  out["strategy"] = strategy;
  out["init"] = init;
  out["k"] = k;
  out["seed"] = seed;
  out["calls_used"] = result.calls_used;
  out["top_k"] = nlohmann::json::array();
  for (const auto& [id, score] : result.top_k) {
    out["top_k"].push_back({{"item", id}, {"score", score}});
  }
  if (!no_timing) {
    out["timing"] = {{"scorer_ms", result.timing.scorer_ms},
                     {"pinv_ms", result.timing.pinv_ms},
                     {"matmul_ms", result.timing.matmul_ms},
                     {"other_ms", result.timing.other_ms}};
  }
  std::cout << out.dump(2) << "\n";
  return 0;
}

int cmd_bench(const std::string& plan_path, const std::string& out_csv,
              const std::string& out_json, bool no_timing, int threads) {
  ExperimentPlan plan = parse_plan_file(plan_path);
  if (!out_csv.empty()) plan.out_csv = out_csv;
  if (!out_json.empty()) plan.out_json = out_json;
  if (no_timing) plan.include_timing = false;
  if (threads > 0) plan.threads = threads;
  plan.validate();

  BenchReport report = run_benchmark(plan);
  std::fprintf(stderr, "bench: %zu grid summaries, %zu rows\n",
               report.summaries.size(), report.rows.size());
  for (const auto& s : report.summaries) {
    std::fprintf(stderr, "  %-14s budget=%llu k=%zu mean_recall=%.4f\n",
                 s.grid.method.c_str(),
                 static_cast<unsigned long long>(s.grid.budget), s.k, s.mean_recall);
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Budget-aware k-NN search for expensive black-box scorers"};
  app.require_subcommand(1);

  // index
  auto* index_cmd = app.add_subcommand("index", "Build and save an offline index");
  std::string corpus_spec, scorer_spec, queries_file, items_file, out_path;
  ScorerFlags index_flags;
  index_cmd->add_option("--corpus", corpus_spec, "Corpus spec (synth:...|clustered:...)");
  index_cmd->add_option("--scorer", scorer_spec, "Scorer spec (matrix:|synth:|clustered:|remote:)");
  index_cmd->add_option("--queries", queries_file, "Train query id file (one per line)");
  index_cmd->add_option("--items", items_file, "Item id file (one per line)");
  index_cmd->add_option("--out", out_path, "Output index path")->required();
  add_scorer_flags(index_cmd, index_flags);

  // search
  auto* search_cmd = app.add_subcommand("search", "Run one adaptive search");
  std::string s_index, s_scorer, s_query, s_strategy = "topk", s_init = "random";
  std::uint64_t s_budget = 100, s_pool = 0, s_seed = 0;
  std::uint32_t s_rounds = 5;
  std::size_t s_k = 10;
  bool s_no_timing = false;
  ScorerFlags search_flags;
  search_cmd->add_option("--index", s_index, "Index file")->required();
  search_cmd->add_option("--scorer", s_scorer, "Scorer spec")->required();
  search_cmd->add_option("--query", s_query, "Query id")->required();
  search_cmd->add_option("--budget", s_budget, "Scorer call budget");
  search_cmd->add_option("--rounds", s_rounds, "Number of search rounds");
  search_cmd->add_option("--strategy", s_strategy, "topk|softmax|random");
  search_cmd->add_option("--init", s_init, "random|retriever");
  search_cmd->add_option("--k", s_k, "Neighbors to return");
  search_cmd->add_option("--pool", s_pool, "Restrict search to retriever top-n");
  search_cmd->add_option("--seed", s_seed, "Random seed");
  search_cmd->add_flag("--no-timing", s_no_timing, "Omit timing from output");
  add_scorer_flags(search_cmd, search_flags);

  // bench
  auto* bench_cmd = app.add_subcommand("bench", "Run an experiment plan");
  std::string b_plan, b_csv, b_json;
  bool b_no_timing = false;
  int b_threads = 0;
  bench_cmd->add_option("--plan", b_plan, "Plan file (JSON)")->required();
  bench_cmd->add_option("--out", b_csv, "CSV output path (overrides plan)");
  bench_cmd->add_option("--out-json", b_json, "JSON summary path (overrides plan)");
  bench_cmd->add_flag("--no-timing", b_no_timing, "Drop timing columns");
  bench_cmd->add_option("--threads", b_threads, "Worker threads (overrides plan)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (index_cmd->parsed()) {
      return cmd_index(corpus_spec, scorer_spec, queries_file, items_file, out_path,
                       index_flags);
    }
    if (search_cmd->parsed()) {
      return cmd_search(s_index, s_scorer, s_query, s_budget, s_rounds, s_strategy,
                        s_init, s_k, s_pool, s_seed, s_no_timing, search_flags);
    }
    if (bench_cmd->parsed()) {
      return cmd_bench(b_plan, b_csv, b_json, b_no_timing, b_threads);
    }
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  } catch (const std::invalid_argument& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 2;
}
