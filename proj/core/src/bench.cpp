#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <map>
#include <sstream>
#include <thread>

#include <nlohmann/json.hpp>

#include "adacur/errors.hpp"
#include "adacur/eval.hpp"
#include "adacur/retrievers.hpp"
#include "adacur/rng.hpp"

namespace adacur {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

void parallel_for(std::size_t n, int threads, const std::function<void(std::size_t)>& fn) {
  if (threads <= 1 || n <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  const int workers = std::min<int>(threads, static_cast<int>(n));
  std::vector<std::thread> pool;
  pool.reserve(static_cast<std::size_t>(workers));
  for (int w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      for (std::size_t i = static_cast<std::size_t>(w); i < n;
           i += static_cast<std::size_t>(workers)) {
        fn(i);
      }
    });
  }
  for (auto& t : pool) t.join();
}

std::vector<std::size_t> sweep_splits(std::uint64_t budget) {
  std::vector<std::size_t> out;
  for (std::size_t i = 1; i <= 9; ++i) {
    out.push_back(static_cast<std::size_t>(i * budget / 10));
  }
  return out;
}

struct Materialized {
  std::optional<BenchmarkCorpus> corpus;
  CurIndex index;
  std::shared_ptr<Scorer> scorer;
  std::vector<QueryId> test_queries;
  std::vector<DenseVector> truth_rows;  // aligned with test_queries
  std::unique_ptr<EmbeddingRetriever> embedding_retriever;
  std::string source_label;
};

Materialized materialize(const ExperimentPlan& plan) {
  Materialized m;
  if (!plan.corpus_spec.empty()) {
    m.corpus = make_benchmark_corpus(plan.corpus_spec);
    m.source_label = m.corpus->spec_string;
    m.scorer = m.corpus->make_scorer();
    m.index = build_index(*m.scorer, m.corpus->train_queries, m.corpus->items);
    m.test_queries = m.corpus->test_queries;
    if (plan.num_test_queries > 0 && plan.num_test_queries < m.test_queries.size()) {
      m.test_queries.resize(plan.num_test_queries);
    }
    m.truth_rows.reserve(m.test_queries.size());
    for (const auto& q : m.test_queries) {
      m.truth_rows.push_back(m.corpus->exact_scores(q));
    }
    if (!m.corpus->item_embeddings.empty()) {
      m.embedding_retriever = std::make_unique<EmbeddingRetriever>(
          m.corpus->item_embeddings, m.corpus->items, m.corpus->query_embeddings,
          m.corpus->all_queries());
    }
  } else {
    m.index = load_index(plan.index_path);
    m.source_label = plan.index_path;
    m.scorer = make_scorer_from_spec(plan.scorer_spec);
    m.test_queries = plan.test_query_ids;
    // Ground truth by offline brute force; real calls for a remote scorer,
    // but never charged to any per-query budget.
    m.truth_rows.reserve(m.test_queries.size());
    auto* mat = dynamic_cast<MatrixScorer*>(m.scorer.get());
    for (const auto& q : m.test_queries) {
      if (mat != nullptr) {
        m.truth_rows.push_back(mat->exact_row(q));
      } else {
        m.truth_rows.push_back(
            DenseVector(m.scorer->score_batch(q, m.index.item_ids)));
      }
    }
  }
  m.scorer->latency.per_call_ms = plan.scorer_latency_ms;
  return m;
}

std::vector<GridPoint> expand_grid(const ExperimentPlan& plan) {
  std::vector<GridPoint> grid;
  for (const auto& method : plan.methods) {
    if (method.name == "adacur") {
      for (auto budget : method.budgets) {
        for (auto rounds : method.rounds) {
          for (auto strategy : method.strategies) {
            GridPoint gp;
            gp.method = "adacur";
            gp.budget = budget;
            gp.rounds = rounds;
            gp.strategy = to_string(strategy);
            gp.init = method.init;
            gp.pool = method.pool;
            grid.push_back(std::move(gp));
          }
        }
      }
    } else if (method.name == "anncur") {
      for (auto budget : method.budgets) {
        const auto splits = method.splits.empty() ? sweep_splits(budget) : method.splits;
        for (auto split : splits) {
          GridPoint gp;
          gp.method = "anncur";
          gp.budget = budget;
          gp.init = method.init;
          gp.split_ki = split;
          gp.pool = method.pool;
          grid.push_back(std::move(gp));
        }
      }
    } else if (method.name == "rerank") {
      for (auto budget : method.budgets) {
        GridPoint gp;
        gp.method = "rerank";
        gp.budget = budget;
        gp.init = method.init;
        grid.push_back(std::move(gp));
      }
    } else if (method.name == "oracle_topk" || method.name == "oracle_softmax") {
      for (auto budget : method.budgets) {
        const auto splits = method.splits.empty() ? sweep_splits(budget) : method.splits;
        for (auto split : splits) {
          GridPoint gp;
          gp.method = method.name;
          gp.budget = budget;
          gp.split_ki = split;
          gp.k_m = method.k_m;
          gp.eps = method.eps;
          char buf[48];
          std::snprintf(buf, sizeof(buf), "km=%zu;eps=%.2f", method.k_m, method.eps);
          gp.strategy = buf;
          grid.push_back(std::move(gp));
        }
      }
    } else {
      throw ConfigError("plan: unknown method '" + method.name + "'");
    }
  }
  return grid;
}

FirstStageRetriever* pick_retriever(const GridPoint& gp, const Materialized& m,
                                    std::unique_ptr<RandomRetriever>& random_holder,
                                    std::uint64_t plan_seed) {
  const bool needs_retriever =
      gp.method == "rerank" || gp.init == "embedding" || gp.pool.has_value();
  if (!needs_retriever) return nullptr;
  if (gp.init == "embedding" || gp.pool.has_value()) {
    if (m.embedding_retriever == nullptr) {
      throw ConfigError("plan: method '" + gp.method +
                        "' needs embeddings the corpus does not provide");
    }
    return m.embedding_retriever.get();
  }
  random_holder = std::make_unique<RandomRetriever>(
      m.index.item_ids, derive_seed(plan_seed, gp.tag() + "|retriever"));
  return random_holder.get();
}

SearchResult run_grid_point(const GridPoint& gp, const QueryId& query,
                            const Materialized& m, FirstStageRetriever* retriever,
                            const DenseVector& truth_row, std::size_t k_max,
                            std::uint64_t plan_seed) {
  const std::uint64_t seed = derive_seed(plan_seed, gp.tag());
  if (gp.method == "adacur") {
    SearchConfig cfg;
    cfg.budget = gp.budget;
    cfg.rounds = gp.rounds;
    cfg.strategy = strategy_from_string(gp.strategy);
    cfg.init = gp.init == "embedding" ? InitMethod::kRetriever
                                      : InitMethod::kUniformRandom;
    cfg.retriever = retriever;
    cfg.k = k_max;
    cfg.candidate_pool = gp.pool;
    cfg.seed = seed;
    return adacur_search(query, m.index, *m.scorer, cfg);
  }
  if (gp.method == "anncur") {
    AnncurConfig cfg;
    cfg.budget = gp.budget;
    cfg.num_anchors = gp.split_ki;
    cfg.anchor_source = gp.init == "embedding" ? InitMethod::kRetriever
                                               : InitMethod::kUniformRandom;
    cfg.retriever = retriever;
    cfg.k = k_max;
    cfg.candidate_pool = gp.pool;
    cfg.seed = seed;
    return anncur_search(query, m.index, *m.scorer, cfg);
  }
  if (gp.method == "rerank") {
    return rerank_retrieve(query, *m.scorer, *retriever, gp.budget, k_max);
  }
  OracleConfig cfg;
  cfg.mode = gp.method == "oracle_topk" ? OracleMode::kTopK : OracleMode::kSoftMax;
  cfg.k_m = gp.k_m;
  cfg.eps = gp.eps;
  cfg.num_anchors = gp.split_ki;
  cfg.budget = gp.budget;
  cfg.k = k_max;
  cfg.seed = seed;
  return oracle_cur_search(query, m.index, truth_row, cfg);
}

std::string fmt(double v, const char* spec) {
  if (std::isnan(v)) return "";
  char buf[64];
  std::snprintf(buf, sizeof(buf), spec, v);
  return buf;
}

}  // namespace

void ExperimentPlan::validate() const {
  const bool corpus_mode = !corpus_spec.empty();
  const bool index_mode = !index_path.empty() || !scorer_spec.empty();
  if (corpus_mode == index_mode) {
    throw ConfigError("plan: specify either a corpus or an index + scorer");
  }
  if (index_mode) {
    if (index_path.empty() || scorer_spec.empty()) {
      throw ConfigError("plan: index mode needs both index and scorer");
    }
    if (test_query_ids.empty()) {
      throw ConfigError("plan: index mode needs explicit test_query_ids");
    }
  }
  if (methods.empty()) throw ConfigError("plan: empty method list");
  if (ks.empty()) throw ConfigError("plan: empty k list");
  for (std::size_t i = 0; i < ks.size(); ++i) {
    if (ks[i] < 1) throw ConfigError("plan: k values must be >= 1");
    if (i > 0 && ks[i] <= ks[i - 1]) {
      throw ConfigError("plan: k values must be strictly ascending");
    }
  }
  if (threads < 1) throw ConfigError("plan: threads must be >= 1");
  if (!(scorer_latency_ms >= 0.0)) {
    throw ConfigError("plan: scorer latency must be >= 0");
  }
  const std::size_t k_max = ks.back();
  for (const auto& method : methods) {
    if (method.budgets.empty()) {
      throw ConfigError("plan: method '" + method.name + "' has no budgets");
    }
    if (method.init != "random" && method.init != "embedding") {
      throw ConfigError("plan: init must be random|embedding");
    }
    if (!(method.eps >= 0.0 && method.eps <= 1.0)) {
      throw ConfigError("plan: eps must be in [0, 1]");
    }
    for (auto budget : method.budgets) {
      if (k_max > budget) {
        throw ConfigError("plan: k exceeds budget for method '" + method.name + "'");
      }
      if (method.name == "adacur") {
        if (method.rounds.empty() || method.strategies.empty()) {
          throw ConfigError("plan: adacur needs rounds and strategies");
        }
        for (auto r : method.rounds) {
          if (r < 1 || r > budget) {
            throw ConfigError("plan: adacur rounds must be in [1, budget]");
          }
        }
      }
      if (method.name == "anncur" || method.name == "oracle_topk" ||
          method.name == "oracle_softmax") {
        for (auto split : method.splits) {
          if (split < 1 || split >= budget) {
            throw ConfigError("plan: split k_i must satisfy 1 <= k_i < budget");
          }
        }
        if (method.splits.empty() && budget < 10) {
          throw ConfigError("plan: split sweep needs budget >= 10");
        }
      }
    }
  }
}

std::string GridPoint::tag() const {
  std::ostringstream os;
  os << method << "|b=" << budget << "|r=" << rounds << "|s=" << strategy
     << "|i=" << init << "|ki=" << split_ki << "|km=" << k_m << "|eps=" << eps
     << "|pool=" << (pool.has_value() ? std::to_string(*pool) : "none");
  return os.str();
}

std::string BenchReport::to_csv(bool include_timing) const {
  std::ostringstream os;
  os << "query_id,method,budget,rounds,strategy,init,split_ki,k,recall,"
        "approx_err_all,approx_err_topk,calls_used";
  if (include_timing) os << ",scorer_ms,pinv_ms,matmul_ms,other_ms";
  os << "\n";
  for (const auto& row : rows) {
    os << row.query << ',' << row.grid.method << ',' << row.grid.budget << ','
       << (row.grid.rounds > 0 ? std::to_string(row.grid.rounds) : "") << ','
       << row.grid.strategy << ',' << row.grid.init << ','
       << (row.grid.split_ki > 0 ? std::to_string(row.grid.split_ki) : "") << ','
       << row.k << ',' << fmt(row.recall, "%.6f") << ','
       << fmt(row.approx_err_all, "%.9g") << ',' << fmt(row.approx_err_topk, "%.9g")
       << ',' << row.calls_used;
    if (include_timing) {
      os << ',' << fmt(row.timing.scorer_ms, "%.3f") << ','
         << fmt(row.timing.pinv_ms, "%.3f") << ',' << fmt(row.timing.matmul_ms, "%.3f")
         << ',' << fmt(row.timing.other_ms, "%.3f");
    }
    os << "\n";
  }
  return os.str();
}

std::string BenchReport::to_json_string(bool include_timing) const {
  nlohmann::json doc;
  doc["grid"] = nlohmann::json::array();
  for (const auto& s : summaries) {
    nlohmann::json g;
    g["method"] = s.grid.method;
    g["budget"] = s.grid.budget;
    g["rounds"] = s.grid.rounds;
    g["strategy"] = s.grid.strategy;
    g["init"] = s.grid.init;
    g["split_ki"] = s.grid.split_ki;
    if (s.grid.pool.has_value()) g["pool"] = *s.grid.pool;
    g["k_m"] = s.grid.k_m;
    g["eps"] = s.grid.eps;
    g["k"] = s.k;
    g["count"] = s.count;
    g["mean_recall"] = s.mean_recall;
    g["std_recall"] = s.std_recall;
    g["mean_approx_err_all"] = s.mean_approx_err_all;
    g["mean_approx_err_topk"] = s.mean_approx_err_topk;
    g["mean_calls"] = s.mean_calls;
    if (include_timing) {
      g["timing"] = {
          {"sum",
           {{"scorer_ms", s.timing.sum.scorer_ms},
            {"pinv_ms", s.timing.sum.pinv_ms},
            {"matmul_ms", s.timing.sum.matmul_ms},
            {"other_ms", s.timing.sum.other_ms}}},
          {"median",
           {{"scorer_ms", s.timing.median.scorer_ms},
            {"pinv_ms", s.timing.median.pinv_ms},
            {"matmul_ms", s.timing.median.matmul_ms},
            {"other_ms", s.timing.median.other_ms}}},
          {"overhead_fraction", s.timing.overhead_fraction}};
    }
    doc["grid"].push_back(std::move(g));
  }
  doc["best_splits"] = nlohmann::json::array();
  for (const auto& b : best_splits) {
    doc["best_splits"].push_back({{"method", b.method},
                                  {"budget", b.budget},
                                  {"init", b.init},
                                  {"k", b.k},
                                  {"split_ki", b.split_ki},
                                  {"mean_recall", b.mean_recall}});
  }
  return doc.dump(2);
}

BenchReport run_benchmark(const ExperimentPlan& plan) {
  plan.validate();
  Materialized m = materialize(plan);
  if (m.test_queries.empty()) {
    throw ConfigError("plan: no test queries to evaluate");
  }
  const std::vector<GridPoint> grid = expand_grid(plan);
  const std::size_t k_max = plan.ks.back();
  if (k_max > m.index.num_items()) {
    throw ConfigError("plan: k exceeds corpus size");
  }

  // Ground-truth exact top-k per query, computed once at the largest k;
  // smaller k are prefixes of the same ordering.
  const std::size_t nq = m.test_queries.size();
  std::vector<std::vector<ItemId>> truth_topk(nq);
  std::vector<std::vector<std::uint32_t>> truth_topk_cols(nq);
  parallel_for(nq, plan.threads, [&](std::size_t qi) {
    truth_topk[qi] = exact_topk(m.truth_rows[qi], m.index.item_ids, k_max);
    truth_topk_cols[qi] = m.index.columns_of(truth_topk[qi]);
  });

  BenchReport report;
  struct PerQuery {
    std::vector<double> recalls;  // one per k
    double err_all = kNaN;
    std::vector<double> err_topk;  // one per k
    std::uint64_t calls = 0;
    TimingBreakdown timing;
  };

  for (const auto& gp : grid) {
    std::unique_ptr<RandomRetriever> random_holder;
    FirstStageRetriever* retriever =
        pick_retriever(gp, m, random_holder, plan.seed);

    std::vector<PerQuery> slots(nq);
    parallel_for(nq, plan.threads, [&](std::size_t qi) {
      const QueryId& query = m.test_queries[qi];
      SearchResult res = run_grid_point(gp, query, m, retriever, m.truth_rows[qi],
                                        k_max, plan.seed);
      PerQuery slot;
      slot.calls = res.calls_used;
      slot.timing = res.timing;

      if (!res.approx_scores.empty()) {
        const bool full = res.universe.size() == m.index.num_items();
        if (full) {
          slot.err_all = approximation_error(res.approx_scores, m.truth_rows[qi]);
        } else {
          std::vector<double> truth_sub;
          truth_sub.reserve(res.universe.size());
          for (auto col : res.universe) truth_sub.push_back(m.truth_rows[qi][col]);
          slot.err_all =
              approximation_error(res.approx_scores, DenseVector(std::move(truth_sub)));
        }
        for (std::size_t k : plan.ks) {
          // Restrict to the exact top-k items reachable in the universe.
          double sum = 0.0;
          std::size_t found = 0;
          for (std::size_t i = 0; i < k; ++i) {
            const std::uint32_t col = truth_topk_cols[qi][i];
            auto it = std::lower_bound(res.universe.begin(), res.universe.end(), col);
            if (it != res.universe.end() && *it == col) {
              const std::size_t local =
                  static_cast<std::size_t>(it - res.universe.begin());
              sum += std::abs(res.approx_scores[local] - m.truth_rows[qi][col]);
              ++found;
            }
          }
          slot.err_topk.push_back(found > 0 ? sum / static_cast<double>(found) : kNaN);
        }
      } else {
        slot.err_topk.assign(plan.ks.size(), kNaN);
      }

      std::unordered_set<ItemId> retrieved;
      for (const auto& [id, score] : res.top_k) retrieved.insert(id);
      for (std::size_t k : plan.ks) {
        std::span<const ItemId> truth_prefix(truth_topk[qi].data(), k);
        // The method's answer at this k is the prefix of its ranked output.
        std::unordered_set<ItemId> prefix;
        for (std::size_t i = 0; i < std::min(k, res.top_k.size()); ++i) {
          prefix.insert(res.top_k[i].first);
        }
        slot.recalls.push_back(topk_recall(prefix, truth_prefix));
      }
      slots[qi] = std::move(slot);
    });

    // Flatten rows (query-major, then k) and build per-k summaries.
    std::vector<TimingBreakdown> timings;
    timings.reserve(nq);
    for (std::size_t qi = 0; qi < nq; ++qi) timings.push_back(slots[qi].timing);
    const TimingAggregate agg = timing_breakdown(timings);

    for (std::size_t ki = 0; ki < plan.ks.size(); ++ki) {
      GridSummary summary;
      summary.grid = gp;
      summary.k = plan.ks[ki];
      summary.count = nq;
      std::vector<double> recalls, err_all, err_topk, calls;
      for (std::size_t qi = 0; qi < nq; ++qi) {
        recalls.push_back(slots[qi].recalls[ki]);
        if (!std::isnan(slots[qi].err_all)) err_all.push_back(slots[qi].err_all);
        if (!std::isnan(slots[qi].err_topk[ki])) {
          err_topk.push_back(slots[qi].err_topk[ki]);
        }
        calls.push_back(static_cast<double>(slots[qi].calls));
      }
      summary.mean_recall = mean_of(recalls);
      summary.std_recall = stddev_of(recalls);
      summary.mean_approx_err_all = err_all.empty() ? kNaN : mean_of(err_all);
      summary.mean_approx_err_topk = err_topk.empty() ? kNaN : mean_of(err_topk);
      summary.mean_calls = mean_of(calls);
      summary.timing = agg;
      summary.per_query_recall = std::move(recalls);
      report.summaries.push_back(std::move(summary));
    }

    for (std::size_t qi = 0; qi < nq; ++qi) {
      for (std::size_t ki = 0; ki < plan.ks.size(); ++ki) {
        BenchRow row;
        row.query = m.test_queries[qi];
        row.grid = gp;
        row.k = plan.ks[ki];
        row.recall = slots[qi].recalls[ki];
        row.approx_err_all = slots[qi].err_all;
        row.approx_err_topk = slots[qi].err_topk[ki];
        row.calls_used = slots[qi].calls;
        row.timing = slots[qi].timing;
        report.rows.push_back(std::move(row));
      }
    }
  }

  // Post-hoc best budget split per sweep family.
  std::map<std::string, BenchReport::BestSplit> best;
  for (const auto& s : report.summaries) {
    if (s.grid.method != "anncur" && s.grid.method != "oracle_topk" &&
        s.grid.method != "oracle_softmax") {
      continue;
    }
    std::ostringstream key;
    key << s.grid.method << '|' << s.grid.budget << '|' << s.grid.init << '|'
        << s.grid.k_m << '|' << s.grid.eps << '|'
        << (s.grid.pool.has_value() ? std::to_string(*s.grid.pool) : "none") << '|'
        << s.k;
    auto it = best.find(key.str());
    const bool better =
        it == best.end() || s.mean_recall > it->second.mean_recall ||
        (s.mean_recall == it->second.mean_recall && s.grid.split_ki < it->second.split_ki);
    if (better) {
      best[key.str()] = BenchReport::BestSplit{s.grid.method, s.grid.budget,
                                               s.grid.init,   s.k,
                                               s.grid.split_ki, s.mean_recall};
    }
  }
  for (auto& [key, value] : best) report.best_splits.push_back(value);

  if (!plan.out_csv.empty()) {
    std::filesystem::path p(plan.out_csv);
    if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
    std::ofstream out(p, std::ios::trunc);
    if (!out) throw std::runtime_error("run_benchmark: cannot write " + plan.out_csv);
    out << report.to_csv(plan.include_timing);
  }
  if (!plan.out_json.empty()) {
    std::filesystem::path p(plan.out_json);
    if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
    std::ofstream out(p, std::ios::trunc);
    if (!out) throw std::runtime_error("run_benchmark: cannot write " + plan.out_json);
    out << report.to_json_string(plan.include_timing);
  }
  return report;
}

}  // namespace adacur
