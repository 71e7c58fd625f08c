#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <unordered_set>
#include <vector>

#include "adacur/index.hpp"
#include "adacur/linalg.hpp"
#include "adacur/scorer.hpp"
#include "adacur/search.hpp"

namespace adacur {

// ---------------------------------------------------------------------------
// Metrics

/// Fraction of the exact top-k items present in the retrieved set.
double topk_recall(const std::unordered_set<ItemId>& retrieved,
                   std::span<const ItemId> exact_topk);

/// Exact top-k by full ground-truth scores; ties break by ascending id.
std::vector<ItemId> exact_topk(const DenseVector& full_scores,
                               std::span<const ItemId> item_ids, std::size_t k);

/// Mean absolute difference between approximate and exact scores, over all
/// entries or over a subset of positions.
double approximation_error(const DenseVector& approx, const DenseVector& exact);
double approximation_error(const DenseVector& approx, const DenseVector& exact,
                           std::span<const std::uint32_t> subset);

// ---------------------------------------------------------------------------
// Statistics

double mean_of(std::span<const double> xs);
double stddev_of(std::span<const double> xs);  // sample standard deviation
double median_of(std::vector<double> xs);

/// P[Binomial(n, 1/2) >= k].
double binomial_tail_geq(std::size_t n, std::size_t k);

/// Paired sign test on per-query values; ties are dropped. p_greater is
/// the one-sided p-value for "a beats b"; recall distributions are bounded
/// and non-normal, so this is the dominance test used throughout.
struct SignTest {
  std::size_t n_pos = 0;
  std::size_t n_neg = 0;
  std::size_t n_tie = 0;
  double p_greater = 1.0;
  double p_two_sided = 1.0;
};
SignTest paired_sign_test(std::span<const double> a, std::span<const double> b);

// ---------------------------------------------------------------------------
// Timing aggregation

struct TimingAggregate {
  TimingBreakdown sum;
  TimingBreakdown median;
  double overhead_fraction = 0.0;  // (pinv + matmul) / total, over sums
};
TimingAggregate timing_breakdown(std::span<const TimingBreakdown> rows);

// ---------------------------------------------------------------------------
// Benchmark corpora

/// Clustered synthetic benchmark: items form clusters with their own local
/// subspaces, cluster centers share a low-dimensional topic space, and
/// scores carry per-pair noise. Queries sit near cluster centers, so the
/// coarse structure is easy to approximate while the top-k ordering inside
/// a query's cluster is not: uniformly sampled anchors miss it, adaptively
/// chosen ones find it.
struct ClusteredParams {
  std::size_t num_items = 10000;
  std::size_t num_clusters = 50;
  std::size_t num_train_queries = 500;
  std::size_t num_test_queries = 200;
  std::size_t dim = 128;
  std::size_t shared_dim = 8;
  std::size_t local_dim = 4;
  double center_residual = 0.35;  // weight of each center's private direction
  double local_scale = 0.35;
  double item_noise = 0.05;
  double query_local = 0.35;
  double query_noise = 0.1;
  double score_scale = 8.0;
  double pair_noise = 1.0;
  std::uint64_t seed = 0;

  void validate() const;
  std::string to_string() const;
};

struct BenchmarkCorpus {
  std::string spec_string;
  std::vector<QueryId> train_queries;
  std::vector<QueryId> test_queries;
  std::vector<ItemId> items;
  DenseMatrix truth;             // (train + test) x items, ground truth
  DenseMatrix query_embeddings;  // (train + test) x d; empty if not applicable
  DenseMatrix item_embeddings;   // |I| x d; empty if not applicable

  std::shared_ptr<MatrixScorer> make_scorer() const;
  std::vector<QueryId> all_queries() const;

  /// Ground-truth score row; never touches any scorer or ledger.
  DenseVector exact_scores(const QueryId& query) const;
};

BenchmarkCorpus make_lowrank_corpus(const SyntheticCorpusSpec& spec);
BenchmarkCorpus make_clustered_corpus(const ClusteredParams& params);

/// Builds a corpus from a spec string: "synth:items=...,queries=...,test=...,
/// r=...,sigma=...,seed=..." or "clustered:items=...,clusters=...,...".
/// Unknown keys are rejected.
BenchmarkCorpus make_benchmark_corpus(const std::string& spec_string);

/// Scorer factory shared by the CLI and plan runner. Accepts
/// "matrix:PATH" (an index-format container), "synth:...", "clustered:..."
/// and "remote:URL".
std::shared_ptr<Scorer> make_scorer_from_spec(const std::string& spec,
                                              int remote_timeout_ms = 5000,
                                              int remote_retries = 2);

// ---------------------------------------------------------------------------
// Experiment plans

struct MethodPlan {
  std::string name;  // adacur | anncur | rerank | oracle_topk | oracle_softmax
  std::vector<std::uint64_t> budgets;
  std::vector<std::uint32_t> rounds{5};               // adacur
  std::vector<Strategy> strategies{Strategy::kTopK};  // adacur
  std::string init = "random";                        // random | embedding
  std::vector<std::size_t> splits;  // anncur/oracle k_i; empty means sweep
  std::size_t k_m = 0;              // oracle mask depth
  double eps = 0.0;                 // oracle random fraction
  std::optional<std::size_t> pool;
};

struct ExperimentPlan {
  std::string corpus_spec;  // either this ...
  std::string index_path;   // ... or index + scorer (+ explicit query ids)
  std::string scorer_spec;
  std::vector<QueryId> test_query_ids;  // required in index mode
  std::vector<MethodPlan> methods;
  std::vector<std::size_t> ks{1, 10, 100};
  std::size_t num_test_queries = 0;  // corpus mode; 0 means all
  std::uint64_t seed = 0;
  double scorer_latency_ms = 0.0;
  bool include_timing = true;
  int threads = 1;
  std::string out_csv;
  std::string out_json;

  void validate() const;
};

struct GridPoint {
  std::string method;
  std::uint64_t budget = 0;
  std::uint32_t rounds = 0;  // adacur only
  std::string strategy;      // adacur strategy, or "km=..,eps=.." for oracle
  std::string init;
  std::size_t split_ki = 0;  // anncur/oracle
  std::optional<std::size_t> pool;
  std::size_t k_m = 0;
  double eps = 0.0;

  std::string tag() const;  // deterministic identity, also seeds the runs
};

struct BenchRow {
  QueryId query;
  GridPoint grid;
  std::size_t k = 0;
  double recall = 0.0;
  double approx_err_all = 0.0;   // NaN when the method has no approximation
  double approx_err_topk = 0.0;  // NaN likewise
  std::uint64_t calls_used = 0;
  TimingBreakdown timing;
};

struct GridSummary {
  GridPoint grid;
  std::size_t k = 0;
  std::size_t count = 0;
  double mean_recall = 0.0;
  double std_recall = 0.0;
  double mean_approx_err_all = 0.0;
  double mean_approx_err_topk = 0.0;
  double mean_calls = 0.0;
  TimingAggregate timing;
  std::vector<double> per_query_recall;
};

struct BenchReport {
  std::vector<BenchRow> rows;
  std::vector<GridSummary> summaries;

  struct BestSplit {
    std::string method;
    std::uint64_t budget = 0;
    std::string init;
    std::size_t k = 0;
    std::size_t split_ki = 0;
    double mean_recall = 0.0;
  };
  std::vector<BestSplit> best_splits;  // per anncur/oracle sweep family

  /// One row per query x grid point x k. Columns:
  /// query_id,method,budget,rounds,strategy,init,split_ki,k,recall,
  /// approx_err_all,approx_err_topk,calls_used,scorer_ms,pinv_ms,
  /// matmul_ms,other_ms (timing columns dropped when include_timing is
  /// false). Byte-identical for identical plan + seeds.
  std::string to_csv(bool include_timing) const;
  std::string to_json_string(bool include_timing) const;
};

/// Runs every grid point over the test queries, deterministically under
/// the plan seed, and writes the CSV/JSON outputs if paths are configured.
BenchReport run_benchmark(const ExperimentPlan& plan);

}  // namespace adacur
