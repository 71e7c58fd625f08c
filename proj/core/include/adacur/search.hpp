#pragma once

#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "adacur/index.hpp"
#include "adacur/linalg.hpp"
#include "adacur/retrievers.hpp"
#include "adacur/scorer.hpp"

namespace adacur {

enum class Strategy { kTopK, kSoftMax, kRandom };
enum class InitMethod { kUniformRandom, kRetriever };

std::string to_string(Strategy s);
std::string to_string(InitMethod m);
Strategy strategy_from_string(const std::string& s);

struct SearchConfig {
  std::uint64_t budget = 0;  // total scorer-call budget for this query
  std::uint32_t rounds = 1;
  Strategy strategy = Strategy::kTopK;
  InitMethod init = InitMethod::kUniformRandom;
  FirstStageRetriever* retriever = nullptr;  // init source and/or pool source
  std::size_t k = 10;
  std::optional<std::size_t> candidate_pool;  // restrict search to retriever top-n
  std::uint64_t seed = 0;

  void validate() const;  // throws ConfigError; no scorer call happens first
};

/// Items whose exact scores have been computed, in acquisition order, with
/// the round that added each one.
struct AnchorState {
  std::vector<ItemId> anchor_ids;
  DenseVector exact_scores;
  std::vector<std::uint32_t> round_added;

  std::size_t size() const { return anchor_ids.size(); }
};

struct TimingBreakdown {
  double scorer_ms = 0.0;
  double pinv_ms = 0.0;
  double matmul_ms = 0.0;
  double other_ms = 0.0;

  double total() const { return scorer_ms + pinv_ms + matmul_ms + other_ms; }
  double overhead_ms() const { return pinv_ms + matmul_ms; }
  TimingBreakdown& operator+=(const TimingBreakdown& o);
};

struct SearchResult {
  std::vector<std::pair<ItemId, double>> top_k;  // exact scores, descending
  std::vector<std::uint32_t> universe;  // index columns searched (ascending)
  DenseVector approx_scores;            // final approximation, aligned to universe
  AnchorState anchors;
  std::uint64_t calls_used = 0;
  TimingBreakdown timing;
};

/// Adaptive multi-round search. Round 1 scores an initial batch chosen
/// uniformly at random or by a first-stage retriever; every later round
/// fits the CUR approximation on all items scored so far, samples the next
/// batch from the unscored remainder by the configured strategy, and
/// scores it. Returns the exact top-k of everything scored, which costs no
/// extra scorer calls.
SearchResult adacur_search(const QueryId& query, const CurIndex& index, Scorer& scorer,
                           const SearchConfig& config);

/// Batch selection used inside the round loop. Probabilities are the
/// softmax of `scores` with masked entries zeroed; TopK takes the k_s
/// largest survivors, SoftMax samples k_s without replacement
/// (renormalizing after each draw), Random ignores the scores. If fewer
/// than k_s unmasked items remain, all of them are returned.
std::vector<std::size_t> sample_items(Strategy strategy, std::size_t k_s,
                                      const std::vector<bool>& mask,
                                      const DenseVector& scores, std::mt19937_64& rng);

struct AnncurConfig {
  std::uint64_t budget = 0;
  std::size_t num_anchors = 0;  // k_i, the anchor share of the budget
  InitMethod anchor_source = InitMethod::kUniformRandom;
  FirstStageRetriever* retriever = nullptr;
  std::size_t k = 10;
  std::optional<std::size_t> candidate_pool;
  std::uint64_t seed = 0;

  void validate() const;
};

/// One-shot baseline: score k_i anchors, fit the approximation once,
/// spend the remaining budget scoring the top-ranked unscored items, and
/// return the exact top-k of everything scored. Already-scored items are
/// skipped when ranking, so the budget is spent exactly.
SearchResult anncur_search(const QueryId& query, const CurIndex& index, Scorer& scorer,
                           const AnncurConfig& config);

struct BudgetSplitSweep {
  std::vector<std::size_t> splits;                    // k_i values evaluated
  std::vector<double> mean_recall;                    // aligned with splits
  std::vector<std::vector<double>> per_query_recall;  // [split][query]
  std::size_t best_split = 0;  // argmax mean recall, ties to the smallest k_i
};

/// Evaluates anncur_search at k_i in {floor(i * budget / 10), 1 <= i <= 9}
/// and reports mean top-k recall per split. Recall is judged against the
/// provided exact top-k lists (ground truth, not charged to any budget).
BudgetSplitSweep budget_split_sweep(std::span<const QueryId> queries,
                                    const CurIndex& index, Scorer& scorer,
                                    std::uint64_t budget, std::size_t k,
                                    const std::vector<std::vector<ItemId>>& exact_topk,
                                    std::uint64_t seed,
                                    FirstStageRetriever* retriever = nullptr);

enum class OracleMode { kTopK, kSoftMax };

std::string to_string(OracleMode m);

/// Analysis-only anchor selection with full access to exact scores: mask
/// the exact top-k_m items, take floor((1-eps)*k_i) picks from rank
/// k_m + 1 down (greedy for TopK, softmax-without-replacement for
/// SoftMax), and fill the remainder uniformly at random from the unmasked
/// rest. No duplicates.
std::vector<ItemId> oracle_select_anchors(OracleMode mode, std::size_t k_m, double eps,
                                          std::size_t k_i,
                                          const DenseVector& exact_scores,
                                          std::span<const ItemId> item_ids,
                                          std::uint64_t seed);

struct OracleConfig {
  OracleMode mode = OracleMode::kTopK;
  std::size_t k_m = 0;
  double eps = 0.0;
  std::size_t num_anchors = 0;  // k_i
  std::uint64_t budget = 0;
  std::size_t k = 10;
  std::uint64_t seed = 0;
};

/// One-shot search with oracle-selected anchors; exact scores come from
/// the supplied ground-truth vector, bypassing ledger budgeting. Reports
/// calls_used as if the budget had been spent, for comparability.
SearchResult oracle_cur_search(const QueryId& query, const CurIndex& index,
                               const DenseVector& exact_scores,
                               const OracleConfig& config);

/// The full approximation C_test x pinv(R_anc[I_anc]) x R_anc over every
/// indexed item.
DenseVector approximate_all_scores(const AnchorState& anchors, const CurIndex& index);

/// Retrieve-and-rerank baseline: spend the whole budget scoring the
/// retriever's top candidates, return the exact top-k of that set.
SearchResult rerank_retrieve(const QueryId& query, Scorer& scorer,
                             FirstStageRetriever& retriever, std::uint64_t budget,
                             std::size_t k);

}  // namespace adacur
