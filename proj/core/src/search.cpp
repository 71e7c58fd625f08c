#include "adacur/search.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <unordered_set>

#include "adacur/errors.hpp"
#include "adacur/eval.hpp"
#include "adacur/rng.hpp"

namespace adacur {

namespace {

using Clock = std::chrono::steady_clock;

double ms_since(Clock::time_point t0) {
  return std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
}

// Columns this query's search operates over, ascending, plus the
// retriever-ordered view used for retriever-based initialization. The pool
// is built once per query; columns outside it are never touched.
struct QueryUniverse {
  std::vector<std::uint32_t> cols;
  std::vector<std::uint32_t> retriever_order;  // empty unless pooled
};

QueryUniverse build_universe(const QueryId& query, const CurIndex& index,
                             FirstStageRetriever* retriever,
                             const std::optional<std::size_t>& pool) {
  QueryUniverse u;
  if (pool.has_value()) {
    const std::size_t n = std::min(*pool, index.num_items());
    auto ids = retriever->retrieve(query, n);
    u.retriever_order = index.columns_of(ids);
    u.cols = u.retriever_order;
    std::sort(u.cols.begin(), u.cols.end());
    u.cols.erase(std::unique(u.cols.begin(), u.cols.end()), u.cols.end());
    if (u.cols.size() != u.retriever_order.size()) {
      throw std::invalid_argument("candidate pool contains duplicate items");
    }
  } else {
    u.cols.resize(index.num_items());
    std::iota(u.cols.begin(), u.cols.end(), 0u);
  }
  return u;
}

std::size_t local_of(const std::vector<std::uint32_t>& cols, std::uint32_t global) {
  auto it = std::lower_bound(cols.begin(), cols.end(), global);
  if (it == cols.end() || *it != global) {
    throw std::invalid_argument("item outside the active candidate pool");
  }
  return static_cast<std::size_t>(it - cols.begin());
}

// Mutable per-search state shared by the adaptive and one-shot paths.
struct SearchState {
  const CurIndex& index;
  QueryUniverse universe;
  CallLedger ledger;
  AnchorState anchors;
  std::vector<std::uint32_t> anchor_cols;  // global, acquisition order
  std::vector<bool> masked;                // by local index
  TimingBreakdown timing;
  double measured_scorer_ms = 0.0;

  SearchState(const QueryId& query, const CurIndex& idx, QueryUniverse uni)
      : index(idx), universe(std::move(uni)), ledger(query) {
    masked.assign(universe.cols.size(), false);
  }

  std::size_t size() const { return universe.cols.size(); }

  void score_and_append(Scorer& scorer, const QueryId& query,
                        const std::vector<std::size_t>& locals, std::uint32_t round) {
    if (locals.empty()) return;
    std::vector<ItemId> ids;
    ids.reserve(locals.size());
    for (std::size_t l : locals) ids.push_back(index.item_ids[universe.cols[l]]);
    const auto t0 = Clock::now();
    DenseVector scores = score_batch(scorer, ledger, query, ids);
    measured_scorer_ms += ms_since(t0);
    for (std::size_t i = 0; i < locals.size(); ++i) {
      anchors.anchor_ids.push_back(ids[i]);
      anchors.exact_scores.append(scores[i]);
      anchors.round_added.push_back(round);
      anchor_cols.push_back(universe.cols[locals[i]]);
      masked[locals[i]] = true;
    }
  }

  // Paper-supplied exact scores; used by the oracle path only.
  void append_exact(const std::vector<std::size_t>& locals,
                    const DenseVector& exact_scores, std::uint32_t round) {
    for (std::size_t l : locals) {
      const std::uint32_t col = universe.cols[l];
      anchors.anchor_ids.push_back(index.item_ids[col]);
      anchors.exact_scores.append(exact_scores[col]);
      anchors.round_added.push_back(round);
      anchor_cols.push_back(col);
      masked[l] = true;
    }
  }
};

// U <- pinv(R_anc[I_anc]); S <- (C_test x U) x R_anc restricted to the
// universe. The 1 x k_q intermediate keeps the triple product cheap.
DenseVector approx_over_universe(SearchState& st, const DenseMatrix& r_universe) {
  auto t0 = Clock::now();
  DenseMatrix sub = st.index.anchor_columns(st.anchor_cols);
  DenseMatrix u = pseudo_inverse(sub);
  st.timing.pinv_ms += ms_since(t0);

  t0 = Clock::now();
  DenseVector embedding = vec_times_matrix(st.anchors.exact_scores, u);
  DenseVector shat = vec_times_matrix(embedding, r_universe);
  st.timing.matmul_ms += ms_since(t0);
  return shat;
}

std::vector<std::pair<ItemId, double>> exact_top_k_of(const AnchorState& anchors,
                                                      std::size_t k) {
  std::vector<std::size_t> order(anchors.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (anchors.exact_scores[a] != anchors.exact_scores[b]) {
      return anchors.exact_scores[a] > anchors.exact_scores[b];
    }
    return anchors.anchor_ids[a] < anchors.anchor_ids[b];
  });
  const std::size_t take = std::min(k, order.size());
  std::vector<std::pair<ItemId, double>> out;
  out.reserve(take);
  for (std::size_t i = 0; i < take; ++i) {
    out.emplace_back(anchors.anchor_ids[order[i]], anchors.exact_scores[order[i]]);
  }
  return out;
}

// Initial batch: uniform over the universe or the retriever's top ranks.
std::vector<std::size_t> initial_batch(const QueryId& query, SearchState& st,
                                       InitMethod init, FirstStageRetriever* retriever,
                                       std::size_t count, std::mt19937_64& rng) {
  const std::size_t take = std::min(count, st.size());
  if (init == InitMethod::kUniformRandom) {
    auto picks = sample_without_replacement(st.size(), take, rng);
    return {picks.begin(), picks.end()};
  }
  std::vector<std::size_t> locals;
  locals.reserve(take);
  if (!st.universe.retriever_order.empty()) {
    for (std::size_t i = 0; i < take; ++i) {
      locals.push_back(local_of(st.universe.cols, st.universe.retriever_order[i]));
    }
  } else {
    auto ids = retriever->retrieve(query, take);
    for (const auto& id : ids) {
      locals.push_back(local_of(st.universe.cols, st.index.column_of(id)));
    }
  }
  return locals;
}

void finalize_timing(SearchState& st, Clock::time_point t_total0) {
  const double total = ms_since(t_total0);
  const double accounted =
      st.measured_scorer_ms + st.timing.pinv_ms + st.timing.matmul_ms;
  st.timing.other_ms = std::max(0.0, total - accounted);
  st.timing.scorer_ms = st.measured_scorer_ms + st.ledger.simulated_ms();
}

}  // namespace

std::string to_string(Strategy s) {
  switch (s) {
    case Strategy::kTopK: return "topk";
    case Strategy::kSoftMax: return "softmax";
    case Strategy::kRandom: return "random";
  }
  return "?";
}

std::string to_string(InitMethod m) {
  return m == InitMethod::kUniformRandom ? "random" : "retriever";
}

Strategy strategy_from_string(const std::string& s) {
  if (s == "topk") return Strategy::kTopK;
  if (s == "softmax") return Strategy::kSoftMax;
  if (s == "random") return Strategy::kRandom;
  throw ConfigError("unknown strategy '" + s + "' (expected topk|softmax|random)");
}

std::string to_string(OracleMode m) {
  return m == OracleMode::kTopK ? "oracle_topk" : "oracle_softmax";
}

TimingBreakdown& TimingBreakdown::operator+=(const TimingBreakdown& o) {
  scorer_ms += o.scorer_ms;
  pinv_ms += o.pinv_ms;
  matmul_ms += o.matmul_ms;
  other_ms += o.other_ms;
  return *this;
}

void SearchConfig::validate() const {
  if (rounds < 1) throw ConfigError("search config: rounds must be >= 1");
  if (budget < rounds) throw ConfigError("search config: budget must be >= rounds");
  if (k < 1 || k > budget) throw ConfigError("search config: require 1 <= k <= budget");
  if (candidate_pool.has_value() && *candidate_pool < 1) {
    throw ConfigError("search config: candidate pool must be >= 1");
  }
  if ((init == InitMethod::kRetriever || candidate_pool.has_value()) &&
      retriever == nullptr) {
    throw ConfigError("search config: retriever required for retriever init or pool");
  }
}

void AnncurConfig::validate() const {
  if (num_anchors < 1 || num_anchors >= budget) {
    throw ConfigError("anncur config: require 1 <= k_i < budget");
  }
  if (k < 1 || k > budget) throw ConfigError("anncur config: require 1 <= k <= budget");
  if (candidate_pool.has_value() && *candidate_pool < 1) {
    throw ConfigError("anncur config: candidate pool must be >= 1");
  }
  if ((anchor_source == InitMethod::kRetriever || candidate_pool.has_value()) &&
      retriever == nullptr) {
    throw ConfigError("anncur config: retriever required for retriever anchors or pool");
  }
}

std::vector<std::size_t> sample_items(Strategy strategy, std::size_t k_s,
                                      const std::vector<bool>& mask,
                                      const DenseVector& scores, std::mt19937_64& rng) {
  if (mask.size() != scores.size()) {
    throw std::invalid_argument("sample_items: mask and scores lengths disagree");
  }
  std::vector<std::size_t> unmasked;
  unmasked.reserve(scores.size());
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (!mask[i]) unmasked.push_back(i);
  }
  const std::size_t take = std::min(k_s, unmasked.size());
  if (take == 0) return {};

  switch (strategy) {
    case Strategy::kTopK: {
      // Softmax is strictly monotone, so ranking raw scores of unmasked
      // items selects exactly the largest surviving probabilities without
      // risking exp() underflow ties.
      std::partial_sort(unmasked.begin(), unmasked.begin() + static_cast<std::ptrdiff_t>(take),
                        unmasked.end(), [&](std::size_t a, std::size_t b) {
                          if (scores[a] != scores[b]) return scores[a] > scores[b];
                          return a < b;
                        });
      unmasked.resize(take);
      return unmasked;
    }
    case Strategy::kSoftMax: {
      // Gumbel top-k == sampling without replacement proportional to the
      // softmax probabilities, renormalizing after each draw.
      std::vector<double> keys(unmasked.size());
      for (std::size_t i = 0; i < unmasked.size(); ++i) {
        keys[i] = scores[unmasked[i]] + gumbel(rng);
      }
      std::vector<std::size_t> order(unmasked.size());
      std::iota(order.begin(), order.end(), std::size_t{0});
      std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(take),
                        order.end(), [&](std::size_t a, std::size_t b) {
                          if (keys[a] != keys[b]) return keys[a] > keys[b];
                          return unmasked[a] < unmasked[b];
                        });
      std::vector<std::size_t> out;
      out.reserve(take);
      for (std::size_t i = 0; i < take; ++i) out.push_back(unmasked[order[i]]);
      return out;
    }
    case Strategy::kRandom: {
      auto picks = sample_without_replacement(unmasked.size(), take, rng);
      std::vector<std::size_t> out;
      out.reserve(take);
      for (std::uint32_t p : picks) out.push_back(unmasked[p]);
      return out;
    }
  }
  throw std::logic_error("sample_items: unreachable");
}

SearchResult adacur_search(const QueryId& query, const CurIndex& index, Scorer& scorer,
                           const SearchConfig& config) {
  config.validate();
  if (index.num_items() == 0) throw ConfigError("adacur_search: empty index");

  const auto t_total0 = Clock::now();
  SearchState st(query, index,
                 build_universe(query, index, config.retriever, config.candidate_pool));
  std::mt19937_64 rng(derive_seed(config.seed, query));

  // Per-round batch size; a non-divisible budget front-loads the
  // remainder into round 1 so later rounds stay uniform.
  const std::uint64_t k_s = config.budget / config.rounds;
  const std::uint64_t round1 = k_s + config.budget % config.rounds;

  const DenseMatrix* r_universe = &index.r_anc;
  DenseMatrix gathered;
  if (config.candidate_pool.has_value()) {
    gathered = index.r_anc.columns(st.universe.cols);
    r_universe = &gathered;
  }

  st.score_and_append(scorer, query,
                      initial_batch(query, st, config.init, config.retriever,
                                    static_cast<std::size_t>(round1), rng),
                      1);

  DenseVector shat;
  for (std::uint32_t round = 2; round <= config.rounds; ++round) {
    if (st.anchors.size() >= st.size()) break;
    shat = approx_over_universe(st, *r_universe);
    auto picks = sample_items(config.strategy, static_cast<std::size_t>(k_s), st.masked,
                              shat, rng);
    if (picks.empty()) break;
    st.score_and_append(scorer, query, picks, round);
  }
  shat = approx_over_universe(st, *r_universe);

  SearchResult result;
  result.top_k = exact_top_k_of(st.anchors, config.k);
  result.universe = std::move(st.universe.cols);
  result.approx_scores = std::move(shat);
  result.calls_used = st.ledger.total();
  finalize_timing(st, t_total0);
  result.timing = st.timing;
  result.anchors = std::move(st.anchors);
  return result;
}

SearchResult anncur_search(const QueryId& query, const CurIndex& index, Scorer& scorer,
                           const AnncurConfig& config) {
  config.validate();
  if (index.num_items() == 0) throw ConfigError("anncur_search: empty index");

  const auto t_total0 = Clock::now();
  SearchState st(query, index, build_universe(query, index, config.retriever,
                                              config.candidate_pool));
  std::mt19937_64 rng(derive_seed(config.seed, query));

  const DenseMatrix* r_universe = &index.r_anc;
  DenseMatrix gathered;
  if (config.candidate_pool.has_value()) {
    gathered = index.r_anc.columns(st.universe.cols);
    r_universe = &gathered;
  }

  st.score_and_append(scorer, query,
                      initial_batch(query, st, config.anchor_source, config.retriever,
                                    config.num_anchors, rng),
                      1);

  // One-shot fit; the approximation is not revised after reranking.
  DenseVector shat = approx_over_universe(st, *r_universe);

  const std::uint64_t remaining = config.budget - st.anchors.size();
  const std::size_t unscored = st.size() - st.anchors.size();
  const std::size_t rerank_count =
      static_cast<std::size_t>(std::min<std::uint64_t>(remaining, unscored));
  if (rerank_count > 0) {
    auto picks = sample_items(Strategy::kTopK, rerank_count, st.masked, shat, rng);
    st.score_and_append(scorer, query, picks, 2);
  }

  SearchResult result;
  result.top_k = exact_top_k_of(st.anchors, config.k);
  result.universe = std::move(st.universe.cols);
  result.approx_scores = std::move(shat);
  result.calls_used = st.ledger.total();
  finalize_timing(st, t_total0);
  result.timing = st.timing;
  result.anchors = std::move(st.anchors);
  return result;
}

BudgetSplitSweep budget_split_sweep(std::span<const QueryId> queries,
                                    const CurIndex& index, Scorer& scorer,
                                    std::uint64_t budget, std::size_t k,
                                    const std::vector<std::vector<ItemId>>& exact_topk,
                                    std::uint64_t seed,
                                    FirstStageRetriever* retriever) {
  if (budget < 10) throw ConfigError("budget_split_sweep: budget must be >= 10");
  if (queries.size() != exact_topk.size()) {
    throw std::invalid_argument("budget_split_sweep: queries and ground truth disagree");
  }

  BudgetSplitSweep sweep;
  for (std::size_t i = 1; i <= 9; ++i) {
    sweep.splits.push_back(static_cast<std::size_t>(i * budget / 10));
  }
  sweep.per_query_recall.resize(sweep.splits.size());

  for (std::size_t s = 0; s < sweep.splits.size(); ++s) {
    AnncurConfig cfg;
    cfg.budget = budget;
    cfg.num_anchors = sweep.splits[s];
    cfg.anchor_source =
        retriever != nullptr ? InitMethod::kRetriever : InitMethod::kUniformRandom;
    cfg.retriever = retriever;
    cfg.k = k;
    cfg.seed = seed;
    double sum = 0.0;
    for (std::size_t q = 0; q < queries.size(); ++q) {
      SearchResult res = anncur_search(queries[q], index, scorer, cfg);
      std::unordered_set<ItemId> retrieved;
      for (const auto& [id, score] : res.top_k) retrieved.insert(id);
      const double r = topk_recall(retrieved, exact_topk[q]);
      sweep.per_query_recall[s].push_back(r);
      sum += r;
    }
    sweep.mean_recall.push_back(queries.empty() ? 0.0 : sum / queries.size());
  }

  std::size_t best = 0;
  for (std::size_t s = 1; s < sweep.splits.size(); ++s) {
    if (sweep.mean_recall[s] > sweep.mean_recall[best]) best = s;
  }
  sweep.best_split = sweep.splits[best];
  return sweep;
}

std::vector<ItemId> oracle_select_anchors(OracleMode mode, std::size_t k_m, double eps,
                                          std::size_t k_i,
                                          const DenseVector& exact_scores,
                                          std::span<const ItemId> item_ids,
                                          std::uint64_t seed) {
  const std::size_t n = exact_scores.size();
  if (item_ids.size() != n) {
    throw std::invalid_argument("oracle_select_anchors: ids and scores disagree");
  }
  if (!(eps >= 0.0 && eps <= 1.0)) {
    throw std::invalid_argument("oracle_select_anchors: eps must be in [0, 1]");
  }
  if (k_i < 1 || k_m + k_i > n) {
    throw std::invalid_argument("oracle_select_anchors: infeasible k_m/k_i");
  }

  // Full ranking by exact score, then mask the top k_m ranks.
  auto order = top_k_indices(exact_scores, n);
  std::span<const std::size_t> unmasked_order(order.data() + k_m, n - k_m);

  const auto greedy_count = static_cast<std::size_t>(
      std::floor((1.0 - eps) * static_cast<double>(k_i) + 1e-9));

  std::vector<std::size_t> selected;
  selected.reserve(k_i);
  std::vector<bool> taken(n, false);
  std::mt19937_64 rng(seed);

  if (mode == OracleMode::kTopK) {
    for (std::size_t i = 0; i < greedy_count; ++i) {
      selected.push_back(unmasked_order[i]);
      taken[unmasked_order[i]] = true;
    }
  } else if (greedy_count > 0) {
    // Softmax over exact scores of unmasked items, without replacement.
    std::vector<std::size_t> unmasked(unmasked_order.begin(), unmasked_order.end());
    std::sort(unmasked.begin(), unmasked.end());  // canonical rng draw order
    std::vector<double> keys(unmasked.size());
    for (std::size_t i = 0; i < unmasked.size(); ++i) {
      keys[i] = exact_scores[unmasked[i]] + gumbel(rng);
    }
    std::vector<std::size_t> key_order(unmasked.size());
    std::iota(key_order.begin(), key_order.end(), std::size_t{0});
    std::partial_sort(key_order.begin(),
                      key_order.begin() + static_cast<std::ptrdiff_t>(greedy_count),
                      key_order.end(), [&](std::size_t a, std::size_t b) {
                        if (keys[a] != keys[b]) return keys[a] > keys[b];
                        return unmasked[a] < unmasked[b];
                      });
    for (std::size_t i = 0; i < greedy_count; ++i) {
      selected.push_back(unmasked[key_order[i]]);
      taken[unmasked[key_order[i]]] = true;
    }
  }

  // Fill the remainder uniformly from the unmasked, unselected items.
  const std::size_t remainder = k_i - greedy_count;
  if (remainder > 0) {
    std::vector<std::size_t> candidates;
    candidates.reserve(n - k_m - greedy_count);
    std::vector<bool> masked(n, false);
    for (std::size_t i = 0; i < k_m; ++i) masked[order[i]] = true;
    for (std::size_t i = 0; i < n; ++i) {
      if (!masked[i] && !taken[i]) candidates.push_back(i);
    }
    auto picks = sample_without_replacement(candidates.size(), remainder, rng);
    for (std::uint32_t p : picks) selected.push_back(candidates[p]);
  }

  std::vector<ItemId> out;
  out.reserve(selected.size());
  for (std::size_t i : selected) out.push_back(item_ids[i]);
  return out;
}

SearchResult oracle_cur_search(const QueryId& query, const CurIndex& index,
                               const DenseVector& exact_scores,
                               const OracleConfig& config) {
  if (exact_scores.size() != index.num_items()) {
    throw std::invalid_argument("oracle_cur_search: exact scores length != |I|");
  }
  if (config.num_anchors < 1 || config.num_anchors > config.budget) {
    throw ConfigError("oracle_cur_search: require 1 <= k_i <= budget");
  }
  if (config.k < 1 || config.k > config.budget) {
    throw ConfigError("oracle_cur_search: require 1 <= k <= budget");
  }

  const auto t_total0 = Clock::now();
  SearchState st(query, index, build_universe(query, index, nullptr, std::nullopt));
  std::mt19937_64 rng(derive_seed(config.seed, query));

  auto anchor_ids = oracle_select_anchors(config.mode, config.k_m, config.eps,
                                          std::min(config.num_anchors, st.size()),
                                          exact_scores, index.item_ids,
                                          derive_seed(config.seed, query));
  std::vector<std::size_t> locals;
  locals.reserve(anchor_ids.size());
  for (const auto& id : anchor_ids) locals.push_back(index.column_of(id));
  st.append_exact(locals, exact_scores, 1);

  DenseVector shat = approx_over_universe(st, index.r_anc);

  const std::uint64_t remaining = config.budget - st.anchors.size();
  const std::size_t unscored = st.size() - st.anchors.size();
  const std::size_t rerank_count =
      static_cast<std::size_t>(std::min<std::uint64_t>(remaining, unscored));
  if (rerank_count > 0) {
    auto picks = sample_items(Strategy::kTopK, rerank_count, st.masked, shat, rng);
    st.append_exact(picks, exact_scores, 2);
  }

  SearchResult result;
  result.top_k = exact_top_k_of(st.anchors, config.k);
  result.universe = std::move(st.universe.cols);
  result.approx_scores = std::move(shat);
  result.calls_used = st.anchors.size();  // budget-equivalent; oracle-flagged upstream
  finalize_timing(st, t_total0);
  result.timing = st.timing;
  result.anchors = std::move(st.anchors);
  return result;
}

DenseVector approximate_all_scores(const AnchorState& anchors, const CurIndex& index) {
  if (anchors.size() == 0) {
    throw std::invalid_argument("approximate_all_scores: no anchors");
  }
  auto cols = index.columns_of(anchors.anchor_ids);
  DenseMatrix sub = index.anchor_columns(cols);
  DenseMatrix u = pseudo_inverse(sub);
  DenseVector embedding = vec_times_matrix(anchors.exact_scores, u);
  return vec_times_matrix(embedding, index.r_anc);
}

SearchResult rerank_retrieve(const QueryId& query, Scorer& scorer,
                             FirstStageRetriever& retriever, std::uint64_t budget,
                             std::size_t k) {
  if (k < 1 || budget < k) throw ConfigError("rerank_retrieve: require 1 <= k <= budget");

  const auto t_total0 = Clock::now();
  auto ids = retriever.retrieve(query, static_cast<std::size_t>(budget));
  CallLedger ledger(query);

  const auto t0 = Clock::now();
  DenseVector scores = score_batch(scorer, ledger, query, ids);
  const double measured = ms_since(t0);

  SearchResult result;
  result.anchors.anchor_ids = std::move(ids);
  result.anchors.exact_scores = std::move(scores);
  result.anchors.round_added.assign(result.anchors.size(), 1);
  result.top_k = exact_top_k_of(result.anchors, k);
  result.calls_used = ledger.total();
  result.timing.scorer_ms = measured + ledger.simulated_ms();
  result.timing.other_ms = std::max(0.0, ms_since(t_total0) - measured);
  return result;
}

}  // namespace adacur
