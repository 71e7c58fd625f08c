#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "adacur/linalg.hpp"

namespace adacur {

using QueryId = std::string;
using ItemId = std::string;

/// Simulated cost accounting for expensive scorers. Nothing sleeps; the
/// model only contributes milliseconds to timing reports, mirroring an
/// amortized per-call cost with optional fixed per-batch overhead.
struct LatencyModel {
  double per_call_ms = 0.0;
  double per_batch_ms = 0.0;
  std::size_t batch_size = 50;

  double cost_ms(std::size_t fresh_calls) const;
};

/// Black-box query-item scoring oracle. Implementations must be
/// deterministic for a fixed (query, item) pair within one instance and
/// tolerate concurrent score_batch calls.
class Scorer {
 public:
  virtual ~Scorer() = default;

  virtual std::vector<double> score_batch(const QueryId& query,
                                          std::span<const ItemId> items) = 0;
  virtual double score(const QueryId& query, const ItemId& item);

  /// Stable identity string recorded in index metadata.
  virtual std::string fingerprint() const = 0;

  LatencyModel latency;
};

/// Per-query account of exact scores. A (query, item) pair is charged at
/// most once; repeat requests are served from the cache without touching
/// the total.
class CallLedger {
 public:
  explicit CallLedger(QueryId query) : query_(std::move(query)) {}

  const QueryId& query() const { return query_; }
  std::uint64_t total() const { return total_; }
  double simulated_ms() const { return simulated_ms_; }

  bool contains(const ItemId& item) const { return scores_.contains(item); }
  std::optional<double> cached(const ItemId& item) const;

  /// Records a freshly computed score. Charging happens only if the pair
  /// was not already present; returns true when charged.
  bool record(const ItemId& item, double score);

  void add_simulated_ms(double ms) { simulated_ms_ += ms; }

  const std::unordered_map<ItemId, double>& entries() const { return scores_; }

 private:
  QueryId query_;
  std::unordered_map<ItemId, double> scores_;
  std::uint64_t total_ = 0;
  double simulated_ms_ = 0.0;
};

/// Scores items for one query through the ledger: cached pairs are
/// returned free of charge, misses are fetched in a single scorer batch.
/// Results are in input order.
DenseVector score_batch(Scorer& scorer, CallLedger& ledger, const QueryId& query,
                        std::span<const ItemId> items);

/// Oracle backed by a precomputed query x item score matrix.
class MatrixScorer : public Scorer {
 public:
  MatrixScorer(DenseMatrix scores, std::vector<QueryId> query_ids,
               std::vector<ItemId> item_ids);

  std::vector<double> score_batch(const QueryId& query,
                                  std::span<const ItemId> items) override;
  std::string fingerprint() const override;

  const DenseMatrix& matrix() const { return scores_; }
  const std::vector<QueryId>& query_ids() const { return query_ids_; }
  const std::vector<ItemId>& item_ids() const { return item_ids_; }

  /// Full exact score row; ground-truth access for evaluation, never
  /// charged to any budget.
  DenseVector exact_row(const QueryId& query) const;

 private:
  std::size_t query_pos(const QueryId& q) const;

  DenseMatrix scores_;
  std::vector<QueryId> query_ids_;
  std::vector<ItemId> item_ids_;
  std::unordered_map<QueryId, std::size_t> query_pos_;
  std::unordered_map<ItemId, std::size_t> item_pos_;
  std::uint32_t payload_crc_ = 0;
};

/// Desk-scale stand-in for an expensive neural scorer: a random low-rank
/// factor model with optional additive Gaussian noise.
struct SyntheticCorpusSpec {
  std::size_t num_items = 0;
  std::size_t num_train_queries = 0;
  std::size_t num_test_queries = 0;
  std::size_t latent_rank = 0;
  double noise_std = 0.0;
  std::uint64_t seed = 0;

  void validate() const;
  std::string to_string() const;
};

struct SyntheticCorpus {
  SyntheticCorpusSpec spec;
  std::vector<QueryId> train_queries;
  std::vector<QueryId> test_queries;
  std::vector<ItemId> items;
  DenseMatrix truth;          // (train + test queries) x items, noise included
  DenseMatrix query_factors;  // (train + test queries) x r
  DenseMatrix item_factors;   // r x items

  std::shared_ptr<MatrixScorer> make_scorer() const;
  std::vector<QueryId> all_queries() const;
};

/// Same seed, same corpus, bit for bit.
SyntheticCorpus make_synthetic(const SyntheticCorpusSpec& spec);

}  // namespace adacur
