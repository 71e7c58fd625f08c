#include "adacur/scorer.hpp"

#include <zlib.h>

#include <cmath>
#include <random>
#include <sstream>
#include <stdexcept>

#include "adacur/rng.hpp"

namespace adacur {

double LatencyModel::cost_ms(std::size_t fresh_calls) const {
  if (fresh_calls == 0) return 0.0;
  const std::size_t bs = batch_size == 0 ? 1 : batch_size;
  const std::size_t batches = (fresh_calls + bs - 1) / bs;
  return per_call_ms * static_cast<double>(fresh_calls) +
         per_batch_ms * static_cast<double>(batches);
}

double Scorer::score(const QueryId& query, const ItemId& item) {
  const ItemId items[1] = {item};
  return score_batch(query, items)[0];
}

std::optional<double> CallLedger::cached(const ItemId& item) const {
  auto it = scores_.find(item);
  if (it == scores_.end()) return std::nullopt;
  return it->second;
}

bool CallLedger::record(const ItemId& item, double score) {
  auto [it, inserted] = scores_.emplace(item, score);
  (void)it;
  if (inserted) ++total_;
  return inserted;
}

DenseVector score_batch(Scorer& scorer, CallLedger& ledger, const QueryId& query,
                        std::span<const ItemId> items) {
  if (items.empty()) {
    throw std::invalid_argument("score_batch: empty item list");
  }
  if (ledger.query() != query) {
    throw std::invalid_argument("score_batch: ledger is bound to a different query");
  }

  // Collect cache misses once each, preserving first-appearance order.
  std::vector<ItemId> misses;
  std::unordered_map<ItemId, std::size_t> miss_pos;
  for (const ItemId& item : items) {
    if (!ledger.contains(item) && !miss_pos.contains(item)) {
      miss_pos.emplace(item, misses.size());
      misses.push_back(item);
    }
  }

  if (!misses.empty()) {
    std::vector<double> fresh = scorer.score_batch(query, misses);
    if (fresh.size() != misses.size()) {
      throw std::runtime_error("score_batch: scorer returned wrong count");
    }
    for (std::size_t i = 0; i < misses.size(); ++i) {
      ledger.record(misses[i], fresh[i]);
    }
    ledger.add_simulated_ms(scorer.latency.cost_ms(misses.size()));
  }

  DenseVector out;
  for (const ItemId& item : items) {
    out.append(*ledger.cached(item));
  }
  return out;
}

MatrixScorer::MatrixScorer(DenseMatrix scores, std::vector<QueryId> query_ids,
                           std::vector<ItemId> item_ids)
    : scores_(std::move(scores)),
      query_ids_(std::move(query_ids)),
      item_ids_(std::move(item_ids)) {
  if (scores_.rows() != query_ids_.size() || scores_.cols() != item_ids_.size()) {
    throw std::invalid_argument("MatrixScorer: id tables do not match matrix shape");
  }
  query_pos_.reserve(query_ids_.size());
  for (std::size_t i = 0; i < query_ids_.size(); ++i) {
    if (!query_pos_.emplace(query_ids_[i], i).second) {
      throw std::invalid_argument("MatrixScorer: duplicate query id " + query_ids_[i]);
    }
  }
  item_pos_.reserve(item_ids_.size());
  for (std::size_t i = 0; i < item_ids_.size(); ++i) {
    if (!item_pos_.emplace(item_ids_[i], i).second) {
      throw std::invalid_argument("MatrixScorer: duplicate item id " + item_ids_[i]);
    }
  }
  payload_crc_ = static_cast<std::uint32_t>(
      crc32(0L, reinterpret_cast<const Bytef*>(scores_.data().data()),
            static_cast<uInt>(scores_.data().size() * sizeof(double))));
}

std::size_t MatrixScorer::query_pos(const QueryId& q) const {
  auto it = query_pos_.find(q);
  if (it == query_pos_.end()) {
    throw std::invalid_argument("MatrixScorer: unknown query id " + q);
  }
  return it->second;
}

std::vector<double> MatrixScorer::score_batch(const QueryId& query,
                                              std::span<const ItemId> items) {
  const std::size_t row = query_pos(query);
  std::vector<double> out;
  out.reserve(items.size());
  for (const ItemId& item : items) {
    auto it = item_pos_.find(item);
    if (it == item_pos_.end()) {
      throw std::invalid_argument("MatrixScorer: unknown item id " + item);
    }
    out.push_back(scores_(row, it->second));
  }
  return out;
}

std::string MatrixScorer::fingerprint() const {
  std::ostringstream os;
  os << "matrix:" << scores_.rows() << "x" << scores_.cols() << ":crc32=" << std::hex
     << payload_crc_;
  return os.str();
}

DenseVector MatrixScorer::exact_row(const QueryId& query) const {
  const std::size_t row = query_pos(query);
  auto r = scores_.row(row);
  return DenseVector(std::vector<double>(r.begin(), r.end()));
}

void SyntheticCorpusSpec::validate() const {
  if (num_items == 0 || num_train_queries == 0) {
    throw std::invalid_argument("SyntheticCorpusSpec: items and train queries required");
  }
  if (latent_rank == 0 ||
      latent_rank > std::min(num_items, num_train_queries + num_test_queries)) {
    throw std::invalid_argument(
        "SyntheticCorpusSpec: latent rank must be in [1, min(items, queries)]");
  }
  if (!(noise_std >= 0.0)) {
    throw std::invalid_argument("SyntheticCorpusSpec: noise std must be >= 0");
  }
}

std::string SyntheticCorpusSpec::to_string() const {
  std::ostringstream os;
  os << "synth:items=" << num_items << ",queries=" << num_train_queries
     << ",test=" << num_test_queries << ",r=" << latent_rank << ",sigma=" << noise_std
     << ",seed=" << seed;
  return os.str();
}

namespace {

std::string padded_id(char prefix, std::size_t i) {
  char buf[24];
  std::snprintf(buf, sizeof(buf), "%c%06zu", prefix, i);
  return buf;
}

}  // namespace

std::shared_ptr<MatrixScorer> SyntheticCorpus::make_scorer() const {
  return std::make_shared<MatrixScorer>(truth, all_queries(), items);
}

std::vector<QueryId> SyntheticCorpus::all_queries() const {
  std::vector<QueryId> qs = train_queries;
  qs.insert(qs.end(), test_queries.begin(), test_queries.end());
  return qs;
}

SyntheticCorpus make_synthetic(const SyntheticCorpusSpec& spec) {
  spec.validate();
  const std::size_t nq = spec.num_train_queries + spec.num_test_queries;
  const std::size_t ni = spec.num_items;
  const std::size_t r = spec.latent_rank;

  std::mt19937_64 rng(spec.seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  const double scale = 1.0 / std::sqrt(static_cast<double>(r));

  DenseMatrix u(nq, r);
  for (double& x : u.data()) x = normal(rng) * scale;
  DenseMatrix v(r, ni);
  for (double& x : v.data()) x = normal(rng) * scale;

  DenseMatrix truth = matmul(u, v);
  if (spec.noise_std > 0.0) {
    for (double& x : truth.data()) x += normal(rng) * spec.noise_std;
  }

  SyntheticCorpus corpus;
  corpus.spec = spec;
  corpus.train_queries.reserve(spec.num_train_queries);
  for (std::size_t i = 0; i < spec.num_train_queries; ++i) {
    corpus.train_queries.push_back(padded_id('q', i));
  }
  corpus.test_queries.reserve(spec.num_test_queries);
  for (std::size_t i = 0; i < spec.num_test_queries; ++i) {
    corpus.test_queries.push_back(padded_id('t', i));
  }
  corpus.items.reserve(ni);
  for (std::size_t i = 0; i < ni; ++i) {
    corpus.items.push_back(padded_id('i', i));
  }
  corpus.truth = std::move(truth);
  corpus.query_factors = std::move(u);
  corpus.item_factors = std::move(v);
  return corpus;
}

}  // namespace adacur
