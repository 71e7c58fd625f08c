#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "adacur/linalg.hpp"
#include "adacur/scorer.hpp"

namespace adacur {

/// Cheap first-stage candidate source. Returned lists are duplicate-free
/// with length min(n, |I|), deterministic given the retriever's state.
class FirstStageRetriever {
 public:
  virtual ~FirstStageRetriever() = default;
  virtual std::vector<ItemId> retrieve(const QueryId& query, std::size_t n) = 0;
  virtual std::string name() const = 0;
};

std::vector<ItemId> retrieve_first_stage(FirstStageRetriever& retriever,
                                         const QueryId& query, std::size_t n);

/// Dot product over stored query/item embedding tables (rows are vectors).
/// Stand-in for a dual-encoder first stage.
class EmbeddingRetriever : public FirstStageRetriever {
 public:
  EmbeddingRetriever(DenseMatrix item_embeddings, std::vector<ItemId> item_ids,
                     DenseMatrix query_embeddings, std::vector<QueryId> query_ids);

  std::vector<ItemId> retrieve(const QueryId& query, std::size_t n) override;
  std::string name() const override { return "embedding"; }

  /// Ranking for an ad-hoc embedding, bypassing the stored query table.
  std::vector<ItemId> retrieve_embedding(std::span<const double> query_vec,
                                         std::size_t n) const;

 private:
  DenseMatrix item_embeddings_;   // |I| x d
  std::vector<ItemId> item_ids_;
  DenseMatrix query_embeddings_;  // |Q| x d
  std::vector<QueryId> query_ids_;
  std::unordered_map<QueryId, std::size_t> query_pos_;
};

/// TF-IDF over item texts: smooth idf = ln((1+N)/(1+df)) + 1, L2-normalized
/// vectors, whitespace tokenization after lowercasing.
class TfIdfRetriever : public FirstStageRetriever {
 public:
  TfIdfRetriever(std::vector<ItemId> item_ids, std::vector<std::string> item_texts);

  void set_query_text(const QueryId& query, std::string text);

  std::vector<ItemId> retrieve(const QueryId& query, std::size_t n) override;
  std::string name() const override { return "tfidf"; }

  std::vector<ItemId> retrieve_text(const std::string& text, std::size_t n) const;

 private:
  using SparseVec = std::vector<std::pair<std::uint32_t, double>>;  // sorted by term

  SparseVec vectorize(const std::string& text) const;

  std::vector<ItemId> item_ids_;
  std::unordered_map<std::string, std::uint32_t> vocab_;
  std::vector<double> idf_;
  std::vector<SparseVec> item_vecs_;
  std::unordered_map<QueryId, std::string> query_texts_;
};

/// Uniform random permutation prefix; deterministic per (seed, query).
class RandomRetriever : public FirstStageRetriever {
 public:
  RandomRetriever(std::vector<ItemId> item_ids, std::uint64_t seed);

  std::vector<ItemId> retrieve(const QueryId& query, std::size_t n) override;
  std::string name() const override { return "random"; }

 private:
  std::vector<ItemId> item_ids_;
  std::uint64_t seed_;
};

}  // namespace adacur
