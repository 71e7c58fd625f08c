#include "adacur/retrievers.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <sstream>
#include <stdexcept>

#include "adacur/rng.hpp"

namespace adacur {

std::vector<ItemId> retrieve_first_stage(FirstStageRetriever& retriever,
                                         const QueryId& query, std::size_t n) {
  if (n < 1) {
    throw std::invalid_argument("retrieve_first_stage: n must be >= 1");
  }
  return retriever.retrieve(query, n);
}

namespace {

std::vector<ItemId> ids_by_score(std::span<const double> scores,
                                 const std::vector<ItemId>& ids, std::size_t n) {
  const std::size_t take = std::min(n, ids.size());
  auto order = top_k_indices(scores, take);
  std::vector<ItemId> out;
  out.reserve(take);
  for (std::size_t i : order) out.push_back(ids[i]);
  return out;
}

}  // namespace

EmbeddingRetriever::EmbeddingRetriever(DenseMatrix item_embeddings,
                                       std::vector<ItemId> item_ids,
                                       DenseMatrix query_embeddings,
                                       std::vector<QueryId> query_ids)
    : item_embeddings_(std::move(item_embeddings)),
      item_ids_(std::move(item_ids)),
      query_embeddings_(std::move(query_embeddings)),
      query_ids_(std::move(query_ids)) {
  if (item_embeddings_.rows() != item_ids_.size()) {
    throw std::invalid_argument("EmbeddingRetriever: item table shape mismatch");
  }
  if (query_embeddings_.rows() != query_ids_.size()) {
    throw std::invalid_argument("EmbeddingRetriever: query table shape mismatch");
  }
  if (!item_embeddings_.empty() && !query_embeddings_.empty() &&
      item_embeddings_.cols() != query_embeddings_.cols()) {
    throw std::invalid_argument("EmbeddingRetriever: embedding dims disagree");
  }
  for (std::size_t i = 0; i < query_ids_.size(); ++i) {
    query_pos_.emplace(query_ids_[i], i);
  }
}

std::vector<ItemId> EmbeddingRetriever::retrieve_embedding(
    std::span<const double> query_vec, std::size_t n) const {
  if (query_vec.size() != item_embeddings_.cols()) {
    throw std::invalid_argument("EmbeddingRetriever: query vector dim mismatch");
  }
  std::vector<double> scores(item_ids_.size(), 0.0);
  for (std::size_t i = 0; i < item_ids_.size(); ++i) {
    auto row = item_embeddings_.row(i);
    double dot = 0.0;
    for (std::size_t d = 0; d < row.size(); ++d) dot += row[d] * query_vec[d];
    scores[i] = dot;
  }
  return ids_by_score(scores, item_ids_, n);
}

std::vector<ItemId> EmbeddingRetriever::retrieve(const QueryId& query, std::size_t n) {
  auto it = query_pos_.find(query);
  if (it == query_pos_.end()) {
    throw std::invalid_argument("EmbeddingRetriever: unknown query id " + query);
  }
  return retrieve_embedding(query_embeddings_.row(it->second), n);
}

namespace {

std::vector<std::string> tokenize(const std::string& text) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : text) {
    if (std::isspace(static_cast<unsigned char>(c))) {
      if (!cur.empty()) out.push_back(std::move(cur)), cur.clear();
    } else {
      cur.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
    }
  }
  if (!cur.empty()) out.push_back(std::move(cur));
  return out;
}

}  // namespace

TfIdfRetriever::TfIdfRetriever(std::vector<ItemId> item_ids,
                               std::vector<std::string> item_texts)
    : item_ids_(std::move(item_ids)) {
  if (item_ids_.size() != item_texts.size()) {
    throw std::invalid_argument("TfIdfRetriever: ids and texts length mismatch");
  }
  // Vocabulary and document frequencies.
  std::vector<std::vector<std::string>> docs;
  docs.reserve(item_texts.size());
  for (const auto& t : item_texts) docs.push_back(tokenize(t));

  std::vector<std::uint32_t> df;
  for (const auto& doc : docs) {
    std::vector<std::uint32_t> seen;
    for (const auto& tok : doc) {
      auto [it, inserted] = vocab_.emplace(tok, static_cast<std::uint32_t>(vocab_.size()));
      if (inserted) df.push_back(0);
      if (std::find(seen.begin(), seen.end(), it->second) == seen.end()) {
        seen.push_back(it->second);
        ++df[it->second];
      }
    }
  }
  const double n_docs = static_cast<double>(docs.size());
  idf_.resize(df.size());
  for (std::size_t t = 0; t < df.size(); ++t) {
    idf_[t] = std::log((1.0 + n_docs) / (1.0 + static_cast<double>(df[t]))) + 1.0;
  }

  item_vecs_.reserve(docs.size());
  for (const auto& doc : docs) {
    std::ostringstream joined;
    for (const auto& tok : doc) joined << tok << ' ';
    item_vecs_.push_back(vectorize(joined.str()));
  }
}

TfIdfRetriever::SparseVec TfIdfRetriever::vectorize(const std::string& text) const {
  std::unordered_map<std::uint32_t, double> tf;
  for (const auto& tok : tokenize(text)) {
    auto it = vocab_.find(tok);
    if (it != vocab_.end()) tf[it->second] += 1.0;
  }
  SparseVec vec(tf.begin(), tf.end());
  for (auto& [term, weight] : vec) weight *= idf_[term];
  double norm = 0.0;
  for (const auto& [term, weight] : vec) norm += weight * weight;
  norm = std::sqrt(norm);
  if (norm > 0.0) {
    for (auto& [term, weight] : vec) weight /= norm;
  }
  std::sort(vec.begin(), vec.end());
  return vec;
}

void TfIdfRetriever::set_query_text(const QueryId& query, std::string text) {
  query_texts_[query] = std::move(text);
}

std::vector<ItemId> TfIdfRetriever::retrieve_text(const std::string& text,
                                                  std::size_t n) const {
  const SparseVec q = vectorize(text);
  std::vector<double> scores(item_ids_.size(), 0.0);
  for (std::size_t i = 0; i < item_vecs_.size(); ++i) {
    const SparseVec& d = item_vecs_[i];
    double dot = 0.0;
    auto qi = q.begin();
    auto di = d.begin();
    while (qi != q.end() && di != d.end()) {
      if (qi->first < di->first) {
        ++qi;
      } else if (di->first < qi->first) {
        ++di;
      } else {
        dot += qi->second * di->second;
        ++qi, ++di;
      }
    }
    scores[i] = dot;
  }
  return ids_by_score(scores, item_ids_, n);
}

std::vector<ItemId> TfIdfRetriever::retrieve(const QueryId& query, std::size_t n) {
  auto it = query_texts_.find(query);
  if (it == query_texts_.end()) {
    throw std::invalid_argument("TfIdfRetriever: no text registered for query " + query);
  }
  return retrieve_text(it->second, n);
}

RandomRetriever::RandomRetriever(std::vector<ItemId> item_ids, std::uint64_t seed)
    : item_ids_(std::move(item_ids)), seed_(seed) {}

std::vector<ItemId> RandomRetriever::retrieve(const QueryId& query, std::size_t n) {
  std::mt19937_64 rng(derive_seed(seed_, query));
  const std::size_t take = std::min(n, item_ids_.size());
  auto picks = sample_without_replacement(item_ids_.size(), take, rng);
  std::vector<ItemId> out;
  out.reserve(take);
  for (std::uint32_t p : picks) out.push_back(item_ids_[p]);
  return out;
}

}  // namespace adacur
