#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "adacur/linalg.hpp"
#include "adacur/scorer.hpp"

namespace adacur {

/// Offline index: exact scores of every item against the train/anchor
/// queries. Column j is the latent embedding of item j. Immutable after
/// build; safe to share read-only across concurrent searches.
struct CurIndex {
  DenseMatrix r_anc;  // k_q x |I|
  std::vector<QueryId> train_query_ids;
  std::vector<ItemId> item_ids;
  std::string scorer_fingerprint;
  std::uint64_t build_unix_ms = 0;

  std::size_t num_train_queries() const { return train_query_ids.size(); }
  std::size_t num_items() const { return item_ids.size(); }

  /// Column position of an item; throws on unknown ids so callers never
  /// fall back to positional guessing.
  std::uint32_t column_of(const ItemId& item) const;
  std::vector<std::uint32_t> columns_of(std::span<const ItemId> items) const;

  /// R_anc[I_anc]: the anchor-column submatrix, in the given order.
  DenseMatrix anchor_columns(std::span<const std::uint32_t> cols) const;

  void rebuild_lookup();
  void validate() const;

 private:
  std::unordered_map<ItemId, std::uint32_t> item_pos_;
};

struct BuildStats {
  std::uint64_t scorer_calls = 0;
  double wall_ms = 0.0;
};

/// Scores every (train query, item) pair: k_q * |I| scorer calls, never
/// charged to any test-query budget.
CurIndex build_index(Scorer& scorer, std::span<const QueryId> train_queries,
                     std::span<const ItemId> items, BuildStats* stats = nullptr);

/// Binary container, little-endian:
///   magic "ACUR" | u32 version | u64 k_q | u64 |I|
///   f64 row-major payload
///   u64 count + (u32 len + bytes) per train-query id
///   u64 count + (u32 len + bytes) per item id
///   u32 len + bytes scorer fingerprint | u64 build timestamp (unix ms)
///   u32 CRC32 of the payload bytes
/// Round-trips are bit-exact; the header is validated in O(1) before the
/// payload is touched.
void save_index(const CurIndex& index, const std::filesystem::path& path);
CurIndex load_index(const std::filesystem::path& path);

inline constexpr std::uint32_t kIndexFormatVersion = 1;

}  // namespace adacur
