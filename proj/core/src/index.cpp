#include "adacur/index.hpp"

#include <zlib.h>

#include <bit>
#include <chrono>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <stdexcept>
#include <unordered_set>

#include "adacur/errors.hpp"

static_assert(std::endian::native == std::endian::little,
              "index container assumes a little-endian host");

namespace adacur {

std::uint32_t CurIndex::column_of(const ItemId& item) const {
  auto it = item_pos_.find(item);
  if (it == item_pos_.end()) {
    throw std::invalid_argument("CurIndex: unknown item id " + item);
  }
  return it->second;
}

std::vector<std::uint32_t> CurIndex::columns_of(std::span<const ItemId> items) const {
  std::vector<std::uint32_t> out;
  out.reserve(items.size());
  for (const ItemId& i : items) out.push_back(column_of(i));
  return out;
}

DenseMatrix CurIndex::anchor_columns(std::span<const std::uint32_t> cols) const {
  return r_anc.columns(cols);
}

void CurIndex::rebuild_lookup() {
  item_pos_.clear();
  item_pos_.reserve(item_ids.size());
  for (std::size_t i = 0; i < item_ids.size(); ++i) {
    if (!item_pos_.emplace(item_ids[i], static_cast<std::uint32_t>(i)).second) {
      throw std::invalid_argument("CurIndex: duplicate item id " + item_ids[i]);
    }
  }
}

void CurIndex::validate() const {
  if (r_anc.rows() != train_query_ids.size() || r_anc.cols() != item_ids.size()) {
    throw std::invalid_argument("CurIndex: matrix shape does not match id tables");
  }
  std::unordered_set<QueryId> qs(train_query_ids.begin(), train_query_ids.end());
  if (qs.size() != train_query_ids.size()) {
    throw std::invalid_argument("CurIndex: duplicate train query ids");
  }
  if (item_pos_.size() != item_ids.size()) {
    throw std::invalid_argument("CurIndex: stale item lookup");
  }
}

CurIndex build_index(Scorer& scorer, std::span<const QueryId> train_queries,
                     std::span<const ItemId> items, BuildStats* stats) {
  if (train_queries.empty() || items.empty()) {
    throw std::invalid_argument("build_index: train queries and items must be nonempty");
  }
  {
    std::unordered_set<QueryId> qs(train_queries.begin(), train_queries.end());
    if (qs.size() != train_queries.size()) {
      throw std::invalid_argument("build_index: duplicate train query ids");
    }
    std::unordered_set<ItemId> is(items.begin(), items.end());
    if (is.size() != items.size()) {
      throw std::invalid_argument("build_index: duplicate item ids");
    }
  }

  const auto t0 = std::chrono::steady_clock::now();
  CurIndex idx;
  idx.r_anc = DenseMatrix(train_queries.size(), items.size());
  idx.train_query_ids.assign(train_queries.begin(), train_queries.end());
  idx.item_ids.assign(items.begin(), items.end());

  std::uint64_t calls = 0;
  for (std::size_t q = 0; q < train_queries.size(); ++q) {
    std::vector<double> row;
    try {
      row = scorer.score_batch(train_queries[q], items);
    } catch (const std::exception& e) {
      throw BuildError("build_index: scoring failed for query '" + train_queries[q] +
                       "': " + e.what());
    }
    if (row.size() != items.size()) {
      throw BuildError("build_index: scorer returned " + std::to_string(row.size()) +
                       " scores for query '" + train_queries[q] + "', expected " +
                       std::to_string(items.size()));
    }
    std::memcpy(idx.r_anc.data().data() + q * items.size(), row.data(),
                items.size() * sizeof(double));
    calls += items.size();
  }

  idx.scorer_fingerprint = scorer.fingerprint();
  idx.build_unix_ms = static_cast<std::uint64_t>(
      std::chrono::duration_cast<std::chrono::milliseconds>(
          std::chrono::system_clock::now().time_since_epoch())
          .count());
  idx.rebuild_lookup();
  idx.validate();

  if (stats != nullptr) {
    stats->scorer_calls = calls;
    stats->wall_ms = std::chrono::duration<double, std::milli>(
                         std::chrono::steady_clock::now() - t0)
                         .count();
  }
  return idx;
}

namespace {

constexpr char kMagic[4] = {'A', 'C', 'U', 'R'};

template <typename T>
void write_pod(std::ofstream& out, const T& value) {
  out.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <typename T>
T read_pod(std::ifstream& in, const char* what) {
  T value{};
  in.read(reinterpret_cast<char*>(&value), sizeof(T));
  if (!in) throw FormatError(std::string("index file truncated reading ") + what);
  return value;
}

void write_string(std::ofstream& out, const std::string& s) {
  write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(s.size()));
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::string read_string(std::ifstream& in, const char* what) {
  const auto len = read_pod<std::uint32_t>(in, what);
  std::string s(len, '\0');
  in.read(s.data(), static_cast<std::streamsize>(len));
  if (!in) throw FormatError(std::string("index file truncated reading ") + what);
  return s;
}

std::uint32_t payload_crc(const DenseMatrix& m) {
  return static_cast<std::uint32_t>(
      crc32(0L, reinterpret_cast<const Bytef*>(m.data().data()),
            static_cast<uInt>(m.data().size() * sizeof(double))));
}

// Removes the temp file unless release() was called.
struct TempFileGuard {
  std::filesystem::path path;
  bool armed = true;
  ~TempFileGuard() {
    if (armed) {
      std::error_code ec;
      std::filesystem::remove(path, ec);
    }
  }
  void release() { armed = false; }
};

}  // namespace

void save_index(const CurIndex& index, const std::filesystem::path& path) {
  index.validate();
  // Write to a sibling temp file and rename: a failed save never leaves a
  // partial index behind.
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  TempFileGuard guard{tmp};
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) {
      throw std::runtime_error("save_index: cannot open " + tmp.string());
    }
    out.write(kMagic, sizeof(kMagic));
    write_pod<std::uint32_t>(out, kIndexFormatVersion);
    write_pod<std::uint64_t>(out, index.num_train_queries());
    write_pod<std::uint64_t>(out, index.num_items());
    out.write(reinterpret_cast<const char*>(index.r_anc.data().data()),
              static_cast<std::streamsize>(index.r_anc.data().size() * sizeof(double)));
    write_pod<std::uint64_t>(out, index.train_query_ids.size());
    for (const auto& id : index.train_query_ids) write_string(out, id);
    write_pod<std::uint64_t>(out, index.item_ids.size());
    for (const auto& id : index.item_ids) write_string(out, id);
    write_string(out, index.scorer_fingerprint);
    write_pod<std::uint64_t>(out, index.build_unix_ms);
    write_pod<std::uint32_t>(out, payload_crc(index.r_anc));
    if (!out) {
      throw std::runtime_error("save_index: write failed for " + tmp.string());
    }
  }
  std::filesystem::rename(tmp, path);
  guard.release();
}

CurIndex load_index(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw std::runtime_error("load_index: cannot open " + path.string());
  }
  char magic[4];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
    throw FormatError("load_index: bad magic in " + path.string());
  }
  const auto version = read_pod<std::uint32_t>(in, "version");
  if (version != kIndexFormatVersion) {
    throw VersionError("load_index: unsupported format version " +
                       std::to_string(version));
  }
  const auto kq = read_pod<std::uint64_t>(in, "k_q");
  const auto ni = read_pod<std::uint64_t>(in, "num items");

  CurIndex idx;
  std::vector<double> payload(kq * ni);
  in.read(reinterpret_cast<char*>(payload.data()),
          static_cast<std::streamsize>(payload.size() * sizeof(double)));
  if (!in) throw FormatError("load_index: payload truncated");
  idx.r_anc = DenseMatrix(kq, ni, std::move(payload));

  const auto qcount = read_pod<std::uint64_t>(in, "query id count");
  if (qcount != kq) throw FormatError("load_index: query id count mismatch");
  idx.train_query_ids.reserve(qcount);
  for (std::uint64_t i = 0; i < qcount; ++i) {
    idx.train_query_ids.push_back(read_string(in, "query id"));
  }
  const auto icount = read_pod<std::uint64_t>(in, "item id count");
  if (icount != ni) throw FormatError("load_index: item id count mismatch");
  idx.item_ids.reserve(icount);
  for (std::uint64_t i = 0; i < icount; ++i) {
    idx.item_ids.push_back(read_string(in, "item id"));
  }
  idx.scorer_fingerprint = read_string(in, "fingerprint");
  idx.build_unix_ms = read_pod<std::uint64_t>(in, "build timestamp");
  const auto crc = read_pod<std::uint32_t>(in, "crc");
  if (crc != payload_crc(idx.r_anc)) {
    throw FormatError("load_index: payload CRC mismatch");
  }
  idx.rebuild_lookup();
  idx.validate();
  return idx;
}

}  // namespace adacur
