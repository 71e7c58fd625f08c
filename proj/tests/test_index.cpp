#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "adacur/errors.hpp"
#include "adacur/index.hpp"
#include "adacur/scorer.hpp"
#include "test_util.hpp"

using namespace adacur;

namespace {

namespace fs = std::filesystem;

fs::path temp_file(const char* name) {
  auto dir = fs::temp_directory_path() / "adacur_index_tests";
  fs::create_directories(dir);
  return dir / name;
}

// Counts every scored pair; wraps any scorer.
class CountingScorer : public Scorer {
 public:
  explicit CountingScorer(Scorer& inner) : inner_(inner) {}
  std::vector<double> score_batch(const QueryId& q,
                                  std::span<const ItemId> items) override {
    calls += items.size();
    return inner_.score_batch(q, items);
  }
  std::string fingerprint() const override { return inner_.fingerprint(); }
  std::uint64_t calls = 0;

 private:
  Scorer& inner_;
};

// Fails when asked to score the poisoned query.
class FlakyScorer : public Scorer {
 public:
  FlakyScorer(Scorer& inner, QueryId poison) : inner_(inner), poison_(std::move(poison)) {}
  std::vector<double> score_batch(const QueryId& q,
                                  std::span<const ItemId> items) override {
    if (q == poison_) throw std::runtime_error("scorer exploded");
    return inner_.score_batch(q, items);
  }
  std::string fingerprint() const override { return inner_.fingerprint(); }

 private:
  Scorer& inner_;
  QueryId poison_;
};

SyntheticCorpus corpus_16x64() {
  SyntheticCorpusSpec spec;
  spec.num_items = 64;
  spec.num_train_queries = 16;
  spec.latent_rank = 4;
  spec.noise_std = 0.05;
  spec.seed = 21;
  return make_synthetic(spec);
}

}  // namespace

TEST_CASE("build_index is an exact oracle passthrough") {
  DenseMatrix m(5, 8);
  for (std::size_t i = 0; i < m.data().size(); ++i) m.data()[i] = double(i) * 0.5;
  std::vector<QueryId> qs = {"q0", "q1", "q2", "q3", "q4"};
  std::vector<ItemId> is;
  for (int i = 0; i < 8; ++i) is.push_back("i" + std::to_string(i));
  MatrixScorer scorer(m, qs, is);

  CurIndex idx = build_index(scorer, qs, is);
  CHECK(idx.r_anc == m);
  CHECK(idx.scorer_fingerprint == scorer.fingerprint());
}

TEST_CASE("build_index of a single pair") {
  DenseMatrix m(1, 1, {3.5});
  MatrixScorer scorer(m, {"q"}, {"i"});
  std::vector<QueryId> qs = {"q"};
  std::vector<ItemId> is = {"i"};
  CurIndex idx = build_index(scorer, qs, is);
  CHECK(idx.r_anc(0, 0) == 3.5);
}

TEST_CASE("build_index costs exactly k_q * |I| scorer calls") {
  SyntheticCorpus corpus = corpus_16x64();
  auto scorer = corpus.make_scorer();
  CountingScorer counting(*scorer);
  BuildStats stats;
  CurIndex idx = build_index(counting, corpus.train_queries, corpus.items, &stats);
  CHECK(counting.calls == 16 * 64);
  CHECK(stats.scorer_calls == 16 * 64);
  CHECK(idx.num_train_queries() == 16);
  CHECK(idx.num_items() == 64);
}

TEST_CASE("build_index validates ids and wraps scorer failures") {
  SyntheticCorpus corpus = corpus_16x64();
  auto scorer = corpus.make_scorer();

  std::vector<QueryId> dup_q = {"q000000", "q000000"};
  CHECK_THROWS_AS(build_index(*scorer, dup_q, corpus.items), std::invalid_argument);

  FlakyScorer flaky(*scorer, corpus.train_queries[3]);
  try {
    build_index(flaky, corpus.train_queries, corpus.items);
    FAIL("expected BuildError");
  } catch (const BuildError& e) {
    CHECK(std::string(e.what()).find(corpus.train_queries[3]) != std::string::npos);
  }
}

TEST_CASE("anchor columns are fetched by stored item-id order") {
  SyntheticCorpus corpus = corpus_16x64();
  auto scorer = corpus.make_scorer();
  CurIndex idx = build_index(*scorer, corpus.train_queries, corpus.items);

  std::vector<ItemId> picks = {corpus.items[9], corpus.items[2], corpus.items[40]};
  auto cols = idx.columns_of(picks);
  CHECK(cols == std::vector<std::uint32_t>{9, 2, 40});
  DenseMatrix sub = idx.anchor_columns(cols);
  for (std::size_t r = 0; r < idx.num_train_queries(); ++r) {
    CHECK(sub(r, 0) == idx.r_anc(r, 9));
    CHECK(sub(r, 1) == idx.r_anc(r, 2));
    CHECK(sub(r, 2) == idx.r_anc(r, 40));
  }
  CHECK_THROWS_AS(idx.column_of("missing"), std::invalid_argument);
}

TEST_CASE("save/load round-trips bit-exactly") {
  SyntheticCorpus corpus = corpus_16x64();
  auto scorer = corpus.make_scorer();
  CurIndex idx = build_index(*scorer, corpus.train_queries, corpus.items);

  const auto path = temp_file("roundtrip.acur");
  save_index(idx, path);
  CurIndex loaded = load_index(path);
  CHECK(loaded.r_anc == idx.r_anc);
  CHECK(loaded.train_query_ids == idx.train_query_ids);
  CHECK(loaded.item_ids == idx.item_ids);
  CHECK(loaded.scorer_fingerprint == idx.scorer_fingerprint);
  CHECK(loaded.build_unix_ms == idx.build_unix_ms);
  std::filesystem::remove(path);
}

TEST_CASE("file size follows the documented layout") {
  SyntheticCorpus corpus = corpus_16x64();
  auto scorer = corpus.make_scorer();
  CurIndex idx = build_index(*scorer, corpus.train_queries, corpus.items);
  const auto path = temp_file("layout.acur");
  save_index(idx, path);

  // magic + version + two u64 dims, payload, two id tables with u32 length
  // prefixes, fingerprint, u64 timestamp, u32 crc.
  std::size_t expected = 4 + 4 + 8 + 8;
  expected += 8 * idx.num_train_queries() * idx.num_items();
  expected += 8;
  for (const auto& id : idx.train_query_ids) expected += 4 + id.size();
  expected += 8;
  for (const auto& id : idx.item_ids) expected += 4 + id.size();
  expected += 4 + idx.scorer_fingerprint.size();
  expected += 8 + 4;
  CHECK(std::filesystem::file_size(path) == expected);
  std::filesystem::remove(path);
}

TEST_CASE("mangled magic bytes are a format error") {
  SyntheticCorpus corpus = corpus_16x64();
  auto scorer = corpus.make_scorer();
  CurIndex idx = build_index(*scorer, corpus.train_queries, corpus.items);
  const auto path = temp_file("mangled.acur");
  save_index(idx, path);
  {
    std::fstream f(path, std::ios::binary | std::ios::in | std::ios::out);
    f.seekp(0);
    f.write("XXXX", 4);
  }
  CHECK_THROWS_AS(load_index(path), FormatError);
  std::filesystem::remove(path);
}

TEST_CASE("truncation and payload corruption are format errors") {
  SyntheticCorpus corpus = corpus_16x64();
  auto scorer = corpus.make_scorer();
  CurIndex idx = build_index(*scorer, corpus.train_queries, corpus.items);
  const auto path = temp_file("broken.acur");
  save_index(idx, path);

  SUBCASE("truncated payload") {
    std::filesystem::resize_file(path, std::filesystem::file_size(path) / 2);
    CHECK_THROWS_AS(load_index(path), FormatError);
  }
  SUBCASE("flipped payload byte fails the CRC") {
    std::fstream f(path, std::ios::binary | std::ios::in | std::ios::out);
    f.seekp(24 + 11);
    char b;
    f.seekg(24 + 11);
    f.read(&b, 1);
    b = static_cast<char>(b ^ 0x40);
    f.seekp(24 + 11);
    f.write(&b, 1);
    f.close();
    CHECK_THROWS_AS(load_index(path), FormatError);
  }
  SUBCASE("unsupported version") {
    std::fstream f(path, std::ios::binary | std::ios::in | std::ios::out);
    const std::uint32_t bad = 99;
    f.seekp(4);
    f.write(reinterpret_cast<const char*>(&bad), 4);
    f.close();
    CHECK_THROWS_AS(load_index(path), VersionError);
  }
  std::filesystem::remove(path);
}

TEST_CASE("a failed save leaves no file behind") {
  SyntheticCorpus corpus = corpus_16x64();
  auto scorer = corpus.make_scorer();
  CurIndex idx = build_index(*scorer, corpus.train_queries, corpus.items);
  const auto missing_dir = temp_file("no_such_dir") / "idx.acur";
  CHECK_THROWS(save_index(idx, missing_dir));
  CHECK_FALSE(std::filesystem::exists(missing_dir));
}
