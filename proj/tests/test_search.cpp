#include <doctest.h>

#include <algorithm>
#include <map>
#include <numeric>
#include <unordered_set>

#include "adacur/errors.hpp"
#include "adacur/eval.hpp"
#include "adacur/index.hpp"
#include "adacur/rng.hpp"
#include "adacur/search.hpp"
#include "test_util.hpp"

using namespace adacur;

namespace {

struct Fixture {
  SyntheticCorpus corpus;
  std::shared_ptr<MatrixScorer> scorer;
  CurIndex index;
};

Fixture make_fixture(std::size_t items, std::size_t kq, std::size_t rank, double sigma,
                     std::uint64_t seed, std::size_t test_queries = 8) {
  SyntheticCorpusSpec spec;
  spec.num_items = items;
  spec.num_train_queries = kq;
  spec.num_test_queries = test_queries;
  spec.latent_rank = rank;
  spec.noise_std = sigma;
  spec.seed = seed;
  Fixture f{make_synthetic(spec), nullptr, {}};
  f.scorer = f.corpus.make_scorer();
  f.index = build_index(*f.scorer, f.corpus.train_queries, f.corpus.items);
  return f;
}

DenseVector truth_row(const Fixture& f, const QueryId& q) {
  const auto all = f.corpus.all_queries();
  for (std::size_t i = 0; i < all.size(); ++i) {
    if (all[i] == q) {
      auto row = f.corpus.truth.row(i);
      return DenseVector(std::vector<double>(row.begin(), row.end()));
    }
  }
  throw std::logic_error("unknown query in fixture");
}

std::unordered_set<ItemId> retrieved_set(const SearchResult& r) {
  std::unordered_set<ItemId> out;
  for (const auto& [id, score] : r.top_k) out.insert(id);
  return out;
}

// Retriever that replays a fixed ranking; used for perfect/adversarial
// first stages.
class FixedOrderRetriever : public FirstStageRetriever {
 public:
  explicit FixedOrderRetriever(std::vector<ItemId> order) : order_(std::move(order)) {}
  std::vector<ItemId> retrieve(const QueryId&, std::size_t n) override {
    std::vector<ItemId> out(order_.begin(),
                            order_.begin() + std::min(n, order_.size()));
    return out;
  }
  std::string name() const override { return "fixed"; }

 private:
  std::vector<ItemId> order_;
};

}  // namespace

// ---------------------------------------------------------------------------
// sample_items

TEST_CASE("sample_items TopK honors the mask and score order") {
  DenseVector scores({9.0, 5.0, 7.0, 1.0});
  std::vector<bool> mask = {true, false, false, false};
  auto rng = testutil::rng(1);
  CHECK(sample_items(Strategy::kTopK, 2, mask, scores, rng) ==
        std::vector<std::size_t>{2, 1});
}

TEST_CASE("sample_items returns all remaining items when short") {
  DenseVector scores({1.0, 2.0, 3.0, 4.0});
  std::vector<bool> mask = {true, true, false, true};
  auto rng = testutil::rng(2);
  CHECK(sample_items(Strategy::kRandom, 3, mask, scores, rng) ==
        std::vector<std::size_t>{2});
  std::vector<bool> all_masked(4, true);
  CHECK(sample_items(Strategy::kTopK, 2, all_masked, scores, rng).empty());
}

TEST_CASE("sample_items SoftMax matches closed-form softmax frequencies") {
  DenseVector scores({std::log(1.0), std::log(2.0), std::log(3.0)});
  std::vector<bool> mask(3, false);
  auto rng = testutil::rng(333);
  std::array<std::size_t, 3> counts{};
  const int draws = 100000;
  for (int i = 0; i < draws; ++i) {
    auto pick = sample_items(Strategy::kSoftMax, 1, mask, scores, rng);
    ++counts[pick[0]];
  }
  const double expected[3] = {1.0 / 6.0, 2.0 / 6.0, 3.0 / 6.0};
  for (int i = 0; i < 3; ++i) {
    CHECK(std::abs(double(counts[i]) / draws - expected[i]) < 0.01);
  }
}

TEST_CASE("sample_items SoftMax never returns masked or duplicate items") {
  auto gen = testutil::rng(4);
  std::normal_distribution<double> normal(0.0, 3.0);
  for (int iter = 0; iter < 50; ++iter) {
    std::vector<double> raw(30);
    for (double& x : raw) x = normal(gen);
    std::vector<bool> mask(30, false);
    std::uniform_int_distribution<int> coin(0, 2);
    for (std::size_t i = 0; i < 30; ++i) mask[i] = coin(gen) == 0;
    auto picks = sample_items(Strategy::kSoftMax, 10, mask, DenseVector(raw), gen);
    std::unordered_set<std::size_t> seen;
    for (auto p : picks) {
      CHECK(!mask[p]);
      CHECK(seen.insert(p).second);
    }
  }
}

TEST_CASE("TopK over raw scores commutes with the masked-softmax route") {
  auto gen = testutil::rng(5);
  std::normal_distribution<double> normal(0.0, 4.0);
  for (int iter = 0; iter < 40; ++iter) {
    std::vector<double> raw(25);
    for (double& x : raw) x = normal(gen);
    DenseVector scores(raw);
    std::vector<bool> mask(25, false);
    std::uniform_int_distribution<int> coin(0, 3);
    for (std::size_t i = 0; i < 25; ++i) mask[i] = coin(gen) == 0;
    const std::size_t unmasked =
        static_cast<std::size_t>(std::count(mask.begin(), mask.end(), false));
    if (unmasked < 5) continue;

    auto mine = sample_items(Strategy::kTopK, 5, mask, scores, gen);

    // Oracle route: softmax first, zero the masked entries, then top-k.
    DenseVector probs = softmax(scores);
    std::vector<double> zeroed(probs.begin(), probs.end());
    bool all_positive = true;
    for (std::size_t i = 0; i < 25; ++i) {
      if (mask[i]) {
        zeroed[i] = 0.0;
      } else if (zeroed[i] <= 0.0) {
        all_positive = false;
      }
    }
    if (!all_positive) continue;
    auto oracle = top_k_indices(DenseVector(zeroed), 5);
    CHECK(mine == std::vector<std::size_t>(oracle.begin(), oracle.end()));
  }
}

// ---------------------------------------------------------------------------
// adacur_search

TEST_CASE("exhaustive budget scores everything and nails the exact top-k") {
  Fixture f = make_fixture(60, 8, 4, 0.1, 100);
  const QueryId q = f.corpus.test_queries[0];

  SearchConfig cfg;
  cfg.budget = 60;
  cfg.rounds = 3;
  cfg.k = 10;
  cfg.seed = 5;
  SearchResult res = adacur_search(q, f.index, *f.scorer, cfg);

  CHECK(res.anchors.size() == 60);
  CHECK(res.calls_used == 60);

  auto truth = truth_row(f, q);
  auto expected = exact_topk(truth, f.index.item_ids, 10);
  std::vector<ItemId> got;
  for (const auto& [id, s] : res.top_k) got.push_back(id);
  CHECK(got == expected);
}

TEST_CASE("round batching follows floor(budget / rounds) with a front-loaded remainder") {
  Fixture f = make_fixture(300, 8, 4, 0.1, 101);
  const QueryId q = f.corpus.test_queries[1];

  SearchConfig cfg;
  cfg.budget = 100;
  cfg.rounds = 5;
  cfg.k = 10;
  cfg.seed = 6;
  SearchResult res = adacur_search(q, f.index, *f.scorer, cfg);
  std::map<std::uint32_t, int> per_round;
  for (auto r : res.anchors.round_added) ++per_round[r];
  for (std::uint32_t r = 1; r <= 5; ++r) CHECK(per_round[r] == 20);

  cfg.budget = 103;  // remainder of 3 goes to round 1
  res = adacur_search(q, f.index, *f.scorer, cfg);
  per_round.clear();
  for (auto r : res.anchors.round_added) ++per_round[r];
  CHECK(per_round[1] == 23);
  for (std::uint32_t r = 2; r <= 5; ++r) CHECK(per_round[r] == 20);
  CHECK(res.calls_used == 103);
}

TEST_CASE("N_R=1 with uniform init equals rerank over a random subset") {
  Fixture f = make_fixture(200, 8, 4, 0.1, 102);
  const std::uint64_t seed = 77;
  RandomRetriever retriever(f.corpus.items, seed);

  for (const QueryId& q : f.corpus.test_queries) {
    SearchConfig cfg;
    cfg.budget = 40;
    cfg.rounds = 1;
    cfg.k = 5;
    cfg.seed = seed;
    SearchResult adaptive = adacur_search(q, f.index, *f.scorer, cfg);
    SearchResult reranked = rerank_retrieve(q, *f.scorer, retriever, 40, 5);
    CHECK(adaptive.top_k == reranked.top_k);
    CHECK(adaptive.anchors.anchor_ids == reranked.anchors.anchor_ids);
    CHECK(adaptive.calls_used == reranked.calls_used);
  }
}

TEST_CASE("noiseless low-rank corpora are recovered exactly once anchors span") {
  // sigma = 0, rank 6: as soon as the round-1 anchor columns have rank 6,
  // the next approximation reproduces every score and recall hits 1.
  Fixture f = make_fixture(300, 16, 6, 0.0, 103, 10);
  int qualifying = 0;
  for (const QueryId& q : f.corpus.test_queries) {
    SearchConfig cfg;
    cfg.budget = 40;
    cfg.rounds = 2;
    cfg.k = 10;
    cfg.seed = 9;
    SearchResult res = adacur_search(q, f.index, *f.scorer, cfg);

    std::vector<ItemId> round1_ids;
    for (std::size_t i = 0; i < res.anchors.size(); ++i) {
      if (res.anchors.round_added[i] == 1) round1_ids.push_back(res.anchors.anchor_ids[i]);
    }
    DenseMatrix sub = f.index.anchor_columns(f.index.columns_of(round1_ids));
    if (testutil::numerical_rank(sub, 1e-10) != 6) continue;
    ++qualifying;

    auto truth = truth_row(f, q);
    double max_err = 0.0;
    for (std::size_t i = 0; i < truth.size(); ++i) {
      max_err = std::max(max_err, std::abs(res.approx_scores[i] - truth[i]));
    }
    CHECK(max_err < 1e-6);

    auto expected = exact_topk(truth, f.index.item_ids, 10);
    CHECK(topk_recall(retrieved_set(res), expected) == 1.0);
  }
  CHECK(qualifying > 0);
}

TEST_CASE("candidate pool restricts the search and caps the spend") {
  Fixture f = make_fixture(150, 8, 4, 0.1, 104);
  const QueryId q = f.corpus.test_queries[0];
  RandomRetriever retriever(f.corpus.items, 11);

  SearchConfig cfg;
  cfg.budget = 60;
  cfg.rounds = 4;
  cfg.k = 5;
  cfg.seed = 3;
  cfg.retriever = &retriever;
  cfg.candidate_pool = 25;
  SearchResult res = adacur_search(q, f.index, *f.scorer, cfg);

  CHECK(res.calls_used == 25);  // pool smaller than budget: early termination
  CHECK(res.universe.size() == 25);
  CHECK(res.approx_scores.size() == 25);

  std::unordered_set<std::uint32_t> pool(res.universe.begin(), res.universe.end());
  for (const auto& id : res.anchors.anchor_ids) {
    CHECK(pool.contains(f.index.column_of(id)));
  }
}

TEST_CASE("searches are deterministic and anchors grow monotonically") {
  Fixture f = make_fixture(250, 8, 4, 0.2, 105);
  const QueryId q = f.corpus.test_queries[2];
  SearchConfig cfg;
  cfg.budget = 50;
  cfg.rounds = 5;
  cfg.strategy = Strategy::kSoftMax;
  cfg.k = 5;
  cfg.seed = 21;

  SearchResult a = adacur_search(q, f.index, *f.scorer, cfg);
  SearchResult b = adacur_search(q, f.index, *f.scorer, cfg);
  CHECK(a.top_k == b.top_k);
  CHECK(a.anchors.anchor_ids == b.anchors.anchor_ids);
  CHECK(a.approx_scores == b.approx_scores);

  // No duplicates; provenance rounds are nondecreasing.
  std::unordered_set<ItemId> seen;
  for (const auto& id : a.anchors.anchor_ids) CHECK(seen.insert(id).second);
  for (std::size_t i = 1; i < a.anchors.round_added.size(); ++i) {
    CHECK(a.anchors.round_added[i] >= a.anchors.round_added[i - 1]);
  }
  // Ledger-consistency: recorded exact scores match the oracle.
  for (std::size_t i = 0; i < a.anchors.size(); ++i) {
    CHECK(a.anchors.exact_scores[i] ==
          f.scorer->score(q, a.anchors.anchor_ids[i]));
  }
}

TEST_CASE("config validation rejects bad budgets before any scoring") {
  Fixture f = make_fixture(50, 4, 2, 0.1, 106);
  SearchConfig cfg;
  cfg.budget = 3;
  cfg.rounds = 5;  // budget < rounds
  cfg.k = 2;
  CHECK_THROWS_AS(adacur_search("t000000", f.index, *f.scorer, cfg), ConfigError);
  cfg.rounds = 2;
  cfg.k = 10;  // k > budget
  CHECK_THROWS_AS(adacur_search("t000000", f.index, *f.scorer, cfg), ConfigError);
  cfg.k = 2;
  cfg.candidate_pool = 10;  // pool without retriever
  CHECK_THROWS_AS(adacur_search("t000000", f.index, *f.scorer, cfg), ConfigError);
}

// ---------------------------------------------------------------------------
// anncur_search

TEST_CASE("anncur spends the budget exactly when the pool allows") {
  Fixture f = make_fixture(200, 8, 4, 0.1, 107);
  const QueryId q = f.corpus.test_queries[0];
  AnncurConfig cfg;
  cfg.budget = 50;
  cfg.num_anchors = 20;
  cfg.k = 10;
  cfg.seed = 2;
  SearchResult res = anncur_search(q, f.index, *f.scorer, cfg);
  CHECK(res.calls_used == 50);
  CHECK(res.anchors.size() == 50);

  std::map<std::uint32_t, int> per_round;
  for (auto r : res.anchors.round_added) ++per_round[r];
  CHECK(per_round[1] == 20);  // anchors
  CHECK(per_round[2] == 30);  // reranked
}

TEST_CASE("anncur with an exhaustive budget has recall 1.0") {
  Fixture f = make_fixture(80, 8, 4, 0.1, 108);
  const QueryId q = f.corpus.test_queries[1];
  AnncurConfig cfg;
  cfg.budget = 80;
  cfg.num_anchors = 13;
  cfg.k = 10;
  cfg.seed = 4;
  SearchResult res = anncur_search(q, f.index, *f.scorer, cfg);
  auto expected = exact_topk(truth_row(f, q), f.index.item_ids, 10);
  CHECK(topk_recall(retrieved_set(res), expected) == 1.0);
}

TEST_CASE("anncur recovers noiseless corpora when anchors span the rank") {
  Fixture f = make_fixture(300, 16, 6, 0.0, 109);
  const QueryId q = f.corpus.test_queries[0];
  AnncurConfig cfg;
  cfg.budget = 60;
  cfg.num_anchors = 20;
  cfg.k = 10;
  cfg.seed = 8;
  SearchResult res = anncur_search(q, f.index, *f.scorer, cfg);

  std::vector<ItemId> anchor_ids(res.anchors.anchor_ids.begin(),
                                 res.anchors.anchor_ids.begin() + 20);
  DenseMatrix sub = f.index.anchor_columns(f.index.columns_of(anchor_ids));
  REQUIRE(testutil::numerical_rank(sub, 1e-10) == 6);

  auto truth = truth_row(f, q);
  double max_err = 0.0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    max_err = std::max(max_err, std::abs(res.approx_scores[i] - truth[i]));
  }
  CHECK(max_err < 1e-6);
  auto expected = exact_topk(truth, f.index.item_ids, 10);
  CHECK(topk_recall(retrieved_set(res), expected) == 1.0);
}

TEST_CASE("anncur validates the split") {
  Fixture f = make_fixture(50, 4, 2, 0.1, 110);
  AnncurConfig cfg;
  cfg.budget = 10;
  cfg.num_anchors = 10;  // k_i must be < budget
  cfg.k = 5;
  CHECK_THROWS_AS(anncur_search("t000000", f.index, *f.scorer, cfg), ConfigError);
  cfg.num_anchors = 0;
  CHECK_THROWS_AS(anncur_search("t000000", f.index, *f.scorer, cfg), ConfigError);
}

// ---------------------------------------------------------------------------
// budget_split_sweep

TEST_CASE("budget split sweep evaluates the nine canonical splits") {
  Fixture f = make_fixture(120, 8, 4, 0.2, 111, 6);
  std::vector<std::vector<ItemId>> truth_topk;
  for (const QueryId& q : f.corpus.test_queries) {
    truth_topk.push_back(exact_topk(truth_row(f, q), f.index.item_ids, 5));
  }
  BudgetSplitSweep sweep = budget_split_sweep(f.corpus.test_queries, f.index, *f.scorer,
                                              100, 5, truth_topk, 13);
  CHECK(sweep.splits ==
        std::vector<std::size_t>{10, 20, 30, 40, 50, 60, 70, 80, 90});

  BudgetSplitSweep again = budget_split_sweep(f.corpus.test_queries, f.index, *f.scorer,
                                              100, 5, truth_topk, 13);
  CHECK(sweep.mean_recall == again.mean_recall);
  CHECK(sweep.best_split == again.best_split);
}

TEST_CASE("degenerate sweep: every split exhausts the corpus, smallest k_i wins") {
  Fixture f = make_fixture(50, 8, 4, 0.1, 112, 4);
  std::vector<std::vector<ItemId>> truth_topk;
  for (const QueryId& q : f.corpus.test_queries) {
    truth_topk.push_back(exact_topk(truth_row(f, q), f.index.item_ids, 5));
  }
  BudgetSplitSweep sweep = budget_split_sweep(f.corpus.test_queries, f.index, *f.scorer,
                                              50, 5, truth_topk, 14);
  for (double r : sweep.mean_recall) CHECK(r == 1.0);
  CHECK(sweep.best_split == 5);  // 50/10, tie broken toward the smallest
  CHECK_THROWS_AS(budget_split_sweep(f.corpus.test_queries, f.index, *f.scorer, 9, 5,
                                     truth_topk, 14),
                  ConfigError);
}

// ---------------------------------------------------------------------------
// oracle_select_anchors / oracle_cur_search

TEST_CASE("oracle selection: pure greedy and masked greedy") {
  DenseVector scores({9.0, 8.0, 7.0, 1.0, 0.0});
  std::vector<ItemId> ids = {"a", "b", "c", "d", "e"};
  CHECK(oracle_select_anchors(OracleMode::kTopK, 0, 0.0, 3, scores, ids, 1) ==
        std::vector<ItemId>{"a", "b", "c"});
  CHECK(oracle_select_anchors(OracleMode::kTopK, 2, 0.0, 2, scores, ids, 1) ==
        std::vector<ItemId>{"c", "d"});
}

TEST_CASE("oracle selection rounding: eps=0.75 of 50 means 12 greedy + 38 random") {
  auto gen = testutil::rng(6);
  std::vector<double> raw(200);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (double& x : raw) x = normal(gen);
  DenseVector scores(raw);
  std::vector<ItemId> ids(200);
  for (std::size_t i = 0; i < 200; ++i) ids[i] = "i" + std::to_string(i);

  auto picked = oracle_select_anchors(OracleMode::kTopK, 0, 0.75, 50, scores, ids, 7);
  REQUIRE(picked.size() == 50);
  std::unordered_set<ItemId> unique(picked.begin(), picked.end());
  CHECK(unique.size() == 50);

  // The first 12 must be the exact top-12; the rest are random fills.
  auto order = top_k_indices(scores, 12);
  for (std::size_t i = 0; i < 12; ++i) {
    CHECK(picked[i] == ids[order[i]]);
  }
}

TEST_CASE("oracle selection validates its counts") {
  DenseVector scores({1.0, 2.0, 3.0});
  std::vector<ItemId> ids = {"a", "b", "c"};
  CHECK_THROWS_AS(oracle_select_anchors(OracleMode::kTopK, 2, 0.0, 2, scores, ids, 1),
                  std::invalid_argument);
  CHECK_THROWS_AS(oracle_select_anchors(OracleMode::kTopK, 0, 1.5, 1, scores, ids, 1),
                  std::invalid_argument);
}

TEST_CASE("softmax oracle selection produces distinct unmasked anchors") {
  auto gen = testutil::rng(8);
  std::vector<double> raw(60);
  std::normal_distribution<double> normal(0.0, 2.0);
  for (double& x : raw) x = normal(gen);
  DenseVector scores(raw);
  std::vector<ItemId> ids(60);
  for (std::size_t i = 0; i < 60; ++i) ids[i] = "i" + std::to_string(i);

  auto masked_top = exact_topk(scores, ids, 5);
  std::unordered_set<ItemId> masked(masked_top.begin(), masked_top.end());
  auto picked =
      oracle_select_anchors(OracleMode::kSoftMax, 5, 0.4, 20, scores, ids, 99);
  REQUIRE(picked.size() == 20);
  std::unordered_set<ItemId> unique(picked.begin(), picked.end());
  CHECK(unique.size() == 20);
  for (const auto& id : picked) CHECK(!masked.contains(id));
}

TEST_CASE("oracle search with k_m=0 always recalls the top anchors") {
  Fixture f = make_fixture(120, 8, 4, 0.3, 113);
  const QueryId q = f.corpus.test_queries[0];
  DenseVector truth = truth_row(f, q);

  OracleConfig cfg;
  cfg.mode = OracleMode::kTopK;
  cfg.num_anchors = 10;
  cfg.budget = 20;
  cfg.k = 10;
  cfg.seed = 3;
  SearchResult res = oracle_cur_search(q, f.index, truth, cfg);
  CHECK(res.calls_used == 20);
  auto expected = exact_topk(truth, f.index.item_ids, 10);
  CHECK(topk_recall(retrieved_set(res), expected) == 1.0);
}

// ---------------------------------------------------------------------------
// approximate_all_scores

TEST_CASE("with every item anchored, a rank-spanning fit reproduces the row") {
  // k_q equals the latent rank, so R_anc has full row rank and the test
  // row lies in its row space.
  Fixture f = make_fixture(90, 6, 6, 0.0, 114);
  const QueryId q = f.corpus.test_queries[0];
  DenseVector truth = truth_row(f, q);

  AnchorState anchors;
  anchors.anchor_ids = f.corpus.items;
  anchors.exact_scores = truth;
  anchors.round_added.assign(f.corpus.items.size(), 1);

  DenseVector approx = approximate_all_scores(anchors, f.index);
  CHECK(testutil::max_abs_diff(approx, truth) < 1e-8);
}

TEST_CASE("single-anchor approximation has the closed pinv form") {
  Fixture f = make_fixture(40, 6, 3, 0.2, 115);
  const QueryId q = f.corpus.test_queries[1];
  const ItemId anchor = f.corpus.items[17];
  const double s = f.scorer->score(q, anchor);

  AnchorState anchors;
  anchors.anchor_ids = {anchor};
  anchors.exact_scores = DenseVector(std::vector<double>{s});
  anchors.round_added = {1};
  DenseVector approx = approximate_all_scores(anchors, f.index);

  // pinv of a single column c is c^T / ||c||^2, so S = (s/||c||^2) c^T R.
  const auto col = f.index.column_of(anchor);
  double norm_sq = 0.0;
  for (std::size_t r = 0; r < f.index.num_train_queries(); ++r) {
    norm_sq += f.index.r_anc(r, col) * f.index.r_anc(r, col);
  }
  for (std::size_t i = 0; i < f.index.num_items(); ++i) {
    double dot = 0.0;
    for (std::size_t r = 0; r < f.index.num_train_queries(); ++r) {
      dot += f.index.r_anc(r, col) * f.index.r_anc(r, i);
    }
    CHECK(approx[i] == doctest::Approx((s / norm_sq) * dot).epsilon(1e-10));
  }
}

TEST_CASE("full-column-rank anchors are reproduced exactly") {
  Fixture f = make_fixture(200, 24, 8, 0.3, 116);
  const QueryId q = f.corpus.test_queries[2];
  auto gen = testutil::rng(900);
  auto picks = sample_without_replacement(200, 16, gen);

  AnchorState anchors;
  for (auto p : picks) {
    anchors.anchor_ids.push_back(f.corpus.items[p]);
    anchors.round_added.push_back(1);
    anchors.exact_scores.append(f.scorer->score(q, f.corpus.items[p]));
  }
  DenseMatrix sub = f.index.anchor_columns(f.index.columns_of(anchors.anchor_ids));
  REQUIRE(testutil::numerical_rank(sub, 1e-10) == 16);

  DenseVector approx = approximate_all_scores(anchors, f.index);
  for (std::size_t i = 0; i < anchors.size(); ++i) {
    const auto col = f.index.column_of(anchors.anchor_ids[i]);
    CHECK(std::abs(approx[col] - anchors.exact_scores[i]) < 1e-8);
  }
}

// ---------------------------------------------------------------------------
// rerank_retrieve

TEST_CASE("rerank with a perfect first stage has recall 1.0") {
  Fixture f = make_fixture(100, 8, 4, 0.2, 117);
  const QueryId q = f.corpus.test_queries[0];
  DenseVector truth = truth_row(f, q);
  auto perfect_order = exact_topk(truth, f.index.item_ids, 100);
  FixedOrderRetriever retriever(perfect_order);

  SearchResult res = rerank_retrieve(q, *f.scorer, retriever, 20, 10);
  auto expected = exact_topk(truth, f.index.item_ids, 10);
  CHECK(topk_recall(retrieved_set(res), expected) == 1.0);
  CHECK(res.calls_used == 20);
}

TEST_CASE("rerank with an adversarial first stage has recall 0.0") {
  Fixture f = make_fixture(100, 8, 4, 0.2, 118);
  const QueryId q = f.corpus.test_queries[1];
  DenseVector truth = truth_row(f, q);
  auto order = exact_topk(truth, f.index.item_ids, 100);
  std::reverse(order.begin(), order.end());
  FixedOrderRetriever retriever(order);

  SearchResult res = rerank_retrieve(q, *f.scorer, retriever, 30, 10);
  auto expected = exact_topk(truth, f.index.item_ids, 10);
  CHECK(topk_recall(retrieved_set(res), expected) == 0.0);
}

TEST_CASE("random rerank hits the hypergeometric expectation at k=1") {
  Fixture f = make_fixture(50, 6, 3, 0.2, 119, 2);
  const QueryId q = f.corpus.test_queries[0];
  DenseVector truth = truth_row(f, q);
  auto top1 = exact_topk(truth, f.index.item_ids, 1);

  const int trials = 1000;
  int hits = 0;
  for (int t = 0; t < trials; ++t) {
    RandomRetriever retriever(f.corpus.items, 1000 + t);
    SearchResult res = rerank_retrieve(q, *f.scorer, retriever, 10, 1);
    hits += topk_recall(retrieved_set(res), top1) == 1.0 ? 1 : 0;
  }
  const double p = 10.0 / 50.0;
  const double sigma = std::sqrt(p * (1 - p) / trials);
  CHECK(std::abs(double(hits) / trials - p) < 3 * sigma + 1e-9);
}

TEST_CASE("rerank validates budget >= k") {
  Fixture f = make_fixture(30, 4, 2, 0.1, 120);
  RandomRetriever retriever(f.corpus.items, 1);
  CHECK_THROWS_AS(rerank_retrieve("t000000", *f.scorer, retriever, 3, 5), ConfigError);
}

// ---------------------------------------------------------------------------
// budget invariant fuzz (the acceptance suite runs the full 1000)

TEST_CASE("ledger spend is always min(budget, reachable pool)") {
  auto gen = testutil::rng(4242);
  for (int iter = 0; iter < 60; ++iter) {
    std::uniform_int_distribution<std::size_t> items_d(5, 120), kq_d(2, 12);
    const std::size_t n_items = items_d(gen);
    Fixture f = make_fixture(n_items, kq_d(gen), 2, 0.2, 5000 + iter, 2);
    const QueryId q = f.corpus.test_queries[0];

    std::uniform_int_distribution<std::uint64_t> budget_d(1, n_items + 20);
    std::uniform_int_distribution<int> method_d(0, 2), pool_coin(0, 1);
    const std::uint64_t budget = budget_d(gen);
    std::optional<std::size_t> pool;
    RandomRetriever retriever(f.corpus.items, 99);
    if (pool_coin(gen) == 1) {
      std::uniform_int_distribution<std::size_t> pool_d(1, n_items + 10);
      pool = pool_d(gen);
    }
    const std::size_t reachable =
        pool.has_value() ? std::min(*pool, n_items) : n_items;
    const std::uint64_t expected = std::min<std::uint64_t>(budget, reachable);

    const int method = method_d(gen);
    std::uint64_t spent = 0;
    if (method == 0) {
      SearchConfig cfg;
      cfg.budget = budget;
      std::uniform_int_distribution<std::uint32_t> rounds_d(
          1, static_cast<std::uint32_t>(std::min<std::uint64_t>(budget, 6)));
      cfg.rounds = rounds_d(gen);
      cfg.strategy = static_cast<Strategy>(iter % 3);
      cfg.k = 1;
      cfg.seed = iter;
      cfg.candidate_pool = pool;
      if (pool.has_value()) cfg.retriever = &retriever;
      spent = adacur_search(q, f.index, *f.scorer, cfg).calls_used;
    } else if (method == 1 && budget >= 2) {
      AnncurConfig cfg;
      cfg.budget = budget;
      std::uniform_int_distribution<std::size_t> ki_d(1, budget - 1);
      cfg.num_anchors = ki_d(gen);
      cfg.k = 1;
      cfg.seed = iter;
      cfg.candidate_pool = pool;
      if (pool.has_value()) cfg.retriever = &retriever;
      spent = anncur_search(q, f.index, *f.scorer, cfg).calls_used;
    } else {
      spent = rerank_retrieve(q, *f.scorer, retriever, budget, 1).calls_used;
      CHECK(spent == std::min<std::uint64_t>(budget, n_items));
      continue;
    }
    CHECK(spent == expected);
  }
}
