#include "adacur/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "adacur/errors.hpp"
#include "adacur/remote_scorer.hpp"
#include "adacur/rng.hpp"

namespace adacur {

// ---------------------------------------------------------------------------
// Metrics

double topk_recall(const std::unordered_set<ItemId>& retrieved,
                   std::span<const ItemId> exact_topk) {
  if (exact_topk.empty()) {
    throw std::invalid_argument("topk_recall: empty ground-truth list");
  }
  std::unordered_set<ItemId> seen;
  std::size_t hits = 0;
  for (const ItemId& id : exact_topk) {
    if (!seen.insert(id).second) {
      throw std::invalid_argument("topk_recall: duplicate id in ground truth");
    }
    if (retrieved.contains(id)) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(exact_topk.size());
}

std::vector<ItemId> exact_topk(const DenseVector& full_scores,
                               std::span<const ItemId> item_ids, std::size_t k) {
  if (item_ids.size() != full_scores.size()) {
    throw std::invalid_argument("exact_topk: ids and scores lengths disagree");
  }
  if (k > item_ids.size()) {
    throw std::invalid_argument("exact_topk: k > |I|");
  }
  std::vector<std::size_t> order(item_ids.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k),
                    order.end(), [&](std::size_t a, std::size_t b) {
                      if (full_scores[a] != full_scores[b]) {
                        return full_scores[a] > full_scores[b];
                      }
                      return item_ids[a] < item_ids[b];
                    });
  std::vector<ItemId> out;
  out.reserve(k);
  for (std::size_t i = 0; i < k; ++i) out.push_back(item_ids[order[i]]);
  return out;
}

double approximation_error(const DenseVector& approx, const DenseVector& exact) {
  if (approx.size() != exact.size()) {
    throw std::invalid_argument("approximation_error: lengths disagree");
  }
  if (approx.empty()) return 0.0;
  double sum = 0.0;
  for (std::size_t i = 0; i < approx.size(); ++i) {
    sum += std::abs(approx[i] - exact[i]);
  }
  return sum / static_cast<double>(approx.size());
}

double approximation_error(const DenseVector& approx, const DenseVector& exact,
                           std::span<const std::uint32_t> subset) {
  if (approx.size() != exact.size()) {
    throw std::invalid_argument("approximation_error: lengths disagree");
  }
  if (subset.empty()) return 0.0;
  double sum = 0.0;
  for (std::uint32_t i : subset) {
    if (i >= approx.size()) {
      throw std::invalid_argument("approximation_error: subset index out of range");
    }
    sum += std::abs(approx[i] - exact[i]);
  }
  return sum / static_cast<double>(subset.size());
}

// ---------------------------------------------------------------------------
// Statistics

double mean_of(std::span<const double> xs) {
  if (xs.empty()) return 0.0;
  double s = 0.0;
  for (double x : xs) s += x;
  return s / static_cast<double>(xs.size());
}

double stddev_of(std::span<const double> xs) {
  if (xs.size() < 2) return 0.0;
  const double m = mean_of(xs);
  double s = 0.0;
  for (double x : xs) s += (x - m) * (x - m);
  return std::sqrt(s / static_cast<double>(xs.size() - 1));
}

double median_of(std::vector<double> xs) {
  if (xs.empty()) return 0.0;
  std::sort(xs.begin(), xs.end());
  const std::size_t mid = xs.size() / 2;
  if (xs.size() % 2 == 1) return xs[mid];
  return 0.5 * (xs[mid - 1] + xs[mid]);
}

double binomial_tail_geq(std::size_t n, std::size_t k) {
  if (k == 0) return 1.0;
  if (k > n) return 0.0;
  const long double log2n = static_cast<long double>(n) * std::log(2.0L);
  long double sum = 0.0L;
  for (std::size_t j = k; j <= n; ++j) {
    const long double log_c = std::lgamma(static_cast<long double>(n) + 1) -
                              std::lgamma(static_cast<long double>(j) + 1) -
                              std::lgamma(static_cast<long double>(n - j) + 1);
    sum += std::exp(log_c - log2n);
  }
  return static_cast<double>(std::min(sum, 1.0L));
}

SignTest paired_sign_test(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) {
    throw std::invalid_argument("paired_sign_test: lengths disagree");
  }
  SignTest t;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i] > b[i]) {
      ++t.n_pos;
    } else if (a[i] < b[i]) {
      ++t.n_neg;
    } else {
      ++t.n_tie;
    }
  }
  const std::size_t n = t.n_pos + t.n_neg;
  if (n == 0) {
    t.p_greater = 1.0;
    t.p_two_sided = 1.0;
    return t;
  }
  t.p_greater = binomial_tail_geq(n, t.n_pos);
  t.p_two_sided = std::min(1.0, 2.0 * binomial_tail_geq(n, std::max(t.n_pos, t.n_neg)));
  return t;
}

// ---------------------------------------------------------------------------
// Timing aggregation

TimingAggregate timing_breakdown(std::span<const TimingBreakdown> rows) {
  TimingAggregate agg;
  std::vector<double> scorer, pinv, matmul, other;
  scorer.reserve(rows.size());
  for (const auto& r : rows) {
    agg.sum += r;
    scorer.push_back(r.scorer_ms);
    pinv.push_back(r.pinv_ms);
    matmul.push_back(r.matmul_ms);
    other.push_back(r.other_ms);
  }
  agg.median.scorer_ms = median_of(std::move(scorer));
  agg.median.pinv_ms = median_of(std::move(pinv));
  agg.median.matmul_ms = median_of(std::move(matmul));
  agg.median.other_ms = median_of(std::move(other));
  const double total = agg.sum.total();
  agg.overhead_fraction = total > 0.0 ? agg.sum.overhead_ms() / total : 0.0;
  return agg;
}

// ---------------------------------------------------------------------------
// Benchmark corpora

namespace {

std::string padded_id(char prefix, std::size_t i) {
  char buf[24];
  std::snprintf(buf, sizeof(buf), "%c%06zu", prefix, i);
  return buf;
}

std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%g", v);
  return buf;
}

}  // namespace

void ClusteredParams::validate() const {
  if (num_items == 0 || num_clusters == 0 || num_items < num_clusters) {
    throw std::invalid_argument("ClusteredParams: need items >= clusters >= 1");
  }
  if (num_train_queries == 0) {
    throw std::invalid_argument("ClusteredParams: train queries required");
  }
  if (dim == 0 || shared_dim == 0 || shared_dim > dim) {
    throw std::invalid_argument("ClusteredParams: need 1 <= shared_dim <= dim");
  }
  if (!(center_residual >= 0.0 && center_residual < 1.0)) {
    throw std::invalid_argument("ClusteredParams: center_residual must be in [0, 1)");
  }
  if (!(local_scale >= 0.0) || !(item_noise >= 0.0) || !(query_local >= 0.0) ||
      !(query_noise >= 0.0) || !(pair_noise >= 0.0) || !(score_scale > 0.0)) {
    throw std::invalid_argument("ClusteredParams: scales must be nonnegative");
  }
}

std::string ClusteredParams::to_string() const {
  std::ostringstream os;
  os << "clustered:items=" << num_items << ",clusters=" << num_clusters
     << ",train=" << num_train_queries << ",test=" << num_test_queries
     << ",dim=" << dim << ",shared=" << shared_dim << ",local=" << local_dim
     << ",centerres=" << format_double(center_residual)
     << ",localscale=" << format_double(local_scale)
     << ",itemnoise=" << format_double(item_noise)
     << ",querylocal=" << format_double(query_local)
     << ",querynoise=" << format_double(query_noise)
     << ",scale=" << format_double(score_scale)
     << ",noise=" << format_double(pair_noise) << ",seed=" << seed;
  return os.str();
}

std::shared_ptr<MatrixScorer> BenchmarkCorpus::make_scorer() const {
  return std::make_shared<MatrixScorer>(truth, all_queries(), items);
}

std::vector<QueryId> BenchmarkCorpus::all_queries() const {
  std::vector<QueryId> qs = train_queries;
  qs.insert(qs.end(), test_queries.begin(), test_queries.end());
  return qs;
}

DenseVector BenchmarkCorpus::exact_scores(const QueryId& query) const {
  for (std::size_t i = 0; i < train_queries.size(); ++i) {
    if (train_queries[i] == query) {
      auto row = truth.row(i);
      return DenseVector(std::vector<double>(row.begin(), row.end()));
    }
  }
  for (std::size_t i = 0; i < test_queries.size(); ++i) {
    if (test_queries[i] == query) {
      auto row = truth.row(train_queries.size() + i);
      return DenseVector(std::vector<double>(row.begin(), row.end()));
    }
  }
  throw std::invalid_argument("BenchmarkCorpus: unknown query id " + query);
}

BenchmarkCorpus make_lowrank_corpus(const SyntheticCorpusSpec& spec) {
  SyntheticCorpus synth = make_synthetic(spec);
  BenchmarkCorpus corpus;
  corpus.spec_string = spec.to_string();
  corpus.train_queries = std::move(synth.train_queries);
  corpus.test_queries = std::move(synth.test_queries);
  corpus.items = std::move(synth.items);
  corpus.truth = std::move(synth.truth);
  corpus.query_embeddings = std::move(synth.query_factors);
  // Item factors are r x |I|; embeddings are stored row-per-item.
  const auto& f = synth.item_factors;
  DenseMatrix item_emb(f.cols(), f.rows());
  for (std::size_t r = 0; r < f.rows(); ++r) {
    for (std::size_t c = 0; c < f.cols(); ++c) item_emb(c, r) = f(r, c);
  }
  corpus.item_embeddings = std::move(item_emb);
  return corpus;
}

BenchmarkCorpus make_clustered_corpus(const ClusteredParams& p) {
  p.validate();
  std::mt19937_64 rng(p.seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  const std::size_t d = p.dim;
  const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(d));

  // Topic subspace shared by all cluster centers.
  std::vector<double> shared_basis(p.shared_dim * d);
  for (double& x : shared_basis) x = normal(rng) * inv_sqrt_d;

  // Unit-norm centers: a shared-topic mix blended with a private residual
  // direction, so coarse structure is low-rank but no center is fully
  // explained by it.
  DenseMatrix centers(p.num_clusters, d);
  for (std::size_t c = 0; c < p.num_clusters; ++c) {
    std::vector<double> mix(d, 0.0);
    for (std::size_t s = 0; s < p.shared_dim; ++s) {
      const double h = normal(rng);
      for (std::size_t j = 0; j < d; ++j) mix[j] += h * shared_basis[s * d + j];
    }
    std::vector<double> res(d);
    for (double& x : res) x = normal(rng) * inv_sqrt_d;
    auto norm = [](const std::vector<double>& v) {
      double s = 0.0;
      for (double x : v) s += x * x;
      return std::sqrt(s);
    };
    const double nm = norm(mix), nr = norm(res);
    double total = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
      double v = (1.0 - p.center_residual) * (nm > 0 ? mix[j] / nm : 0.0) +
                 p.center_residual * (nr > 0 ? res[j] / nr : 0.0);
      centers(c, j) = v;
      total += v * v;
    }
    total = std::sqrt(total);
    for (std::size_t j = 0; j < d; ++j) centers(c, j) /= total;
  }

  // Per-cluster local subspaces.
  std::vector<double> local_bases(p.num_clusters * p.local_dim * d);
  for (double& x : local_bases) x = normal(rng) * inv_sqrt_d;

  // Items: cluster center + local coordinates + isotropic jitter.
  DenseMatrix item_emb(p.num_items, d);
  for (std::size_t i = 0; i < p.num_items; ++i) {
    const std::size_t c = i % p.num_clusters;
    std::vector<double> z(p.local_dim);
    for (double& x : z) x = normal(rng);
    for (std::size_t j = 0; j < d; ++j) {
      double v = centers(c, j);
      for (std::size_t l = 0; l < p.local_dim; ++l) {
        v += p.local_scale * z[l] * local_bases[(c * p.local_dim + l) * d + j];
      }
      v += p.item_noise * normal(rng) * inv_sqrt_d;
      item_emb(i, j) = v;
    }
  }

  // Queries: near a cluster center, with their own local coordinates.
  const std::size_t nq = p.num_train_queries + p.num_test_queries;
  DenseMatrix query_emb(nq, d);
  std::uniform_int_distribution<std::size_t> pick_cluster(0, p.num_clusters - 1);
  for (std::size_t q = 0; q < nq; ++q) {
    const std::size_t c = pick_cluster(rng);
    std::vector<double> w(p.local_dim);
    for (double& x : w) x = normal(rng);
    for (std::size_t j = 0; j < d; ++j) {
      double v = centers(c, j);
      for (std::size_t l = 0; l < p.local_dim; ++l) {
        v += p.query_local * w[l] * local_bases[(c * p.local_dim + l) * d + j];
      }
      v += p.query_noise * normal(rng) * inv_sqrt_d;
      query_emb(q, j) = p.score_scale * v;
    }
  }

  // Ground truth: embedding dot products plus per-pair noise.
  DenseMatrix items_t(d, p.num_items);
  for (std::size_t i = 0; i < p.num_items; ++i) {
    for (std::size_t j = 0; j < d; ++j) items_t(j, i) = item_emb(i, j);
  }
  DenseMatrix truth = matmul(query_emb, items_t);
  if (p.pair_noise > 0.0) {
    for (double& x : truth.data()) x += p.pair_noise * normal(rng);
  }

  BenchmarkCorpus corpus;
  corpus.spec_string = p.to_string();
  corpus.train_queries.reserve(p.num_train_queries);
  for (std::size_t i = 0; i < p.num_train_queries; ++i) {
    corpus.train_queries.push_back(padded_id('q', i));
  }
  corpus.test_queries.reserve(p.num_test_queries);
  for (std::size_t i = 0; i < p.num_test_queries; ++i) {
    corpus.test_queries.push_back(padded_id('t', i));
  }
  corpus.items.reserve(p.num_items);
  for (std::size_t i = 0; i < p.num_items; ++i) {
    corpus.items.push_back(padded_id('i', i));
  }
  corpus.truth = std::move(truth);
  corpus.query_embeddings = std::move(query_emb);
  corpus.item_embeddings = std::move(item_emb);
  return corpus;
}

// ---------------------------------------------------------------------------
// Spec-string parsing

namespace {

std::unordered_map<std::string, std::string> parse_kv(const std::string& body,
                                                      const std::string& where) {
  std::unordered_map<std::string, std::string> kv;
  std::stringstream ss(body);
  std::string token;
  while (std::getline(ss, token, ',')) {
    if (token.empty()) continue;
    const auto eq = token.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(where + ": expected key=value, got '" + token + "'");
    }
    const std::string key = token.substr(0, eq);
    if (!kv.emplace(key, token.substr(eq + 1)).second) {
      throw ConfigError(where + ": duplicate key '" + key + "'");
    }
  }
  return kv;
}

template <typename T>
T parse_number(const std::string& s, const std::string& where) {
  try {
    if constexpr (std::is_floating_point_v<T>) {
      return static_cast<T>(std::stod(s));
    } else {
      return static_cast<T>(std::stoull(s));
    }
  } catch (const std::exception&) {
    throw ConfigError(where + ": cannot parse number '" + s + "'");
  }
}

template <typename T>
void take(std::unordered_map<std::string, std::string>& kv, const char* key, T& out,
          const std::string& where) {
  auto it = kv.find(key);
  if (it == kv.end()) return;
  out = parse_number<T>(it->second, where + "." + key);
  kv.erase(it);
}

void reject_leftovers(const std::unordered_map<std::string, std::string>& kv,
                      const std::string& where) {
  if (!kv.empty()) {
    throw ConfigError(where + ": unknown key '" + kv.begin()->first + "'");
  }
}

}  // namespace

BenchmarkCorpus make_benchmark_corpus(const std::string& spec_string) {
  const auto colon = spec_string.find(':');
  const std::string kind = spec_string.substr(0, colon);
  const std::string body =
      colon == std::string::npos ? std::string() : spec_string.substr(colon + 1);

  if (kind == "synth") {
    auto kv = parse_kv(body, "synth corpus");
    SyntheticCorpusSpec spec;
    take(kv, "items", spec.num_items, "synth");
    take(kv, "queries", spec.num_train_queries, "synth");
    take(kv, "test", spec.num_test_queries, "synth");
    take(kv, "r", spec.latent_rank, "synth");
    take(kv, "sigma", spec.noise_std, "synth");
    take(kv, "seed", spec.seed, "synth");
    reject_leftovers(kv, "synth corpus");
    return make_lowrank_corpus(spec);
  }
  if (kind == "clustered") {
    auto kv = parse_kv(body, "clustered corpus");
    ClusteredParams p;
    take(kv, "items", p.num_items, "clustered");
    take(kv, "clusters", p.num_clusters, "clustered");
    take(kv, "train", p.num_train_queries, "clustered");
    take(kv, "test", p.num_test_queries, "clustered");
    take(kv, "dim", p.dim, "clustered");
    take(kv, "shared", p.shared_dim, "clustered");
    take(kv, "local", p.local_dim, "clustered");
    take(kv, "centerres", p.center_residual, "clustered");
    take(kv, "localscale", p.local_scale, "clustered");
    take(kv, "itemnoise", p.item_noise, "clustered");
    take(kv, "querylocal", p.query_local, "clustered");
    take(kv, "querynoise", p.query_noise, "clustered");
    take(kv, "scale", p.score_scale, "clustered");
    take(kv, "noise", p.pair_noise, "clustered");
    take(kv, "seed", p.seed, "clustered");
    reject_leftovers(kv, "clustered corpus");
    return make_clustered_corpus(p);
  }
  throw ConfigError("unknown corpus kind '" + kind + "' (expected synth|clustered)");
}

std::shared_ptr<Scorer> make_scorer_from_spec(const std::string& spec,
                                              int remote_timeout_ms,
                                              int remote_retries) {
  const auto colon = spec.find(':');
  const std::string kind = spec.substr(0, colon);
  if (kind == "matrix") {
    if (colon == std::string::npos || colon + 1 >= spec.size()) {
      throw ConfigError("matrix scorer: missing path");
    }
    CurIndex container = load_index(spec.substr(colon + 1));
    return std::make_shared<MatrixScorer>(std::move(container.r_anc),
                                          std::move(container.train_query_ids),
                                          std::move(container.item_ids));
  }
  if (kind == "synth" || kind == "clustered") {
    return make_benchmark_corpus(spec).make_scorer();
  }
  if (kind == "remote") {
    if (colon == std::string::npos || colon + 1 >= spec.size()) {
      throw ConfigError("remote scorer: missing url");
    }
    RemoteOptions opts;
    opts.timeout_ms = remote_timeout_ms;
    opts.retries = remote_retries;
    return std::make_shared<RemoteScorer>(spec.substr(colon + 1), opts);
  }
  throw ConfigError("unknown scorer spec '" + spec +
                    "' (expected matrix:|synth:|clustered:|remote:)");
}

}  // namespace adacur
