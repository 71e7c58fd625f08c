#pragma once

#include <string>

#include "adacur/scorer.hpp"

namespace adacur {

struct RemoteOptions {
  int timeout_ms = 5000;
  int retries = 2;  // attempts = retries + 1
};

/// JSON-over-HTTP scoring client. One POST /score per batch:
///   request  {"query_id": string, "item_ids": [string, ...]}
///   response {"scores": [float64, ...]}
/// Anything other than a well-formed 200 response counts as a failed
/// attempt; once attempts are exhausted a TransportError is thrown.
class RemoteScorer : public Scorer {
 public:
  explicit RemoteScorer(std::string base_url, RemoteOptions options = {});

  std::vector<double> score_batch(const QueryId& query,
                                  std::span<const ItemId> items) override;
  std::string fingerprint() const override;

  const std::string& base_url() const { return base_url_; }

 private:
  std::string base_url_;
  RemoteOptions options_;
};

}  // namespace adacur
