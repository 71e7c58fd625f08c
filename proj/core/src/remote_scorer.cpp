#include "adacur/remote_scorer.hpp"

#include <httplib.h>

#include <nlohmann/json.hpp>

#include "adacur/errors.hpp"

namespace adacur {

RemoteScorer::RemoteScorer(std::string base_url, RemoteOptions options)
    : base_url_(std::move(base_url)), options_(options) {
  if (base_url_.empty()) {
    throw std::invalid_argument("RemoteScorer: empty base url");
  }
}

std::vector<double> RemoteScorer::score_batch(const QueryId& query,
                                              std::span<const ItemId> items) {
  nlohmann::json body;
  body["query_id"] = query;
  body["item_ids"] = std::vector<ItemId>(items.begin(), items.end());
  const std::string payload = body.dump();

  std::string last_error = "no attempt made";
  const int attempts = options_.retries + 1;
  for (int attempt = 0; attempt < attempts; ++attempt) {
    httplib::Client client(base_url_);
    client.set_connection_timeout(0, options_.timeout_ms * 1000);
    client.set_read_timeout(0, options_.timeout_ms * 1000);
    client.set_write_timeout(0, options_.timeout_ms * 1000);

    auto res = client.Post("/score", payload, "application/json");
    if (!res) {
      last_error = "connection failed: " + httplib::to_string(res.error());
      continue;
    }
    if (res->status != 200) {
      last_error = "HTTP status " + std::to_string(res->status);
      continue;
    }
    try {
      auto parsed = nlohmann::json::parse(res->body);
      auto scores = parsed.at("scores").get<std::vector<double>>();
      if (scores.size() != items.size()) {
        last_error = "response score count mismatch";
        continue;
      }
      return scores;
    } catch (const nlohmann::json::exception& e) {
      last_error = std::string("malformed response: ") + e.what();
      continue;
    }
  }
  throw TransportError("RemoteScorer: POST " + base_url_ + "/score failed after " +
                       std::to_string(attempts) + " attempt(s): " + last_error);
}

std::string RemoteScorer::fingerprint() const { return "remote:" + base_url_; }

}  // namespace adacur
