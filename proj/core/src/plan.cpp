#include "adacur/plan.hpp"

#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "adacur/errors.hpp"

namespace adacur {

namespace {

using nlohmann::json;

[[noreturn]] void fail(const std::string& msg) { throw ConfigError("plan: " + msg); }

void expect_keys(const json& obj, std::initializer_list<const char*> allowed,
                 const std::string& where) {
  for (const auto& [key, value] : obj.items()) {
    bool known = false;
    for (const char* a : allowed) {
      if (key == a) {
        known = true;
        break;
      }
    }
    if (!known) fail("unknown key '" + key + "' in " + where);
  }
}

template <typename T>
T get_or(const json& obj, const char* key, T fallback) {
  if (!obj.contains(key)) return fallback;
  try {
    return obj.at(key).get<T>();
  } catch (const json::exception&) {
    fail(std::string("field '") + key + "' has the wrong type");
  }
}

MethodPlan parse_method(const json& obj) {
  if (!obj.is_object()) fail("each method entry must be an object");
  expect_keys(obj,
              {"name", "budgets", "rounds", "strategies", "init", "splits", "k_m",
               "eps", "pool"},
              "method entry");
  MethodPlan mp;
  if (!obj.contains("name")) fail("method entry missing 'name'");
  mp.name = obj.at("name").get<std::string>();
  mp.budgets = get_or<std::vector<std::uint64_t>>(obj, "budgets", {});
  mp.rounds = get_or<std::vector<std::uint32_t>>(obj, "rounds", {5});
  if (obj.contains("strategies")) {
    mp.strategies.clear();
    for (const auto& s : obj.at("strategies")) {
      mp.strategies.push_back(strategy_from_string(s.get<std::string>()));
    }
  }
  mp.init = get_or<std::string>(obj, "init", "random");
  if (obj.contains("splits")) {
    const auto& splits = obj.at("splits");
    if (splits.is_string()) {
      if (splits.get<std::string>() != "sweep") {
        fail("'splits' must be an array of k_i values or the string \"sweep\"");
      }
      // empty splits means sweep
    } else {
      mp.splits = splits.get<std::vector<std::size_t>>();
    }
  }
  mp.k_m = get_or<std::size_t>(obj, "k_m", 0);
  mp.eps = get_or<double>(obj, "eps", 0.0);
  if (obj.contains("pool")) mp.pool = obj.at("pool").get<std::size_t>();
  return mp;
}

std::pair<std::size_t, std::size_t> line_col(const std::string& text, std::size_t byte) {
  std::size_t line = 1, col = 1;
  for (std::size_t i = 0; i < std::min(byte, text.size()); ++i) {
    if (text[i] == '\n') {
      ++line;
      col = 1;
    } else {
      ++col;
    }
  }
  return {line, col};
}

}  // namespace

ExperimentPlan parse_plan_text(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    const auto [line, col] = line_col(text, e.byte > 0 ? e.byte - 1 : 0);
    std::ostringstream os;
    os << "plan: JSON syntax error at line " << line << ", column " << col << ": "
       << e.what();
    throw ConfigError(os.str());
  }
  if (!doc.is_object()) fail("top level must be an object");
  expect_keys(doc,
              {"corpus", "index", "scorer", "test_query_ids", "methods", "ks",
               "test_queries", "seed", "scorer_latency_ms", "timing", "threads",
               "out_csv", "out_json"},
              "top level");

  ExperimentPlan plan;
  plan.corpus_spec = get_or<std::string>(doc, "corpus", "");
  plan.index_path = get_or<std::string>(doc, "index", "");
  plan.scorer_spec = get_or<std::string>(doc, "scorer", "");
  plan.test_query_ids = get_or<std::vector<QueryId>>(doc, "test_query_ids", {});
  if (!doc.contains("methods")) fail("missing 'methods'");
  if (!doc.at("methods").is_array()) fail("'methods' must be an array");
  for (const auto& entry : doc.at("methods")) {
    plan.methods.push_back(parse_method(entry));
  }
  if (doc.contains("ks")) plan.ks = doc.at("ks").get<std::vector<std::size_t>>();
  plan.num_test_queries = get_or<std::size_t>(doc, "test_queries", 0);
  plan.seed = get_or<std::uint64_t>(doc, "seed", 0);
  plan.scorer_latency_ms = get_or<double>(doc, "scorer_latency_ms", 0.0);
  plan.include_timing = get_or<bool>(doc, "timing", true);
  plan.threads = get_or<int>(doc, "threads", 1);
  plan.out_csv = get_or<std::string>(doc, "out_csv", "");
  plan.out_json = get_or<std::string>(doc, "out_json", "");
  plan.validate();
  return plan;
}

ExperimentPlan parse_plan_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) {
    throw ConfigError("plan: cannot open " + path.string());
  }
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return parse_plan_text(buffer.str());
}

}  // namespace adacur
