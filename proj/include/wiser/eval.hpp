#pragma once

#include <algorithm>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <map>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "wiser/core.hpp"
#include "wiser/pipeline.hpp"

namespace wiser {

// ---------------------------------------------------------------------------
// Metrics
// ---------------------------------------------------------------------------

inline int recall_at_k(const std::vector<std::string>& ranking, const std::set<std::string>& gt,
                       int k) {
  if (gt.empty()) throw Error(ErrorCode::EMPTY_GT, "recall_at_k");
  if (k < 1) throw Error(ErrorCode::RANGE, "k");
  const std::size_t cutoff = std::min<std::size_t>(static_cast<std::size_t>(k), ranking.size());
  for (std::size_t i = 0; i < cutoff; ++i)
    if (gt.count(ranking[i])) return 1;
  return 0;
}

// CIRR subset protocol: `subset_ranking` is the pipeline's ordering of the six
// curated members.
inline int recall_subset_at_k(const std::vector<std::string>& subset_ranking,
                              const std::set<std::string>& gt, int k) {
  if (subset_ranking.size() != 6) throw Error(ErrorCode::BAD_SUBSET, "subset must have 6 members");
  bool any_gt = false;
  for (const auto& id : subset_ranking) any_gt |= gt.count(id) != 0;
  if (!any_gt) throw Error(ErrorCode::BAD_SUBSET, "subset contains no ground truth");
  return recall_at_k(subset_ranking, gt, k);
}

// AP@k normalized by min(|gt|, k), the CIRCO protocol.
inline double map_at_k(const std::vector<std::string>& ranking, const std::set<std::string>& gt,
                       int k) {
  if (gt.empty()) throw Error(ErrorCode::EMPTY_GT, "map_at_k");
  if (k < 1) throw Error(ErrorCode::RANGE, "k");
  const std::size_t cutoff = std::min<std::size_t>(static_cast<std::size_t>(k), ranking.size());
  double sum = 0.0;
  int hits = 0;
  for (std::size_t i = 0; i < cutoff; ++i) {
    if (gt.count(ranking[i])) {
      ++hits;
      sum += static_cast<double>(hits) / static_cast<double>(i + 1);
    }
  }
  const double denom = static_cast<double>(std::min<std::size_t>(gt.size(), k));
  return sum / denom;
}

// ---------------------------------------------------------------------------
// Dataset I/O
//
// One JSON schema for all benchmarks:
//   {"queries": [{"query_id", "reference_id", "modification_text",
//                 "ground_truth_ids": [...], "subset_ids": [...]?,
//                 "category"?}, ...],
//    "database": [{"id", "image"}, ...]}
// ---------------------------------------------------------------------------

struct Dataset {
  std::vector<ComposedQuery> queries;
  std::map<std::string, std::string> manifest;  // item id -> image locator
};

inline Dataset load_dataset(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::IO_ERROR, "cannot open dataset: " + path);
  nlohmann::json j = nlohmann::json::parse(in, nullptr, false);
  if (j.is_discarded()) throw Error(ErrorCode::SCHEMA_ERROR, "dataset is not valid JSON: " + path);
  if (!j.is_object() || !j.contains("queries") || !j.contains("database"))
    throw Error(ErrorCode::SCHEMA_ERROR, "dataset: expected {\"queries\", \"database\"}");

  try {
  Dataset ds;
  int entry_no = 0;
  for (const auto& item : j["database"]) {
    ++entry_no;
    if (!item.is_object() || !item.contains("id") || !item.contains("image"))
      throw Error(ErrorCode::SCHEMA_ERROR,
                  "database entry " + std::to_string(entry_no) + ": expected {\"id\", \"image\"}");
    const std::string id = item["id"].get<std::string>();
    if (ds.manifest.count(id)) throw Error(ErrorCode::DUPLICATE_ID, id);
    ds.manifest.emplace(id, item["image"].get<std::string>());
  }

  std::set<std::string> seen_query_ids;
  int query_no = 0;
  for (const auto& q : j["queries"]) {
    ++query_no;
    const std::string where = "query " + std::to_string(query_no);
    if (!q.is_object() || !q.contains("query_id") || !q.contains("reference_id") ||
        !q.contains("modification_text") || !q.contains("ground_truth_ids"))
      throw Error(ErrorCode::SCHEMA_ERROR, where + ": missing required field");
    ComposedQuery query;
    query.query_id = q["query_id"].get<std::string>();
    query.reference_id = q["reference_id"].get<std::string>();
    query.modification_text = q["modification_text"].get<std::string>();
    if (query.query_id.empty()) throw Error(ErrorCode::SCHEMA_ERROR, where + ": empty query_id");
    if (!seen_query_ids.insert(query.query_id).second)
      throw Error(ErrorCode::DUPLICATE_ID, query.query_id);
    if (!ds.manifest.count(query.reference_id))
      throw Error(ErrorCode::MISSING_REFERENCE, query.query_id);
    for (const auto& g : q["ground_truth_ids"]) query.ground_truth_ids.insert(g.get<std::string>());
    if (query.ground_truth_ids.empty())
      throw Error(ErrorCode::SCHEMA_ERROR, where + ": ground_truth_ids is empty");
    if (q.contains("subset_ids") && !q["subset_ids"].is_null()) {
      std::vector<std::string> subset;
      for (const auto& s : q["subset_ids"]) subset.push_back(s.get<std::string>());
      if (subset.size() != 6)
        throw Error(ErrorCode::SCHEMA_ERROR, where + ": subset_ids must have exactly 6 entries");
      bool any_gt = false;
      for (const auto& s : subset) {
        if (!ds.manifest.count(s))
          throw Error(ErrorCode::SCHEMA_ERROR, where + ": subset_ids member not in database: " + s);
        any_gt |= query.ground_truth_ids.count(s) != 0;
      }
      if (!any_gt)
        throw Error(ErrorCode::SCHEMA_ERROR, where + ": subset_ids contains no ground truth");
      query.subset_ids = std::move(subset);
    }
    if (q.contains("category") && q["category"].is_string())
      query.category = q["category"].get<std::string>();
    ds.queries.push_back(std::move(query));
  }
  return ds;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::SCHEMA_ERROR, std::string("dataset: ") + e.what());
  }
}

inline void write_dataset_json(const std::string& path, const std::vector<ComposedQuery>& queries,
                               const std::map<std::string, std::string>& manifest) {
  nlohmann::ordered_json j;
  nlohmann::ordered_json qs = nlohmann::ordered_json::array();
  for (const auto& q : queries) {
    nlohmann::ordered_json qj;
    qj["query_id"] = q.query_id;
    qj["reference_id"] = q.reference_id;
    qj["modification_text"] = q.modification_text;
    qj["ground_truth_ids"] = q.ground_truth_ids;
    if (q.subset_ids) qj["subset_ids"] = *q.subset_ids;
    if (!q.category.empty()) qj["category"] = q.category;
    qs.push_back(std::move(qj));
  }
  j["queries"] = std::move(qs);
  nlohmann::ordered_json db = nlohmann::ordered_json::array();
  for (const auto& [id, locator] : manifest) db.push_back({{"id", id}, {"image", locator}});
  j["database"] = std::move(db);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::IO_ERROR, "cannot write " + path);
  out << j.dump(2) << "\n";
}

// ---------------------------------------------------------------------------
// Reports
// ---------------------------------------------------------------------------

enum class Protocol { CIRCO, CIRR, FASHION_IQ, GENERIC };

inline Protocol parse_protocol(std::string_view text) {
  const std::string s = to_lower(trim(text));
  if (s == "circo") return Protocol::CIRCO;
  if (s == "cirr") return Protocol::CIRR;
  if (s == "fashioniq" || s == "fashion-iq" || s == "fashion_iq") return Protocol::FASHION_IQ;
  if (s == "generic" || s.empty()) return Protocol::GENERIC;
  throw Error(ErrorCode::SCHEMA_ERROR, "unknown protocol '" + std::string(text) + "'");
}

struct MetricReport {
  std::vector<std::pair<std::string, double>> values;  // metric name -> [0,1]
  int query_count = 0;
  int error_count = 0;  // failed queries, counted as misses
  std::string config_fingerprint;

  double value(const std::string& name) const {
    for (const auto& [n, v] : values)
      if (n == name) return v;
    throw Error(ErrorCode::SCHEMA_ERROR, "no metric named " + name);
  }
};

namespace detail {

struct MetricAccum {
  double sum = 0.0;
  int count = 0;
  void add(double v) {
    sum += v;
    ++count;
  }
  double mean() const { return count == 0 ? 0.0 : sum / count; }
};

}  // namespace detail

// Aggregates per-query metrics under the benchmark's protocol. Failed queries
// contribute zero to every metric and are reported separately.
inline MetricReport compute_report(const std::vector<QueryResult>& results, Protocol protocol,
                                   const PipelineConfig& config) {
  MetricReport report;
  report.query_count = static_cast<int>(results.size());
  report.config_fingerprint = config_fingerprint(config);

  const std::vector<int> map_ks = {5, 10, 25, 50};
  const std::vector<int> recall_ks = {1, 5, 10, 50};
  const std::vector<int> rsub_ks = {1, 2, 3};
  const std::vector<int> fiq_ks = {10, 50};

  bool any_subset = false;
  std::set<std::string> categories;
  for (const auto& r : results) {
    if (r.query.subset_ids) any_subset = true;
    categories.insert(r.query.category.empty() ? "all" : r.query.category);
    if (!r.ok) ++report.error_count;
  }

  std::map<std::string, detail::MetricAccum> accum;
  auto add = [&](const std::string& name, double v) { accum[name].add(v); };

  for (const auto& r : results) {
    const auto& gt = r.query.ground_truth_ids;
    auto recall = [&](int k) { return r.ok ? recall_at_k(r.ranking, gt, k) : 0; };
    auto ap = [&](int k) { return r.ok ? map_at_k(r.ranking, gt, k) : 0.0; };

    switch (protocol) {
      case Protocol::CIRCO:
        for (int k : map_ks) add("mAP@" + std::to_string(k), ap(k));
        break;
      case Protocol::CIRR:
        for (int k : recall_ks) add("R@" + std::to_string(k), recall(k));
        for (int k : rsub_ks) {
          double v = 0.0;
          if (r.ok && r.query.subset_ids && r.trace.subset_ranking)
            v = recall_subset_at_k(*r.trace.subset_ranking, gt, k);
          add("Rsub@" + std::to_string(k), v);
        }
        break;
      case Protocol::FASHION_IQ: {
        const std::string cat = r.query.category.empty() ? "all" : r.query.category;
        for (int k : fiq_ks) add(cat + " R@" + std::to_string(k), recall(k));
        break;
      }
      case Protocol::GENERIC:
        for (int k : map_ks) add("mAP@" + std::to_string(k), ap(k));
        for (int k : recall_ks) add("R@" + std::to_string(k), recall(k));
        if (any_subset) {
          for (int k : rsub_ks) {
            double v = 0.0;
            if (r.ok && r.query.subset_ids && r.trace.subset_ranking)
              v = recall_subset_at_k(*r.trace.subset_ranking, gt, k);
            add("Rsub@" + std::to_string(k), v);
          }
        }
        break;
    }
  }

  // Deterministic column order per protocol.
  std::vector<std::string> order;
  switch (protocol) {
    case Protocol::CIRCO:
      for (int k : map_ks) order.push_back("mAP@" + std::to_string(k));
      break;
    case Protocol::CIRR:
      for (int k : recall_ks) order.push_back("R@" + std::to_string(k));
      for (int k : rsub_ks) order.push_back("Rsub@" + std::to_string(k));
      break;
    case Protocol::FASHION_IQ:
      for (const auto& cat : categories)
        for (int k : fiq_ks) order.push_back(cat + " R@" + std::to_string(k));
      // benchmark average = mean across categories, not across queries
      for (int k : fiq_ks) {
        detail::MetricAccum avg;
        for (const auto& cat : categories) {
          auto it = accum.find(cat + " R@" + std::to_string(k));
          if (it != accum.end()) avg.add(it->second.mean());
        }
        accum["Avg R@" + std::to_string(k)] = avg;
        order.push_back("Avg R@" + std::to_string(k));
      }
      break;
    case Protocol::GENERIC:
      for (int k : map_ks) order.push_back("mAP@" + std::to_string(k));
      for (int k : recall_ks) order.push_back("R@" + std::to_string(k));
      if (any_subset)
        for (int k : rsub_ks) order.push_back("Rsub@" + std::to_string(k));
      break;
  }
  for (const auto& name : order)
    if (accum.count(name)) report.values.emplace_back(name, accum[name].mean());
  return report;
}

// Aligned text table; values as percentages with 2 decimals. The machine JSON
// report keeps full precision.
inline std::string render_table(const MetricReport& report) {
  std::string header, row;
  char buf[32];
  for (const auto& [name, value] : report.values) {
    std::snprintf(buf, sizeof buf, "%.2f", value * 100.0);
    const std::size_t width = std::max(name.size(), std::strlen(buf)) + 2;
    header += name;
    header.append(width - name.size(), ' ');
    row += buf;
    row.append(width - std::strlen(buf), ' ');
  }
  std::string out = header + "\n" + row + "\n";
  std::snprintf(buf, sizeof buf, "%d", report.query_count);
  out += "queries: " + std::string(buf);
  if (report.error_count > 0) {
    std::snprintf(buf, sizeof buf, "%d", report.error_count);
    out += "  errors: " + std::string(buf);
  }
  out += "  config: " + report.config_fingerprint + "\n";
  return out;
}

inline nlohmann::ordered_json report_to_json(const MetricReport& report) {
  nlohmann::ordered_json j;
  nlohmann::ordered_json metrics = nlohmann::ordered_json::object();
  for (const auto& [name, value] : report.values) metrics[name] = value;
  j["metrics"] = std::move(metrics);
  j["query_count"] = report.query_count;
  j["error_count"] = report.error_count;
  j["config_fingerprint"] = report.config_fingerprint;
  return j;
}

inline MetricReport emit_report(const std::vector<QueryResult>& results, Protocol protocol,
                                const PipelineConfig& config, std::string* rendered = nullptr) {
  MetricReport report = compute_report(results, protocol, config);
  if (rendered != nullptr) *rendered = render_table(report);
  return report;
}

}  // namespace wiser
