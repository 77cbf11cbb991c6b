#pragma once

#include <atomic>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <map>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "wiser/backends.hpp"
#include "wiser/core.hpp"
#include "wiser/fusion.hpp"
#include "wiser/index.hpp"
#include "wiser/refine.hpp"

namespace wiser {

// Real numbers in traces carry 9 significant digits.
inline double round9(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.9g", x);
  return std::strtod(buf, nullptr);
}

// Canonical serialization: nlohmann's float printer sometimes emits the full
// 17-digit fallback, so reals are formatted here with %.9g instead.
inline void dump_canonical(const nlohmann::ordered_json& j, std::string& out) {
  using value_t = nlohmann::ordered_json::value_t;
  switch (j.type()) {
    case value_t::object: {
      out += '{';
      bool first = true;
      for (const auto& [key, value] : j.items()) {
        if (!first) out += ',';
        first = false;
        out += nlohmann::json(key).dump();
        out += ':';
        dump_canonical(value, out);
      }
      out += '}';
      break;
    }
    case value_t::array: {
      out += '[';
      bool first = true;
      for (const auto& value : j) {
        if (!first) out += ',';
        first = false;
        dump_canonical(value, out);
      }
      out += ']';
      break;
    }
    case value_t::number_float: {
      char buf[40];
      std::snprintf(buf, sizeof buf, "%.9g", j.get<double>());
      out += buf;
      break;
    }
    default:
      out += j.dump();
      break;
  }
}

inline std::string dump_canonical(const nlohmann::ordered_json& j) {
  std::string out;
  dump_canonical(j, out);
  return out;
}

// ---------------------------------------------------------------------------
// Query trace
// ---------------------------------------------------------------------------

struct TracePathway {
  std::string artifact;  // caption text (T2I) or image locator (I2I)
  std::vector<RankedCandidate> topk;
};

struct TraceIteration {
  int iteration = 0;
  std::map<Pathway, TracePathway> paths;
  std::map<std::string, double> confidences;
  std::optional<double> reliability_t2i, reliability_i2i;
  std::optional<std::string> pseudo_target_t2i, pseudo_target_i2i;
  std::vector<Pathway> refine_set;
  std::map<Pathway, std::string> suggestions;
};

struct QueryTrace {
  std::string query_id;
  std::string mode;
  std::string error;  // empty when the query succeeded
  std::vector<std::string> warnings;
  std::vector<TraceIteration> iterations;
  std::vector<std::string> final_ranking;  // truncated to config.trace_depth
  std::optional<std::vector<std::string>> subset_ranking;
  std::map<std::string, double> stage_ms;
  double total_ms = 0.0;
  CallCounts counts;
};

struct QueryResult {
  ComposedQuery query;
  std::vector<std::string> ranking;  // full permutation of the database
  QueryTrace trace;
  bool ok = false;
};

// include_meta=false is the canonical form: wall-clock timings and call
// counts are the only run-dependent fields, so dropping them makes trace
// files byte-comparable across runs and parallelism levels.
inline nlohmann::ordered_json trace_to_json(const QueryTrace& trace, bool include_meta = true) {
  nlohmann::ordered_json j;
  j["query_id"] = trace.query_id;
  j["mode"] = trace.mode;
  if (!trace.error.empty()) j["error"] = trace.error;
  if (!trace.warnings.empty()) j["warnings"] = trace.warnings;

  nlohmann::ordered_json iters = nlohmann::ordered_json::array();
  for (const auto& it : trace.iterations) {
    nlohmann::ordered_json rec;
    rec["iteration"] = it.iteration;
    for (Pathway p : kPathways) {
      auto found = it.paths.find(p);
      if (found == it.paths.end()) continue;
      nlohmann::ordered_json pj;
      pj[p == Pathway::T2I ? "caption" : "image"] = found->second.artifact;
      nlohmann::ordered_json topk = nlohmann::ordered_json::array();
      for (const auto& c : found->second.topk)
        topk.push_back({{"id", c.item_id}, {"sim", round9(c.similarity)}});
      pj["topk"] = std::move(topk);
      rec[p == Pathway::T2I ? "t2i" : "i2i"] = std::move(pj);
    }
    if (!it.confidences.empty()) {
      nlohmann::ordered_json conf = nlohmann::ordered_json::object();
      for (const auto& [id, c] : it.confidences) conf[id] = round9(c);
      rec["confidences"] = std::move(conf);
    }
    if (it.reliability_t2i && it.reliability_i2i) {
      rec["reliability"] = {{"t2i", round9(*it.reliability_t2i)},
                            {"i2i", round9(*it.reliability_i2i)}};
    }
    if (it.pseudo_target_t2i && it.pseudo_target_i2i) {
      rec["pseudo_targets"] = {{"t2i", *it.pseudo_target_t2i}, {"i2i", *it.pseudo_target_i2i}};
    }
    if (!it.refine_set.empty()) {
      nlohmann::ordered_json r = nlohmann::ordered_json::array();
      for (Pathway p : it.refine_set) r.push_back(pathway_name(p));
      rec["refine"] = std::move(r);
    }
    if (!it.suggestions.empty()) {
      nlohmann::ordered_json s = nlohmann::ordered_json::object();
      for (const auto& [p, text] : it.suggestions) s[p == Pathway::T2I ? "t2i" : "i2i"] = text;
      rec["suggestions"] = std::move(s);
    }
    iters.push_back(std::move(rec));
  }
  j["iterations"] = std::move(iters);
  j["final_ranking"] = trace.final_ranking;
  if (trace.subset_ranking) j["subset_ranking"] = *trace.subset_ranking;

  if (include_meta) {
    nlohmann::ordered_json meta;
    nlohmann::ordered_json stages = nlohmann::ordered_json::object();
    for (const auto& [name, ms] : trace.stage_ms) stages[name] = round9(ms);
    meta["stage_ms"] = std::move(stages);
    meta["total_ms"] = round9(trace.total_ms);
    meta["call_counts"] = {{"captioner", trace.counts.captioner},
                           {"editor_text", trace.counts.editor_text},
                           {"editor_image", trace.counts.editor_image},
                           {"verifier", trace.counts.verifier},
                           {"refiner", trace.counts.refiner},
                           {"encoder_text", trace.counts.encoder_text},
                           {"encoder_image", trace.counts.encoder_image}};
    j["meta"] = std::move(meta);
  }
  return j;
}

inline void write_traces(const std::string& path, const std::vector<QueryResult>& results,
                         bool include_meta = true) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::IO_ERROR, "cannot write " + path);
  for (const auto& r : results) out << dump_canonical(trace_to_json(r.trace, include_meta)) << "\n";
}

// Order-preserving restriction of a full ranking to the 6 CIRR subset members.
inline std::vector<std::string> subset_ranking_from(const std::vector<std::string>& ranking,
                                                    const std::vector<std::string>& subset_ids) {
  std::set<std::string> members(subset_ids.begin(), subset_ids.end());
  std::vector<std::string> out;
  out.reserve(members.size());
  for (const auto& id : ranking) {
    if (members.count(id)) {
      out.push_back(id);
      if (out.size() == members.size()) break;
    }
  }
  if (out.size() != members.size())
    throw Error(ErrorCode::BAD_SUBSET, "subset member missing from ranking");
  return out;
}

// ---------------------------------------------------------------------------
// Orchestration
// ---------------------------------------------------------------------------

namespace detail {

// Contiguous stage timer: each stage starts where the previous one ended, so
// the per-stage sum tracks total wall time.
class StageTimer {
 public:
  StageTimer() : start_(clock::now()), last_(start_) {}

  void stage(const std::string& name, std::map<std::string, double>& out) {
    auto now = clock::now();
    out[name] += std::chrono::duration<double, std::milli>(now - last_).count();
    last_ = now;
  }

  double total_ms() const {
    return std::chrono::duration<double, std::milli>(clock::now() - start_).count();
  }

 private:
  using clock = std::chrono::steady_clock;
  clock::time_point start_, last_;
};

inline TraceIteration make_iteration_record(int iteration, const PathwayStates& paths,
                                            const QueryRuntime& rt, const UnionPool* pool,
                                            const GateOutcome* gate_out,
                                            const std::map<Pathway, std::string>* suggestions) {
  TraceIteration rec;
  rec.iteration = iteration;
  for (const auto& [p, state] : paths) {
    TracePathway tp;
    tp.artifact = p == Pathway::T2I ? state.caption->text : state.image->locator;
    tp.topk = state.topk;
    rec.paths.emplace(p, std::move(tp));
  }
  if (pool != nullptr) {
    for (const auto& e : pool->entries) {
      auto it = rt.confidences.find(e.item_id);
      if (it != rt.confidences.end()) rec.confidences.emplace(e.item_id, it->second);
    }
  }
  if (gate_out != nullptr) {
    rec.reliability_t2i = gate_out->reliability_t2i;
    rec.reliability_i2i = gate_out->reliability_i2i;
    rec.pseudo_target_t2i = gate_out->pseudo_target_t2i;
    rec.pseudo_target_i2i = gate_out->pseudo_target_i2i;
    rec.refine_set.assign(gate_out->pathways_to_refine.begin(),
                          gate_out->pathways_to_refine.end());
  }
  if (suggestions != nullptr) rec.suggestions = *suggestions;
  return rec;
}

}  // namespace detail

// Executes the full retrieve-verify-refine flow for one query. Any stage
// error aborts the query; the trace keeps the completed stages.
inline QueryResult run_query(const ComposedQuery& query, const PipelineConfig& raw_config,
                             const BackendSuite& suite, const EmbeddingIndex& index,
                             const std::map<std::string, std::string>& manifest) {
  QueryResult result;
  result.query = query;
  result.trace.query_id = query.query_id;

  detail::StageTimer timer;
  QueryRuntime rt;
  rt.query = &query;
  rt.suite = &suite;
  rt.index = &index;
  rt.manifest = &manifest;

  try {
    const PipelineConfig config = validate_config(raw_config);
    rt.config = &config;
    result.trace.mode = fusion_mode_name(config.fusion_mode, config.rak_pathway);

    const FusionMode mode = config.fusion_mode;
    const bool wants_t2i = mode == FusionMode::ADA || mode == FusionMode::AVG ||
                           mode == FusionMode::T2I_ONLY ||
                           (mode == FusionMode::RAK && config.rak_pathway == Pathway::T2I);
    const bool wants_i2i = mode == FusionMode::ADA || mode == FusionMode::AVG ||
                           mode == FusionMode::I2I_ONLY ||
                           (mode == FusionMode::RAK && config.rak_pathway == Pathway::I2I);

    rt.ref_handle = rt.handle_for(query.reference_id);
    if (wants_t2i) {
      ++rt.counts.captioner;
      rt.ref_caption = suite.captioner->caption_image(rt.ref_handle);
    }
    timer.stage("caption", result.trace.stage_ms);

    if (wants_t2i) {
      PathwayState state;
      state.pathway = Pathway::T2I;
      ++rt.counts.editor_text;
      state.caption = suite.editor->edit_caption(rt.ref_caption, query.modification_text, "");
      rt.paths.emplace(Pathway::T2I, std::move(state));
    }
    if (wants_i2i) {
      PathwayState state;
      state.pathway = Pathway::I2I;
      ++rt.counts.editor_image;
      state.image = suite.editor->edit_image(rt.ref_handle, query.modification_text, "", 1);
      rt.paths.emplace(Pathway::I2I, std::move(state));
    }
    timer.stage("edit", result.trace.stage_ms);

    for (Pathway p : kPathways)
      if (rt.paths.count(p)) rt.retrieve_pathway(p);
    // record the retrieval snapshot now so an aborted verify stage still
    // leaves the completed stages in the trace
    result.trace.iterations.push_back(
        detail::make_iteration_record(0, rt.paths, rt, nullptr, nullptr, nullptr));
    timer.stage("retrieve", result.trace.stage_ms);

    if (mode == FusionMode::ADA) {
      UnionPool pool = rt.rebuild_union();
      rt.verify_pool(pool);
      GateOutcome gate_out = rt.compute_gate(pool);
      timer.stage("verify", result.trace.stage_ms);

      result.trace.iterations.back() =
          detail::make_iteration_record(0, rt.paths, rt, &pool, &gate_out, nullptr);

      RefinementState state;
      std::vector<RefinementRound> rounds = run_refinement_loop(rt, pool, gate_out, state);
      for (const auto& round : rounds)
        result.trace.iterations.push_back(detail::make_iteration_record(
            round.iteration, round.paths, rt, &round.pool, &round.gate, &round.suggestions));
      timer.stage("refine", result.trace.stage_ms);

      std::vector<VerifiedCandidate> candidates = verified_candidates(pool, rt.confidences);
      if (config.strict_gate_fusion && !gate_out.pathways_to_refine.empty()) {
        // Drop candidates seen only by still-uncertain pathways, unless that
        // would empty the pool.
        std::vector<VerifiedCandidate> kept;
        const bool t2i_bad = gate_out.pathways_to_refine.count(Pathway::T2I) != 0;
        const bool i2i_bad = gate_out.pathways_to_refine.count(Pathway::I2I) != 0;
        for (const auto& c : candidates) {
          const bool only_bad = !(c.in_t2i && !t2i_bad) && !(c.in_i2i && !i2i_bad);
          if (!only_bad) kept.push_back(c);
        }
        if (!kept.empty()) candidates = std::move(kept);
      }
      std::vector<std::string> fused = fuse_rank(candidates);
      timer.stage("fuse", result.trace.stage_ms);

      result.ranking = full_ranking(fused, rt.paths, index);
    } else {
      const std::map<std::string, double>* conf_ptr = nullptr;
      if (mode == FusionMode::RAK) {
        for (const auto& c : rt.paths.at(config.rak_pathway).topk) rt.verify_candidate(c.item_id);
        conf_ptr = &rt.confidences;
        UnionPool pool = rt.rebuild_union();
        result.trace.iterations.back() =
            detail::make_iteration_record(0, rt.paths, rt, &pool, nullptr, nullptr);
      }
      timer.stage("verify", result.trace.stage_ms);

      result.ranking =
          baseline_rank(mode, config.rak_pathway, config.lambda, rt.paths, index, conf_ptr);
      timer.stage("fuse", result.trace.stage_ms);
    }

    if (query.subset_ids) {
      result.trace.subset_ranking = subset_ranking_from(result.ranking, *query.subset_ids);
    }
    const std::size_t depth =
        std::min<std::size_t>(result.ranking.size(), static_cast<std::size_t>(config.trace_depth));
    result.trace.final_ranking.assign(result.ranking.begin(), result.ranking.begin() + depth);
    timer.stage("rank", result.trace.stage_ms);

    result.ok = true;
  } catch (const std::exception& e) {
    result.trace.error = e.what();
    result.ok = false;
  }

  result.trace.warnings = rt.warnings;
  result.trace.counts = rt.counts;
  result.trace.total_ms = timer.total_ms();
  return result;
}

// Runs queries concurrently up to backend_parallelism; results keep input
// order and failed queries yield error traces instead of aborting the batch.
inline std::vector<QueryResult> run_batch(const std::vector<ComposedQuery>& queries,
                                          const PipelineConfig& config, const BackendSuite& suite,
                                          const EmbeddingIndex& index,
                                          const std::map<std::string, std::string>& manifest) {
  std::vector<QueryResult> results(queries.size());
  const int workers =
      std::max(1, std::min<int>(config.backend_parallelism, static_cast<int>(queries.size())));
  if (workers == 1) {
    for (std::size_t i = 0; i < queries.size(); ++i)
      results[i] = run_query(queries[i], config, suite, index, manifest);
    return results;
  }

  std::atomic<std::size_t> next{0};
  std::vector<std::thread> threads;
  threads.reserve(workers);
  for (int w = 0; w < workers; ++w) {
    threads.emplace_back([&] {
      while (true) {
        const std::size_t i = next.fetch_add(1);
        if (i >= queries.size()) break;
        results[i] = run_query(queries[i], config, suite, index, manifest);
      }
    });
  }
  for (auto& t : threads) t.join();
  return results;
}

}  // namespace wiser
