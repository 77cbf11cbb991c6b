#pragma once

#include <array>
#include <map>
#include <string>
#include <unordered_map>
#include <vector>

#include "wiser/backends.hpp"
#include "wiser/core.hpp"
#include "wiser/fusion.hpp"
#include "wiser/index.hpp"

namespace wiser {

// Per-query logical backend invocations. Verifier counts are post-dedup so
// they stay deterministic under any parallelism.
struct CallCounts {
  int captioner = 0;
  int editor_text = 0;
  int editor_image = 0;
  int verifier = 0;
  int refiner = 0;
  int encoder_text = 0;
  int encoder_image = 0;
};

struct PathwayRefinement {
  bool satisfied = false;
  std::vector<std::string> suggestions;  // arrival order
};

struct RefinementState {
  int iteration = 0;  // refinement rounds executed, <= N
  std::array<PathwayRefinement, 2> per_path;

  PathwayRefinement& path(Pathway p) { return per_path[static_cast<int>(p)]; }
  const PathwayRefinement& path(Pathway p) const { return per_path[static_cast<int>(p)]; }
};

// Everything one query's execution needs: shared immutable inputs plus the
// per-query caches and counters. One instance per query, single-threaded.
struct QueryRuntime {
  const ComposedQuery* query = nullptr;
  const PipelineConfig* config = nullptr;
  const BackendSuite* suite = nullptr;
  const EmbeddingIndex* index = nullptr;
  const std::map<std::string, std::string>* manifest = nullptr;  // item id -> locator

  Caption ref_caption{"-"};
  ImageHandle ref_handle;
  PathwayStates paths;
  std::map<std::string, double> confidences;  // item id -> verifier confidence, deduped
  CallCounts counts;
  std::vector<std::string> warnings;

  ImageHandle handle_for(const std::string& item_id) const {
    auto it = manifest->find(item_id);
    if (it == manifest->end()) throw Error(ErrorCode::MISSING_REFERENCE, item_id);
    return ImageHandle::reference(it->second);
  }

  // Verifier dedup: one call per (query, candidate); the verifier's inputs do
  // not change across refinement iterations, so results carry over.
  double verify_candidate(const std::string& item_id) {
    auto it = confidences.find(item_id);
    if (it != confidences.end()) return it->second;
    ++counts.verifier;
    VerifierLogits logits =
        suite->verifier->verify(ref_handle, query->modification_text, handle_for(item_id));
    double conf = confidence_from_logits(logits);
    confidences.emplace(item_id, conf);
    return conf;
  }

  void verify_pool(const UnionPool& pool) {
    for (const auto& e : pool.entries) verify_candidate(e.item_id);
  }

  // Re-encodes the pathway's current artifact and re-runs its top-K.
  void retrieve_pathway(Pathway p) {
    PathwayState& state = paths.at(p);
    if (p == Pathway::T2I) {
      ++counts.encoder_text;
      state.query_vec = suite->text_encoder->encode_text(*state.caption);
    } else {
      ++counts.encoder_image;
      state.query_vec = suite->image_encoder->encode_image(*state.image);
    }
    state.topk = top_k(*index, state.query_vec, config->top_k);
  }

  UnionPool rebuild_union() const {
    static const std::vector<RankedCandidate> kEmpty;
    const auto* t = paths.count(Pathway::T2I) ? &paths.at(Pathway::T2I).topk : &kEmpty;
    const auto* v = paths.count(Pathway::I2I) ? &paths.at(Pathway::I2I).topk : &kEmpty;
    return union_candidates(*t, *v);
  }

  GateOutcome compute_gate(const UnionPool& pool) const {
    GateOutcome out;
    auto [pt_t, r_t] = pathway_reliability(pool, confidences, Pathway::T2I);
    auto [pt_i, r_i] = pathway_reliability(pool, confidences, Pathway::I2I);
    out.reliability_t2i = r_t;
    out.reliability_i2i = r_i;
    out.pseudo_target_t2i = pt_t;
    out.pseudo_target_i2i = pt_i;
    out.pathways_to_refine = gate(r_t, r_i, config->tau);
    return out;
  }
};

// ---------------------------------------------------------------------------
// Deeper Thinking: structured self-reflection on uncertain pathways
// ---------------------------------------------------------------------------

// Captions the pseudo-target and asks the refiner whether the modification is
// met. Reflection failures degrade to SATISFIED with a trace warning; a broken
// refiner must not abort a batch run.
inline ReflectionResult reflect_pathway(QueryRuntime& rt, const std::string& pseudo_target_id,
                                        Pathway pathway) {
  try {
    ++rt.counts.captioner;
    Caption pseudo_caption = rt.suite->captioner->caption_image(rt.handle_for(pseudo_target_id));
    ++rt.counts.refiner;
    return rt.suite->refiner->refine_reflect(rt.ref_caption, rt.query->modification_text,
                                             pseudo_caption, pathway);
  } catch (const std::exception& e) {
    rt.warnings.push_back(std::string("reflection failed on ") + pathway_name(pathway) + ": " +
                          e.what());
    return ReflectionResult::satisfied_result();
  }
}

// Regenerates the pathway's artifact with the accumulated suggestions joined
// by " ; " after the modification text. The caller re-encodes and re-retrieves.
inline void apply_suggestion(QueryRuntime& rt, RefinementState& state, Pathway pathway,
                             const std::string& suggestion) {
  PathwayRefinement& ref = state.path(pathway);
  if (ref.satisfied)
    throw Error(ErrorCode::MODE_MISMATCH,
                std::string("apply_suggestion: pathway already satisfied: ") +
                    pathway_name(pathway));
  ref.suggestions.push_back(suggestion);
  std::string joined;
  for (const auto& s : ref.suggestions) {
    if (!joined.empty()) joined += " ; ";
    joined += s;
  }
  PathwayState& ps = rt.paths.at(pathway);
  if (pathway == Pathway::T2I) {
    ++rt.counts.editor_text;
    ps.caption = rt.suite->editor->edit_caption(rt.ref_caption, rt.query->modification_text, joined);
  } else {
    ++rt.counts.editor_image;
    ps.image = rt.suite->editor->edit_image(rt.ref_handle, rt.query->modification_text, joined,
                                            state.iteration + 1);
  }
}

struct RefinementRound {
  int iteration = 0;
  std::map<Pathway, std::string> suggestions;  // pathways that produced one this round
  UnionPool pool;
  GateOutcome gate;
  PathwayStates paths;  // end-of-round snapshot for the trace
};

// Runs up to N rounds. Each round reflects every uncertain pathway (T2I then
// I2I); a SUGGEST re-edits, re-encodes and re-retrieves that pathway only,
// then the union, confidences, reliabilities and gate are recomputed. The
// loop exits when no pathway is uncertain or every uncertain pathway reported
// SATISFIED.
inline std::vector<RefinementRound> run_refinement_loop(QueryRuntime& rt, UnionPool& pool,
                                                        GateOutcome& gate_outcome,
                                                        RefinementState& state) {
  std::vector<RefinementRound> rounds;
  const int max_rounds = rt.config->max_iterations;

  for (int round = 1; round <= max_rounds; ++round) {
    std::vector<Pathway> pending;
    for (Pathway p : kPathways)
      if (gate_outcome.pathways_to_refine.count(p) && !state.path(p).satisfied)
        pending.push_back(p);
    if (pending.empty()) break;

    RefinementRound record;
    record.iteration = round;
    bool any_change = false;

    for (Pathway p : pending) {
      ReflectionResult reflection = reflect_pathway(rt, gate_outcome.pseudo_target(p), p);
      if (reflection.satisfied) {
        // Loop terminated for this pathway; current retrievals are kept.
        state.path(p).satisfied = true;
        continue;
      }
      record.suggestions[p] = reflection.suggestion;
      apply_suggestion(rt, state, p, reflection.suggestion);
      rt.retrieve_pathway(p);
      pool = rt.rebuild_union();
      rt.verify_pool(pool);  // new members only; dedup covers the rest
      gate_outcome = rt.compute_gate(pool);
      any_change = true;
    }

    state.iteration = round;
    record.pool = pool;
    record.gate = gate_outcome;
    record.paths = rt.paths;
    rounds.push_back(std::move(record));

    if (!any_change) break;  // every uncertain pathway reported SATISFIED
  }
  return rounds;
}

}  // namespace wiser
