#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <unordered_map>
#include <vector>

#include "wiser/backends.hpp"
#include "wiser/core.hpp"
#include "wiser/index.hpp"

namespace wiser {

// ---------------------------------------------------------------------------
// Confidence scoring
// ---------------------------------------------------------------------------

// Softmax of yes-vs-no logits, evaluated as a numerically stable sigmoid of
// the logit difference.
inline double confidence_from_logits(const VerifierLogits& logits) {
  if (!std::isfinite(logits.logit_yes) || !std::isfinite(logits.logit_no))
    throw Error(ErrorCode::NON_FINITE, "verifier logits");
  const double d = logits.logit_yes - logits.logit_no;
  if (d >= 0.0) {
    return 1.0 / (1.0 + std::exp(-d));
  }
  const double e = std::exp(d);
  return e / (1.0 + e);
}

// ---------------------------------------------------------------------------
// Reliability gating
// ---------------------------------------------------------------------------

struct VerifiedCandidate {
  std::string item_id;
  double confidence = 0.0;
  bool in_t2i = false;
  bool in_i2i = false;
  std::optional<double> sim_t2i;
  std::optional<double> sim_i2i;
};

struct GateOutcome {
  double reliability_t2i = 0.0;
  double reliability_i2i = 0.0;
  std::string pseudo_target_t2i;
  std::string pseudo_target_i2i;
  std::set<Pathway> pathways_to_refine;

  double reliability(Pathway p) const {
    return p == Pathway::T2I ? reliability_t2i : reliability_i2i;
  }
  const std::string& pseudo_target(Pathway p) const {
    return p == Pathway::T2I ? pseudo_target_t2i : pseudo_target_i2i;
  }
};

// Pseudo-target = argmax confidence among the pathway's pool members; ties go
// to the higher in-path similarity, then the smaller item id.
inline std::pair<std::string, double> pathway_reliability(
    const UnionPool& pool, const std::map<std::string, double>& confidences, Pathway pathway) {
  const std::string* best_id = nullptr;
  double best_conf = 0.0;
  double best_sim = 0.0;
  for (const auto& entry : pool.entries) {
    const bool member = pathway == Pathway::T2I ? entry.in_t2i : entry.in_i2i;
    if (!member) continue;
    auto it = confidences.find(entry.item_id);
    if (it == confidences.end())
      throw Error(ErrorCode::SCHEMA_ERROR, "missing confidence for " + entry.item_id);
    const double conf = it->second;
    const double sim =
        pathway == Pathway::T2I ? entry.sim_t2i.value_or(0.0) : entry.sim_i2i.value_or(0.0);
    bool better = false;
    if (best_id == nullptr) {
      better = true;
    } else if (conf != best_conf) {
      better = conf > best_conf;
    } else if (sim != best_sim) {
      better = sim > best_sim;
    } else {
      better = entry.item_id < *best_id;
    }
    if (better) {
      best_id = &entry.item_id;
      best_conf = conf;
      best_sim = sim;
    }
  }
  if (best_id == nullptr) throw Error(ErrorCode::EMPTY_PATHWAY, pathway_name(pathway));
  return {*best_id, best_conf};
}

// Strict comparison: r == tau counts as reliable.
inline std::set<Pathway> gate(double r_t2i, double r_i2i, double tau) {
  std::set<Pathway> to_refine;
  if (r_t2i < tau) to_refine.insert(Pathway::T2I);
  if (r_i2i < tau) to_refine.insert(Pathway::I2I);
  return to_refine;
}

// ---------------------------------------------------------------------------
// Fused ranking
// ---------------------------------------------------------------------------

// Per-path projected confidence: a candidate only carries its confidence into
// paths that actually retrieved it.
inline double projected_confidence(const VerifiedCandidate& c, Pathway p) {
  const bool member = p == Pathway::T2I ? c.in_t2i : c.in_i2i;
  return member ? c.confidence : 0.0;
}

// The lexicographic sort key over per-path confidences:
// (-c_fused, -max(c_T2I, c_I2I), -c_T2I).
struct PsiKey {
  double c_t2i = 0.0;
  double c_i2i = 0.0;
};

// Strict ordering of the three keys; full ties compare equal (the caller
// breaks them by item id).
inline bool psi_less(const PsiKey& a, const PsiKey& b) {
  const double a_fused = a.c_t2i + a.c_i2i, b_fused = b.c_t2i + b.c_i2i;
  if (a_fused != b_fused) return a_fused > b_fused;
  const double a_max = std::max(a.c_t2i, a.c_i2i), b_max = std::max(b.c_t2i, b.c_i2i);
  if (a_max != b_max) return a_max > b_max;
  return a.c_t2i > b.c_t2i;
}

inline PsiKey psi_key(const VerifiedCandidate& c) {
  return {projected_confidence(c, Pathway::T2I), projected_confidence(c, Pathway::I2I)};
}

// Sorts ascending by PsiKey, final tie-break item_id ascending.
inline std::vector<std::string> fuse_rank(const std::vector<VerifiedCandidate>& candidates) {
  std::vector<const VerifiedCandidate*> order;
  order.reserve(candidates.size());
  for (const auto& c : candidates) order.push_back(&c);
  std::sort(order.begin(), order.end(), [](const VerifiedCandidate* a, const VerifiedCandidate* b) {
    const PsiKey ka = psi_key(*a), kb = psi_key(*b);
    if (psi_less(ka, kb)) return true;
    if (psi_less(kb, ka)) return false;
    return a->item_id < b->item_id;
  });
  std::vector<std::string> ids;
  ids.reserve(order.size());
  for (const auto* c : order) ids.push_back(c->item_id);
  return ids;
}

inline std::vector<VerifiedCandidate> verified_candidates(
    const UnionPool& pool, const std::map<std::string, double>& confidences) {
  std::vector<VerifiedCandidate> out;
  out.reserve(pool.entries.size());
  for (const auto& e : pool.entries) {
    auto it = confidences.find(e.item_id);
    if (it == confidences.end())
      throw Error(ErrorCode::SCHEMA_ERROR, "missing confidence for " + e.item_id);
    out.push_back({e.item_id, it->second, e.in_t2i, e.in_i2i, e.sim_t2i, e.sim_i2i});
  }
  return out;
}

// ---------------------------------------------------------------------------
// Pathway state + database-wide rankings
// ---------------------------------------------------------------------------

// Per-pathway retrieval artifact: the edited caption or edited-image handle,
// its query vector, and its current top-K list.
struct PathwayState {
  Pathway pathway = Pathway::T2I;
  std::optional<Caption> caption;    // T2I artifact
  std::optional<ImageHandle> image;  // I2I artifact
  std::vector<float> query_vec;
  std::vector<RankedCandidate> topk;
};

using PathwayStates = std::map<Pathway, PathwayState>;

namespace detail {

inline std::vector<std::string> rank_all_by(
    const EmbeddingIndex& index, const std::function<double(std::size_t)>& score) {
  const std::size_t n = index.size();
  std::vector<double> scores(n);
  for (std::size_t i = 0; i < n; ++i) scores[i] = score(i);
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (scores[a] != scores[b]) return scores[a] > scores[b];
    return index.id_at(a) < index.id_at(b);
  });
  std::vector<std::string> ids;
  ids.reserve(n);
  for (std::size_t i : order) ids.push_back(index.id_at(i));
  return ids;
}

}  // namespace detail

// Non-adaptive modes from the ablations. RAK additionally needs verifier
// confidences for the selected path's top-K; other modes ignore them.
inline std::vector<std::string> baseline_rank(
    FusionMode mode, Pathway rak_pathway, double lambda, const PathwayStates& states,
    const EmbeddingIndex& index,
    const std::map<std::string, double>* confidences = nullptr) {
  if (mode == FusionMode::ADA) throw Error(ErrorCode::MODE_MISMATCH, "baseline_rank: ADA");

  auto state_of = [&](Pathway p) -> const PathwayState& {
    auto it = states.find(p);
    if (it == states.end())
      throw Error(ErrorCode::MODE_MISMATCH,
                  std::string("baseline_rank: missing pathway state ") + pathway_name(p));
    return it->second;
  };

  if (mode == FusionMode::T2I_ONLY || mode == FusionMode::I2I_ONLY) {
    const PathwayState& s = state_of(mode == FusionMode::T2I_ONLY ? Pathway::T2I : Pathway::I2I);
    return detail::rank_all_by(index,
                               [&](std::size_t i) { return index.similarity(i, s.query_vec); });
  }

  if (mode == FusionMode::AVG) {
    const PathwayState& t = state_of(Pathway::T2I);
    const PathwayState& v = state_of(Pathway::I2I);
    return detail::rank_all_by(index, [&](std::size_t i) {
      return lambda * index.similarity(i, t.query_vec) +
             (1.0 - lambda) * index.similarity(i, v.query_vec);
    });
  }

  // RAK: confidence-rerank the selected path's top-K, remainder in similarity
  // order.
  const PathwayState& s = state_of(rak_pathway);
  if (confidences == nullptr)
    throw Error(ErrorCode::MODE_MISMATCH, "baseline_rank: RAK requires confidences");
  std::vector<const RankedCandidate*> prefix;
  prefix.reserve(s.topk.size());
  for (const auto& c : s.topk) prefix.push_back(&c);
  std::sort(prefix.begin(), prefix.end(), [&](const RankedCandidate* a, const RankedCandidate* b) {
    auto ca = confidences->find(a->item_id);
    auto cb = confidences->find(b->item_id);
    if (ca == confidences->end() || cb == confidences->end())
      throw Error(ErrorCode::SCHEMA_ERROR, "RAK: missing confidence");
    if (ca->second != cb->second) return ca->second > cb->second;
    if (a->similarity != b->similarity) return a->similarity > b->similarity;
    return a->item_id < b->item_id;
  });

  std::vector<std::string> full =
      detail::rank_all_by(index, [&](std::size_t i) { return index.similarity(i, s.query_vec); });
  std::vector<std::string> out;
  out.reserve(full.size());
  std::set<std::string> in_prefix;
  for (const auto* c : prefix) {
    out.push_back(c->item_id);
    in_prefix.insert(c->item_id);
  }
  for (const auto& id : full)
    if (!in_prefix.count(id)) out.push_back(id);
  return out;
}

// Fused prefix, then every remaining database item by max path similarity
// descending (item_id ascending on ties). Always a permutation of the
// database ids, so metric positions exist beyond the union.
inline std::vector<std::string> full_ranking(const std::vector<std::string>& fused,
                                             const PathwayStates& states,
                                             const EmbeddingIndex& index) {
  std::set<std::string> in_fused(fused.begin(), fused.end());
  const PathwayState* t = nullptr;
  const PathwayState* v = nullptr;
  if (auto it = states.find(Pathway::T2I); it != states.end()) t = &it->second;
  if (auto it = states.find(Pathway::I2I); it != states.end()) v = &it->second;

  struct Rest {
    std::string id;
    double score;
  };
  std::vector<Rest> rest;
  rest.reserve(index.size() - in_fused.size());
  for (std::size_t i = 0; i < index.size(); ++i) {
    const std::string& id = index.id_at(i);
    if (in_fused.count(id)) continue;
    double score = -2.0;  // below any cosine
    if (t != nullptr) score = std::max(score, index.similarity(i, t->query_vec));
    if (v != nullptr) score = std::max(score, index.similarity(i, v->query_vec));
    rest.push_back({id, score});
  }
  std::sort(rest.begin(), rest.end(), [](const Rest& a, const Rest& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.id < b.id;
  });

  std::vector<std::string> out = fused;
  out.reserve(index.size());
  for (auto& r : rest) out.push_back(std::move(r.id));
  return out;
}

}  // namespace wiser
