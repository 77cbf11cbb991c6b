#pragma once

#include <cstdio>
#include <map>
#include <memory>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "wiser/backends.hpp"
#include "wiser/core.hpp"
#include "wiser/index.hpp"
#include "wiser/rng.hpp"

namespace wiser {

// ---------------------------------------------------------------------------
// Attribute algebra
//
// Synthetic items are attribute sets; captions serialize them canonically as
// "attrs: a, b, c" (sorted). Instructions are ';'-separated clauses:
//   add X | make X | remove X | drop X | replace X with Y |
//   ensure: X | also require X
// Embeddings are the L2-normalized indicator vector over the universe, so
// similarity is plain set overlap and every ranking is hand-checkable.
// ---------------------------------------------------------------------------

inline constexpr const char* kAttrCaptionPrefix = "attrs:";

inline std::string canonical_caption(const std::set<std::string>& attrs) {
  std::string out = kAttrCaptionPrefix;
  bool first = true;
  for (const auto& a : attrs) {
    out += first ? " " : ", ";
    out += a;
    first = false;
  }
  return out;
}

inline std::set<std::string> parse_attr_caption(std::string_view caption) {
  std::string body = trim(caption);
  if (body.rfind(kAttrCaptionPrefix, 0) == 0) body = body.substr(std::string(kAttrCaptionPrefix).size());
  std::set<std::string> attrs;
  for (const auto& part : split(body, ',')) {
    std::string token = trim(part);
    if (!token.empty()) attrs.insert(token);
  }
  return attrs;
}

struct EditOp {
  enum class Kind { ADD, REMOVE, REPLACE };
  Kind kind = Kind::ADD;
  std::string a;  // added (ADD) / removed (REMOVE) / replaced (REPLACE)
  std::string b;  // replacement token (REPLACE only)
};

inline std::string render_ops(const std::vector<EditOp>& ops) {
  std::string out;
  for (const auto& op : ops) {
    if (!out.empty()) out += "; ";
    switch (op.kind) {
      case EditOp::Kind::ADD: out += "add " + op.a; break;
      case EditOp::Kind::REMOVE: out += "remove " + op.a; break;
      case EditOp::Kind::REPLACE: out += "replace " + op.a + " with " + op.b; break;
    }
  }
  return out;
}

inline std::vector<EditOp> parse_instruction(std::string_view instruction) {
  std::vector<EditOp> ops;
  for (const auto& raw_clause : split(instruction, ';')) {
    std::string clause = trim(raw_clause);
    if (clause.empty()) continue;
    std::vector<std::string> words;
    for (const auto& w : split(clause, ' ')) {
      std::string t = trim(w);
      if (!t.empty()) words.push_back(t);
    }
    if (words.empty()) continue;
    const std::string head = to_lower(words[0]);
    if ((head == "add" || head == "make") && words.size() >= 2) {
      for (std::size_t i = 1; i < words.size(); ++i)
        ops.push_back({EditOp::Kind::ADD, words[i], ""});
    } else if ((head == "remove" || head == "drop") && words.size() >= 2) {
      for (std::size_t i = 1; i < words.size(); ++i)
        ops.push_back({EditOp::Kind::REMOVE, words[i], ""});
    } else if (head == "replace" && words.size() == 4 && to_lower(words[2]) == "with") {
      ops.push_back({EditOp::Kind::REPLACE, words[1], words[3]});
    } else if (head == "ensure:" && words.size() >= 2) {
      for (std::size_t i = 1; i < words.size(); ++i)
        ops.push_back({EditOp::Kind::ADD, words[i], ""});
    } else if (head == "ensure" && words.size() >= 2 && words[1].rfind(':', 0) == 0) {
      // "ensure : x" spacing variant
      for (std::size_t i = 2; i < words.size(); ++i)
        ops.push_back({EditOp::Kind::ADD, words[i], ""});
    } else if (head == "also" && words.size() >= 3 && to_lower(words[1]) == "require") {
      for (std::size_t i = 2; i < words.size(); ++i)
        ops.push_back({EditOp::Kind::ADD, words[i], ""});
    }
    // Unrecognized clauses are ignored; the oracle grammar is closed.
  }
  return ops;
}

inline std::set<std::string> apply_ops(std::set<std::string> attrs, const std::vector<EditOp>& ops) {
  for (const auto& op : ops) {
    switch (op.kind) {
      case EditOp::Kind::ADD: attrs.insert(op.a); break;
      case EditOp::Kind::REMOVE: attrs.erase(op.a); break;
      case EditOp::Kind::REPLACE:
        attrs.erase(op.a);
        attrs.insert(op.b);
        break;
    }
  }
  return attrs;
}

// Tokens named anywhere in the instruction; the editor never drops these.
inline std::set<std::string> instruction_tokens(const std::vector<EditOp>& ops) {
  std::set<std::string> tokens;
  for (const auto& op : ops) {
    tokens.insert(op.a);
    if (!op.b.empty()) tokens.insert(op.b);
  }
  return tokens;
}

// ---------------------------------------------------------------------------
// Corpus generation
// ---------------------------------------------------------------------------

struct AttributeUniverse {
  std::vector<std::string> visual;    // sorted
  std::vector<std::string> semantic;  // sorted

  std::vector<std::string> all() const {
    std::vector<std::string> out = semantic;
    out.insert(out.end(), visual.begin(), visual.end());
    std::sort(out.begin(), out.end());
    return out;
  }

  bool is_visual(const std::string& token) const {
    return std::binary_search(visual.begin(), visual.end(), token);
  }
  bool is_semantic(const std::string& token) const {
    return std::binary_search(semantic.begin(), semantic.end(), token);
  }
};

struct SynthItem {
  std::string item_id;
  std::set<std::string> attributes;
};

struct SynthCorpus {
  AttributeUniverse universe;
  std::vector<SynthItem> items;

  std::map<std::string, std::set<std::string>> manifest() const {
    std::map<std::string, std::set<std::string>> m;
    for (const auto& item : items) m.emplace(item.item_id, item.attributes);
    return m;
  }
};

struct FailureModeConfig {
  int t2i_visual_drop = 0;    // visual tokens lost by the caption editor
  int i2i_semantic_drop = 0;  // semantic tokens lost by the image editor
  double logit_scale = 4.0;
  double noise = 0.0;  // uniform perturbation of oracle embeddings, seeded
};

inline AttributeUniverse make_universe(int n_visual, int n_semantic) {
  AttributeUniverse u;
  char buf[16];
  for (int i = 0; i < n_visual; ++i) {
    std::snprintf(buf, sizeof buf, "v%02d", i);
    u.visual.emplace_back(buf);
  }
  for (int i = 0; i < n_semantic; ++i) {
    std::snprintf(buf, sizeof buf, "s%02d", i);
    u.semantic.emplace_back(buf);
  }
  return u;
}

inline SynthCorpus gen_corpus(std::uint64_t seed, int n_items, int n_visual, int n_semantic,
                              int attrs_per_item) {
  if (n_items < 1) throw Error(ErrorCode::RANGE, "n_items");
  if (n_visual < 0 || n_semantic < 0) throw Error(ErrorCode::RANGE, "universe size");
  if (attrs_per_item < 1) throw Error(ErrorCode::RANGE, "attrs_per_item");
  if (attrs_per_item > n_visual + n_semantic) throw Error(ErrorCode::RANGE, "attrs_per_item");

  SynthCorpus corpus;
  corpus.universe = make_universe(n_visual, n_semantic);
  const std::vector<std::string> tokens = corpus.universe.all();

  Rng rng(seed);
  corpus.items.reserve(n_items);
  char idbuf[32];
  for (int i = 0; i < n_items; ++i) {
    std::snprintf(idbuf, sizeof idbuf, "item_%04d", i);
    SynthItem item;
    item.item_id = idbuf;
    for (std::size_t pick : rng.sample_indices(tokens.size(), attrs_per_item))
      item.attributes.insert(tokens[pick]);
    corpus.items.push_back(std::move(item));
  }
  return corpus;
}

// Indicator embedding with optional per-key uniform noise. The noise is keyed
// by the canonical caption, so items sharing an attribute set stay identical.
inline std::vector<float> embed_attrs(const std::set<std::string>& attrs,
                                      const AttributeUniverse& universe, double noise,
                                      std::uint64_t seed) {
  if (attrs.empty()) throw Error(ErrorCode::ZERO_NORM, canonical_caption(attrs));
  const std::vector<std::string> tokens = universe.all();
  std::vector<float> vec(tokens.size(), 0.0f);
  for (std::size_t i = 0; i < tokens.size(); ++i)
    if (attrs.count(tokens[i])) vec[i] = 1.0f;
  if (noise > 0.0) {
    Rng rng(seed ^ fnv1a64(canonical_caption(attrs)));
    for (auto& x : vec) x = static_cast<float>(static_cast<double>(x) + rng.uniform(-noise, noise));
  }
  normalize_f32(vec, canonical_caption(attrs));
  return vec;
}

inline std::vector<EmbeddingRecord> corpus_embeddings(const SynthCorpus& corpus, double noise,
                                                      std::uint64_t seed) {
  std::vector<EmbeddingRecord> records;
  records.reserve(corpus.items.size());
  for (const auto& item : corpus.items)
    records.push_back({item.item_id, embed_attrs(item.attributes, corpus.universe, noise, seed)});
  return records;
}

// Each query picks a reference item, applies random add/remove/replace ops to
// form the target set, and lists every corpus item matching that set as ground
// truth. Queries with no match are redrawn within a bounded budget.
inline std::vector<ComposedQuery> gen_queries(const SynthCorpus& corpus, std::uint64_t seed,
                                              int n_queries, int edit_ops_per_query) {
  if (corpus.items.empty()) throw Error(ErrorCode::RANGE, "corpus is empty");
  if (n_queries < 1) throw Error(ErrorCode::RANGE, "n_queries");
  if (edit_ops_per_query < 1) throw Error(ErrorCode::RANGE, "edit_ops_per_query");

  const std::vector<std::string> tokens = corpus.universe.all();
  Rng rng(seed);
  std::vector<ComposedQuery> queries;
  queries.reserve(n_queries);
  const int budget_per_query = 1000;

  char idbuf[32];
  for (int q = 0; q < n_queries; ++q) {
    bool done = false;
    for (int attempt = 0; attempt < budget_per_query && !done; ++attempt) {
      const SynthItem& ref = corpus.items[rng.index(corpus.items.size())];
      std::set<std::string> target = ref.attributes;
      std::vector<EditOp> ops;
      bool valid = true;
      for (int o = 0; o < edit_ops_per_query; ++o) {
        std::vector<std::string> inside(target.begin(), target.end());
        std::vector<std::string> outside;
        for (const auto& t : tokens)
          if (!target.count(t)) outside.push_back(t);
        std::uint64_t kind = rng.below(3);
        if (kind == 1 && target.size() <= 1) kind = 0;   // keep targets nonempty
        if (kind == 0 && outside.empty()) kind = 1;
        EditOp op;
        if (kind == 0) {
          op = {EditOp::Kind::ADD, outside[rng.index(outside.size())], ""};
        } else if (kind == 1) {
          op = {EditOp::Kind::REMOVE, inside[rng.index(inside.size())], ""};
        } else {
          if (inside.empty() || outside.empty()) {
            valid = false;
            break;
          }
          op = {EditOp::Kind::REPLACE, inside[rng.index(inside.size())],
                outside[rng.index(outside.size())]};
        }
        target = apply_ops(std::move(target), {op});
        ops.push_back(std::move(op));
      }
      if (!valid || target.empty() || target == ref.attributes) continue;

      std::set<std::string> gt;
      for (const auto& item : corpus.items)
        if (item.attributes == target) gt.insert(item.item_id);
      if (gt.empty()) continue;

      std::snprintf(idbuf, sizeof idbuf, "q_%04d", q);
      ComposedQuery query;
      query.query_id = idbuf;
      query.reference_id = ref.item_id;
      query.modification_text = render_ops(ops);
      query.ground_truth_ids = std::move(gt);
      queries.push_back(std::move(query));
      done = true;
    }
    if (!done)
      throw Error(ErrorCode::UNSATISFIABLE,
                  "no satisfiable query found within retry budget (query " + std::to_string(q) + ")");
  }
  return queries;
}

// ---------------------------------------------------------------------------
// Oracle backends
//
// Pure functions of (inputs, seed). Image locators are either item ids
// (resolved through the corpus manifest) or self-describing canonical
// captions produced by the oracle editor.
// ---------------------------------------------------------------------------

class OracleWorld {
 public:
  OracleWorld(std::map<std::string, std::set<std::string>> manifest, AttributeUniverse universe,
              FailureModeConfig failure, std::uint64_t seed)
      : manifest_(std::move(manifest)),
        universe_(std::move(universe)),
        failure_(failure),
        seed_(seed) {}

  std::set<std::string> resolve(const std::string& locator) const {
    if (trim(locator).rfind(kAttrCaptionPrefix, 0) == 0) return parse_attr_caption(locator);
    auto it = manifest_.find(locator);
    if (it == manifest_.end()) throw Error(ErrorCode::LOOKUP_MISS, locator);
    return it->second;
  }

  const AttributeUniverse& universe() const { return universe_; }
  const FailureModeConfig& failure() const { return failure_; }
  std::uint64_t seed() const { return seed_; }

  // Drop victims are the `count` lexicographically smallest tokens of the
  // class present after the edit. A victim named anywhere in the instruction
  // survives and no substitute is dropped, which is what lets an applied
  // "ensure:" suggestion repair the artifact.
  std::set<std::string> apply_drop(std::set<std::string> attrs, bool visual_class, int count,
                                   const std::set<std::string>& protected_tokens) const {
    if (count <= 0) return attrs;
    std::vector<std::string> of_class;
    for (const auto& t : attrs)
      if (visual_class ? universe_.is_visual(t) : universe_.is_semantic(t)) of_class.push_back(t);
    // std::set iterates sorted, so of_class is already lexicographic.
    int victims = std::min<int>(count, static_cast<int>(of_class.size()));
    for (int i = 0; i < victims; ++i)
      if (!protected_tokens.count(of_class[i])) attrs.erase(of_class[i]);
    return attrs;
  }

  std::set<std::string> edited_attrs(const std::set<std::string>& source,
                                     const std::string& instruction, bool visual_drop_class,
                                     int drop_count) const {
    const std::vector<EditOp> ops = parse_instruction(instruction);
    std::set<std::string> edited = apply_ops(source, ops);
    return apply_drop(std::move(edited), visual_drop_class, drop_count, instruction_tokens(ops));
  }

 private:
  std::map<std::string, std::set<std::string>> manifest_;
  AttributeUniverse universe_;
  FailureModeConfig failure_;
  std::uint64_t seed_;
};

class OracleCaptioner : public Captioner {
 public:
  explicit OracleCaptioner(std::shared_ptr<const OracleWorld> world) : world_(std::move(world)) {}
  Caption caption_image(const ImageHandle& image) override {
    return Caption::make(canonical_caption(world_->resolve(image.locator)));
  }

 private:
  std::shared_ptr<const OracleWorld> world_;
};

class OracleEditor : public Editor {
 public:
  explicit OracleEditor(std::shared_ptr<const OracleWorld> world) : world_(std::move(world)) {}

  Caption edit_caption(const Caption& c_ref, const std::string& t_mod,
                       const std::string& suggestions) override {
    std::set<std::string> attrs = world_->edited_attrs(
        parse_attr_caption(c_ref.text), combine(t_mod, suggestions), /*visual_drop_class=*/true,
        world_->failure().t2i_visual_drop);
    if (attrs.empty()) throw Error(ErrorCode::EMPTY_RESPONSE, "edited caption has no attributes");
    return Caption::make(canonical_caption(attrs));
  }

  ImageHandle edit_image(const ImageHandle& i_ref, const std::string& t_mod,
                         const std::string& suggestions, int iteration) override {
    std::set<std::string> attrs =
        world_->edited_attrs(world_->resolve(i_ref.locator), combine(t_mod, suggestions),
                             /*visual_drop_class=*/false, world_->failure().i2i_semantic_drop);
    if (attrs.empty()) throw Error(ErrorCode::EMPTY_RESPONSE, "edited image has no attributes");
    return ImageHandle::edited(canonical_caption(attrs), iteration);
  }

 private:
  static std::string combine(const std::string& t_mod, const std::string& suggestions) {
    if (trim(suggestions).empty()) return t_mod;
    return t_mod + " ; " + suggestions;
  }

  std::shared_ptr<const OracleWorld> world_;
};

class OracleVerifier : public Verifier {
 public:
  explicit OracleVerifier(std::shared_ptr<const OracleWorld> world) : world_(std::move(world)) {}

  // logit_yes = scale * (2 * match_fraction - 1), logit_no its negation, where
  // match_fraction = |candidate ∩ target| / |target| and the target is the
  // drop-free application of the instruction to the reference.
  VerifierLogits verify(const ImageHandle& i_ref, const std::string& t_mod,
                        const ImageHandle& candidate) override {
    const std::set<std::string> target =
        apply_ops(world_->resolve(i_ref.locator), parse_instruction(t_mod));
    const std::set<std::string> cand = world_->resolve(candidate.locator);
    double match_fraction;
    if (target.empty()) {
      match_fraction = cand.empty() ? 1.0 : 0.0;
    } else {
      std::size_t overlap = 0;
      for (const auto& t : target) overlap += cand.count(t);
      match_fraction = static_cast<double>(overlap) / static_cast<double>(target.size());
    }
    const double logit = world_->failure().logit_scale * (2.0 * match_fraction - 1.0);
    return {logit, -logit};
  }

 private:
  std::shared_ptr<const OracleWorld> world_;
};

class OracleRefiner : public Refiner {
 public:
  explicit OracleRefiner(std::shared_ptr<const OracleWorld> world) : world_(std::move(world)) {}

  ReflectionResult refine_reflect(const Caption& c_ref, const std::string& t_mod,
                                  const Caption& pseudo_target_caption, Pathway) override {
    const std::set<std::string> required =
        apply_ops(parse_attr_caption(c_ref.text), parse_instruction(t_mod));
    const std::set<std::string> found = parse_attr_caption(pseudo_target_caption.text);
    for (const auto& token : required)  // sorted, so first miss is the smallest
      if (!found.count(token)) return ReflectionResult::suggest("ensure: " + token);
    return ReflectionResult::satisfied_result();
  }

 private:
  std::shared_ptr<const OracleWorld> world_;
};

class OracleTextEncoder : public TextEncoder {
 public:
  explicit OracleTextEncoder(std::shared_ptr<const OracleWorld> world) : world_(std::move(world)) {}
  std::vector<float> encode_text(const Caption& text) override {
    return embed_attrs(parse_attr_caption(text.text), world_->universe(),
                       world_->failure().noise, world_->seed());
  }

 private:
  std::shared_ptr<const OracleWorld> world_;
};

class OracleImageEncoder : public ImageEncoder {
 public:
  explicit OracleImageEncoder(std::shared_ptr<const OracleWorld> world) : world_(std::move(world)) {}
  std::vector<float> encode_image(const ImageHandle& image) override {
    return embed_attrs(world_->resolve(image.locator), world_->universe(),
                       world_->failure().noise, world_->seed());
  }

 private:
  std::shared_ptr<const OracleWorld> world_;
};

inline BackendSuite oracle_suite(std::map<std::string, std::set<std::string>> manifest,
                                 AttributeUniverse universe, FailureModeConfig failure,
                                 std::uint64_t seed) {
  auto world = std::make_shared<const OracleWorld>(std::move(manifest), std::move(universe),
                                                   failure, seed);
  BackendSuite suite;
  suite.captioner = std::make_shared<CachingCaptioner>(std::make_shared<OracleCaptioner>(world));
  suite.editor = std::make_shared<OracleEditor>(world);
  suite.verifier = std::make_shared<OracleVerifier>(world);
  suite.refiner = std::make_shared<OracleRefiner>(world);
  suite.text_encoder = std::make_shared<OracleTextEncoder>(world);
  suite.image_encoder = std::make_shared<OracleImageEncoder>(world);
  return suite;
}

inline BackendSuite oracle_suite(const SynthCorpus& corpus, FailureModeConfig failure,
                                 std::uint64_t seed) {
  return oracle_suite(corpus.manifest(), corpus.universe, failure, seed);
}

// ---------------------------------------------------------------------------
// Failure spec + oracle manifest serialization
// ---------------------------------------------------------------------------

// Grammar: "t2i=visual_drop:N,i2i=semantic_drop:N" with "none" for either side.
inline FailureModeConfig parse_failure_spec(std::string_view spec) {
  FailureModeConfig failure;
  const std::string stripped = trim(spec);
  if (stripped.empty() || to_lower(stripped) == "none") return failure;
  for (const auto& raw_part : split(stripped, ',')) {
    const std::string part = trim(raw_part);
    if (part.empty()) continue;
    const auto kv = split(part, '=');
    if (kv.size() != 2)
      throw Error(ErrorCode::SCHEMA_ERROR, "failure spec: expected side=mode, got '" + part + "'");
    const std::string side = to_lower(trim(kv[0]));
    const std::string mode = to_lower(trim(kv[1]));
    int count = 0;
    std::string mode_name = mode;
    if (auto colon = mode.find(':'); colon != std::string::npos) {
      mode_name = mode.substr(0, colon);
      try {
        count = std::stoi(mode.substr(colon + 1));
      } catch (const std::exception&) {
        throw Error(ErrorCode::SCHEMA_ERROR, "failure spec: bad drop count in '" + part + "'");
      }
      if (count < 0) throw Error(ErrorCode::RANGE, "failure spec drop count");
    }
    if (side == "t2i") {
      if (mode_name == "none") {
        failure.t2i_visual_drop = 0;
      } else if (mode_name == "visual_drop") {
        failure.t2i_visual_drop = count > 0 ? count : 1;
      } else {
        throw Error(ErrorCode::SCHEMA_ERROR, "failure spec: t2i mode must be none|visual_drop:N");
      }
    } else if (side == "i2i") {
      if (mode_name == "none") {
        failure.i2i_semantic_drop = 0;
      } else if (mode_name == "semantic_drop") {
        failure.i2i_semantic_drop = count > 0 ? count : 1;
      } else {
        throw Error(ErrorCode::SCHEMA_ERROR, "failure spec: i2i mode must be none|semantic_drop:N");
      }
    } else {
      throw Error(ErrorCode::SCHEMA_ERROR, "failure spec: side must be t2i or i2i");
    }
  }
  return failure;
}

inline std::string render_failure_spec(const FailureModeConfig& failure) {
  std::string t2i = failure.t2i_visual_drop > 0
                        ? "visual_drop:" + std::to_string(failure.t2i_visual_drop)
                        : "none";
  std::string i2i = failure.i2i_semantic_drop > 0
                        ? "semantic_drop:" + std::to_string(failure.i2i_semantic_drop)
                        : "none";
  return "t2i=" + t2i + ",i2i=" + i2i;
}

struct OracleManifest {
  AttributeUniverse universe;
  std::map<std::string, std::set<std::string>> items;
  FailureModeConfig failure;
  std::uint64_t seed = 0;
};

inline void write_oracle_manifest(const std::string& path, const OracleManifest& manifest) {
  nlohmann::ordered_json j;
  j["seed"] = manifest.seed;
  j["failure"] = render_failure_spec(manifest.failure);
  j["logit_scale"] = manifest.failure.logit_scale;
  j["noise"] = manifest.failure.noise;
  j["visual_tokens"] = manifest.universe.visual;
  j["semantic_tokens"] = manifest.universe.semantic;
  nlohmann::ordered_json items = nlohmann::ordered_json::object();
  for (const auto& [id, attrs] : manifest.items) items[id] = attrs;
  j["items"] = std::move(items);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::IO_ERROR, "cannot write " + path);
  out << j.dump(2) << "\n";
}

inline OracleManifest load_oracle_manifest(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::IO_ERROR, "cannot open oracle manifest: " + path);
  nlohmann::json j = nlohmann::json::parse(in, nullptr, false);
  if (j.is_discarded()) throw Error(ErrorCode::SCHEMA_ERROR, "oracle manifest is not valid JSON");
  try {
  OracleManifest m;
  m.seed = j.value("seed", 0ull);
  m.failure = parse_failure_spec(j.value("failure", "none"));
  m.failure.logit_scale = j.value("logit_scale", 4.0);
  m.failure.noise = j.value("noise", 0.0);
  if (!j.contains("visual_tokens") || !j.contains("semantic_tokens") || !j.contains("items"))
    throw Error(ErrorCode::SCHEMA_ERROR, "oracle manifest: missing tokens or items");
  for (const auto& t : j["visual_tokens"]) m.universe.visual.push_back(t.get<std::string>());
  for (const auto& t : j["semantic_tokens"]) m.universe.semantic.push_back(t.get<std::string>());
  std::sort(m.universe.visual.begin(), m.universe.visual.end());
  std::sort(m.universe.semantic.begin(), m.universe.semantic.end());
  for (auto it = j["items"].begin(); it != j["items"].end(); ++it) {
    std::set<std::string> attrs;
    for (const auto& a : it.value()) attrs.insert(a.get<std::string>());
    m.items.emplace(it.key(), std::move(attrs));
  }
  return m;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::SCHEMA_ERROR, std::string("oracle manifest: ") + e.what());
  }
}

inline BackendSuite oracle_suite(const OracleManifest& manifest) {
  return oracle_suite(manifest.items, manifest.universe, manifest.failure, manifest.seed);
}

}  // namespace wiser
