#pragma once

#include <fstream>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "wiser/core.hpp"
#include "wiser/index.hpp"

namespace wiser {

// ---------------------------------------------------------------------------
// Domain types
// ---------------------------------------------------------------------------

struct Caption {
  std::string text;  // nonempty, trimmed

  static Caption make(std::string_view raw) {
    std::string t = trim(raw);
    if (t.empty()) throw Error(ErrorCode::EMPTY_RESPONSE, "caption");
    return Caption{std::move(t)};
  }
};

struct ImageHandle {
  enum class Origin { REFERENCE, EDITED };

  std::string locator;  // file path or opaque id the encoder backend resolves
  Origin origin = Origin::REFERENCE;
  int iteration = 0;  // >= 1 when EDITED

  static ImageHandle reference(std::string locator) {
    if (locator.empty()) throw Error(ErrorCode::RANGE, "image locator");
    return ImageHandle{std::move(locator), Origin::REFERENCE, 0};
  }
  static ImageHandle edited(std::string locator, int iteration) {
    if (locator.empty()) throw Error(ErrorCode::RANGE, "image locator");
    if (iteration < 1) throw Error(ErrorCode::RANGE, "edited-image iteration");
    return ImageHandle{std::move(locator), Origin::EDITED, iteration};
  }
};

struct VerifierLogits {
  double logit_yes = 0.0;
  double logit_no = 0.0;
};

// Structured self-reflection outcome: either all modifications are met, or a
// concise suggestion for the given pathway.
struct ReflectionResult {
  bool satisfied = false;
  std::string suggestion;  // nonempty iff !satisfied

  static ReflectionResult satisfied_result() { return {true, ""}; }
  static ReflectionResult suggest(std::string text) {
    if (trim(text).empty()) throw Error(ErrorCode::UNPARSEABLE_REFLECTION, "empty suggestion");
    return {false, trim(text)};
  }
};

enum class BackendRole {
  CAPTIONER,
  EDITOR_TEXT,
  EDITOR_IMAGE,
  VERIFIER,
  REFINER,
  ENCODER_TEXT,
  ENCODER_IMAGE,
};

inline const char* backend_role_name(BackendRole role) {
  switch (role) {
    case BackendRole::CAPTIONER: return "captioner";
    case BackendRole::EDITOR_TEXT: return "editor_text";
    case BackendRole::EDITOR_IMAGE: return "editor_image";
    case BackendRole::VERIFIER: return "verifier";
    case BackendRole::REFINER: return "refiner";
    case BackendRole::ENCODER_TEXT: return "encoder_text";
    case BackendRole::ENCODER_IMAGE: return "encoder_image";
  }
  return "?";
}

enum class BackendKind { HTTP, FILE_LOOKUP, ORACLE };

struct BackendProfile {
  BackendRole role = BackendRole::CAPTIONER;
  BackendKind kind = BackendKind::ORACLE;
  std::string endpoint;        // required for HTTP
  std::string model_name;
  std::string api_key_env;     // env var holding the bearer token
  std::string manifest_path;   // required for FILE_LOOKUP
  std::string prompt_template_path;  // optional override of the built-in prompt
  int timeout_ms = 30000;
  int max_retries = 2;
  int backoff_base_ms = 250;

  void validate() const {
    if (timeout_ms < 1) throw Error(ErrorCode::RANGE, "timeout_ms");
    if (max_retries < 0) throw Error(ErrorCode::RANGE, "max_retries");
    if (kind == BackendKind::HTTP && endpoint.empty())
      throw Error(ErrorCode::SCHEMA_ERROR,
                  std::string(backend_role_name(role)) + ": HTTP backend requires endpoint");
    if (kind == BackendKind::FILE_LOOKUP && manifest_path.empty())
      throw Error(ErrorCode::SCHEMA_ERROR,
                  std::string(backend_role_name(role)) + ": FILE_LOOKUP backend requires manifest");
  }
};

// ---------------------------------------------------------------------------
// Role interfaces
// ---------------------------------------------------------------------------

struct Captioner {
  virtual ~Captioner() = default;
  virtual Caption caption_image(const ImageHandle& image) = 0;
};

struct Editor {
  virtual ~Editor() = default;
  // `suggestions` is the accumulated refinement text; empty means none.
  virtual Caption edit_caption(const Caption& c_ref, const std::string& t_mod,
                               const std::string& suggestions) = 0;
  virtual ImageHandle edit_image(const ImageHandle& i_ref, const std::string& t_mod,
                                 const std::string& suggestions, int iteration) = 0;
};

struct Verifier {
  virtual ~Verifier() = default;
  virtual VerifierLogits verify(const ImageHandle& i_ref, const std::string& t_mod,
                                const ImageHandle& candidate) = 0;
};

struct Refiner {
  virtual ~Refiner() = default;
  virtual ReflectionResult refine_reflect(const Caption& c_ref, const std::string& t_mod,
                                          const Caption& pseudo_target_caption,
                                          Pathway pathway) = 0;
};

struct TextEncoder {
  virtual ~TextEncoder() = default;
  virtual std::vector<float> encode_text(const Caption& text) = 0;
};

struct ImageEncoder {
  virtual ~ImageEncoder() = default;
  virtual std::vector<float> encode_image(const ImageHandle& image) = 0;
};

// Caption results are memoized by locator; many queries share reference
// images, so this cache is shared across the whole run.
class CachingCaptioner : public Captioner {
 public:
  explicit CachingCaptioner(std::shared_ptr<Captioner> inner) : inner_(std::move(inner)) {}

  Caption caption_image(const ImageHandle& image) override {
    {
      std::lock_guard<std::mutex> lock(mu_);
      auto it = cache_.find(image.locator);
      if (it != cache_.end()) return it->second;
    }
    Caption c = inner_->caption_image(image);
    std::lock_guard<std::mutex> lock(mu_);
    cache_.emplace(image.locator, c);
    return c;
  }

  std::size_t underlying_calls() const { return cache_.size(); }

 private:
  std::shared_ptr<Captioner> inner_;
  std::mutex mu_;
  std::unordered_map<std::string, Caption> cache_;
};

struct BackendSuite {
  std::shared_ptr<Captioner> captioner;
  std::shared_ptr<Editor> editor;
  std::shared_ptr<Verifier> verifier;
  std::shared_ptr<Refiner> refiner;
  std::shared_ptr<TextEncoder> text_encoder;
  std::shared_ptr<ImageEncoder> image_encoder;
};

// ---------------------------------------------------------------------------
// Prompt templates
//
// Templates are data: plain text with {reference_caption}, {modification},
// {candidate}, {pseudo_target_caption} placeholders, overridable per profile.
// ---------------------------------------------------------------------------

struct PromptTemplate {
  std::string text;

  static PromptTemplate load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::IO_ERROR, "cannot open prompt template: " + path);
    std::stringstream buf;
    buf << in.rdbuf();
    return PromptTemplate{buf.str()};
  }

  std::string render(const std::map<std::string, std::string>& vars) const {
    std::string out = text;
    for (const auto& [name, value] : vars) {
      const std::string needle = "{" + name + "}";
      std::size_t pos = 0;
      while ((pos = out.find(needle, pos)) != std::string::npos) {
        out.replace(pos, needle.size(), value);
        pos += value.size();
      }
    }
    return out;
  }
};

namespace prompts {

inline constexpr const char* kCaptioner =
    "Describe this image in one concise sentence, covering the salient objects and attributes.";

inline constexpr const char* kEditorText =
    "Reference image description: {reference_caption}\n"
    "Modification: {modification}\n"
    "Write a single-sentence description of the target image obtained by applying the "
    "modification to the reference image. Keep every detail of the reference that the "
    "modification does not change. Respond with the description only.";

inline constexpr const char* kEditorImage =
    "Edit the given image as follows: {modification}\n"
    "Preserve all visual details that the instruction does not change. Return the edited image.";

inline constexpr const char* kVerifier =
    "The first image is the reference. Instruction: {modification}\n"
    "Decide if the candidate image (the second image) matches the result of applying the "
    "instruction to the reference image. Answer with exactly one word: Yes or No.";

inline constexpr const char* kRefinerT2I =
    "You refine a text query for image retrieval.\n"
    "Reference image description: {reference_caption}\n"
    "Modification request: {modification}\n"
    "Retrieved (pseudo-target) image description: {pseudo_target_caption}\n"
    "Step 1: List the intended changes as short phrases (attribute changes, entity "
    "additions or deletions).\n"
    "Step 2: Compare the retrieved description against those phrases and find what is "
    "missed or wrongly applied.\n"
    "Step 3: If anything is unmet, propose one concise textual suggestion that would "
    "improve the edited caption.\n"
    "Respond with a single JSON object: {\"verdict\": \"satisfied\"} when everything is "
    "met, otherwise {\"verdict\": \"unmet\", \"suggestion\": \"<concise suggestion>\"}.";

inline constexpr const char* kRefinerI2I =
    "You refine an image-editing instruction for image retrieval.\n"
    "Reference image description: {reference_caption}\n"
    "Modification request: {modification}\n"
    "Retrieved (pseudo-target) image description: {pseudo_target_caption}\n"
    "Step 1: List the intended changes as short phrases (attribute changes, entity "
    "additions or deletions).\n"
    "Step 2: Compare the retrieved description against those phrases and find what is "
    "missed or wrongly applied.\n"
    "Step 3: If anything is unmet, propose one concise piece of visual guidance that "
    "would improve the edited image.\n"
    "Respond with a single JSON object: {\"verdict\": \"satisfied\"} when everything is "
    "met, otherwise {\"verdict\": \"unmet\", \"suggestion\": \"<concise suggestion>\"}.";

}  // namespace prompts

// Parses the refiner's structured output: {"verdict": "satisfied"|"unmet",
// "suggestion": "..."} with suggestion required iff unmet.
inline ReflectionResult parse_reflection_json(const std::string& raw) {
  std::string body = trim(raw);
  // Tolerate fenced responses.
  if (body.rfind("```", 0) == 0) {
    std::size_t first_nl = body.find('\n');
    std::size_t last_fence = body.rfind("```");
    if (first_nl != std::string::npos && last_fence > first_nl)
      body = trim(body.substr(first_nl + 1, last_fence - first_nl - 1));
  }
  nlohmann::json j = nlohmann::json::parse(body, nullptr, false);
  if (j.is_discarded() || !j.is_object() || !j.contains("verdict") || !j["verdict"].is_string())
    throw Error(ErrorCode::UNPARSEABLE_REFLECTION, "missing or invalid 'verdict'");
  const std::string verdict = to_lower(j["verdict"].get<std::string>());
  if (verdict == "satisfied") return ReflectionResult::satisfied_result();
  if (verdict != "unmet")
    throw Error(ErrorCode::UNPARSEABLE_REFLECTION, "verdict must be 'satisfied' or 'unmet'");
  if (!j.contains("suggestion") || !j["suggestion"].is_string() ||
      trim(j["suggestion"].get<std::string>()).empty())
    throw Error(ErrorCode::UNPARSEABLE_REFLECTION, "unmet verdict requires 'suggestion'");
  return ReflectionResult::suggest(j["suggestion"].get<std::string>());
}

// ---------------------------------------------------------------------------
// FILE_LOOKUP encoders: precomputed embeddings in a JSON Lines manifest of
// {"key": "...", "vec": [...]}. Text keys are the caption text; image keys are
// the handle locator.
// ---------------------------------------------------------------------------

class FileLookupTable {
 public:
  static std::shared_ptr<FileLookupTable> load(const std::string& path) {
    auto table = std::make_shared<FileLookupTable>();
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::IO_ERROR, "cannot open lookup manifest: " + path);
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
      ++line_no;
      std::string stripped = trim(line);
      if (stripped.empty()) continue;
      nlohmann::json j = nlohmann::json::parse(stripped, nullptr, false);
      if (j.is_discarded() || !j.is_object() || !j.contains("key") || !j.contains("vec") ||
          !j["key"].is_string() || !j["vec"].is_array())
        throw Error(ErrorCode::SCHEMA_ERROR,
                    "lookup manifest line " + std::to_string(line_no) + ": expected {\"key\", \"vec\"}");
      std::vector<float> vec;
      for (const auto& x : j["vec"]) {
        if (!x.is_number())
          throw Error(ErrorCode::SCHEMA_ERROR,
                      "lookup manifest line " + std::to_string(line_no) + ": vec entries must be numbers");
        vec.push_back(x.get<float>());
      }
      const std::string key = j["key"].get<std::string>();
      if (table->dim_ == 0) table->dim_ = vec.size();
      if (vec.size() != table->dim_) throw Error(ErrorCode::DIM_MISMATCH, key);
      normalize_f32(vec, key);
      table->vectors_.emplace(key, std::move(vec));
    }
    return table;
  }

  std::vector<float> lookup(const std::string& key) const {
    auto it = vectors_.find(key);
    if (it == vectors_.end()) throw Error(ErrorCode::LOOKUP_MISS, key);
    return it->second;
  }

  std::size_t dim() const { return dim_; }

 private:
  std::size_t dim_ = 0;
  std::unordered_map<std::string, std::vector<float>> vectors_;
};

class FileLookupTextEncoder : public TextEncoder {
 public:
  explicit FileLookupTextEncoder(std::shared_ptr<FileLookupTable> table)
      : table_(std::move(table)) {}
  std::vector<float> encode_text(const Caption& text) override { return table_->lookup(text.text); }

 private:
  std::shared_ptr<FileLookupTable> table_;
};

class FileLookupImageEncoder : public ImageEncoder {
 public:
  explicit FileLookupImageEncoder(std::shared_ptr<FileLookupTable> table)
      : table_(std::move(table)) {}
  std::vector<float> encode_image(const ImageHandle& image) override {
    return table_->lookup(image.locator);
  }

 private:
  std::shared_ptr<FileLookupTable> table_;
};

}  // namespace wiser
