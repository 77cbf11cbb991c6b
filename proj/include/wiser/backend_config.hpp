#pragma once

#include <fstream>
#include <map>
#include <string>

#include <json.hpp>

#include "wiser/backends.hpp"
#include "wiser/core.hpp"
#include "wiser/http_backends.hpp"
#include "wiser/synth.hpp"

namespace wiser {

// Builds a backend suite from a backends file. Two shapes are accepted:
//
//   {"oracle_manifest": "path"}            — oracle backends for every role
//
//   {"captioner": {"kind": "http", "endpoint": "...", "model": "...",
//                  "api_key_env": "...", "timeout_ms": 30000,
//                  "max_retries": 2, "prompt_template": "..."},
//    "editor_text": {...}, "editor_image": {...}, "verifier": {...},
//    "refiner": {...},
//    "encoder_text": {"kind": "file_lookup", "manifest": "..."},
//    "encoder_image": {...}}
inline BackendSuite load_backend_suite(const std::string& path,
                                       const std::string& artifact_dir = "artifacts") {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::IO_ERROR, "cannot open backends file: " + path);
  nlohmann::json j = nlohmann::json::parse(in, nullptr, false);
  if (j.is_discarded() || !j.is_object())
    throw Error(ErrorCode::SCHEMA_ERROR, "backends file is not a JSON object: " + path);

  if (j.contains("oracle_manifest")) {
    if (!j["oracle_manifest"].is_string())
      throw Error(ErrorCode::SCHEMA_ERROR, "backends file: oracle_manifest must be a path");
    return oracle_suite(load_oracle_manifest(j["oracle_manifest"].get<std::string>()));
  }

  auto profile_for = [&](const char* key, BackendRole role) {
    if (!j.contains(key) || !j[key].is_object())
      throw Error(ErrorCode::SCHEMA_ERROR, std::string("backends file: missing role '") + key + "'");
    const auto& p = j[key];
    BackendProfile profile;
    profile.role = role;
    const std::string kind = to_lower(p.value("kind", "http"));
    if (kind == "http") {
      profile.kind = BackendKind::HTTP;
    } else if (kind == "file_lookup") {
      profile.kind = BackendKind::FILE_LOOKUP;
    } else {
      throw Error(ErrorCode::SCHEMA_ERROR,
                  std::string(key) + ": kind must be http or file_lookup (oracle suites use "
                                     "oracle_manifest)");
    }
    try {
      profile.endpoint = p.value("endpoint", "");
      profile.model_name = p.value("model", "");
      profile.api_key_env = p.value("api_key_env", "");
      profile.manifest_path = p.value("manifest", "");
      profile.prompt_template_path = p.value("prompt_template", "");
      profile.timeout_ms = p.value("timeout_ms", 30000);
      profile.max_retries = p.value("max_retries", 2);
      profile.backoff_base_ms = p.value("backoff_base_ms", 250);
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorCode::SCHEMA_ERROR, std::string(key) + ": " + e.what());
    }
    profile.validate();
    return profile;
  };

  BackendSuite suite;
  suite.captioner = std::make_shared<CachingCaptioner>(
      std::make_shared<HttpCaptioner>(profile_for("captioner", BackendRole::CAPTIONER)));
  suite.editor = std::make_shared<HttpEditor>(profile_for("editor_text", BackendRole::EDITOR_TEXT),
                                              profile_for("editor_image", BackendRole::EDITOR_IMAGE),
                                              artifact_dir);
  suite.verifier = std::make_shared<HttpVerifier>(profile_for("verifier", BackendRole::VERIFIER));
  suite.refiner = std::make_shared<HttpRefiner>(profile_for("refiner", BackendRole::REFINER));

  BackendProfile text_profile = profile_for("encoder_text", BackendRole::ENCODER_TEXT);
  if (text_profile.kind == BackendKind::FILE_LOOKUP) {
    suite.text_encoder =
        std::make_shared<FileLookupTextEncoder>(FileLookupTable::load(text_profile.manifest_path));
  } else {
    suite.text_encoder = std::make_shared<HttpTextEncoder>(text_profile);
  }
  BackendProfile image_profile = profile_for("encoder_image", BackendRole::ENCODER_IMAGE);
  if (image_profile.kind == BackendKind::FILE_LOOKUP) {
    suite.image_encoder = std::make_shared<FileLookupImageEncoder>(
        FileLookupTable::load(image_profile.manifest_path));
  } else {
    suite.image_encoder = std::make_shared<HttpImageEncoder>(image_profile);
  }
  return suite;
}

}  // namespace wiser
