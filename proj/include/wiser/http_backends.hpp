#pragma once

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <memory>
#include <string>
#include <thread>
#include <vector>

#include <httplib.h>
#include <json.hpp>

#include "wiser/backends.hpp"
#include "wiser/core.hpp"

namespace wiser {

namespace detail {

inline std::string base64_encode(std::string_view bytes) {
  static const char* alphabet = "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";
  std::string out;
  out.reserve((bytes.size() + 2) / 3 * 4);
  std::size_t i = 0;
  while (i + 3 <= bytes.size()) {
    const unsigned v = (static_cast<unsigned char>(bytes[i]) << 16) |
                       (static_cast<unsigned char>(bytes[i + 1]) << 8) |
                       static_cast<unsigned char>(bytes[i + 2]);
    out += alphabet[(v >> 18) & 63];
    out += alphabet[(v >> 12) & 63];
    out += alphabet[(v >> 6) & 63];
    out += alphabet[v & 63];
    i += 3;
  }
  if (i + 1 == bytes.size()) {
    const unsigned v = static_cast<unsigned char>(bytes[i]) << 16;
    out += alphabet[(v >> 18) & 63];
    out += alphabet[(v >> 12) & 63];
    out += "==";
  } else if (i + 2 == bytes.size()) {
    const unsigned v = (static_cast<unsigned char>(bytes[i]) << 16) |
                       (static_cast<unsigned char>(bytes[i + 1]) << 8);
    out += alphabet[(v >> 18) & 63];
    out += alphabet[(v >> 12) & 63];
    out += alphabet[(v >> 6) & 63];
    out += "=";
  }
  return out;
}

inline std::string base64_decode(std::string_view text) {
  auto value_of = [](char c) -> int {
    if (c >= 'A' && c <= 'Z') return c - 'A';
    if (c >= 'a' && c <= 'z') return c - 'a' + 26;
    if (c >= '0' && c <= '9') return c - '0' + 52;
    if (c == '+') return 62;
    if (c == '/') return 63;
    return -1;
  };
  std::string out;
  int buffer = 0, bits = 0;
  for (char c : text) {
    if (c == '=' || c == '\n' || c == '\r') continue;
    const int v = value_of(c);
    if (v < 0) continue;
    buffer = (buffer << 6) | v;
    bits += 6;
    if (bits >= 8) {
      bits -= 8;
      out += static_cast<char>((buffer >> bits) & 0xFF);
    }
  }
  return out;
}

// (origin, path_prefix) from a full endpoint URL such as
// "http://localhost:8080/v1".
inline std::pair<std::string, std::string> split_endpoint(const std::string& endpoint) {
  const std::size_t scheme = endpoint.find("://");
  const std::size_t host_start = scheme == std::string::npos ? 0 : scheme + 3;
  const std::size_t slash = endpoint.find('/', host_start);
  if (slash == std::string::npos) return {endpoint, ""};
  std::string prefix = endpoint.substr(slash);
  while (!prefix.empty() && prefix.back() == '/') prefix.pop_back();
  return {endpoint.substr(0, slash), prefix};
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Shared OpenAI-compatible wire client: POST {endpoint}/chat/completions with
// temperature 0, bearer auth from the profile's env var, and bounded
// exponential backoff. Total requests per logical call <= 1 + max_retries.
// ---------------------------------------------------------------------------

class HttpChatClient {
 public:
  explicit HttpChatClient(BackendProfile profile) : profile_(std::move(profile)) {
    profile_.validate();
    std::tie(origin_, path_prefix_) = detail::split_endpoint(profile_.endpoint);
    if (!profile_.api_key_env.empty()) {
      const char* key = std::getenv(profile_.api_key_env.c_str());
      if (key != nullptr) api_key_ = key;
    }
  }

  const BackendProfile& profile() const { return profile_; }

  nlohmann::json post_json(const std::string& path, const nlohmann::json& body) const {
    std::string last_error;
    for (int attempt = 0; attempt <= profile_.max_retries; ++attempt) {
      if (attempt > 0) {
        int delay = profile_.backoff_base_ms << (attempt - 1);
        delay = std::min(delay, 5000);
        std::this_thread::sleep_for(std::chrono::milliseconds(delay));
      }
      httplib::Client client(origin_);
      client.set_connection_timeout(profile_.timeout_ms / 1000, (profile_.timeout_ms % 1000) * 1000);
      client.set_read_timeout(profile_.timeout_ms / 1000, (profile_.timeout_ms % 1000) * 1000);
      httplib::Headers headers;
      if (!api_key_.empty()) headers.emplace("Authorization", "Bearer " + api_key_);
      auto res = client.Post(path_prefix_ + path, headers, body.dump(), "application/json");
      if (!res) {
        last_error = "transport error: " + httplib::to_string(res.error());
        continue;
      }
      if (res->status >= 500 || res->status == 429) {
        last_error = "status " + std::to_string(res->status);
        continue;
      }
      if (res->status != 200) {
        throw Error(ErrorCode::BACKEND_UNAVAILABLE,
                    std::string(backend_role_name(profile_.role)) + ": status " +
                        std::to_string(res->status));
      }
      nlohmann::json parsed = nlohmann::json::parse(res->body, nullptr, false);
      if (parsed.is_discarded())
        throw Error(ErrorCode::EMPTY_RESPONSE,
                    std::string(backend_role_name(profile_.role)) + ": response is not JSON");
      return parsed;
    }
    throw Error(ErrorCode::BACKEND_UNAVAILABLE,
                std::string(backend_role_name(profile_.role)) + ": " + last_error);
  }

  nlohmann::json post_chat(const nlohmann::json& messages, bool want_logprobs) const {
    nlohmann::json body;
    body["model"] = profile_.model_name;
    body["messages"] = messages;
    body["temperature"] = 0;
    if (want_logprobs) {
      body["logprobs"] = true;
      body["top_logprobs"] = 5;
    }
    return post_json("/chat/completions", body);
  }

  static std::string message_content(const nlohmann::json& response) {
    if (!response.contains("choices") || !response["choices"].is_array() ||
        response["choices"].empty() || !response["choices"][0].contains("message"))
      throw Error(ErrorCode::EMPTY_RESPONSE, "no message in response");
    const auto& message = response["choices"][0]["message"];
    if (!message.contains("content") || message["content"].is_null()) return "";
    if (message["content"].is_string()) return message["content"].get<std::string>();
    // Content parts: concatenate the text pieces.
    std::string out;
    if (message["content"].is_array()) {
      for (const auto& part : message["content"])
        if (part.is_object() && part.value("type", "") == "text") out += part.value("text", "");
    }
    return out;
  }

  // Builds a multimodal content part for an image handle: local files become
  // base64 data URIs, anything else is passed through as a URL.
  static nlohmann::json image_part(const ImageHandle& image) {
    std::string url;
    if (std::filesystem::exists(image.locator)) {
      std::ifstream in(image.locator, std::ios::binary);
      std::stringstream buf;
      buf << in.rdbuf();
      url = "data:image/png;base64," + detail::base64_encode(buf.str());
    } else {
      url = image.locator;
    }
    return {{"type", "image_url"}, {"image_url", {{"url", url}}}};
  }

  PromptTemplate prompt_or(const char* fallback) const {
    if (!profile_.prompt_template_path.empty())
      return PromptTemplate::load(profile_.prompt_template_path);
    return PromptTemplate{fallback};
  }

 private:
  BackendProfile profile_;
  std::string origin_, path_prefix_, api_key_;
};

// ---------------------------------------------------------------------------
// Role implementations
// ---------------------------------------------------------------------------

class HttpCaptioner : public Captioner {
 public:
  explicit HttpCaptioner(BackendProfile profile) : client_(std::move(profile)) {}

  Caption caption_image(const ImageHandle& image) override {
    nlohmann::json content = nlohmann::json::array();
    content.push_back({{"type", "text"}, {"text", client_.prompt_or(prompts::kCaptioner).text}});
    content.push_back(HttpChatClient::image_part(image));
    nlohmann::json messages = {{{"role", "user"}, {"content", content}}};
    const std::string text = HttpChatClient::message_content(client_.post_chat(messages, false));
    if (trim(text).empty()) throw Error(ErrorCode::EMPTY_RESPONSE, "captioner");
    return Caption::make(text);
  }

 private:
  HttpChatClient client_;
};

class HttpEditor : public Editor {
 public:
  HttpEditor(BackendProfile text_profile, BackendProfile image_profile, std::string artifact_dir)
      : text_client_(std::move(text_profile)),
        image_client_(std::move(image_profile)),
        artifact_dir_(std::move(artifact_dir)) {}

  Caption edit_caption(const Caption& c_ref, const std::string& t_mod,
                       const std::string& suggestions) override {
    const std::string instruction =
        trim(suggestions).empty() ? t_mod : t_mod + " ; " + suggestions;
    const std::string prompt = text_client_.prompt_or(prompts::kEditorText)
                                   .render({{"reference_caption", c_ref.text},
                                            {"modification", instruction}});
    nlohmann::json messages = {{{"role", "user"}, {"content", prompt}}};
    const std::string text =
        HttpChatClient::message_content(text_client_.post_chat(messages, false));
    if (trim(text).empty()) throw Error(ErrorCode::EMPTY_RESPONSE, "editor_text");
    return Caption::make(text);
  }

  ImageHandle edit_image(const ImageHandle& i_ref, const std::string& t_mod,
                         const std::string& suggestions, int iteration) override {
    const std::string instruction =
        trim(suggestions).empty() ? t_mod : t_mod + " ; " + suggestions;
    const std::string prompt =
        image_client_.prompt_or(prompts::kEditorImage).render({{"modification", instruction}});
    nlohmann::json content = nlohmann::json::array();
    content.push_back({{"type", "text"}, {"text", prompt}});
    content.push_back(HttpChatClient::image_part(i_ref));
    nlohmann::json messages = {{{"role", "user"}, {"content", content}}};
    nlohmann::json response = image_client_.post_chat(messages, false);

    const std::string payload = extract_image_payload(response);
    if (payload.empty()) throw Error(ErrorCode::EMPTY_RESPONSE, "editor_image: no image payload");

    std::filesystem::create_directories(artifact_dir_);
    const std::string name = "edit_" + std::to_string(fnv1a64(i_ref.locator + "|" + instruction)) +
                             "_" + std::to_string(iteration) + ".png";
    const std::string path = artifact_dir_ + "/" + name;
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error(ErrorCode::IO_ERROR, "cannot write " + path);
    out << payload;
    return ImageHandle::edited(path, iteration);
  }

 private:
  // Accepts either message.images[].image_url.url data URIs, data-URI content
  // parts, or a b64_json field; different servers use different shapes.
  static std::string extract_image_payload(const nlohmann::json& response) {
    if (!response.contains("choices") || !response["choices"].is_array() ||
        response["choices"].empty() || !response["choices"][0].contains("message"))
      return "";
    const auto& message = response["choices"][0]["message"];
    auto from_url = [](const std::string& url) -> std::string {
      const std::string marker = ";base64,";
      const std::size_t pos = url.find(marker);
      if (url.rfind("data:", 0) == 0 && pos != std::string::npos)
        return detail::base64_decode(url.substr(pos + marker.size()));
      return "";
    };
    try {
      if (message.contains("images") && message["images"].is_array()) {
        for (const auto& img : message["images"]) {
          if (img.contains("image_url") && img["image_url"].is_object()) {
            std::string decoded = from_url(img["image_url"].value("url", ""));
            if (!decoded.empty()) return decoded;
          }
          if (img.contains("b64_json") && img["b64_json"].is_string())
            return detail::base64_decode(img["b64_json"].get<std::string>());
        }
      }
      if (message.contains("content") && message["content"].is_array()) {
        for (const auto& part : message["content"]) {
          if (part.value("type", "") == "image_url" && part.contains("image_url") &&
              part["image_url"].is_object())
            return from_url(part["image_url"].value("url", ""));
        }
      }
      if (message.contains("content") && message["content"].is_string()) {
        std::string decoded = from_url(trim(message["content"].get<std::string>()));
        if (!decoded.empty()) return decoded;
      }
    } catch (const nlohmann::json::exception&) {
      return "";
    }
    return "";
  }

  HttpChatClient text_client_;
  HttpChatClient image_client_;
  std::string artifact_dir_;
};

class HttpVerifier : public Verifier {
 public:
  explicit HttpVerifier(BackendProfile profile) : client_(std::move(profile)) {}

  // Reads the yes/no logprobs of the first generated token, case-insensitive.
  // Without logprobs the text answer falls back to saturated logits at +-10.
  VerifierLogits verify(const ImageHandle& i_ref, const std::string& t_mod,
                        const ImageHandle& candidate) override {
    const std::string prompt =
        client_.prompt_or(prompts::kVerifier).render({{"modification", t_mod}});
    nlohmann::json content = nlohmann::json::array();
    content.push_back({{"type", "text"}, {"text", prompt}});
    content.push_back(HttpChatClient::image_part(i_ref));
    content.push_back(HttpChatClient::image_part(candidate));
    nlohmann::json messages = {{{"role", "user"}, {"content", content}}};
    nlohmann::json response = client_.post_chat(messages, true);

    if (auto logits = logits_from_logprobs(response)) return *logits;

    const std::string answer = to_lower(trim(HttpChatClient::message_content(response)));
    if (answer.rfind("yes", 0) == 0) return {10.0, -10.0};
    if (answer.rfind("no", 0) == 0) return {-10.0, 10.0};
    throw Error(ErrorCode::VERIFY_UNPARSEABLE, "verifier answer: '" + answer + "'");
  }

 private:
  static std::optional<VerifierLogits> logits_from_logprobs(const nlohmann::json& response) {
    if (!response.contains("choices") || response["choices"].empty()) return std::nullopt;
    const auto& choice = response["choices"][0];
    if (!choice.contains("logprobs") || choice["logprobs"].is_null()) return std::nullopt;
    const auto& lp = choice["logprobs"];
    if (!lp.contains("content") || !lp["content"].is_array() || lp["content"].empty())
      return std::nullopt;
    const auto& first = lp["content"][0];
    if (!first.contains("top_logprobs") || !first["top_logprobs"].is_array()) return std::nullopt;

    std::optional<double> yes, no;
    double lowest = 0.0;
    for (const auto& entry : first["top_logprobs"]) {
      std::string token;
      double value = 0.0;
      try {
        token = to_lower(trim(entry.value("token", "")));
        value = entry.value("logprob", 0.0);
      } catch (const nlohmann::json::exception&) {
        continue;
      }
      lowest = std::min(lowest, value);
      if (token == "yes" && !yes) yes = value;
      if (token == "no" && !no) no = value;
    }
    if (!yes && !no) return std::nullopt;
    // A missing answer token is outside the returned top-k, so its logprob is
    // bounded above by the lowest returned one.
    if (!yes) yes = lowest - 1.0;
    if (!no) no = lowest - 1.0;
    return VerifierLogits{*yes, *no};
  }

  HttpChatClient client_;
};

class HttpRefiner : public Refiner {
 public:
  explicit HttpRefiner(BackendProfile profile) : client_(std::move(profile)) {}

  ReflectionResult refine_reflect(const Caption& c_ref, const std::string& t_mod,
                                  const Caption& pseudo_target_caption, Pathway pathway) override {
    const char* fallback = pathway == Pathway::T2I ? prompts::kRefinerT2I : prompts::kRefinerI2I;
    const std::string prompt =
        client_.prompt_or(fallback).render({{"reference_caption", c_ref.text},
                                            {"modification", t_mod},
                                            {"pseudo_target_caption", pseudo_target_caption.text}});
    nlohmann::json messages = {{{"role", "user"}, {"content", prompt}}};
    const std::string text = HttpChatClient::message_content(client_.post_chat(messages, false));
    return parse_reflection_json(text);
  }

 private:
  HttpChatClient client_;
};

// Encoders over HTTP use the /embeddings endpoint; text keys send the caption,
// image keys send the locator (or data URI for local files).
class HttpTextEncoder : public TextEncoder {
 public:
  explicit HttpTextEncoder(BackendProfile profile) : client_(std::move(profile)) {}

  std::vector<float> encode_text(const Caption& text) override {
    nlohmann::json body = {{"model", client_.profile().model_name}, {"input", text.text}};
    return parse_embedding(client_.post_json("/embeddings", body));
  }

  static std::vector<float> parse_embedding(const nlohmann::json& response) {
    if (!response.contains("data") || !response["data"].is_array() || response["data"].empty() ||
        !response["data"][0].contains("embedding"))
      throw Error(ErrorCode::EMPTY_RESPONSE, "encoder: no embedding in response");
    std::vector<float> vec;
    for (const auto& x : response["data"][0]["embedding"]) vec.push_back(x.get<float>());
    normalize_f32(vec, "embedding");
    return vec;
  }

 private:
  HttpChatClient client_;
};

class HttpImageEncoder : public ImageEncoder {
 public:
  explicit HttpImageEncoder(BackendProfile profile) : client_(std::move(profile)) {}

  std::vector<float> encode_image(const ImageHandle& image) override {
    std::string input = image.locator;
    if (std::filesystem::exists(image.locator)) {
      std::ifstream in(image.locator, std::ios::binary);
      std::stringstream buf;
      buf << in.rdbuf();
      input = "data:image/png;base64," + detail::base64_encode(buf.str());
    }
    nlohmann::json body = {{"model", client_.profile().model_name}, {"input", input}};
    return HttpTextEncoder::parse_embedding(client_.post_json("/embeddings", body));
  }

 private:
  HttpChatClient client_;
};

}  // namespace wiser
