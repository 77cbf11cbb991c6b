#pragma once

// Shared helpers for the test suites: counting backend decorators, failing
// backends, and a ready-made synthetic fixture.

#include <atomic>
#include <map>
#include <memory>
#include <string>

#include "wiser/backends.hpp"
#include "wiser/eval.hpp"
#include "wiser/index.hpp"
#include "wiser/pipeline.hpp"
#include "wiser/synth.hpp"

namespace wiser_test {

using namespace wiser;

struct Counters {
  std::atomic<int> captioner{0};
  std::atomic<int> editor_text{0};
  std::atomic<int> editor_image{0};
  std::atomic<int> verifier{0};
  std::atomic<int> refiner{0};
  std::atomic<int> encoder_text{0};
  std::atomic<int> encoder_image{0};

  void reset() {
    captioner = editor_text = editor_image = verifier = refiner = 0;
    encoder_text = encoder_image = 0;
  }
};

struct CountingCaptionerWrap : Captioner {
  std::shared_ptr<Captioner> inner;
  Counters* counters;
  CountingCaptionerWrap(std::shared_ptr<Captioner> in, Counters* c) : inner(in), counters(c) {}
  Caption caption_image(const ImageHandle& image) override {
    ++counters->captioner;
    return inner->caption_image(image);
  }
};

struct CountingEditorWrap : Editor {
  std::shared_ptr<Editor> inner;
  Counters* counters;
  CountingEditorWrap(std::shared_ptr<Editor> in, Counters* c) : inner(in), counters(c) {}
  Caption edit_caption(const Caption& c_ref, const std::string& t_mod,
                       const std::string& suggestions) override {
    ++counters->editor_text;
    return inner->edit_caption(c_ref, t_mod, suggestions);
  }
  ImageHandle edit_image(const ImageHandle& i_ref, const std::string& t_mod,
                         const std::string& suggestions, int iteration) override {
    ++counters->editor_image;
    return inner->edit_image(i_ref, t_mod, suggestions, iteration);
  }
};

struct CountingVerifierWrap : Verifier {
  std::shared_ptr<Verifier> inner;
  Counters* counters;
  CountingVerifierWrap(std::shared_ptr<Verifier> in, Counters* c) : inner(in), counters(c) {}
  VerifierLogits verify(const ImageHandle& i_ref, const std::string& t_mod,
                        const ImageHandle& candidate) override {
    ++counters->verifier;
    return inner->verify(i_ref, t_mod, candidate);
  }
};

struct CountingRefinerWrap : Refiner {
  std::shared_ptr<Refiner> inner;
  Counters* counters;
  CountingRefinerWrap(std::shared_ptr<Refiner> in, Counters* c) : inner(in), counters(c) {}
  ReflectionResult refine_reflect(const Caption& c_ref, const std::string& t_mod,
                                  const Caption& pseudo, Pathway pathway) override {
    ++counters->refiner;
    return inner->refine_reflect(c_ref, t_mod, pseudo, pathway);
  }
};

struct CountingTextEncoderWrap : TextEncoder {
  std::shared_ptr<TextEncoder> inner;
  Counters* counters;
  CountingTextEncoderWrap(std::shared_ptr<TextEncoder> in, Counters* c) : inner(in), counters(c) {}
  std::vector<float> encode_text(const Caption& text) override {
    ++counters->encoder_text;
    return inner->encode_text(text);
  }
};

struct CountingImageEncoderWrap : ImageEncoder {
  std::shared_ptr<ImageEncoder> inner;
  Counters* counters;
  CountingImageEncoderWrap(std::shared_ptr<ImageEncoder> in, Counters* c)
      : inner(in), counters(c) {}
  std::vector<float> encode_image(const ImageHandle& image) override {
    ++counters->encoder_image;
    return inner->encode_image(image);
  }
};

inline BackendSuite counting_suite(const BackendSuite& inner, Counters* counters) {
  BackendSuite out;
  out.captioner = std::make_shared<CountingCaptionerWrap>(inner.captioner, counters);
  out.editor = std::make_shared<CountingEditorWrap>(inner.editor, counters);
  out.verifier = std::make_shared<CountingVerifierWrap>(inner.verifier, counters);
  out.refiner = std::make_shared<CountingRefinerWrap>(inner.refiner, counters);
  out.text_encoder = std::make_shared<CountingTextEncoderWrap>(inner.text_encoder, counters);
  out.image_encoder = std::make_shared<CountingImageEncoderWrap>(inner.image_encoder, counters);
  return out;
}

struct ThrowingCaptioner : Captioner {
  Caption caption_image(const ImageHandle&) override {
    throw Error(ErrorCode::BACKEND_UNAVAILABLE, "captioner outage");
  }
};

struct AlwaysUnmetRefiner : Refiner {
  ReflectionResult refine_reflect(const Caption&, const std::string&, const Caption&,
                                  Pathway) override {
    return ReflectionResult::suggest("ensure: never_enough");
  }
};

// Synthetic world ready for pipeline runs.
struct SynthFixture {
  SynthCorpus corpus;
  BackendSuite suite;
  EmbeddingIndex index;
  std::map<std::string, std::string> manifest;
  std::vector<ComposedQuery> queries;

  static SynthFixture make(std::uint64_t seed, int items, int queries, FailureModeConfig failure,
                           int n_visual = 8, int n_semantic = 8, int attrs = 4, int ops = 1) {
    SynthFixture f;
    f.corpus = gen_corpus(seed, items, n_visual, n_semantic, attrs);
    f.suite = oracle_suite(f.corpus, failure, seed);
    auto records = corpus_embeddings(f.corpus, failure.noise, seed);
    f.index = EmbeddingIndex::build(records, records.front().vector.size());
    for (const auto& item : f.corpus.items) f.manifest.emplace(item.item_id, item.item_id);
    f.queries = gen_queries(f.corpus, seed + 1, queries, ops);
    return f;
  }
};

}  // namespace wiser_test
