// Acceptance suite: one pass/fail line per criterion, nonzero exit on any
// failure. Runs entirely on oracle backends and seeded synthetic data.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>

#include "wiser/wiser.hpp"

using namespace wiser;

namespace {

struct Harness {
  int failures = 0;

  void report(int number, const std::string& name, bool pass, const std::string& note) {
    std::printf("%s  %d  %s%s%s\n", pass ? "PASS" : "FAIL", number, name.c_str(),
                note.empty() ? "" : " — ", note.c_str());
    if (!pass) ++failures;
  }
};

double elapsed_s(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

// ---------------------------------------------------------------------------
// 1. Confidence formula vs high-precision evaluation of the softmax
// ---------------------------------------------------------------------------
void criterion_confidence(Harness& h) {
  const auto start = std::chrono::steady_clock::now();
  Rng rng(1001);
  double max_err = 0.0, max_complement_err = 0.0;
  for (int i = 0; i < 10000; ++i) {
    const double a = rng.uniform(-30.0, 30.0);
    const double b = rng.uniform(-30.0, 30.0);
    const long double ea = std::exp(static_cast<long double>(a));
    const long double eb = std::exp(static_cast<long double>(b));
    const long double reference = ea / (ea + eb);
    const double got = confidence_from_logits({a, b});
    max_err = std::max(max_err, std::abs(got - static_cast<double>(reference)));
    const double complement = confidence_from_logits({b, a});
    max_complement_err = std::max(max_complement_err, std::abs(got + complement - 1.0));
  }
  const double secs = elapsed_s(start);
  std::ostringstream note;
  note << "max err " << max_err << ", complement err " << max_complement_err << ", " << secs
       << " s";
  h.report(1, "confidence formula (10k pairs, 1e-12)",
           max_err < 1e-12 && max_complement_err < 1e-12 && secs < 1.0, note.str());
}

// ---------------------------------------------------------------------------
// 2. Exact top-K vs brute-force full sort on 100 seeded corpora
// ---------------------------------------------------------------------------
void criterion_topk(Harness& h) {
  const auto start = std::chrono::steady_clock::now();
  bool all_exact = true;
  for (int trial = 0; trial < 100 && all_exact; ++trial) {
    Rng rng(2000 + trial);
    const int n = 50 + static_cast<int>(rng.below(951));   // <= 1000
    const int dim = 4 + static_cast<int>(rng.below(61));   // <= 64
    const int k = 1 + static_cast<int>(rng.below(static_cast<std::uint64_t>(n)));

    std::vector<EmbeddingRecord> records;
    records.reserve(n);
    char buf[32];
    for (int i = 0; i < n; ++i) {
      std::snprintf(buf, sizeof buf, "item_%05d", i);
      std::vector<float> v(dim);
      for (auto& x : v) x = static_cast<float>(rng.uniform(-1.0, 1.0));
      records.push_back({buf, std::move(v)});
    }
    EmbeddingIndex index = EmbeddingIndex::build(records, dim);

    std::vector<float> query(dim);
    for (auto& x : query) x = static_cast<float>(rng.uniform(-1.0, 1.0));
    normalize_f32(query, "query");

    // independent route: per-item sequential dot, full sort, prefix
    struct Scored {
      std::string id;
      double sim;
    };
    std::vector<Scored> all;
    all.reserve(n);
    for (std::size_t i = 0; i < index.size(); ++i) {
      auto vec = index.vector_at(i);
      double acc = 0.0;
      for (int d = 0; d < dim; ++d)
        acc += static_cast<double>(vec[d]) * static_cast<double>(query[d]);
      all.push_back({index.id_at(i), acc});
    }
    std::sort(all.begin(), all.end(), [](const Scored& x, const Scored& y) {
      if (x.sim != y.sim) return x.sim > y.sim;
      return x.id < y.id;
    });

    auto got = top_k(index, query, k);
    if (got.size() != static_cast<std::size_t>(k)) all_exact = false;
    for (std::size_t i = 0; i < got.size() && all_exact; ++i)
      if (got[i].item_id != all[i].id || got[i].similarity != all[i].sim) all_exact = false;
  }
  const double secs = elapsed_s(start);
  std::ostringstream note;
  note << "100 corpora, " << secs << " s";
  h.report(2, "top-K equals brute-force full-sort prefix", all_exact && secs < 30.0, note.str());
}

// ---------------------------------------------------------------------------
// 3. fuse_rank vs an independently written three-key comparator sort
// ---------------------------------------------------------------------------
void criterion_fusion_order(Harness& h) {
  const auto start = std::chrono::steady_clock::now();
  bool all_equal = true;
  for (int trial = 0; trial < 1000 && all_equal; ++trial) {
    Rng rng(3000 + trial);
    const int n = 1 + static_cast<int>(rng.below(200));
    std::vector<VerifiedCandidate> candidates;
    candidates.reserve(n);
    for (int i = 0; i < n; ++i) {
      VerifiedCandidate c;
      c.item_id = "c" + std::to_string(i);
      c.confidence = (1.0 + static_cast<double>(rng.below(19))) / 20.0;
      const std::uint64_t membership = rng.below(3);
      c.in_t2i = membership != 1;
      c.in_i2i = membership != 0;
      if (c.in_t2i) c.sim_t2i = rng.unit();
      if (c.in_i2i) c.sim_i2i = rng.unit();
      candidates.push_back(std::move(c));
    }

    // independent route: materialized key tuples under std::tuple ordering
    struct Keyed {
      std::tuple<double, double, double, std::string> key;
    };
    std::vector<Keyed> keyed;
    keyed.reserve(n);
    for (const auto& c : candidates) {
      const double ct = c.in_t2i ? c.confidence : 0.0;
      const double ci = c.in_i2i ? c.confidence : 0.0;
      keyed.push_back({{-(ct + ci), -std::max(ct, ci), -ct, c.item_id}});
    }
    std::sort(keyed.begin(), keyed.end(),
              [](const Keyed& a, const Keyed& b) { return a.key < b.key; });

    auto got = fuse_rank(candidates);
    for (int i = 0; i < n && all_equal; ++i)
      if (got[i] != std::get<3>(keyed[i].key)) all_equal = false;
  }
  const double secs = elapsed_s(start);
  std::ostringstream note;
  note << "1000 candidate sets, " << secs << " s";
  h.report(3, "fusion order equals independent comparator sort", all_equal && secs < 10.0,
           note.str());
}

// ---------------------------------------------------------------------------
// 4. Gate truth table at tau = 0.7 with the strict-< boundary
// ---------------------------------------------------------------------------
void criterion_gate(Harness& h) {
  const double tau = 0.7;
  const double levels[3] = {0.65, 0.70, 0.90};
  bool all_ok = true;
  for (double rt : levels) {
    for (double ri : levels) {
      std::set<Pathway> expected;
      if (rt < tau) expected.insert(Pathway::T2I);  // 0.70 is reliable under strict <
      if (ri < tau) expected.insert(Pathway::I2I);
      if (gate(rt, ri, tau) != expected) all_ok = false;
    }
  }
  h.report(4, "gate truth table at tau=0.7 incl. r=0.70 boundary", all_ok,
           "9 combinations over {0.65, 0.70, 0.90}");
}

// ---------------------------------------------------------------------------
// 5. Metric hand-cases + random agreement with the direct definition
// ---------------------------------------------------------------------------
void criterion_metrics(Harness& h) {
  bool ok = true;
  std::ostringstream note;

  const double ap = map_at_k({"a", "x", "b", "y", "z"}, {"a", "b"}, 5);
  if (std::abs(ap - 0.8333333333333333) > 1e-9) {
    ok = false;
    note << "mAP hand case got " << ap << "; ";
  }
  ok &= recall_at_k({"g", "x", "y"}, {"g"}, 1) == 1;
  ok &= recall_at_k({"x", "y", "g"}, {"g"}, 2) == 0;
  ok &= recall_at_k({"x", "g1", "g2"}, {"g1", "g2"}, 2) == 1;
  ok &= recall_subset_at_k({"t", "a", "b", "c", "d", "e"}, {"t"}, 1) == 1;
  ok &= recall_subset_at_k({"a", "b", "t", "c", "d", "e"}, {"t"}, 2) == 0;
  ok &= recall_subset_at_k({"a", "b", "t", "c", "d", "e"}, {"t"}, 3) == 1;

  // random triples vs direct-definition evaluation
  Rng rng(5001);
  int disagreements = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const int n = 1 + static_cast<int>(rng.below(60));
    std::vector<std::string> ranking;
    for (int i = 0; i < n; ++i) ranking.push_back("i" + std::to_string(i));
    rng.shuffle(ranking);
    std::set<std::string> gt;
    const int n_gt = 1 + static_cast<int>(rng.below(8));
    while (static_cast<int>(gt.size()) < n_gt) gt.insert("i" + std::to_string(rng.below(n + 10)));
    const int k = 1 + static_cast<int>(rng.below(60));

    int direct_recall = 0;
    for (int i = 0; i < k && i < n; ++i)
      if (gt.count(ranking[i])) direct_recall = 1;
    double direct_ap = 0.0;
    for (int i = 1; i <= k && i <= n; ++i) {
      if (!gt.count(ranking[i - 1])) continue;
      int hits = 0;
      for (int j = 0; j < i; ++j) hits += gt.count(ranking[j]) ? 1 : 0;
      direct_ap += static_cast<double>(hits) / i;
    }
    direct_ap /= std::min<std::size_t>(gt.size(), k);

    if (recall_at_k(ranking, gt, k) != direct_recall) ++disagreements;
    if (std::abs(map_at_k(ranking, gt, k) - direct_ap) > 1e-12) ++disagreements;
  }
  if (disagreements > 0) {
    ok = false;
    note << disagreements << " oracle disagreements";
  }
  h.report(5, "metric hand-cases and 1000-triple oracle agreement", ok, note.str());
}

// ---------------------------------------------------------------------------
// 6. End-to-end complementarity on the designated seed
// ---------------------------------------------------------------------------
struct BenchmarkSetup {
  SynthCorpus corpus;
  BackendSuite suite;
  EmbeddingIndex index;
  std::map<std::string, std::string> manifest;
  std::vector<ComposedQuery> queries;
};

BenchmarkSetup make_benchmark(std::uint64_t seed, int items, int n_queries,
                              FailureModeConfig failure, int n_visual, int n_semantic, int attrs,
                              int ops) {
  BenchmarkSetup b;
  b.corpus = gen_corpus(seed, items, n_visual, n_semantic, attrs);
  b.suite = oracle_suite(b.corpus, failure, seed);
  auto records = corpus_embeddings(b.corpus, failure.noise, seed);
  b.index = EmbeddingIndex::build(records, records.front().vector.size());
  for (const auto& item : b.corpus.items) b.manifest.emplace(item.item_id, item.item_id);
  b.queries = gen_queries(b.corpus, seed + 1, n_queries, ops);
  return b;
}

double recall1(const std::vector<QueryResult>& results) {
  double sum = 0.0;
  for (const auto& r : results)
    sum += r.ok ? recall_at_k(r.ranking, r.query.ground_truth_ids, 1) : 0;
  return results.empty() ? 0.0 : sum / results.size();
}

void criterion_complementarity(Harness& h) {
  const auto start = std::chrono::steady_clock::now();
  const std::uint64_t kDesignatedSeed = 20260810;

  FailureModeConfig failure;
  failure.t2i_visual_drop = 1;
  failure.i2i_semantic_drop = 1;
  failure.logit_scale = 4.0;
  // noisy embedding space: similarity-only modes degrade, the verifier holds
  failure.noise = 0.4;
  BenchmarkSetup b = make_benchmark(kDesignatedSeed, 240, 60, failure, 8, 8, 4, 1);

  PipelineConfig cfg;
  cfg.top_k = 50;
  cfg.max_iterations = 0;  // isolate fusion from refinement
  cfg.rng_seed = kDesignatedSeed;
  cfg.backend_parallelism = 2;

  auto run_mode = [&](FusionMode mode, double lambda) {
    PipelineConfig c = cfg;
    c.fusion_mode = mode;
    c.lambda = lambda;
    return recall1(run_batch(b.queries, c, b.suite, b.index, b.manifest));
  };

  const double ada = run_mode(FusionMode::ADA, 0.5);
  const double t2i = run_mode(FusionMode::T2I_ONLY, 0.5);
  const double i2i = run_mode(FusionMode::I2I_ONLY, 0.5);
  const double avg = run_mode(FusionMode::AVG, 0.5);
  const double secs = elapsed_s(start);

  const double best_single = std::max(t2i, i2i);
  const bool pass = ada >= best_single && ada > best_single && avg <= ada && secs < 60.0;
  std::ostringstream note;
  note.precision(4);
  note << "R@1: ADA " << ada << ", T2I " << t2i << ", I2I " << i2i << ", AVG(0.5) " << avg << ", "
       << secs << " s";
  h.report(6, "complementarity: ADA beats both single paths and AVG", pass, note.str());
}

// ---------------------------------------------------------------------------
// 7. Refinement benefit on the initially uncertain subset
// ---------------------------------------------------------------------------
void criterion_refinement(Harness& h) {
  const auto start = std::chrono::steady_clock::now();
  const std::uint64_t kDesignatedSeed = 424242;

  FailureModeConfig failure;
  failure.t2i_visual_drop = 1;
  failure.i2i_semantic_drop = 1;
  failure.logit_scale = 0.5;  // reliability crosses tau only on exact matches
  BenchmarkSetup b = make_benchmark(kDesignatedSeed, 240, 60, failure, 6, 6, 4, 1);

  PipelineConfig cfg;
  cfg.top_k = 4;
  cfg.tau = 0.7;
  cfg.backend_parallelism = 2;
  cfg.rng_seed = kDesignatedSeed;

  PipelineConfig cfg_n0 = cfg;
  cfg_n0.max_iterations = 0;
  auto base = run_batch(b.queries, cfg_n0, b.suite, b.index, b.manifest);

  PipelineConfig cfg_n1 = cfg;
  cfg_n1.max_iterations = 1;
  auto refined = run_batch(b.queries, cfg_n1, b.suite, b.index, b.manifest);

  // split by the initial gate of the N=1 run (iteration-0 state is shared)
  double base_hits = 0, refined_hits = 0;
  int uncertain = 0, reliable = 0, refiner_calls_on_reliable = 0;
  for (std::size_t i = 0; i < b.queries.size(); ++i) {
    if (!refined[i].ok || refined[i].trace.iterations.empty()) continue;
    const auto& it0 = refined[i].trace.iterations[0];
    const bool was_uncertain = !it0.refine_set.empty();
    if (was_uncertain) {
      ++uncertain;
      base_hits += recall_at_k(base[i].ranking, b.queries[i].ground_truth_ids, 1);
      refined_hits += recall_at_k(refined[i].ranking, b.queries[i].ground_truth_ids, 1);
    } else {
      ++reliable;
      refiner_calls_on_reliable += refined[i].trace.counts.refiner;
    }
  }
  const double secs = elapsed_s(start);

  const bool pass = uncertain > 0 && reliable > 0 && refined_hits > base_hits &&
                    refiner_calls_on_reliable == 0 && secs < 60.0;
  std::ostringstream note;
  note << "uncertain subset " << uncertain << "/" << b.queries.size() << ", R@1 hits N=0 "
       << base_hits << " -> N=1 " << refined_hits << ", refiner calls on reliable subset "
       << refiner_calls_on_reliable << ", " << secs << " s";
  h.report(7, "refinement benefit: N=1 beats N=0 on the uncertain subset", pass, note.str());
}

// ---------------------------------------------------------------------------
// 8. Byte-identical canonical traces across runs and parallelism levels
// ---------------------------------------------------------------------------
void criterion_determinism(Harness& h) {
  FailureModeConfig failure;
  failure.t2i_visual_drop = 1;
  failure.i2i_semantic_drop = 1;
  failure.logit_scale = 0.5;
  failure.noise = 0.01;
  BenchmarkSetup b = make_benchmark(777, 150, 25, failure, 6, 6, 4, 1);

  auto trace_bytes = [&](int parallelism, const std::string& path) {
    PipelineConfig cfg;
    cfg.top_k = 5;
    cfg.max_iterations = 1;
    cfg.backend_parallelism = parallelism;
    auto results = run_batch(b.queries, cfg, b.suite, b.index, b.manifest);
    write_traces(path, results, /*include_meta=*/false);
    std::ifstream in(path, std::ios::binary);
    std::stringstream buf;
    buf << in.rdbuf();
    return buf.str();
  };

  const std::string p1a = trace_bytes(1, "acc_traces_p1_a.jsonl");
  const std::string p1b = trace_bytes(1, "acc_traces_p1_b.jsonl");
  const std::string p8a = trace_bytes(8, "acc_traces_p8_a.jsonl");
  const std::string p8b = trace_bytes(8, "acc_traces_p8_b.jsonl");
  for (const char* f : {"acc_traces_p1_a.jsonl", "acc_traces_p1_b.jsonl", "acc_traces_p8_a.jsonl",
                        "acc_traces_p8_b.jsonl"})
    std::remove(f);

  const bool pass = !p1a.empty() && p1a == p1b && p1a == p8a && p8a == p8b;
  h.report(8, "determinism: byte-identical traces across runs and parallelism {1,8}", pass,
           pass ? "4 trace files identical" : "trace files differ");
}

// ---------------------------------------------------------------------------
// 9. Report fidelity: the CIRCO row renders mAP@5 as 32.23
// ---------------------------------------------------------------------------
void criterion_report(Harness& h) {
  std::vector<QueryResult> results;
  results.reserve(10000);
  for (int i = 0; i < 10000; ++i) {
    QueryResult r;
    r.query.query_id = "q" + std::to_string(i);
    const std::string gt = "g" + std::to_string(i);
    r.query.ground_truth_ids = {gt};
    r.ok = true;
    if (i < 3223) {
      r.ranking = {gt, "x1", "x2", "x3", "x4", "x5"};
    } else {
      r.ranking = {"x1", "x2", "x3", "x4", "x5", gt};
    }
    results.push_back(std::move(r));
  }
  std::string table;
  MetricReport report = emit_report(results, Protocol::CIRCO, PipelineConfig{}, &table);
  const bool has_cell = table.find("32.23") != std::string::npos;
  const bool has_columns = table.find("mAP@5") != std::string::npos &&
                           table.find("mAP@10") != std::string::npos &&
                           table.find("mAP@25") != std::string::npos &&
                           table.find("mAP@50") != std::string::npos;
  const bool exact = std::abs(report.value("mAP@5") - 0.3223) < 1e-12;
  h.report(9, "report fidelity: CIRCO row renders mAP@5 = 32.23", has_cell && has_columns && exact,
           "recorded-rankings fixture, 10000 queries");
}

}  // namespace

int main() {
  Harness h;
  criterion_confidence(h);
  criterion_topk(h);
  criterion_fusion_order(h);
  criterion_gate(h);
  criterion_metrics(h);
  criterion_complementarity(h);
  criterion_refinement(h);
  criterion_determinism(h);
  criterion_report(h);
  if (h.failures > 0) {
    std::printf("%d criterion(s) failed\n", h.failures);
    return 1;
  }
  std::printf("all 9 criteria passed\n");
  return 0;
}
