// wiser: composed-image-retrieval pipeline CLI.
//
// Subcommands: index (embedding file conversion), query (single query),
// eval (batch run + metrics), synth (synthetic benchmark generation),
// report (metrics from recorded traces).

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "wiser/wiser.hpp"

namespace fs = std::filesystem;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitValidation = 1;
constexpr int kExitRuntime = 2;

struct ConfigFlags {
  std::string config_path;
  std::string mode;
  double tau = 0.7;
  int top_k = 50;
  int max_iters = 1;
  double lambda = 0.5;
  int parallelism = 1;
  std::uint64_t seed = 0;
  bool strict_fusion = false;
  int trace_depth = 100;
};

void add_config_flags(CLI::App* cmd, ConfigFlags& flags) {
  cmd->add_option("--config", flags.config_path, "Config file (flat TOML or JSON)");
  cmd->add_option("--mode", flags.mode, "Fusion mode: ADA|AVG|RAK_T2I|RAK_I2I|T2I_ONLY|I2I_ONLY")
      ->default_str("ADA");
  cmd->add_option("--tau", flags.tau, "Reliability threshold")->capture_default_str();
  cmd->add_option("--top-k", flags.top_k, "Candidate pool size per pathway")
      ->capture_default_str();
  cmd->add_option("--max-iters", flags.max_iters, "Refinement iteration cap N")
      ->capture_default_str();
  cmd->add_option("--lambda", flags.lambda, "T2I weight for AVG fusion")->capture_default_str();
  cmd->add_option("--parallelism", flags.parallelism, "Concurrent queries")
      ->capture_default_str();
  cmd->add_option("--seed", flags.seed, "RNG seed")->capture_default_str();
  cmd->add_flag("--strict-fusion", flags.strict_fusion,
                "Exclude candidates seen only by still-uncertain pathways from fusion");
  cmd->add_option("--trace-depth", flags.trace_depth, "Final-ranking ids kept per trace")
      ->capture_default_str();
}

wiser::PipelineConfig build_config(const CLI::App* cmd, const ConfigFlags& flags) {
  wiser::PipelineConfig cfg;
  if (!flags.config_path.empty()) cfg = wiser::load_config_file(flags.config_path);
  if (cmd->count("--mode")) {
    auto [mode, rak] = wiser::parse_fusion_mode(flags.mode);
    cfg.fusion_mode = mode;
    cfg.rak_pathway = rak;
  }
  if (cmd->count("--tau")) cfg.tau = flags.tau;
  if (cmd->count("--top-k")) cfg.top_k = flags.top_k;
  if (cmd->count("--max-iters")) cfg.max_iterations = flags.max_iters;
  if (cmd->count("--lambda")) cfg.lambda = flags.lambda;
  if (cmd->count("--parallelism")) cfg.backend_parallelism = flags.parallelism;
  if (cmd->count("--seed")) cfg.rng_seed = flags.seed;
  if (cmd->count("--strict-fusion")) cfg.strict_gate_fusion = flags.strict_fusion;
  if (cmd->count("--trace-depth")) cfg.trace_depth = flags.trace_depth;
  return wiser::validate_config(cfg);
}

int cmd_index(const std::string& embeddings_path, const std::string& out_path, bool binary) {
  std::vector<wiser::EmbeddingRecord> records = wiser::read_embeddings(embeddings_path);
  if (records.empty()) {
    std::cerr << "error: no records in " << embeddings_path << "\n";
    return kExitValidation;
  }
  const std::size_t dim = records.front().vector.size();
  // Build validates dims, ids, norms, and normalizes in place.
  wiser::EmbeddingIndex index = wiser::EmbeddingIndex::build(records, dim);
  std::vector<wiser::EmbeddingRecord> normalized;
  normalized.reserve(index.size());
  for (std::size_t i = 0; i < index.size(); ++i) {
    auto span = index.vector_at(i);
    normalized.push_back({index.id_at(i), {span.begin(), span.end()}});
  }
  if (binary) {
    wiser::write_embeddings_binary(out_path, normalized, dim);
  } else {
    wiser::write_embeddings_jsonl(out_path, normalized);
  }
  std::cout << "indexed " << index.size() << " items, dim " << dim << "\n";
  return kExitOk;
}

int cmd_synth(std::uint64_t seed, int items, int queries, const std::string& failure_spec,
              const std::string& out_dir, int visual, int semantic, int attrs_per_item,
              int edit_ops, double noise, double logit_scale, bool binary) {
  wiser::FailureModeConfig failure = wiser::parse_failure_spec(failure_spec);
  failure.noise = noise;
  failure.logit_scale = logit_scale;

  wiser::SynthCorpus corpus = wiser::gen_corpus(seed, items, visual, semantic, attrs_per_item);
  std::vector<wiser::ComposedQuery> query_set = wiser::gen_queries(corpus, seed + 1, queries, edit_ops);

  fs::create_directories(out_dir);
  std::vector<wiser::EmbeddingRecord> records = wiser::corpus_embeddings(corpus, noise, seed);
  if (binary) {
    wiser::write_embeddings_binary(out_dir + "/embeddings.bin", records, records.front().vector.size());
  } else {
    wiser::write_embeddings_jsonl(out_dir + "/embeddings.jsonl", records);
  }

  std::map<std::string, std::string> manifest;
  for (const auto& item : corpus.items) manifest.emplace(item.item_id, item.item_id);
  wiser::write_dataset_json(out_dir + "/dataset.json", query_set, manifest);

  wiser::OracleManifest oracle;
  oracle.universe = corpus.universe;
  oracle.items = corpus.manifest();
  oracle.failure = failure;
  oracle.seed = seed;
  wiser::write_oracle_manifest(out_dir + "/oracle_manifest.json", oracle);

  nlohmann::ordered_json backends;
  backends["oracle_manifest"] = "oracle_manifest.json";
  std::ofstream bf(out_dir + "/backends.json", std::ios::binary);
  bf << backends.dump(2) << "\n";

  std::cout << "wrote " << corpus.items.size() << " items, " << query_set.size()
            << " queries to " << out_dir << "\n";
  return kExitOk;
}

wiser::BackendSuite load_suite(const std::string& backends_path, const std::string& artifact_dir) {
  std::ifstream probe(backends_path);
  if (!probe) throw wiser::Error(wiser::ErrorCode::IO_ERROR, "cannot open " + backends_path);
  nlohmann::json j = nlohmann::json::parse(probe, nullptr, false);
  if (!j.is_discarded() && j.is_object() && j.contains("oracle_manifest")) {
    // Resolve the manifest relative to the backends file itself.
    fs::path manifest = j["oracle_manifest"].get<std::string>();
    if (manifest.is_relative()) manifest = fs::path(backends_path).parent_path() / manifest;
    return wiser::oracle_suite(wiser::load_oracle_manifest(manifest.string()));
  }
  return wiser::load_backend_suite(backends_path, artifact_dir);
}

int run_eval(const std::string& dataset_path, const std::string& embeddings_path,
             const std::string& backends_path, const std::string& trace_path,
             const std::string& protocol_name, const std::string& report_json_path,
             const std::string& artifact_dir, bool no_meta, const wiser::PipelineConfig& cfg) {
  wiser::Dataset dataset = wiser::load_dataset(dataset_path);
  wiser::EmbeddingIndex index = wiser::load_index(embeddings_path);
  wiser::BackendSuite suite = load_suite(backends_path, artifact_dir);

  std::vector<wiser::QueryResult> results =
      wiser::run_batch(dataset.queries, cfg, suite, index, dataset.manifest);

  if (!trace_path.empty()) wiser::write_traces(trace_path, results, !no_meta);

  wiser::Protocol protocol = wiser::parse_protocol(protocol_name);
  std::string table;
  wiser::MetricReport report = wiser::emit_report(results, protocol, cfg, &table);
  std::cout << table;

  if (!report_json_path.empty()) {
    std::ofstream out(report_json_path, std::ios::binary);
    out << wiser::report_to_json(report).dump(2) << "\n";
  }

  if (report.error_count > 0) {
    std::cerr << report.error_count << " of " << report.query_count << " queries failed\n";
    for (const auto& r : results)
      if (!r.ok) std::cerr << "  " << r.query.query_id << ": " << r.trace.error << "\n";
    return kExitRuntime;
  }
  return kExitOk;
}

int run_query_cmd(const std::string& dataset_path, const std::string& embeddings_path,
                  const std::string& backends_path, const std::string& query_id,
                  const std::string& trace_path, const std::string& artifact_dir, int show,
                  const wiser::PipelineConfig& cfg) {
  wiser::Dataset dataset = wiser::load_dataset(dataset_path);
  wiser::EmbeddingIndex index = wiser::load_index(embeddings_path);
  wiser::BackendSuite suite = load_suite(backends_path, artifact_dir);

  const wiser::ComposedQuery* query = nullptr;
  for (const auto& q : dataset.queries)
    if (q.query_id == query_id) query = &q;
  if (query == nullptr)
    throw wiser::Error(wiser::ErrorCode::SCHEMA_ERROR, "no query with id '" + query_id + "'");

  wiser::QueryResult result = wiser::run_query(*query, cfg, suite, index, dataset.manifest);
  if (!trace_path.empty()) wiser::write_traces(trace_path, {result});
  if (!result.ok) {
    std::cerr << "query failed: " << result.trace.error << "\n";
    return kExitRuntime;
  }
  const int n = std::min<int>(show, static_cast<int>(result.ranking.size()));
  for (int i = 0; i < n; ++i) {
    const std::string& id = result.ranking[i];
    const bool hit = query->ground_truth_ids.count(id) != 0;
    std::printf("%3d  %s%s\n", i + 1, id.c_str(), hit ? "  *" : "");
  }
  return kExitOk;
}

int run_report(const std::string& trace_path, const std::string& dataset_path,
               const std::string& protocol_name, const std::string& report_json_path) {
  wiser::Dataset dataset = wiser::load_dataset(dataset_path);
  std::map<std::string, const wiser::ComposedQuery*> by_id;
  for (const auto& q : dataset.queries) by_id.emplace(q.query_id, &q);

  std::ifstream in(trace_path);
  if (!in) throw wiser::Error(wiser::ErrorCode::IO_ERROR, "cannot open " + trace_path);
  std::vector<wiser::QueryResult> results;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (wiser::trim(line).empty()) continue;
    nlohmann::json j = nlohmann::json::parse(line, nullptr, false);
    if (j.is_discarded())
      throw wiser::Error(wiser::ErrorCode::SCHEMA_ERROR,
                         "trace line " + std::to_string(line_no) + " is not valid JSON");
    wiser::QueryResult r;
    const std::string qid = j.value("query_id", "");
    auto it = by_id.find(qid);
    if (it == by_id.end())
      throw wiser::Error(wiser::ErrorCode::SCHEMA_ERROR,
                         "trace query '" + qid + "' not present in dataset");
    r.query = *it->second;
    r.ok = !j.contains("error");
    for (const auto& id : j.value("final_ranking", nlohmann::json::array()))
      r.ranking.push_back(id.get<std::string>());
    if (j.contains("subset_ranking")) {
      std::vector<std::string> subset;
      for (const auto& id : j["subset_ranking"]) subset.push_back(id.get<std::string>());
      r.trace.subset_ranking = std::move(subset);
    }
    r.trace.query_id = qid;
    results.push_back(std::move(r));
  }

  wiser::Protocol protocol = wiser::parse_protocol(protocol_name);
  std::string table;
  wiser::MetricReport report = wiser::emit_report(results, protocol, wiser::PipelineConfig{}, &table);
  report.config_fingerprint = "traces";
  std::cout << wiser::render_table(report);
  if (!report_json_path.empty()) {
    std::ofstream out(report_json_path, std::ios::binary);
    out << wiser::report_to_json(report).dump(2) << "\n";
  }
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"wiser: training-free composed image retrieval (retrieve-verify-refine)"};
  app.require_subcommand(1);

  // index
  auto* index_cmd = app.add_subcommand("index", "Validate and convert an embedding file");
  std::string idx_embeddings, idx_out;
  bool idx_binary = false;
  index_cmd->add_option("--embeddings", idx_embeddings, "Input embedding file (JSONL or binary)")
      ->required();
  index_cmd->add_option("--out", idx_out, "Output path")->required();
  index_cmd->add_flag("--binary", idx_binary, "Write the binary form instead of JSONL");

  // query
  auto* query_cmd = app.add_subcommand("query", "Run a single query and print the top ranking");
  std::string q_dataset, q_embeddings, q_backends, q_id, q_trace, q_artifacts = "artifacts";
  int q_show = 10;
  ConfigFlags q_flags;
  query_cmd->add_option("--dataset", q_dataset, "Dataset JSON")->required();
  query_cmd->add_option("--embeddings", q_embeddings, "Embedding file")->required();
  query_cmd->add_option("--backends", q_backends, "Backends file")->required();
  query_cmd->add_option("--query-id", q_id, "Query id to run")->required();
  query_cmd->add_option("--trace", q_trace, "Write the query trace to this file");
  query_cmd->add_option("--artifact-dir", q_artifacts, "Directory for edited-image payloads")
      ->capture_default_str();
  query_cmd->add_option("--show", q_show, "Ranks to print")->capture_default_str();
  add_config_flags(query_cmd, q_flags);

  // eval
  auto* eval_cmd = app.add_subcommand("eval", "Run a batch evaluation and print metrics");
  std::string e_dataset, e_embeddings, e_backends, e_trace, e_protocol = "generic";
  std::string e_report_json, e_artifacts = "artifacts";
  bool e_no_meta = false;
  ConfigFlags e_flags;
  eval_cmd->add_option("--dataset", e_dataset, "Dataset JSON")->required();
  eval_cmd->add_option("--embeddings", e_embeddings, "Embedding file")->required();
  eval_cmd->add_option("--backends", e_backends, "Backends file")->required();
  eval_cmd->add_option("--trace", e_trace, "Trace output (JSON Lines)");
  eval_cmd->add_option("--protocol", e_protocol, "Metric protocol: circo|cirr|fashioniq|generic")
      ->capture_default_str();
  eval_cmd->add_option("--report-json", e_report_json, "Machine-readable report output");
  eval_cmd->add_option("--artifact-dir", e_artifacts, "Directory for edited-image payloads")
      ->capture_default_str();
  eval_cmd->add_flag("--no-meta", e_no_meta,
                     "Canonical traces: omit wall-clock timings and call counts");
  add_config_flags(eval_cmd, e_flags);

  // synth
  auto* synth_cmd = app.add_subcommand("synth", "Generate a deterministic synthetic benchmark");
  std::uint64_t s_seed = 0;
  int s_items = 200, s_queries = 50, s_visual = 8, s_semantic = 8, s_attrs = 4, s_ops = 1;
  double s_noise = 0.0, s_logit_scale = 4.0;
  std::string s_failure = "none", s_out;
  bool s_binary = false;
  synth_cmd->add_option("--seed", s_seed, "Generator seed")->required();
  synth_cmd->add_option("--items", s_items, "Corpus size")->capture_default_str();
  synth_cmd->add_option("--queries", s_queries, "Query count")->capture_default_str();
  synth_cmd->add_option("--failure", s_failure,
                        "Failure spec, e.g. t2i=visual_drop:1,i2i=semantic_drop:1")
      ->capture_default_str();
  synth_cmd->add_option("--out", s_out, "Output directory")->required();
  synth_cmd->add_option("--visual", s_visual, "Visual tokens in the universe")
      ->capture_default_str();
  synth_cmd->add_option("--semantic", s_semantic, "Semantic tokens in the universe")
      ->capture_default_str();
  synth_cmd->add_option("--attrs-per-item", s_attrs, "Attributes per item")->capture_default_str();
  synth_cmd->add_option("--edit-ops", s_ops, "Edit operations per query")->capture_default_str();
  synth_cmd->add_option("--noise", s_noise, "Embedding noise amplitude")->capture_default_str();
  synth_cmd->add_option("--logit-scale", s_logit_scale, "Oracle verifier logit scale")
      ->capture_default_str();
  synth_cmd->add_flag("--binary", s_binary, "Write embeddings in the binary form");

  // report
  auto* report_cmd = app.add_subcommand("report", "Recompute metrics from recorded traces");
  std::string r_trace, r_dataset, r_protocol = "generic", r_report_json;
  report_cmd->add_option("--trace", r_trace, "Trace file (JSON Lines)")->required();
  report_cmd->add_option("--dataset", r_dataset, "Dataset JSON")->required();
  report_cmd->add_option("--protocol", r_protocol, "Metric protocol")->capture_default_str();
  report_cmd->add_option("--report-json", r_report_json, "Machine-readable report output");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitValidation;
  }

  try {
    if (index_cmd->parsed()) return cmd_index(idx_embeddings, idx_out, idx_binary);
    if (synth_cmd->parsed())
      return cmd_synth(s_seed, s_items, s_queries, s_failure, s_out, s_visual, s_semantic,
                       s_attrs, s_ops, s_noise, s_logit_scale, s_binary);
    if (query_cmd->parsed())
      return run_query_cmd(q_dataset, q_embeddings, q_backends, q_id, q_trace, q_artifacts,
                           q_show, build_config(query_cmd, q_flags));
    if (eval_cmd->parsed())
      return run_eval(e_dataset, e_embeddings, e_backends, e_trace, e_protocol, e_report_json,
                      e_artifacts, e_no_meta, build_config(eval_cmd, e_flags));
    if (report_cmd->parsed()) return run_report(r_trace, r_dataset, r_protocol, r_report_json);
  } catch (const wiser::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    switch (e.code()) {
      case wiser::ErrorCode::BACKEND_UNAVAILABLE:
      case wiser::ErrorCode::EMPTY_RESPONSE:
      case wiser::ErrorCode::VERIFY_UNPARSEABLE:
      case wiser::ErrorCode::UNPARSEABLE_REFLECTION:
        return kExitRuntime;
      default:
        return kExitValidation;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitOk;
}
