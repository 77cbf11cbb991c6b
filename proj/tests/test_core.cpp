#include <catch2/catch_amalgamated.hpp>

#include <fstream>

#include "wiser/core.hpp"
#include "wiser/rng.hpp"

using namespace wiser;

TEST_CASE("validate_config accepts the defaults") {
  PipelineConfig cfg;
  REQUIRE(cfg.top_k == 50);
  REQUIRE(cfg.tau == 0.7);
  REQUIRE(cfg.max_iterations == 1);
  REQUIRE_NOTHROW(validate_config(cfg));
}

TEST_CASE("validate_config boundary and range errors") {
  PipelineConfig cfg;
  cfg.tau = 1.0;
  REQUIRE_NOTHROW(validate_config(cfg));
  cfg.tau = 0.0;
  REQUIRE_NOTHROW(validate_config(cfg));

  cfg = PipelineConfig{};
  cfg.top_k = 0;
  try {
    validate_config(cfg);
    FAIL("expected RANGE");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::RANGE);
    CHECK(e.detail() == "top_k");
  }

  cfg = PipelineConfig{};
  cfg.tau = 1.5;
  CHECK_THROWS_AS(validate_config(cfg), Error);

  cfg = PipelineConfig{};
  cfg.max_iterations = -1;
  CHECK_THROWS_AS(validate_config(cfg), Error);

  cfg = PipelineConfig{};
  cfg.fusion_mode = FusionMode::AVG;
  cfg.lambda = 1.25;
  CHECK_THROWS_AS(validate_config(cfg), Error);
  // lambda is only constrained for AVG
  cfg.fusion_mode = FusionMode::ADA;
  REQUIRE_NOTHROW(validate_config(cfg));

  cfg = PipelineConfig{};
  cfg.backend_parallelism = 0;
  CHECK_THROWS_AS(validate_config(cfg), Error);
}

TEST_CASE("config round-trips through serialization and validation") {
  Rng rng(17);
  for (int trial = 0; trial < 200; ++trial) {
    PipelineConfig cfg;
    cfg.top_k = 1 + static_cast<int>(rng.below(100));
    cfg.tau = rng.unit();
    cfg.max_iterations = static_cast<int>(rng.below(4));
    const int mode = static_cast<int>(rng.below(5));
    cfg.fusion_mode = static_cast<FusionMode>(mode);
    cfg.lambda = rng.unit();
    cfg.rak_pathway = rng.below(2) == 0 ? Pathway::T2I : Pathway::I2I;
    cfg.backend_parallelism = 1 + static_cast<int>(rng.below(8));
    cfg.rng_seed = rng.next_u64();

    PipelineConfig back = validate_config(config_from_json(config_to_json(cfg)));
    CHECK(back.top_k == cfg.top_k);
    CHECK(back.tau == cfg.tau);
    CHECK(back.max_iterations == cfg.max_iterations);
    CHECK(back.fusion_mode == cfg.fusion_mode);
    CHECK(back.lambda == cfg.lambda);
    if (cfg.fusion_mode == FusionMode::RAK) CHECK(back.rak_pathway == cfg.rak_pathway);
    CHECK(back.backend_parallelism == cfg.backend_parallelism);
    CHECK(back.rng_seed == cfg.rng_seed);
  }
}

TEST_CASE("fusion mode parsing") {
  CHECK(parse_fusion_mode("ADA").first == FusionMode::ADA);
  CHECK(parse_fusion_mode("avg").first == FusionMode::AVG);
  CHECK(parse_fusion_mode("RAK").first == FusionMode::RAK);
  CHECK(parse_fusion_mode("RAK").second == Pathway::T2I);
  CHECK(parse_fusion_mode("rak_i2i").second == Pathway::I2I);
  CHECK(parse_fusion_mode("T2I_ONLY").first == FusionMode::T2I_ONLY);
  CHECK_THROWS_AS(parse_fusion_mode("bogus"), Error);
}

TEST_CASE("config file accepts flat TOML and JSON") {
  const std::string toml_path = "test_cfg.toml";
  {
    std::ofstream out(toml_path);
    out << "# comment\n"
        << "top_k = 25\n"
        << "tau = 0.6\n"
        << "fusion_mode = \"AVG\"\n"
        << "lambda = 0.3\n"
        << "max_iterations = 2\n"
        << "backend_parallelism = 4\n"
        << "rng_seed = 12345\n";
  }
  PipelineConfig cfg = load_config_file(toml_path);
  CHECK(cfg.top_k == 25);
  CHECK(cfg.tau == 0.6);
  CHECK(cfg.fusion_mode == FusionMode::AVG);
  CHECK(cfg.lambda == 0.3);
  CHECK(cfg.max_iterations == 2);
  CHECK(cfg.backend_parallelism == 4);
  CHECK(cfg.rng_seed == 12345);

  const std::string json_path = "test_cfg.json";
  {
    std::ofstream out(json_path);
    out << config_to_json(cfg).dump();
  }
  PipelineConfig cfg2 = load_config_file(json_path);
  CHECK(cfg2.top_k == cfg.top_k);
  CHECK(cfg2.tau == cfg.tau);
  CHECK(cfg2.fusion_mode == cfg.fusion_mode);

  std::remove(toml_path.c_str());
  std::remove(json_path.c_str());
}

TEST_CASE("unknown config keys are rejected with the key name") {
  const std::string path = "test_cfg_bad.toml";
  {
    std::ofstream out(path);
    out << "topk = 10\n";
  }
  try {
    load_config_file(path);
    FAIL("expected SCHEMA_ERROR");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::SCHEMA_ERROR);
    CHECK(e.detail().find("topk") != std::string::npos);
  }
  std::remove(path.c_str());
}

TEST_CASE("pathway order is T2I before I2I") {
  CHECK(static_cast<int>(Pathway::T2I) < static_cast<int>(Pathway::I2I));
  CHECK(kPathways[0] == Pathway::T2I);
}

TEST_CASE("rng helpers are deterministic and in range") {
  Rng a(99), b(99);
  for (int i = 0; i < 1000; ++i) {
    const std::uint64_t bound = 1 + (i % 97);
    const std::uint64_t x = a.below(bound);
    CHECK(x == b.below(bound));
    CHECK(x < bound);
    const double u = a.unit();
    CHECK(u == b.unit());
    CHECK(u >= 0.0);
    CHECK(u < 1.0);
  }
}
