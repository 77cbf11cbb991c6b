#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "wiser/fusion.hpp"
#include "wiser/rng.hpp"

using namespace wiser;

namespace {

// Independent comparator route: materialize the key tuples and lexicographic-
// compare them, instead of the cascaded comparison in fuse_rank.
std::vector<std::string> brute_force_fuse(const std::vector<VerifiedCandidate>& candidates) {
  struct Keyed {
    std::array<double, 3> key;
    std::string id;
  };
  std::vector<Keyed> keyed;
  for (const auto& c : candidates) {
    const double ct = c.in_t2i ? c.confidence : 0.0;
    const double ci = c.in_i2i ? c.confidence : 0.0;
    keyed.push_back({{-(ct + ci), -std::max(ct, ci), -ct}, c.item_id});
  }
  std::sort(keyed.begin(), keyed.end(), [](const Keyed& a, const Keyed& b) {
    if (a.key != b.key) return a.key < b.key;
    return a.id < b.id;
  });
  std::vector<std::string> ids;
  for (const auto& k : keyed) ids.push_back(k.id);
  return ids;
}

std::vector<VerifiedCandidate> random_candidates(Rng& rng, int n) {
  std::vector<VerifiedCandidate> out;
  for (int i = 0; i < n; ++i) {
    VerifiedCandidate c;
    c.item_id = "c" + std::to_string(i);
    // coarse grid so key ties actually happen
    c.confidence = (1.0 + static_cast<double>(rng.below(9))) / 10.0;
    const std::uint64_t membership = rng.below(3);
    c.in_t2i = membership != 1;
    c.in_i2i = membership != 0;
    if (c.in_t2i) c.sim_t2i = rng.unit();
    if (c.in_i2i) c.sim_i2i = rng.unit();
    out.push_back(std::move(c));
  }
  return out;
}

UnionPool make_pool(std::initializer_list<UnionEntry> entries) {
  UnionPool pool;
  pool.entries = entries;
  return pool;
}

}  // namespace

TEST_CASE("confidence_from_logits evaluates the softmax exactly") {
  CHECK(confidence_from_logits({0.0, 0.0}) == 0.5);
  CHECK(std::abs(confidence_from_logits({2.0, 0.0}) - 0.8807970779778823) < 1e-12);
  CHECK(std::abs(confidence_from_logits({-3.0, 3.0}) - 0.0024726231566347743) < 1e-12);
}

TEST_CASE("confidence complement identity holds to 1e-12") {
  Rng rng(1);
  for (int i = 0; i < 2000; ++i) {
    const double a = rng.uniform(-30.0, 30.0);
    const double b = rng.uniform(-30.0, 30.0);
    const double c1 = confidence_from_logits({a, b});
    const double c2 = confidence_from_logits({b, a});
    CHECK(std::abs(c1 + c2 - 1.0) < 1e-12);
    // strict openness holds until the sigmoid saturates in double (|d| ~ 37);
    // verifier logits stay far inside that range (oracle <= 8, fallback 20)
    if (std::abs(a - b) < 36.0) {
      CHECK(c1 > 0.0);
      CHECK(c1 < 1.0);
    }
  }
}

TEST_CASE("confidence depends only on the logit difference") {
  Rng rng(2);
  for (int i = 0; i < 500; ++i) {
    const double a = rng.uniform(-20.0, 20.0);
    const double b = rng.uniform(-20.0, 20.0);
    const double shift = rng.uniform(-50.0, 50.0);
    CHECK(std::abs(confidence_from_logits({a, b}) - confidence_from_logits({a + shift, b + shift})) <
          1e-12);
  }
}

TEST_CASE("confidence rejects non-finite logits") {
  CHECK_THROWS_AS(confidence_from_logits({std::nan(""), 0.0}), Error);
  CHECK_THROWS_AS(confidence_from_logits({0.0, INFINITY}), Error);
}

TEST_CASE("pathway_reliability takes the confidence argmax") {
  UnionPool pool = make_pool({{"a", true, false, 0.9, {}},
                              {"b", true, true, 0.8, 0.7},
                              {"c", true, false, 0.5, {}}});
  std::map<std::string, double> conf = {{"a", 0.2}, {"b", 0.8}, {"c", 0.5}};
  auto [pseudo, r] = pathway_reliability(pool, conf, Pathway::T2I);
  CHECK(pseudo == "b");
  CHECK(r == 0.8);
}

TEST_CASE("pathway_reliability breaks confidence ties by similarity then id") {
  UnionPool pool = make_pool({{"a", true, false, 0.9, {}}, {"b", true, false, 0.7, {}}});
  std::map<std::string, double> conf = {{"a", 0.8}, {"b", 0.8}};
  auto [pseudo, r] = pathway_reliability(pool, conf, Pathway::T2I);
  CHECK(pseudo == "a");  // higher sim wins
  CHECK(r == 0.8);

  UnionPool tie = make_pool({{"b", true, false, 0.9, {}}, {"a", true, false, 0.9, {}}});
  auto [pseudo2, r2] = pathway_reliability(tie, conf, Pathway::T2I);
  CHECK(pseudo2 == "a");  // id ascending on full tie
}

TEST_CASE("pathway_reliability reports empty pathways") {
  UnionPool pool = make_pool({{"a", true, false, 0.9, {}}});
  std::map<std::string, double> conf = {{"a", 0.5}};
  try {
    pathway_reliability(pool, conf, Pathway::I2I);
    FAIL("expected EMPTY_PATHWAY");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::EMPTY_PATHWAY);
  }
}

TEST_CASE("gate applies the strict threshold") {
  CHECK(gate(0.9, 0.9, 0.7).empty());
  CHECK(gate(0.65, 0.9, 0.7) == std::set<Pathway>{Pathway::T2I});
  // boundary: 0.70 is reliable under strict <
  CHECK(gate(0.70, 0.69, 0.7) == std::set<Pathway>{Pathway::I2I});
  CHECK(gate(0.5, 0.5, 0.7) == std::set<Pathway>({Pathway::T2I, Pathway::I2I}));
}

TEST_CASE("gate is monotone in tau") {
  Rng rng(5);
  for (int i = 0; i < 500; ++i) {
    const double rt = rng.unit(), ri = rng.unit();
    const double tau1 = rng.unit(), tau2 = tau1 + (1.0 - tau1) * rng.unit();
    auto low = gate(rt, ri, tau1);
    auto high = gate(rt, ri, tau2);
    for (Pathway p : low) CHECK(high.count(p) == 1);
  }
}

TEST_CASE("fuse_rank hand cases") {
  // cross-path agreement beats a higher single-path confidence:
  // A fused 1.2 vs B fused 0.9
  std::vector<VerifiedCandidate> one = {{"A", 0.6, true, true, 0.5, 0.5},
                                        {"B", 0.9, true, false, 0.9, {}}};
  CHECK(fuse_rank(one) == std::vector<std::string>{"A", "B"});

  // membership alone flips the order at lower confidence
  std::vector<VerifiedCandidate> both_vs_single = {{"A", 0.6, true, false, {}, {}},
                                                   {"B", 0.5, true, true, {}, {}}};
  CHECK(fuse_rank(both_vs_single) == std::vector<std::string>{"B", "A"});

  // full tie resolves by item id
  std::vector<VerifiedCandidate> tie = {{"zz", 0.7, true, true, {}, {}},
                                        {"aa", 0.7, true, true, {}, {}}};
  CHECK(fuse_rank(tie) == std::vector<std::string>{"aa", "zz"});
}

TEST_CASE("psi key comparisons on per-path confidences") {
  // equal fused 1.0: second key -max -> (0.6, 0.4) before (0.5, 0.5)
  CHECK(psi_less({0.6, 0.4}, {0.5, 0.5}));
  CHECK_FALSE(psi_less({0.5, 0.5}, {0.6, 0.4}));
  // keys 1 and 2 equal: third key prefers the higher T2I confidence
  CHECK(psi_less({0.6, 0.4}, {0.4, 0.6}));
  CHECK_FALSE(psi_less({0.4, 0.6}, {0.6, 0.4}));
  // fused dominates
  CHECK(psi_less({0.6, 0.6}, {0.9, 0.0}));
  // identical keys compare equal both ways
  CHECK_FALSE(psi_less({0.5, 0.5}, {0.5, 0.5}));
}

TEST_CASE("fuse_rank matches the independent three-key comparator") {
  Rng rng(8);
  for (int trial = 0; trial < 200; ++trial) {
    const int n = 1 + static_cast<int>(rng.below(200));
    auto candidates = random_candidates(rng, n);
    CHECK(fuse_rank(candidates) == brute_force_fuse(candidates));
  }
}

TEST_CASE("dual-path presence ranks at or above single-path at equal confidence") {
  Rng rng(9);
  for (int trial = 0; trial < 200; ++trial) {
    const double c = rng.unit();
    std::vector<VerifiedCandidate> candidates = {{"both", c, true, true, {}, {}},
                                                 {"single", c, rng.below(2) == 0, false, {}, {}}};
    if (!candidates[1].in_t2i) candidates[1].in_i2i = true;
    auto ranked = fuse_rank(candidates);
    CHECK(ranked[0] == "both");
  }
}

namespace {

EmbeddingIndex small_index() {
  // 4 items over 2 dims at angles 0, 30, 60, 90 degrees
  auto v = [](double deg) {
    return std::vector<float>{static_cast<float>(std::cos(deg * M_PI / 180.0)),
                              static_cast<float>(std::sin(deg * M_PI / 180.0))};
  };
  return EmbeddingIndex::build(
      {{"i0", v(0)}, {"i30", v(30)}, {"i60", v(60)}, {"i90", v(90)}}, 2);
}

PathwayStates two_path_states(const EmbeddingIndex& index, std::vector<float> qt,
                              std::vector<float> qi, int k) {
  PathwayStates states;
  PathwayState t;
  t.pathway = Pathway::T2I;
  t.caption = Caption::make("qt");
  t.query_vec = std::move(qt);
  t.topk = top_k(index, t.query_vec, k);
  states.emplace(Pathway::T2I, std::move(t));
  PathwayState i;
  i.pathway = Pathway::I2I;
  i.image = ImageHandle::reference("qi");
  i.query_vec = std::move(qi);
  i.topk = top_k(index, i.query_vec, k);
  states.emplace(Pathway::I2I, std::move(i));
  return states;
}

}  // namespace

TEST_CASE("baseline AVG(1.0) equals T2I_ONLY ordering") {
  EmbeddingIndex index = small_index();
  std::vector<float> qt = {1.0f, 0.0f};
  std::vector<float> qi = {0.0f, 1.0f};
  PathwayStates states = two_path_states(index, qt, qi, 2);
  auto avg = baseline_rank(FusionMode::AVG, Pathway::T2I, 1.0, states, index);
  auto t2i = baseline_rank(FusionMode::T2I_ONLY, Pathway::T2I, 0.5, states, index);
  CHECK(avg == t2i);
}

TEST_CASE("baseline AVG weighted-sum arithmetic") {
  // item x sims (0.8, 0.2), item y sims (0.4, 0.7): 0.5 vs 0.55 -> y first
  EmbeddingIndex index =
      EmbeddingIndex::build({{"x", {1, 0, 0, 0}}, {"y", {0, 1, 0, 0}}}, 4);
  std::vector<float> qt = {0.8f, 0.4f, static_cast<float>(std::sqrt(0.2)), 0.0f};
  std::vector<float> qi = {0.2f, 0.7f, 0.0f, static_cast<float>(std::sqrt(0.47))};
  PathwayStates states = two_path_states(index, qt, qi, 2);
  auto ranked = baseline_rank(FusionMode::AVG, Pathway::T2I, 0.5, states, index);
  REQUIRE(ranked.size() == 2);
  CHECK(ranked[0] == "y");
  CHECK(ranked[1] == "x");
}

TEST_CASE("baseline RAK reranks the top-K prefix by confidence") {
  EmbeddingIndex index = small_index();
  std::vector<float> qt = {1.0f, 0.0f};  // sims: i0=1, i30=.866, i60=.5, i90=0
  PathwayStates states;
  PathwayState t;
  t.pathway = Pathway::T2I;
  t.caption = Caption::make("qt");
  t.query_vec = qt;
  t.topk = top_k(index, t.query_vec, 3);  // x=i0, y=i30, z=i60
  states.emplace(Pathway::T2I, std::move(t));

  std::map<std::string, double> conf = {{"i0", 0.3}, {"i30", 0.9}, {"i60", 0.5}};
  auto ranked = baseline_rank(FusionMode::RAK, Pathway::T2I, 0.5, states, index, &conf);
  REQUIRE(ranked.size() == 4);
  CHECK(ranked[0] == "i30");
  CHECK(ranked[1] == "i60");
  CHECK(ranked[2] == "i0");
  CHECK(ranked[3] == "i90");  // remainder in similarity order
}

TEST_CASE("baseline_rank rejects ADA and missing confidences") {
  EmbeddingIndex index = small_index();
  PathwayStates states =
      two_path_states(index, {1.0f, 0.0f}, {0.0f, 1.0f}, 2);
  CHECK_THROWS_AS(baseline_rank(FusionMode::ADA, Pathway::T2I, 0.5, states, index), Error);
  CHECK_THROWS_AS(baseline_rank(FusionMode::RAK, Pathway::T2I, 0.5, states, index), Error);
}

TEST_CASE("full_ranking appends the remainder by max path similarity") {
  EmbeddingIndex index = small_index();
  PathwayStates states = two_path_states(index, {1.0f, 0.0f}, {0.0f, 1.0f}, 1);
  // fused pool: i0 (T2I top-1) and i90 (I2I top-1)
  std::vector<std::string> fused = {"i90", "i0"};
  auto full = full_ranking(fused, states, index);
  REQUIRE(full.size() == 4);
  CHECK(full[0] == "i90");
  CHECK(full[1] == "i0");
  // i30: max(cos30, sin30)=0.866; i60: max(cos60, sin60)=0.866 -> tie by id
  CHECK(full[2] == "i30");
  CHECK(full[3] == "i60");
}

TEST_CASE("full_ranking is a permutation of the database") {
  Rng rng(10);
  EmbeddingIndex index = small_index();
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<float> qt = {static_cast<float>(rng.uniform(-1, 1)),
                             static_cast<float>(rng.uniform(-1, 1))};
    normalize_f32(qt, "qt");
    std::vector<float> qi = {static_cast<float>(rng.uniform(-1, 1)),
                             static_cast<float>(rng.uniform(-1, 1))};
    normalize_f32(qi, "qi");
    PathwayStates states = two_path_states(index, qt, qi, 2);
    UnionPool pool = union_candidates(states.at(Pathway::T2I).topk, states.at(Pathway::I2I).topk);
    std::map<std::string, double> conf;
    for (const auto& e : pool.entries) conf[e.item_id] = rng.unit();
    auto fused = fuse_rank(verified_candidates(pool, conf));
    auto full = full_ranking(fused, states, index);
    std::set<std::string> unique(full.begin(), full.end());
    CHECK(full.size() == index.size());
    CHECK(unique.size() == index.size());
  }
}

TEST_CASE("full_ranking with the whole database in the pool is the identity") {
  EmbeddingIndex index = small_index();
  PathwayStates states = two_path_states(index, {1.0f, 0.0f}, {0.0f, 1.0f}, 4);
  std::vector<std::string> fused = {"i60", "i0", "i90", "i30"};
  CHECK(full_ranking(fused, states, index) == fused);
}
