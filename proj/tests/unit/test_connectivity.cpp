#include <cmath>

#include <gtest/gtest.h>

#include "prunelens/arch_json.hpp"
#include "prunelens/connectivity.hpp"
#include "prunelens/oracle.hpp"
#include "prunelens/plts.hpp"
#include "prunelens/synflow.hpp"
#include "prunelens/zoo.hpp"
#include "../support/instances.hpp"

using namespace prunelens;

namespace {

ArchGraph mlp222() {
  ArchBuilder b("mlp222");
  std::string x = b.dense("h", b.input_units(2), 2);
  return b.finish(b.dense("y", x, 2));
}

ArchGraph residual_block() {
  ArchBuilder b("res");
  const std::string x = b.conv("stem", b.input(2, 6, 6), 4, 3, 1, 1);
  const std::string c1 = b.conv("c1", x, 4, 3, 1, 1);
  const std::string c2 = b.conv("c2", c1, 4, 3, 1, 1);
  const std::string sum = b.add("sum", {c2, x});
  return b.finish(b.dense("fc", b.flatten("flat", sum), 3));
}

} // namespace

TEST(Reachability, FullMaskAllTrue) {
  for (const char* name : {"lenet300100", "lenet5", "resnet18"}) {
    const ArchGraph a = builtin_arch(name);
    const ReachState st = reachability(a, full_mask(a));
    for (std::size_t i = 0; i < a.size(); ++i) {
      for (auto v : st.fwd[i]) ASSERT_TRUE(v) << name;
      for (auto v : st.bwd[i]) ASSERT_TRUE(v) << name;
    }
    EXPECT_EQ(effective_sparsity(a, full_mask(a)), 0.0);
  }
}

TEST(Reachability, HiddenUnitCutOff) {
  const ArchGraph a = mlp222();
  MaskSet m = full_mask(a);
  m[0][1 * 2 + 0] = 0;  // both edges into hidden unit 1
  m[0][1 * 2 + 1] = 0;
  const ReachState st = reachability(a, m);
  EXPECT_FALSE(st.fwd[a.index_of("h")][1]);
  EXPECT_TRUE(st.fwd[a.index_of("h")][0]);
  const ConnectivityReport r = effective_report(a, m);
  EXPECT_EQ(r.layers[1].inactive_unpruned, 2u);
  EXPECT_DOUBLE_EQ(r.direct_sparsity(), 2.0 / 8.0);
  EXPECT_DOUBLE_EQ(r.effective_sparsity(), 4.0 / 8.0);
}

TEST(Reachability, SkipPathKeepsDownstreamReachable) {
  const ArchGraph a = residual_block();
  MaskSet m = full_mask(a);
  std::fill(m.layers[1].begin(), m.layers[1].end(), 0);
  const ReachState st = reachability(a, m);
  for (auto v : st.fwd[a.index_of("sum")]) EXPECT_TRUE(v);
  const ConnectivityReport r = effective_report(a, m);
  EXPECT_EQ(r.layers[2].active, 0u);  // c2 only sees unreachable inputs
  EXPECT_EQ(r.layers[0].active, r.layers[0].params);
  EXPECT_EQ(r, oracle_effective(a, m));
}

TEST(EffectiveReport, ToyGraphFixture) {
  const ArchGraph a = load_arch_file(PRUNELENS_DATA_DIR "/fixtures/toy_graph.json");
  const MaskSet m = read_masks(a, PRUNELENS_DATA_DIR "/fixtures/toy_mask.plts");
  const ConnectivityReport r = effective_report(a, m);
  EXPECT_EQ(r.total_pruned, 11u);
  EXPECT_EQ(r.total_inactive_unpruned, 5u);
  EXPECT_EQ(r.total_active, 5u);
  EXPECT_DOUBLE_EQ(r.effective_sparsity(), 16.0 / 21.0);
  EXPECT_DOUBLE_EQ(r.effective_compression(), 4.2);
  EXPECT_EQ(r, oracle_effective(a, m));
}

TEST(EffectiveReport, EmptyMaskAndCollapse) {
  const ArchGraph a = builtin_arch("lenet300100");
  EXPECT_EQ(effective_sparsity(a, empty_mask(a)), 1.0);
  MaskSet m = full_mask(a);
  std::fill(m.layers[1].begin(), m.layers[1].end(), 0);
  const ConnectivityReport r = effective_report(a, m);
  EXPECT_EQ(r.effective_sparsity(), 1.0);
  EXPECT_TRUE(r.disconnected());
  EXPECT_EQ(r, oracle_effective(a, m));
  const ArchGraph t = mlp222();
  EXPECT_EQ(oracle_effective(t, empty_mask(t)).effective_sparsity(), 1.0);
}

TEST(Oracle, SizeBound) {
  const ArchGraph a = builtin_arch("resnet18");
  EXPECT_THROW(oracle_effective(a, full_mask(a)), Error);
}

TEST(Oracle, AgreesOnRandomInstances) {
  for (std::uint64_t k = 0; k < 300; ++k) {
    const auto inst = support::make_instance(k);
    const ConnectivityReport r = effective_report(inst.arch, inst.mask);
    ASSERT_EQ(r, oracle_effective(inst.arch, inst.mask)) << "instance " << k << " " << inst.family;
    ASSERT_GE(r.effective_sparsity(), r.direct_sparsity());
    for (const auto& la : r.layers) ASSERT_EQ(la.active + la.inactive_unpruned + la.pruned, la.params);
  }
}

TEST(Properties, IdempotentCleanup) {
  for (std::uint64_t k = 0; k < 60; ++k) {
    const auto inst = support::make_instance(k);
    const ConnectivityReport before = effective_report(inst.arch, inst.mask);
    const MaskSet cleaned = remove_inactive(inst.arch, inst.mask);
    const ConnectivityReport after = effective_report(inst.arch, cleaned);
    EXPECT_EQ(after.total_active, before.total_active);
    EXPECT_DOUBLE_EQ(after.direct_sparsity(), after.effective_sparsity());
    EXPECT_EQ(remove_inactive(inst.arch, cleaned).layers, cleaned.layers);
  }
}

TEST(Properties, EmbeddingMonotonicity) {
  for (std::uint64_t k = 0; k < 60; ++k) {
    const auto inst = support::make_instance(k);
    const auto [outer, inner] = support::nested_pair(inst.arch, k);
    EXPECT_LE(effective_sparsity(inst.arch, outer), effective_sparsity(inst.arch, inner));
  }
}

TEST(Synflow, SinglePathChain) {
  ArchBuilder b("chain");
  const std::string h = b.dense("h", b.input_units(1), 1);
  const ArchGraph a = b.finish(b.dense("y", h, 1));
  WeightSet w = filled_like<WeightSet>(a, 0.0);
  w[0][0] = -1.5;
  w[1][0] = 4.0;
  const ScoreSet s = synflow_scores(a, w, full_mask(a));
  EXPECT_DOUBLE_EQ(s[0][0], 6.0);
  EXPECT_DOUBLE_EQ(s[1][0], 6.0);
}

TEST(Synflow, MatchesLinearPassOnSmallNet) {
  // Two-layer MLP, explicit path sums.
  ArchBuilder b("two");
  const std::string h = b.dense("h", b.input_units(2), 2);
  const ArchGraph a = b.finish(b.dense("y", h, 1));
  WeightSet w = filled_like<WeightSet>(a, 0.0);
  w.layers[0] = {1.0, -2.0, 0.5, 3.0};  // (h, x)
  w.layers[1] = {2.0, -1.0};
  const ScoreSet s = synflow_scores(a, w, full_mask(a));
  // score(w_hx) = |w_hx| * |v_h|; score(v_h) = |v_h| * sum_x |w_hx|
  EXPECT_DOUBLE_EQ(s[0][0], 1.0 * 2.0);
  EXPECT_DOUBLE_EQ(s[0][1], 2.0 * 2.0);
  EXPECT_DOUBLE_EQ(s[0][2], 0.5 * 1.0);
  EXPECT_DOUBLE_EQ(s[0][3], 3.0 * 1.0);
  EXPECT_DOUBLE_EQ(s[1][0], 2.0 * 3.0);
  EXPECT_DOUBLE_EQ(s[1][1], 1.0 * 3.5);
}

TEST(Synflow, FullMaskPositiveOnDeepNet) {
  const ArchGraph a = builtin_arch("vgg16");
  const WeightSet w = init_weights(a, 0);
  const LogScoreSet s = synflow_log_scores(a, w, full_mask(a));
  for (std::size_t l = 0; l < s.num_layers(); ++l) {
    for (double v : s[l]) ASSERT_TRUE(std::isfinite(v));
  }
  const SynflowScores scaled = synflow_scores_scaled(a, w, full_mask(a));
  for (std::size_t l = 0; l < s.num_layers(); ++l) {
    for (double v : scaled.scores[l]) ASSERT_GT(v, 0.0);
  }
}

TEST(Synflow, NonFiniteWeightRejected) {
  const ArchGraph a = mlp222();
  WeightSet w = filled_like<WeightSet>(a, 1.0);
  w[1][0] = std::numeric_limits<double>::infinity();
  EXPECT_THROW(synflow_log_scores(a, w, full_mask(a)), NumericError);
}

TEST(Synflow, ScoreActivityAgreement) {
  for (std::uint64_t k = 0; k < 150; ++k) {
    const auto inst = support::make_instance(k);
    const LogScoreSet s = synflow_log_scores(inst.arch, inst.weights, inst.mask);
    const MaskSet active = remove_inactive(inst.arch, inst.mask);
    for (std::size_t l = 0; l < s.num_layers(); ++l) {
      for (std::size_t i = 0; i < s[l].size(); ++i) {
        ASSERT_EQ(std::isfinite(s[l][i]), active[l][i] == 1) << "instance " << k;
      }
    }
  }
}

TEST(Synflow, LinearPassFallsBackOnUnderflow) {
  // Unit g0 carries 1e-400 relative to g1, which no double can hold.
  ArchBuilder b("tiny");
  const std::string h = b.dense("h", b.input_units(1), 2);
  const std::string g = b.dense("g", h, 2);
  const ArchGraph a = b.finish(b.dense("y", g, 1));
  WeightSet w = filled_like<WeightSet>(a, 0.0);
  w.layers[0] = {1e-200, 1.0};
  w.layers[1] = {1e-200, 0.0, 0.0, 1.0};
  w.layers[2] = {1.0, 1.0};
  MaskSet m = full_mask(a);
  m[1][1] = 0;
  m[1][2] = 0;
  EXPECT_FALSE(detail::synflow_linear(a, w, m).has_value());
  const LogScoreSet s = synflow_log_scores(a, w, m);
  EXPECT_NEAR(s[2][0], -400.0 * std::log(10.0), 1e-9);
  EXPECT_TRUE(std::isfinite(s[0][0]));
}

TEST(Synflow, LinearAndLogPassesAgree) {
  for (std::uint64_t k = 0; k < 60; ++k) {
    const auto inst = support::make_instance(k);
    const auto fast = detail::synflow_linear(inst.arch, inst.weights, inst.mask);
    ASSERT_TRUE(fast.has_value()) << k;
    const LogScoreSet slow = detail::synflow_log_domain(inst.arch, inst.weights, inst.mask);
    for (std::size_t l = 0; l < slow.num_layers(); ++l) {
      for (std::size_t i = 0; i < slow[l].size(); ++i) {
        if (std::isinf(slow[l][i])) {
          ASSERT_EQ((*fast)[l][i], slow[l][i]);
        } else {
          ASSERT_NEAR((*fast)[l][i], slow[l][i], 1e-9 * (1.0 + std::abs(slow[l][i])));
        }
      }
    }
  }
}
