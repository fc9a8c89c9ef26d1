#include <cmath>

#include <gtest/gtest.h>

#include "prunelens/effprune.hpp"
#include "prunelens/zoo.hpp"

using namespace prunelens;

namespace {

ArchGraph small_mlp() {
  ArchBuilder b("small");
  std::string x = b.dense("a", b.input_units(12), 10);
  x = b.dense("b", x, 8);
  return b.finish(b.dense("c", x, 4));
}

} // namespace

TEST(EffThreshold, ZeroTargetKeepsEverything) {
  const ArchGraph a = small_mlp();
  const auto r = effective_threshold_prune(a, rank_keys(random_scores(a, full_mask(a), 1, 0)), 0.0);
  EXPECT_EQ(r.mask.layers, full_mask(a).layers);
  EXPECT_EQ(r.pruned, 0u);
  EXPECT_FALSE(r.unreachable);
}

TEST(EffThreshold, DensestMaskReachingTarget) {
  const ArchGraph a = small_mlp();
  const std::uint64_t total = a.total_params();
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const RankKeys keys = rank_keys(random_scores(a, full_mask(a), seed, 0));
    const GlobalRanking ranking(keys);
    for (double target : {0.3, 0.6, 0.9, 0.95}) {
      const auto r = effective_threshold_prune(a, keys, target);
      EXPECT_LE(r.iterations, static_cast<int>(std::ceil(std::log2(total + 1.0))));
      EXPECT_EQ(r.report, effective_report(a, r.mask));
      const std::uint64_t keep = total - r.pruned;
      if (r.unreachable) continue;
      // Exhaustive over every keep count on this small net.
      for (std::uint64_t k = 0; k <= total; ++k) {
        const double eff = effective_sparsity(a, ranking.mask_for_keep(k));
        if (k <= keep) {
          if (k > 0 && eff < target) ADD_FAILURE() << "keep " << k << " below target";
        } else {
          EXPECT_LT(eff, target) << "keep " << k;
        }
      }
      EXPECT_GE(r.achieved_effective(), target);
    }
  }
}

TEST(EffThreshold, RejectsBadTargets) {
  const ArchGraph a = small_mlp();
  const RankKeys keys = rank_keys(random_scores(a, full_mask(a), 1, 0));
  EXPECT_THROW(effective_threshold_prune(a, keys, 1.0), InputError);
  EXPECT_THROW(effective_threshold_prune(a, keys, -0.1), InputError);
}

TEST(EffRandom, ZeroTargetKeepsEverything) {
  const ArchGraph a = builtin_arch("lenet300100");
  const auto r = effective_random_prune(a, make_allocator("igq", a), 0.0, 0, "igq");
  EXPECT_EQ(r.mask.layers, full_mask(a).layers);
  EXPECT_FALSE(r.unreachable);
}

TEST(EffRandom, TraceInvariants) {
  const ArchGraph a = small_mlp();
  const auto& sizes = a.param_counts();
  for (const char* name : {"uniform", "igq"}) {
    for (double target : {0.5, 0.8, 0.9}) {
      const auto r = effective_random_prune(a, make_allocator(name, a), target, 3, name);
      ASSERT_FALSE(r.trace.empty());
      std::uint64_t width = a.total_params();
      double last_dense = -1.0;
      for (const TraceStep& s : r.trace) {
        EXPECT_LT(s.width, width);
        width = s.width;
        if (s.branch == Branch::kDense) {
          EXPECT_GE(s.effective, last_dense);
          EXPECT_LT(s.effective, target);
          last_dense = s.effective;
        }
      }
      EXPECT_EQ(width, 1u);
      EXPECT_EQ(direct_sparsity_count(r.mask).pruned, r.pruned);
      EXPECT_LT(r.achieved_effective(), target);
      const PrunedCounts goal = integerize(make_allocator(name, a)(static_cast<double>(r.pruned) / a.total_params()), sizes);
      const auto got = pruned_per_layer(r.mask);
      for (std::size_t l = 0; l < sizes.size(); ++l) {
        EXPECT_LE(std::llabs(static_cast<long long>(got[l]) - static_cast<long long>(goal.pruned[l])), 1)
            << name << " " << target << " layer " << l;
      }
    }
  }
}

TEST(EffRandom, Deterministic) {
  const ArchGraph a = small_mlp();
  const auto x = effective_random_prune(a, make_allocator("igq", a), 0.8, 9, "igq");
  const auto y = effective_random_prune(a, make_allocator("igq", a), 0.8, 9, "igq");
  EXPECT_EQ(x.mask.layers, y.mask.layers);
  EXPECT_EQ(eff_prune_sidecar(x), eff_prune_sidecar(y));
}

TEST(EffRandom, RejectsNonMonotoneAllocator) {
  const ArchGraph a = small_mlp();
  // Layer 0 sparsity falls as the total rises past 0.5.
  const Allocator bad = [&](double s) {
    QuotaVector q = uniform(s, a.param_counts());
    if (s > 0.5) {
      q.sparsity = {0.1, 0.99, 0.99};
    }
    return q;
  };
  EXPECT_THROW(effective_random_prune(a, bad, 0.7, 0, "bad"), InputError);
}

TEST(Sidecar, Keys) {
  const ArchGraph a = small_mlp();
  const auto r = effective_random_prune(a, make_allocator("uniform", a), 0.7, 1, "uniform");
  const auto j = eff_prune_sidecar(r);
  for (const char* key : {"target", "achieved_effective", "achieved_direct", "pruned", "iterations",
                          "unreachable_flag", "trace"}) {
    EXPECT_TRUE(j.contains(key)) << key;
  }
  ASSERT_FALSE(j["trace"].empty());
  for (const char* key : {"m", "branch", "width", "eff"}) EXPECT_TRUE(j["trace"][0].contains(key)) << key;
  EXPECT_EQ(j["iterations"].get<int>(), r.iterations);
}

TEST(SpreadAdjustment, ProportionalBothDirections) {
  std::vector<std::uint64_t> t{2, 2, 0};
  EXPECT_TRUE(detail::spread_adjustment(t, {10, 6, 0}, 4));
  EXPECT_EQ(t[0] + t[1] + t[2], 8u);
  EXPECT_EQ(t[2], 0u);
  std::vector<std::uint64_t> down{3, 1};
  EXPECT_TRUE(detail::spread_adjustment(down, {5, 5}, -4));
  EXPECT_EQ(down, (std::vector<std::uint64_t>{0, 0}));
  std::vector<std::uint64_t> full{5};
  EXPECT_FALSE(detail::spread_adjustment(full, {5}, 1));
}

TEST(EffRandom, PrintedPoolUpdateStillBisects) {
  const ArchGraph a = builtin_arch("lenet300100");
  const auto r = effective_random_prune(a, make_allocator("uniform", a), 0.99, 0, "uniform", PoolUpdate::kPrinted);
  ASSERT_FALSE(r.trace.empty());
  EXPECT_EQ(r.trace.back().width, 1u);
  EXPECT_EQ(direct_sparsity_count(r.mask).pruned, r.pruned);
  EXPECT_LT(r.achieved_effective(), 0.99);
  EXPECT_THROW(parse_pool_update("sideways"), InputError);
}
