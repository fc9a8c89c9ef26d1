#include <algorithm>
#include <cmath>
#include <numeric>

#include <gtest/gtest.h>

#include "prunelens/connectivity.hpp"
#include "prunelens/pruners.hpp"
#include "prunelens/zoo.hpp"

using namespace prunelens;

namespace {

ArchGraph small_mlp() {
  ArchBuilder b("small");
  std::string x = b.dense("a", b.input_units(6), 5);
  x = b.dense("b", x, 4);
  return b.finish(b.dense("c", x, 3));
}

ScoreSet distinct_scores(const ArchGraph& a, std::uint64_t seed) {
  ScoreSet s = filled_like<ScoreSet>(a, 0.0);
  CounterStream st(seed, StreamPurpose::kTest, 1);
  for (auto& layer : s.layers) {
    for (auto& v : layer) v = st.next_open_unit();
  }
  return s;
}

// Keeps the top `keep` by a full sort on (score desc, layer asc, index asc).
MaskSet sort_oracle(const ScoreSet& s, std::uint64_t keep) {
  struct E { double v; std::size_t l, i; };
  std::vector<E> all;
  for (std::size_t l = 0; l < s.num_layers(); ++l) {
    for (std::size_t i = 0; i < s[l].size(); ++i) all.push_back({s[l][i], l, i});
  }
  std::sort(all.begin(), all.end(), [](const E& a, const E& b) {
    if (a.v != b.v) return a.v > b.v;
    if (a.l != b.l) return a.l < b.l;
    return a.i < b.i;
  });
  MaskSet m;
  for (const auto& layer : s.layers) m.layers.emplace_back(layer.size(), 0);
  for (std::uint64_t k = 0; k < keep; ++k) m.layers[all[k].l][all[k].i] = 1;
  return m;
}

} // namespace

TEST(RandomPrune, Extremes) {
  const ArchGraph a = builtin_arch("lenet300100");
  EXPECT_EQ(random_prune(a, PrunedCounts{{0, 0, 0}}, 1).layers, full_mask(a).layers);
  const MaskSet m = random_prune(a, PrunedCounts{{0, 30000, 0}}, 1);
  EXPECT_EQ(count_unpruned(m[1]), 0u);
  EXPECT_EQ(effective_sparsity(a, m), 1.0);
  EXPECT_THROW(random_prune(a, PrunedCounts{{0, 30001, 0}}, 1), ShapeError);
}

TEST(RandomPrune, ExactCountsAndDeterminism) {
  const ArchGraph a = builtin_arch("lenet5");
  const PrunedCounts k{{100, 2000, 47000, 10000, 800}};
  const MaskSet m = random_prune(a, k, 3);
  EXPECT_EQ(pruned_per_layer(m), k.pruned);
  EXPECT_EQ(random_prune(a, k, 3).layers, m.layers);
  EXPECT_NE(random_prune(a, k, 4).layers, m.layers);
}

TEST(RandomPrune, InclusionFrequencyBinomial) {
  const ArchGraph a = small_mlp();
  const PrunedCounts k{{12, 5, 11}};
  const int seeds = 10000;
  std::vector<std::vector<int>> kept(a.num_layers());
  for (std::size_t l = 0; l < a.num_layers(); ++l) kept[l].assign(a.param_counts()[l], 0);
  for (int s = 0; s < seeds; ++s) {
    const MaskSet m = random_prune(a, k, static_cast<std::uint64_t>(s));
    for (std::size_t l = 0; l < a.num_layers(); ++l) {
      for (std::size_t i = 0; i < m[l].size(); ++i) kept[l][i] += m[l][i];
    }
  }
  for (std::size_t l = 0; l < a.num_layers(); ++l) {
    const double n = static_cast<double>(a.param_counts()[l]);
    const double p = 1.0 - static_cast<double>(k.pruned[l]) / n;
    const double sigma = std::sqrt(seeds * p * (1 - p));
    for (int c : kept[l]) EXPECT_NEAR(c, seeds * p, 3 * sigma + 1) << "layer " << l;
  }
}

TEST(ShuffleMask, PreservesCountsAndIsUniform) {
  const ArchGraph a = small_mlp();
  const MaskSet base = random_prune(a, PrunedCounts{{20, 3, 6}}, 8);
  EXPECT_EQ(shuffle_mask(a, full_mask(a), 1).layers, full_mask(a).layers);
  std::vector<int> hits(a.param_counts()[0], 0);
  for (int s = 0; s < 10000; ++s) {
    const MaskSet m = shuffle_mask(a, base, static_cast<std::uint64_t>(s));
    ASSERT_EQ(pruned_per_layer(m), pruned_per_layer(base));
    for (std::size_t i = 0; i < m[0].size(); ++i) hits[i] += m[0][i];
  }
  const double p = 10.0 / 30.0;
  const double sigma = std::sqrt(10000 * p * (1 - p));
  for (int h : hits) EXPECT_NEAR(h, 10000 * p, 3 * sigma + 1);
}

TEST(ThresholdGlobal, MatchesSortOracle) {
  const ArchGraph a = builtin_arch("lenet5");
  const ScoreSet s = distinct_scores(a, 2);
  const std::uint64_t total = a.total_params();
  EXPECT_EQ(threshold_prune_global(s, total).layers, full_mask(a).layers);
  EXPECT_EQ(threshold_prune_global(s, 0).layers, empty_mask(a).layers);
  for (std::uint64_t keep : {1ull, 17ull, 999ull, 30000ull, 61769ull}) {
    EXPECT_EQ(threshold_prune_global(s, keep).layers, sort_oracle(s, keep).layers) << keep;
  }
  EXPECT_THROW(threshold_prune_global(s, total + 1), InputError);
}

TEST(ThresholdGlobal, TiesAndNesting) {
  const ArchGraph a = small_mlp();
  ScoreSet s = filled_like<ScoreSet>(a, 1.0);
  s[2][0] = 5.0;
  const MaskSet m = threshold_prune_global(s, 4);
  EXPECT_EQ(m.layers, sort_oracle(s, 4).layers);
  EXPECT_EQ(m[2][0], 1);
  EXPECT_EQ(m[0][0] + m[0][1] + m[0][2], 3);

  const ScoreSet d = distinct_scores(a, 5);
  const GlobalRanking ranking(rank_keys(d));
  for (std::uint64_t k = 1; k <= a.total_params(); ++k) {
    const MaskSet big = ranking.mask_for_keep(k);
    const MaskSet small = ranking.mask_for_keep(k - 1);
    EXPECT_EQ(big.layers, threshold_prune_global(d, k).layers);
    for (std::size_t l = 0; l < a.num_layers(); ++l) {
      for (std::size_t i = 0; i < big[l].size(); ++i) ASSERT_LE(small[l][i], big[l][i]);
    }
  }
}

TEST(Layerwise, Examples) {
  const ArchGraph a = small_mlp();
  const ScoreSet d = distinct_scores(a, 9);
  EXPECT_EQ(layerwise_prune(d, PrunedCounts{{0, 0, 0}}).layers, full_mask(a).layers);
  const PrunedCounts k{{7, 10, 2}};
  const MaskSet m = layerwise_prune(d, k);
  EXPECT_EQ(pruned_per_layer(m), k.pruned);
  for (std::size_t l = 0; l < a.num_layers(); ++l) {
    std::vector<double> sorted = d[l];
    std::sort(sorted.begin(), sorted.end(), std::greater<>());
    const double cut = sorted[d[l].size() - k.pruned[l] - 1];
    for (std::size_t i = 0; i < d[l].size(); ++i) EXPECT_EQ(m[l][i], d[l][i] >= cut ? 1 : 0);
  }
  // Ties keep the lower flat index, so the highest indices go first.
  const ScoreSet flat = filled_like<ScoreSet>(a, 0.5);
  const MaskSet t = layerwise_prune(flat, PrunedCounts{{2, 0, 0}});
  EXPECT_EQ(t[0][29], 0);
  EXPECT_EQ(t[0][28], 0);
  EXPECT_EQ(t[0][0], 1);
}

TEST(Lamp, Examples) {
  ArchBuilder b("one");
  const ArchGraph a = b.finish(b.dense("fc", b.input_units(2), 1));
  WeightSet w = filled_like<WeightSet>(a, 1.0);
  MaskSet m = full_mask(a);
  const ScoreSet s = lamp_scores(w, m);
  EXPECT_DOUBLE_EQ(s[0][0], 1.0);
  EXPECT_DOUBLE_EQ(s[0][1], 0.5);
  m[0][0] = 0;
  const ScoreSet single = lamp_scores(w, m);
  EXPECT_DOUBLE_EQ(single[0][1], 1.0);
  EXPECT_EQ(single[0][0], 0.0);
}

TEST(Lamp, WithinLayerRankingEqualsMagnitude) {
  const ArchGraph a = builtin_arch("lenet5");
  const WeightSet w = init_weights(a, 4);
  MaskSet m = random_prune(a, PrunedCounts{{50, 400, 9000, 3000, 100}}, 4);
  const ScoreSet lamp = lamp_scores(w, m);
  const ScoreSet mag = magnitude_scores(w, m);
  for (std::size_t l = 0; l < a.num_layers(); ++l) {
    const std::uint64_t pruned = a.param_counts()[l] / 2;
    PrunedCounts k{std::vector<std::uint64_t>(a.num_layers(), 0)};
    k.pruned[l] = pruned;
    EXPECT_EQ(layerwise_prune(lamp, k)[l], layerwise_prune(mag, k)[l]);
  }
}

TEST(Magnitude, Basics) {
  const ArchGraph a = small_mlp();
  WeightSet w = init_weights(a, 1);
  w[0][3] = 0.0;
  MaskSet m = full_mask(a);
  m[1][2] = 0;
  const ScoreSet s = magnitude_scores(w, m);
  EXPECT_EQ(s[0][3], 0.0);
  EXPECT_EQ(s[1][2], 0.0);
  EXPECT_EQ(s[2][1], std::abs(w[2][1]));
}

TEST(Iterative, SingleRoundEqualsOneShot) {
  const ArchGraph a = builtin_arch("lenet300100");
  const WeightSet w = init_weights(a, 0);
  for (ProviderKind kind : {ProviderKind::kSynflow, ProviderKind::kMagnitude, ProviderKind::kLamp}) {
    ScoreProvider p;
    p.kind = kind;
    const MaskSet iter = iterative_prune(a, w, p, IterSchedule{1, ScheduleMode::kExponential, 0.9});
    const MaskSet once = threshold_prune_global(p.keys(a, w, full_mask(a)), 26620);
    EXPECT_EQ(iter.layers, once.layers) << provider_name(kind);
  }
}

TEST(Iterative, MagnitudeScheduleBookkeeping) {
  const ArchGraph a = builtin_arch("lenet300100");
  const WeightSet w = init_weights(a, 0);
  ScoreProvider p;
  p.kind = ProviderKind::kMagnitude;
  std::vector<std::uint64_t> kept;
  const MaskSet many = iterative_prune(a, w, p, IterSchedule{100, ScheduleMode::kExponential, 0.99},
                                       [&](int, const MaskSet& m) { kept.push_back(direct_sparsity_count(m).total - direct_sparsity_count(m).pruned); });
  const MaskSet one = iterative_prune(a, w, p, IterSchedule{1, ScheduleMode::kExponential, 0.99});
  EXPECT_EQ(direct_sparsity_count(many).pruned, 263538u);
  EXPECT_EQ(direct_sparsity_count(one).pruned, 263538u);
  ASSERT_EQ(kept.size(), 100u);
  for (std::size_t k = 1; k < kept.size(); ++k) EXPECT_LT(kept[k], kept[k - 1]);
  // Without retraining the magnitudes never change, so the rounds collapse to one cut.
  EXPECT_EQ(many.layers, one.layers);
}

TEST(Iterative, SynflowDropsZeroScoresFirst) {
  const ArchGraph a = builtin_arch("lenet300100");
  const WeightSet w = init_weights(a, 2);
  ScoreProvider p;
  p.kind = ProviderKind::kSynflow;
  MaskSet previous = full_mask(a);
  iterative_prune(a, w, p, IterSchedule{20, ScheduleMode::kExponential, 0.9999}, [&](int, const MaskSet& m) {
    // A parameter inactive before the round survives it only if every
    // previously active parameter survived too.
    const MaskSet active = remove_inactive(a, previous);
    bool kept_inactive = false, dropped_active = false;
    for (std::size_t l = 0; l < a.num_layers(); ++l) {
      for (std::size_t i = 0; i < m[l].size(); ++i) {
        kept_inactive |= m[l][i] && previous[l][i] && !active[l][i];
        dropped_active |= !m[l][i] && active[l][i];
      }
    }
    EXPECT_FALSE(kept_inactive && dropped_active);
    previous = m;
  });
  EXPECT_EQ(direct_sparsity_count(previous).pruned, target_pruned_count(0.9999, a.total_params()));
}

TEST(Iterative, RejectsIngested) {
  const ArchGraph a = small_mlp();
  ScoreProvider p;
  p.kind = ProviderKind::kIngested;
  p.ingested = filled_like<ScoreSet>(a, 1.0);
  EXPECT_THROW(iterative_prune(a, init_weights(a, 0), p, IterSchedule{5, ScheduleMode::kExponential, 0.5}),
               InputError);
  EXPECT_THROW(parse_provider("snip"), InputError);
}

TEST(Schedule, ExponentialAndLinear) {
  IterSchedule e{4, ScheduleMode::kExponential, 0.9375};
  EXPECT_EQ(e.keep_after(1, 1600), 800u);
  EXPECT_EQ(e.keep_after(2, 1600), 400u);
  EXPECT_EQ(e.keep_after(4, 1600), 100u);
  IterSchedule lin{4, ScheduleMode::kLinear, 0.8};
  EXPECT_EQ(lin.keep_after(1, 1000), 800u);
  EXPECT_EQ(lin.keep_after(4, 1000), 200u);
}
