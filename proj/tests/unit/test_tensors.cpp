#include <cmath>
#include <cstring>
#include <filesystem>

#include <gtest/gtest.h>

#include "prunelens/arch_json.hpp"
#include "prunelens/plts.hpp"
#include "prunelens/tensors.hpp"
#include "prunelens/zoo.hpp"

using namespace prunelens;

namespace {

ArchGraph dense22() {
  ArchBuilder b("d");
  return b.finish(b.dense("fc", b.input_units(2), 2));
}

std::string temp_path(const std::string& name) {
  return (std::filesystem::temp_directory_path() / ("prunelens_" + name)).string();
}

} // namespace

TEST(DirectSparsity, Extremes) {
  const ArchGraph a = builtin_arch("lenet5");
  EXPECT_EQ(direct_sparsity(full_mask(a)), 0.0);
  EXPECT_EQ(direct_sparsity(empty_mask(a)), 1.0);
}

TEST(DirectSparsity, ToyGraphCounts) {
  const ArchGraph a = load_arch_file(PRUNELENS_DATA_DIR "/fixtures/toy_graph.json");
  const MaskSet m = read_masks(a, PRUNELENS_DATA_DIR "/fixtures/toy_mask.plts");
  const SparsityCount c = direct_sparsity_count(m);
  EXPECT_EQ(c.pruned, 11u);
  EXPECT_EQ(c.total, 21u);
  EXPECT_DOUBLE_EQ(c.sparsity(), 11.0 / 21.0);
  EXPECT_DOUBLE_EQ(c.compression(), 2.1);
}

TEST(DirectSparsity, PruningKMoreAddsK) {
  const ArchGraph a = builtin_arch("lenet5");
  MaskSet m = full_mask(a);
  for (std::size_t i = 0; i < 100; i += 3) m[2][i] = 0;
  const auto before = direct_sparsity_count(m).pruned;
  int k = 0;
  for (std::size_t i = 1; i < 100 && k < 17; i += 3, ++k) m[2][i] = 0;
  EXPECT_EQ(direct_sparsity_count(m).pruned, before + 17);
}

TEST(InitWeights, Dense22StdOverManySeeds) {
  const ArchGraph a = dense22();
  double sq = 0;
  std::size_t n = 0;
  for (std::uint64_t seed = 0; n < 1000000; ++seed) {
    const WeightSet w0 = init_weights(a, seed);
    for (double w : w0[0]) {
      sq += w * w;
      ++n;
    }
  }
  EXPECT_NEAR(std::sqrt(sq / n), 1.0, 0.02);
}

TEST(InitWeights, DeterministicAndConvStd) {
  const ArchGraph a = builtin_arch("lenet5");
  EXPECT_EQ(init_weights(a, 9).layers, init_weights(a, 9).layers);
  EXPECT_NE(init_weights(a, 9).layers, init_weights(a, 10).layers);

  ArchBuilder b("c");
  const std::string x = b.conv("conv", b.input(3, 8, 8), 16, 3, 1, 1);
  const ArchGraph c = b.finish(b.dense("fc", b.flatten("flat", x), 1));
  const Fans f = layer_fans(c, 0);
  EXPECT_EQ(f.fan_in, 27);
  EXPECT_EQ(f.fan_out, 144);
  EXPECT_DOUBLE_EQ(kaiming_fan_avg_std(f), std::sqrt(2.0 / 85.5));
}

TEST(Plts, RoundTripBitExact) {
  const ArchGraph a = builtin_arch("lenet5");
  WeightSet w = init_weights(a, 3);
  w[0][0] = -0.0;
  w[0][1] = std::numeric_limits<double>::denorm_min();
  const std::string path = temp_path("weights.plts");
  write_tensors(a, w, path);
  const WeightSet back = read_weights(a, path);
  ASSERT_EQ(back.num_layers(), w.num_layers());
  for (std::size_t l = 0; l < w.num_layers(); ++l) {
    ASSERT_EQ(std::memcmp(back[l].data(), w[l].data(), w[l].size() * sizeof(double)), 0);
  }
  MaskSet m = full_mask(a);
  m[1][5] = 0;
  write_tensors(a, m, path);
  EXPECT_EQ(read_masks(a, path).layers, m.layers);
  std::filesystem::remove(path);
}

TEST(Plts, HeaderLayout) {
  const ArchGraph a = dense22();
  const std::string bytes = encode_plts(to_tensor_file(a, full_mask(a)));
  const std::string expected = std::string("PLTS\x01\x00\x01\x00\x00\x00\x02\x00" "fc\x01\x02", 16) +
                               std::string("\x02\x00\x00\x00\x02\x00\x00\x00\x01\x01\x01\x01", 12);
  EXPECT_EQ(bytes, expected);
}

TEST(Plts, Errors) {
  const ArchGraph a = dense22();
  std::string bytes = encode_plts(to_tensor_file(a, full_mask(a)));
  std::string bad = bytes;
  bad[0] = 'X';
  EXPECT_THROW(decode_plts(bad), FormatError);
  bad = bytes;
  bad[4] = 2;
  EXPECT_THROW(decode_plts(bad), FormatError);
  EXPECT_THROW(decode_plts(bytes.substr(0, bytes.size() - 1)), FormatError);
  EXPECT_THROW(decode_plts(bytes + "x"), FormatError);

  const ArchGraph l5 = builtin_arch("lenet5");
  try {
    masks_from_file(a, to_tensor_file(l5, full_mask(l5)));
    FAIL();
  } catch (const ShapeError&) {
  }
  TensorFile wrong = to_tensor_file(a, full_mask(a));
  wrong.sections[0].dims = {4};
  wrong.sections[0].data = std::vector<std::uint8_t>(4, 1);
  try {
    masks_from_file(a, wrong);
    FAIL();
  } catch (const ShapeError& e) {
    EXPECT_NE(std::string(e.what()).find("fc"), std::string::npos);
  }
  ScoreSet s = filled_like<ScoreSet>(a, 1.0);
  s[0][2] = std::nan("");
  EXPECT_THROW(scores_from_file(a, to_tensor_file(a, s)), FormatError);
  EXPECT_THROW(weights_from_file(a, to_tensor_file(a, full_mask(a))), FormatError);
  EXPECT_THROW(read_tensor_file("/nonexistent/prunelens.plts"), InputError);
}

TEST(Shapes, MismatchNamesLayer) {
  const ArchGraph a = builtin_arch("lenet300100");
  MaskSet m = full_mask(a);
  m.layers[1].pop_back();
  try {
    check_shapes(a, m, "mask");
    FAIL();
  } catch (const ShapeError& e) {
    EXPECT_NE(std::string(e.what()).find("fc2"), std::string::npos);
  }
}
