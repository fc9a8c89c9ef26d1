#pragma once

// Built-in architectures, sized for the datasets they are usually paired with:
// MNIST 1x28x28, CIFAR 3x32x32, TinyImageNet 3x64x64, ImageNet 3x224x224.
// Biases, normalization and activations are omitted; they do not affect
// connectivity.

#include <array>
#include <string>
#include <string_view>
#include <vector>

#include "prunelens/arch.hpp"

namespace prunelens {

// Incremental graph construction that tracks the running activation shape.
class ArchBuilder {
public:
  explicit ArchBuilder(std::string name) : name_(std::move(name)) {}

  std::string input(std::int64_t channels, std::int64_t height, std::int64_t width) {
    return push({"input", LayerKind::kInput, {}, InputSpec{channels, height, width, false}},
                {channels, height, width});
  }

  std::string input_units(std::int64_t units) {
    return push({"input", LayerKind::kInput, {}, InputSpec{units, 1, 1, true}}, {units, 1, 1});
  }

  std::string dense(const std::string& id, const std::string& from, std::int64_t out_units) {
    const Shape& src = shape_of(from);
    return push({id, LayerKind::kDense, {from}, DenseSpec{src.units(), out_units}},
                {out_units, 1, 1});
  }

  std::string conv(const std::string& id, const std::string& from, std::int64_t out_channels,
                   std::int64_t kernel, std::int64_t stride, std::int64_t padding,
                   std::int64_t groups = 1) {
    const Shape& src = shape_of(from);
    Conv2dSpec c{src.channels, out_channels, kernel, kernel, stride, padding, groups};
    return push({id, LayerKind::kConv2d, {from}, c},
                {out_channels, window_extent(src.height, kernel, stride, padding),
                 window_extent(src.width, kernel, stride, padding)});
  }

  std::string pool(const std::string& id, const std::string& from, std::int64_t window,
                   std::int64_t stride, std::int64_t padding, PoolMode mode) {
    const Shape& src = shape_of(from);
    return push({id, LayerKind::kPool2d, {from}, Pool2dSpec{window, stride, padding, mode}},
                {src.channels, window_extent(src.height, window, stride, padding),
                 window_extent(src.width, window, stride, padding)});
  }

  // Average pooling over the whole spatial plane.
  std::string global_pool(const std::string& id, const std::string& from) {
    const Shape& src = shape_of(from);
    return pool(id, from, src.height, src.height, 0, PoolMode::kAvg);
  }

  std::string flatten(const std::string& id, const std::string& from) {
    return push({id, LayerKind::kFlatten, {from}, {}}, {shape_of(from).units(), 1, 1});
  }

  std::string add(const std::string& id, std::vector<std::string> from) {
    const Shape s = shape_of(from.front());
    return push({id, LayerKind::kAdd, std::move(from), {}}, s);
  }

  ArchGraph finish(const std::string& from) {
    push({"output", LayerKind::kOutput, {from}, {}}, shape_of(from));
    return ArchGraph(name_, std::move(nodes_));
  }

  const Shape& shape_of(const std::string& id) const {
    for (std::size_t i = 0; i < nodes_.size(); ++i) {
      if (nodes_[i].id == id) return shapes_[i];
    }
    throw ValidationError("builder: unknown node '" + id + "'");
  }

private:
  std::string push(LayerNode node, Shape shape) {
    nodes_.push_back(std::move(node));
    shapes_.push_back(shape);
    return nodes_.back().id;
  }

  std::string name_;
  std::vector<LayerNode> nodes_;
  std::vector<Shape> shapes_;
};

namespace zoo {

inline ArchGraph lenet300100() {
  ArchBuilder b("lenet300100");
  std::string x = b.input(1, 28, 28);
  x = b.flatten("flatten", x);
  x = b.dense("fc1", x, 300);
  x = b.dense("fc2", x, 100);
  x = b.dense("fc3", x, 10);
  return b.finish(x);
}

// CIFAR-10 variant: two 5x5 convolutions and three dense layers.
inline ArchGraph lenet5() {
  ArchBuilder b("lenet5");
  std::string x = b.input(3, 32, 32);
  x = b.conv("conv1", x, 6, 5, 1, 0);
  x = b.pool("pool1", x, 2, 2, 0, PoolMode::kMax);
  x = b.conv("conv2", x, 16, 5, 1, 0);
  x = b.pool("pool2", x, 2, 2, 0, PoolMode::kMax);
  x = b.flatten("flatten", x);
  x = b.dense("fc1", x, 120);
  x = b.dense("fc2", x, 84);
  x = b.dense("fc3", x, 10);
  return b.finish(x);
}

// CIFAR VGG: 3x3 convolutions, 2x2 max pools ('M' = 0 in cfg), and a
// 512-512-classes classifier head.
inline ArchGraph vgg(const std::string& name, const std::vector<int>& cfg, int classes) {
  ArchBuilder b(name);
  std::string x = b.input(3, 32, 32);
  int conv_index = 0;
  int pool_index = 0;
  for (int width : cfg) {
    if (width == 0) {
      x = b.pool("pool" + std::to_string(++pool_index), x, 2, 2, 0, PoolMode::kMax);
    } else {
      x = b.conv("conv" + std::to_string(++conv_index), x, width, 3, 1, 1);
    }
  }
  x = b.flatten("flatten", x);
  x = b.dense("fc1", x, 512);
  x = b.dense("fc2", x, 512);
  x = b.dense("fc3", x, classes);
  return b.finish(x);
}

inline ArchGraph vgg16() {
  return vgg("vgg16",
             {64, 64, 0, 128, 128, 0, 256, 256, 256, 0, 512, 512, 512, 0, 512, 512, 512, 0}, 10);
}

inline ArchGraph vgg19() {
  return vgg("vgg19",
             {64, 64, 0, 128, 128, 0, 256, 256, 256, 256, 0, 512, 512, 512, 512, 0, 512, 512,
              512, 512, 0},
             100);
}

namespace detail {

inline std::string basic_block(ArchBuilder& b, const std::string& prefix, const std::string& from,
                               std::int64_t width, std::int64_t stride) {
  const std::int64_t in_channels = b.shape_of(from).channels;
  std::string y = b.conv(prefix + ".conv1", from, width, 3, stride, 1);
  y = b.conv(prefix + ".conv2", y, width, 3, 1, 1);
  std::string skip = from;
  if (stride != 1 || in_channels != width) {
    skip = b.conv(prefix + ".shortcut", from, width, 1, stride, 0);
  }
  return b.add(prefix + ".add", {y, skip});
}

inline std::string bottleneck(ArchBuilder& b, const std::string& prefix, const std::string& from,
                              std::int64_t width, std::int64_t stride) {
  const std::int64_t in_channels = b.shape_of(from).channels;
  const std::int64_t out_channels = width * 4;
  std::string y = b.conv(prefix + ".conv1", from, width, 1, 1, 0);
  y = b.conv(prefix + ".conv2", y, width, 3, stride, 1);
  y = b.conv(prefix + ".conv3", y, out_channels, 1, 1, 0);
  std::string skip = from;
  if (stride != 1 || in_channels != out_channels) {
    skip = b.conv(prefix + ".shortcut", from, out_channels, 1, stride, 0);
  }
  return b.add(prefix + ".add", {y, skip});
}

} // namespace detail

// TinyImageNet ResNet-18: 3x3 stem without max pooling, basic blocks [2, 2, 2, 2].
inline ArchGraph resnet18() {
  ArchBuilder b("resnet18");
  std::string x = b.input(3, 64, 64);
  x = b.conv("conv1", x, 64, 3, 1, 1);
  const std::array<std::int64_t, 4> widths{64, 128, 256, 512};
  for (std::size_t stage = 0; stage < widths.size(); ++stage) {
    for (int block = 0; block < 2; ++block) {
      const std::int64_t stride = (stage > 0 && block == 0) ? 2 : 1;
      x = detail::basic_block(
          b, "layer" + std::to_string(stage + 1) + "." + std::to_string(block), x, widths[stage],
          stride);
    }
  }
  x = b.global_pool("avgpool", x);
  x = b.flatten("flatten", x);
  x = b.dense("fc", x, 200);
  return b.finish(x);
}

// ImageNet ResNet-50: 7x7 stride-2 stem, 3x3 max pool, bottlenecks [3, 4, 6, 3].
inline ArchGraph resnet50() {
  ArchBuilder b("resnet50");
  std::string x = b.input(3, 224, 224);
  x = b.conv("conv1", x, 64, 7, 2, 3);
  x = b.pool("maxpool", x, 3, 2, 1, PoolMode::kMax);
  const std::array<std::int64_t, 4> widths{64, 128, 256, 512};
  const std::array<int, 4> blocks{3, 4, 6, 3};
  for (std::size_t stage = 0; stage < widths.size(); ++stage) {
    for (int block = 0; block < blocks[stage]; ++block) {
      const std::int64_t stride = (stage > 0 && block == 0) ? 2 : 1;
      x = detail::bottleneck(
          b, "layer" + std::to_string(stage + 1) + "." + std::to_string(block), x, widths[stage],
          stride);
    }
  }
  x = b.global_pool("avgpool", x);
  x = b.flatten("flatten", x);
  x = b.dense("fc", x, 1000);
  return b.finish(x);
}

// ImageNet MobileNetV2 (width 1.0). Depthwise convolutions use groups = channels.
inline ArchGraph mobilenetv2() {
  ArchBuilder b("mobilenetv2");
  std::string x = b.input(3, 224, 224);
  x = b.conv("stem", x, 32, 3, 2, 1);
  struct Stage {
    int expand;
    std::int64_t channels;
    int repeats;
    std::int64_t stride;
  };
  const std::array<Stage, 7> stages{{{1, 16, 1, 1},
                                     {6, 24, 2, 2},
                                     {6, 32, 3, 2},
                                     {6, 64, 4, 2},
                                     {6, 96, 3, 1},
                                     {6, 160, 3, 2},
                                     {6, 320, 1, 1}}};
  int index = 0;
  for (const Stage& st : stages) {
    for (int r = 0; r < st.repeats; ++r) {
      const std::int64_t stride = r == 0 ? st.stride : 1;
      const std::int64_t in_channels = b.shape_of(x).channels;
      const std::string prefix = "block" + std::to_string(index++);
      std::string y = x;
      const std::int64_t hidden = in_channels * st.expand;
      if (st.expand != 1) {
        y = b.conv(prefix + ".expand", y, hidden, 1, 1, 0);
      }
      y = b.conv(prefix + ".depthwise", y, hidden, 3, stride, 1, hidden);
      y = b.conv(prefix + ".project", y, st.channels, 1, 1, 0);
      if (stride == 1 && in_channels == st.channels) {
        y = b.add(prefix + ".add", {y, x});
      }
      x = y;
    }
  }
  x = b.conv("head", x, 1280, 1, 1, 0);
  x = b.global_pool("avgpool", x);
  x = b.flatten("flatten", x);
  x = b.dense("classifier", x, 1000);
  return b.finish(x);
}

} // namespace zoo

inline const std::vector<std::string>& builtin_arch_names() {
  static const std::vector<std::string> names{"lenet300100", "lenet5",   "vgg16",      "vgg19",
                                              "resnet18",    "resnet50", "mobilenetv2"};
  return names;
}

inline ArchGraph builtin_arch(std::string_view name) {
  if (name == "lenet300100") return zoo::lenet300100();
  if (name == "lenet5") return zoo::lenet5();
  if (name == "vgg16") return zoo::vgg16();
  if (name == "vgg19") return zoo::vgg19();
  if (name == "resnet18") return zoo::resnet18();
  if (name == "resnet50") return zoo::resnet50();
  if (name == "mobilenetv2") return zoo::mobilenetv2();
  throw InputError("unknown architecture '" + std::string(name) + "'");
}

} // namespace prunelens
