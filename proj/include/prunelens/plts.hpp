#pragma once

// PLTS tensor container (all integers little-endian):
//
//   "PLTS" | version u16 = 1 | section count u32
//   per section: name length u16 | UTF-8 name | dtype u8 (0 = f64, 1 = u8)
//                | ndim u8 | dims u32[ndim] | payload
//
// Weight, score and mask sets store one section per prunable layer, named by
// the layer id, with the weight tensor dims: (out, in) or (out, in/groups, kh, kw).

#include <bit>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <iterator>
#include <string>
#include <variant>
#include <vector>

#include "prunelens/arch.hpp"
#include "prunelens/error.hpp"
#include "prunelens/tensors.hpp"

namespace prunelens {

enum class DType : std::uint8_t { kF64 = 0, kU8 = 1 };

struct TensorSection {
  std::string name;
  std::vector<std::uint32_t> dims;
  std::variant<std::vector<double>, std::vector<std::uint8_t>> data;

  DType dtype() const { return data.index() == 0 ? DType::kF64 : DType::kU8; }
  friend bool operator==(const TensorSection&, const TensorSection&) = default;
};

struct TensorFile {
  std::vector<TensorSection> sections;
  friend bool operator==(const TensorFile&, const TensorFile&) = default;
};

inline constexpr std::uint16_t kPltsVersion = 1;

namespace detail {

class ByteWriter {
public:
  void bytes(const void* p, std::size_t n) {
    const auto* b = static_cast<const char*>(p);
    out_.append(b, n);
  }
  template <typename U>
  void uint(U v) {
    for (std::size_t i = 0; i < sizeof(U); ++i) {
      out_.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
    }
  }
  void f64(double v) { uint(std::bit_cast<std::uint64_t>(v)); }
  std::string take() { return std::move(out_); }

private:
  std::string out_;
};

class ByteReader {
public:
  explicit ByteReader(const std::string& data) : data_(data) {}

  template <typename U>
  U uint(const char* what) {
    need(sizeof(U), what);
    U v = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i) {
      v |= static_cast<U>(static_cast<std::uint8_t>(data_[pos_ + i])) << (8 * i);
    }
    pos_ += sizeof(U);
    return v;
  }
  double f64(const char* what) { return std::bit_cast<double>(uint<std::uint64_t>(what)); }
  std::string str(std::size_t n, const char* what) {
    need(n, what);
    std::string s = data_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  bool at_end() const { return pos_ == data_.size(); }
  std::size_t remaining() const { return data_.size() - pos_; }

private:
  void need(std::size_t n, const char* what) const {
    if (data_.size() - pos_ < n) {
      throw FormatError(std::string("truncated PLTS file while reading ") + what);
    }
  }

  const std::string& data_;
  std::size_t pos_ = 0;
};

} // namespace detail

inline std::string encode_plts(const TensorFile& file) {
  detail::ByteWriter w;
  w.bytes("PLTS", 4);
  w.uint<std::uint16_t>(kPltsVersion);
  w.uint<std::uint32_t>(static_cast<std::uint32_t>(file.sections.size()));
  for (const TensorSection& s : file.sections) {
    if (s.name.size() > 0xFFFF) throw FormatError("section name too long: " + s.name);
    if (s.dims.size() > 0xFF) throw FormatError("too many dims in section " + s.name);
    std::uint64_t elements = 1;
    for (auto d : s.dims) elements *= d;
    w.uint<std::uint16_t>(static_cast<std::uint16_t>(s.name.size()));
    w.bytes(s.name.data(), s.name.size());
    w.uint<std::uint8_t>(static_cast<std::uint8_t>(s.dtype()));
    w.uint<std::uint8_t>(static_cast<std::uint8_t>(s.dims.size()));
    for (auto d : s.dims) w.uint<std::uint32_t>(d);
    if (const auto* f = std::get_if<std::vector<double>>(&s.data)) {
      if (f->size() != elements) throw FormatError("payload size mismatch in section " + s.name);
      for (double v : *f) w.f64(v);
    } else {
      const auto& u = std::get<std::vector<std::uint8_t>>(s.data);
      if (u.size() != elements) throw FormatError("payload size mismatch in section " + s.name);
      w.bytes(u.data(), u.size());
    }
  }
  return w.take();
}

inline TensorFile decode_plts(const std::string& bytes) {
  detail::ByteReader r(bytes);
  if (r.str(4, "magic") != "PLTS") throw FormatError("bad magic: not a PLTS file");
  const auto version = r.uint<std::uint16_t>("version");
  if (version != kPltsVersion) {
    throw FormatError("unsupported PLTS version " + std::to_string(version));
  }
  const auto count = r.uint<std::uint32_t>("section count");
  TensorFile file;
  for (std::uint32_t i = 0; i < count; ++i) {
    TensorSection s;
    const auto name_len = r.uint<std::uint16_t>("section name length");
    s.name = r.str(name_len, "section name");
    const auto dtype = r.uint<std::uint8_t>("dtype");
    const auto ndim = r.uint<std::uint8_t>("ndim");
    std::uint64_t elements = 1;
    for (std::uint8_t d = 0; d < ndim; ++d) {
      s.dims.push_back(r.uint<std::uint32_t>("dims"));
      elements *= s.dims.back();
    }
    const std::uint64_t width = dtype == 0 ? 8 : 1;
    if (dtype > 1) {
      throw FormatError("section '" + s.name + "': unknown dtype " + std::to_string(dtype));
    }
    if (elements > r.remaining() / width) {
      throw FormatError("truncated PLTS file in section '" + s.name + "' payload");
    }
    if (dtype == 0) {
      std::vector<double> values(static_cast<std::size_t>(elements));
      for (double& v : values) v = r.f64("payload");
      s.data = std::move(values);
    } else {
      const std::string raw = r.str(static_cast<std::size_t>(elements), "payload");
      s.data = std::vector<std::uint8_t>(raw.begin(), raw.end());
    }
    file.sections.push_back(std::move(s));
  }
  if (!r.at_end()) throw FormatError("trailing bytes after last PLTS section");
  return file;
}

inline TensorFile read_tensor_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open tensor file '" + path + "'");
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode_plts(bytes);
}

inline void write_tensor_file(const TensorFile& file, const std::string& path) {
  const std::string bytes = encode_plts(file);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot open '" + path + "' for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error("failed writing '" + path + "'");
}

namespace detail {

template <typename Set>
TensorFile to_tensor_file(const ArchGraph& arch, const Set& set) {
  check_shapes(arch, set, "tensor set");
  TensorFile file;
  for (std::size_t l = 0; l < arch.num_layers(); ++l) {
    file.sections.push_back({arch.layer_id(l), arch.weight_dims(l), set.layers[l]});
  }
  return file;
}

template <typename Set>
Set from_tensor_file(const ArchGraph& arch, TensorFile file, const char* what) {
  using T = typename Set::value_type;
  if (file.sections.size() != arch.num_layers()) {
    throw ShapeError(std::string(what) + " file has " + std::to_string(file.sections.size()) +
                     " sections, architecture '" + arch.name() + "' has " +
                     std::to_string(arch.num_layers()) + " prunable layers");
  }
  Set set;
  set.layers.reserve(arch.num_layers());
  for (std::size_t l = 0; l < arch.num_layers(); ++l) {
    TensorSection& s = file.sections[l];
    if (s.name != arch.layer_id(l)) {
      throw ShapeError(std::string(what) + " section " + std::to_string(l) + " is '" + s.name +
                       "', expected layer '" + arch.layer_id(l) + "'");
    }
    if (s.dims != arch.weight_dims(l)) {
      throw ShapeError(std::string(what) + " layer '" + s.name +
                       "' dims disagree with the architecture");
    }
    auto* values = std::get_if<std::vector<T>>(&s.data);
    if (values == nullptr) {
      throw FormatError(std::string(what) + " layer '" + s.name + "' has the wrong dtype");
    }
    set.layers.push_back(std::move(*values));
  }
  return set;
}

} // namespace detail

inline TensorFile to_tensor_file(const ArchGraph& arch, const MaskSet& m) {
  return detail::to_tensor_file(arch, m);
}
inline TensorFile to_tensor_file(const ArchGraph& arch, const WeightSet& w) {
  return detail::to_tensor_file(arch, w);
}
inline TensorFile to_tensor_file(const ArchGraph& arch, const ScoreSet& s) {
  return detail::to_tensor_file(arch, s);
}

inline MaskSet masks_from_file(const ArchGraph& arch, TensorFile file) {
  MaskSet mask = detail::from_tensor_file<MaskSet>(arch, std::move(file), "mask");
  validate_mask(arch, mask);
  return mask;
}

inline WeightSet weights_from_file(const ArchGraph& arch, TensorFile file) {
  return detail::from_tensor_file<WeightSet>(arch, std::move(file), "weight");
}

inline ScoreSet scores_from_file(const ArchGraph& arch, TensorFile file) {
  ScoreSet scores = detail::from_tensor_file<ScoreSet>(arch, std::move(file), "score");
  validate_scores(arch, scores);
  return scores;
}

template <typename Set>
void write_tensors(const ArchGraph& arch, const Set& set, const std::string& path) {
  write_tensor_file(to_tensor_file(arch, set), path);
}

inline MaskSet read_masks(const ArchGraph& arch, const std::string& path) {
  return masks_from_file(arch, read_tensor_file(path));
}
inline WeightSet read_weights(const ArchGraph& arch, const std::string& path) {
  return weights_from_file(arch, read_tensor_file(path));
}
inline ScoreSet read_scores(const ArchGraph& arch, const std::string& path) {
  return scores_from_file(arch, read_tensor_file(path));
}

} // namespace prunelens
