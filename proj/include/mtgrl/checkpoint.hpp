#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "mtgrl/encoder.hpp"
#include "mtgrl/error.hpp"
#include "mtgrl/pretext.hpp"

namespace mtgrl {

/// Text header line, then 64-bit little-endian doubles: encoder weights
/// layer-major (row-major inside a layer), then feat_decoder, topo_scorer,
/// ming_scorer.
///
///   mtgrl-checkpoint v1 dims=16,64,32 heads=1
struct Checkpoint {
  EncoderParams params;
  TaskHeads heads;

  bool operator==(const Checkpoint&) const = default;
};

namespace checkpoint_detail {

inline constexpr const char* kMagic = "mtgrl-checkpoint";

inline void put(std::ostream& os, double v) {
  auto bits = std::bit_cast<std::uint64_t>(v);
  char bytes[8];
  for (int i = 0; i < 8; ++i) bytes[i] = static_cast<char>((bits >> (8 * i)) & 0xffu);
  os.write(bytes, 8);
}

inline void put_all(std::ostream& os, const DenseMatrix& m) {
  for (double v : m.values()) put(os, v);
}

inline void get_all(std::istream& is, DenseMatrix& m, const std::string& where) {
  for (double& v : m.data()) {
    unsigned char bytes[8];
    if (!is.read(reinterpret_cast<char*>(bytes), 8)) {
      throw FormatError(where + ": truncated parameter block");
    }
    std::uint64_t bits = 0;
    for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(bytes[i]) << (8 * i);
    v = std::bit_cast<double>(bits);
  }
}

}  // namespace checkpoint_detail

inline void save_checkpoint(const Checkpoint& c, const std::filesystem::path& file) {
  c.params.validate();
  c.heads.validate(c.params.output_dim(), c.params.input_dim());
  std::ofstream os(file, std::ios::binary);
  if (!os) throw FormatError(file.string() + ": cannot open for writing");
  os << checkpoint_detail::kMagic << " v1 dims=";
  for (std::size_t i = 0; i < c.params.dims.size(); ++i)
    os << (i ? "," : "") << c.params.dims[i];
  os << " heads=1\n";
  for (const auto& w : c.params.weights) checkpoint_detail::put_all(os, w);
  checkpoint_detail::put_all(os, c.heads.feat_decoder);
  checkpoint_detail::put_all(os, c.heads.topo_scorer);
  checkpoint_detail::put_all(os, c.heads.ming_scorer);
  if (!os) throw FormatError(file.string() + ": write failed");
}

inline Checkpoint load_checkpoint(const std::filesystem::path& file) {
  const std::string where = file.string();
  std::ifstream is(file, std::ios::binary);
  if (!is) throw FormatError(where + ": cannot open checkpoint");
  std::string header;
  if (!std::getline(is, header)) throw FormatError(where + ":1: missing header");
  std::istringstream hs(header);
  std::string magic, version, dims_field, heads_field;
  hs >> magic >> version >> dims_field >> heads_field;
  if (magic != checkpoint_detail::kMagic || version != "v1") {
    throw FormatError(where + ":1: not a v1 checkpoint");
  }
  if (dims_field.rfind("dims=", 0) != 0 || heads_field != "heads=1") {
    throw FormatError(where + ":1: malformed header '" + header + "'");
  }
  std::vector<std::size_t> dims;
  std::istringstream ds(dims_field.substr(5));
  for (std::string tok; std::getline(ds, tok, ',');) {
    try {
      std::size_t used = 0;
      const auto v = std::stoull(tok, &used);
      if (used != tok.size() || v == 0) throw std::invalid_argument(tok);
      dims.push_back(static_cast<std::size_t>(v));
    } catch (const std::exception&) {
      throw FormatError(where + ":1: bad dimension '" + tok + "'");
    }
  }
  if (dims.size() < 2) throw FormatError(where + ":1: need at least two dims");

  Checkpoint c;
  c.params.dims = dims;
  for (std::size_t l = 0; l + 1 < dims.size(); ++l)
    c.params.weights.emplace_back(dims[l], dims[l + 1]);
  const std::size_t d = dims.back();
  c.heads = {DenseMatrix(d, dims.front()), DenseMatrix(d, 1), DenseMatrix(2 * d, 1)};
  for (auto& w : c.params.weights) checkpoint_detail::get_all(is, w, where);
  checkpoint_detail::get_all(is, c.heads.feat_decoder, where);
  checkpoint_detail::get_all(is, c.heads.topo_scorer, where);
  checkpoint_detail::get_all(is, c.heads.ming_scorer, where);
  if (is.peek() != std::char_traits<char>::eof()) throw FormatError(where + ": trailing bytes");
  c.params.validate();
  return c;
}

}  // namespace mtgrl
