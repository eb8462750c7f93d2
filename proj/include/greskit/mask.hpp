#pragma once

#include <cstdint>
#include <numeric>
#include <string>
#include <vector>

#include "greskit/errors.hpp"

namespace greskit {

// Binary segmentation mask, row-major.
struct Mask {
  int h = 0, w = 0;
  std::vector<std::uint8_t> data;  // 0/1 per pixel

  static Mask zeros(int h, int w) {
    return Mask{h, w, std::vector<std::uint8_t>(static_cast<std::size_t>(h) * w, 0)};
  }

  std::uint8_t& at(int y, int x) { return data[static_cast<std::size_t>(y) * w + x]; }
  std::uint8_t at(int y, int x) const { return data[static_cast<std::size_t>(y) * w + x]; }

  long long area() const {
    long long n = 0;
    for (auto v : data) n += v;
    return n;
  }
  bool empty() const { return area() == 0; }

  void validate() const {
    if (h <= 0 || w <= 0 || data.size() != static_cast<std::size_t>(h) * w)
      throw InputError("mask: extent/payload mismatch");
    for (auto v : data)
      if (v > 1) throw InputError("mask: non-binary value " + std::to_string(int(v)));
  }
};

// Uncompressed run-length encoding in column-major pixel order. Runs
// alternate zero/one and start with the zero run (possibly of length 0).
inline std::vector<int> rle_encode(const Mask& m) {
  m.validate();
  std::vector<int> runs;
  int cur = 0, len = 0;
  for (int x = 0; x < m.w; ++x)
    for (int y = 0; y < m.h; ++y) {
      int v = m.at(y, x);
      if (v == cur) {
        ++len;
      } else {
        runs.push_back(len);
        cur = v;
        len = 1;
      }
    }
  runs.push_back(len);
  return runs;
}

inline Mask rle_decode(const std::vector<int>& runs, int h, int w) {
  if (h <= 0 || w <= 0) throw FormatError("rle_decode: non-positive extent");
  long long total = 0;
  for (int r : runs) {
    if (r < 0) throw FormatError("rle_decode: negative run");
    total += r;
  }
  if (total != static_cast<long long>(h) * w)
    throw FormatError("rle_decode: runs sum to " + std::to_string(total) + ", expected " +
                      std::to_string(static_cast<long long>(h) * w));
  Mask m = Mask::zeros(h, w);
  long long pos = 0;
  int bit = 0;
  for (int r : runs) {
    for (int k = 0; k < r; ++k, ++pos) {
      int x = static_cast<int>(pos / h);
      int y = static_cast<int>(pos % h);
      m.at(y, x) = static_cast<std::uint8_t>(bit);
    }
    bit ^= 1;
  }
  return m;
}

}  // namespace greskit
