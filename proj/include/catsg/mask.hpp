// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <charconv>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "catsg/errors.hpp"

namespace catsg {

/// Normalized spatial footprint of an entity.
struct Grounding {
  double cx = 0.0;
  double cy = 0.0;
  double area = 0.0;
  double x0 = 0.0, y0 = 0.0, x1 = 0.0, y1 = 0.0;

  bool operator==(const Grounding&) const = default;
};

inline bool grounding_valid(const Grounding& g) {
  auto unit = [](double v) { return v >= 0.0 && v <= 1.0; };
  return unit(g.cx) && unit(g.cy) && unit(g.area) && unit(g.x0) && unit(g.y0) &&
         unit(g.x1) && unit(g.y1) && g.x0 <= g.x1 && g.y0 <= g.y1;
}

/// Binary mask stored as alternating run lengths over the row-major
/// flattened image. The first run counts background pixels and may be 0.
class Mask {
 public:
  Mask() = default;
  Mask(int width, int height, std::vector<std::uint32_t> runs)
      : width_(width), height_(height), runs_(std::move(runs)) {
    std::uint64_t total = 0;
    for (auto r : runs_) total += r;
    if (width_ <= 0 || height_ <= 0 ||
        total != static_cast<std::uint64_t>(width_) * static_cast<std::uint64_t>(height_))
      throw SchemaError("mask runs sum to " + std::to_string(total) + ", expected " +
                        std::to_string(static_cast<long long>(width_) * height_));
  }

  static Mask encode(int width, int height, std::span<const std::uint8_t> bits) {
    if (width <= 0 || height <= 0 ||
        bits.size() != static_cast<std::size_t>(width) * static_cast<std::size_t>(height))
      throw DimensionMismatch("mask bitmap size does not match dimensions");
    std::vector<std::uint32_t> runs;
    std::uint8_t current = 0;
    std::uint32_t len = 0;
    for (auto b : bits) {
      const std::uint8_t v = b ? 1 : 0;
      if (v != current) {
        runs.push_back(len);
        current = v;
        len = 0;
      }
      ++len;
    }
    runs.push_back(len);
    return Mask(width, height, std::move(runs));
  }

  static Mask parse(std::string_view text, int width, int height) {
    std::vector<std::uint32_t> runs;
    std::size_t pos = 0;
    while (pos <= text.size()) {
      const auto comma = text.find(',', pos);
      const auto field = text.substr(pos, comma == std::string_view::npos ? std::string_view::npos
                                                                          : comma - pos);
      std::uint32_t v = 0;
      const auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), v);
      if (ec != std::errc() || ptr != field.data() + field.size() || field.empty())
        throw SchemaError("malformed RLE field `" + std::string(field) + "`");
      runs.push_back(v);
      if (comma == std::string_view::npos) break;
      pos = comma + 1;
    }
    return Mask(width, height, std::move(runs));
  }

  std::string to_string() const {
    std::string out;
    for (std::size_t i = 0; i < runs_.size(); ++i) {
      if (i) out.push_back(',');
      out += std::to_string(runs_[i]);
    }
    return out;
  }

  std::vector<std::uint8_t> decode() const {
    std::vector<std::uint8_t> bits;
    bits.reserve(static_cast<std::size_t>(width_) * static_cast<std::size_t>(height_));
    std::uint8_t v = 0;
    for (auto r : runs_) {
      bits.insert(bits.end(), r, v);
      v ^= 1;
    }
    return bits;
  }

  std::size_t foreground() const {
    std::size_t n = 0;
    for (std::size_t i = 1; i < runs_.size(); i += 2) n += runs_[i];
    return n;
  }

  int width() const { return width_; }
  int height() const { return height_; }
  const std::vector<std::uint32_t>& runs() const { return runs_; }

  /// Equality on the pixel content, independent of zero-length runs.
  friend bool operator==(const Mask& a, const Mask& b) {
    return a.width_ == b.width_ && a.height_ == b.height_ && a.decode() == b.decode();
  }

 private:
  int width_ = 0;
  int height_ = 0;
  std::vector<std::uint32_t> runs_;
};

/// Centroid uses pixel centres, so a full-frame mask has its centroid at 0.5.
inline Grounding grounding_from_mask(const Mask& mask) {
  const int w = mask.width();
  const int h = mask.height();
  double sx = 0.0, sy = 0.0;
  std::size_t n = 0;
  int xmin = w, ymin = h, xmax = -1, ymax = -1;
  std::size_t idx = 0;
  bool fg = false;
  for (auto r : mask.runs()) {
    if (fg) {
      for (std::uint32_t k = 0; k < r; ++k) {
        const int x = static_cast<int>((idx + k) % static_cast<std::size_t>(w));
        const int y = static_cast<int>((idx + k) / static_cast<std::size_t>(w));
        sx += x + 0.5;
        sy += y + 0.5;
        xmin = std::min(xmin, x);
        xmax = std::max(xmax, x);
        ymin = std::min(ymin, y);
        ymax = std::max(ymax, y);
      }
      n += r;
    }
    idx += r;
    fg = !fg;
  }
  if (n == 0) throw EmptyMask("mask has no foreground pixels");
  Grounding g;
  g.cx = sx / static_cast<double>(n) / w;
  g.cy = sy / static_cast<double>(n) / h;
  g.area = static_cast<double>(n) / (static_cast<double>(w) * h);
  g.x0 = static_cast<double>(xmin) / w;
  g.y0 = static_cast<double>(ymin) / h;
  g.x1 = static_cast<double>(xmax + 1) / w;
  g.y1 = static_cast<double>(ymax + 1) / h;
  return g;
}

namespace detail {

// Chebyshev dilation by `radius` using separable sliding-window counts.
inline std::vector<std::uint8_t> dilate(const std::vector<std::uint8_t>& bits, int w, int h,
                                        int radius) {
  std::vector<std::uint8_t> rows(bits.size(), 0);
  std::vector<int> prefix(static_cast<std::size_t>(std::max(w, h)) + 1);
  for (int y = 0; y < h; ++y) {
    prefix[0] = 0;
    for (int x = 0; x < w; ++x)
      prefix[x + 1] = prefix[x] + bits[static_cast<std::size_t>(y) * w + x];
    for (int x = 0; x < w; ++x) {
      const int lo = std::max(0, x - radius);
      const int hi = std::min(w - 1, x + radius);
      rows[static_cast<std::size_t>(y) * w + x] = prefix[hi + 1] - prefix[lo] > 0;
    }
  }
  std::vector<std::uint8_t> out(bits.size(), 0);
  for (int x = 0; x < w; ++x) {
    prefix[0] = 0;
    for (int y = 0; y < h; ++y)
      prefix[y + 1] = prefix[y] + rows[static_cast<std::size_t>(y) * w + x];
    for (int y = 0; y < h; ++y) {
      const int lo = std::max(0, y - radius);
      const int hi = std::min(h - 1, y + radius);
      out[static_cast<std::size_t>(y) * w + x] = prefix[hi + 1] - prefix[lo] > 0;
    }
  }
  return out;
}

}  // namespace detail

/// Decoded mask with its Chebyshev dilation precomputed, for repeated
/// adjacency queries against many partners.
struct PreparedMask {
  int width = 0, height = 0, radius = 0;
  int x0 = 0, y0 = 0, x1 = -1, y1 = -1;  // inclusive pixel bbox, empty if x1 < x0
  std::vector<std::uint8_t> bits;
  std::vector<std::uint8_t> dilated;

  PreparedMask(const Mask& m, int gap) : width(m.width()), height(m.height()), radius(1 + gap) {
    if (gap < 0) throw ConfigError("adjacency gap must be >= 0");
    bits = m.decode();
    x0 = width;
    y0 = height;
    for (int y = 0; y < height; ++y)
      for (int x = 0; x < width; ++x)
        if (bits[static_cast<std::size_t>(y) * width + x]) {
          x0 = std::min(x0, x);
          x1 = std::max(x1, x);
          y0 = std::min(y0, y);
          y1 = std::max(y1, y);
        }
    if (!empty()) dilated = detail::dilate(bits, width, height, radius);
  }

  bool empty() const { return x1 < x0; }

  bool adjacent(const PreparedMask& other) const {
    if (width != other.width || height != other.height)
      throw DimensionMismatch("masks differ in size");
    if (empty() || other.empty()) return false;
    const int dx = std::max({0, other.x0 - x1, x0 - other.x1});
    const int dy = std::max({0, other.y0 - y1, y0 - other.y1});
    if (std::max(dx, dy) > radius) return false;
    for (int y = other.y0; y <= other.y1; ++y)
      for (int x = other.x0; x <= other.x1; ++x) {
        const auto i = static_cast<std::size_t>(y) * width + x;
        if (other.bits[i] && dilated[i]) return true;
      }
    return false;
  }
};

/// True iff some foreground pixel of `a` lies within Chebyshev distance
/// 1 + gap of a foreground pixel of `b` (8-connected touch at gap 0).
inline bool masks_adjacent(const Mask& a, const Mask& b, int gap = 0) {
  if (a.width() != b.width() || a.height() != b.height())
    throw DimensionMismatch("masks_adjacent: masks differ in size");
  if (gap < 0) throw ConfigError("masks_adjacent: gap must be >= 0");
  return PreparedMask(a, gap).adjacent(PreparedMask(b, gap));
}

}  // namespace catsg
