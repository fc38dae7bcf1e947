#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "isqa/tensor.hpp"

namespace isqa {

// Grayscale canvas in [0,1]; 0 is an activated (black) pixel, 1 is blank.
struct Sketch {
  int height = 0;
  int width = 0;
  std::vector<Real> pixels;

  static Sketch blank(int height, int width) {
    return Sketch{height, width, std::vector<Real>(static_cast<std::size_t>(height) * width, 1.0)};
  }
  std::size_t size() const noexcept { return pixels.size(); }
  Real at(int row, int col) const { return pixels[static_cast<std::size_t>(row) * width + col]; }
  Real& at(int row, int col) { return pixels[static_cast<std::size_t>(row) * width + col]; }
  bool activated(std::size_t i) const { return pixels[i] < 1.0; }
  std::size_t activated_count() const;
  Tensor as_tensor() const;  // {1, H, W}
  bool operator==(const Sketch&) const = default;
};

// Axis-aligned box, half-open: covers x1 <= col < x2, y1 <= row < y2.
struct Box {
  int x1 = 0, y1 = 0, x2 = 0, y2 = 0;
  Real weight = 0;

  bool covers(int row, int col) const { return col >= x1 && col < x2 && row >= y1 && row < y2; }
  int area() const { return (x2 - x1) * (y2 - y1); }
  bool operator==(const Box&) const = default;
};

struct FeedbackSketch {
  int height = 0;
  int width = 0;
  std::vector<Box> boxes;

  std::size_t count() const noexcept { return boxes.size(); }
  bool empty() const noexcept { return boxes.empty(); }
  bool operator==(const FeedbackSketch&) const = default;
};

// Forward message: u16 height, u16 width, u32 count, then count records of
// (row u16, col u16, intensity f32) for every activated pixel.
std::vector<std::uint8_t> sketch_to_wire(const Sketch& s);
Sketch sketch_from_wire(std::span<const std::uint8_t> bytes);

// Backward message: u32 count h, then h records of (x1,y1,x2,y2 u16, weight f32).
// The wire carries exactly five numbers per box; canvas dims come from context.
std::vector<std::uint8_t> feedback_to_wire(const FeedbackSketch& f);
FeedbackSketch feedback_from_wire(std::span<const std::uint8_t> bytes, int height, int width);

// What the peer actually receives after a wire round trip (float32 intensities).
Sketch through_wire(const Sketch& s);
FeedbackSketch through_wire(const FeedbackSketch& f);

}  // namespace isqa
