#include "isqa/messages.hpp"

#include "isqa/errors.hpp"

namespace isqa {

std::size_t Sketch::activated_count() const {
  std::size_t n = 0;
  for (Real v : pixels) n += v < 1.0;
  return n;
}

Tensor Sketch::as_tensor() const { return Tensor({1, height, width}, pixels); }

std::vector<std::uint8_t> sketch_to_wire(const Sketch& s) {
  if (s.height > 0xffff || s.width > 0xffff) throw DimensionError("sketch canvas too large for wire format");
  std::vector<std::uint8_t> buf;
  put_u16(buf, static_cast<std::uint16_t>(s.height));
  put_u16(buf, static_cast<std::uint16_t>(s.width));
  const std::size_t count = s.activated_count();
  put_u32(buf, static_cast<std::uint32_t>(count));
  buf.reserve(buf.size() + count * 8);
  for (int r = 0; r < s.height; ++r)
    for (int c = 0; c < s.width; ++c) {
      const Real v = s.at(r, c);
      if (v < 1.0) {
        put_u16(buf, static_cast<std::uint16_t>(r));
        put_u16(buf, static_cast<std::uint16_t>(c));
        put_f32(buf, static_cast<float>(v));
      }
    }
  return buf;
}

Sketch sketch_from_wire(std::span<const std::uint8_t> bytes) {
  std::size_t pos = 0;
  const int h = get_u16(bytes, pos);
  const int w = get_u16(bytes, pos);
  const std::uint32_t count = get_u32(bytes, pos);
  Sketch s = Sketch::blank(h, w);
  for (std::uint32_t i = 0; i < count; ++i) {
    const int r = get_u16(bytes, pos);
    const int c = get_u16(bytes, pos);
    const float v = get_f32(bytes, pos);
    if (r >= h || c >= w) throw DimensionError("sketch pixel outside canvas");
    if (!(v >= 0.0f && v <= 1.0f)) throw ContractError("sketch intensity outside [0,1]");
    s.at(r, c) = v;
  }
  if (pos != bytes.size()) throw IoError("trailing bytes in sketch payload");
  return s;
}

std::vector<std::uint8_t> feedback_to_wire(const FeedbackSketch& f) {
  std::vector<std::uint8_t> buf;
  put_u32(buf, static_cast<std::uint32_t>(f.boxes.size()));
  for (const Box& b : f.boxes) {
    for (int v : {b.x1, b.y1, b.x2, b.y2}) {
      if (v < 0 || v > 0xffff) throw DimensionError("box coordinate out of wire range");
      put_u16(buf, static_cast<std::uint16_t>(v));
    }
    put_f32(buf, static_cast<float>(b.weight));
  }
  return buf;
}

FeedbackSketch feedback_from_wire(std::span<const std::uint8_t> bytes, int height, int width) {
  std::size_t pos = 0;
  FeedbackSketch f{height, width, {}};
  const std::uint32_t count = get_u32(bytes, pos);
  for (std::uint32_t i = 0; i < count; ++i) {
    Box b;
    b.x1 = get_u16(bytes, pos);
    b.y1 = get_u16(bytes, pos);
    b.x2 = get_u16(bytes, pos);
    b.y2 = get_u16(bytes, pos);
    b.weight = get_f32(bytes, pos);
    f.boxes.push_back(b);
  }
  if (pos != bytes.size()) throw IoError("trailing bytes in feedback payload");
  return f;
}

Sketch through_wire(const Sketch& s) { return sketch_from_wire(sketch_to_wire(s)); }

FeedbackSketch through_wire(const FeedbackSketch& f) {
  return feedback_from_wire(feedback_to_wire(f), f.height, f.width);
}

}  // namespace isqa
