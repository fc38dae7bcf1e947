#pragma once

#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

namespace isqa {

using Real = double;

// Dense row-major array. Values are held in double precision; the on-disk
// format stores little-endian float32.
class Tensor {
public:
  Tensor() = default;
  explicit Tensor(std::vector<int> shape, Real fill = 0);
  Tensor(std::vector<int> shape, std::vector<Real> data);

  static Tensor zeros(std::vector<int> shape) { return Tensor(std::move(shape), 0); }
  static Tensor ones(std::vector<int> shape) { return Tensor(std::move(shape), 1); }
  static Tensor scalar(Real v) { return Tensor({1}, {v}); }

  const std::vector<int>& shape() const noexcept { return shape_; }
  int rank() const noexcept { return static_cast<int>(shape_.size()); }
  int dim(int axis) const;
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  std::span<Real> data() noexcept { return data_; }
  std::span<const Real> data() const noexcept { return data_; }
  std::vector<Real>& storage() noexcept { return data_; }
  const std::vector<Real>& storage() const noexcept { return data_; }

  Real& operator[](std::size_t i) { return data_[i]; }
  Real operator[](std::size_t i) const { return data_[i]; }

  Real& at(int r, int c) { return data_[static_cast<std::size_t>(r) * shape_[1] + c]; }
  Real at(int r, int c) const { return data_[static_cast<std::size_t>(r) * shape_[1] + c]; }
  Real& at(int ch, int y, int x) {
    return data_[(static_cast<std::size_t>(ch) * shape_[1] + y) * shape_[2] + x];
  }
  Real at(int ch, int y, int x) const {
    return data_[(static_cast<std::size_t>(ch) * shape_[1] + y) * shape_[2] + x];
  }

  Real item() const;
  Tensor reshaped(std::vector<int> shape) const;
  bool all_finite() const noexcept;
  bool same_shape(const Tensor& other) const noexcept { return shape_ == other.shape_; }

  void fill(Real v);
  Tensor& operator+=(const Tensor& other);

  std::string shape_string() const;

private:
  std::vector<int> shape_;
  std::vector<Real> data_;
};

std::size_t shape_size(const std::vector<int>& shape);
std::string shape_to_string(const std::vector<int>& shape);

// Flat binary: u32 rank, u32 dims, then little-endian f32 values.
void write_tensor(std::ostream& out, const Tensor& t);
Tensor read_tensor(std::istream& in);
void save_tensor(const std::string& path, const Tensor& t);
Tensor load_tensor(const std::string& path);

// Little-endian primitive helpers shared by the wire formats.
void put_u16(std::vector<std::uint8_t>& buf, std::uint16_t v);
void put_u32(std::vector<std::uint8_t>& buf, std::uint32_t v);
void put_f32(std::vector<std::uint8_t>& buf, float v);
std::uint16_t get_u16(std::span<const std::uint8_t> buf, std::size_t& pos);
std::uint32_t get_u32(std::span<const std::uint8_t> buf, std::size_t& pos);
float get_f32(std::span<const std::uint8_t> buf, std::size_t& pos);

std::string to_hex(std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> from_hex(const std::string& hex);

// FNV-1a 64-bit digest, used for reproducibility checks.
std::uint64_t fnv1a64(std::span<const std::uint8_t> bytes, std::uint64_t seed = 0xcbf29ce484222325ULL);
std::uint64_t fnv1a64(const std::string& text);
std::string digest_hex(std::uint64_t d);
std::string file_digest(const std::string& path);

}  // namespace isqa
