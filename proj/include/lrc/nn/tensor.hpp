// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <functional>
#include <new>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "lrc/error.hpp"

namespace lrc::nn {

using Shape = std::vector<std::size_t>;

/// 64-byte aligned storage. Vectorized reductions peel differently depending
/// on the start address, so a fixed alignment keeps results bitwise stable
/// across allocations and threads.
template <typename T>
struct AlignedAllocator {
  using value_type = T;
  static constexpr std::align_val_t kAlign{64};

  AlignedAllocator() noexcept = default;
  template <typename U>
  AlignedAllocator(const AlignedAllocator<U>&) noexcept {}

  T* allocate(std::size_t n) { return static_cast<T*>(::operator new(n * sizeof(T), kAlign)); }
  void deallocate(T* p, std::size_t) noexcept { ::operator delete(p, kAlign); }

  template <typename U>
  bool operator==(const AlignedAllocator<U>&) const noexcept {
    return true;
  }
};

template <typename T>
using AlignedVector = std::vector<T, AlignedAllocator<T>>;

inline std::size_t numel(const Shape& s) {
  return std::accumulate(s.begin(), s.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_str(const Shape& s);

/// Dense row-major buffer. Activations are (channels, height, width), vectors
/// are (n), conv kernels are (out, in, k, k), linear weights are (out, in).
template <typename T>
struct Tensor {
  Shape shape;
  AlignedVector<T> data;

  Tensor() = default;
  explicit Tensor(Shape s, T fill = T(0)) : shape(std::move(s)), data(numel(shape), fill) {}
  Tensor(Shape s, const std::vector<T>& values) : shape(std::move(s)), data(values.begin(), values.end()) {
    require(data.size() == numel(shape), Errc::shape, "tensor data does not match shape " + shape_str(shape));
  }

  [[nodiscard]] std::size_t size() const noexcept { return data.size(); }
  [[nodiscard]] std::size_t rank() const noexcept { return shape.size(); }
  [[nodiscard]] std::size_t dim(std::size_t i) const { return shape.at(i); }
  [[nodiscard]] bool empty() const noexcept { return data.empty(); }

  T& operator[](std::size_t i) { return data[i]; }
  const T& operator[](std::size_t i) const { return data[i]; }

  /// (c, y, x) access for rank-3 activations.
  T& at(std::size_t c, std::size_t y, std::size_t x) { return data[(c * shape[1] + y) * shape[2] + x]; }
  const T& at(std::size_t c, std::size_t y, std::size_t x) const {
    return data[(c * shape[1] + y) * shape[2] + x];
  }

  [[nodiscard]] std::span<T> channel(std::size_t c) {
    const std::size_t plane = shape[1] * shape[2];
    return {data.data() + c * plane, plane};
  }
  [[nodiscard]] std::span<const T> channel(std::size_t c) const {
    const std::size_t plane = shape[1] * shape[2];
    return {data.data() + c * plane, plane};
  }

  template <typename U>
  [[nodiscard]] Tensor<U> cast() const {
    Tensor<U> out;
    out.shape = shape;
    out.data.assign(data.begin(), data.end());
    return out;
  }

  bool operator==(const Tensor&) const = default;
};

}  // namespace lrc::nn
