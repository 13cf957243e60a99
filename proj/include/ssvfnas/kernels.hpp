// Copyright 2026 The ssvfnas Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef SSVFNAS_KERNELS_HPP
#define SSVFNAS_KERNELS_HPP

// Dense inner loops used by the autodiff engine. Every kernel exists twice:
// a serial reference and an OpenMP version that partitions output rows across
// threads. Both run the same per-element accumulation order, so results are
// bitwise identical and the backend choice never changes a trajectory.

#include <cstddef>
#include <span>

namespace ssvfnas::kernels {

enum class Backend { serial, parallel };

void set_backend(Backend b) noexcept;
Backend backend() noexcept;

/// RAII switch used by tests and benchmarks.
class ScopedBackend {
 public:
  explicit ScopedBackend(Backend b) noexcept : saved_(backend()) { set_backend(b); }
  ~ScopedBackend() { set_backend(saved_); }
  ScopedBackend(const ScopedBackend&) = delete;
  ScopedBackend& operator=(const ScopedBackend&) = delete;

 private:
  Backend saved_;
};

// Shapes: a is m x k, b is k x n, c is m x n (overwritten).
struct GemmDims {
  std::size_t m, k, n;
};

namespace serial {
void matmul(std::span<const double> a, std::span<const double> b, std::span<double> c,
            GemmDims d);
// c (k x n) = a^T b with a m x k, b m x n.
void matmul_at_b(std::span<const double> a, std::span<const double> b, std::span<double> c,
                 GemmDims d);
// c (m x k) = a b^T with a m x n, b k x n.
void matmul_a_bt(std::span<const double> a, std::span<const double> b, std::span<double> c,
                 GemmDims d);
void add_row_bias(std::span<double> x, std::span<const double> bias, std::size_t rows,
                  std::size_t cols);
void column_sums(std::span<const double> x, std::span<double> out, std::size_t rows,
                 std::size_t cols);
}  // namespace serial

namespace parallel {
void matmul(std::span<const double> a, std::span<const double> b, std::span<double> c,
            GemmDims d);
void matmul_at_b(std::span<const double> a, std::span<const double> b, std::span<double> c,
                 GemmDims d);
void matmul_a_bt(std::span<const double> a, std::span<const double> b, std::span<double> c,
                 GemmDims d);
void add_row_bias(std::span<double> x, std::span<const double> bias, std::size_t rows,
                  std::size_t cols);
void column_sums(std::span<const double> x, std::span<double> out, std::size_t rows,
                 std::size_t cols);
}  // namespace parallel

// Dispatch on the active backend.
void matmul(std::span<const double> a, std::span<const double> b, std::span<double> c,
            GemmDims d);
void matmul_at_b(std::span<const double> a, std::span<const double> b, std::span<double> c,
                 GemmDims d);
void matmul_a_bt(std::span<const double> a, std::span<const double> b, std::span<double> c,
                 GemmDims d);
void add_row_bias(std::span<double> x, std::span<const double> bias, std::size_t rows,
                  std::size_t cols);
void column_sums(std::span<const double> x, std::span<double> out, std::size_t rows,
                 std::size_t cols);

}  // namespace ssvfnas::kernels

#endif  // SSVFNAS_KERNELS_HPP
