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

#include "ssvfnas/kernels.hpp"

#include <atomic>
#include <cstdint>

namespace ssvfnas::kernels {
namespace {

std::atomic<Backend> g_backend{Backend::parallel};

// Below this many multiply-adds the fork/join cost dominates.
constexpr std::size_t kParallelWork = 1u << 14;

inline void matmul_row(const double* a, const double* b, double* c, GemmDims d,
                       std::size_t i) {
  double* crow = c + i * d.n;
  for (std::size_t j = 0; j < d.n; ++j) crow[j] = 0.0;
  const double* arow = a + i * d.k;
  for (std::size_t p = 0; p < d.k; ++p) {
    const double av = arow[p];
    const double* brow = b + p * d.n;
    for (std::size_t j = 0; j < d.n; ++j) crow[j] += av * brow[j];
  }
}

// Row p of a^T b.
inline void matmul_at_b_row(const double* a, const double* b, double* c, GemmDims d,
                            std::size_t p) {
  double* crow = c + p * d.n;
  for (std::size_t j = 0; j < d.n; ++j) crow[j] = 0.0;
  for (std::size_t i = 0; i < d.m; ++i) {
    const double av = a[i * d.k + p];
    const double* brow = b + i * d.n;
    for (std::size_t j = 0; j < d.n; ++j) crow[j] += av * brow[j];
  }
}

// Row i of a b^T; here d.n is the shared inner extent and d.k the output width.
inline void matmul_a_bt_row(const double* a, const double* b, double* c, GemmDims d,
                            std::size_t i) {
  const double* arow = a + i * d.n;
  double* crow = c + i * d.k;
  for (std::size_t q = 0; q < d.k; ++q) {
    const double* brow = b + q * d.n;
    double s = 0.0;
    for (std::size_t j = 0; j < d.n; ++j) s += arow[j] * brow[j];
    crow[q] = s;
  }
}

inline void column_sum(const double* x, double* out, std::size_t rows, std::size_t cols,
                       std::size_t j) {
  double s = 0.0;
  for (std::size_t i = 0; i < rows; ++i) s += x[i * cols + j];
  out[j] = s;
}

}  // namespace

void set_backend(Backend b) noexcept { g_backend.store(b); }
Backend backend() noexcept { return g_backend.load(); }

namespace serial {

void matmul(std::span<const double> a, std::span<const double> b, std::span<double> c,
            GemmDims d) {
  for (std::size_t i = 0; i < d.m; ++i) matmul_row(a.data(), b.data(), c.data(), d, i);
}

void matmul_at_b(std::span<const double> a, std::span<const double> b, std::span<double> c,
                 GemmDims d) {
  for (std::size_t p = 0; p < d.k; ++p) matmul_at_b_row(a.data(), b.data(), c.data(), d, p);
}

void matmul_a_bt(std::span<const double> a, std::span<const double> b, std::span<double> c,
                 GemmDims d) {
  for (std::size_t i = 0; i < d.m; ++i) matmul_a_bt_row(a.data(), b.data(), c.data(), d, i);
}

void add_row_bias(std::span<double> x, std::span<const double> bias, std::size_t rows,
                  std::size_t cols) {
  for (std::size_t i = 0; i < rows; ++i) {
    for (std::size_t j = 0; j < cols; ++j) x[i * cols + j] += bias[j];
  }
}

void column_sums(std::span<const double> x, std::span<double> out, std::size_t rows,
                 std::size_t cols) {
  for (std::size_t j = 0; j < cols; ++j) column_sum(x.data(), out.data(), rows, cols, j);
}

}  // namespace serial

namespace parallel {

void matmul(std::span<const double> a, std::span<const double> b, std::span<double> c,
            GemmDims d) {
  const auto m = static_cast<std::int64_t>(d.m);
#pragma omp parallel for schedule(static) if (d.m * d.k * d.n >= kParallelWork)
  for (std::int64_t i = 0; i < m; ++i) {
    matmul_row(a.data(), b.data(), c.data(), d, static_cast<std::size_t>(i));
  }
}

void matmul_at_b(std::span<const double> a, std::span<const double> b, std::span<double> c,
                 GemmDims d) {
  const auto k = static_cast<std::int64_t>(d.k);
#pragma omp parallel for schedule(static) if (d.m * d.k * d.n >= kParallelWork)
  for (std::int64_t p = 0; p < k; ++p) {
    matmul_at_b_row(a.data(), b.data(), c.data(), d, static_cast<std::size_t>(p));
  }
}

void matmul_a_bt(std::span<const double> a, std::span<const double> b, std::span<double> c,
                 GemmDims d) {
  const auto m = static_cast<std::int64_t>(d.m);
#pragma omp parallel for schedule(static) if (d.m * d.k * d.n >= kParallelWork)
  for (std::int64_t i = 0; i < m; ++i) {
    matmul_a_bt_row(a.data(), b.data(), c.data(), d, static_cast<std::size_t>(i));
  }
}

void add_row_bias(std::span<double> x, std::span<const double> bias, std::size_t rows,
                  std::size_t cols) {
  const auto r = static_cast<std::int64_t>(rows);
#pragma omp parallel for schedule(static) if (rows * cols >= kParallelWork)
  for (std::int64_t i = 0; i < r; ++i) {
    double* row = x.data() + static_cast<std::size_t>(i) * cols;
    for (std::size_t j = 0; j < cols; ++j) row[j] += bias[j];
  }
}

void column_sums(std::span<const double> x, std::span<double> out, std::size_t rows,
                 std::size_t cols) {
  const auto c = static_cast<std::int64_t>(cols);
#pragma omp parallel for schedule(static) if (rows * cols >= kParallelWork)
  for (std::int64_t j = 0; j < c; ++j) {
    column_sum(x.data(), out.data(), rows, cols, static_cast<std::size_t>(j));
  }
}

}  // namespace parallel

void matmul(std::span<const double> a, std::span<const double> b, std::span<double> c,
            GemmDims d) {
  backend() == Backend::parallel ? parallel::matmul(a, b, c, d) : serial::matmul(a, b, c, d);
}

void matmul_at_b(std::span<const double> a, std::span<const double> b, std::span<double> c,
                 GemmDims d) {
  backend() == Backend::parallel ? parallel::matmul_at_b(a, b, c, d)
                                 : serial::matmul_at_b(a, b, c, d);
}

void matmul_a_bt(std::span<const double> a, std::span<const double> b, std::span<double> c,
                 GemmDims d) {
  backend() == Backend::parallel ? parallel::matmul_a_bt(a, b, c, d)
                                 : serial::matmul_a_bt(a, b, c, d);
}

void add_row_bias(std::span<double> x, std::span<const double> bias, std::size_t rows,
                  std::size_t cols) {
  backend() == Backend::parallel ? parallel::add_row_bias(x, bias, rows, cols)
                                 : serial::add_row_bias(x, bias, rows, cols);
}

void column_sums(std::span<const double> x, std::span<double> out, std::size_t rows,
                 std::size_t cols) {
  backend() == Backend::parallel ? parallel::column_sums(x, out, rows, cols)
                                 : serial::column_sums(x, out, rows, cols);
}

}  // namespace ssvfnas::kernels
