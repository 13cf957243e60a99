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

#ifndef SSVFNAS_DATA_HPP
#define SSVFNAS_DATA_HPP

// Synthetic vertically partitioned populations, overlap control and stratified splits.

#include <array>
#include <cstdint>
#include <filesystem>
#include <vector>

#include "json.hpp"
#include "ssvfnas/tensor.hpp"

namespace ssvfnas::data {

/// One fixed population. Feature block b (1-based) is generated from its own stream, so the
/// rows of block b do not depend on how many blocks are requested.
struct PopulationSpec {
  std::size_t samples = 1000;
  std::size_t classes = 12;
  std::vector<std::size_t> block_dims{8, 8, 8, 8, 8, 8};
  double separation = 2.6;
  double noise = 1.0;

  void validate() const;
  nlohmann::json to_json() const;
  static PopulationSpec from_json(const nlohmann::json& j);
};

struct Splits {
  std::vector<std::size_t> train;
  std::vector<std::size_t> val;
  std::vector<std::size_t> test;
};

struct VerticalDataset {
  std::vector<Tensor> shards;  // party k at index k-1, all N rows
  std::vector<int> labels;     // held by party K; -1 where the sample is not aligned
  std::size_t classes = 0;
  std::vector<std::size_t> aligned;
  std::vector<std::size_t> surplus;
  Splits splits;

  std::size_t parties() const noexcept { return shards.size(); }
  std::size_t samples() const { return shards.empty() ? 0 : shards.front().rows(); }
  /// Rows a party may use for self-supervision: every row except the test split.
  std::vector<std::size_t> pretrain_rows() const;
};

/// Parties 1..K receive blocks 1..K. All samples start aligned and labeled.
VerticalDataset generate_blobs(std::size_t parties, const PopulationSpec& spec,
                               std::uint64_t seed);

/// Keeps ceil(fraction * N) samples aligned and labeled, the rest become surplus.
void set_overlap(VerticalDataset& ds, double fraction, std::uint64_t seed);

/// Sizes by largest remainder. Each cell is the floor or ceiling of its exact share.
std::vector<std::size_t> apportion(std::size_t total, const std::vector<double>& ratios);

/// Disjoint, exhaustive over aligned samples, stratified by class.
Splits split(const VerticalDataset& ds, const std::array<double, 3>& ratios, std::uint64_t seed);

/// Directory layout: manifest.json, party_<k>.bin per party, labels.bin for party K.
void save(const VerticalDataset& ds, const std::filesystem::path& dir, const nlohmann::json& meta);
VerticalDataset load(const std::filesystem::path& dir);

}  // namespace ssvfnas::data

#endif  // SSVFNAS_DATA_HPP
