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

#include "ssvfnas/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <set>
#include <stdexcept>

#include "ssvfnas/rng.hpp"

namespace ssvfnas::data {

namespace {

enum StreamTag : std::uint64_t { kLabels = 1, kCenters = 2, kNoise = 3, kOverlap = 4, kSplit = 5 };

}  // namespace

void PopulationSpec::validate() const {
  if (samples == 0) throw std::invalid_argument("population needs at least one sample");
  if (classes < 2) throw std::invalid_argument("population needs at least 2 classes");
  if (block_dims.empty()) throw std::invalid_argument("population needs at least one block");
  for (std::size_t d : block_dims) {
    if (d == 0) throw std::invalid_argument("degenerate feature block of width 0");
  }
  if (!(separation >= 0.0) || !(noise >= 0.0)) {
    throw std::invalid_argument("separation and noise must be >= 0");
  }
}

nlohmann::json PopulationSpec::to_json() const {
  return {{"samples", samples},
          {"classes", classes},
          {"block_dims", block_dims},
          {"separation", separation},
          {"noise", noise}};
}

PopulationSpec PopulationSpec::from_json(const nlohmann::json& j) {
  PopulationSpec s;
  s.samples = j.value("samples", s.samples);
  s.classes = j.value("classes", s.classes);
  s.block_dims = j.value("block_dims", s.block_dims);
  s.separation = j.value("separation", s.separation);
  s.noise = j.value("noise", s.noise);
  s.validate();
  return s;
}

std::vector<std::size_t> VerticalDataset::pretrain_rows() const {
  std::set<std::size_t> test(splits.test.begin(), splits.test.end());
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < samples(); ++i) {
    if (!test.count(i)) out.push_back(i);
  }
  return out;
}

VerticalDataset generate_blobs(std::size_t parties, const PopulationSpec& spec,
                               std::uint64_t seed) {
  spec.validate();
  if (parties < 1 || parties > spec.block_dims.size()) {
    throw std::invalid_argument("party count must lie in [1, " +
                                std::to_string(spec.block_dims.size()) + "]");
  }
  const std::size_t n = spec.samples;
  VerticalDataset ds;
  ds.classes = spec.classes;

  // Balanced labels in a seeded order.
  ds.labels.resize(n);
  for (std::size_t i = 0; i < n; ++i) ds.labels[i] = static_cast<int>(i % spec.classes);
  auto label_rng = make_rng(seed, {kLabels});
  std::shuffle(ds.labels.begin(), ds.labels.end(), label_rng);

  for (std::size_t k = 1; k <= parties; ++k) {
    const std::size_t d = spec.block_dims[k - 1];
    // Per-coordinate center variance separation^2 / d: every block carries equal center energy.
    auto center_rng = make_rng(seed, {kCenters, k});
    std::normal_distribution<double> center(0.0, spec.separation / std::sqrt(static_cast<double>(d)));
    Tensor centers(Shape{spec.classes, d});
    for (double& v : centers.data()) v = center(center_rng);

    auto noise_rng = make_rng(seed, {kNoise, k});
    std::normal_distribution<double> noise(0.0, 1.0);
    Tensor x(Shape{n, d});
    for (std::size_t i = 0; i < n; ++i) {
      const auto c = static_cast<std::size_t>(ds.labels[i]);
      for (std::size_t j = 0; j < d; ++j) x.at(i, j) = centers.at(c, j) + spec.noise * noise(noise_rng);
    }
    ds.shards.push_back(std::move(x));
  }
  ds.aligned.resize(n);
  std::iota(ds.aligned.begin(), ds.aligned.end(), std::size_t{0});
  return ds;
}

void set_overlap(VerticalDataset& ds, double fraction, std::uint64_t seed) {
  if (!(fraction > 0.0 && fraction <= 1.0)) {
    throw std::invalid_argument("overlap fraction must lie in (0, 1]");
  }
  const std::size_t n = ds.samples();
  const auto keep = static_cast<std::size_t>(std::ceil(fraction * static_cast<double>(n) - 1e-9));
  if (keep == 0) throw std::invalid_argument("overlap retains no samples");
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  auto rng = make_rng(seed, {kOverlap});
  std::shuffle(order.begin(), order.end(), rng);
  ds.aligned.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(keep));
  ds.surplus.assign(order.begin() + static_cast<std::ptrdiff_t>(keep), order.end());
  std::sort(ds.aligned.begin(), ds.aligned.end());
  std::sort(ds.surplus.begin(), ds.surplus.end());
  for (std::size_t i : ds.surplus) ds.labels[i] = -1;
  ds.splits = {};
}

std::vector<std::size_t> apportion(std::size_t total, const std::vector<double>& ratios) {
  double sum = 0.0;
  for (double r : ratios) {
    if (!(r > 0.0)) throw std::invalid_argument("split ratios must be positive");
    sum += r;
  }
  if (std::abs(sum - 1.0) > 1e-9) throw std::invalid_argument("split ratios must sum to 1");
  std::vector<std::size_t> out(ratios.size());
  std::vector<std::pair<double, std::size_t>> rem;
  std::size_t used = 0;
  for (std::size_t s = 0; s < ratios.size(); ++s) {
    const double exact = ratios[s] * static_cast<double>(total);
    // The epsilon keeps exact products such as 0.4 * 1000 from flooring to 399.
    out[s] = static_cast<std::size_t>(std::floor(exact + 1e-9));
    rem.emplace_back(exact - static_cast<double>(out[s]), s);
    used += out[s];
  }
  std::stable_sort(rem.begin(), rem.end(), [](auto a, auto b) { return a.first > b.first; });
  for (std::size_t i = 0; used < total; ++i, ++used) ++out[rem[i].second];
  return out;
}

Splits split(const VerticalDataset& ds, const std::array<double, 3>& ratios, std::uint64_t seed) {
  const std::vector<double> r(ratios.begin(), ratios.end());
  const std::vector<std::size_t> target = apportion(ds.aligned.size(), r);

  std::vector<std::vector<std::size_t>> members(ds.classes);
  for (std::size_t i : ds.aligned) {
    const int y = ds.labels.at(i);
    if (y < 0) throw std::logic_error("aligned sample without a label");
    members.at(static_cast<std::size_t>(y)).push_back(i);
  }
  // Start every cell at its floor, then hand out the remaining units so that column totals
  // hit the targets. Rows with the most leftovers go first; each row raises distinct columns
  // with the largest outstanding need (Ryser's construction for 0/1 matrices).
  std::vector<std::array<std::size_t, 3>> cells(ds.classes);
  std::vector<std::size_t> extra(ds.classes, 0);
  std::array<long long, 3> need{};
  for (std::size_t s = 0; s < 3; ++s) need[s] = static_cast<long long>(target[s]);
  for (std::size_t c = 0; c < ds.classes; ++c) {
    const std::size_t nc = members[c].size();
    if (nc == 0) continue;
    if (nc < 3) {
      throw std::invalid_argument("class " + std::to_string(c) + " has " + std::to_string(nc) +
                                  " aligned samples, fewer than the 3 splits");
    }
    std::size_t used = 0;
    for (std::size_t s = 0; s < 3; ++s) {
      cells[c][s] = static_cast<std::size_t>(std::floor(ratios[s] * static_cast<double>(nc) + 1e-9));
      used += cells[c][s];
      need[s] -= static_cast<long long>(cells[c][s]);
    }
    extra[c] = nc - used;
  }
  std::vector<std::size_t> row_order(ds.classes);
  std::iota(row_order.begin(), row_order.end(), std::size_t{0});
  std::stable_sort(row_order.begin(), row_order.end(),
                   [&](std::size_t a, std::size_t b) { return extra[a] > extra[b]; });
  for (std::size_t c : row_order) {
    std::array<std::size_t, 3> cols{0, 1, 2};
    std::stable_sort(cols.begin(), cols.end(), [&](std::size_t a, std::size_t b) { return need[a] > need[b]; });
    for (std::size_t i = 0; i < extra[c]; ++i) {
      if (need[cols[i]] <= 0) throw std::logic_error("stratified split could not meet targets");
      ++cells[c][cols[i]];
      --need[cols[i]];
    }
  }

  Splits out;
  auto rng = make_rng(seed, {kSplit});
  for (std::size_t c = 0; c < ds.classes; ++c) {
    std::vector<std::size_t> m = members[c];
    std::shuffle(m.begin(), m.end(), rng);
    auto it = m.begin();
    for (std::size_t s = 0; s < 3; ++s) {
      auto& dst = s == 0 ? out.train : s == 1 ? out.val : out.test;
      dst.insert(dst.end(), it, it + static_cast<std::ptrdiff_t>(cells[c][s]));
      it += static_cast<std::ptrdiff_t>(cells[c][s]);
    }
  }
  std::sort(out.train.begin(), out.train.end());
  std::sort(out.val.begin(), out.val.end());
  std::sort(out.test.begin(), out.test.end());
  return out;
}

namespace {

template <typename T>
void put(std::ofstream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::ifstream& in, const std::filesystem::path& p) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!in) throw std::runtime_error("truncated file " + p.string());
  return v;
}

}  // namespace

void save(const VerticalDataset& ds, const std::filesystem::path& dir, const nlohmann::json& meta) {
  std::filesystem::create_directories(dir);
  nlohmann::json shards = nlohmann::json::array();
  for (std::size_t k = 0; k < ds.parties(); ++k) {
    const std::string name = "party_" + std::to_string(k + 1) + ".bin";
    std::ofstream out(dir / name, std::ios::binary);
    put<std::uint64_t>(out, ds.shards[k].rows());
    put<std::uint64_t>(out, ds.shards[k].cols());
    for (double v : ds.shards[k].data()) put<double>(out, v);
    if (!out) throw std::runtime_error("write failed for " + (dir / name).string());
    shards.push_back(name);
  }
  {
    std::ofstream out(dir / "labels.bin", std::ios::binary);
    put<std::uint64_t>(out, ds.labels.size());
    for (int y : ds.labels) put<std::int32_t>(out, y);
    if (!out) throw std::runtime_error("write failed for labels.bin");
  }
  nlohmann::json manifest{{"format", "ssvfnas-vertical"},
                          {"version", 1},
                          {"parties", ds.parties()},
                          {"label_party", ds.parties()},
                          {"classes", ds.classes},
                          {"samples", ds.samples()},
                          {"shards", shards},
                          {"labels", "labels.bin"},
                          {"aligned", ds.aligned},
                          {"surplus", ds.surplus},
                          {"splits",
                           {{"train", ds.splits.train},
                            {"val", ds.splits.val},
                            {"test", ds.splits.test}}},
                          {"meta", meta}};
  std::ofstream js(dir / "manifest.json");
  js << manifest.dump(1) << '\n';
  if (!js) throw std::runtime_error("write failed for manifest.json");
}

VerticalDataset load(const std::filesystem::path& dir) {
  std::ifstream js(dir / "manifest.json");
  if (!js) throw std::runtime_error("no manifest.json in " + dir.string());
  const nlohmann::json m = nlohmann::json::parse(js);
  if (m.at("format") != "ssvfnas-vertical" || m.at("version") != 1) {
    throw std::runtime_error("unsupported dataset manifest");
  }
  VerticalDataset ds;
  ds.classes = m.at("classes");
  std::size_t n = m.at("samples");
  for (const auto& name : m.at("shards")) {
    const auto p = dir / name.get<std::string>();
    std::ifstream in(p, std::ios::binary);
    if (!in) throw std::runtime_error("cannot read " + p.string());
    const auto rows = get<std::uint64_t>(in, p);
    const auto cols = get<std::uint64_t>(in, p);
    if (rows != n || cols == 0) throw std::runtime_error("bad shard header in " + p.string());
    Tensor x(Shape{rows, cols});
    for (double& v : x.data()) v = get<double>(in, p);
    ds.shards.push_back(std::move(x));
  }
  {
    const auto p = dir / m.at("labels").get<std::string>();
    std::ifstream in(p, std::ios::binary);
    if (!in) throw std::runtime_error("cannot read " + p.string());
    if (get<std::uint64_t>(in, p) != n) throw std::runtime_error("label count mismatch");
    ds.labels.resize(n);
    for (int& y : ds.labels) y = get<std::int32_t>(in, p);
  }
  ds.aligned = m.at("aligned").get<std::vector<std::size_t>>();
  ds.surplus = m.at("surplus").get<std::vector<std::size_t>>();
  const auto& s = m.at("splits");
  ds.splits = {s.at("train"), s.at("val"), s.at("test")};
  return ds;
}

}  // namespace ssvfnas::data
