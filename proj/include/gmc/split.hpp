#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <vector>

#include "gmc/datasets.hpp"
#include "gmc/random.hpp"

namespace gmc {

struct SplitSpec {
  double train_fraction = 0.6;
  double val_fraction = 0.2;
  double test_fraction = 0.2;
  std::uint64_t seed = 0;

  void validate() const {
    detail::require(train_fraction > 0.0 && val_fraction > 0.0 && test_fraction > 0.0,
                    "SplitSpec: fractions must be positive");
    detail::require(std::abs(train_fraction + val_fraction + test_fraction - 1.0) <= 1e-12,
                    "SplitSpec: fractions must sum to 1");
  }
};

struct SplitResult {
  Dataset train, val, test;
  std::vector<std::size_t> train_indices, val_indices, test_indices;
};

/// Per-class share of `count` samples across the three splits: largest
/// remainder rounding, then every split gets at least one sample.
inline std::array<std::size_t, 3> stratum_sizes(std::size_t count, const SplitSpec& spec) {
  const std::array<double, 3> fractions{spec.train_fraction, spec.val_fraction, spec.test_fraction};
  std::array<std::size_t, 3> sizes{};
  std::array<double, 3> remainder{};
  std::size_t assigned = 0;
  for (std::size_t s = 0; s < 3; ++s) {
    const double exact = fractions[s] * static_cast<double>(count);
    sizes[s] = static_cast<std::size_t>(std::floor(exact));
    remainder[s] = exact - static_cast<double>(sizes[s]);
    assigned += sizes[s];
  }
  while (assigned < count) {
    const auto s = static_cast<std::size_t>(std::max_element(remainder.begin(), remainder.end()) - remainder.begin());
    ++sizes[s];
    remainder[s] = -1.0;
    ++assigned;
  }
  for (std::size_t s = 0; s < 3; ++s) {
    if (sizes[s] == 0) {
      const auto donor = static_cast<std::size_t>(std::max_element(sizes.begin(), sizes.end()) - sizes.begin());
      --sizes[donor];
      ++sizes[s];
    }
  }
  return sizes;
}

inline SplitResult stratified_split(const Dataset& ds, const SplitSpec& spec) {
  spec.validate();
  std::vector<std::vector<std::size_t>> by_class(ds.class_count);
  for (std::size_t i = 0; i < ds.size(); ++i) by_class[ds.labels[i]].push_back(i);
  for (std::size_t c = 0; c < ds.class_count; ++c)
    detail::require(by_class[c].size() >= 3, "stratified_split: every class needs at least 3 samples");

  SplitResult out;
  Rng rng = make_rng(spec.seed, 0x5011);
  for (auto& members : by_class) {
    std::shuffle(members.begin(), members.end(), rng);
    const auto sizes = stratum_sizes(members.size(), spec);
    auto it = members.begin();
    out.train_indices.insert(out.train_indices.end(), it, it + static_cast<std::ptrdiff_t>(sizes[0]));
    it += static_cast<std::ptrdiff_t>(sizes[0]);
    out.val_indices.insert(out.val_indices.end(), it, it + static_cast<std::ptrdiff_t>(sizes[1]));
    it += static_cast<std::ptrdiff_t>(sizes[1]);
    out.test_indices.insert(out.test_indices.end(), it, members.end());
  }
  std::sort(out.train_indices.begin(), out.train_indices.end());
  std::sort(out.val_indices.begin(), out.val_indices.end());
  std::sort(out.test_indices.begin(), out.test_indices.end());
  out.train = subset(ds, out.train_indices);
  out.val = subset(ds, out.val_indices);
  out.test = subset(ds, out.test_indices);
  return out;
}

}  // namespace gmc
