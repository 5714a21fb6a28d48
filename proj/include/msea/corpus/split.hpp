#pragma once

#include <cmath>
#include <cstdint>
#include <numeric>
#include <random>
#include <string>
#include <unordered_set>
#include <vector>

#include "msea/corpus/record.hpp"
#include "msea/error.hpp"

namespace msea::corpus {

struct DatasetSplit {
  std::vector<PatentRecord> train;
  std::vector<PatentRecord> test;
  std::vector<PatentRecord> validation;
  std::uint64_t seed = 0;
};

/// Fisher-Yates over indices driven directly by mt19937_64 output, so the order is
/// identical across standard libraries.
inline std::vector<std::size_t> seeded_permutation(std::size_t n, std::uint64_t seed) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::mt19937_64 rng(seed);
  for (std::size_t i = n; i > 1; --i) {
    const auto j = static_cast<std::size_t>(rng() % i);
    std::swap(idx[i - 1], idx[j]);
  }
  return idx;
}

/// Deterministic 8:1:1 partition (test and validation each round(n/10)).
inline DatasetSplit split_dataset(const std::vector<PatentRecord>& records, std::uint64_t seed) {
  if (records.size() < 10) {
    throw DataError("need at least 10 records to split 8:1:1, got " + std::to_string(records.size()));
  }
  std::unordered_set<std::string> seen;
  for (const auto& r : records) {
    if (!seen.insert(r.publication_number).second) {
      throw DataError("duplicate publication number " + r.publication_number + "; splits must be disjoint");
    }
  }
  const std::size_t n = records.size();
  const auto tenth = static_cast<std::size_t>(std::lround(static_cast<double>(n) / 10.0));
  const std::size_t n_train = n - 2 * tenth;
  DatasetSplit out;
  out.seed = seed;
  const auto order = seeded_permutation(n, seed);
  for (std::size_t k = 0; k < n; ++k) {
    const auto& r = records[order[k]];
    if (k < n_train) {
      out.train.push_back(r);
    } else if (k < n_train + tenth) {
      out.test.push_back(r);
    } else {
      out.validation.push_back(r);
    }
  }
  return out;
}

}  // namespace msea::corpus
