#pragma once

#include "cellfate/kernels.hpp"
#include "cellfate/rng.hpp"

namespace cellfate::testing_support {

// A symmetric kernel drawn across all families.
inline PartitionKernel random_kernel(Rng& rng, bool allow_equal = true) {
  const int n = allow_equal ? 5 : 4;
  switch (static_cast<int>(rng.uniform() * n)) {
    case 0: return PartitionKernel::uniform();
    case 1: return PartitionKernel::deterministic(0.5 * rng.uniform());
    case 2: return PartitionKernel::beta(-0.95 + 15.0 * rng.uniform());
    case 3: {
      const double w = rng.uniform();
      return PartitionKernel::points({{0.5 * rng.uniform(), 0.5 * w}, {0.5 * rng.uniform(), 0.5 * (1.0 - w)}});
    }
    default: return PartitionKernel::equal();
  }
}

}  // namespace cellfate::testing_support
