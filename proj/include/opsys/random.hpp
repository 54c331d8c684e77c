#pragma once

#include <cstdint>
#include <random>

#include "opsys/linalg.hpp"

namespace opsys {

using Rng = std::mt19937_64;

// Independent stream for sample i of a run seeded with master
std::uint64_t derive_seed(std::uint64_t master, std::uint64_t i);

double uniform(Rng& rng, double lo = 0.0, double hi = 1.0);
CMat random_complex(Rng& rng, int rows, int cols);
CMat random_hermitian(Rng& rng, int d);
// R R^* for an r-column Gaussian R
CMat random_psd(Rng& rng, int d, int rank = -1);
CMat haar_unitary(Rng& rng, int d);
CVec random_unit_vector(Rng& rng, int d);

}  // namespace opsys
