#pragma once

#include <cstdint>
#include <random>

#include "dflearn/types.hpp"

namespace dflearn::rng {

using Engine = std::mt19937_64;

// Derives an independent stream seed from a base seed and a stream index.
// Deterministic; used so that chains, restarts and scan rows can be
// processed in any order (or in parallel) with identical results.
std::uint64_t derive(std::uint64_t seed, std::uint64_t stream);

Engine make_engine(std::uint64_t seed, std::uint64_t stream = 0);

// Matrix with entries x + iy, x and y independent N(0, 1).
Matrix gaussian_complex(int rows, int cols, Engine& eng);

RealVector gaussian_real(int len, Engine& eng);

// Haar-distributed unitary: QR of a complex Ginibre matrix with the phases
// of the R diagonal absorbed into Q.
Matrix haar_unitary(int n, Engine& eng);

// (A + A^dag)/2 with A complex Gaussian of entry std `scale`.
Matrix random_hermitian(int n, double scale, Engine& eng);

// Random full-rank density matrix G G^dag / tr(G G^dag).
Matrix random_density(int n, Engine& eng);

}  // namespace dflearn::rng
