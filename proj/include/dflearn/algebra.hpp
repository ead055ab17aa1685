#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "dflearn/types.hpp"

namespace dflearn::algebra {

// Block structure of a *-subalgebra of n x n matrices, up to a change of
// basis: a zero corner of size n0 plus factors C^{n_k x n_k} (x) I_{m_k}.
struct AlgebraStructure {
    int n0 = 0;
    std::vector<std::pair<int, int>> blocks;  // (n_k, m_k), all positive

    int dim() const;               // total Hilbert space dimension n
    int block_count() const;       // K
    int linear_dimension() const;  // sum of n_k^2
    bool unital() const { return n0 == 0; }

    // Blocks sorted in descending (n_k, m_k) order; the representative used
    // when structures are compared up to block permutation.
    AlgebraStructure canonical() const;

    std::string to_string() const;

    bool operator==(const AlgebraStructure& other) const = default;
    bool operator<(const AlgebraStructure& other) const;

    void validate() const;  // throws std::invalid_argument
};

void to_json(nlohmann::json& j, const AlgebraStructure& s);
void from_json(const nlohmann::json& j, AlgebraStructure& s);

// A structure together with the unitary that rotates the canonical block
// layout into the working basis.
struct AlgebraBasis {
    AlgebraStructure structure;
    Matrix unitary;  // n x n

    static AlgebraBasis canonical(const AlgebraStructure& s);  // identity unitary
    void validate() const;
};

// Element X = U (0 (+) sum_k X_k (x) I_{m_k}) U^dag given by its factors.
struct AlgebraElement {
    AlgebraBasis basis;
    std::vector<Matrix> block_matrices;  // X_k, shape n_k x n_k
};

Matrix assemble_element(const AlgebraElement& e);

// Isometries P_k mapping the working basis onto the k-th factor
// C^{n_k} (x) C^{m_k}; shape (n_k m_k) x n.  P_k = [0 I 0] U^dag.
std::vector<Matrix> block_projectors(const AlgebraBasis& b);

// Projector rows for the zero corner, shape n0 x n.
Matrix zero_block_rows(const AlgebraBasis& b);

// Orthonormal spanning set of the algebra (matrix units of each factor),
// returned as n x n matrices in the working basis.
std::vector<Matrix> spanning_set(const AlgebraBasis& b);

// Number of linearly independent elements shared by two algebras given in
// explicit bases; used to flag near-trivial intersections.
int intersection_dimension(const AlgebraBasis& a, const AlgebraBasis& b, double tol = 1e-9);

// Ordered / canonical enumeration of block structures of total dimension n.
// With allow_n0, structures with a zero corner (n0 >= 1, n0 < n) are
// included as well.
std::vector<AlgebraStructure> enumerate_structures(int n, bool up_to_permutation,
                                                   bool allow_n0 = false);

// Certificate for an embedding of `sub` into `super`: a nonnegative integer
// matrix a with  n^super_k = sum_l a_{kl} n^sub_l  for every super block and
// m^sub_l = sum_k a_{kl} m^super_k  for every sub block.
struct EmbeddingWitness {
    IntMatrix multiplicities;  // block_count(super) x block_count(sub)
};

// Decides whether every element of a `sub`-structured algebra can be written
// inside a `super`-structured one (both unital, same total dimension).
// Returns a witness if so.  Deterministic: the lexicographically first
// witness in row-major cell order is produced.
std::optional<EmbeddingWitness> is_embedded(const AlgebraStructure& sub,
                                            const AlgebraStructure& super);

// Embedding partial order over a fixed set of structures, transitively
// reduced.  Edges are stored as (sub index, super index) pairs.
struct HierarchyDag {
    std::vector<AlgebraStructure> nodes;
    std::vector<std::pair<int, int>> edges;

    // Nodes ordered from the simplest model class (largest algebra) to the
    // most expressive one; ties broken by the structure ordering.
    std::vector<int> topological_order() const;

    // Graphviz rendering; arrows run in the direction of growing model
    // expressiveness, i.e. from super-algebra towards sub-algebra.
    std::string to_dot() const;
};

HierarchyDag hierarchy_dag(const std::vector<AlgebraStructure>& structures);

void to_json(nlohmann::json& j, const HierarchyDag& dag);

}  // namespace dflearn::algebra
