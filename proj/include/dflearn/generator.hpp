#pragma once

#include <cstdint>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "dflearn/algebra.hpp"
#include "dflearn/types.hpp"

namespace dflearn::generator {

// Continuous parameters of a structured GKSL generator whose dynamics leaves
// a prescribed block algebra decoherence free.  The basis unitary is
// U = exp(i G); per block k the Lindblad factors are beta_{j,k} and the
// Hamiltonian splits into diagonal factors kappa_k (on the n_k leg) and
// mu_k (on the m_k leg).
struct GkslModel {
    algebra::AlgebraStructure structure;  // unital
    Matrix generator;                     // Hermitian n x n, U = exp(iG)
    std::vector<std::vector<Matrix>> betas;  // [J][K], m_k x m_k
    std::vector<RealVector> kappas;          // [K], length n_k
    std::vector<RealVector> mus;             // [K], length m_k

    int dim() const { return structure.dim(); }
    int lindblad_count() const { return static_cast<int>(betas.size()); }
    void validate() const;

    // Smallest Lindblad count that can reach every dissipator the structure
    // supports blockwise: max_k m_k^2.
    static int default_lindblad_count(const algebra::AlgebraStructure& s);
};

void to_json(nlohmann::json& j, const GkslModel& m);
void from_json(const nlohmann::json& j, GkslModel& m);

struct OperatorPair {
    Matrix hamiltonian;
    std::vector<Matrix> lindblads;
};

Matrix model_unitary(const GkslModel& m);  // exp(iG)
algebra::AlgebraBasis model_basis(const GkslModel& m);

// Hamiltonian and Lindblad operators in the working basis.
OperatorPair assemble_operators(const GkslModel& m);

// Column-stacking superoperator matrix of the GKSL generator
//   L(rho) = -i[H, rho] + sum_j (L_j rho L_j^dag - {L_j^dag L_j, rho}/2).
Matrix gksl_superoperator(const OperatorPair& ops);

struct Propagator {
    int dim = 0;
    double tau = 0.0;
    Matrix matrix;          // exp(L tau), n^2 x n^2
    Matrix adjoint_matrix;  // Heisenberg picture, conjugate transpose
};

Propagator make_propagator(const Matrix& superop, double tau);
Propagator make_propagator(const GkslModel& m, double tau);

Matrix apply(const Propagator& p, const Matrix& rho);
Matrix apply_adjoint(const Propagator& p, const Matrix& x);

struct CptpReport {
    double trace_deviation = 0.0;      // max |tr Phi(rho) - tr rho| over probe states
    double choi_min_eigenvalue = 0.0;  // most negative eigenvalue of the Choi matrix
    bool pass = false;
};

// Trace preservation is probed on random densities and on the vectorised
// identity; complete positivity through the Choi spectrum.
CptpReport verify_cptp(const Propagator& p, double trace_tol = 1e-9,
                       double choi_tol = 1e-8, int probes = 8, std::uint64_t seed = 7);

struct DecoherenceFreeReport {
    double max_multiplicative_residual = 0.0;  // Phi*_t(X^dag X) vs Phi*_t(X)^dag Phi*_t(X)
    double max_unitary_residual = 0.0;         // Phi*_t(X) vs e^{iHt} X e^{-iHt}
    bool pass = false;
};

// Checks that the model's algebra evolves multiplicatively under the
// Heisenberg propagator at the given times, and that the evolution agrees
// with conjugation by the effective Hamiltonian.  Residuals are measured on
// random algebra elements.
DecoherenceFreeReport verify_decoherence_free(const GkslModel& m,
                                              const std::vector<double>& times,
                                              int samples = 6, double tol = 1e-8,
                                              std::uint64_t seed = 11);

// Restriction of the Hamiltonian that generates the dynamics inside the
// algebra: only the kappa factors survive.
Matrix effective_hamiltonian(const GkslModel& m);

struct EmbeddedModel {
    GkslModel model;
    // Worst deviation of the super model's kappa factors from the additive
    // form the sub structure requires; zero means the translation is exact.
    double kappa_defect = 0.0;
};

// Re-expresses a model over `super_structure` as a model over the embedded
// sub structure, using the witness multiplicities.  Exact (same propagator)
// whenever each kappa slice of the super model is constant-shifted from a
// common sub kappa; otherwise kappa factors are matched in least squares and
// kappa_defect reports the residual.
EmbeddedModel embed_parameters(const GkslModel& super_model,
                               const algebra::AlgebraStructure& sub_structure,
                               const algebra::EmbeddingWitness& witness);

}  // namespace dflearn::generator
