#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "dflearn/algebra.hpp"
#include "dflearn/generator.hpp"
#include "dflearn/rng.hpp"
#include "dflearn/types.hpp"

namespace dflearn::dynamics {

// Projective measurement compatible with an accessible algebra: projectors
// onto algebra elements, plus the complement of the accessible support as an
// explicit no-click outcome when the structure has a zero corner.
struct Instrument {
    std::vector<Matrix> projectors;
    bool includes_complement = false;

    int outcomes() const { return static_cast<int>(projectors.size()); }
    int dim() const { return projectors.empty() ? 0 : static_cast<int>(projectors[0].rows()); }

    // Throws unless the projectors are Hermitian idempotents resolving the
    // identity.
    void validate(double tol = 1e-9) const;
};

enum class Granularity { kFine, kCoarse };

// Draws a random instrument that measures the accessible algebra: per block
// a Haar-random orthonormal frame on the n_k leg, with rank-m_k projectors
// (fine) or a random two-set coarse graining of those (coarse).
Instrument random_instrument(const algebra::AlgebraBasis& accessible, rng::Engine& eng,
                             Granularity granularity = Granularity::kFine);

struct InitialState {
    bool maximally_mixed = true;
    Matrix sigma;  // used when not maximally mixed

    static InitialState mixed() { return InitialState{}; }
    static InitialState of(Matrix rho);
    Matrix density(int n) const;
};

struct MeasurementChain {
    std::vector<int> instrument_ids;  // one per step
    std::vector<int> outcomes;        // recorded outcome index per step
    InitialState initial_state;

    int length() const { return static_cast<int>(outcomes.size()); }
};

struct Dataset {
    int n = 0;
    double tau = 0.0;
    algebra::AlgebraStructure accessible_structure;
    Matrix accessible_unitary;
    std::vector<Instrument> instruments;
    std::vector<MeasurementChain> chains;
    nlohmann::json generator_metadata;

    int size() const { return static_cast<int>(chains.size()); }
    void validate() const;
};

class ZeroProbabilityBranch : public std::runtime_error {
  public:
    explicit ZeroProbabilityBranch(const std::string& what) : std::runtime_error(what) {}
};

// Born probability of outcome E after one propagation step.
double conditional_probability(const Matrix& e, const generator::Propagator& p,
                               const Matrix& rho);

// Renormalised post-measurement state E Phi(rho) E / q; throws
// ZeroProbabilityBranch when q falls below the probability floor.
Matrix conditioned_state(const Matrix& e, const generator::Propagator& p, const Matrix& rho);

// Probability of a full outcome record, computed by the stepwise recursion.
double sequence_probability(const MeasurementChain& chain,
                            const std::vector<Instrument>& instruments,
                            const generator::Propagator& p);

// Samples one chain of N outcomes; step j measures with
// instruments[step_instruments[j]].
MeasurementChain sample_chain(const generator::Propagator& p,
                              const std::vector<Instrument>& instruments,
                              const std::vector<int>& step_instruments,
                              const InitialState& initial, rng::Engine& eng);

// Convenience overload cycling through the instrument table.
MeasurementChain sample_chain(const generator::Propagator& p,
                              const std::vector<Instrument>& instruments,
                              const InitialState& initial, int length, rng::Engine& eng);

// S chains of N steps with fresh random instruments per step, sampled from
// the dynamics of `ops`.  Chains use rng streams derived from (seed, chain)
// and are reproducible independently of processing order.
Dataset generate_dataset(const generator::OperatorPair& ops,
                         const algebra::AlgebraBasis& accessible, int chains, int length,
                         double tau, std::uint64_t seed,
                         Granularity granularity = Granularity::kFine);

// Same, recording the generating structured model in the metadata.
Dataset generate_dataset(const generator::GkslModel& model,
                         const algebra::AlgebraBasis& accessible, int chains, int length,
                         double tau, std::uint64_t seed,
                         Granularity granularity = Granularity::kFine);

}  // namespace dflearn::dynamics
