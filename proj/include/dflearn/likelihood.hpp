#pragma once

#include <vector>

#include "dflearn/dynamics.hpp"
#include "dflearn/generator.hpp"
#include "dflearn/types.hpp"

namespace dflearn::likelihood {

// Flat real parameterisation of a structured model.  Layout (version 1):
//   [G diagonal (n)] [G upper triangle, (Re, Im) per a < b column-major]
//   [betas, j outer, block k inner, row-major (Re, Im) per entry]
//   [kappa diagonals] [mu diagonals]
struct ParameterLayout {
    algebra::AlgebraStructure structure;
    int lindblad_count = 0;

    static constexpr int kLayoutVersion = 1;

    int dim() const { return structure.dim(); }
    int generator_size() const;
    int beta_size() const;
    int kappa_size() const;
    int mu_size() const;
    int total_size() const;
    void validate() const;

    bool operator==(const ParameterLayout& other) const = default;
};

struct ParameterVector {
    ParameterLayout layout;
    RealVector values;

    void validate() const;
};

ParameterVector pack(const generator::GkslModel& m);
generator::GkslModel unpack(const ParameterVector& p);

struct LikelihoodValue {
    double log_probability = 0.0;  // sum_j ln q_j
    double per_step = 0.0;         // log_probability / N
    std::vector<double> step_terms;
    int clamped_steps = 0;  // outcomes hitting the probability floor
};

LikelihoodValue log_likelihood(const ParameterVector& params,
                               const dynamics::MeasurementChain& chain,
                               const std::vector<dynamics::Instrument>& instruments,
                               double tau);

// Mean over the batch of per-chain normalised log likelihoods F/N.  An empty
// batch list means the whole dataset.
double batch_log_likelihood(const ParameterVector& params, const dynamics::Dataset& data,
                            const std::vector<int>& batch = {});

struct GradientResult {
    double value = 0.0;      // batch objective
    RealVector gradient;     // same layout as the parameter vector
    int clamped_steps = 0;
};

// Analytic gradient of batch_log_likelihood via reverse accumulation through
// the measurement recursion, the propagator exponential and the structured
// operator assembly.  Throws std::runtime_error naming the first offending
// index if any component is non-finite.
GradientResult gradient(const ParameterVector& params, const dynamics::Dataset& data,
                        const std::vector<int>& batch = {});

}  // namespace dflearn::likelihood
