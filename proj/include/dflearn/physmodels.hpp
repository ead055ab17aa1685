#pragma once

#include "dflearn/generator.hpp"
#include "dflearn/rng.hpp"

namespace dflearn::physmodels {

// Chain of two-level emitters coupled to a unidirectional pair of squeezed
// waveguide modes; r is the squeezing amplitude, theta the squeezing angle,
// gamma the emission rate.  r = 0 reduces to plain collective decay with a
// vanishing Hamiltonian.
struct WaveguideParams {
    double gamma = 1.0;
    double r = 0.5;
    double theta = 0.0;
    int atoms = 3;

    void validate() const;
};

// Hamiltonian and the two directional collective Lindblad operators on the
// 2^atoms dimensional chain space.
generator::OperatorPair waveguide_operators(const WaveguideParams& params);

// Structured model with Gaussian parameters, std `scale` per real component.
generator::GkslModel random_structured_model(const algebra::AlgebraStructure& structure,
                                             int lindblad_count, double scale,
                                             rng::Engine& eng);

}  // namespace dflearn::physmodels
