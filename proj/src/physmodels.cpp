#include "dflearn/physmodels.hpp"

#include <cmath>
#include <stdexcept>

#include "dflearn/linalg.hpp"

namespace dflearn::physmodels {

void WaveguideParams::validate() const {
    if (gamma <= 0.0) throw std::invalid_argument("WaveguideParams: gamma must be positive");
    if (atoms < 1) throw std::invalid_argument("WaveguideParams: need at least one atom");
    if (atoms > 10) throw std::invalid_argument("WaveguideParams: chain too long");
}

namespace {

// Single-site operator embedded at site `site` (0-based, leftmost factor).
Matrix embed_site(const Matrix& op, int site, int atoms) {
    Matrix out = Matrix::Identity(1, 1);
    for (int s = 0; s < atoms; ++s)
        out = linalg::kron(out, s == site ? op : Matrix::Identity(2, 2));
    return out;
}

}  // namespace

generator::OperatorPair waveguide_operators(const WaveguideParams& params) {
    params.validate();
    const int a = params.atoms;
    const int n = 1 << a;
    Matrix sigma_minus(2, 2), sigma_plus(2, 2);
    sigma_minus << 0, 1, 0, 0;  // |excited> -> |ground>
    sigma_plus << 0, 0, 1, 0;

    std::vector<Matrix> lower(a), raise(a);
    for (int j = 0; j < a; ++j) {
        lower[j] = embed_site(sigma_minus, j, a);
        raise[j] = embed_site(sigma_plus, j, a);
    }

    const Complex phase = std::exp(Complex(0.0, -params.theta));
    Matrix h = Matrix::Zero(n, n);
    for (int i = 0; i < a; ++i)
        for (int j = 0; j < a; ++j) {
            const double coupling = std::sinh(params.r * std::abs(i - j) / 2.0);
            if (coupling == 0.0) continue;
            h += (params.gamma / 2.0) * coupling *
                 (phase * raise[j] * raise[i] + std::conj(phase) * lower[j] * lower[i]);
        }

    const double root_gamma = std::sqrt(params.gamma);
    Matrix l_right = Matrix::Zero(n, n);
    Matrix l_left = Matrix::Zero(n, n);
    for (int j = 0; j < a; ++j) {
        const double r_right = params.r * j / 2.0;            // site index j+1 in 1-based terms
        const double r_left = params.r * (a - 1 - j) / 2.0;
        l_right += root_gamma * (std::cosh(r_right) * lower[j] -
                                 Complex(0.0, 1.0) * phase * std::sinh(r_right) * raise[j]);
        l_left += root_gamma * (std::cosh(r_left) * lower[j] -
                                Complex(0.0, 1.0) * phase * std::sinh(r_left) * raise[j]);
    }
    return generator::OperatorPair{h, {l_right, l_left}};
}

generator::GkslModel random_structured_model(const algebra::AlgebraStructure& structure,
                                             int lindblad_count, double scale,
                                             rng::Engine& eng) {
    structure.validate();
    if (!structure.unital())
        throw std::invalid_argument("random_structured_model: structure must be unital");
    if (lindblad_count < 1)
        throw std::invalid_argument("random_structured_model: lindblad count must be positive");
    generator::GkslModel m;
    m.structure = structure;
    m.generator = rng::random_hermitian(structure.dim(), scale, eng);
    m.betas.resize(lindblad_count);
    for (auto& row : m.betas)
        for (const auto& [nk, mk] : structure.blocks)
            row.push_back(scale * rng::gaussian_complex(mk, mk, eng));
    for (const auto& [nk, mk] : structure.blocks) {
        m.kappas.push_back(scale * rng::gaussian_real(nk, eng));
        m.mus.push_back(scale * rng::gaussian_real(mk, eng));
    }
    m.validate();
    return m;
}

}  // namespace dflearn::physmodels
