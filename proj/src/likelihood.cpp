#include "dflearn/likelihood.hpp"

#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>

#include "dflearn/linalg.hpp"

namespace dflearn::likelihood {

namespace {

int sum_beta_entries(const algebra::AlgebraStructure& s) {
    int total = 0;
    for (const auto& [nk, mk] : s.blocks) total += mk * mk;
    return total;
}

}  // namespace

int ParameterLayout::generator_size() const { return dim() * dim(); }

int ParameterLayout::beta_size() const { return 2 * lindblad_count * sum_beta_entries(structure); }

int ParameterLayout::kappa_size() const {
    int total = 0;
    for (const auto& [nk, mk] : structure.blocks) total += nk;
    return total;
}

int ParameterLayout::mu_size() const {
    int total = 0;
    for (const auto& [nk, mk] : structure.blocks) total += mk;
    return total;
}

int ParameterLayout::total_size() const {
    return generator_size() + beta_size() + kappa_size() + mu_size();
}

void ParameterLayout::validate() const {
    structure.validate();
    if (!structure.unital())
        throw std::invalid_argument("ParameterLayout: structure must be unital");
    if (lindblad_count < 1)
        throw std::invalid_argument("ParameterLayout: lindblad count must be positive");
}

void ParameterVector::validate() const {
    layout.validate();
    if (values.size() != layout.total_size())
        throw std::invalid_argument("ParameterVector: value vector has wrong length");
}

ParameterVector pack(const generator::GkslModel& m) {
    m.validate();
    ParameterVector p;
    p.layout = ParameterLayout{m.structure, m.lindblad_count()};
    p.layout.validate();
    p.values = RealVector::Zero(p.layout.total_size());
    const int n = m.dim();
    int pos = 0;
    for (int a = 0; a < n; ++a) p.values(pos++) = m.generator(a, a).real();
    for (int b = 1; b < n; ++b)
        for (int a = 0; a < b; ++a) {
            p.values(pos++) = m.generator(a, b).real();
            p.values(pos++) = m.generator(a, b).imag();
        }
    for (const auto& row : m.betas)
        for (const Matrix& beta : row)
            for (Eigen::Index r = 0; r < beta.rows(); ++r)
                for (Eigen::Index c = 0; c < beta.cols(); ++c) {
                    p.values(pos++) = beta(r, c).real();
                    p.values(pos++) = beta(r, c).imag();
                }
    for (const RealVector& kappa : m.kappas)
        for (Eigen::Index i = 0; i < kappa.size(); ++i) p.values(pos++) = kappa(i);
    for (const RealVector& mu : m.mus)
        for (Eigen::Index i = 0; i < mu.size(); ++i) p.values(pos++) = mu(i);
    return p;
}

generator::GkslModel unpack(const ParameterVector& p) {
    p.validate();
    const algebra::AlgebraStructure& s = p.layout.structure;
    const int n = s.dim();
    generator::GkslModel m;
    m.structure = s;
    m.generator = Matrix::Zero(n, n);
    int pos = 0;
    for (int a = 0; a < n; ++a) m.generator(a, a) = p.values(pos++);
    for (int b = 1; b < n; ++b)
        for (int a = 0; a < b; ++a) {
            const double re = p.values(pos++);
            const double im = p.values(pos++);
            m.generator(a, b) = Complex(re, im);
            m.generator(b, a) = Complex(re, -im);
        }
    m.betas.resize(p.layout.lindblad_count);
    for (auto& row : m.betas) {
        row.reserve(s.blocks.size());
        for (const auto& [nk, mk] : s.blocks) {
            Matrix beta(mk, mk);
            for (int r = 0; r < mk; ++r)
                for (int c = 0; c < mk; ++c) {
                    const double re = p.values(pos++);
                    const double im = p.values(pos++);
                    beta(r, c) = Complex(re, im);
                }
            row.push_back(std::move(beta));
        }
    }
    for (const auto& [nk, mk] : s.blocks) {
        RealVector kappa(nk);
        for (int i = 0; i < nk; ++i) kappa(i) = p.values(pos++);
        m.kappas.push_back(std::move(kappa));
    }
    for (const auto& [nk, mk] : s.blocks) {
        RealVector mu(mk);
        for (int i = 0; i < mk; ++i) mu(i) = p.values(pos++);
        m.mus.push_back(std::move(mu));
    }
    m.validate();
    return m;
}

namespace {

// Everything about the model that is shared by all chains of a batch.
struct ModelCache {
    generator::GkslModel model;
    int n = 0;
    Matrix u;
    std::vector<Matrix> canonical_lindblads;
    Matrix canonical_hamiltonian;
    std::vector<Matrix> lindblads;
    Matrix hamiltonian;
    Matrix superop;
    generator::Propagator prop;
};

ModelCache build_cache(const ParameterVector& params, double tau) {
    ModelCache cache;
    cache.model = unpack(params);
    cache.n = cache.model.dim();
    cache.u = generator::model_unitary(cache.model);
    const algebra::AlgebraStructure& s = cache.model.structure;
    const int n = cache.n;
    for (const auto& row : cache.model.betas) {
        Matrix d = Matrix::Zero(n, n);
        int offset = 0;
        for (std::size_t k = 0; k < s.blocks.size(); ++k) {
            const auto [nk, mk] = s.blocks[k];
            d.block(offset, offset, nk * mk, nk * mk) =
                linalg::kron(Matrix::Identity(nk, nk), row[k]);
            offset += nk * mk;
        }
        cache.canonical_lindblads.push_back(d);
        cache.lindblads.push_back(cache.u * d * cache.u.adjoint());
    }
    {
        Matrix d = Matrix::Zero(n, n);
        int offset = 0;
        for (std::size_t k = 0; k < s.blocks.size(); ++k) {
            const auto [nk, mk] = s.blocks[k];
            for (int a = 0; a < nk; ++a)
                for (int t = 0; t < mk; ++t)
                    d(offset + a * mk + t, offset + a * mk + t) =
                        cache.model.kappas[k](a) + cache.model.mus[k](t);
            offset += nk * mk;
        }
        cache.canonical_hamiltonian = d;
        cache.hamiltonian = cache.u * d * cache.u.adjoint();
    }
    generator::OperatorPair ops{cache.hamiltonian, cache.lindblads};
    cache.superop = generator::gksl_superoperator(ops);
    cache.prop = generator::make_propagator(cache.superop, tau);
    return cache;
}

struct ChainTrace {
    std::vector<Matrix> propagated;  // y_j = Phi(rho_{j-1})
    std::vector<Matrix> states;      // rho_j after conditioning
    std::vector<double> clamped_q;
    std::vector<bool> clamped;
    double log_probability = 0.0;
    int clamped_steps = 0;
};

ChainTrace forward_chain(const ModelCache& cache, const dynamics::MeasurementChain& chain,
                         const std::vector<dynamics::Instrument>& instruments,
                         bool keep_trace) {
    ChainTrace trace;
    Matrix rho = chain.initial_state.density(cache.n);
    for (int j = 0; j < chain.length(); ++j) {
        const dynamics::Instrument& inst = instruments.at(chain.instrument_ids.at(j));
        const Matrix& e = inst.projectors.at(chain.outcomes.at(j));
        const Matrix y = generator::apply(cache.prop, rho);
        const double q_raw = (e * y).trace().real();
        const bool clamped = !(q_raw > kProbabilityFloor);
        const double q = clamped ? kProbabilityFloor : std::min(q_raw, 1.0);
        trace.log_probability += std::log(q);
        if (clamped) ++trace.clamped_steps;
        rho = (e * y * e) / q;
        if (keep_trace) {
            trace.propagated.push_back(y);
            trace.states.push_back(rho);
            trace.clamped_q.push_back(q);
            trace.clamped.push_back(clamped);
        }
    }
    return trace;
}

// Reverse pass over one chain: accumulates the cotangent of the propagator
// matrix.  `weight` scales this chain's contribution to the batch objective.
void backward_chain(const ModelCache& cache, const dynamics::MeasurementChain& chain,
                    const std::vector<dynamics::Instrument>& instruments,
                    const ChainTrace& trace, double weight, Matrix& phi_bar) {
    const int n = cache.n;
    Matrix rho_bar = Matrix::Zero(n, n);
    for (int j = chain.length() - 1; j >= 0; --j) {
        const dynamics::Instrument& inst = instruments.at(chain.instrument_ids.at(j));
        const Matrix& e = inst.projectors.at(chain.outcomes.at(j));
        const double q = trace.clamped_q[j];
        const Matrix& rho_j = trace.states[j];
        double q_bar = 0.0;
        if (!trace.clamped[j]) {
            q_bar = weight / q;
            q_bar -= (rho_bar.adjoint() * rho_j).trace().real() / q;
        }
        Matrix y_bar = (e * rho_bar * e) / q;
        if (q_bar != 0.0) y_bar += q_bar * e;
        const Matrix prev =
            (j == 0) ? chain.initial_state.density(n) : trace.states[j - 1];
        phi_bar.noalias() += linalg::vec(y_bar) * linalg::vec(prev).adjoint();
        rho_bar = linalg::unvec(cache.prop.adjoint_matrix * linalg::vec(y_bar), n, n);
    }
}

// Pulls the propagator cotangent back to the flat parameter vector.
RealVector parameter_cotangent(const ModelCache& cache, const Matrix& phi_bar,
                               const ParameterLayout& layout, double tau) {
    const int n = cache.n;
    const Matrix id = Matrix::Identity(n, n);
    const Matrix s_bar = tau * linalg::expm_adjoint(cache.superop * tau, phi_bar);

    // Through the GKSL assembly.
    Matrix h_bar = linalg::kron_cotangent_right(Complex(0.0, 1.0) * s_bar, id, n, n);
    h_bar += linalg::kron_cotangent_left(Complex(0.0, -1.0) * s_bar, id, n, n).transpose();
    std::vector<Matrix> l_bars;
    l_bars.reserve(cache.lindblads.size());
    for (const Matrix& l : cache.lindblads) {
        Matrix m_bar = linalg::kron_cotangent_right(-0.5 * s_bar, id, n, n);
        m_bar += linalg::kron_cotangent_left(-0.5 * s_bar, id, n, n).transpose();
        Matrix l_bar = linalg::kron_cotangent_left(s_bar, l, n, n).conjugate();
        l_bar += linalg::kron_cotangent_right(s_bar, l.conjugate(), n, n);
        l_bar += l * (m_bar + m_bar.adjoint());
        l_bars.push_back(std::move(l_bar));
    }

    // Through the basis rotation X = U D U^dag.
    Matrix u_bar = Matrix::Zero(n, n);
    Matrix hd_bar;
    {
        const Matrix& d = cache.canonical_hamiltonian;
        u_bar += h_bar * cache.u * d.adjoint() + h_bar.adjoint() * cache.u * d;
        hd_bar = cache.u.adjoint() * h_bar * cache.u;
    }
    std::vector<Matrix> dl_bars;
    dl_bars.reserve(l_bars.size());
    for (std::size_t j = 0; j < l_bars.size(); ++j) {
        const Matrix& d = cache.canonical_lindblads[j];
        u_bar += l_bars[j] * cache.u * d.adjoint() + l_bars[j].adjoint() * cache.u * d;
        dl_bars.push_back(cache.u.adjoint() * l_bars[j] * cache.u);
    }
    const Matrix g_bar =
        linalg::unitary_generator_cotangent(cache.model.generator, u_bar);

    // Project onto the real parameterisation.
    const algebra::AlgebraStructure& s = layout.structure;
    RealVector grad = RealVector::Zero(layout.total_size());
    int pos = 0;
    for (int a = 0; a < n; ++a) grad(pos++) = g_bar(a, a).real();
    for (int b = 1; b < n; ++b)
        for (int a = 0; a < b; ++a) {
            grad(pos++) = g_bar(a, b).real() + g_bar(b, a).real();
            grad(pos++) = g_bar(a, b).imag() - g_bar(b, a).imag();
        }
    for (const Matrix& d_bar : dl_bars) {
        int offset = 0;
        for (const auto& [nk, mk] : s.blocks) {
            for (int r = 0; r < mk; ++r)
                for (int c = 0; c < mk; ++c) {
                    Complex acc = 0.0;
                    for (int i = 0; i < nk; ++i)
                        acc += d_bar(offset + i * mk + r, offset + i * mk + c);
                    grad(pos++) = acc.real();
                    grad(pos++) = acc.imag();
                }
            offset += nk * mk;
        }
    }
    {
        int offset = 0;
        std::vector<double> kappa_terms, mu_terms;
        for (const auto& [nk, mk] : s.blocks) {
            for (int a = 0; a < nk; ++a) {
                double acc = 0.0;
                for (int t = 0; t < mk; ++t)
                    acc += hd_bar(offset + a * mk + t, offset + a * mk + t).real();
                kappa_terms.push_back(acc);
            }
            for (int t = 0; t < mk; ++t) {
                double acc = 0.0;
                for (int a = 0; a < nk; ++a)
                    acc += hd_bar(offset + a * mk + t, offset + a * mk + t).real();
                mu_terms.push_back(acc);
            }
            offset += nk * mk;
        }
        for (double v : kappa_terms) grad(pos++) = v;
        for (double v : mu_terms) grad(pos++) = v;
    }
    return grad;
}

std::vector<int> resolve_batch(const dynamics::Dataset& data, const std::vector<int>& batch) {
    if (!batch.empty()) {
        for (int idx : batch)
            if (idx < 0 || idx >= data.size())
                throw std::invalid_argument("batch index out of range");
        return batch;
    }
    std::vector<int> all(data.size());
    std::iota(all.begin(), all.end(), 0);
    return all;
}

}  // namespace

LikelihoodValue log_likelihood(const ParameterVector& params,
                               const dynamics::MeasurementChain& chain,
                               const std::vector<dynamics::Instrument>& instruments,
                               double tau) {
    params.validate();
    const ModelCache cache = build_cache(params, tau);
    Matrix rho = chain.initial_state.density(cache.n);
    LikelihoodValue out;
    for (int j = 0; j < chain.length(); ++j) {
        const dynamics::Instrument& inst = instruments.at(chain.instrument_ids.at(j));
        const Matrix& e = inst.projectors.at(chain.outcomes.at(j));
        const Matrix y = generator::apply(cache.prop, rho);
        const double q_raw = (e * y).trace().real();
        const bool clamped = !(q_raw > kProbabilityFloor);
        const double q = clamped ? kProbabilityFloor : std::min(q_raw, 1.0);
        out.step_terms.push_back(std::log(q));
        out.log_probability += out.step_terms.back();
        if (clamped) ++out.clamped_steps;
        rho = (e * y * e) / q;
    }
    out.per_step = chain.length() > 0 ? out.log_probability / chain.length() : 0.0;
    return out;
}

double batch_log_likelihood(const ParameterVector& params, const dynamics::Dataset& data,
                            const std::vector<int>& batch) {
    params.validate();
    data.validate();
    const std::vector<int> idx = resolve_batch(data, batch);
    if (idx.empty()) throw std::invalid_argument("batch_log_likelihood: empty dataset");
    const ModelCache cache = build_cache(params, data.tau);
    double total = 0.0;
    for (int i : idx) {
        const auto& chain = data.chains[i];
        const ChainTrace trace = forward_chain(cache, chain, data.instruments, false);
        total += trace.log_probability / std::max(1, chain.length());
    }
    return total / static_cast<double>(idx.size());
}

GradientResult gradient(const ParameterVector& params, const dynamics::Dataset& data,
                        const std::vector<int>& batch) {
    params.validate();
    data.validate();
    const std::vector<int> idx = resolve_batch(data, batch);
    if (idx.empty()) throw std::invalid_argument("gradient: empty dataset");
    const ModelCache cache = build_cache(params, data.tau);
    const int n = cache.n;
    GradientResult out;
    Matrix phi_bar = Matrix::Zero(n * n, n * n);
    for (int i : idx) {
        const auto& chain = data.chains[i];
        const ChainTrace trace = forward_chain(cache, chain, data.instruments, true);
        out.value += trace.log_probability / std::max(1, chain.length());
        out.clamped_steps += trace.clamped_steps;
        const double weight =
            1.0 / (static_cast<double>(idx.size()) * std::max(1, chain.length()));
        backward_chain(cache, chain, data.instruments, trace, weight, phi_bar);
    }
    out.value /= static_cast<double>(idx.size());
    out.gradient = parameter_cotangent(cache, phi_bar, params.layout, data.tau);
    for (Eigen::Index i = 0; i < out.gradient.size(); ++i)
        if (!std::isfinite(out.gradient(i)))
            throw std::runtime_error("gradient: non-finite component at index " +
                                     std::to_string(i));
    return out;
}

}  // namespace dflearn::likelihood
