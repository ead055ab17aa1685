#include "dflearn/dynamics.hpp"

#include <algorithm>
#include <cmath>

#include "dflearn/linalg.hpp"

namespace dflearn::dynamics {

void Instrument::validate(double tol) const {
    if (projectors.empty()) throw std::invalid_argument("Instrument: no outcomes");
    const int n = dim();
    Matrix sum = Matrix::Zero(n, n);
    for (const Matrix& e : projectors) {
        if (e.rows() != n || e.cols() != n)
            throw std::invalid_argument("Instrument: projector shape mismatch");
        if (linalg::hermiticity_error(e) > tol)
            throw std::invalid_argument("Instrument: projector is not Hermitian");
        if ((e * e - e).cwiseAbs().maxCoeff() > tol)
            throw std::invalid_argument("Instrument: projector is not idempotent");
        sum += e;
    }
    if ((sum - Matrix::Identity(n, n)).cwiseAbs().maxCoeff() > tol)
        throw std::invalid_argument("Instrument: outcomes do not resolve the identity");
}

Instrument random_instrument(const algebra::AlgebraBasis& accessible, rng::Engine& eng,
                             Granularity granularity) {
    accessible.validate();
    const algebra::AlgebraStructure& s = accessible.structure;
    const int n = s.dim();
    std::vector<Matrix> fine;
    int offset = s.n0;
    for (const auto& [nk, mk] : s.blocks) {
        const Matrix frame = rng::haar_unitary(nk, eng);
        for (int a = 0; a < nk; ++a) {
            Matrix d = Matrix::Zero(n, n);
            const Vector v = frame.col(a);
            for (int i = 0; i < nk; ++i)
                for (int c = 0; c < nk; ++c)
                    for (int t = 0; t < mk; ++t)
                        d(offset + i * mk + t, offset + c * mk + t) = v(i) * std::conj(v(c));
            fine.push_back(accessible.unitary * d * accessible.unitary.adjoint());
        }
        offset += nk * mk;
    }

    Instrument inst;
    if (granularity == Granularity::kCoarse && fine.size() >= 2) {
        std::vector<int> side(fine.size());
        std::bernoulli_distribution coin(0.5);
        bool ok = false;
        while (!ok) {
            int ones = 0;
            for (auto& b : side) {
                b = coin(eng) ? 1 : 0;
                ones += b;
            }
            ok = ones > 0 && ones < static_cast<int>(side.size());
        }
        Matrix e0 = Matrix::Zero(n, n);
        Matrix e1 = Matrix::Zero(n, n);
        for (std::size_t i = 0; i < fine.size(); ++i) (side[i] ? e1 : e0) += fine[i];
        inst.projectors = {e0, e1};
    } else {
        inst.projectors = std::move(fine);
    }

    if (s.n0 > 0) {
        Matrix d = Matrix::Zero(n, n);
        d.topLeftCorner(s.n0, s.n0) = Matrix::Identity(s.n0, s.n0);
        inst.projectors.push_back(accessible.unitary * d * accessible.unitary.adjoint());
        inst.includes_complement = true;
    }
    inst.validate();
    return inst;
}

InitialState InitialState::of(Matrix rho) {
    if (rho.rows() != rho.cols()) throw std::invalid_argument("InitialState: non-square state");
    if (linalg::hermiticity_error(rho) > 1e-9)
        throw std::invalid_argument("InitialState: state is not Hermitian");
    if (std::abs(rho.trace() - Complex(1.0, 0.0)) > 1e-9)
        throw std::invalid_argument("InitialState: state is not normalised");
    Eigen::SelfAdjointEigenSolver<Matrix> es(rho);
    if (es.eigenvalues().minCoeff() < -1e-9)
        throw std::invalid_argument("InitialState: state is not positive semidefinite");
    InitialState out;
    out.maximally_mixed = false;
    out.sigma = std::move(rho);
    return out;
}

Matrix InitialState::density(int n) const {
    if (maximally_mixed) return Matrix::Identity(n, n) / static_cast<double>(n);
    if (sigma.rows() != n) throw std::invalid_argument("InitialState: dimension mismatch");
    return sigma;
}

double conditional_probability(const Matrix& e, const generator::Propagator& p,
                               const Matrix& rho) {
    return (e * generator::apply(p, rho)).trace().real();
}

Matrix conditioned_state(const Matrix& e, const generator::Propagator& p, const Matrix& rho) {
    const Matrix y = generator::apply(p, rho);
    const double q = (e * y).trace().real();
    if (q < kProbabilityFloor)
        throw ZeroProbabilityBranch("conditioned_state: outcome probability below floor");
    return (e * y * e) / q;
}

double sequence_probability(const MeasurementChain& chain,
                            const std::vector<Instrument>& instruments,
                            const generator::Propagator& p) {
    Matrix rho = chain.initial_state.density(p.dim);
    double prob = 1.0;
    for (int j = 0; j < chain.length(); ++j) {
        const Instrument& inst = instruments.at(chain.instrument_ids.at(j));
        const Matrix& e = inst.projectors.at(chain.outcomes.at(j));
        const Matrix y = generator::apply(p, rho);
        const double q = (e * y).trace().real();
        if (q <= 0.0) return 0.0;
        prob *= q;
        rho = (e * y * e) / q;
    }
    return prob;
}

MeasurementChain sample_chain(const generator::Propagator& p,
                              const std::vector<Instrument>& instruments,
                              const std::vector<int>& step_instruments,
                              const InitialState& initial, rng::Engine& eng) {
    MeasurementChain chain;
    chain.initial_state = initial;
    chain.instrument_ids = step_instruments;
    Matrix rho = initial.density(p.dim);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    for (int id : step_instruments) {
        const Instrument& inst = instruments.at(id);
        const Matrix y = generator::apply(p, rho);
        std::vector<double> probs(inst.outcomes());
        double norm = 0.0;
        for (int x = 0; x < inst.outcomes(); ++x) {
            probs[x] = std::max(0.0, (inst.projectors[x] * y).trace().real());
            norm += probs[x];
        }
        if (norm <= 0.0)
            throw std::runtime_error("sample_chain: zero total outcome probability");
        double draw = unif(eng) * norm;
        int outcome = inst.outcomes() - 1;
        for (int x = 0; x < inst.outcomes(); ++x) {
            if (draw < probs[x]) {
                outcome = x;
                break;
            }
            draw -= probs[x];
        }
        chain.outcomes.push_back(outcome);
        const Matrix& e = inst.projectors[outcome];
        rho = (e * y * e) / probs[outcome];
    }
    return chain;
}

MeasurementChain sample_chain(const generator::Propagator& p,
                              const std::vector<Instrument>& instruments,
                              const InitialState& initial, int length, rng::Engine& eng) {
    if (instruments.empty()) throw std::invalid_argument("sample_chain: no instruments");
    std::vector<int> ids(length);
    for (int j = 0; j < length; ++j) ids[j] = j % static_cast<int>(instruments.size());
    return sample_chain(p, instruments, ids, initial, eng);
}

void Dataset::validate() const {
    if (n <= 0) throw std::invalid_argument("Dataset: dimension missing");
    if (tau <= 0.0) throw std::invalid_argument("Dataset: time step missing");
    for (const Instrument& inst : instruments) {
        inst.validate();
        if (inst.dim() != n) throw std::invalid_argument("Dataset: instrument dimension mismatch");
    }
    for (const MeasurementChain& chain : chains) {
        if (chain.instrument_ids.size() != chain.outcomes.size())
            throw std::invalid_argument("Dataset: chain record length mismatch");
        for (std::size_t j = 0; j < chain.outcomes.size(); ++j) {
            const int id = chain.instrument_ids[j];
            if (id < 0 || id >= static_cast<int>(instruments.size()))
                throw std::invalid_argument("Dataset: chain references unknown instrument");
            if (chain.outcomes[j] < 0 || chain.outcomes[j] >= instruments[id].outcomes())
                throw std::invalid_argument("Dataset: outcome index out of range");
        }
    }
}

Dataset generate_dataset(const generator::OperatorPair& ops,
                         const algebra::AlgebraBasis& accessible, int chains, int length,
                         double tau, std::uint64_t seed, Granularity granularity) {
    accessible.validate();
    if (chains <= 0 || length <= 0)
        throw std::invalid_argument("generate_dataset: chains and length must be positive");
    if (tau <= 0.0) throw std::invalid_argument("generate_dataset: time step must be positive");
    const int n = accessible.structure.dim();
    if (ops.hamiltonian.rows() != n)
        throw std::invalid_argument("generate_dataset: operator dimension mismatch");
    const generator::Propagator p = generator::make_propagator(gksl_superoperator(ops), tau);

    Dataset data;
    data.n = n;
    data.tau = tau;
    data.accessible_structure = accessible.structure;
    data.accessible_unitary = accessible.unitary;
    data.generator_metadata = {{"seed", seed},
                               {"granularity", granularity == Granularity::kFine ? "fine" : "coarse"},
                               {"source", "operator_pair"}};
    for (int s = 0; s < chains; ++s) {
        rng::Engine eng = rng::make_engine(seed, static_cast<std::uint64_t>(s) + 1);
        std::vector<int> ids(length);
        for (int j = 0; j < length; ++j) {
            ids[j] = static_cast<int>(data.instruments.size());
            data.instruments.push_back(random_instrument(accessible, eng, granularity));
        }
        data.chains.push_back(sample_chain(p, data.instruments, ids, InitialState::mixed(), eng));
    }
    return data;
}

Dataset generate_dataset(const generator::GkslModel& model,
                         const algebra::AlgebraBasis& accessible, int chains, int length,
                         double tau, std::uint64_t seed, Granularity granularity) {
    Dataset data = generate_dataset(generator::assemble_operators(model), accessible, chains,
                                    length, tau, seed, granularity);
    data.generator_metadata["source"] = "structured_model";
    data.generator_metadata["model"] = model;
    return data;
}

}  // namespace dflearn::dynamics
