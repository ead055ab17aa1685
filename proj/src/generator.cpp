#include "dflearn/generator.hpp"

#include <algorithm>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "dflearn/jsonutil.hpp"
#include "dflearn/linalg.hpp"
#include "dflearn/rng.hpp"

namespace dflearn::generator {

void GkslModel::validate() const {
    structure.validate();
    if (!structure.unital())
        throw std::invalid_argument("GkslModel: structure must be unital");
    const int n = structure.dim();
    if (generator.rows() != n || generator.cols() != n)
        throw std::invalid_argument("GkslModel: generator has wrong shape");
    if (linalg::hermiticity_error(generator) > 1e-10)
        throw std::invalid_argument("GkslModel: generator must be Hermitian");
    const std::size_t kk = structure.blocks.size();
    if (kappas.size() != kk || mus.size() != kk)
        throw std::invalid_argument("GkslModel: wrong number of Hamiltonian factors");
    for (std::size_t k = 0; k < kk; ++k) {
        if (kappas[k].size() != structure.blocks[k].first)
            throw std::invalid_argument("GkslModel: kappa factor has wrong length");
        if (mus[k].size() != structure.blocks[k].second)
            throw std::invalid_argument("GkslModel: mu factor has wrong length");
    }
    for (const auto& row : betas) {
        if (row.size() != kk)
            throw std::invalid_argument("GkslModel: beta row has wrong number of blocks");
        for (std::size_t k = 0; k < kk; ++k) {
            const int mk = structure.blocks[k].second;
            if (row[k].rows() != mk || row[k].cols() != mk)
                throw std::invalid_argument("GkslModel: beta factor has wrong shape");
        }
    }
}

int GkslModel::default_lindblad_count(const algebra::AlgebraStructure& s) {
    s.validate();
    int j = 1;
    for (const auto& [nk, mk] : s.blocks) j = std::max(j, mk * mk);
    return j;
}

Matrix model_unitary(const GkslModel& m) { return linalg::unitary_from_generator(m.generator); }

algebra::AlgebraBasis model_basis(const GkslModel& m) {
    return algebra::AlgebraBasis{m.structure, model_unitary(m)};
}

namespace {

// Block-diagonal operator sum_k (A_k (x) I or I (x) B_k style factors),
// assembled in the canonical layout before rotating by U.
Matrix canonical_lindblad(const algebra::AlgebraStructure& s, const std::vector<Matrix>& betas) {
    const int n = s.dim();
    Matrix d = Matrix::Zero(n, n);
    int offset = s.n0;
    for (std::size_t k = 0; k < s.blocks.size(); ++k) {
        const auto [nk, mk] = s.blocks[k];
        d.block(offset, offset, nk * mk, nk * mk) =
            linalg::kron(Matrix::Identity(nk, nk), betas[k]);
        offset += nk * mk;
    }
    return d;
}

Matrix canonical_hamiltonian(const algebra::AlgebraStructure& s,
                             const std::vector<RealVector>& kappas,
                             const std::vector<RealVector>& mus, bool include_mu) {
    const int n = s.dim();
    Matrix d = Matrix::Zero(n, n);
    int offset = s.n0;
    for (std::size_t k = 0; k < s.blocks.size(); ++k) {
        const auto [nk, mk] = s.blocks[k];
        for (int a = 0; a < nk; ++a)
            for (int t = 0; t < mk; ++t) {
                double v = kappas[k](a);
                if (include_mu) v += mus[k](t);
                d(offset + a * mk + t, offset + a * mk + t) = v;
            }
        offset += nk * mk;
    }
    return d;
}

}  // namespace

OperatorPair assemble_operators(const GkslModel& m) {
    m.validate();
    const Matrix u = model_unitary(m);
    OperatorPair ops;
    ops.hamiltonian =
        u * canonical_hamiltonian(m.structure, m.kappas, m.mus, true) * u.adjoint();
    ops.lindblads.reserve(m.betas.size());
    for (const auto& row : m.betas)
        ops.lindblads.push_back(u * canonical_lindblad(m.structure, row) * u.adjoint());
    return ops;
}

Matrix gksl_superoperator(const OperatorPair& ops) {
    const Eigen::Index n = ops.hamiltonian.rows();
    if (ops.hamiltonian.cols() != n)
        throw std::invalid_argument("gksl_superoperator: Hamiltonian must be square");
    const Matrix id = Matrix::Identity(n, n);
    const Complex im(0.0, 1.0);
    Matrix s = -im * (linalg::kron(id, ops.hamiltonian) -
                      linalg::kron(ops.hamiltonian.transpose(), id));
    for (const Matrix& l : ops.lindblads) {
        if (l.rows() != n || l.cols() != n)
            throw std::invalid_argument("gksl_superoperator: Lindblad shape mismatch");
        const Matrix m = l.adjoint() * l;
        s += linalg::kron(l.conjugate(), l);
        s -= 0.5 * linalg::kron(id, m);
        s -= 0.5 * linalg::kron(m.transpose(), id);
    }
    return s;
}

Propagator make_propagator(const Matrix& superop, double tau) {
    if (superop.rows() != superop.cols())
        throw std::invalid_argument("make_propagator: superoperator must be square");
    const int n = static_cast<int>(std::lround(std::sqrt(double(superop.rows()))));
    if (static_cast<Eigen::Index>(n) * n != superop.rows())
        throw std::invalid_argument("make_propagator: dimension is not a perfect square");
    if (tau < 0.0) throw std::invalid_argument("make_propagator: negative time step");
    Propagator p;
    p.dim = n;
    p.tau = tau;
    p.matrix = linalg::expm(superop * tau);
    p.adjoint_matrix = p.matrix.adjoint();
    return p;
}

Propagator make_propagator(const GkslModel& m, double tau) {
    return make_propagator(gksl_superoperator(assemble_operators(m)), tau);
}

Matrix apply(const Propagator& p, const Matrix& rho) {
    if (rho.rows() != p.dim || rho.cols() != p.dim)
        throw std::invalid_argument("apply: state has wrong shape");
    return linalg::unvec(p.matrix * linalg::vec(rho), p.dim, p.dim);
}

Matrix apply_adjoint(const Propagator& p, const Matrix& x) {
    if (x.rows() != p.dim || x.cols() != p.dim)
        throw std::invalid_argument("apply_adjoint: observable has wrong shape");
    return linalg::unvec(p.adjoint_matrix * linalg::vec(x), p.dim, p.dim);
}

CptpReport verify_cptp(const Propagator& p, double trace_tol, double choi_tol, int probes,
                       std::uint64_t seed) {
    const int n = p.dim;
    CptpReport report;
    rng::Engine eng = rng::make_engine(seed, 0);
    double worst = std::abs((apply)(p, Matrix::Identity(n, n) / double(n)).trace().real() - 1.0);
    for (int i = 0; i < probes; ++i) {
        const Matrix rho = rng::random_density(n, eng);
        const Complex tr = (apply)(p, rho).trace();
        worst = std::max(worst, std::abs(tr - Complex(1.0, 0.0)));
    }
    report.trace_deviation = worst;

    Matrix choi = Matrix::Zero(n * n, n * n);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) {
            const Matrix img = linalg::unvec(p.matrix.col(j * n + i), n, n);
            choi.block(i * n, j * n, n, n) = img;
        }
    const Matrix herm = 0.5 * (choi + choi.adjoint());
    Eigen::SelfAdjointEigenSolver<Matrix> es(herm);
    report.choi_min_eigenvalue = es.eigenvalues().minCoeff();
    report.pass = report.trace_deviation < trace_tol && report.choi_min_eigenvalue > -choi_tol;
    return report;
}

DecoherenceFreeReport verify_decoherence_free(const GkslModel& m,
                                              const std::vector<double>& times, int samples,
                                              double tol, std::uint64_t seed) {
    m.validate();
    const Matrix s = gksl_superoperator(assemble_operators(m));
    const Matrix heff = effective_hamiltonian(m);
    const algebra::AlgebraBasis basis = model_basis(m);
    DecoherenceFreeReport report;
    rng::Engine eng = rng::make_engine(seed, 0);
    for (double t : times) {
        const Propagator p = make_propagator(s, t);
        const Matrix conj_u = linalg::expm(Complex(0.0, 1.0) * heff * t);
        for (int i = 0; i < samples; ++i) {
            algebra::AlgebraElement elem{basis, {}};
            for (const auto& [nk, mk] : m.structure.blocks)
                elem.block_matrices.push_back(rng::gaussian_complex(nk, nk, eng));
            const Matrix x = algebra::assemble_element(elem);
            const Matrix fx = apply_adjoint(p, x);
            const Matrix lhs1 = apply_adjoint(p, x.adjoint() * x);
            const Matrix lhs2 = apply_adjoint(p, x * x.adjoint());
            report.max_multiplicative_residual =
                std::max({report.max_multiplicative_residual,
                          (lhs1 - fx.adjoint() * fx).cwiseAbs().maxCoeff(),
                          (lhs2 - fx * fx.adjoint()).cwiseAbs().maxCoeff()});
            const Matrix rot = conj_u * x * conj_u.adjoint();
            report.max_unitary_residual =
                std::max(report.max_unitary_residual, (fx - rot).cwiseAbs().maxCoeff());
        }
    }
    report.pass = report.max_multiplicative_residual < tol && report.max_unitary_residual < tol;
    return report;
}

Matrix effective_hamiltonian(const GkslModel& m) {
    m.validate();
    const Matrix u = model_unitary(m);
    return u * canonical_hamiltonian(m.structure, m.kappas, m.mus, false) * u.adjoint();
}

EmbeddedModel embed_parameters(const GkslModel& super_model,
                               const algebra::AlgebraStructure& sub_structure,
                               const algebra::EmbeddingWitness& witness) {
    super_model.validate();
    sub_structure.validate();
    if (!sub_structure.unital())
        throw std::invalid_argument("embed_parameters: sub structure must be unital");
    const algebra::AlgebraStructure& super_s = super_model.structure;
    const int n = super_s.dim();
    if (sub_structure.dim() != n)
        throw std::invalid_argument("embed_parameters: total dimensions differ");
    const int kk = super_s.block_count();
    const int ll = sub_structure.block_count();
    const IntMatrix& a = witness.multiplicities;
    if (a.rows() != kk || a.cols() != ll)
        throw std::invalid_argument("embed_parameters: witness has wrong shape");
    for (int k = 0; k < kk; ++k) {
        int sum = 0;
        for (int l = 0; l < ll; ++l) {
            if (a(k, l) < 0) throw std::invalid_argument("embed_parameters: negative witness entry");
            sum += a(k, l) * sub_structure.blocks[l].first;
        }
        if (sum != super_s.blocks[k].first)
            throw std::invalid_argument("embed_parameters: witness violates row constraints");
    }
    for (int l = 0; l < ll; ++l) {
        int sum = 0;
        for (int k = 0; k < kk; ++k) sum += a(k, l) * super_s.blocks[k].second;
        if (sum != sub_structure.blocks[l].second)
            throw std::invalid_argument("embed_parameters: witness violates column constraints");
    }

    std::vector<int> off_super(kk, 0), off_sub(ll, 0);
    {
        int off = super_s.n0;
        for (int k = 0; k < kk; ++k) {
            off_super[k] = off;
            off += super_s.blocks[k].first * super_s.blocks[k].second;
        }
        off = sub_structure.n0;
        for (int l = 0; l < ll; ++l) {
            off_sub[l] = off;
            off += sub_structure.blocks[l].first * sub_structure.blocks[l].second;
        }
    }

    // Start offsets of the (k, c) copies inside each sub m-leg (k ascending)
    // and of the (l, c) copies inside each super n-leg (l ascending).
    std::vector<std::vector<int>> seg_sub(ll), seg_super(kk);
    for (int l = 0; l < ll; ++l) {
        int pos = 0;
        for (int k = 0; k < kk; ++k)
            for (int c = 0; c < a(k, l); ++c) {
                seg_sub[l].push_back(pos);
                pos += super_s.blocks[k].second;
            }
    }
    for (int k = 0; k < kk; ++k) {
        int pos = 0;
        for (int l = 0; l < ll; ++l)
            for (int c = 0; c < a(k, l); ++c) {
                seg_super[k].push_back(pos);
                pos += sub_structure.blocks[l].first;
            }
    }

    // Permutation matrix sending the sub canonical layout to the super one.
    Matrix perm = Matrix::Zero(n, n);
    for (int l = 0; l < ll; ++l) {
        const auto [sub_n, sub_m] = sub_structure.blocks[l];
        int copy_sub = 0;
        for (int k = 0; k < kk; ++k) {
            // position of the (k, l, c) copy within seg_super[k]
            int copy_super = 0;
            for (int lp = 0; lp < l; ++lp) copy_super += a(k, lp);
            for (int c = 0; c < a(k, l); ++c, ++copy_sub) {
                const int super_m = super_s.blocks[k].second;
                for (int i = 0; i < sub_n; ++i)
                    for (int sp = 0; sp < super_m; ++sp) {
                        const int sub_idx =
                            off_sub[l] + i * sub_m + seg_sub[l][copy_sub] + sp;
                        const int super_idx =
                            off_super[k] +
                            (seg_super[k][copy_super + c] + i) * super_m + sp;
                        perm(super_idx, sub_idx) = 1.0;
                    }
            }
        }
    }

    EmbeddedModel out;
    out.model.structure = sub_structure;
    const Matrix u_sub = model_unitary(super_model) * perm;
    out.model.generator = linalg::generator_from_unitary(u_sub);

    out.model.betas.resize(super_model.lindblad_count());
    for (int j = 0; j < super_model.lindblad_count(); ++j) {
        out.model.betas[j].reserve(ll);
        for (int l = 0; l < ll; ++l) {
            const int sub_m = sub_structure.blocks[l].second;
            Matrix beta = Matrix::Zero(sub_m, sub_m);
            int copy = 0;
            for (int k = 0; k < kk; ++k)
                for (int c = 0; c < a(k, l); ++c, ++copy) {
                    const int mk = super_s.blocks[k].second;
                    beta.block(seg_sub[l][copy], seg_sub[l][copy], mk, mk) =
                        super_model.betas[j][k];
                }
            out.model.betas[j].push_back(beta);
        }
    }

    out.model.kappas.resize(ll);
    out.model.mus.resize(ll);
    for (int l = 0; l < ll; ++l) {
        const auto [sub_n, sub_m] = sub_structure.blocks[l];
        // Collect the kappa slice of every (k, c) copy.
        std::vector<RealVector> slices;
        std::vector<int> slice_block;
        for (int k = 0; k < kk; ++k) {
            int copy_super = 0;
            for (int lp = 0; lp < l; ++lp) copy_super += a(k, lp);
            for (int c = 0; c < a(k, l); ++c) {
                RealVector slice(sub_n);
                for (int i = 0; i < sub_n; ++i)
                    slice(i) = super_model.kappas[k](seg_super[k][copy_super + c] + i);
                slices.push_back(slice);
                slice_block.push_back(k);
            }
        }
        RealVector centered_mean = RealVector::Zero(sub_n);
        std::vector<double> means(slices.size());
        for (std::size_t c = 0; c < slices.size(); ++c) {
            means[c] = slices[c].mean();
            centered_mean += slices[c] - RealVector::Constant(sub_n, means[c]);
        }
        centered_mean /= static_cast<double>(slices.size());
        RealVector kappa = centered_mean + RealVector::Constant(sub_n, means[0]);
        out.model.kappas[l] = kappa;
        RealVector mu(sub_m);
        int copy = 0;
        for (int k = 0; k < kk; ++k) {
            int copy_super = 0;
            for (int lp = 0; lp < l; ++lp) copy_super += a(k, lp);
            for (int c = 0; c < a(k, l); ++c, ++copy) {
                const double shift = means[copy] - means[0];
                const RealVector resid =
                    slices[copy] - kappa - RealVector::Constant(sub_n, shift);
                out.kappa_defect =
                    std::max(out.kappa_defect, resid.cwiseAbs().maxCoeff());
                const int mk = super_s.blocks[k].second;
                for (int sp = 0; sp < mk; ++sp)
                    mu(seg_sub[l][copy] + sp) = super_model.mus[k](sp) + shift;
            }
        }
        out.model.mus[l] = mu;
    }
    out.model.validate();
    return out;
}

void to_json(nlohmann::json& j, const GkslModel& m) {
    j = nlohmann::json{{"structure", m.structure},
                       {"generator", io::matrix_to_json(m.generator)},
                       {"betas", nlohmann::json::array()},
                       {"kappas", nlohmann::json::array()},
                       {"mus", nlohmann::json::array()}};
    for (const auto& row : m.betas) {
        nlohmann::json jrow = nlohmann::json::array();
        for (const auto& b : row) jrow.push_back(io::matrix_to_json(b));
        j["betas"].push_back(jrow);
    }
    for (const auto& k : m.kappas) j["kappas"].push_back(io::real_vector_to_json(k));
    for (const auto& mu : m.mus) j["mus"].push_back(io::real_vector_to_json(mu));
}

void from_json(const nlohmann::json& j, GkslModel& m) {
    j.at("structure").get_to(m.structure);
    m.generator = io::matrix_from_json(j.at("generator"));
    m.betas.clear();
    for (const auto& jrow : j.at("betas")) {
        std::vector<Matrix> row;
        for (const auto& jb : jrow) row.push_back(io::matrix_from_json(jb));
        m.betas.push_back(std::move(row));
    }
    m.kappas.clear();
    for (const auto& jk : j.at("kappas")) m.kappas.push_back(io::real_vector_from_json(jk));
    m.mus.clear();
    for (const auto& jm : j.at("mus")) m.mus.push_back(io::real_vector_from_json(jm));
    m.validate();
}

}  // namespace dflearn::generator
