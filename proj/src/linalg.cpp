#include "dflearn/linalg.hpp"

#include <cmath>
#include <stdexcept>

namespace dflearn::linalg {

namespace {

double one_norm(const Matrix& a) {
    return a.cwiseAbs().colwise().sum().maxCoeff();
}

void pade3(const Matrix& a, const Matrix& a2, Matrix& u, Matrix& v) {
    static const double b[] = {120., 60., 12., 1.};
    const Matrix i = Matrix::Identity(a.rows(), a.cols());
    u = a * (b[3] * a2 + b[1] * i);
    v = b[2] * a2 + b[0] * i;
}

void pade5(const Matrix& a, const Matrix& a2, const Matrix& a4, Matrix& u, Matrix& v) {
    static const double b[] = {30240., 15120., 3360., 420., 30., 1.};
    const Matrix i = Matrix::Identity(a.rows(), a.cols());
    u = a * (b[5] * a4 + b[3] * a2 + b[1] * i);
    v = b[4] * a4 + b[2] * a2 + b[0] * i;
}

void pade7(const Matrix& a, const Matrix& a2, const Matrix& a4, const Matrix& a6,
           Matrix& u, Matrix& v) {
    static const double b[] = {17297280., 8648640., 1995840., 277200., 25200., 1512., 56., 1.};
    const Matrix i = Matrix::Identity(a.rows(), a.cols());
    u = a * (b[7] * a6 + b[5] * a4 + b[3] * a2 + b[1] * i);
    v = b[6] * a6 + b[4] * a4 + b[2] * a2 + b[0] * i;
}

void pade9(const Matrix& a, const Matrix& a2, const Matrix& a4, const Matrix& a6,
           Matrix& u, Matrix& v) {
    static const double b[] = {17643225600., 8821612800., 2075673600., 302702400.,
                               30270240.,   2162160.,    110880.,     3960.,
                               90.,         1.};
    const Matrix i = Matrix::Identity(a.rows(), a.cols());
    const Matrix a8 = a6 * a2;
    u = a * (b[9] * a8 + b[7] * a6 + b[5] * a4 + b[3] * a2 + b[1] * i);
    v = b[8] * a8 + b[6] * a6 + b[4] * a4 + b[2] * a2 + b[0] * i;
}

void pade13(const Matrix& a, const Matrix& a2, const Matrix& a4, const Matrix& a6,
            Matrix& u, Matrix& v) {
    static const double b[] = {64764752532480000., 32382376266240000., 7771770303897600.,
                               1187353796428800.,  129060195264000.,   10559470521600.,
                               670442572800.,      33522128640.,       1323241920.,
                               40840800.,          960960.,            16380.,
                               182.,               1.};
    const Matrix i = Matrix::Identity(a.rows(), a.cols());
    u = a * (a6 * (b[13] * a6 + b[11] * a4 + b[9] * a2) + b[7] * a6 + b[5] * a4 + b[3] * a2 +
             b[1] * i);
    v = a6 * (b[12] * a6 + b[10] * a4 + b[8] * a2) + b[6] * a6 + b[4] * a4 + b[2] * a2 + b[0] * i;
}

}  // namespace

Matrix expm(const Matrix& a) {
    if (a.rows() != a.cols()) throw std::invalid_argument("expm: matrix must be square");
    const Eigen::Index n = a.rows();
    if (n == 0) return Matrix(0, 0);

    // Higham's order selection thresholds for double precision.
    constexpr double theta3 = 1.495585217958292e-2;
    constexpr double theta5 = 2.539398330063230e-1;
    constexpr double theta7 = 9.504178996162932e-1;
    constexpr double theta9 = 2.097847961257068e0;
    constexpr double theta13 = 5.371920351148152e0;

    const double nrm = one_norm(a);
    if (!std::isfinite(nrm)) throw std::invalid_argument("expm: non-finite input");

    Matrix u, v;
    int squarings = 0;
    if (nrm <= theta9) {
        const Matrix a2 = a * a;
        if (nrm <= theta3) {
            pade3(a, a2, u, v);
        } else {
            const Matrix a4 = a2 * a2;
            if (nrm <= theta5) {
                pade5(a, a2, a4, u, v);
            } else {
                const Matrix a6 = a4 * a2;
                if (nrm <= theta7)
                    pade7(a, a2, a4, a6, u, v);
                else
                    pade9(a, a2, a4, a6, u, v);
            }
        }
    } else {
        squarings = std::max(0, static_cast<int>(std::ceil(std::log2(nrm / theta13))));
        const Matrix as = a * std::pow(2.0, -squarings);
        const Matrix a2 = as * as;
        const Matrix a4 = a2 * a2;
        const Matrix a6 = a4 * a2;
        pade13(as, a2, a4, a6, u, v);
    }

    Matrix r = (v - u).partialPivLu().solve(v + u);
    for (int s = 0; s < squarings; ++s) r = r * r;
    return r;
}

Matrix expm_adjoint(const Matrix& a, const Matrix& gbar) {
    if (a.rows() != a.cols() || gbar.rows() != gbar.cols() || a.rows() != gbar.rows())
        throw std::invalid_argument("expm_adjoint: shape mismatch");
    const Eigen::Index n = a.rows();
    Matrix block = Matrix::Zero(2 * n, 2 * n);
    block.topLeftCorner(n, n) = a.adjoint();
    block.bottomRightCorner(n, n) = a.adjoint();
    block.topRightCorner(n, n) = gbar;
    return expm(block).topRightCorner(n, n);
}

Matrix unitary_from_generator(const Matrix& g) {
    if (hermiticity_error(g) > 1e-10)
        throw std::invalid_argument("unitary_from_generator: generator must be Hermitian");
    Eigen::SelfAdjointEigenSolver<Matrix> es(g);
    const RealVector& w = es.eigenvalues();
    const Matrix& vmat = es.eigenvectors();
    Vector phases(w.size());
    for (Eigen::Index i = 0; i < w.size(); ++i)
        phases(i) = std::exp(Complex(0.0, w(i)));
    return vmat * phases.asDiagonal() * vmat.adjoint();
}

Matrix generator_from_unitary(const Matrix& u) {
    if (unitarity_error(u) > 1e-8)
        throw std::invalid_argument("generator_from_unitary: input must be unitary");
    // U is normal, so its Schur form is diagonal and the Schur vectors are an
    // orthonormal eigenbasis.
    Eigen::ComplexSchur<Matrix> schur(u);
    const Matrix& q = schur.matrixU();
    const Matrix& t = schur.matrixT();
    RealVector phases(u.rows());
    for (Eigen::Index i = 0; i < u.rows(); ++i) phases(i) = std::arg(t(i, i));
    Matrix g = q * phases.cast<Complex>().asDiagonal() * q.adjoint();
    return 0.5 * (g + g.adjoint());
}

Matrix unitary_generator_cotangent(const Matrix& g, const Matrix& ubar) {
    Eigen::SelfAdjointEigenSolver<Matrix> es(g);
    const RealVector& w = es.eigenvalues();
    const Matrix& vmat = es.eigenvectors();
    const Eigen::Index n = g.rows();
    const Matrix m = vmat.adjoint() * ubar * vmat;
    Matrix scaled(n, n);
    for (Eigen::Index a = 0; a < n; ++a)
        for (Eigen::Index b = 0; b < n; ++b) {
            // Divided difference of e^{iz}: (e^{iw_a} - e^{iw_b}) / (w_a - w_b)
            // written as i e^{i(w_a+w_b)/2} sinc(d/2), stable for small d.
            const double d = w(a) - w(b);
            const double half = 0.5 * d;
            const double sinc = (std::abs(half) < 1e-8) ? 1.0 : std::sin(half) / half;
            const Complex gamma =
                Complex(0.0, 1.0) * std::exp(Complex(0.0, 0.5 * (w(a) + w(b)))) * sinc;
            scaled(a, b) = m(a, b) * std::conj(gamma);
        }
    return vmat * scaled * vmat.adjoint();
}

Vector vec(const Matrix& x) {
    return Eigen::Map<const Vector>(x.data(), x.size());
}

Matrix unvec(const Vector& v, int rows, int cols) {
    if (v.size() != static_cast<Eigen::Index>(rows) * cols)
        throw std::invalid_argument("unvec: size mismatch");
    return Eigen::Map<const Matrix>(v.data(), rows, cols);
}

Matrix kron(const Matrix& a, const Matrix& b) {
    Matrix out(a.rows() * b.rows(), a.cols() * b.cols());
    for (Eigen::Index i = 0; i < a.rows(); ++i)
        for (Eigen::Index j = 0; j < a.cols(); ++j)
            out.block(i * b.rows(), j * b.cols(), b.rows(), b.cols()) = a(i, j) * b;
    return out;
}

Matrix kron_cotangent_left(const Matrix& cbar, const Matrix& b, int arows, int acols) {
    if (cbar.rows() != arows * b.rows() || cbar.cols() != acols * b.cols())
        throw std::invalid_argument("kron_cotangent_left: shape mismatch");
    Matrix abar = Matrix::Zero(arows, acols);
    for (int i = 0; i < arows; ++i)
        for (int j = 0; j < acols; ++j)
            abar(i, j) = (cbar.block(i * b.rows(), j * b.cols(), b.rows(), b.cols())
                              .cwiseProduct(b.conjugate()))
                             .sum();
    return abar;
}

Matrix kron_cotangent_right(const Matrix& cbar, const Matrix& a, int brows, int bcols) {
    if (cbar.rows() != a.rows() * brows || cbar.cols() != a.cols() * bcols)
        throw std::invalid_argument("kron_cotangent_right: shape mismatch");
    Matrix bbar = Matrix::Zero(brows, bcols);
    for (Eigen::Index i = 0; i < a.rows(); ++i)
        for (Eigen::Index j = 0; j < a.cols(); ++j)
            bbar += std::conj(a(i, j)) * cbar.block(i * brows, j * bcols, brows, bcols);
    return bbar;
}

double hermiticity_error(const Matrix& a) {
    if (a.rows() != a.cols()) throw std::invalid_argument("hermiticity_error: non-square input");
    return (a - a.adjoint()).cwiseAbs().maxCoeff();
}

double unitarity_error(const Matrix& u) {
    if (u.rows() != u.cols()) throw std::invalid_argument("unitarity_error: non-square input");
    return (u.adjoint() * u - Matrix::Identity(u.rows(), u.cols())).cwiseAbs().maxCoeff();
}

}  // namespace dflearn::linalg
