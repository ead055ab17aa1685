#include "dflearn/rng.hpp"

#include <stdexcept>

namespace dflearn::rng {

namespace {

// splitmix64 finalizer; bijective on 64-bit words.
std::uint64_t mix64(std::uint64_t x) {
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

}  // namespace

std::uint64_t derive(std::uint64_t seed, std::uint64_t stream) {
    std::uint64_t x = seed + 0x9e3779b97f4a7c15ULL * (stream + 1);
    x = mix64(x);
    x = mix64(x + 0x9e3779b97f4a7c15ULL);
    return x;
}

Engine make_engine(std::uint64_t seed, std::uint64_t stream) {
    return Engine(derive(seed, stream));
}

Matrix gaussian_complex(int rows, int cols, Engine& eng) {
    if (rows < 0 || cols < 0) throw std::invalid_argument("gaussian_complex: negative shape");
    std::normal_distribution<double> dist(0.0, 1.0);
    Matrix out(rows, cols);
    for (int j = 0; j < cols; ++j)
        for (int i = 0; i < rows; ++i) {
            const double re = dist(eng);
            const double im = dist(eng);
            out(i, j) = Complex(re, im);
        }
    return out;
}

RealVector gaussian_real(int len, Engine& eng) {
    if (len < 0) throw std::invalid_argument("gaussian_real: negative length");
    std::normal_distribution<double> dist(0.0, 1.0);
    RealVector out(len);
    for (int i = 0; i < len; ++i) out(i) = dist(eng);
    return out;
}

Matrix haar_unitary(int n, Engine& eng) {
    if (n <= 0) throw std::invalid_argument("haar_unitary: dimension must be positive");
    const Matrix g = gaussian_complex(n, n, eng);
    Eigen::HouseholderQR<Matrix> qr(g);
    Matrix q = qr.householderQ();
    const Matrix r = qr.matrixQR().triangularView<Eigen::Upper>();
    for (int i = 0; i < n; ++i) {
        const Complex d = r(i, i);
        const double mag = std::abs(d);
        q.col(i) *= (mag > 0.0) ? d / mag : Complex(1.0, 0.0);
    }
    return q;
}

Matrix random_hermitian(int n, double scale, Engine& eng) {
    const Matrix a = scale * gaussian_complex(n, n, eng);
    return 0.5 * (a + a.adjoint());
}

Matrix random_density(int n, Engine& eng) {
    const Matrix g = gaussian_complex(n, n, eng);
    Matrix rho = g * g.adjoint();
    rho /= rho.trace().real();
    return rho;
}

}  // namespace dflearn::rng
