#pragma once

#include "dflearn/types.hpp"

namespace dflearn::linalg {

// Matrix exponential, Pade order 13 with scaling and squaring.
Matrix expm(const Matrix& a);

// Adjoint of the matrix exponential: given the cotangent gbar of e^A,
// returns the cotangent of A.  Computed as the Frechet derivative
// L(A^dag, gbar) via the exponential of the 2x2 block matrix
// [[A^dag, gbar], [0, A^dag]].
Matrix expm_adjoint(const Matrix& a, const Matrix& gbar);

// exp(iG) for Hermitian G, through the eigendecomposition of G.
Matrix unitary_from_generator(const Matrix& g);

// Hermitian G with exp(iG) = U (eigenphases taken in (-pi, pi]).
Matrix generator_from_unitary(const Matrix& u);

// Cotangent of G given the cotangent ubar of U = exp(iG); Daleckii-Krein
// divided differences of z -> e^{iz} over the spectrum of G.  The result is
// a general complex matrix; project onto Hermitian parameters afterwards.
Matrix unitary_generator_cotangent(const Matrix& g, const Matrix& ubar);

// Column-stacking vectorisation and its inverse.
Vector vec(const Matrix& x);
Matrix unvec(const Vector& v, int rows, int cols);

Matrix kron(const Matrix& a, const Matrix& b);

// Adjoints of C = kron(A, B) with respect to A and B.
Matrix kron_cotangent_left(const Matrix& cbar, const Matrix& b, int arows, int acols);
Matrix kron_cotangent_right(const Matrix& cbar, const Matrix& a, int brows, int bcols);

double hermiticity_error(const Matrix& a);
double unitarity_error(const Matrix& u);

}  // namespace dflearn::linalg
