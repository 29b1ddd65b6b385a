// Dense complex linear-algebra kernels shared by the whole library.
// Thin, contract-checked wrappers around Eigen; all functions are pure.

#pragma once

#include <Eigen/Dense>
#include <complex>
#include <stdexcept>
#include <string>

namespace kpin {

using Complex = std::complex<double>;
using ComplexMatrix = Eigen::MatrixXcd;
using ComplexVector = Eigen::VectorXcd;
using RealMatrix = Eigen::MatrixXd;
using RealVector = Eigen::VectorXd;

// Kronecker product: result((ia*b.rows+ib),(ja*b.cols+jb)) = a(ia,ja)*b(ib,jb).
inline ComplexMatrix kron(const ComplexMatrix& a, const ComplexMatrix& b) {
    ComplexMatrix out(a.rows() * b.rows(), a.cols() * b.cols());
    for (Eigen::Index ia = 0; ia < a.rows(); ++ia)
        for (Eigen::Index ja = 0; ja < a.cols(); ++ja)
            out.block(ia * b.rows(), ja * b.cols(), b.rows(), b.cols()) = a(ia, ja) * b;
    return out;
}

// Moore-Penrose pseudo-inverse via SVD. Singular values below
// 1e-12 * sigma_max are truncated; guards degenerate inputs.
inline ComplexMatrix pinv(const ComplexMatrix& m) {
    if (m.size() == 0 || m.cwiseAbs().maxCoeff() == 0.0)
        throw std::invalid_argument("pinv: matrix is zero");
    Eigen::JacobiSVD<ComplexMatrix> svd(m, Eigen::ComputeThinU | Eigen::ComputeThinV);
    if (svd.info() != Eigen::Success)
        throw std::runtime_error("pinv: SVD did not converge");
    const auto& sv = svd.singularValues();
    const double cutoff = 1e-12 * sv(0);
    RealVector inv_sv = RealVector::Zero(sv.size());
    for (Eigen::Index i = 0; i < sv.size(); ++i)
        if (sv(i) > cutoff) inv_sv(i) = 1.0 / sv(i);
    return svd.matrixV() * inv_sv.asDiagonal() * svd.matrixU().adjoint();
}

// Solves lhs * X = rhs for Hermitian lhs via LDL^H.
// Rejects non-Hermitian input and condition estimates above 1e14.
inline ComplexMatrix solve_hermitian(const ComplexMatrix& lhs, const ComplexMatrix& rhs) {
    if (lhs.rows() != lhs.cols())
        throw std::invalid_argument("solve_hermitian: lhs not square");
    if (rhs.rows() != lhs.rows())
        throw std::invalid_argument("solve_hermitian: dimension mismatch");
    if ((lhs - lhs.adjoint()).cwiseAbs().maxCoeff() >= 1e-9)
        throw std::invalid_argument("solve_hermitian: lhs not Hermitian");
    // Exact symmetrization keeps the factorization numerically clean.
    const ComplexMatrix h = 0.5 * (lhs + lhs.adjoint());
    Eigen::LDLT<ComplexMatrix> ldlt(h);
    if (ldlt.info() != Eigen::Success)
        throw std::runtime_error("solve_hermitian: factorization failed");
    const RealVector d = ldlt.vectorD().cwiseAbs();
    const double dmax = d.maxCoeff();
    const double dmin = d.minCoeff();
    if (dmin <= 0.0 || dmax / dmin > 1e14)
        throw std::runtime_error("solve_hermitian: lhs singular or ill-conditioned (cond est " +
                                 std::to_string(dmin > 0.0 ? dmax / dmin : 0.0) + ")");
    return ldlt.solve(rhs);
}

// Column-stacking vectorization and its inverse.
inline ComplexVector vec(const ComplexMatrix& m) {
    return Eigen::Map<const ComplexVector>(m.data(), m.size());
}

inline ComplexMatrix unvec(const ComplexVector& v, Eigen::Index rows, Eigen::Index cols) {
    if (v.size() != rows * cols)
        throw std::invalid_argument("unvec: length != rows*cols");
    return Eigen::Map<const ComplexMatrix>(v.data(), rows, cols);
}

// Hermitian PSD square root (eigenvalues clipped at zero). Used for
// sampling correlated complex Gaussian noise.
inline ComplexMatrix hermitian_sqrt(const ComplexMatrix& m) {
    Eigen::SelfAdjointEigenSolver<ComplexMatrix> es(0.5 * (m + m.adjoint()));
    if (es.info() != Eigen::Success)
        throw std::runtime_error("hermitian_sqrt: eigendecomposition failed");
    RealVector lam = es.eigenvalues().cwiseMax(0.0);
    return es.eigenvectors() * lam.cwiseSqrt().asDiagonal() * es.eigenvectors().adjoint();
}

// Spectral radius of a general complex matrix.
inline double spectral_radius(const ComplexMatrix& m) {
    Eigen::ComplexEigenSolver<ComplexMatrix> es(m, /*computeEigenvectors=*/false);
    if (es.info() != Eigen::Success)
        throw std::runtime_error("spectral_radius: eigendecomposition failed");
    return es.eigenvalues().cwiseAbs().maxCoeff();
}

}  // namespace kpin
