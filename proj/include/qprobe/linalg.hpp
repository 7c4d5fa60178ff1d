// linalg.hpp — Dense complex matrix substrate: Kronecker products, vectorization,
// partial trace, matrix exponential, Gibbs states, and eigensolver wrappers.

#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>
#include <unsupported/Eigen/MatrixFunctions>

#define lapack_complex_double std::complex<double>
#define lapack_complex_float std::complex<float>
#include <lapacke.h>

namespace qprobe::linalg {

using ComplexMatrix = Eigen::MatrixXcd;
using ComplexVector = Eigen::VectorXcd;
using RealMatrix = Eigen::MatrixXd;
using RealVector = Eigen::VectorXd;
using Complex = std::complex<double>;

inline constexpr double kHermitianTol = 1e-10;
inline constexpr double kTraceTol = 1e-10;
inline constexpr double kPositivityTol = 1e-9;

inline double max_abs(const ComplexMatrix& a) {
    return a.size() == 0 ? 0.0 : a.cwiseAbs().maxCoeff();
}

inline bool is_finite(const ComplexMatrix& a) {
    return a.allFinite();
}

inline bool is_hermitian(const ComplexMatrix& a, double tol = kHermitianTol) {
    return a.rows() == a.cols() && max_abs(a - a.adjoint()) <= tol;
}

inline void require_square(const ComplexMatrix& a, const char* where) {
    if (a.rows() != a.cols())
        throw std::invalid_argument(std::string(where) + ": matrix must be square");
}

inline void require_hermitian(const ComplexMatrix& a, const char* where,
                              double tol = kHermitianTol) {
    require_square(a, where);
    if (!is_hermitian(a, tol))
        throw std::invalid_argument(std::string(where) + ": matrix is not Hermitian");
}

// ----------------------------------------------------------------------------
// Density matrices

class DensityMatrix {
public:
    DensityMatrix(ComplexMatrix m) : mat_(std::move(m)) {
        if (mat_.rows() != mat_.cols())
            throw std::invalid_argument("DensityMatrix: non-square matrix");
        if (!mat_.allFinite())
            throw std::invalid_argument("DensityMatrix: non-finite entries");
        if (!is_hermitian(mat_, kHermitianTol))
            throw std::invalid_argument("DensityMatrix: not Hermitian within 1e-10");
        if (std::abs(mat_.trace() - Complex(1.0, 0.0)) > kTraceTol)
            throw std::invalid_argument("DensityMatrix: trace differs from 1 beyond 1e-10");
        Eigen::SelfAdjointEigenSolver<ComplexMatrix> es(0.5 * (mat_ + mat_.adjoint()),
                                                        Eigen::EigenvaluesOnly);
        if (es.eigenvalues().minCoeff() < -kPositivityTol)
            throw std::invalid_argument("DensityMatrix: negative eigenvalue below -1e-9");
    }

    Eigen::Index dim() const { return mat_.rows(); }
    const ComplexMatrix& mat() const { return mat_; }

private:
    ComplexMatrix mat_;
};

// Column-stacked density matrix, the working representation of the superoperator
// formalism.
struct VecState {
    ComplexVector entries;

    explicit VecState(ComplexVector v) : entries(std::move(v)) {
        const auto n = entries.size();
        const auto d = static_cast<Eigen::Index>(std::llround(std::sqrt(double(n))));
        if (d * d != n)
            throw std::invalid_argument("VecState: length is not a perfect square");
    }

    Eigen::Index dim2() const { return entries.size(); }
    Eigen::Index dim() const {
        return static_cast<Eigen::Index>(std::llround(std::sqrt(double(entries.size()))));
    }
};

// ----------------------------------------------------------------------------
// Kronecker product and vectorization
//
// Conventions: kron(a,b) row index = i_a*rows(b) + i_b; vec is column stacking,
// vec([[a,b],[c,d]]) = (a,c,b,d)^T, so vec(A B C) = kron(C^T, A) vec(B).

inline ComplexMatrix kron(const ComplexMatrix& a, const ComplexMatrix& b) {
    ComplexMatrix out(a.rows() * b.rows(), a.cols() * b.cols());
    for (Eigen::Index i = 0; i < a.rows(); ++i)
        for (Eigen::Index j = 0; j < a.cols(); ++j)
            out.block(i * b.rows(), j * b.cols(), b.rows(), b.cols()) = a(i, j) * b;
    return out;
}

inline ComplexVector vec(const ComplexMatrix& m) {
    return Eigen::Map<const ComplexVector>(m.data(), m.size());
}

inline ComplexMatrix unvec(const ComplexVector& v, Eigen::Index dim) {
    if (dim * dim != v.size())
        throw std::invalid_argument("unvec: dim^2 does not match vector length");
    return Eigen::Map<const ComplexMatrix>(v.data(), dim, dim);
}

// ----------------------------------------------------------------------------
// Partial trace over an arbitrary factorization; kept factors preserve order.

inline ComplexMatrix partial_trace(const ComplexMatrix& rho,
                                   const std::vector<Eigen::Index>& dims,
                                   const std::vector<int>& keep) {
    require_square(rho, "partial_trace");
    Eigen::Index prod = 1;
    for (auto d : dims) {
        if (d < 1) throw std::invalid_argument("partial_trace: factor dims must be >= 1");
        prod *= d;
    }
    if (prod != rho.rows())
        throw std::invalid_argument("partial_trace: product of dims differs from matrix size");
    if (keep.empty())
        throw std::invalid_argument("partial_trace: keep set must be non-empty");
    const int nf = static_cast<int>(dims.size());
    std::vector<char> kept(nf, 0);
    for (int k : keep) {
        if (k < 0 || k >= nf)
            throw std::invalid_argument("partial_trace: keep index out of range");
        kept[k] = 1;
    }

    // strides of each factor in the composite index (factor 0 is most significant)
    std::vector<Eigen::Index> stride(nf);
    Eigen::Index s = 1;
    for (int f = nf - 1; f >= 0; --f) { stride[f] = s; s *= dims[f]; }

    Eigen::Index dkeep = 1, dtrace = 1;
    std::vector<int> kf, tf;
    for (int f = 0; f < nf; ++f)
        (kept[f] ? (dkeep *= dims[f], kf.push_back(f)) : (dtrace *= dims[f], tf.push_back(f)));

    auto composite = [&](Eigen::Index ik, Eigen::Index it) {
        Eigen::Index idx = 0, r = ik;
        for (int n = static_cast<int>(kf.size()) - 1; n >= 0; --n) {
            idx += (r % dims[kf[n]]) * stride[kf[n]];
            r /= dims[kf[n]];
        }
        r = it;
        for (int n = static_cast<int>(tf.size()) - 1; n >= 0; --n) {
            idx += (r % dims[tf[n]]) * stride[tf[n]];
            r /= dims[tf[n]];
        }
        return idx;
    };

    ComplexMatrix out = ComplexMatrix::Zero(dkeep, dkeep);
    for (Eigen::Index i = 0; i < dkeep; ++i)
        for (Eigen::Index j = 0; j < dkeep; ++j) {
            Complex acc(0, 0);
            for (Eigen::Index t = 0; t < dtrace; ++t)
                acc += rho(composite(i, t), composite(j, t));
            out(i, j) = acc;
        }
    return out;
}

inline DensityMatrix partial_trace(const DensityMatrix& rho,
                                   const std::vector<Eigen::Index>& dims,
                                   const std::vector<int>& keep) {
    return DensityMatrix(partial_trace(rho.mat(), dims, keep));
}

// ----------------------------------------------------------------------------
// Matrix exponential (scaling-and-squaring) and Gibbs states

inline ComplexMatrix expm(const ComplexMatrix& a) {
    require_square(a, "expm");
    return a.exp();
}

inline DensityMatrix gibbs_state(const ComplexMatrix& h, double beta) {
    require_hermitian(h, "gibbs_state");
    if (beta < 0.0 || !std::isfinite(beta))
        throw std::invalid_argument("gibbs_state: beta must be finite and >= 0");
    Eigen::SelfAdjointEigenSolver<ComplexMatrix> es(0.5 * (h + h.adjoint()));
    RealVector w = es.eigenvalues();
    RealVector e = (-beta * (w.array() - w.minCoeff())).exp();
    e /= e.sum();
    ComplexMatrix rho = es.eigenvectors() * e.asDiagonal() * es.eigenvectors().adjoint();
    return DensityMatrix(0.5 * (rho + rho.adjoint()));
}

// ----------------------------------------------------------------------------
// Eigendecompositions with deterministic ordering

// Hermitian: eigenvalues ascending (Eigen's SelfAdjointEigenSolver order).
struct EigHermitian {
    RealVector values;
    ComplexMatrix vectors;
};

inline EigHermitian eig_hermitian(const ComplexMatrix& a) {
    require_hermitian(a, "eig_hermitian");
    Eigen::SelfAdjointEigenSolver<ComplexMatrix> es(0.5 * (a + a.adjoint()));
    if (es.info() != Eigen::Success)
        throw std::runtime_error("eig_hermitian: eigensolver failed");
    return {es.eigenvalues(), es.eigenvectors()};
}

// General: eigenvalues sorted by (descending real part, ascending imaginary part);
// column j of `left` satisfies left.col(j).adjoint() * A = values(j) * left.col(j).adjoint().
struct EigGeneral {
    ComplexVector values;
    ComplexMatrix right;
    ComplexMatrix left;
};

inline EigGeneral eig_general(const ComplexMatrix& a) {
    require_square(a, "eig_general");
    const auto n = a.rows();
    ComplexMatrix work = a, vl(n, n), vr(n, n);
    ComplexVector w(n);
    const int info = LAPACKE_zgeev(LAPACK_COL_MAJOR, 'V', 'V', static_cast<lapack_int>(n),
                                   work.data(), static_cast<lapack_int>(n), w.data(),
                                   vl.data(), static_cast<lapack_int>(n),
                                   vr.data(), static_cast<lapack_int>(n));
    if (info != 0)
        throw std::runtime_error("eig_general: zgeev failed with info=" + std::to_string(info));

    std::vector<Eigen::Index> perm(static_cast<std::size_t>(n));
    std::iota(perm.begin(), perm.end(), 0);
    std::sort(perm.begin(), perm.end(), [&](Eigen::Index i, Eigen::Index j) {
        if (w(i).real() != w(j).real()) return w(i).real() > w(j).real();
        return w(i).imag() < w(j).imag();
    });

    EigGeneral out;
    out.values.resize(n);
    out.right.resize(n, n);
    out.left.resize(n, n);
    for (Eigen::Index k = 0; k < n; ++k) {
        out.values(k) = w(perm[static_cast<std::size_t>(k)]);
        out.right.col(k) = vr.col(perm[static_cast<std::size_t>(k)]);
        out.left.col(k) = vl.col(perm[static_cast<std::size_t>(k)]);
    }
    return out;
}

// ----------------------------------------------------------------------------
// Misc helpers

inline double purity(const ComplexMatrix& rho) {
    return (rho * rho).trace().real();
}

inline ComplexMatrix hermitize(const ComplexMatrix& a) {
    return 0.5 * (a + a.adjoint());
}

inline double spectral_norm(const ComplexMatrix& a) {
    return a.jacobiSvd().singularValues()(0);
}

} // namespace qprobe::linalg
