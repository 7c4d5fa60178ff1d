// liouville.hpp — Vectorized Lindblad generators and their dynamics.
//
// The master equation d rho/dt = -i[H, rho] - (lambda/2) sum_ij f(i,j) [sz_i,[sz_j,rho]]
// is column-stacked into d|rho>>/dt = L |rho>> with
//   L = L_U + lambda * L_D1,  L_U = -i(I (x) H - H^T (x) I).
// Because every Lindblad operator here is a diagonal sigma_z string, the unit-rate
// dissipative part L_D1 is diagonal in the vectorized basis; its diagonal is the
// column-stacked damping kernel K with
//   K_{kl} = -(1/2) sum_ij f(i,j) (z_i(k)-z_i(l)) (z_j(k)-z_j(l)).
//
// Propagation backends:
//   * dense scaling-and-squaring expm           (default for D^2 <= 1024)
//   * adaptive embedded Runge-Kutta (DP 5(4))   (default above, tol 1e-10)
//   * substepped truncated-Taylor exp action    (cheap exact stepping on sparse L)
//   * biorthonormal spectral expansion          (exact rho(t) and d rho/d lambda at
//                                                any t once L is diagonalized)

#pragma once

#include <cmath>
#include <complex>
#include <limits>
#include <optional>
#include <stdexcept>
#include <vector>

#include <Eigen/Sparse>

#include "qprobe/linalg.hpp"
#include "qprobe/model.hpp"

namespace qprobe::liouville {

using linalg::Complex;
using linalg::ComplexMatrix;
using linalg::ComplexVector;
using linalg::DensityMatrix;
using SparseMatrix = Eigen::SparseMatrix<Complex>;

class UnsupportedInputError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class AmbiguousSteadyStateError : public std::runtime_error {
public:
    AmbiguousSteadyStateError(int null_dim)
        : std::runtime_error("steady_state: null space dimension is " +
                             std::to_string(null_dim) + ", expected 1"),
          null_dimension(null_dim) {}
    int null_dimension;
};

// ----------------------------------------------------------------------------
// Generator construction

// -i (I (x) H - H^T (x) I)
inline ComplexMatrix vectorize_unitary(const ComplexMatrix& h) {
    linalg::require_hermitian(h, "vectorize_unitary");
    const auto d = h.rows();
    const ComplexMatrix id = ComplexMatrix::Identity(d, d);
    return Complex(0, -1) * (linalg::kron(id, h) - linalg::kron(h.transpose(), id));
}

inline SparseMatrix vectorize_unitary_sparse(const ComplexMatrix& h) {
    linalg::require_hermitian(h, "vectorize_unitary_sparse");
    const Eigen::Index d = h.rows();
    std::vector<Eigen::Triplet<Complex>> trip;
    trip.reserve(static_cast<std::size_t>(2 * d * d));
    for (Eigen::Index k = 0; k < d; ++k)
        for (Eigen::Index kp = 0; kp < d; ++kp) {
            if (h(k, kp) == Complex(0, 0)) continue;
            const Complex v = Complex(0, -1) * h(k, kp);
            for (Eigen::Index l = 0; l < d; ++l)
                trip.emplace_back(l * d + k, l * d + kp, v);   // I (x) H
            const Complex vt = Complex(0, 1) * h(k, kp);       // +(H^T (x) I) at (kp*d+m, k*d+m)
            for (Eigen::Index m = 0; m < d; ++m)
                trip.emplace_back(kp * d + m, k * d + m, vt);
        }
    SparseMatrix out(d * d, d * d);
    out.setFromTriplets(trip.begin(), trip.end());
    return out;
}

// Damping kernel K of the unit-rate dissipator (real, symmetric, zero diagonal).
inline Eigen::MatrixXd dissipator_kernel(const model::DissipatorSpec& spec, int n_total) {
    if (spec.n_sites > n_total)
        throw std::invalid_argument("dissipator_kernel: spec sites exceed n_total");
    const Eigen::Index dim = Eigen::Index(1) << n_total;
    for (const auto& t : spec.terms)
        if (t.site_i < 1 || t.site_i > n_total || t.site_j < 1 || t.site_j > n_total)
            throw std::invalid_argument("dissipator_kernel: site index out of range");

    Eigen::MatrixXd z(spec.n_sites, dim);
    for (int s = 1; s <= spec.n_sites; ++s)
        z.row(s - 1) = model::sigma_z_values(s, n_total).transpose();
    const Eigen::MatrixXd f = model::weight_matrix(spec);
    const Eigen::MatrixXd q = z.transpose() * f * z;
    const Eigen::VectorXd d = q.diagonal();
    return -0.5 * (d.replicate(1, dim) - 2.0 * q + d.transpose().replicate(dim, 1));
}

// Unit-rate vectorized dissipator. All jump operators are diagonal sigma_z strings,
// so the superoperator is the diagonal matrix carrying the column-stacked kernel.
inline ComplexMatrix vectorize_dissipator(const model::DissipatorSpec& spec, int n_total) {
    const Eigen::MatrixXd k = dissipator_kernel(spec, n_total);
    const Eigen::VectorXd kv = Eigen::Map<const Eigen::VectorXd>(k.data(), k.size());
    return kv.cast<Complex>().asDiagonal();
}

// ----------------------------------------------------------------------------
// VectorizedLiouvillian: L = l_unitary + lambda * l_dissipative_unit.
// The dense D^2 x D^2 parts are materialized on demand; the sparse unitary part
// and the diagonal kernel drive the large-system code paths.

struct VectorizedLiouvillian {
    Eigen::Index dim{0};
    Eigen::Index dim2{0};
    double lambda{0.0};
    ComplexMatrix h;             // D x D Hamiltonian
    Eigen::MatrixXd kernel;      // D x D damping kernel of the unit-rate dissipator
    Eigen::VectorXd kernel_vec;  // column-stacked kernel (diagonal of L_D1)
    SparseMatrix l_unitary_sparse;

    ComplexMatrix unitary_matrix() const { return ComplexMatrix(l_unitary_sparse); }
    ComplexMatrix dissipative_unit_matrix() const {
        return kernel_vec.cast<Complex>().asDiagonal();
    }
    ComplexMatrix full_matrix() const {
        ComplexMatrix out = unitary_matrix();
        out.diagonal() += lambda * kernel_vec.cast<Complex>();
        return out;
    }

    // y = L x
    void apply(const Eigen::Ref<const ComplexVector>& x, Eigen::Ref<ComplexVector> y) const {
        y.noalias() = l_unitary_sparse * x;
        y.array() += lambda * kernel_vec.array().cast<Complex>() * x.array();
    }
    // y = L_D1 x
    void apply_dissipative_unit(const Eigen::Ref<const ComplexVector>& x,
                                Eigen::Ref<ComplexVector> y) const {
        y.array() = kernel_vec.array().cast<Complex>() * x.array();
    }

    double one_norm() const {
        Eigen::VectorXd col = Eigen::VectorXd::Zero(dim2);
        for (int k = 0; k < l_unitary_sparse.outerSize(); ++k)
            for (SparseMatrix::InnerIterator it(l_unitary_sparse, k); it; ++it)
                col(it.col()) += std::abs(it.value());
        col += lambda * kernel_vec.cwiseAbs();
        return col.maxCoeff();
    }
    double dissipative_one_norm() const { return kernel_vec.cwiseAbs().maxCoeff(); }
};

inline VectorizedLiouvillian make_liouvillian(const ComplexMatrix& h,
                                              const model::DissipatorSpec& spec,
                                              int n_total, double lambda) {
    if (lambda < 0.0) throw std::invalid_argument("make_liouvillian: lambda must be >= 0");
    if ((Eigen::Index(1) << n_total) != h.rows())
        throw std::invalid_argument("make_liouvillian: H dimension does not match n_total");
    VectorizedLiouvillian liou;
    liou.dim = h.rows();
    liou.dim2 = liou.dim * liou.dim;
    liou.lambda = lambda;
    liou.h = h;
    liou.kernel = dissipator_kernel(spec, n_total);
    liou.kernel_vec = Eigen::Map<const Eigen::VectorXd>(liou.kernel.data(), liou.kernel.size());
    liou.l_unitary_sparse = vectorize_unitary_sparse(h);
    return liou;
}

// ----------------------------------------------------------------------------
// Adaptive Dormand-Prince 5(4) integrator for y' = f(y), fixed tolerances 1e-10.

struct OdeOptions {
    double abs_tol{1e-10};
    double rel_tol{1e-10};
    double max_step_factor{5.0};
    double min_step_factor{0.2};
};

template <typename Rhs>
inline ComplexVector integrate_dopri5(const Rhs& f, ComplexVector y, double t_final,
                                      const OdeOptions& opt = {}) {
    if (t_final < 0) throw std::invalid_argument("integrate_dopri5: negative time");
    if (t_final == 0) return y;

    const Eigen::Index n = y.size();
    ComplexVector k1(n), k2(n), k3(n), k4(n), k5(n), k6(n), k7(n), ytmp(n), ynew(n);
    f(y, k1);

    double t = 0;
    double h = std::min(t_final, 1e-3);
    const int max_steps = 50'000'000;
    for (int step = 0; step < max_steps && t < t_final; ++step) {
        h = std::min(h, t_final - t);

        ytmp = y + h * (1.0 / 5) * k1;
        f(ytmp, k2);
        ytmp = y + h * ((3.0 / 40) * k1 + (9.0 / 40) * k2);
        f(ytmp, k3);
        ytmp = y + h * ((44.0 / 45) * k1 + (-56.0 / 15) * k2 + (32.0 / 9) * k3);
        f(ytmp, k4);
        ytmp = y + h * ((19372.0 / 6561) * k1 + (-25360.0 / 2187) * k2 +
                        (64448.0 / 6561) * k3 + (-212.0 / 729) * k4);
        f(ytmp, k5);
        ytmp = y + h * ((9017.0 / 3168) * k1 + (-355.0 / 33) * k2 + (46732.0 / 5247) * k3 +
                        (49.0 / 176) * k4 + (-5103.0 / 18656) * k5);
        f(ytmp, k6);
        ynew = y + h * ((35.0 / 384) * k1 + (500.0 / 1113) * k3 + (125.0 / 192) * k4 +
                        (-2187.0 / 6784) * k5 + (11.0 / 84) * k6);
        f(ynew, k7);

        // embedded 4th-order error estimate
        ytmp = h * ((35.0 / 384 - 5179.0 / 57600) * k1 + (500.0 / 1113 - 7571.0 / 16695) * k3 +
                    (125.0 / 192 - 393.0 / 640) * k4 + (-2187.0 / 6784 + 92097.0 / 339200) * k5 +
                    (11.0 / 84 - 187.0 / 2100) * k6 + (-1.0 / 40) * k7);
        double err = 0;
        for (Eigen::Index i = 0; i < n; ++i) {
            const double sc = opt.abs_tol +
                              opt.rel_tol * std::max(std::abs(y(i)), std::abs(ynew(i)));
            err = std::max(err, std::abs(ytmp(i)) / sc);
        }
        if (err <= 1.0) {
            t += h;
            y.swap(ynew);
            k1.swap(k7); // FSAL
        }
        const double fac = (err > 0) ? 0.9 * std::pow(err, -0.2) : opt.max_step_factor;
        h *= std::clamp(fac, opt.min_step_factor, opt.max_step_factor);
        if (h <= 1e-15 * std::max(1.0, t_final))
            throw std::runtime_error("integrate_dopri5: step size underflow");
    }
    if (t < t_final) throw std::runtime_error("integrate_dopri5: step budget exhausted");
    return y;
}

// ----------------------------------------------------------------------------
// Substepped truncated-Taylor evaluation of y = e^{tA} x. The substep count is
// chosen so |t| * ||A||_1 / s <= theta; within each substep the series is summed
// until terms fall below 1e-16 of the accumulator.

template <typename Apply>
inline ComplexVector taylor_expm_apply(const Apply& apply_a, double a_norm1, double t,
                                       ComplexVector x) {
    if (t == 0 || a_norm1 == 0) return x;
    constexpr double theta = 2.0;
    constexpr int m_max = 40;
    const long s = std::max<long>(1, static_cast<long>(std::ceil(std::abs(t) * a_norm1 / theta)));
    const double dt = t / static_cast<double>(s);

    const Eigen::Index n = x.size();
    ComplexVector term(n), tmp(n), acc(n);
    for (long step = 0; step < s; ++step) {
        term = x;
        acc = x;
        for (int k = 1; k <= m_max; ++k) {
            apply_a(term, tmp);
            term = (dt / k) * tmp;
            acc += term;
            if (term.template lpNorm<1>() <= 1e-16 * acc.template lpNorm<1>()) break;
        }
        x.swap(acc);
    }
    return x;
}

// ----------------------------------------------------------------------------
// Propagation

enum class Backend { automatic, dense_expm, ode, taylor };

inline constexpr Eigen::Index kDenseExpmLimit = 1024; // D^2 at and below: dense expm

inline ComplexVector propagate_vec(const VectorizedLiouvillian& liou, const ComplexVector& x0,
                                   double t, Backend backend = Backend::automatic) {
    if (t < 0) throw std::invalid_argument("propagate: t must be >= 0");
    if (x0.size() != liou.dim2) throw std::invalid_argument("propagate: dimension mismatch");
    if (backend == Backend::automatic)
        backend = (liou.dim2 <= kDenseExpmLimit) ? Backend::dense_expm : Backend::ode;
    switch (backend) {
        case Backend::dense_expm:
            return linalg::expm(t * liou.full_matrix()) * x0;
        case Backend::ode:
            return integrate_dopri5(
                [&](const ComplexVector& y, ComplexVector& dy) { liou.apply(y, dy); }, x0, t);
        case Backend::taylor:
            return taylor_expm_apply(
                [&](const ComplexVector& y, ComplexVector& dy) { liou.apply(y, dy); },
                liou.one_norm(), t, x0);
        default:
            throw std::logic_error("propagate: unreachable backend");
    }
}

inline DensityMatrix propagate(const VectorizedLiouvillian& liou, const DensityMatrix& rho0,
                               double t, Backend backend = Backend::automatic) {
    const ComplexVector xt = propagate_vec(liou, linalg::vec(rho0.mat()), t, backend);
    return DensityMatrix(linalg::hermitize(linalg::unvec(xt, liou.dim)));
}

// Exact forward sensitivity: integrates the block system
//   d/dt (|rho>>, |d_lambda rho>>) = ((L, 0), (L_D1, L)) (|rho>>, |d_lambda rho>>)
// with |d_lambda rho>>(0) = 0. Returns (rho(t), d rho(t)/d lambda).
inline std::pair<DensityMatrix, ComplexMatrix> propagate_with_lambda_derivative(
    const VectorizedLiouvillian& liou, const DensityMatrix& rho0, double t,
    Backend backend = Backend::automatic) {
    if (t < 0)
        throw std::invalid_argument("propagate_with_lambda_derivative: t must be >= 0");
    const Eigen::Index d2 = liou.dim2;
    ComplexVector x0(2 * d2);
    x0.head(d2) = linalg::vec(rho0.mat());
    x0.tail(d2).setZero();

    auto block_apply = [&](const ComplexVector& y, ComplexVector& dy) {
        if (dy.size() != y.size()) dy.resize(y.size());
        ComplexVector tmp(d2);
        liou.apply(y.head(d2), tmp);
        dy.head(d2) = tmp;
        liou.apply(y.tail(d2), tmp);
        liou.apply_dissipative_unit(y.head(d2), dy.tail(d2));
        dy.tail(d2) += tmp;
    };

    if (backend == Backend::automatic) backend = Backend::ode;
    ComplexVector xt;
    switch (backend) {
        case Backend::ode:
            xt = integrate_dopri5(block_apply, x0, t);
            break;
        case Backend::taylor:
            xt = taylor_expm_apply(block_apply,
                                   liou.one_norm() + liou.dissipative_one_norm(), t, x0);
            break;
        default:
            throw std::invalid_argument(
                "propagate_with_lambda_derivative: backend must be ode or taylor");
    }

    DensityMatrix rho_t(linalg::hermitize(linalg::unvec(xt.head(d2), liou.dim)));
    ComplexMatrix drho = linalg::unvec(xt.tail(d2), liou.dim);
    if (linalg::max_abs(drho - drho.adjoint()) > 1e-6 * std::max(1.0, linalg::max_abs(drho)))
        throw std::runtime_error("propagate_with_lambda_derivative: derivative lost Hermiticity");
    drho = linalg::hermitize(drho);
    return {std::move(rho_t), std::move(drho)};
}

// ----------------------------------------------------------------------------
// Spectrum, gap, steady state

struct LiouvillianMode {
    Complex rapidity;     // l_alpha
    double gamma;         // -Re l_alpha
    double omega;         // -Im l_alpha
    ComplexVector r_vec;  // right eigenvector |R~_alpha>>
    ComplexVector l_vec;  // left eigenvector as a ket, <<L~_alpha| = l_vec^dagger
    bool degenerate{false};
};

struct LiouvillianSpectrum {
    std::vector<LiouvillianMode> modes; // sorted by (descending Re l, ascending Im l)
    double gap{0.0};
    bool has_degenerate{false};
};

inline constexpr double kNullModeTol = 1e-9;

inline LiouvillianSpectrum spectrum(const VectorizedLiouvillian& liou) {
    if (liou.dim2 > 4096)
        throw std::invalid_argument("spectrum: dense solve limited to D^2 <= 4096");
    const linalg::EigGeneral eg = linalg::eig_general(liou.full_matrix());

    LiouvillianSpectrum out;
    out.modes.resize(static_cast<std::size_t>(liou.dim2));
    for (Eigen::Index a = 0; a < liou.dim2; ++a) {
        LiouvillianMode& mode = out.modes[static_cast<std::size_t>(a)];
        mode.rapidity = eg.values(a);
        mode.gamma = -eg.values(a).real();
        mode.omega = -eg.values(a).imag();
        ComplexVector r = eg.right.col(a);
        ComplexVector l = eg.left.col(a);
        const Complex s = l.dot(r); // <<L|R>> with conjugation on the left
        if (std::abs(s) < 1e-12) {
            mode.degenerate = true;
            out.has_degenerate = true;
        } else {
            const Complex rs = std::sqrt(s);
            r /= rs;
            l /= std::conj(rs);
            // deterministic phase: largest-|.| component of r made real positive
            Eigen::Index imax;
            r.cwiseAbs().maxCoeff(&imax);
            const Complex ph = r(imax) / std::abs(r(imax));
            r /= ph;
            l /= ph;
        }
        mode.r_vec = std::move(r);
        mode.l_vec = std::move(l);
    }

    double gap = std::numeric_limits<double>::infinity();
    for (const auto& m : out.modes)
        if (std::abs(m.rapidity) > kNullModeTol) gap = std::min(gap, m.gamma);
    out.gap = std::isfinite(gap) ? gap : 0.0;
    return out;
}

inline DensityMatrix steady_state(const VectorizedLiouvillian& liou) {
    const LiouvillianSpectrum sp = spectrum(liou);
    int n_null = 0;
    const LiouvillianMode* null_mode = nullptr;
    for (const auto& m : sp.modes)
        if (std::abs(m.rapidity) <= kNullModeTol) {
            ++n_null;
            null_mode = &m;
        }
    if (n_null != 1) throw AmbiguousSteadyStateError(n_null);

    ComplexMatrix rho = linalg::unvec(null_mode->r_vec, liou.dim);
    rho = linalg::hermitize(rho);
    rho /= rho.trace();
    ComplexVector residual(liou.dim2);
    liou.apply(linalg::vec(rho), residual);
    if (residual.cwiseAbs().maxCoeff() > 1e-9)
        throw std::runtime_error("steady_state: residual of null mode exceeds 1e-9");
    return DensityMatrix(rho);
}

// ----------------------------------------------------------------------------
// Analytic single-qubit oracle: the explicit 4x4 generator of H = (omega0/2) sx
// with the sigma_z double-commutator dissipator at rate lambda, diagonalized
// numerically; rho(t) = sum_alpha c_alpha e^{l_alpha t} R~_alpha.

inline ComplexMatrix single_qubit_generator_4x4(double omega0, double lambda) {
    const Complex iw(0, 0.5 * omega0);
    ComplexMatrix l(4, 4);
    l << 0, -iw, iw, 0,
        -iw, -2.0 * lambda, 0, iw,
        iw, 0, -2.0 * lambda, -iw,
        0, iw, -iw, 0;
    return l;
}

inline DensityMatrix analytic_single_qubit(double omega0, double lambda,
                                           const DensityMatrix& rho0, double t) {
    if (rho0.dim() != 2)
        throw std::invalid_argument("analytic_single_qubit: input must be 2x2");
    if (std::abs(lambda - omega0) <= 1e-12 * std::max(std::abs(omega0), 1.0))
        throw UnsupportedInputError(
            "analytic_single_qubit: lambda == omega0 is an exceptional point");
    const linalg::EigGeneral eg = linalg::eig_general(single_qubit_generator_4x4(omega0, lambda));
    // coefficients from the exact dual basis VR^{-1}; valid for any diagonalizable
    // generator, including the degenerate lambda = 0 case
    const ComplexVector c = eg.right.partialPivLu().solve(linalg::vec(rho0.mat()));
    ComplexVector xt = ComplexVector::Zero(4);
    for (Eigen::Index a = 0; a < 4; ++a)
        xt += c(a) * std::exp(eg.values(a) * t) * eg.right.col(a);
    return DensityMatrix(linalg::hermitize(linalg::unvec(xt, 2)));
}

// Bloch vector (tau_x, tau_y, tau_z) of a qubit state; tau_k = Tr(sigma_k rho)
// in the sigma_z = diag(-1, +1) convention.
inline Eigen::Vector3d bloch_vector(const ComplexMatrix& rho) {
    Eigen::Vector3d tau;
    tau(0) = (rho(0, 1) + rho(1, 0)).real();
    tau(1) = (Complex(0, 1) * (rho(0, 1) - rho(1, 0))).real();
    tau(2) = (rho(1, 1) - rho(0, 0)).real();
    return tau;
}

// ----------------------------------------------------------------------------
// SpectralPropagator: biorthonormal eigenexpansion of L giving rho(t) and the
// exact lambda-derivative at arbitrary times for O(D^2) per sample. Derivative
// terms with nearly equal rapidities are evaluated through the stable divided
// difference phi(t) = e^{l_a t} t phi1((l_b - l_a) t).

inline Complex phi1(Complex z) {
    if (std::abs(z) < 1e-3)
        return 1.0 + z * (0.5 + z * (1.0 / 6 + z * (1.0 / 24 + z / 120.0)));
    return (std::exp(z) - 1.0) / z;
}

class SpectralPropagator {
public:
    struct ClosePair {
        Eigen::Index alpha, beta;
        Complex m_ab; // <<L~_a| L_D1 |R~_b>>
    };

    SpectralPropagator(const VectorizedLiouvillian& liou, double close_tol = 1e-8)
        : dim_(liou.dim), dim2_(liou.dim2) {
        const linalg::EigGeneral eg = linalg::eig_general(liou.full_matrix());
        w_ = eg.values;
        vr_ = eg.right;
        // exact dual basis from VR^{-1}: biorthonormal even across exactly
        // degenerate (but diagonalizable) eigenvalues
        Eigen::PartialPivLU<ComplexMatrix> lu(vr_);
        vl_ = lu.inverse().adjoint();
        const double cond_proxy = vr_.cwiseAbs().maxCoeff() * vl_.cwiseAbs().maxCoeff() *
                                  double(dim2_);
        if (!vl_.allFinite() || cond_proxy > 1e12)
            throw std::runtime_error(
                "SpectralPropagator: eigenvector basis is near-defective");

        const ComplexVector kv = liou.kernel_vec.cast<Complex>();
        m_.noalias() = vl_.adjoint() * (kv.asDiagonal() * vr_);
        mdiag_ = m_.diagonal();

        s_ = m_;
        s_.diagonal().setZero();
        for (Eigen::Index b = 0; b < dim2_; ++b)
            for (Eigen::Index a = 0; a < dim2_; ++a) {
                if (a == b) continue;
                const Complex dw = w_(b) - w_(a);
                if (std::abs(dw) < close_tol) {
                    if (m_(a, b) != Complex(0, 0)) close_.push_back({a, b, m_(a, b)});
                    s_(a, b) = Complex(0, 0);
                } else {
                    s_(a, b) = m_(a, b) / dw;
                }
            }
        t1_.noalias() = vr_ * s_;
    }

    Eigen::Index dim() const { return dim_; }
    const ComplexVector& rapidities() const { return w_; }

    struct State {
        ComplexVector c;       // <<L~|rho0>>
        ComplexVector q;       // S c
        ComplexVector cm;      // mdiag .* c
        std::vector<Complex> close_coeff; // M_ab c_b per close pair
    };

    State prepare(const ComplexMatrix& rho0) const {
        State st;
        st.c = vl_.adjoint() * linalg::vec(rho0);
        st.q.noalias() = s_ * st.c;
        st.cm = mdiag_.array() * st.c.array();
        st.close_coeff.reserve(close_.size());
        for (const auto& cp : close_) st.close_coeff.push_back(cp.m_ab * st.c(cp.beta));
        return st;
    }

    ComplexMatrix rho(const State& st, double t) const {
        const ComplexVector e = (w_ * t).array().exp();
        return linalg::unvec(vr_ * (st.c.array() * e.array()).matrix(), dim_);
    }

    // d rho(t) / d lambda, exact within the eigenexpansion
    ComplexMatrix drho(const State& st, double t) const {
        const ComplexVector e = (w_ * t).array().exp();
        ComplexVector v = t1_ * (st.c.array() * e.array()).matrix();
        v.noalias() -= vr_ * (st.q.array() * e.array()).matrix();
        v.noalias() += vr_ * (t * st.cm.array() * e.array()).matrix();
        for (std::size_t p = 0; p < close_.size(); ++p) {
            const auto& cp = close_[p];
            const Complex z = (w_(cp.beta) - w_(cp.alpha)) * t;
            const Complex phi = std::exp(w_(cp.alpha) * t) * t * phi1(z);
            v += st.close_coeff[p] * phi * vr_.col(cp.alpha);
        }
        return linalg::unvec(v, dim_);
    }

    // Reduced variants onto the last tensor factor (the probe qubit): O(D^2) per call.
    struct ProbeState {
        State base;
        Eigen::Matrix<Complex, 4, Eigen::Dynamic> pr;   // P VR
        Eigen::Matrix<Complex, 4, Eigen::Dynamic> pg1;  // P (T1 diag(c) - VR diag(q))
        Eigen::Matrix<Complex, 4, Eigen::Dynamic> prk;  // P VR diag(mdiag .* c)
        Eigen::Matrix<Complex, 4, Eigen::Dynamic> pr_close; // P VR columns of close alphas
    };

    ProbeState prepare_probe(const ComplexMatrix& rho0) const {
        ProbeState ps;
        ps.base = prepare(rho0);
        ps.pr = reduce_columns(vr_);
        Eigen::Matrix<Complex, 4, Eigen::Dynamic> pt1 = reduce_columns(t1_);
        ps.pg1.resize(4, dim2_);
        ps.prk.resize(4, dim2_);
        for (Eigen::Index a = 0; a < dim2_; ++a) {
            ps.pg1.col(a) = pt1.col(a) * ps.base.c(a) - ps.pr.col(a) * ps.base.q(a);
            ps.prk.col(a) = ps.pr.col(a) * ps.base.cm(a);
        }
        ps.pr_close.resize(4, static_cast<Eigen::Index>(close_.size()));
        for (std::size_t p = 0; p < close_.size(); ++p)
            ps.pr_close.col(static_cast<Eigen::Index>(p)) = ps.pr.col(close_[p].alpha);
        return ps;
    }

    Eigen::Matrix2cd probe_rho(const ProbeState& ps, double t) const {
        const ComplexVector e = (w_ * t).array().exp();
        const Eigen::Vector4cd u = ps.pr * (ps.base.c.array() * e.array()).matrix();
        return to2x2(u);
    }

    Eigen::Matrix2cd probe_drho(const ProbeState& ps, double t) const {
        const ComplexVector e = (w_ * t).array().exp();
        Eigen::Vector4cd u = ps.pg1 * e + ps.prk * (t * e);
        for (std::size_t p = 0; p < close_.size(); ++p) {
            const auto& cp = close_[p];
            const Complex z = (w_(cp.beta) - w_(cp.alpha)) * t;
            const Complex phi = std::exp(w_(cp.alpha) * t) * t * phi1(z);
            u += ps.base.close_coeff[p] * phi *
                 ps.pr_close.col(static_cast<Eigen::Index>(p));
        }
        return to2x2(u);
    }

    std::size_t close_pair_count() const { return close_.size(); }

private:
    // Partial trace of each column (viewed as a D x D matrix) onto the last
    // 2-dimensional factor; rows ordered as vec of the 2x2 result.
    Eigen::Matrix<Complex, 4, Eigen::Dynamic> reduce_columns(const ComplexMatrix& cols) const {
        const Eigen::Index half = dim_ / 2;
        Eigen::Matrix<Complex, 4, Eigen::Dynamic> out(4, cols.cols());
        out.setZero();
        for (Eigen::Index col = 0; col < cols.cols(); ++col)
            for (Eigen::Index i = 0; i < 2; ++i)
                for (Eigen::Index j = 0; j < 2; ++j) {
                    Complex acc(0, 0);
                    for (Eigen::Index a = 0; a < half; ++a)
                        acc += cols((a * 2 + j) * dim_ + (a * 2 + i), col);
                    out(j * 2 + i, col) = acc; // vec ordering of the 2x2 block
                }
        return out;
    }

    static Eigen::Matrix2cd to2x2(const Eigen::Vector4cd& u) {
        Eigen::Matrix2cd m;
        m << u(0), u(2), u(1), u(3); // column-stacked
        return m;
    }

    Eigen::Index dim_, dim2_;
    ComplexVector w_;
    ComplexMatrix vr_, vl_, m_, s_, t1_;
    ComplexVector mdiag_;
    std::vector<ClosePair> close_;
};

} // namespace qprobe::liouville
