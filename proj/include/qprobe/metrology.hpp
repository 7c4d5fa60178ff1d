// metrology.hpp — Quantum Fisher information of the probe qubit and everything
// built on it: SLD, Cramer-Rao bound, the end-to-end QFI pipeline with exact
// lambda-sensitivity, time/angle optimization, and parameter scans.

#pragma once

#include <algorithm>
#include <array>
#include <atomic>
#include <cmath>
#include <functional>
#include <optional>
#include <stdexcept>
#include <thread>
#include <vector>

#include "qprobe/liouville.hpp"
#include "qprobe/model.hpp"

namespace qprobe::metrology {

using linalg::Complex;
using linalg::ComplexMatrix;
using linalg::ComplexVector;
using linalg::DensityMatrix;

inline constexpr double kEigenTermTol = 1e-12; // drop QFI terms with rho_i + rho_j below this

// ----------------------------------------------------------------------------
// SLD and QFI formulas

// Symmetric logarithmic derivative: solves d rho = (L rho + rho L)/2 in the
// eigenbasis of rho, dropping removable-singularity terms.
inline ComplexMatrix sld(const DensityMatrix& rho, const ComplexMatrix& drho) {
    if (drho.rows() != rho.dim() || drho.cols() != rho.dim())
        throw std::invalid_argument("sld: dimension mismatch");
    const double scale = std::max(1.0, linalg::max_abs(drho));
    if (linalg::max_abs(drho - drho.adjoint()) > 1e-8 * scale)
        throw std::invalid_argument("sld: drho is not Hermitian within tolerance");
    if (std::abs(drho.trace()) > 1e-8 * scale)
        throw std::invalid_argument("sld: drho is not traceless within tolerance");

    const linalg::EigHermitian es = linalg::eig_hermitian(rho.mat());
    const ComplexMatrix dr = es.vectors.adjoint() * drho * es.vectors;
    ComplexMatrix l = ComplexMatrix::Zero(rho.dim(), rho.dim());
    for (Eigen::Index i = 0; i < rho.dim(); ++i)
        for (Eigen::Index j = 0; j < rho.dim(); ++j) {
            const double denom = es.values(i) + es.values(j);
            if (denom > kEigenTermTol) l(i, j) = 2.0 * dr(i, j) / denom;
        }
    return linalg::hermitize(es.vectors * l * es.vectors.adjoint());
}

// G = sum_{ij} 2 |<i|drho|j>|^2 / (rho_i + rho_j) in the eigenbasis of rho.
inline double qfi_general(const DensityMatrix& rho, const ComplexMatrix& drho) {
    if (drho.rows() != rho.dim() || drho.cols() != rho.dim())
        throw std::invalid_argument("qfi_general: dimension mismatch");
    const linalg::EigHermitian es = linalg::eig_hermitian(rho.mat());
    const ComplexMatrix dr = es.vectors.adjoint() * drho * es.vectors;
    double g = 0.0;
    for (Eigen::Index i = 0; i < rho.dim(); ++i)
        for (Eigen::Index j = 0; j < rho.dim(); ++j) {
            const double denom = es.values(i) + es.values(j);
            if (denom > kEigenTermTol) g += 2.0 * std::norm(dr(i, j)) / denom;
        }
    return std::max(g, 0.0);
}

// Qubit eigen-split formula: classical term plus 2 kappa [ |<psi_-|d psi_+>|^2 +
// |<psi_+|d psi_->|^2 ] with kappa = (1 - 2 rho_+)^2 and the eigenvector
// derivatives taken from first-order perturbation theory.
inline double qfi_qubit(const DensityMatrix& rho, const ComplexMatrix& drho) {
    if (rho.dim() != 2 || drho.rows() != 2 || drho.cols() != 2)
        throw std::invalid_argument("qfi_qubit: qubit input required");
    const linalg::EigHermitian es = linalg::eig_hermitian(rho.mat());
    const ComplexMatrix dr = es.vectors.adjoint() * drho * es.vectors;

    double g = 0.0;
    for (Eigen::Index j = 0; j < 2; ++j)
        if (es.values(j) > kEigenTermTol) g += dr(j, j).real() * dr(j, j).real() / es.values(j);

    const double delta = es.values(1) - es.values(0); // rho_+ - rho_-
    const double kappa = delta * delta;               // (1 - 2 rho_+)^2 at unit trace
    if (delta > 1e-14) {
        const double cross = std::norm(dr(0, 1)) / (delta * delta) +
                             std::norm(dr(1, 0)) / (delta * delta);
        g += 2.0 * kappa * cross;
    } else {
        g += 4.0 * std::norm(dr(0, 1)); // kappa / delta^2 -> 1 limit
    }
    return std::max(g, 0.0);
}

// Quantum Cramer-Rao bound 1/(M G); empty when G <= 0 (unbounded variance).
inline std::optional<double> cramer_rao_bound(double g, int m) {
    if (m < 1) throw std::invalid_argument("cramer_rao_bound: M must be >= 1");
    if (!(g > 0.0)) return std::nullopt;
    return 1.0 / (double(m) * g);
}

// ----------------------------------------------------------------------------
// Experiment records: the full parameter set of one probing setup.

enum class ExperimentKind { single_qubit, two_qubit, ising_probe };

struct Experiment {
    ExperimentKind kind{ExperimentKind::single_qubit};
    double omega0{1.0};     // system splitting (single- and two-qubit schemes)
    double omega_p{0.3};    // probe splitting (two-qubit scheme)
    double g_coupling{0.2}; // zz coupling (two-qubit scheme)
    model::IsingChainSpec chain{1, 1.0, 1.0};
    model::ProbeCouplingSpec probe_coupling{0.5, 0.5};
    model::NoiseKind noise_kind{model::NoiseKind::local};
    double rc_over_a{1.0};
    std::optional<std::vector<int>> noise_sites;
    double lambda{0.0};
    double beta{0.0};
    model::BlochState probe_state{0.0, 0.0};
};

inline bool has_probe(const Experiment& e) { return e.kind != ExperimentKind::single_qubit; }

inline int n_system_sites(const Experiment& e) {
    return e.kind == ExperimentKind::ising_probe ? e.chain.n_sites : 1;
}

inline int n_total_sites(const Experiment& e) {
    return n_system_sites(e) + (has_probe(e) ? 1 : 0);
}

inline ComplexMatrix system_hamiltonian(const Experiment& e) {
    switch (e.kind) {
        case ExperimentKind::single_qubit:
        case ExperimentKind::two_qubit:
            return 0.5 * e.omega0 * model::pauli(model::PauliAxis::x);
        case ExperimentKind::ising_probe:
            return model::ising_hamiltonian(e.chain);
    }
    throw std::logic_error("system_hamiltonian: unreachable");
}

inline ComplexMatrix full_hamiltonian(const Experiment& e) {
    switch (e.kind) {
        case ExperimentKind::single_qubit:
            return system_hamiltonian(e);
        case ExperimentKind::two_qubit:
            return model::two_qubit_hamiltonian(
                model::TwoQubitProbeModel(e.omega0, e.omega_p, e.g_coupling, e.lambda));
        case ExperimentKind::ising_probe:
            return model::ising_probe_hamiltonian(e.chain, e.probe_coupling);
    }
    throw std::logic_error("full_hamiltonian: unreachable");
}

// System Gibbs state tensored with the pure probe; a bare pure state for the
// single-qubit scheme (its dynamics runs from the Bloch-angle state directly).
inline DensityMatrix initial_state(const Experiment& e) {
    if (!has_probe(e)) return model::bloch_pure_state(e.probe_state);
    return model::initial_product_state(system_hamiltonian(e), e.beta, e.probe_state);
}

inline model::DissipatorSpec dissipator(const Experiment& e, double lambda_ignored = 0.0) {
    (void)lambda_ignored;
    model::NoiseSpec noise(e.noise_kind, e.lambda, e.rc_over_a, e.noise_sites);
    return model::collapse_dissipator_spec(noise, n_system_sites(e));
}

inline liouville::VectorizedLiouvillian make_liouvillian(const Experiment& e, double lambda) {
    return liouville::make_liouvillian(full_hamiltonian(e), dissipator(e), n_total_sites(e),
                                       lambda);
}

// ----------------------------------------------------------------------------
// QFI records and the end-to-end pipeline

enum class QFIMethod { qubit_formula, general_formula };
enum class DerivativeSource { exact_sensitivity, finite_difference };

struct QFIRecord {
    double lambda{0.0};
    double t{0.0};
    double g_value{0.0};
    double q_value{0.0};
    QFIMethod method{QFIMethod::qubit_formula};
    DerivativeSource derivative_source{DerivativeSource::exact_sensitivity};
};

enum class SensitivityBackend { automatic, spectral, block_taylor, block_ode };

inline constexpr Eigen::Index kSpectralLimit = 1024; // largest D^2 diagonalized by default

namespace detail {

inline QFIRecord record_from_probe(double lambda, double t, const ComplexMatrix& rho_p_raw,
                                   const ComplexMatrix& drho_p_raw, DerivativeSource src) {
    ComplexMatrix rho_p = linalg::hermitize(rho_p_raw);
    rho_p /= rho_p.trace().real();
    const ComplexMatrix drho_p = linalg::hermitize(drho_p_raw);
    QFIRecord rec;
    rec.lambda = lambda;
    rec.t = t;
    rec.g_value = qfi_qubit(DensityMatrix(rho_p), drho_p);
    rec.q_value = lambda * lambda * rec.g_value;
    rec.method = QFIMethod::qubit_formula;
    rec.derivative_source = src;
    return rec;
}

inline std::pair<ComplexMatrix, ComplexMatrix> probe_pair_from_full(
    const Experiment& e, const ComplexMatrix& rho_full, const ComplexMatrix& drho_full) {
    const Eigen::Index half = rho_full.rows() / 2;
    const std::vector<Eigen::Index> dims{half, 2};
    const std::vector<int> keep{1};
    (void)e;
    return {linalg::partial_trace(rho_full, dims, keep),
            linalg::partial_trace(drho_full, dims, keep)};
}

} // namespace detail

// Shared engine for repeated QFI evaluations on one (model, lambda): holds either
// a spectral decomposition of L or the sparse generator for Taylor stepping.
class QFIEngine {
public:
    QFIEngine(const Experiment& e, double lambda,
              SensitivityBackend backend = SensitivityBackend::automatic)
        : exp_(e), lambda_(lambda) {
        if (!has_probe(e))
            throw std::invalid_argument("QFIEngine: experiment has no probe qubit");
        liou_ = make_liouvillian(e, lambda);
        if (backend == SensitivityBackend::automatic)
            backend = (liou_.dim2 <= kSpectralLimit) ? SensitivityBackend::spectral
                                                     : SensitivityBackend::block_taylor;
        backend_ = backend;
        rho0_ = initial_state(e).mat();
        if (backend_ == SensitivityBackend::spectral) {
            spectral_.emplace(liou_);
            probe_state_.emplace(spectral_->prepare_probe(rho0_));
        }
    }

    SensitivityBackend backend() const { return backend_; }
    const liouville::VectorizedLiouvillian& liouvillian() const { return liou_; }

    QFIRecord at(double t) const {
        if (t < 0) throw std::invalid_argument("QFIEngine: t must be >= 0");
        if (backend_ == SensitivityBackend::spectral) {
            return detail::record_from_probe(lambda_, t, spectral_->probe_rho(*probe_state_, t),
                                             spectral_->probe_drho(*probe_state_, t),
                                             DerivativeSource::exact_sensitivity);
        }
        const auto backend = backend_ == SensitivityBackend::block_ode
                                 ? liouville::Backend::ode
                                 : liouville::Backend::taylor;
        const auto [rho_t, drho_t] = liouville::propagate_with_lambda_derivative(
            liou_, DensityMatrix(rho0_), t, backend);
        const auto [rp, dp] = detail::probe_pair_from_full(exp_, rho_t.mat(), drho_t);
        return detail::record_from_probe(lambda_, t, rp, dp,
                                         DerivativeSource::exact_sensitivity);
    }

    // Ascending time grid; Taylor backends step sequentially between samples.
    std::vector<QFIRecord> profile(const std::vector<double>& times) const {
        std::vector<QFIRecord> out;
        out.reserve(times.size());
        if (backend_ == SensitivityBackend::spectral) {
            for (double t : times) out.push_back(at(t));
            return out;
        }
        const Eigen::Index d2 = liou_.dim2;
        ComplexVector x(2 * d2);
        x.head(d2) = linalg::vec(rho0_);
        x.tail(d2).setZero();
        const double bnorm = liou_.one_norm() + liou_.dissipative_one_norm();
        auto block_apply = [&](const ComplexVector& y, ComplexVector& dy) {
            if (dy.size() != y.size()) dy.resize(y.size());
            ComplexVector tmp(d2);
            liou_.apply(y.head(d2), tmp);
            dy.head(d2) = tmp;
            liou_.apply(y.tail(d2), tmp);
            liou_.apply_dissipative_unit(y.head(d2), dy.tail(d2));
            dy.tail(d2) += tmp;
        };
        double t_now = 0.0;
        for (double t : times) {
            if (t < t_now)
                throw std::invalid_argument("QFIEngine::profile: times must be ascending");
            x = liouville::taylor_expm_apply(block_apply, bnorm, t - t_now, std::move(x));
            t_now = t;
            const ComplexMatrix rho_t = linalg::unvec(x.head(d2), liou_.dim);
            const ComplexMatrix drho_t = linalg::unvec(x.tail(d2), liou_.dim);
            const auto [rp, dp] = detail::probe_pair_from_full(exp_, rho_t, drho_t);
            out.push_back(detail::record_from_probe(lambda_, t, rp, dp,
                                                    DerivativeSource::exact_sensitivity));
        }
        return out;
    }

    // Rebind the probe preparation angles (spectral backend only; the generator
    // part of the decomposition is reused).
    void set_probe_state(const model::BlochState& b) {
        if (backend_ != SensitivityBackend::spectral)
            throw std::logic_error("QFIEngine::set_probe_state: spectral backend required");
        Experiment e2 = exp_;
        e2.probe_state = b;
        rho0_ = initial_state(e2).mat();
        probe_state_.emplace(spectral_->prepare_probe(rho0_));
    }

private:
    Experiment exp_;
    double lambda_;
    SensitivityBackend backend_{SensitivityBackend::automatic};
    liouville::VectorizedLiouvillian liou_;
    ComplexMatrix rho0_;
    std::optional<liouville::SpectralPropagator> spectral_;
    std::optional<liouville::SpectralPropagator::ProbeState> probe_state_;
};

// Single-point pipeline: build, vectorize, propagate with exact sensitivity,
// reduce to the probe, evaluate the qubit QFI formula.
inline QFIRecord probe_qfi_at(const Experiment& e, double lambda, double t,
                              SensitivityBackend backend = SensitivityBackend::automatic) {
    return QFIEngine(e, lambda, backend).at(t);
}

// Finite-difference cross-check of the same record (never the default source).
inline QFIRecord probe_qfi_fd(const Experiment& e, double lambda, double t,
                              double delta_lambda) {
    if (!(delta_lambda > 0)) throw std::invalid_argument("probe_qfi_fd: delta must be > 0");
    const ComplexMatrix rho0 = initial_state(e).mat();
    auto reduced = [&](double lam) {
        const auto liou = make_liouvillian(e, lam);
        const DensityMatrix rt = liouville::propagate(liou, DensityMatrix(rho0), t);
        const Eigen::Index half = rt.dim() / 2;
        return linalg::partial_trace(rt.mat(), {half, 2}, {1});
    };
    const ComplexMatrix rp = reduced(lambda);
    const ComplexMatrix dp =
        (reduced(lambda + delta_lambda) - reduced(std::max(0.0, lambda - delta_lambda))) /
        (lambda - delta_lambda >= 0 ? 2.0 * delta_lambda : delta_lambda);
    QFIRecord rec = detail::record_from_probe(lambda, t, rp, dp,
                                              DerivativeSource::finite_difference);
    return rec;
}

// ----------------------------------------------------------------------------
// Optimal-time search: dense sampling of G(t) over a window plus golden-section
// refinement of the best bracket.

struct TimeOptimum {
    double t_opt{0.0};
    double g_max{0.0};
};

inline std::pair<double, double> default_time_window(double lambda_min) {
    return {0.0, std::min(1e3, 2.0 / std::max(lambda_min, 1e-300))};
}

inline TimeOptimum optimal_time(const QFIEngine& engine, std::pair<double, double> window,
                                int samples = 2048) {
    if (!(window.second > window.first) || samples < 2)
        throw std::invalid_argument("optimal_time: bad window or sample count");
    std::vector<double> ts(static_cast<std::size_t>(samples));
    const double step = (window.second - window.first) / samples;
    for (int i = 0; i < samples; ++i) ts[static_cast<std::size_t>(i)] = window.first + step * (i + 1);
    const std::vector<QFIRecord> recs = engine.profile(ts);
    std::size_t kbest = 0;
    for (std::size_t i = 1; i < recs.size(); ++i)
        if (recs[i].g_value > recs[kbest].g_value) kbest = i;

    double lo = ts[kbest > 0 ? kbest - 1 : 0];
    double hi = ts[std::min(kbest + 1, ts.size() - 1)];
    double best_t = ts[kbest], best_g = recs[kbest].g_value;
    const double gr = 0.5 * (std::sqrt(5.0) - 1.0);
    double a = lo, b = hi;
    double x1 = b - gr * (b - a), x2 = a + gr * (b - a);
    double f1 = engine.at(x1).g_value, f2 = engine.at(x2).g_value;
    for (int it = 0; it < 40 && (b - a) > 1e-6 * std::max(1.0, hi); ++it) {
        if (f1 < f2) {
            a = x1; x1 = x2; f1 = f2;
            x2 = a + gr * (b - a);
            f2 = engine.at(x2).g_value;
        } else {
            b = x2; x2 = x1; f2 = f1;
            x1 = b - gr * (b - a);
            f1 = engine.at(x1).g_value;
        }
    }
    const double xm = 0.5 * (a + b);
    const double fm = engine.at(xm).g_value;
    if (fm > best_g) { best_g = fm; best_t = xm; }
    if (f1 > best_g) { best_g = f1; best_t = x1; }
    if (f2 > best_g) { best_g = f2; best_t = x2; }
    return {best_t, best_g};
}

inline TimeOptimum optimal_time(const Experiment& e, double lambda,
                                std::pair<double, double> window, int samples = 2048) {
    return optimal_time(QFIEngine(e, lambda), window, samples);
}

// ----------------------------------------------------------------------------
// Nelder-Mead maximization of G(t, theta) with the fixed hyperparameters
// (reflection 1, expansion 2, contraction 0.5, shrink 0.5), five deterministic
// restarts, and dense-grid cross-validation.

struct OptimizationResult {
    double t_opt{0.0};
    double theta_opt{0.0};
    double g_max{0.0};
    int n_iterations{0};
    bool converged{false};
    double simplex_tolerance{1e-4};
    bool degenerate_landscape{false};
};

namespace detail {

struct NelderMead2D {
    // maximizes f over the unit square in scaled coordinates
    template <typename F>
    static std::tuple<Eigen::Vector2d, double, int, bool> run(const F& f, Eigen::Vector2d x0,
                                                              double tol, int max_iter) {
        std::array<Eigen::Vector2d, 3> v;
        std::array<double, 3> fv;
        v[0] = x0;
        v[1] = x0 + Eigen::Vector2d(0.15, 0.0);
        v[2] = x0 + Eigen::Vector2d(0.0, 0.15);
        for (auto& p : v) p = p.cwiseMax(0.0).cwiseMin(1.0);
        for (int i = 0; i < 3; ++i) fv[i] = f(v[i]);

        auto order = [&] {
            std::array<int, 3> idx{0, 1, 2};
            std::sort(idx.begin(), idx.end(), [&](int a, int b) { return fv[a] > fv[b]; });
            std::array<Eigen::Vector2d, 3> v2{v[idx[0]], v[idx[1]], v[idx[2]]};
            std::array<double, 3> f2{fv[idx[0]], fv[idx[1]], fv[idx[2]]};
            v = v2;
            fv = f2;
        };

        int iter = 0;
        bool converged = false;
        for (; iter < max_iter; ++iter) {
            order();
            const double diam = std::max((v[0] - v[1]).norm(),
                                         std::max((v[0] - v[2]).norm(), (v[1] - v[2]).norm()));
            if (diam < tol) { converged = true; break; }
            const Eigen::Vector2d centroid = 0.5 * (v[0] + v[1]);
            const Eigen::Vector2d xr = centroid + (centroid - v[2]); // reflection 1
            const double fr = f(xr);
            if (fr > fv[0]) {
                const Eigen::Vector2d xe = centroid + 2.0 * (centroid - v[2]); // expansion 2
                const double fe = f(xe);
                if (fe > fr) { v[2] = xe; fv[2] = fe; }
                else { v[2] = xr; fv[2] = fr; }
            } else if (fr > fv[1]) {
                v[2] = xr; fv[2] = fr;
            } else {
                const Eigen::Vector2d xc = centroid + 0.5 * (v[2] - centroid); // contraction 0.5
                const double fc = f(xc);
                if (fc > fv[2]) { v[2] = xc; fv[2] = fc; }
                else { // shrink 0.5
                    for (int i = 1; i < 3; ++i) {
                        v[i] = v[0] + 0.5 * (v[i] - v[0]);
                        fv[i] = f(v[i]);
                    }
                }
            }
        }
        order();
        return {v[0], fv[0], iter, converged};
    }
};

} // namespace detail

inline OptimizationResult optimize_t_theta(const Experiment& e, double lambda,
                                           std::pair<double, double> t_window,
                                           std::pair<double, double> theta_window = {
                                               0.0, std::numbers::pi}) {
    if (!(t_window.second > t_window.first) || !(theta_window.second > theta_window.first))
        throw std::invalid_argument("optimize_t_theta: degenerate window");

    QFIEngine engine(e, lambda, SensitivityBackend::spectral);
    double theta_cached = std::numeric_limits<double>::quiet_NaN();
    auto g_at = [&](double t, double theta) {
        if (theta != theta_cached) {
            engine.set_probe_state(model::BlochState(theta, e.probe_state.phi));
            theta_cached = theta;
        }
        return engine.at(t).g_value;
    };
    auto scaled = [&](const Eigen::Vector2d& x) -> double {
        if (x(0) < 0.0 || x(0) > 1.0 || x(1) < 0.0 || x(1) > 1.0) return -1e300;
        const double t = t_window.first + (t_window.second - t_window.first) * x(0);
        const double theta =
            theta_window.first + (theta_window.second - theta_window.first) * x(1);
        return g_at(t, theta);
    };

    const std::array<Eigen::Vector2d, 5> starts{
        Eigen::Vector2d(0.2, 0.2), Eigen::Vector2d(0.5, 0.5), Eigen::Vector2d(0.8, 0.8),
        Eigen::Vector2d(0.25, 0.75), Eigen::Vector2d(0.75, 0.25)};

    OptimizationResult res;
    res.simplex_tolerance = 1e-4;
    Eigen::Vector2d xbest(0, 0);
    double fbest = -std::numeric_limits<double>::infinity();
    bool any_converged = false;
    for (const auto& s : starts) {
        auto [x, fx, iters, conv] = detail::NelderMead2D::run(scaled, s, 1e-4, 500);
        res.n_iterations += iters;
        any_converged = any_converged || conv;
        if (fx > fbest) { fbest = fx; xbest = x; }
    }

    // dense-grid cross-validation (64 x 32 over the same windows)
    double grid_best = -std::numeric_limits<double>::infinity();
    Eigen::Vector2d grid_x(0, 0);
    for (int jt = 0; jt < 32; ++jt) {
        const double sy = (jt + 0.5) / 32.0;
        for (int it = 0; it < 64; ++it) {
            const double sx = (it + 0.5) / 64.0;
            const double v = scaled(Eigen::Vector2d(sx, sy));
            if (v > grid_best) { grid_best = v; grid_x = Eigen::Vector2d(sx, sy); }
        }
    }
    if (fbest < 0.99 * grid_best) {
        auto [x, fx, iters, conv] = detail::NelderMead2D::run(scaled, grid_x, 1e-4, 500);
        res.n_iterations += iters;
        any_converged = any_converged || conv;
        if (fx > fbest) { fbest = fx; xbest = x; }
    }

    res.t_opt = t_window.first + (t_window.second - t_window.first) * xbest(0);
    res.theta_opt =
        theta_window.first + (theta_window.second - theta_window.first) * xbest(1);
    res.g_max = std::max(fbest, 0.0);
    // below rounding noise the landscape carries no lambda information and the
    // argmax is arbitrary
    res.degenerate_landscape = (grid_best <= 1e-16 && fbest <= 1e-16);
    if (res.degenerate_landscape) res.g_max = 0.0;
    res.converged = any_converged && (res.degenerate_landscape || fbest >= 0.99 * grid_best);
    return res;
}

// ----------------------------------------------------------------------------
// Parameter scans

enum class ScanKind { lambda_scan, h_scan, size_scan, delta_g_scan };

struct ScanOptions {
    std::optional<double> t_fixed;                      // freeze the evaluation time
    std::optional<std::vector<double>> t_fixed_per_point; // size_scan: per-N times
    std::optional<std::pair<double, double>> t_window; // window for t_opt derivation
    int t_samples{2048};
    bool per_point_time_opt{false}; // lambda_scan: re-derive t_opt at every lambda
    int n_threads{1};
};

struct ScanResult {
    ScanKind kind{ScanKind::lambda_scan};
    std::vector<double> grid;
    std::vector<QFIRecord> records;
    std::vector<double> t_used; // one entry per grid point
    // delta_g_scan extras (aligned with grid; missing entries flagged)
    std::vector<double> g_corr, g_uncorr, delta_g;
    std::vector<char> delta_missing;
};

namespace detail {

template <typename F>
inline void parallel_for(int n, int n_threads, const F& body) {
    n_threads = std::max(1, std::min(n_threads, n));
    if (n_threads == 1) {
        for (int i = 0; i < n; ++i) body(i);
        return;
    }
    std::vector<std::thread> pool;
    std::atomic<int> next{0};
    for (int w = 0; w < n_threads; ++w)
        pool.emplace_back([&] {
            for (int i = next.fetch_add(1); i < n; i = next.fetch_add(1)) body(i);
        });
    for (auto& th : pool) th.join();
}

} // namespace detail

inline ScanResult run_scan(ScanKind kind, const Experiment& base,
                           const std::vector<double>& grid, const ScanOptions& opt = {}) {
    if (grid.size() < 1) throw std::invalid_argument("run_scan: empty grid");
    for (std::size_t i = 1; i < grid.size(); ++i)
        if (!(grid[i] > grid[i - 1]))
            throw std::invalid_argument("run_scan: grid must be strictly increasing");

    ScanResult res;
    res.kind = kind;
    res.grid = grid;
    const int n = static_cast<int>(grid.size());
    res.records.resize(grid.size());
    res.t_used.resize(grid.size(), 0.0);

    switch (kind) {
        case ScanKind::lambda_scan: {
            double t_shared = 0.0;
            if (opt.t_fixed) {
                t_shared = *opt.t_fixed;
            } else if (!opt.per_point_time_opt) {
                const auto window = opt.t_window ? *opt.t_window : default_time_window(grid.front());
                t_shared = optimal_time(base, grid.front(), window, opt.t_samples).t_opt;
            }
            detail::parallel_for(n, opt.n_threads, [&](int i) {
                const double lam = grid[static_cast<std::size_t>(i)];
                double t = t_shared;
                if (!opt.t_fixed && opt.per_point_time_opt) {
                    const auto window = opt.t_window ? *opt.t_window : default_time_window(lam);
                    t = optimal_time(base, lam, window, opt.t_samples).t_opt;
                }
                res.records[static_cast<std::size_t>(i)] = probe_qfi_at(base, lam, t);
                res.t_used[static_cast<std::size_t>(i)] = t;
            });
            break;
        }
        case ScanKind::h_scan: {
            double t_shared;
            if (opt.t_fixed) {
                t_shared = *opt.t_fixed;
            } else {
                const auto window = opt.t_window ? *opt.t_window : default_time_window(base.lambda);
                t_shared = optimal_time(base, base.lambda, window, opt.t_samples).t_opt;
            }
            detail::parallel_for(n, opt.n_threads, [&](int i) {
                Experiment e = base;
                e.chain = model::IsingChainSpec(base.chain.n_sites,
                                                grid[static_cast<std::size_t>(i)] * base.chain.j,
                                                base.chain.j);
                res.records[static_cast<std::size_t>(i)] = probe_qfi_at(e, base.lambda, t_shared);
                res.t_used[static_cast<std::size_t>(i)] = t_shared;
            });
            break;
        }
        case ScanKind::size_scan: {
            detail::parallel_for(n, opt.n_threads, [&](int i) {
                Experiment e = base;
                const int nsites = static_cast<int>(std::llround(grid[static_cast<std::size_t>(i)]));
                e.chain = model::IsingChainSpec(nsites, base.chain.h, base.chain.j);
                double t;
                if (opt.t_fixed_per_point) {
                    t = (*opt.t_fixed_per_point)[static_cast<std::size_t>(i)];
                } else if (opt.t_fixed) {
                    t = *opt.t_fixed;
                } else {
                    const auto window =
                        opt.t_window ? *opt.t_window : default_time_window(base.lambda);
                    t = optimal_time(e, base.lambda, window, opt.t_samples).t_opt;
                }
                res.records[static_cast<std::size_t>(i)] = probe_qfi_at(e, base.lambda, t);
                res.t_used[static_cast<std::size_t>(i)] = t;
            });
            break;
        }
        case ScanKind::delta_g_scan: {
            Experiment corr = base;
            corr.noise_kind = model::NoiseKind::correlated;
            Experiment uncorr = base;
            uncorr.noise_kind = model::NoiseKind::local;
            double t_shared;
            if (opt.t_fixed) {
                t_shared = *opt.t_fixed;
            } else {
                const auto window = opt.t_window ? *opt.t_window : default_time_window(grid.front());
                t_shared = optimal_time(uncorr, grid.front(), window, opt.t_samples).t_opt;
            }
            res.g_corr.resize(grid.size());
            res.g_uncorr.resize(grid.size());
            res.delta_g.resize(grid.size());
            res.delta_missing.assign(grid.size(), 0);
            detail::parallel_for(n, opt.n_threads, [&](int i) {
                const double lam = grid[static_cast<std::size_t>(i)];
                const QFIRecord rc = probe_qfi_at(corr, lam, t_shared);
                const QFIRecord ru = probe_qfi_at(uncorr, lam, t_shared);
                res.records[static_cast<std::size_t>(i)] = rc;
                res.t_used[static_cast<std::size_t>(i)] = t_shared;
                res.g_corr[static_cast<std::size_t>(i)] = rc.g_value;
                res.g_uncorr[static_cast<std::size_t>(i)] = ru.g_value;
                if (rc.g_value <= 1e-300) {
                    res.delta_missing[static_cast<std::size_t>(i)] = 1;
                    res.delta_g[static_cast<std::size_t>(i)] =
                        std::numeric_limits<double>::quiet_NaN();
                } else {
                    res.delta_g[static_cast<std::size_t>(i)] =
                        (rc.g_value - ru.g_value) / rc.g_value;
                }
            });
            break;
        }
    }
    return res;
}

} // namespace qprobe::metrology
