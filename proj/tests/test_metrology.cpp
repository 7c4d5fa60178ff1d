#include <catch2/catch_amalgamated.hpp>

#include <random>

#include "qprobe/metrology.hpp"

using namespace qprobe;
using linalg::Complex;
using linalg::ComplexMatrix;
using linalg::ComplexVector;
using linalg::DensityMatrix;
using metrology::Experiment;
using metrology::ExperimentKind;

namespace {

std::mt19937_64 rng(424242);

ComplexMatrix random_matrix(Eigen::Index r, Eigen::Index c) {
    std::normal_distribution<double> nd(0.0, 1.0);
    ComplexMatrix m(r, c);
    for (Eigen::Index i = 0; i < r; ++i)
        for (Eigen::Index j = 0; j < c; ++j) m(i, j) = Complex(nd(rng), nd(rng));
    return m;
}

// differentiable qubit family rho(x) with exact derivative: full-rank generic
struct QubitFamily {
    ComplexMatrix rho;
    ComplexMatrix drho;
};

QubitFamily random_qubit_family() {
    // rho(x) = (A + x B)(A + x B)^dag / tr(...) at x = 0, with A full rank
    const ComplexMatrix a = random_matrix(2, 2) + 2.0 * ComplexMatrix::Identity(2, 2);
    const ComplexMatrix b = random_matrix(2, 2);
    const ComplexMatrix m0 = a * a.adjoint();
    const ComplexMatrix m1 = a * b.adjoint() + b * a.adjoint();
    const double t0 = m0.trace().real();
    const double t1 = m1.trace().real();
    QubitFamily f;
    f.rho = m0 / t0;
    f.drho = m1 / t0 - m0 * (t1 / (t0 * t0));
    return f;
}

Experiment two_qubit_experiment(double theta = std::numbers::pi / 4,
                                double phi = std::numbers::pi / 4) {
    Experiment e;
    e.kind = ExperimentKind::two_qubit;
    e.omega0 = 1.0;
    e.omega_p = 0.3;
    e.g_coupling = 0.2;
    e.beta = 0.01;
    e.probe_state = model::BlochState(theta, phi);
    return e;
}

Experiment chain_experiment(int n, double h = 1.0) {
    Experiment e;
    e.kind = ExperimentKind::ising_probe;
    e.chain = model::IsingChainSpec(n, h, 1.0);
    e.probe_coupling = model::ProbeCouplingSpec(0.5, 0.5);
    e.beta = 0.1;
    e.probe_state = model::BlochState(std::numbers::pi, 0.0);
    return e;
}

} // namespace

TEST_CASE("sld: zero, mixed-state closed form, reconstruction") {
    const DensityMatrix half(0.5 * ComplexMatrix::Identity(2, 2));
    REQUIRE(linalg::max_abs(metrology::sld(half, ComplexMatrix::Zero(2, 2))) == 0.0);

    // rho = I/2, drho = eps sz: Lambda = 2 eps sz
    const double eps = 0.01;
    const ComplexMatrix sz = model::pauli(model::PauliAxis::z);
    const ComplexMatrix l = metrology::sld(half, eps * sz);
    REQUIRE(linalg::max_abs(l - 2.0 * eps * sz) < 1e-12);

    for (int s = 0; s < 30; ++s) {
        const auto f = random_qubit_family();
        const ComplexMatrix lam = metrology::sld(DensityMatrix(f.rho), f.drho);
        REQUIRE(linalg::max_abs(0.5 * (lam * f.rho + f.rho * lam) - f.drho) < 1e-9);
        REQUIRE(linalg::max_abs(lam - lam.adjoint()) < 1e-12);
    }

    REQUIRE_THROWS_AS(metrology::sld(half, ComplexMatrix::Zero(3, 3)),
                      std::invalid_argument);
}

TEST_CASE("qfi_qubit: zero derivative, binary-population Fisher information") {
    const DensityMatrix half(0.5 * ComplexMatrix::Identity(2, 2));
    REQUIRE(metrology::qfi_qubit(half, ComplexMatrix::Zero(2, 2)) == 0.0);

    // rho = diag(p, 1-p) with only populations varying: classical Fisher info
    const double p = 0.3, dp = 0.7;
    ComplexMatrix rho = ComplexMatrix::Zero(2, 2);
    rho(0, 0) = p;
    rho(1, 1) = 1 - p;
    ComplexMatrix drho = ComplexMatrix::Zero(2, 2);
    drho(0, 0) = dp;
    drho(1, 1) = -dp;
    const double expect = dp * dp / p + dp * dp / (1 - p);
    REQUIRE(std::abs(metrology::qfi_qubit(DensityMatrix(rho), drho) - expect) < 1e-12);

    REQUIRE_THROWS_AS(metrology::qfi_qubit(DensityMatrix(0.25 * ComplexMatrix::Identity(4, 4)),
                                           ComplexMatrix::Zero(4, 4)),
                      std::invalid_argument);
}

TEST_CASE("qfi formulas agree on 200 random qubit families") {
    for (int s = 0; s < 200; ++s) {
        const auto f = random_qubit_family();
        const double gq = metrology::qfi_qubit(DensityMatrix(f.rho), f.drho);
        const double gg = metrology::qfi_general(DensityMatrix(f.rho), f.drho);
        REQUIRE(std::abs(gq - gg) <= 1e-8 * std::max(1.0, std::abs(gg)));
    }
}

TEST_CASE("qfi_general: pure-state identity and unitary invariance") {
    // pure family |psi(x)> = cos(a+x)|0> + sin(a+x) e^{i b}|1>, exact derivative
    const double a = 0.6, b = 1.1;
    ComplexVector psi(2), dpsi(2);
    psi << std::cos(a), std::sin(a) * std::exp(Complex(0, b));
    dpsi << -std::sin(a), std::cos(a) * std::exp(Complex(0, b));
    const ComplexMatrix rho = psi * psi.adjoint();
    const ComplexMatrix drho = dpsi * psi.adjoint() + psi * dpsi.adjoint();
    const double g = metrology::qfi_general(DensityMatrix(rho), drho);
    const Complex overlap = psi.dot(dpsi);
    const double expect = 4.0 * (dpsi.squaredNorm() - std::norm(overlap));
    REQUIRE(std::abs(g - expect) < 1e-9);

    // invariance under a fixed unitary
    const auto f = random_qubit_family();
    Eigen::JacobiSVD<ComplexMatrix> svd(random_matrix(2, 2),
                                        Eigen::ComputeFullU | Eigen::ComputeFullV);
    const ComplexMatrix u = svd.matrixU() * svd.matrixV().adjoint();
    const double g1 = metrology::qfi_general(DensityMatrix(f.rho), f.drho);
    const double g2 = metrology::qfi_general(DensityMatrix(u * f.rho * u.adjoint()),
                                             u * f.drho * u.adjoint());
    REQUIRE(std::abs(g1 - g2) < 1e-9 * std::max(1.0, g1));
}

TEST_CASE("cramer_rao_bound arithmetic and unbounded signal") {
    REQUIRE(*metrology::cramer_rao_bound(1.0, 1) == 1.0);
    REQUIRE(std::abs(*metrology::cramer_rao_bound(2.0, 50) - 0.01) < 1e-15);
    REQUIRE(*metrology::cramer_rao_bound(3.0, 20) ==
            0.5 * *metrology::cramer_rao_bound(3.0, 10)); // doubling M halves the bound
    const double g = 0.37;
    const auto b = metrology::cramer_rao_bound(g, 7);
    REQUIRE(std::abs(*b * 7.0 * g - 1.0) < 1e-15);
    REQUIRE_FALSE(metrology::cramer_rao_bound(0.0, 5).has_value());
    REQUIRE_FALSE(metrology::cramer_rao_bound(-1.0, 5).has_value());
    REQUIRE_THROWS_AS(metrology::cramer_rao_bound(1.0, 0), std::invalid_argument);
}

TEST_CASE("probe_qfi_at: zero at t=0, backends agree, q = lambda^2 g") {
    const Experiment e = two_qubit_experiment();
    const auto r0 = metrology::probe_qfi_at(e, 0.25, 0.0);
    REQUIRE(r0.g_value < 1e-10); // lambda-independent initial state

    for (double t : {5.0, 31.4}) {
        const auto rs = metrology::probe_qfi_at(e, 0.1, t, metrology::SensitivityBackend::spectral);
        const auto rt =
            metrology::probe_qfi_at(e, 0.1, t, metrology::SensitivityBackend::block_taylor);
        const auto ro = metrology::probe_qfi_at(e, 0.1, t, metrology::SensitivityBackend::block_ode);
        REQUIRE(std::abs(rs.g_value - rt.g_value) < 1e-7 * std::max(1.0, rs.g_value));
        REQUIRE(std::abs(rs.g_value - ro.g_value) < 1e-7 * std::max(1.0, rs.g_value));
        REQUIRE(rs.q_value == 0.1 * 0.1 * rs.g_value);
        REQUIRE(rs.derivative_source == metrology::DerivativeSource::exact_sensitivity);
        REQUIRE(rs.method == metrology::QFIMethod::qubit_formula);
    }
}

TEST_CASE("exact sensitivity vs finite differences at the G level") {
    const Experiment e2 = two_qubit_experiment();
    const Experiment e3 = chain_experiment(2);
    struct Pt {
        const Experiment* e;
        double lam, t;
    };
    for (const Pt& p : {Pt{&e2, 0.1, 20.0}, Pt{&e2, 0.02, 8.0}, Pt{&e3, 0.05, 6.0}}) {
        const auto exact = metrology::probe_qfi_at(*p.e, p.lam, p.t);
        const double dl = std::max(1e-8, 1e-3 * p.lam);
        const auto fd1 = metrology::probe_qfi_fd(*p.e, p.lam, p.t, dl);
        const auto fd2 = metrology::probe_qfi_fd(*p.e, p.lam, p.t, 0.5 * dl); // step halving
        REQUIRE(std::abs(fd1.g_value - fd2.g_value) <
                1e-4 * std::max(1.0, std::abs(fd1.g_value)));
        REQUIRE(std::abs(exact.g_value - fd1.g_value) <=
                1e-4 * std::max(1e-12, std::abs(exact.g_value)));
        REQUIRE(fd1.derivative_source == metrology::DerivativeSource::finite_difference);
    }
}

TEST_CASE("two-qubit QFI: monotone decrease in lambda, QSNR interior peak") {
    const Experiment e = two_qubit_experiment();
    const double tbar = 2.0 * std::numbers::pi / e.g_coupling;
    std::vector<double> grid;
    for (int k = 0; k < 10; ++k) grid.push_back(0.05 + k * (0.45 / 9.0));
    std::vector<double> gs, qs;
    for (double lam : grid) {
        const auto r = metrology::probe_qfi_at(e, lam, tbar);
        gs.push_back(r.g_value);
        qs.push_back(r.q_value);
    }
    for (std::size_t k = 1; k < gs.size(); ++k) REQUIRE(gs[k] < gs[k - 1]);
    const auto kmax = std::distance(qs.begin(), std::max_element(qs.begin(), qs.end()));
    REQUIRE(kmax > 0);
    REQUIRE(kmax < long(qs.size()) - 1);
}

TEST_CASE("optimal_time: spectral and taylor engines agree on the argmax") {
    const Experiment e = chain_experiment(2);
    metrology::QFIEngine spectral(e, 0.1, metrology::SensitivityBackend::spectral);
    metrology::QFIEngine taylor(e, 0.1, metrology::SensitivityBackend::block_taylor);
    const auto a = metrology::optimal_time(spectral, {0.0, 20.0}, 256);
    const auto b = metrology::optimal_time(taylor, {0.0, 20.0}, 256);
    REQUIRE(std::abs(a.t_opt - b.t_opt) < 1e-3 * 20.0);
    REQUIRE(std::abs(a.g_max - b.g_max) < 1e-5 * std::max(1.0, a.g_max));
}

TEST_CASE("optimize_t_theta: reference point and grid cross-validation") {
    const Experiment e = two_qubit_experiment();
    const auto res = metrology::optimize_t_theta(e, 0.1, {0.0, 100.0});
    REQUIRE(res.converged);

    // dense 64x32 grid oracle
    double grid_best = 0.0;
    metrology::QFIEngine engine(e, 0.1, metrology::SensitivityBackend::spectral);
    for (int jt = 0; jt < 32; ++jt) {
        engine.set_probe_state(model::BlochState((jt + 0.5) / 32.0 * std::numbers::pi,
                                                 e.probe_state.phi));
        for (int it = 0; it < 64; ++it) {
            const double t = (it + 0.5) / 64.0 * 100.0;
            grid_best = std::max(grid_best, engine.at(t).g_value);
        }
    }
    REQUIRE(res.g_max >= 0.99 * grid_best);

    // at least as good as the published working point, within 1%
    engine.set_probe_state(model::BlochState(3.13, e.probe_state.phi));
    const double g_ref = engine.at(56.82).g_value;
    REQUIRE(res.g_max >= 0.99 * g_ref);
}

TEST_CASE("optimize_t_theta: lambda-independent landscape flagged degenerate") {
    // empty dissipator site set: the generator does not depend on lambda at all,
    // so G == 0 identically in the scanned window
    Experiment e = two_qubit_experiment();
    e.noise_sites = std::vector<int>{};
    const auto res = metrology::optimize_t_theta(e, 0.1, {0.0, 10.0});
    REQUIRE(res.g_max == 0.0);
    REQUIRE(res.degenerate_landscape);
    REQUIRE(res.converged);
}

TEST_CASE("run_scan: lambda scan fixes t at the interval lower bound") {
    const Experiment e = chain_experiment(2);
    metrology::ScanOptions opt;
    opt.t_samples = 512;
    std::vector<double> grid;
    for (int k = 0; k < 5; ++k) grid.push_back(0.1 * std::pow(5.0, k / 4.0));
    const auto res = metrology::run_scan(metrology::ScanKind::lambda_scan, e, grid, opt);
    REQUIRE(res.records.size() == grid.size());
    for (std::size_t k = 0; k < grid.size(); ++k) {
        REQUIRE(res.t_used[k] == res.t_used[0]); // frozen across the interval
        REQUIRE(res.records[k].lambda == grid[k]);
    }
    // the shared t comes from the lambda_min optimum
    const auto topt = metrology::optimal_time(e, grid.front(),
                                              metrology::default_time_window(grid.front()), 512);
    REQUIRE(std::abs(res.t_used[0] - topt.t_opt) < 1e-12);
}

TEST_CASE("run_scan: h scan and size scan shapes") {
    Experiment e = chain_experiment(2);
    e.lambda = 0.1;
    metrology::ScanOptions opt;
    opt.t_fixed = 7.19;
    const auto hs =
        metrology::run_scan(metrology::ScanKind::h_scan, e, {0.9, 1.0, 1.1}, opt);
    REQUIRE(hs.records.size() == 3);
    for (const auto& r : hs.records) REQUIRE(r.lambda == 0.1);

    metrology::ScanOptions sopt;
    sopt.t_fixed_per_point = std::vector<double>{7.19, 9.53};
    const auto ss = metrology::run_scan(metrology::ScanKind::size_scan, e, {2.0, 3.0}, sopt);
    REQUIRE(ss.records.size() == 2);
    REQUIRE(ss.t_used[0] == 7.19);
    REQUIRE(ss.t_used[1] == 9.53);
    REQUIRE(ss.records[0].g_value > 0.0);
    REQUIRE(ss.records[1].g_value > 0.0);
}

TEST_CASE("run_scan: delta_g collapses to zero in the local-kernel limit") {
    Experiment e = chain_experiment(2);
    e.rc_over_a = 1e-3;
    metrology::ScanOptions opt;
    opt.t_fixed = 9.0;
    opt.n_threads = 2;
    std::vector<double> grid{0.01, 0.05, 0.1};
    const auto res = metrology::run_scan(metrology::ScanKind::delta_g_scan, e, grid, opt);
    REQUIRE(res.delta_g.size() == grid.size());
    for (std::size_t k = 0; k < grid.size(); ++k) {
        REQUIRE(res.delta_missing[k] == 0);
        REQUIRE(std::abs(res.delta_g[k]) <= 1e-10);
    }

    // rc/a = 2 produces a finite, generally nonzero relative difference
    Experiment e2 = chain_experiment(2);
    e2.rc_over_a = 2.0;
    const auto res2 = metrology::run_scan(metrology::ScanKind::delta_g_scan, e2, grid, opt);
    for (std::size_t k = 0; k < grid.size(); ++k) {
        REQUIRE(std::isfinite(res2.delta_g[k]));
        REQUIRE(res2.g_corr[k] > 0.0);
        REQUIRE(res2.g_uncorr[k] > 0.0);
    }
}

TEST_CASE("run_scan: grid validation") {
    const Experiment e = chain_experiment(2);
    REQUIRE_THROWS_AS(metrology::run_scan(metrology::ScanKind::lambda_scan, e, {}, {}),
                      std::invalid_argument);
    REQUIRE_THROWS_AS(
        metrology::run_scan(metrology::ScanKind::lambda_scan, e, {0.2, 0.1}, {}),
        std::invalid_argument);
}
