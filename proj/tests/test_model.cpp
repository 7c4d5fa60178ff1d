#include <catch2/catch_amalgamated.hpp>

#include "qprobe/model.hpp"

using namespace qprobe;
using linalg::Complex;
using linalg::ComplexMatrix;
using linalg::ComplexVector;
using model::PauliAxis;

TEST_CASE("pauli_site basis convention and placement") {
    // sigma_z = |1><1| - |0><0| = diag(-1, +1)
    const ComplexMatrix z1 = model::pauli_site(PauliAxis::z, 1, 1);
    REQUIRE(z1(0, 0) == Complex(-1, 0));
    REQUIRE(z1(1, 1) == Complex(1, 0));
    REQUIRE(z1(0, 1) == Complex(0, 0));

    const ComplexMatrix x2 = model::pauli_site(PauliAxis::x, 2, 2);
    REQUIRE(linalg::max_abs(x2 - linalg::kron(ComplexMatrix::Identity(2, 2),
                                              model::pauli(PauliAxis::x))) == 0.0);

    for (int i = 1; i <= 3; ++i)
        for (int j = 1; j <= 3; ++j) {
            const ComplexMatrix zi = model::pauli_site(PauliAxis::z, i, 3);
            const ComplexMatrix zj = model::pauli_site(PauliAxis::z, j, 3);
            REQUIRE(linalg::max_abs(zi * zj - zj * zi) == 0.0);
        }

    REQUIRE_THROWS_AS(model::pauli_site(PauliAxis::x, 3, 2), std::invalid_argument);
    REQUIRE_THROWS_AS(model::pauli_site(PauliAxis::x, 0, 2), std::invalid_argument);
}

TEST_CASE("sigma_z_values match pauli_site diagonals") {
    for (int site = 1; site <= 3; ++site) {
        const ComplexMatrix z = model::pauli_site(PauliAxis::z, site, 3);
        const Eigen::VectorXd v = model::sigma_z_values(site, 3);
        for (Eigen::Index s = 0; s < 8; ++s) REQUIRE(z(s, s).real() == v(s));
    }
}

TEST_CASE("two_qubit_hamiltonian: decoupled spectrum, tracelessness, symmetry") {
    const model::TwoQubitProbeModel decoupled(1.0, 0.3, 0.0, 0.0);
    const auto eg = linalg::eig_hermitian(model::two_qubit_hamiltonian(decoupled));
    std::vector<double> expected{-0.65, -0.35, 0.35, 0.65}; // (+-1/2) + (+-0.15)
    for (int k = 0; k < 4; ++k) REQUIRE(std::abs(eg.values(k) - expected[k]) < 1e-12);

    const model::TwoQubitProbeModel m(1.0, 0.3, 0.2, 0.0);
    const ComplexMatrix h = model::two_qubit_hamiltonian(m);
    REQUIRE(linalg::is_hermitian(h, 1e-14));
    REQUIRE(std::abs(h.trace()) < 1e-14);

    // eigenvalues symmetric about zero
    const auto es = linalg::eig_hermitian(h);
    for (int k = 0; k < 4; ++k) REQUIRE(std::abs(es.values(k) + es.values(3 - k)) < 1e-12);
}

TEST_CASE("ising_hamiltonian: single site, N=2 ground energy, classical limit") {
    const model::IsingChainSpec single(1, 0.7, 1.0);
    REQUIRE(linalg::max_abs(model::ising_hamiltonian(single) +
                            0.7 * model::pauli(PauliAxis::x)) == 0.0);

    // N=2, h=J=1: compare against an independently assembled explicit 4x4
    const model::IsingChainSpec two(2, 1.0, 1.0);
    const ComplexMatrix h2 = model::ising_hamiltonian(two);
    ComplexMatrix ref = ComplexMatrix::Zero(4, 4);
    // -h (sx x I + I x sx)
    ref(0, 2) = ref(2, 0) = ref(1, 3) = ref(3, 1) = -1.0; // sx x I
    ref(0, 1) += -1.0; ref(1, 0) += -1.0; ref(2, 3) += -1.0; ref(3, 2) += -1.0; // I x sx
    // -J sz x sz with sz = diag(-1, 1)
    ref(0, 0) = -1.0; ref(1, 1) = 1.0; ref(2, 2) = 1.0; ref(3, 3) = -1.0;
    REQUIRE(linalg::max_abs(h2 - ref) == 0.0);
    const auto es2 = linalg::eig_hermitian(ref);
    REQUIRE(std::abs(linalg::eig_hermitian(h2).values(0) - es2.values(0)) < 1e-14);
    REQUIRE(std::abs(es2.values(0) + std::sqrt(5.0)) < 1e-12); // -sqrt(J^2 + 4h^2)

    // N=3, h -> 0 limit: classical spectrum {-2J, 0, 2J} with degeneracies (2, 4, 2)
    const model::IsingChainSpec cls(3, 1e-14, 1.0);
    const auto es3 = linalg::eig_hermitian(model::ising_hamiltonian(cls));
    int n_lo = 0, n_mid = 0, n_hi = 0;
    for (int k = 0; k < 8; ++k) {
        if (std::abs(es3.values(k) + 2.0) < 1e-10) ++n_lo;
        else if (std::abs(es3.values(k)) < 1e-10) ++n_mid;
        else if (std::abs(es3.values(k) - 2.0) < 1e-10) ++n_hi;
    }
    REQUIRE(n_lo == 2);
    REQUIRE(n_mid == 4);
    REQUIRE(n_hi == 2);
}

TEST_CASE("hamiltonian builders are Hermitian and traceless") {
    for (int n = 1; n <= 4; ++n) {
        const model::IsingChainSpec spec(n, 0.8, 1.1);
        const ComplexMatrix h = model::ising_hamiltonian(spec);
        REQUIRE(linalg::is_hermitian(h, 1e-12));
        REQUIRE(std::abs(h.trace()) < 1e-12);
        const ComplexMatrix hp =
            model::ising_probe_hamiltonian(spec, model::ProbeCouplingSpec(0.4, 0.6));
        REQUIRE(linalg::is_hermitian(hp, 1e-12));
        REQUIRE(std::abs(hp.trace()) < 1e-12);
    }
}

TEST_CASE("ising Z2 symmetry: global spin flip commutes") {
    const model::IsingChainSpec spec(3, 0.9, 1.0);
    const ComplexMatrix h = model::ising_hamiltonian(spec);
    ComplexMatrix flip = ComplexMatrix::Identity(8, 8);
    for (int j = 1; j <= 3; ++j) flip = ComplexMatrix(flip * model::pauli_site(PauliAxis::x, j, 3));
    REQUIRE(linalg::max_abs(h * flip - flip * h) < 1e-12);
}

TEST_CASE("ising_probe_hamiltonian: chain equivalence, decoupling, explicit assembly") {
    // h_p = h, J_p = J reproduces the (N+1)-site chain
    const model::IsingChainSpec chain(3, 0.8, 1.2);
    const ComplexMatrix a = model::ising_probe_hamiltonian(chain, {0.8, 1.2});
    const ComplexMatrix b = model::ising_hamiltonian(model::IsingChainSpec(4, 0.8, 1.2));
    REQUIRE(linalg::max_abs(a - b) == 0.0);

    // J_p = 0 decouples: spectrum = chain spectrum (+-) h_p sums
    const model::IsingChainSpec c2(2, 1.0, 1.0);
    const auto esc = linalg::eig_hermitian(model::ising_hamiltonian(c2));
    const auto esd = linalg::eig_hermitian(model::ising_probe_hamiltonian(c2, {0.3, 0.0}));
    std::vector<double> sums;
    for (int k = 0; k < 4; ++k) {
        sums.push_back(esc.values(k) - 0.3);
        sums.push_back(esc.values(k) + 0.3);
    }
    std::sort(sums.begin(), sums.end());
    for (int k = 0; k < 8; ++k) REQUIRE(std::abs(esd.values(k) - sums[size_t(k)]) < 1e-12);

    // N=2 explicit 8x8 from independent term assembly
    const model::ProbeCouplingSpec pc(0.5, 0.5);
    ComplexMatrix ref = ComplexMatrix::Zero(8, 8);
    ref -= 1.0 * model::pauli_site(PauliAxis::x, 1, 3);
    ref -= 1.0 * model::pauli_site(PauliAxis::x, 2, 3);
    ref -= 1.0 * model::pauli_site(PauliAxis::z, 1, 3) * model::pauli_site(PauliAxis::z, 2, 3);
    ref -= 0.5 * model::pauli_site(PauliAxis::x, 3, 3);
    ref -= 0.5 * model::pauli_site(PauliAxis::z, 2, 3) * model::pauli_site(PauliAxis::z, 3, 3);
    REQUIRE(linalg::max_abs(model::ising_probe_hamiltonian(c2, pc) - ref) == 0.0);
}

TEST_CASE("bloch_pure_state: poles, equator, purity, unit Bloch norm") {
    const auto top = model::bloch_pure_state({0.0, 0.0});
    REQUIRE(std::abs(top.mat()(1, 1) - Complex(1, 0)) < 1e-15); // |1><1|

    const auto bottom = model::bloch_pure_state({std::numbers::pi, 1.3});
    REQUIRE(std::abs(bottom.mat()(0, 0) - Complex(1, 0)) < 1e-15); // |0><0|

    const auto eq = model::bloch_pure_state({std::numbers::pi / 2, 0.0});
    ComplexMatrix half = 0.5 * ComplexMatrix::Ones(2, 2);
    REQUIRE(linalg::max_abs(eq.mat() - half) < 1e-15);

    for (double theta : {0.3, 1.0, 2.5})
        for (double phi : {0.0, 1.1, 4.4}) {
            const auto rho = model::bloch_pure_state({theta, phi});
            REQUIRE(std::abs(linalg::purity(rho.mat()) - 1.0) < 1e-12);
            const double tx = (rho.mat()(0, 1) + rho.mat()(1, 0)).real();
            const double ty = (Complex(0, 1) * (rho.mat()(0, 1) - rho.mat()(1, 0))).real();
            const double tz = (rho.mat()(1, 1) - rho.mat()(0, 0)).real();
            REQUIRE(std::abs(std::sqrt(tx * tx + ty * ty + tz * tz) - 1.0) < 1e-12);
        }

    REQUIRE_THROWS_AS(model::BlochState(4.0, 0.0), std::invalid_argument);
    REQUIRE_THROWS_AS(model::BlochState(1.0, -0.1), std::invalid_argument);
}

TEST_CASE("initial_product_state: structure and partial trace") {
    const model::IsingChainSpec spec(2, 1.0, 1.0);
    const ComplexMatrix h = model::ising_hamiltonian(spec);
    const model::BlochState probe(0.7, 0.2);

    const auto beta0 = model::initial_product_state(h, 0.0, probe);
    const ComplexMatrix expect0 =
        linalg::kron(0.25 * ComplexMatrix::Identity(4, 4), model::bloch_pure_state(probe).mat());
    REQUIRE(linalg::max_abs(beta0.mat() - expect0) < 1e-13);

    const auto st = model::initial_product_state(h, 0.1, probe);
    const ComplexMatrix sys = linalg::partial_trace(st.mat(), {4, 2}, {0});
    REQUIRE(linalg::max_abs(sys - linalg::gibbs_state(h, 0.1).mat()) < 1e-12);
    REQUIRE(std::abs(st.mat().trace() - Complex(1, 0)) < 1e-12);
}

TEST_CASE("collapse_dissipator_spec: local terms, correlated kernel, PSD, limits") {
    const auto local = model::collapse_dissipator_spec({model::NoiseKind::local, 0.1}, 3);
    REQUIRE(local.terms.size() == 3);
    for (int j = 0; j < 3; ++j) {
        REQUIRE(local.terms[size_t(j)].site_i == j + 1);
        REQUIRE(local.terms[size_t(j)].site_j == j + 1);
        REQUIRE(local.terms[size_t(j)].weight == 1.0);
    }

    // correlated with rc/a -> 0 collapses to the local spec numerically
    const auto tiny =
        model::collapse_dissipator_spec({model::NoiseKind::correlated, 0.1, 1e-3}, 3);
    const Eigen::MatrixXd w = model::weight_matrix(tiny);
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) {
            if (i == j) REQUIRE(w(i, j) == 1.0);
            else REQUIRE(w(i, j) < 1e-100);
        }

    // f(1,2) = exp(-1/16) at rc/a = 2
    const auto corr =
        model::collapse_dissipator_spec({model::NoiseKind::correlated, 0.1, 2.0}, 4);
    const Eigen::MatrixXd wc = model::weight_matrix(corr);
    REQUIRE(std::abs(wc(0, 1) - std::exp(-1.0 / 16.0)) < 1e-15);

    // symmetric PSD across sizes and correlation lengths
    for (int n : {2, 3, 4, 5, 6})
        for (double rc : {0.5, 1.0, 2.0, 5.0}) {
            const auto spec =
                model::collapse_dissipator_spec({model::NoiseKind::correlated, 0.0, rc}, n);
            const Eigen::MatrixXd m = model::weight_matrix(spec);
            REQUIRE((m - m.transpose()).cwiseAbs().maxCoeff() == 0.0);
            Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(m, Eigen::EigenvaluesOnly);
            REQUIRE(es.eigenvalues().minCoeff() > -1e-12);
        }

    // the probe site is structurally excluded
    model::NoiseSpec bad(model::NoiseKind::local, 0.1, 1.0, std::vector<int>{1, 4});
    REQUIRE_THROWS_AS(model::collapse_dissipator_spec(bad, 3), std::invalid_argument);
}
