// model.hpp — Hamiltonians, dissipator specifications, and initial states for the
// collapse-rate probing schemes: a single dephasing qubit, a qubit + probe pair,
// and a transverse-field Ising chain with a probe attached to the last site.
//
// Basis conventions (fixed everywhere):
//   * qubit basis ordered (|0>, |1>) with sigma_z = |1><1| - |0><0| = diag(-1, +1);
//     note this differs from the common diag(+1, -1) choice.
//   * tensor factor order: chain sites 1..N first, probe last.

#pragma once

#include <cmath>
#include <numbers>
#include <optional>
#include <stdexcept>
#include <vector>

#include "qprobe/linalg.hpp"

namespace qprobe::model {

using linalg::Complex;
using linalg::ComplexMatrix;
using linalg::ComplexVector;
using linalg::DensityMatrix;

enum class PauliAxis { x, y, z };

inline ComplexMatrix pauli(PauliAxis axis) {
    ComplexMatrix m(2, 2);
    switch (axis) {
        case PauliAxis::x: m << 0, 1, 1, 0; break;
        case PauliAxis::y: m << 0, Complex(0, -1), Complex(0, 1), 0; break;
        case PauliAxis::z: m << -1, 0, 0, 1; break;
    }
    return m;
}

// I x ... x sigma^axis x ... x I with the Pauli factor at `site` (1-based).
inline ComplexMatrix pauli_site(PauliAxis axis, int site, int n_total) {
    if (n_total < 1) throw std::invalid_argument("pauli_site: n_total must be >= 1");
    if (site < 1 || site > n_total)
        throw std::invalid_argument("pauli_site: site index out of range");
    ComplexMatrix out = ComplexMatrix::Identity(1, 1);
    for (int k = 1; k <= n_total; ++k)
        out = linalg::kron(out, k == site ? pauli(axis) : ComplexMatrix::Identity(2, 2));
    return out;
}

// sigma_z eigenvalues (+-1) of chain site `site` across all 2^n basis states.
inline Eigen::VectorXd sigma_z_values(int site, int n_total) {
    if (site < 1 || site > n_total)
        throw std::invalid_argument("sigma_z_values: site index out of range");
    const Eigen::Index dim = Eigen::Index(1) << n_total;
    const Eigen::Index bit = Eigen::Index(1) << (n_total - site);
    Eigen::VectorXd z(dim);
    for (Eigen::Index s = 0; s < dim; ++s) z(s) = (s & bit) ? 1.0 : -1.0;
    return z;
}

// ----------------------------------------------------------------------------
// Parameter records

struct BlochState {
    double theta{0.0};
    double phi{0.0};

    BlochState(double theta_, double phi_) : theta(theta_), phi(phi_) {
        if (!(theta >= 0.0 && theta <= std::numbers::pi))
            throw std::invalid_argument("BlochState: theta outside [0, pi]");
        if (!(phi >= 0.0 && phi < 2.0 * std::numbers::pi))
            throw std::invalid_argument("BlochState: phi outside [0, 2pi)");
    }
};

struct SingleQubitModel {
    double omega0{1.0};
    double lambda{0.0};

    SingleQubitModel(double omega0_, double lambda_) : omega0(omega0_), lambda(lambda_) {
        if (!(omega0 > 0.0)) throw std::invalid_argument("SingleQubitModel: omega0 must be > 0");
        if (!(lambda >= 0.0)) throw std::invalid_argument("SingleQubitModel: lambda must be >= 0");
    }
};

struct TwoQubitProbeModel {
    double omega0{1.0};
    double omega_p{0.3};
    double g{0.2};
    double lambda{0.0};

    TwoQubitProbeModel(double omega0_, double omega_p_, double g_, double lambda_)
        : omega0(omega0_), omega_p(omega_p_), g(g_), lambda(lambda_) {
        if (!(omega0 > 0.0) || !(omega_p > 0.0))
            throw std::invalid_argument("TwoQubitProbeModel: splittings must be > 0");
        if (!(lambda >= 0.0))
            throw std::invalid_argument("TwoQubitProbeModel: lambda must be >= 0");
    }
};

struct IsingChainSpec {
    int n_sites{1};
    double h{1.0};
    double j{1.0};
    // boundary is open by construction; there is no periodic option

    IsingChainSpec(int n_sites_, double h_, double j_) : n_sites(n_sites_), h(h_), j(j_) {
        if (n_sites < 1) throw std::invalid_argument("IsingChainSpec: n_sites must be >= 1");
        if (!(h > 0.0) || !(j > 0.0))
            throw std::invalid_argument("IsingChainSpec: h and j must be > 0");
    }
};

struct ProbeCouplingSpec {
    double h_p{0.5};
    double j_p{0.5};

    ProbeCouplingSpec(double h_p_, double j_p_) : h_p(h_p_), j_p(j_p_) {
        if (!std::isfinite(h_p) || !std::isfinite(j_p))
            throw std::invalid_argument("ProbeCouplingSpec: parameters must be finite");
    }
};

enum class NoiseKind { local, correlated };

struct NoiseSpec {
    NoiseKind kind{NoiseKind::local};
    double lambda{0.0};
    double rc_over_a{1.0};                 // used only for correlated noise
    std::optional<std::vector<int>> sites; // optional restriction to a site subset

    NoiseSpec(NoiseKind kind_, double lambda_, double rc_over_a_ = 1.0,
              std::optional<std::vector<int>> sites_ = std::nullopt)
        : kind(kind_), lambda(lambda_), rc_over_a(rc_over_a_), sites(std::move(sites_)) {
        if (!(lambda >= 0.0)) throw std::invalid_argument("NoiseSpec: lambda must be >= 0");
        if (kind == NoiseKind::correlated && !(rc_over_a > 0.0))
            throw std::invalid_argument("NoiseSpec: rc_over_a must be > 0 for correlated noise");
    }
};

// Unit-rate sigma_z double-commutator dissipator: pairs (site_i, site_j, weight).
struct DissipatorTerm {
    int site_i;
    int site_j;
    double weight;
};

struct DissipatorSpec {
    std::vector<DissipatorTerm> terms;
    int n_sites{0}; // number of dephasing sites the weight matrix ranges over
};

// Symmetric weight matrix of a dissipator spec (row/col = dephasing site index - 1).
inline Eigen::MatrixXd weight_matrix(const DissipatorSpec& spec) {
    Eigen::MatrixXd f = Eigen::MatrixXd::Zero(spec.n_sites, spec.n_sites);
    for (const auto& t : spec.terms) {
        f(t.site_i - 1, t.site_j - 1) = t.weight;
        f(t.site_j - 1, t.site_i - 1) = t.weight;
    }
    return f;
}

// Dissipator acting on chain sites 1..n_chain. The probe site (index n_chain+1 in
// the composite system) never appears.
inline DissipatorSpec collapse_dissipator_spec(const NoiseSpec& noise, int n_chain) {
    if (n_chain < 1)
        throw std::invalid_argument("collapse_dissipator_spec: n_chain must be >= 1");
    std::vector<int> sites;
    if (noise.sites) {
        sites = *noise.sites;
        for (int s : sites)
            if (s < 1 || s > n_chain)
                throw std::invalid_argument(
                    "collapse_dissipator_spec: dissipator site outside the chain "
                    "(the probe is never subject to collapse)");
    } else {
        sites.resize(static_cast<std::size_t>(n_chain));
        std::iota(sites.begin(), sites.end(), 1);
    }

    DissipatorSpec spec;
    spec.n_sites = n_chain;
    if (noise.kind == NoiseKind::local) {
        for (int s : sites) spec.terms.push_back({s, s, 1.0});
    } else {
        const double rc = noise.rc_over_a;
        for (std::size_t a = 0; a < sites.size(); ++a)
            for (std::size_t b = a; b < sites.size(); ++b) {
                const double d = double(sites[a] - sites[b]);
                const double w = std::exp(-d * d / (4.0 * rc * rc));
                spec.terms.push_back({sites[a], sites[b], w});
            }
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(weight_matrix(spec),
                                                          Eigen::EigenvaluesOnly);
        if (es.eigenvalues().minCoeff() < -1e-12)
            throw std::runtime_error("collapse_dissipator_spec: weight matrix not PSD");
    }
    return spec;
}

// ----------------------------------------------------------------------------
// Hamiltonians

// H = (omega0/2) sx (x) I + (omega_p/2) I (x) sx + g sz (x) sz, factor order (system, probe).
inline ComplexMatrix two_qubit_hamiltonian(const TwoQubitProbeModel& m) {
    return 0.5 * m.omega0 * pauli_site(PauliAxis::x, 1, 2) +
           0.5 * m.omega_p * pauli_site(PauliAxis::x, 2, 2) +
           m.g * pauli_site(PauliAxis::z, 1, 2) * pauli_site(PauliAxis::z, 2, 2);
}

// H = -h sum_j sx_j - J sum_j sz_j sz_{j+1}, open boundary.
inline ComplexMatrix ising_hamiltonian(const IsingChainSpec& spec) {
    const int n = spec.n_sites;
    const Eigen::Index dim = Eigen::Index(1) << n;
    ComplexMatrix h = ComplexMatrix::Zero(dim, dim);
    for (int j = 1; j <= n; ++j) h -= spec.h * pauli_site(PauliAxis::x, j, n);
    for (int j = 1; j < n; ++j)
        h -= spec.j * pauli_site(PauliAxis::z, j, n) * pauli_site(PauliAxis::z, j + 1, n);
    return h;
}

// Chain plus probe on 2^(N+1) dimensions: an (N+1)-site chain whose last field is
// h_p and last bond is J_p.
inline ComplexMatrix ising_probe_hamiltonian(const IsingChainSpec& chain,
                                             const ProbeCouplingSpec& probe) {
    const int n = chain.n_sites + 1;
    const Eigen::Index dim = Eigen::Index(1) << n;
    ComplexMatrix h = ComplexMatrix::Zero(dim, dim);
    for (int j = 1; j <= chain.n_sites; ++j) h -= chain.h * pauli_site(PauliAxis::x, j, n);
    for (int j = 1; j < chain.n_sites; ++j)
        h -= chain.j * pauli_site(PauliAxis::z, j, n) * pauli_site(PauliAxis::z, j + 1, n);
    h -= probe.h_p * pauli_site(PauliAxis::x, n, n);
    h -= probe.j_p * pauli_site(PauliAxis::z, chain.n_sites, n) * pauli_site(PauliAxis::z, n, n);
    return h;
}

// ----------------------------------------------------------------------------
// Initial states

// |psi> = cos(theta/2)|1> + e^{i phi} sin(theta/2)|0>.
inline DensityMatrix bloch_pure_state(const BlochState& b) {
    ComplexVector psi(2);
    psi << std::exp(Complex(0, b.phi)) * std::sin(0.5 * b.theta), std::cos(0.5 * b.theta);
    return DensityMatrix(psi * psi.adjoint());
}

// Gibbs state of the system Hamiltonian tensored with a pure probe state.
inline DensityMatrix initial_product_state(const ComplexMatrix& h_system, double beta,
                                           const BlochState& probe) {
    const DensityMatrix sys = linalg::gibbs_state(h_system, beta);
    return DensityMatrix(linalg::kron(sys.mat(), bloch_pure_state(probe).mat()));
}

} // namespace qprobe::model
