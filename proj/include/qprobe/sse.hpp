// sse.hpp — Euler-Maruyama integration of the stochastic nonlinear Schrodinger
// equation for a single qubit undergoing the collapse mechanism:
//   d|psi> = [-i H dt + sqrt(lambda)(sz - <sz>) dW - (lambda/2)(sz - <sz>)^2 dt] |psi>
// with H = (omega0/2) sx, post-step renormalization, and an independent RNG
// substream per trajectory derived from (seed, trajectory index).

#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <thread>
#include <vector>

#include "qprobe/liouville.hpp"
#include "qprobe/model.hpp"

namespace qprobe::sse {

using linalg::Complex;

struct SSEConfig {
    double dt{1e-3};
    int n_traj{1};
    std::uint64_t seed{0};
    int n_threads{1};
    // scheme fixed: Euler-Maruyama with post-step renormalization
};

struct SSEResult {
    std::vector<double> times;                  // sample times (snapped to the step grid)
    std::vector<Eigen::Vector3d> bloch_mean;    // ensemble mean Bloch vector per sample
    std::vector<Eigen::Vector3d> bloch_se;      // standard error per component
    std::vector<Eigen::Matrix2cd> rho_mean;     // ensemble mean density matrix per sample
};

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

// Deterministic standard normals: Box-Muller over mt19937_64 uniforms.
class NormalStream {
public:
    explicit NormalStream(std::uint64_t seed) : gen_(seed) {}

    double next() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        double u1 = 0.0;
        do { u1 = uniform(); } while (u1 <= 0.0);
        const double u2 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double a = 2.0 * std::numbers::pi * u2;
        spare_ = r * std::sin(a);
        have_spare_ = true;
        return r * std::cos(a);
    }

private:
    double uniform() {
        return (gen_() >> 11) * 0x1.0p-53; // 53-bit mantissa in [0,1)
    }
    std::mt19937_64 gen_;
    double spare_{0.0};
    bool have_spare_{false};
};

inline SSEResult sse_simulate(const model::SingleQubitModel& m, const Eigen::Vector2cd& psi0,
                              double t_final, const std::vector<double>& sample_times,
                              const SSEConfig& cfg) {
    if (std::abs(psi0.norm() - 1.0) > 1e-10)
        throw std::invalid_argument("sse_simulate: psi0 must be normalized");
    if (!(cfg.dt > 0)) throw std::invalid_argument("sse_simulate: dt must be > 0");
    if (cfg.dt * m.omega0 > 1e-2 + 1e-15)
        throw std::invalid_argument("sse_simulate: dt * omega0 must be <= 1e-2");
    if (cfg.n_traj < 1) throw std::invalid_argument("sse_simulate: n_traj must be >= 1");
    if (t_final < 0) throw std::invalid_argument("sse_simulate: t_final must be >= 0");

    const long n_steps = std::lround(t_final / cfg.dt);
    std::vector<long> sample_steps;
    sample_steps.reserve(sample_times.size());
    for (double ts : sample_times) {
        if (ts < 0 || ts > t_final + 0.5 * cfg.dt)
            throw std::invalid_argument("sse_simulate: sample time outside [0, t_final]");
        sample_steps.push_back(std::min(n_steps, std::lround(ts / cfg.dt)));
    }
    const std::size_t n_samp = sample_steps.size();

    const double sql = std::sqrt(m.lambda);
    const double half_om = 0.5 * m.omega0;
    const double sqdt = std::sqrt(cfg.dt);

    // per-trajectory sampled states, reduced in trajectory order afterwards
    std::vector<Eigen::Vector2cd> traj_psi(static_cast<std::size_t>(cfg.n_traj) * n_samp);

    auto run_block = [&](int t_begin, int t_end) {
        for (int k = t_begin; k < t_end; ++k) {
            NormalStream rng(splitmix64(cfg.seed ^ (0x9E3779B97F4A7C15ULL * (std::uint64_t(k) + 1))));
            Eigen::Vector2cd psi = psi0;
            std::size_t next = 0;
            // samples requested at t=0
            long step = 0;
            auto record_up_to = [&](long s) {
                while (next < n_samp && sample_steps[next] <= s) {
                    // sample_steps must be non-decreasing for this walk; enforced below
                    traj_psi[std::size_t(k) * n_samp + next] = psi;
                    ++next;
                }
            };
            record_up_to(0);
            for (step = 1; step <= n_steps; ++step) {
                const double mz = (std::norm(psi(1)) - std::norm(psi(0)));
                // (sz - <sz>) is diagonal with entries (-1 - mz, +1 - mz)
                const double d0 = -1.0 - mz, d1 = 1.0 - mz;
                const double xi = rng.next();
                const Complex h0 = Complex(0, -half_om) * psi(1); // -i H psi, H = (omega0/2) sx
                const Complex h1 = Complex(0, -half_om) * psi(0);
                Eigen::Vector2cd dpsi;
                dpsi(0) = cfg.dt * (h0 - 0.5 * m.lambda * d0 * d0 * psi(0)) +
                          sqdt * xi * sql * d0 * psi(0);
                dpsi(1) = cfg.dt * (h1 - 0.5 * m.lambda * d1 * d1 * psi(1)) +
                          sqdt * xi * sql * d1 * psi(1);
                psi += dpsi;
                psi /= psi.norm();
                record_up_to(step);
            }
        }
    };

    for (std::size_t i = 1; i < sample_steps.size(); ++i)
        if (sample_steps[i] < sample_steps[i - 1])
            throw std::invalid_argument("sse_simulate: sample times must be non-decreasing");

    const int n_threads = std::max(1, cfg.n_threads);
    if (n_threads == 1 || cfg.n_traj < 2 * n_threads) {
        run_block(0, cfg.n_traj);
    } else {
        std::vector<std::thread> pool;
        const int chunk = (cfg.n_traj + n_threads - 1) / n_threads;
        for (int w = 0; w < n_threads; ++w) {
            const int b = w * chunk, e = std::min(cfg.n_traj, b + chunk);
            if (b < e) pool.emplace_back(run_block, b, e);
        }
        for (auto& th : pool) th.join();
    }

    SSEResult res;
    res.times.resize(n_samp);
    res.bloch_mean.assign(n_samp, Eigen::Vector3d::Zero());
    res.bloch_se.assign(n_samp, Eigen::Vector3d::Zero());
    res.rho_mean.assign(n_samp, Eigen::Matrix2cd::Zero());
    for (std::size_t s = 0; s < n_samp; ++s) res.times[s] = sample_steps[s] * cfg.dt;

    const double n = double(cfg.n_traj);
    std::vector<Eigen::Vector3d> tau_all(static_cast<std::size_t>(cfg.n_traj) * n_samp);
    for (int k = 0; k < cfg.n_traj; ++k)
        for (std::size_t s = 0; s < n_samp; ++s) {
            const Eigen::Vector2cd& psi = traj_psi[std::size_t(k) * n_samp + s];
            const Eigen::Matrix2cd rho = psi * psi.adjoint();
            tau_all[std::size_t(k) * n_samp + s] = liouville::bloch_vector(rho);
            res.bloch_mean[s] += tau_all[std::size_t(k) * n_samp + s];
            res.rho_mean[s] += rho;
        }
    for (std::size_t s = 0; s < n_samp; ++s) {
        res.bloch_mean[s] /= n;
        res.rho_mean[s] /= n;
    }
    if (cfg.n_traj > 1) {
        for (std::size_t s = 0; s < n_samp; ++s) {
            Eigen::Vector3d ss = Eigen::Vector3d::Zero();
            for (int k = 0; k < cfg.n_traj; ++k) {
                const Eigen::Vector3d d = tau_all[std::size_t(k) * n_samp + s] - res.bloch_mean[s];
                ss += d.cwiseProduct(d);
            }
            res.bloch_se[s] = (ss / ((n - 1.0) * n)).cwiseSqrt();
        }
    }
    return res;
}

} // namespace qprobe::sse
