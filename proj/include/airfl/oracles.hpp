// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <functional>
#include <string>

#include "airfl/optimizer.hpp"

// Independent checks of the closed forms: Monte-Carlo expectations, finite-difference curvature,
// matrix identities and surrogate properties. Used by the tests and by `airfl verify`.
namespace airfl::oracle {

struct McEstimate {
    double mean = 0.0;
    double std_error = 0.0;
    std::size_t draws = 0;

    // |closed - mean| in standard errors.
    double z(double closed) const { return std::abs(closed - mean) / std::max(std_error, 1e-300); }
};

// Joint draws of channel errors (truth = estimate + error), unit-variance symbols and receiver noise.
McEstimate mc_mse_imperfect(const CVec &b, const CVecList &a, const channel::ChannelEstimate &estimate,
                            const RVec &v, double sigma2_n, std::size_t draws, std::uint64_t seed);

// E|e_k|^2 with e_k = f^H (sum_{j>k} H_hat_j a_j s_j + sum_j dH_j a_j s_j + n): what SIC leaves for device k.
McEstimate mc_sinr_denominator(const CVec &f, const CVecList &a, const channel::ChannelEstimate &estimate,
                               const RVec &v, double sigma2_n, std::size_t k, std::size_t draws,
                               std::uint64_t seed);

// E|x^H dH_k a_k|^2, which the interference matrix J_k must reproduce as x^H J_k x.
McEstimate mc_interference_quadratic(const CVec &x, const CVec &a_k, const channel::ChannelEstimate &estimate,
                                     const RVec &v, std::size_t k, std::size_t draws, std::uint64_t seed);

// Exact Hessian of h_l(v) and a central-difference one built from phase_gradient.
RMat phase_hessian(const opt::PhaseProblemAssembly &as, std::size_t l, const RVec &v);
RMat fd_phase_hessian(const opt::PhaseProblemAssembly &as, std::size_t l, const RVec &v, double step = 1e-4);
double max_eigenvalue(const RMat &A);

// Random instance on the desk geometry: truth, estimate at NMSE iota, and a random state.
struct Instance {
    channel::ChannelRealization truth;
    channel::ChannelEstimate estimate;
    metrics::BeamformerState state;
};
Instance random_instance(const SystemConfig &cfg, std::uint64_t seed, double iota);

using JFunction = std::function<CMat(const CVec &, const channel::ChannelEstimate &, std::size_t)>;

struct Check {
    std::string name;
    bool pass = false;
    double measured = 0.0;  // worst value seen
    double threshold = 0.0; // pass iff measured <= threshold
    std::string detail;
};

struct SuiteOptions {
    SystemConfig cfg = SystemConfig::desk();
    std::uint64_t seed = 1;
    std::vector<double> iotas{0.05, 0.1};
    std::size_t instances = 10;
    std::size_t draws = 100000;
    std::size_t hessian_instances = 10;
    std::size_t hessian_points = 100;
    JFunction interference; // defaults to metrics::interference_matrix
};

std::vector<Check> run_suite(const SuiteOptions &options);

// Individual families, each returning one aggregated check.
Check check_imperfect_mse(const SuiteOptions &o, double iota);
Check check_sinr_denominator(const SuiteOptions &o, double iota);
Check check_interference_forms(const SuiteOptions &o, double iota);
Check check_curvature_bound(const SuiteOptions &o);
Check check_hessian_closed_form(const SuiteOptions &o);
Check check_trace_identities(const SuiteOptions &o);
Check check_recovery_surrogate(const SuiteOptions &o);
Check check_phase_surrogate(const SuiteOptions &o);
Check check_b_stationarity(const SuiteOptions &o, Regime regime);

} // namespace airfl::oracle
