// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>

#include "airfl/channel.hpp"
#include "airfl/config.hpp"
#include "airfl/convex.hpp"
#include "airfl/metrics.hpp"

// Subproblem operations take devices already in SIC decode order, like the metrics module.
// run_algorithm and initialize_feasible handle the ordering themselves.
namespace airfl::opt {

using metrics::BeamformerState;

// What the optimiser knows about the channel: the (hatted) realisation plus error statistics.
// In the perfect regime the error model is zero and every imperfect formula reduces exactly.
struct Csi {
    channel::ChannelRealization channels;
    channel::ErrorModel errors;
    Regime regime = Regime::perfect;

    static Csi perfect(const channel::ChannelRealization &truth);
    static Csi imperfect(const channel::ChannelEstimate &estimate);

    channel::ChannelEstimate as_estimate() const;
    CMatList effective(const RVec &v) const { return channel::effective_channel(channels, v); }
    Csi permuted(const std::vector<std::size_t> &order) const;
};

// ---- aggregation beamformer ----

CVec update_b_perfect(const CVecList &a, const CMatList &channels, double sigma2_n);
CVec update_b_imperfect(const CVecList &a, const channel::ChannelEstimate &estimate, const CMatList &hatted,
                        double sigma2_n);
CVec update_b(const BeamformerState &state, const Csi &csi, const SystemConfig &cfg);

// Regime objective: mse_perfect or mse_imperfect on the current state.
double objective(const BeamformerState &state, const Csi &csi, const SystemConfig &cfg);

// ---- transmit beamformers (lifted SDP + DC) ----

// lin[k] = u_k u_k^H; alpha overrides cfg.alpha when positive.
convex::BlockSdpProblem assemble_transmit_sdp(const BeamformerState &state, const Csi &csi, const SystemConfig &cfg,
                                              const CMatList &lin, double alpha = -1.0);

CVec lift(const CVec &a_k); // [a_k; 1]

struct DcResult {
    CVecList a;
    std::vector<double> rank_residuals;      // max_k tr(A_k) - ||A_k||_2 per DC iteration
    std::vector<double> final_residuals;     // per device at termination
    std::vector<convex::SolverReport> reports;
    convex::Status status = convex::Status::optimal;
    std::optional<std::size_t> offending_constraint;
    double final_alpha = 1.0;
    CMatList lifted; // last SDP solution
};

DcResult dc_transmit_step(const BeamformerState &state, const Csi &csi, const SystemConfig &cfg);

// Rank-one recovery from a lifted block: top eigenpair, last entry rotated to be real positive.
CVec recover_transmit(const CMat &A, double p_max);

// ---- recovery beamformer (SCA on f) ----

struct RecoveryMatrices {
    CMatList B1; // SINR, K entries
    CMatList B2; // gap, K-1 entries
};

RecoveryMatrices recovery_matrices(const BeamformerState &state, const Csi &csi, const SystemConfig &cfg);

// g_hat(f | f_t) = f_t^H B f_t + 2 Re((B f_t)^H (f - f_t)) + omega ||f - f_t||^2
double recovery_surrogate(const CMat &B, double omega, const CVec &f, const CVec &f_t);
double spectral_radius(const CMat &B);

struct RecoveryResult {
    CVec f;
    std::vector<double> beta; // per SCA iteration; rows divided by each device's starting received power
    std::vector<convex::SolverReport> reports;
};

RecoveryResult sca_recovery_f(const BeamformerState &state, const Csi &csi, const SystemConfig &cfg);

// ---- RIS phases: assembled quadratic forms, curvature bound, SCA ----

struct PhaseProblemAssembly {
    CMat F0;
    CVec r0;
    CMatList F1, F2;
    CVecList r1, r2;
    std::vector<double> C1, C2;
    double objective_offset = 0.0; // v-independent part of the regime MSE

    std::size_t count() const { return 1 + F1.size() + F2.size(); }
    // l = 0 objective; 1..K SINR terms; K+1.. gap terms.
    const CMat &F(std::size_t l) const;
    const CVec &r(std::size_t l) const;
    double C(std::size_t l) const;
    double sign(std::size_t l) const { return l == 0 ? 1.0 : -1.0; }
};

PhaseProblemAssembly assemble_phase_problem(const BeamformerState &state, const Csi &csi, const SystemConfig &cfg);

struct CurvatureBound {
    std::vector<double> xi;
    std::vector<double> row_sum_term, spectral_term, diagonal_term;
};

CurvatureBound lemma1_xi(const PhaseProblemAssembly &assembly);

double phase_value(const PhaseProblemAssembly &assembly, std::size_t l, const RVec &v);
RVec phase_gradient(const PhaseProblemAssembly &assembly, std::size_t l, const RVec &v);

struct PhaseResult {
    RVec v;
    std::vector<double> h0; // h_0 at each accepted iterate, starting with the anchor
    std::vector<convex::SolverReport> reports;
    int fallbacks = 0;
};

PhaseResult sca_phase_shifts(const BeamformerState &state, const Csi &csi, const SystemConfig &cfg);

// ---- audits and orchestration ----

struct Audit {
    std::vector<std::size_t> order;
    std::vector<double> sinr; // decode order
    std::vector<double> gaps;
    double min_sinr = 0.0, min_gap = 0.0, max_power = 0.0;
    bool sinr_ok = false, gap_ok = false, power_ok = false;
    bool feasible() const { return sinr_ok && gap_ok && power_ok; }
};

Audit audit(const BeamformerState &state, const Csi &csi, const SystemConfig &cfg, double rel_tol = 1e-6);

struct AoIteration {
    double objective = 0.0;
    double min_sinr = 0.0, min_gap = 0.0;
    double wall_ms = 0.0;
    std::vector<convex::SolverReport> a_reports, f_reports, v_reports;
    std::vector<double> rank_residuals;
    bool a_accepted = true;
    std::string note;    // e.g. a-step kept the previous beamformers
    std::string failure; // subproblem could not be solved
};

struct AoTrace {
    double initial_objective = 0.0;
    std::vector<AoIteration> iterations;
    std::string failure;
    bool converged = false;
};

struct AoResult {
    BeamformerState state;
    AoTrace trace;
};

AoResult run_algorithm(const BeamformerState &state0, const Csi &csi, const SystemConfig &cfg);

// Throws InfeasibleInstance when a link-budget bound rules the instance out or no start reaches
// the thresholds; family names the blocking constraint group.
BeamformerState initialize_feasible(const Csi &csi, const SystemConfig &cfg, std::uint64_t seed);

// The unrelaxed first point of initialize_feasible; not necessarily feasible.
BeamformerState starting_point(const Csi &csi, const SystemConfig &cfg, std::uint64_t seed);

} // namespace airfl::opt
