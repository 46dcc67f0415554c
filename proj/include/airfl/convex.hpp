// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <optional>
#include <string>

#include "airfl/common.hpp"

namespace airfl::convex {

enum class Status { optimal, infeasible, iteration_limit };

inline const char *to_string(Status s) {
    switch (s) {
    case Status::optimal: return "optimal";
    case Status::infeasible: return "infeasible";
    default: return "iteration-limit";
    }
}

struct SolverReport {
    Status status = Status::iteration_limit;
    double objective = 0.0;
    double max_violation = 0.0; // relative to each constraint row's scale
    double kkt_residual = 0.0;
    int iterations = 0;
    std::string method;
    // Set on infeasible status: index of the inequality with the largest certificate weight.
    std::optional<std::size_t> offending_constraint;
    std::vector<double> certificate;
};

// One term M_{j,k} of an inequality row, acting on block k.
struct BlockTerm {
    std::size_t block;
    CMat coeff;
};

struct Inequality {
    std::vector<BlockTerm> terms; // sum_k Re tr(M_{j,k} X_k) <= bound
    double bound = 0.0;
};

struct DiagonalPin {
    std::size_t block;
    std::size_t index;
    double value;
};

struct BlockSdpProblem {
    CMatList costs; // C_k, Hermitian
    std::vector<Inequality> inequalities;
    std::vector<DiagonalPin> pins;

    double objective(const CMatList &X) const;
    // Largest inequality excess and pin mismatch, unscaled.
    double max_violation(const CMatList &X) const;
};

struct SdpWarmStart {
    CMatList X;
    RVec y;
    CMatList Z;
    RVec slack, slack_dual;
};

struct SdpResult {
    CMatList X;
    SolverReport report;
    double dual_objective = 0.0;
    SdpWarmStart final_iterate;
};

// Primal-dual interior point (HKM direction, Mehrotra predictor-corrector) on native complex
// Hermitian blocks; inequality slacks are 1x1 blocks.
SdpResult solve_block_sdp(const BlockSdpProblem &problem, double feas_tol, double opt_tol, int max_iter,
                          const SdpWarmStart *warm = nullptr);

// q(x) = constant + gradient.(x - anchor) + (curvature / 2) ||x - anchor||^2
struct Quadratic {
    double constant = 0.0;
    RVec gradient;
    double curvature = 0.0;
    RVec anchor;

    double operator()(const RVec &x) const;
    RVec grad(const RVec &x) const;
};

enum class QcqpMode { minimize_q0, minimize_beta };

struct QcqpProblem {
    std::size_t dimension = 0;
    Quadratic objective; // ignored in minimize_beta mode
    std::vector<Quadratic> constraints;
    QcqpMode mode = QcqpMode::minimize_q0;
};

struct QcqpWarmStart {
    RVec x;
    double beta = 0.0;
    RVec lambda;
};

struct QcqpResult {
    RVec x;
    std::optional<double> beta;
    RVec lambda; // constraint multipliers
    SolverReport report;
};

// Slack-based primal-dual interior point with an infeasible start. minimize_q0 first solves the
// minimax phase-1 problem, whose multipliers certify infeasibility when its value is positive.
QcqpResult solve_qcqp(const QcqpProblem &problem, double feas_tol, double opt_tol, int max_iter,
                      const QcqpWarmStart *warm = nullptr);

} // namespace airfl::convex
