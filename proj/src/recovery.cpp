// SPDX-License-Identifier: Apache-2.0
#include <algorithm>

#include "airfl/optimizer.hpp"

namespace airfl::opt {

namespace {

RVec to_real(const CVec &z) {
    RVec x(2 * z.size());
    x.head(z.size()) = z.real();
    x.tail(z.size()) = z.imag();
    return x;
}

CVec to_complex(const RVec &x) {
    const Eigen::Index n = x.size() / 2;
    CVec z(n);
    for (Eigen::Index i = 0; i < n; ++i) z[i] = cd(x[i], x[n + i]);
    return z;
}

// Surrogate of f^H B f + offset anchored at f_t, in real coordinates.
convex::Quadratic surrogate_quadratic(const CMat &B, double omega, const CVec &f_t, double offset) {
    const CVec Bf = B * f_t;
    return {f_t.dot(Bf).real() + offset, 2.0 * to_real(Bf), 2.0 * omega, to_real(f_t)};
}

} // namespace

double spectral_radius(const CMat &B) {
    if (B.size() == 0) return 0.0;
    return Eigen::SelfAdjointEigenSolver<CMat>(0.5 * (B + B.adjoint()), Eigen::EigenvaluesOnly)
        .eigenvalues()
        .cwiseAbs()
        .maxCoeff();
}

double recovery_surrogate(const CMat &B, double omega, const CVec &f, const CVec &f_t) {
    const CVec Bf = B * f_t;
    const CVec d = f - f_t;
    return f_t.dot(Bf).real() + 2.0 * Bf.dot(d).real() + omega * d.squaredNorm();
}

RecoveryMatrices recovery_matrices(const BeamformerState &state, const Csi &csi, const SystemConfig &cfg) {
    const std::size_t K = cfg.K;
    const auto Nr = Eigen::Index(cfg.Nr);
    const CMatList H = csi.effective(state.v);
    CMatList Ha(K);
    for (std::size_t k = 0; k < K; ++k) {
        const CVec h = H[k] * state.a[k];
        Ha[k] = h * h.adjoint();
    }
    CMat Jsum = CMat::Zero(Nr, Nr);
    if (csi.regime == Regime::imperfect) {
        const auto est = csi.as_estimate();
        for (std::size_t k = 0; k < K; ++k) Jsum += metrics::interference_matrix(state.a[k], est, k);
    }
    RecoveryMatrices m;
    for (std::size_t k = 0; k < K; ++k) {
        CMat tail = CMat::Zero(Nr, Nr);
        for (std::size_t j = k + 1; j < K; ++j) tail += Ha[j];
        CMat noise = cfg.sigma2_n * CMat::Identity(Nr, Nr) + Jsum;
        m.B1.push_back(cfg.gamma_min * (tail + noise) - Ha[k]);
        if (k + 1 < K) m.B2.push_back(tail - Ha[k]);
    }
    return m;
}

RecoveryResult sca_recovery_f(const BeamformerState &state, const Csi &csi, const SystemConfig &cfg) {
    const auto mats = recovery_matrices(state, csi, cfg);
    const double pgap = cfg.p_gap(csi.regime);
    const CMatList H = csi.effective(state.v);
    RecoveryResult out;
    CVec f = state.f;
    if (f.squaredNorm() == 0.0) {
        f = H[0] * state.a[0];
        if (f.squaredNorm() == 0.0) f = CVec::Ones(Eigen::Index(cfg.Nr));
    }

    // Rows are divided by the device's received power at the start point, so the minimax weighs
    // relative violations; positive row scaling leaves the feasible set unchanged.
    std::vector<double> w(cfg.K, 1.0);
    {
        const double fn = f.squaredNorm();
        double top = 0.0;
        for (std::size_t k = 0; k < cfg.K; ++k) {
            w[k] = std::norm(f.dot(H[k] * state.a[k])) / fn;
            top = std::max(top, w[k]);
        }
        for (auto &x : w) x = top > 0.0 ? 1.0 / std::max(x, 1e-12 * top) : 1.0;
    }
    std::vector<CMat> B1, B2;
    std::vector<double> om1, om2, pg2;
    for (std::size_t k = 0; k < mats.B1.size(); ++k) B1.push_back(w[k] * mats.B1[k]);
    for (std::size_t k = 0; k < mats.B2.size(); ++k) {
        B2.push_back(w[k] * mats.B2[k]);
        pg2.push_back(w[k] * pgap);
    }
    for (const auto &B : B1) om1.push_back(spectral_radius(B));
    for (const auto &B : B2) om2.push_back(spectral_radius(B));

    auto max_g = [&](const CVec &x) {
        double m = -std::numeric_limits<double>::infinity();
        for (const auto &B : B1) m = std::max(m, x.dot(B * x).real());
        for (std::size_t k = 0; k < B2.size(); ++k) m = std::max(m, x.dot(B2[k] * x).real() + pg2[k]);
        return m;
    };
    double beta_prev = max_g(f);
    out.beta.push_back(beta_prev);
    for (int t = 0; t < cfg.T2; ++t) {
        // Work in units of ||f_t||: the surrogates are homogeneous of degree two in (f, f_t).
        const double kappa = f.norm();
        const CVec ft = f / kappa;
        const double k2 = kappa * kappa;
        convex::QcqpProblem q;
        q.dimension = std::size_t(2 * cfg.Nr);
        q.mode = convex::QcqpMode::minimize_beta;
        for (std::size_t k = 0; k < B1.size(); ++k) q.constraints.push_back(surrogate_quadratic(B1[k], om1[k], ft, 0.0));
        for (std::size_t k = 0; k < B2.size(); ++k)
            q.constraints.push_back(surrogate_quadratic(B2[k], om2[k], ft, pg2[k] / k2));
        auto res = convex::solve_qcqp(q, cfg.feas_tol, cfg.opt_tol, cfg.max_iter);
        out.reports.push_back(res.report);
        const CVec fn = kappa * to_complex(res.x);
        if (!fn.allFinite() || fn.squaredNorm() == 0.0) break;
        const double beta = max_g(fn);
        // Majorisation makes beta non-increasing; keep the anchor if the solve did not improve.
        if (beta > beta_prev) break;
        f = fn;
        out.beta.push_back(beta);
        const double change = std::abs(beta - beta_prev);
        beta_prev = beta;
        if (change <= cfg.eps2 * std::max(std::abs(beta), 1e-300)) break;
    }

    // The minimax problem is unbounded once feasible (scaling f up helps every constraint), so f is
    // returned at a canonical scale: smallest power gap at ten times the required gap, or unit norm.
    const RVec gaps = metrics::power_gaps(f, state.a, H);
    if (gaps.size() > 0 && gaps.minCoeff() > 0.0 && pgap > 0.0) {
        f *= std::sqrt(10.0 * pgap / gaps.minCoeff());
    } else if (gaps.size() == 0) {
        f.normalize();
    }
    out.f = f;
    return out;
}

} // namespace airfl::opt
