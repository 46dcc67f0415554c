// SPDX-License-Identifier: Apache-2.0
#include <algorithm>

#include "airfl/optimizer.hpp"

namespace airfl::opt {

namespace {

// A o B^T for the trace identity tr(A Theta B Theta^H) = e^H (A o B^T) e.
CMat hadamard_t(const CMat &A, const CMat &B) { return A.cwiseProduct(B.transpose()); }

CVec vecdiag_outer(const CVec &x, const CVec &y, cd scale) {
    // diag(scale * x y^H)
    return scale * x.cwiseProduct(y.conjugate());
}

CVec unit_phasors(const RVec &v) {
    CVec e(v.size());
    for (Eigen::Index m = 0; m < v.size(); ++m) e[m] = std::polar(1.0, v[m]);
    return e;
}

} // namespace

const CMat &PhaseProblemAssembly::F(std::size_t l) const {
    if (l == 0) return F0;
    if (l <= F1.size()) return F1[l - 1];
    return F2.at(l - 1 - F1.size());
}

const CVec &PhaseProblemAssembly::r(std::size_t l) const {
    if (l == 0) return r0;
    if (l <= r1.size()) return r1[l - 1];
    return r2.at(l - 1 - r1.size());
}

double PhaseProblemAssembly::C(std::size_t l) const {
    if (l == 0) return 0.0;
    if (l <= C1.size()) return C1[l - 1];
    return C2.at(l - 1 - C1.size());
}

PhaseProblemAssembly assemble_phase_problem(const BeamformerState &state, const Csi &csi, const SystemConfig &cfg) {
    state.validate(cfg);
    csi.channels.validate(cfg);
    const std::size_t K = cfg.K;
    const auto M = Eigen::Index(cfg.M);
    const double gamma = cfg.gamma_min;
    const CMat &G = csi.channels.g;
    const CVec Gb = G * state.b, Gf = G * state.f;
    const CMat Gbar_b = Gb * Gb.adjoint(), Gbar_f = Gf * Gf.adjoint();

    std::vector<CMat> Q0(K);
    std::vector<CVec> q1(K), q2(K);
    std::vector<double> direct_f(K);
    PhaseProblemAssembly as;
    as.F0 = CMat::Zero(M, M);
    as.r0 = CVec::Zero(M);
    as.objective_offset = cfg.sigma2_n * state.b.squaredNorm();
    for (std::size_t k = 0; k < K; ++k) {
        const CVec hra = csi.channels.h_ris[k] * state.a[k];
        const CVec hda = csi.channels.h_direct[k] * state.a[k];
        Q0[k] = hra * hra.adjoint();
        const cd bHd = state.b.dot(hda);
        const cd fHd = state.f.dot(hda);
        // Q1 = (b^H H_d a) G b a^H H_r^H - G b a^H H_r^H ; Q2 = G f f^H H_d a a^H H_r^H
        q1[k] = vecdiag_outer(Gb, hra, bHd - 1.0);
        q2[k] = vecdiag_outer(Gf, hra, fHd);
        direct_f[k] = std::norm(fHd);
        as.F0 += hadamard_t(Gbar_b, Q0[k]);
        as.r0 += q1[k];
        as.objective_offset += std::norm(bHd - 1.0);
    }

    double jf = 0.0;
    if (csi.regime == Regime::imperfect) {
        const auto est = csi.as_estimate();
        for (std::size_t k = 0; k < K; ++k) {
            const CMat J = metrics::interference_matrix(state.a[k], est, k);
            jf += state.f.dot(J * state.f).real();
            as.objective_offset += state.b.dot(J * state.b).real();
        }
    }

    const double pgap = cfg.p_gap(csi.regime);
    const double fn = state.f.squaredNorm();
    for (std::size_t k = 0; k < K; ++k) {
        CMat tailF = CMat::Zero(M, M);
        CVec tailr = CVec::Zero(M);
        double tailc = 0.0;
        for (std::size_t j = k + 1; j < K; ++j) {
            tailF += hadamard_t(Gbar_f, Q0[j]);
            tailr += q2[j];
            tailc += direct_f[j];
        }
        const CMat own = hadamard_t(Gbar_f, Q0[k]);
        as.F1.push_back(own - gamma * tailF);
        as.r1.push_back(q2[k] - gamma * tailr);
        as.C1.push_back(gamma * (tailc + cfg.sigma2_n * fn + jf) - direct_f[k]);
        if (k + 1 < K) {
            as.F2.push_back(own - tailF);
            as.r2.push_back(q2[k] - tailr);
            as.C2.push_back(tailc + pgap - direct_f[k]);
        }
    }
    return as;
}

CurvatureBound lemma1_xi(const PhaseProblemAssembly &as) {
    CurvatureBound cb;
    for (std::size_t l = 0; l < as.count(); ++l) {
        const CMat &F = as.F(l);
        const CVec &r = as.r(l);
        double rowsum = 0.0, diag = 0.0, spec = 0.0;
        if (F.size() > 0) {
            const RVec colabs = F.cwiseAbs().colwise().sum().transpose();
            rowsum = (colabs + r.cwiseAbs()).maxCoeff();
            diag = F.diagonal().cwiseAbs().maxCoeff();
            CMat Fbar = F.transpose();
            Fbar.diagonal().setZero();
            spec = Eigen::JacobiSVD<CMat>(Fbar).singularValues()(0);
        }
        cb.row_sum_term.push_back(2.0 * rowsum);
        cb.spectral_term.push_back(2.0 * spec);
        cb.diagonal_term.push_back(2.0 * diag);
        cb.xi.push_back(2.0 * rowsum + 2.0 * spec + 2.0 * diag);
    }
    return cb;
}

double phase_value(const PhaseProblemAssembly &as, std::size_t l, const RVec &v) {
    const CVec e = unit_phasors(v);
    const cd quad = e.dot(as.F(l) * e);
    const cd lin = e.dot(as.r(l));
    return as.sign(l) * (quad.real() + 2.0 * lin.real()) + as.C(l);
}

RVec phase_gradient(const PhaseProblemAssembly &as, std::size_t l, const RVec &v) {
    const CVec e = unit_phasors(v);
    const CVec w = as.F(l) * e + as.r(l);
    RVec g(v.size());
    const cd mj(0.0, -1.0);
    for (Eigen::Index m = 0; m < v.size(); ++m) g[m] = 2.0 * (mj * std::conj(e[m]) * w[m]).real();
    return as.sign(l) * g;
}

PhaseResult sca_phase_shifts(const BeamformerState &state, const Csi &csi, const SystemConfig &cfg) {
    PhaseResult out;
    out.v = state.v;
    if (cfg.M == 0) return out;
    const auto as = assemble_phase_problem(state, csi, cfg);
    const auto cb = lemma1_xi(as);
    const std::size_t L = as.count();

    // Constraint rows divided by each device's received power at the start (see sca_recovery_f).
    std::vector<double> w(L, 1.0);
    {
        const CMatList H = csi.effective(state.v);
        std::vector<double> sk(cfg.K);
        double top = 0.0;
        for (std::size_t k = 0; k < cfg.K; ++k) top = std::max(top, sk[k] = std::norm(state.f.dot(H[k] * state.a[k])));
        if (top > 0.0)
            for (std::size_t l = 1; l < L; ++l) {
                const std::size_t k = l <= cfg.K ? l - 1 : l - 1 - cfg.K;
                w[l] = 1.0 / std::max(sk[k], 1e-12 * top);
            }
    }

    RVec v = state.v;
    double h0 = phase_value(as, 0, v);
    out.h0.push_back(h0);
    for (int t = 0; t < cfg.T3; ++t) {
        convex::QcqpProblem q;
        q.dimension = std::size_t(cfg.M);
        q.objective = {h0, phase_gradient(as, 0, v), cb.xi[0], v};
        for (std::size_t l = 1; l < L; ++l) q.constraints.push_back({w[l] * phase_value(as, l, v), w[l] * phase_gradient(as, l, v), w[l] * cb.xi[l], v});
        auto res = convex::solve_qcqp(q, cfg.feas_tol, cfg.opt_tol, cfg.max_iter);
        out.reports.push_back(res.report);
        RVec vn;
        if (res.report.status == convex::Status::infeasible) {
            // Surrogate constraints can be jointly infeasible: minimise their largest value instead.
            ++out.fallbacks;
            q.mode = convex::QcqpMode::minimize_beta;
            auto fb = convex::solve_qcqp(q, cfg.feas_tol, cfg.opt_tol, cfg.max_iter);
            out.reports.push_back(fb.report);
            vn = fb.x;
        } else {
            vn = res.x;
            // A descent step must not raise the surrogate objective above its anchor value.
            if (!vn.allFinite() || q.objective(vn) > h0) break;
        }
        if (!vn.allFinite()) break;
        const double hn = phase_value(as, 0, vn);
        const double change = std::abs(hn - h0);
        v = vn;
        h0 = hn;
        out.h0.push_back(h0);
        if (change <= cfg.eps3 * std::max(std::abs(h0 + as.objective_offset), 1e-300)) break;
    }
    out.v = v.unaryExpr([](double x) { return wrap_phase(x); });
    return out;
}

} // namespace airfl::opt
