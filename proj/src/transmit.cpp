// SPDX-License-Identifier: Apache-2.0
#include <algorithm>

#include "airfl/optimizer.hpp"

namespace airfl::opt {

namespace {

CMat blkdiag_top(const CMat &top, Eigen::Index n) {
    CMat Z = CMat::Zero(n, n);
    Z.topLeftCorner(top.rows(), top.cols()) = top;
    return Z;
}

double top_eigen(const CMat &A, CVec *vec = nullptr) {
    Eigen::SelfAdjointEigenSolver<CMat> es(0.5 * (A + A.adjoint()));
    const auto n = A.rows();
    if (vec) *vec = es.eigenvectors().col(n - 1);
    return es.eigenvalues()[n - 1];
}

} // namespace

Csi Csi::perfect(const channel::ChannelRealization &truth) {
    return {truth, channel::ErrorModel::zero(truth.K()), Regime::perfect};
}

Csi Csi::imperfect(const channel::ChannelEstimate &estimate) {
    return {estimate.est, estimate.error_model, Regime::imperfect};
}

channel::ChannelEstimate Csi::as_estimate() const {
    channel::ChannelEstimate e;
    e.est = channels;
    e.error_model = errors;
    return e;
}

Csi Csi::permuted(const std::vector<std::size_t> &order) const {
    return {channel::permute(channels, order), channel::permute(errors, order), regime};
}

CVec update_b_perfect(const CVecList &a, const CMatList &channels, double sigma2_n) {
    if (a.size() != channels.size()) throw InvalidInput("beamformer count differs from channel count");
    const Eigen::Index Nr = channels.empty() ? 0 : channels.front().rows();
    CMat gram = sigma2_n * CMat::Identity(Nr, Nr);
    CVec rhs = CVec::Zero(Nr);
    for (std::size_t k = 0; k < a.size(); ++k) {
        if (channels[k].cols() != a[k].size()) throw InvalidInput("a_k length differs from Nt");
        const CVec h = channels[k] * a[k];
        gram += h * h.adjoint();
        rhs += h;
    }
    if (rhs.squaredNorm() == 0.0) return CVec::Zero(Nr);
    Eigen::LDLT<CMat> ldlt(gram);
    if (ldlt.info() != Eigen::Success || ldlt.vectorD().real().minCoeff() <= 0.0)
        throw DegenerateInput("aggregation Gram matrix is singular");
    return ldlt.solve(rhs);
}

CVec update_b_imperfect(const CVecList &a, const channel::ChannelEstimate &estimate, const CMatList &hatted,
                        double sigma2_n) {
    if (a.size() != hatted.size()) throw InvalidInput("beamformer count differs from channel count");
    const Eigen::Index Nr = hatted.empty() ? 0 : hatted.front().rows();
    CMat gram = sigma2_n * CMat::Identity(Nr, Nr);
    CVec rhs = CVec::Zero(Nr);
    for (std::size_t k = 0; k < a.size(); ++k) {
        const CVec h = hatted[k] * a[k];
        gram += h * h.adjoint() + metrics::interference_matrix(a[k], estimate, k);
        rhs += h;
    }
    if (rhs.squaredNorm() == 0.0) return CVec::Zero(Nr);
    Eigen::LDLT<CMat> ldlt(gram);
    if (ldlt.info() != Eigen::Success || ldlt.vectorD().real().minCoeff() <= 0.0)
        throw DegenerateInput("aggregation Gram matrix is singular");
    return ldlt.solve(rhs);
}

CVec update_b(const BeamformerState &state, const Csi &csi, const SystemConfig &cfg) {
    const CMatList H = csi.effective(state.v);
    if (csi.regime == Regime::perfect) return update_b_perfect(state.a, H, cfg.sigma2_n);
    return update_b_imperfect(state.a, csi.as_estimate(), H, cfg.sigma2_n);
}

double objective(const BeamformerState &state, const Csi &csi, const SystemConfig &cfg) {
    const CMatList H = csi.effective(state.v);
    if (csi.regime == Regime::perfect) return metrics::mse_perfect(state.b, state.a, H, cfg.sigma2_n);
    return metrics::mse_imperfect(state.b, state.a, csi.as_estimate(), H, cfg.sigma2_n);
}

CVec lift(const CVec &a_k) {
    CVec x(a_k.size() + 1);
    x.head(a_k.size()) = a_k;
    x[a_k.size()] = 1.0;
    return x;
}

convex::BlockSdpProblem assemble_transmit_sdp(const BeamformerState &state, const Csi &csi, const SystemConfig &cfg,
                                              const CMatList &lin, double alpha) {
    state.validate(cfg);
    csi.channels.validate(cfg);
    if (lin.size() != cfg.K) throw InvalidInput("one linearisation point per device required");
    const double al = alpha > 0.0 ? alpha : cfg.alpha;
    const std::size_t K = cfg.K;
    const auto Nt = Eigen::Index(cfg.Nt);
    const Eigen::Index n = Nt + 1;
    const CMatList H = csi.effective(state.v);
    const bool imperfect = csi.regime == Regime::imperfect;
    const double gamma = cfg.gamma_min;
    const double M = double(cfg.M);
    const CMat &G = csi.channels.g;
    const double bn = state.b.squaredNorm(), fn = state.f.squaredNorm();
    const double Gb = (G * state.b).squaredNorm(), Gf = (G * state.f).squaredNorm();

    convex::BlockSdpProblem p;
    CMatList Z2(K), Z1t(K);
    for (std::size_t k = 0; k < K; ++k) {
        if (lin[k].rows() != n || lin[k].cols() != n) throw InvalidInput("linearisation point shape mismatch");
        const CVec hb = H[k].adjoint() * state.b;
        const CVec hf = H[k].adjoint() * state.f;
        CMat Z0 = CMat::Zero(n, n);
        Z0.topLeftCorner(Nt, Nt) = hb * hb.adjoint();
        Z0.topRightCorner(Nt, 1) = -hb;
        Z0.bottomLeftCorner(1, Nt) = -hb.adjoint();
        Z2[k] = blkdiag_top(hf * hf.adjoint(), n);
        Z1t[k] = CMat::Zero(n, n);
        if (imperfect) {
            const double sd = csi.errors.sigma2_d[k], sr = csi.errors.sigma2_r[k], sg = csi.errors.sigma2_g;
            const CMat &Hr = csi.channels.h_ris[k];
            CMat Db = (sg * bn) * (Hr.adjoint() * Hr);
            Db.diagonal().array() += sd * bn + M * sr * sg * bn + sr * Gb;
            CMat Df = (sg * fn) * (Hr.adjoint() * Hr);
            Df.diagonal().array() += sd * fn + M * sr * sg * fn + sr * Gf;
            Z0.topLeftCorner(Nt, Nt) += Db;
            Z1t[k] = blkdiag_top(Df, n);
        }
        p.costs.push_back(Z0 + al * CMat::Identity(n, n) - al * lin[k]);
    }
    for (std::size_t k = 0; k < K; ++k) {
        convex::Inequality pw;
        pw.terms.push_back({k, blkdiag_top(CMat::Identity(Nt, Nt), n)});
        pw.bound = cfg.p_max;
        p.inequalities.push_back(pw);
    }
    for (std::size_t k = 0; k < K; ++k) {
        convex::Inequality s;
        for (std::size_t j = 0; j < K; ++j) {
            CMat C = CMat::Zero(n, n);
            if (j == k) C -= Z2[k];
            if (j > k) C += gamma * Z2[j];
            if (imperfect) C += gamma * Z1t[j];
            if (C.cwiseAbs().maxCoeff() > 0.0 || j == k) s.terms.push_back({j, C});
        }
        s.bound = -gamma * cfg.sigma2_n * fn;
        p.inequalities.push_back(s);
    }
    for (std::size_t k = 0; k + 1 < K; ++k) {
        convex::Inequality g;
        g.terms.push_back({k, -Z2[k]});
        for (std::size_t j = k + 1; j < K; ++j) g.terms.push_back({j, Z2[j]});
        g.bound = -cfg.p_gap(csi.regime);
        p.inequalities.push_back(g);
    }
    for (std::size_t k = 0; k < K; ++k) p.pins.push_back({k, std::size_t(Nt), 1.0});
    return p;
}

CVec recover_transmit(const CMat &A, double p_max) {
    CVec p;
    const double lam = std::max(top_eigen(A, &p), 0.0);
    CVec abar = std::sqrt(lam) * p;
    const Eigen::Index n = abar.size();
    const cd last = abar[n - 1];
    if (std::abs(last) > 0.0) abar *= std::conj(last) / std::abs(last);
    CVec a = abar.head(n - 1);
    const double pw = a.squaredNorm();
    if (pw > p_max) a *= std::sqrt(p_max / pw);
    return a;
}

DcResult dc_transmit_step(const BeamformerState &state, const Csi &csi, const SystemConfig &cfg) {
    const std::size_t K = cfg.K;
    DcResult out;
    out.a = state.a;
    CMatList lin(K);
    for (std::size_t k = 0; k < K; ++k) {
        const CVec u = lift(state.a[k]).normalized();
        lin[k] = u * u.adjoint();
    }
    double alpha = cfg.alpha;
    int stall = 0;
    double prev = std::numeric_limits<double>::infinity();
    CMatList best;
    for (int t = 0; t < cfg.T1; ++t) {
        const auto prob = assemble_transmit_sdp(state, csi, cfg, lin, alpha);
        auto res = convex::solve_block_sdp(prob, cfg.feas_tol, cfg.opt_tol, cfg.max_iter);
        out.reports.push_back(res.report);
        if (res.report.status == convex::Status::infeasible) {
            out.status = convex::Status::infeasible;
            out.offending_constraint = res.report.offending_constraint;
            break;
        }
        if (res.report.status != convex::Status::optimal && res.report.max_violation > 1e-6) {
            out.status = res.report.status;
            break;
        }
        best = res.X;
        double worst = 0.0;
        out.final_residuals.assign(K, 0.0);
        for (std::size_t k = 0; k < K; ++k) {
            CVec u;
            const double lmax = top_eigen(res.X[k], &u);
            const double resid = std::max(0.0, res.X[k].trace().real() - lmax);
            out.final_residuals[k] = resid;
            worst = std::max(worst, resid);
            lin[k] = u * u.adjoint();
        }
        out.rank_residuals.push_back(worst);
        if (worst <= cfg.eps1) break;
        if (worst >= prev * (1.0 - 1e-3)) {
            if (++stall >= 5) {
                alpha = std::min(2.0 * alpha, 1e3);
                stall = 0;
            }
        } else {
            stall = 0;
        }
        prev = worst;
    }
    out.final_alpha = alpha;
    if (!best.empty()) {
        out.lifted = best;
        for (std::size_t k = 0; k < K; ++k) out.a[k] = recover_transmit(best[k], cfg.p_max);
        if (out.status != convex::Status::infeasible) out.status = convex::Status::optimal;
    }
    return out;
}

} // namespace airfl::opt
