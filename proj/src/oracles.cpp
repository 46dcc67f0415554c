// SPDX-License-Identifier: Apache-2.0
#include <algorithm>
#include <random>
#include <sstream>

#include "airfl/oracles.hpp"

namespace airfl::oracle {

namespace {

CMat cgauss(Eigen::Index r, Eigen::Index c, double var, std::mt19937_64 &rng) {
    std::normal_distribution<double> N(0.0, std::sqrt(var / 2.0));
    CMat X(r, c);
    for (Eigen::Index j = 0; j < c; ++j)
        for (Eigen::Index i = 0; i < r; ++i) X(i, j) = cd(N(rng), N(rng));
    return X;
}

CVec cgauss(Eigen::Index n, double var, std::mt19937_64 &rng) { return cgauss(n, 1, var, rng).col(0); }

// Accumulates a running mean and standard error (Welford).
struct Running {
    std::size_t n = 0;
    double mean = 0.0, m2 = 0.0;
    void add(double x) {
        ++n;
        const double d = x - mean;
        mean += d / double(n);
        m2 += d * (x - mean);
    }
    McEstimate result() const {
        const double var = n > 1 ? m2 / double(n - 1) : 0.0;
        return {mean, std::sqrt(var / double(std::max<std::size_t>(n, 1))), n};
    }
};

// True channel given the estimate: est + fresh error draw.
channel::ChannelRealization draw_truth(const channel::ChannelEstimate &e, std::mt19937_64 &rng) {
    const auto &m = e.error_model;
    channel::ChannelRealization t;
    for (std::size_t k = 0; k < e.est.K(); ++k) {
        const CMat &hd = e.est.h_direct[k], &hr = e.est.h_ris[k];
        t.h_direct.push_back(hd + cgauss(hd.rows(), hd.cols(), m.sigma2_d[k], rng));
        t.h_ris.push_back(hr + cgauss(hr.rows(), hr.cols(), m.sigma2_r[k], rng));
    }
    t.g = e.est.g + cgauss(e.est.g.rows(), e.est.g.cols(), m.sigma2_g, rng);
    return t;
}

CVec unit_phasors(const RVec &v) {
    CVec e(v.size());
    for (Eigen::Index m = 0; m < v.size(); ++m) e[m] = std::polar(1.0, v[m]);
    return e;
}

RVec uniform_phases(Eigen::Index M, std::mt19937_64 &rng) {
    std::uniform_real_distribution<double> U(0.0, kTwoPi);
    RVec v(M);
    for (Eigen::Index m = 0; m < M; ++m) v[m] = U(rng);
    return v;
}

std::string fmt(double x) {
    std::ostringstream os;
    os.precision(4);
    os << x;
    return os.str();
}

Check make(std::string name, double worst, double threshold, std::string detail) {
    return {std::move(name), worst <= threshold, worst, threshold, std::move(detail)};
}

double mse_with(const SuiteOptions &o, const CVec &b, const CVecList &a, const channel::ChannelEstimate &est,
                const RVec &v, double s2) {
    const CMatList H = channel::effective_channel(est.est, v);
    double mse = metrics::mse_perfect(b, a, H, s2);
    for (std::size_t k = 0; k < a.size(); ++k) {
        const CMat J = o.interference ? o.interference(a[k], est, k) : metrics::interference_matrix(a[k], est, k);
        mse += b.dot(J * b).real();
    }
    return mse;
}

} // namespace

McEstimate mc_mse_imperfect(const CVec &b, const CVecList &a, const channel::ChannelEstimate &estimate,
                            const RVec &v, double sigma2_n, std::size_t draws, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    const std::size_t K = a.size();
    Running acc;
    for (std::size_t i = 0; i < draws; ++i) {
        const auto truth = draw_truth(estimate, rng);
        const CMatList H = channel::effective_channel(truth, v);
        const CVec s = cgauss(Eigen::Index(K), 1.0, rng);
        CVec y = cgauss(b.size(), sigma2_n, rng);
        for (std::size_t k = 0; k < K; ++k) y += H[k] * a[k] * s[Eigen::Index(k)];
        acc.add(std::norm(b.dot(y) - s.sum()));
    }
    return acc.result();
}

McEstimate mc_sinr_denominator(const CVec &f, const CVecList &a, const channel::ChannelEstimate &estimate,
                               const RVec &v, double sigma2_n, std::size_t k, std::size_t draws,
                               std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    const std::size_t K = a.size();
    const CMatList Hh = channel::effective_channel(estimate.est, v);
    Running acc;
    for (std::size_t i = 0; i < draws; ++i) {
        const auto truth = draw_truth(estimate, rng);
        const CMatList H = channel::effective_channel(truth, v);
        const CVec s = cgauss(Eigen::Index(K), 1.0, rng);
        CVec e = cgauss(f.size(), sigma2_n, rng);
        for (std::size_t j = 0; j < K; ++j) {
            e += (H[j] - Hh[j]) * a[j] * s[Eigen::Index(j)];
            if (j > k) e += Hh[j] * a[j] * s[Eigen::Index(j)];
        }
        acc.add(std::norm(f.dot(e)));
    }
    return acc.result();
}

McEstimate mc_interference_quadratic(const CVec &x, const CVec &a_k, const channel::ChannelEstimate &estimate,
                                     const RVec &v, std::size_t k, std::size_t draws, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    const CMat Hh = channel::effective_channel(estimate.est, v)[k];
    Running acc;
    for (std::size_t i = 0; i < draws; ++i) {
        const auto truth = draw_truth(estimate, rng);
        const CMat H = channel::effective_channel(truth, v)[k];
        acc.add(std::norm(x.dot((H - Hh) * a_k)));
    }
    return acc.result();
}

RMat phase_hessian(const opt::PhaseProblemAssembly &as, std::size_t l, const RVec &v) {
    const CVec e = unit_phasors(v);
    const CMat &F = as.F(l);
    const CVec w = F * e + as.r(l);
    const Eigen::Index M = v.size();
    RMat Hs(M, M);
    for (Eigen::Index m = 0; m < M; ++m)
        for (Eigen::Index n = 0; n < M; ++n)
            Hs(m, n) = m == n ? -2.0 * (std::conj(e[m]) * w[m]).real() + 2.0 * F(m, m).real()
                              : 2.0 * (std::conj(e[m]) * F(m, n) * e[n]).real();
    return as.sign(l) * Hs;
}

RMat fd_phase_hessian(const opt::PhaseProblemAssembly &as, std::size_t l, const RVec &v, double step) {
    const Eigen::Index M = v.size();
    RMat Hs(M, M);
    for (Eigen::Index j = 0; j < M; ++j) {
        RVec vp = v, vm = v;
        vp[j] += step;
        vm[j] -= step;
        Hs.col(j) = (opt::phase_gradient(as, l, vp) - opt::phase_gradient(as, l, vm)) / (2.0 * step);
    }
    return 0.5 * (Hs + Hs.transpose());
}

double max_eigenvalue(const RMat &A) {
    if (A.size() == 0) return 0.0;
    return Eigen::SelfAdjointEigenSolver<RMat>(A, Eigen::EigenvaluesOnly).eigenvalues().maxCoeff();
}

Instance random_instance(const SystemConfig &cfg, std::uint64_t seed, double iota) {
    channel::SystemGeometry geo;
    geo.device_positions = channel::sample_device_positions(cfg.K, seed);
    Instance in;
    in.truth = channel::sample_channels(geo, cfg, seed);
    const auto model = iota > 0.0 ? channel::calibrate_error_model(in.truth, iota) : channel::ErrorModel::zero(cfg.K);
    in.estimate = channel::sample_estimate(in.truth, model, seed ^ 0x5eedULL);
    std::mt19937_64 rng(seed * 7919ULL + 17ULL);
    auto &s = in.state;
    s.v = uniform_phases(Eigen::Index(cfg.M), rng);
    for (std::size_t k = 0; k < cfg.K; ++k) {
        CVec a = cgauss(Eigen::Index(cfg.Nt), 1.0, rng);
        a *= std::sqrt(cfg.p_max) / a.norm() * std::sqrt(std::uniform_real_distribution<double>(0.2, 1.0)(rng));
        s.a.push_back(a);
    }
    // Receive vectors at the scale that makes b^H H a of order one.
    const CMatList H = channel::effective_channel(in.estimate.est, s.v);
    double gain = 0.0;
    for (std::size_t k = 0; k < cfg.K; ++k) gain += (H[k] * s.a[k]).squaredNorm();
    const double scale = 1.0 / std::sqrt(std::max(gain / double(cfg.K), 1e-300));
    s.b = scale * cgauss(Eigen::Index(cfg.Nr), 1.0, rng);
    s.f = scale * cgauss(Eigen::Index(cfg.Nr), 1.0, rng);
    return in;
}

Check check_imperfect_mse(const SuiteOptions &o, double iota) {
    double worst = 0.0;
    for (std::size_t i = 0; i < o.instances; ++i) {
        const auto in = random_instance(o.cfg, o.seed * 1000 + i, iota);
        const auto &s = in.state;
        const double closed = mse_with(o, s.b, s.a, in.estimate, s.v, o.cfg.sigma2_n);
        const auto mc = mc_mse_imperfect(s.b, s.a, in.estimate, s.v, o.cfg.sigma2_n, o.draws, o.seed * 31 + i);
        worst = std::max(worst, mc.z(closed));
    }
    return make("imperfect_mse_iota_" + fmt(iota), worst, 3.0, "max |closed - MC| in standard errors");
}

Check check_sinr_denominator(const SuiteOptions &o, double iota) {
    double worst = 0.0;
    for (std::size_t i = 0; i < o.instances; ++i) {
        const auto in = random_instance(o.cfg, o.seed * 2000 + i, iota);
        const auto &s = in.state;
        const std::size_t k = i % o.cfg.K;
        const CMatList Hh = channel::effective_channel(in.estimate.est, s.v);
        double closed = metrics::sinr_imperfect_denominator(s.f, s.a, in.estimate, Hh, o.cfg.sigma2_n, k);
        if (o.interference) {
            for (std::size_t j = 0; j < s.a.size(); ++j) {
                closed -= s.f.dot(metrics::interference_matrix(s.a[j], in.estimate, j) * s.f).real();
                closed += s.f.dot(o.interference(s.a[j], in.estimate, j) * s.f).real();
            }
        }
        const auto mc = mc_sinr_denominator(s.f, s.a, in.estimate, s.v, o.cfg.sigma2_n, k, o.draws, o.seed * 37 + i);
        worst = std::max(worst, mc.z(closed));
    }
    return make("sinr_denominator_iota_" + fmt(iota), worst, 3.0, "max |closed - MC| in standard errors");
}

Check check_interference_forms(const SuiteOptions &o, double iota) {
    double worst = 0.0;
    for (std::size_t i = 0; i < o.instances; ++i) {
        const auto in = random_instance(o.cfg, o.seed * 3000 + i, iota);
        const std::size_t k = i % o.cfg.K;
        const CVec &x = in.state.b;
        const CMat J = o.interference ? o.interference(in.state.a[k], in.estimate, k)
                                      : metrics::interference_matrix(in.state.a[k], in.estimate, k);
        const auto mc = mc_interference_quadratic(x, in.state.a[k], in.estimate, in.state.v, k, o.draws, o.seed * 41 + i);
        worst = std::max(worst, mc.z(x.dot(J * x).real()));
    }
    return make("interference_quadratic_iota_" + fmt(iota), worst, 3.0, "max |x^H J x - MC| in standard errors");
}

Check check_curvature_bound(const SuiteOptions &o) {
    double worst = -std::numeric_limits<double>::infinity();
    std::size_t violations = 0, evaluated = 0;
    std::mt19937_64 rng(o.seed * 4001);
    for (std::size_t i = 0; i < o.hessian_instances; ++i) {
        const auto in = random_instance(o.cfg, o.seed * 4000 + i, i % 2 ? 0.1 : 0.0);
        const auto csi = i % 2 ? opt::Csi::imperfect(in.estimate) : opt::Csi::perfect(in.truth);
        const auto as = opt::assemble_phase_problem(in.state, csi, o.cfg);
        const auto cb = opt::lemma1_xi(as);
        for (std::size_t p = 0; p < o.hessian_points; ++p) {
            const RVec v = uniform_phases(Eigen::Index(o.cfg.M), rng);
            for (std::size_t l = 0; l < as.count(); ++l) {
                const double lam = max_eigenvalue(fd_phase_hessian(as, l, v, 1e-4));
                const double tol = std::max(1e-6, 1e-4 * cb.xi[l]);
                // Normalised excess: <= 0 when the bound holds within tolerance.
                const double excess = (lam - cb.xi[l] - tol) / std::max(cb.xi[l], 1e-300);
                worst = std::max(worst, excess);
                violations += excess > 0.0;
                ++evaluated;
            }
        }
    }
    return make("curvature_bound", worst, 0.0,
                std::to_string(violations) + " violations over " + std::to_string(evaluated) +
                    " (assembly, v, l); measured = max (lambda_max - xi - tol) / xi");
}

Check check_hessian_closed_form(const SuiteOptions &o) {
    double worst = 0.0;
    std::mt19937_64 rng(o.seed * 4501);
    for (std::size_t i = 0; i < 3; ++i) {
        const auto in = random_instance(o.cfg, o.seed * 4500 + i, 0.0);
        const auto as = opt::assemble_phase_problem(in.state, opt::Csi::perfect(in.truth), o.cfg);
        for (std::size_t p = 0; p < 10; ++p) {
            const RVec v = uniform_phases(Eigen::Index(o.cfg.M), rng);
            for (std::size_t l = 0; l < as.count(); ++l) {
                const RMat exact = phase_hessian(as, l, v);
                const RMat fd = fd_phase_hessian(as, l, v, 1e-4);
                worst = std::max(worst, (exact - fd).norm() / std::max(exact.norm(), 1e-300));
            }
        }
    }
    return make("phase_hessian_closed_form", worst, 1e-6, "relative Frobenius gap, exact vs finite differences");
}

Check check_trace_identities(const SuiteOptions &o) {
    std::mt19937_64 rng(o.seed * 5001);
    double worst = 0.0;
    for (Eigen::Index n = 2; n <= 8; ++n) {
        for (int t = 0; t < 100; ++t) {
            const CMat A = cgauss(n, n, 1.0, rng), B = cgauss(n, n, 1.0, rng);
            const RVec v = uniform_phases(n, rng);
            const CVec e = unit_phasors(v);
            const CMat Th = e.asDiagonal();
            const cd lhs1 = (A * Th * B * Th.adjoint()).trace();
            const cd rhs1 = e.dot(A.cwiseProduct(B.transpose()) * e);
            // e^H vecdiag(A) equals tr(A Theta^H) exactly and tr(A^H Theta) up to conjugation, which is
            // all the 2 Re{.} terms need.
            const cd vd = e.dot(A.diagonal());
            const cd lhs2 = (A * Th.adjoint()).trace();
            const double lhs3 = (A.adjoint() * Th).trace().real();
            const double s1 = std::max(1.0, std::abs(lhs1)), s2 = std::max(1.0, std::abs(lhs2));
            worst = std::max({worst, std::abs(lhs1 - rhs1) / s1, std::abs(lhs2 - vd) / s2,
                              std::abs(lhs3 - vd.real()) / s2});
        }
    }
    return make("trace_hadamard_vecdiag_identities", worst, 1e-10, "sizes 2..8, 100 draws each");
}

Check check_recovery_surrogate(const SuiteOptions &o) {
    std::mt19937_64 rng(o.seed * 6001);
    double tangency = 0.0, excess = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < 5; ++i) {
        const auto in = random_instance(o.cfg, o.seed * 6000 + i, 0.0);
        const auto mats = opt::recovery_matrices(in.state, opt::Csi::perfect(in.truth), o.cfg);
        std::vector<CMat> all = mats.B1;
        all.insert(all.end(), mats.B2.begin(), mats.B2.end());
        for (const auto &B : all) {
            const double w = opt::spectral_radius(B);
            const CVec &ft = in.state.f;
            const double scale = std::max(w * ft.squaredNorm(), 1e-300);
            tangency = std::max(tangency, std::abs(opt::recovery_surrogate(B, w, ft, ft) - ft.dot(B * ft).real()) / scale);
            for (int t = 0; t < 1000; ++t) {
                const CVec f = ft + cgauss(ft.size(), ft.squaredNorm() / double(ft.size()), rng);
                excess = std::max(excess, (f.dot(B * f).real() - opt::recovery_surrogate(B, w, f, ft)) / scale);
            }
        }
    }
    const double worst = std::max(tangency / 1e-10, excess / 1e-9);
    return make("recovery_surrogate_tangency_majorisation", worst, 1.0,
                "tangency " + fmt(tangency) + " (<=1e-10), excess " + fmt(excess) + " (<=1e-9), relative to omega ||f_t||^2");
}

Check check_phase_surrogate(const SuiteOptions &o) {
    std::mt19937_64 rng(o.seed * 7001);
    double excess = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < 5; ++i) {
        const auto in = random_instance(o.cfg, o.seed * 7000 + i, 0.0);
        const auto as = opt::assemble_phase_problem(in.state, opt::Csi::perfect(in.truth), o.cfg);
        const auto cb = opt::lemma1_xi(as);
        const RVec vt = in.state.v;
        for (std::size_t l = 0; l < as.count(); ++l) {
            const double h0 = opt::phase_value(as, l, vt);
            const RVec g = opt::phase_gradient(as, l, vt);
            const double scale = std::max(cb.xi[l], 1e-300);
            for (int t = 0; t < 1000; ++t) {
                const RVec v = uniform_phases(vt.size(), rng);
                const RVec d = v - vt;
                const double sur = h0 + g.dot(d) + 0.5 * cb.xi[l] * d.squaredNorm();
                excess = std::max(excess, (opt::phase_value(as, l, v) - sur) / scale);
            }
        }
    }
    return make("phase_surrogate_majorisation", excess, 1e-9, "max (h_l(v) - surrogate) / xi_l over random v");
}

Check check_b_stationarity(const SuiteOptions &o, Regime regime) {
    std::mt19937_64 rng(o.seed * 8001);
    double worst_grad = 0.0, worst_gain = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < 20; ++i) {
        const auto in = random_instance(o.cfg, o.seed * 8000 + i, regime == Regime::imperfect ? 0.1 : 0.0);
        const auto csi = regime == Regime::perfect ? opt::Csi::perfect(in.truth) : opt::Csi::imperfect(in.estimate);
        auto s = in.state;
        s.b = opt::update_b(s, csi, o.cfg);
        const double f0 = opt::objective(s, csi, o.cfg);
        const double h = 1e-6 * std::max(s.b.norm(), 1e-300) / std::sqrt(double(s.b.size()));
        double g2 = 0.0;
        for (Eigen::Index j = 0; j < s.b.size(); ++j) {
            for (cd dir : {cd(1.0, 0.0), cd(0.0, 1.0)}) {
                auto p = s, m = s;
                p.b[j] += h * dir;
                m.b[j] -= h * dir;
                const double d = (opt::objective(p, csi, o.cfg) - opt::objective(m, csi, o.cfg)) / (2.0 * h);
                g2 += d * d;
            }
        }
        worst_grad = std::max(worst_grad, std::sqrt(g2));
        for (int t = 0; t < 1000; ++t) {
            auto p = s;
            p.b += cgauss(s.b.size(), 1e-4 * s.b.squaredNorm() / double(s.b.size()), rng);
            worst_gain = std::max(worst_gain, (f0 - opt::objective(p, csi, o.cfg)) / std::max(f0, 1e-300));
        }
    }
    const bool pass = worst_grad <= 1e-6 && worst_gain <= 0.0;
    Check c{std::string("b_stationarity_") + to_string(regime), pass, worst_grad, 1e-6,
            "gradient norm; worst relative gain from 1e3 perturbations " + fmt(worst_gain) + " (must be <= 0)"};
    return c;
}

std::vector<Check> run_suite(const SuiteOptions &o) {
    std::vector<Check> out;
    for (double iota : o.iotas) {
        out.push_back(check_imperfect_mse(o, iota));
        out.push_back(check_sinr_denominator(o, iota));
        out.push_back(check_interference_forms(o, iota));
    }
    out.push_back(check_curvature_bound(o));
    out.push_back(check_hessian_closed_form(o));
    out.push_back(check_trace_identities(o));
    out.push_back(check_recovery_surrogate(o));
    out.push_back(check_phase_surrogate(o));
    out.push_back(check_b_stationarity(o, Regime::perfect));
    out.push_back(check_b_stationarity(o, Regime::imperfect));
    return out;
}

} // namespace airfl::oracle
