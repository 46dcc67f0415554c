// SPDX-License-Identifier: Apache-2.0
#include <random>

#include "catch_amalgamated.hpp"

#include "airfl/optimizer.hpp"
#include "airfl/oracles.hpp"

using namespace airfl;
using namespace airfl::opt;

namespace {

// Desk instances in the layout the experiment runner uses.
struct Desk {
    SystemConfig cfg;
    channel::ChannelRealization truth;
    Csi csi;
};

Desk desk(std::uint64_t seed, SystemConfig cfg = SystemConfig::desk()) {
    channel::SystemGeometry g;
    g.device_positions = channel::sample_device_positions(cfg.K, seed);
    Desk d{cfg, channel::sample_channels(g, cfg, seed), {}};
    d.csi = Csi::perfect(d.truth);
    return d;
}

// Seed 1 is feasible at the default thresholds on the desk profile.
constexpr std::uint64_t kFeasibleSeed = 1;

CMat cgauss(Eigen::Index r, Eigen::Index c, std::mt19937_64 &rng) {
    std::normal_distribution<double> N(0.0, std::sqrt(0.5));
    CMat A(r, c);
    for (Eigen::Index i = 0; i < A.size(); ++i) A.data()[i] = cd(N(rng), N(rng));
    return A;
}

RVec phases(Eigen::Index M, std::mt19937_64 &rng) {
    std::uniform_real_distribution<double> U(0.0, kTwoPi);
    RVec v(M);
    for (auto &x : v) x = U(rng);
    return v;
}

BeamformerState in_order(const BeamformerState &s, const std::vector<std::size_t> &order) {
    BeamformerState o = s;
    o.a = metrics::permute(s.a, order);
    return o;
}

} // namespace

TEST_CASE("closed-form aggregation beamformer") {
    SECTION("scalar Wiener solution") {
        const cd h(0.3, -1.1);
        const double s2 = 0.2;
        const CVec b = update_b_perfect({CVec::Ones(1)}, {CMat::Constant(1, 1, h)}, s2);
        // b^H y with b^H = h* / (|h|^2 + s2)
        CHECK(std::abs(std::conj(b[0]) - std::conj(h) / (std::norm(h) + s2)) <= 1e-15);
    }
    SECTION("zero transmitters give zero b") {
        const auto d = desk(2);
        const CMatList H = d.csi.effective(RVec::Zero(Eigen::Index(d.cfg.M)));
        CVecList a(d.cfg.K, CVec::Zero(Eigen::Index(d.cfg.Nt)));
        CHECK(update_b_perfect(a, H, d.cfg.sigma2_n).norm() == 0.0);
    }
    SECTION("noiseless rank-deficient Gram is degenerate") {
        CMatList H{CMat::Ones(4, 1)};
        CHECK_THROWS_AS(update_b_perfect({CVec::Ones(1)}, H, 0.0), DegenerateInput);
    }
    SECTION("imperfect form") {
        const auto inst = oracle::random_instance(SystemConfig::desk(), 3, 0.1);
        const double s2 = SystemConfig{}.sigma2_n;
        const CMatList H = channel::effective_channel(inst.estimate.est, inst.state.v);
        auto e0 = inst.estimate;
        e0.error_model = channel::ErrorModel::zero(inst.state.a.size());
        CHECK((update_b_imperfect(inst.state.a, e0, H, s2) - update_b_perfect(inst.state.a, H, s2)).norm() <=
              1e-12 * update_b_perfect(inst.state.a, H, s2).norm());
        const CVec bi = update_b_imperfect(inst.state.a, inst.estimate, H, s2);
        const CVec bp = update_b_perfect(inst.state.a, H, s2);
        CHECK(metrics::mse_imperfect(bi, inst.state.a, inst.estimate, H, s2) <=
              metrics::mse_imperfect(bp, inst.state.a, inst.estimate, H, s2));
    }
    SECTION("stationary and locally optimal in both regimes") {
        oracle::SuiteOptions o;
        o.instances = 4;
        CHECK(oracle::check_b_stationarity(o, Regime::perfect).pass);
        CHECK(oracle::check_b_stationarity(o, Regime::imperfect).pass);
    }
}

TEST_CASE("lifted transmit SDP") {
    SECTION("single device, single antenna structure") {
        SystemConfig cfg;
        cfg.K = 1;
        cfg.Nt = 1;
        const auto d = desk(4, cfg);
        std::mt19937_64 rng(4);
        BeamformerState s;
        s.v = phases(Eigen::Index(cfg.M), rng);
        s.a = {CVec::Ones(1)};
        s.b = cgauss(Eigen::Index(cfg.Nr), 1, rng);
        s.f = cgauss(Eigen::Index(cfg.Nr), 1, rng);
        const auto p = assemble_transmit_sdp(s, d.csi, cfg, {lift(s.a[0]) * lift(s.a[0]).adjoint()});
        REQUIRE(p.costs.size() == 1);
        CHECK(p.costs[0].rows() == 2);
        REQUIRE(p.pins.size() == 1);
        CHECK(p.pins[0].index == 1);
        CHECK(p.pins[0].value == 1.0);
        bool power_row = false;
        for (const auto &q : p.inequalities) {
            if (q.terms.size() != 1) continue;
            CMat E = CMat::Zero(2, 2);
            E(0, 0) = 1.0;
            if ((q.terms[0].coeff - E).norm() == 0.0 && q.bound == cfg.p_max) power_row = true;
        }
        CHECK(power_row);
    }
    SECTION("objective at a lifted point matches the term-by-term value") {
        const auto d = desk(5);
        const auto &cfg = d.cfg;
        std::mt19937_64 rng(5);
        BeamformerState s;
        s.v = phases(Eigen::Index(cfg.M), rng);
        s.b = cgauss(Eigen::Index(cfg.Nr), 1, rng);
        s.f = cgauss(Eigen::Index(cfg.Nr), 1, rng);
        CMatList lin, X;
        for (std::size_t k = 0; k < cfg.K; ++k) {
            s.a.push_back(cgauss(Eigen::Index(cfg.Nt), 1, rng));
            const CVec u = lift(cgauss(Eigen::Index(cfg.Nt), 1, rng)).normalized();
            lin.push_back(u * u.adjoint());
            X.push_back(lift(s.a[k]) * lift(s.a[k]).adjoint());
        }
        const double alpha = 1.7;
        const auto p = assemble_transmit_sdp(s, d.csi, cfg, lin, alpha);
        const CMatList H = d.csi.effective(s.v);
        double direct = 0.0;
        for (std::size_t k = 0; k < cfg.K; ++k) {
            const CVec hb = H[k].adjoint() * s.b;
            direct += std::norm(hb.dot(s.a[k])) - 2.0 * s.a[k].dot(hb).real();
            direct += alpha * (X[k].trace().real() - lin[k].cwiseProduct(X[k].conjugate()).sum().real());
        }
        CHECK(std::abs(p.objective(X) - direct) <= 1e-10 * std::max(1.0, std::abs(direct)));
    }
}

TEST_CASE("DC transmit step on a feasible desk instance") {
    auto d = desk(kFeasibleSeed);
    const auto s0 = initialize_feasible(d.csi, d.cfg, kFeasibleSeed);
    const auto order = metrics::order_devices(d.csi.effective(s0.v));
    const Csi c = d.csi.permuted(order);
    BeamformerState s = in_order(s0, order);
    s.b = update_b(s, c, d.cfg);
    const auto dc = dc_transmit_step(s, c, d.cfg);
    REQUIRE(dc.status == convex::Status::optimal);
    REQUIRE(!dc.rank_residuals.empty());
    CHECK(dc.rank_residuals.size() <= std::size_t(d.cfg.T1));
    for (double r : dc.rank_residuals) CHECK(r >= 0.0);
    for (std::size_t t = 1; t < dc.rank_residuals.size(); ++t)
        CHECK(dc.rank_residuals[t] <= dc.rank_residuals[t - 1] + 1e-8);
    CHECK(dc.rank_residuals.back() <= d.cfg.eps1);
    for (const auto &a : dc.a) CHECK(a.squaredNorm() <= d.cfg.p_max * (1.0 + 1e-9));

    // recovered beamformers back in the constraints
    BeamformerState r = s;
    r.a = dc.a;
    const CMatList H = c.effective(r.v);
    for (std::size_t k = 0; k < d.cfg.K; ++k)
        CHECK(metrics::sinr_perfect(r.f, r.a, H, d.cfg.sigma2_n, k) >= d.cfg.gamma_min * (1.0 - 1e-5));
    const RVec g = metrics::power_gaps(r.f, r.a, H);
    for (Eigen::Index k = 0; k < g.size(); ++k) CHECK(g[k] >= d.cfg.p_gap_perfect * (1.0 - 1e-5));

    SECTION("a rank-one optimum is a fixed point") {
        const auto again = dc_transmit_step(r, c, d.cfg);
        REQUIRE(again.status == convex::Status::optimal);
        CHECK(again.rank_residuals.front() <= d.cfg.eps1);
    }
}

TEST_CASE("rank-one recovery rotates the last entry") {
    std::mt19937_64 rng(8);
    const CVec a = cgauss(3, 1, rng);
    const CVec u = lift(a) * std::polar(1.0, 0.7);
    const CVec rec = recover_transmit(u * u.adjoint(), 1e6);
    CHECK((rec - a).norm() <= 1e-10 * a.norm());
}

TEST_CASE("recovery beamformer surrogates") {
    const auto d = desk(kFeasibleSeed);
    const auto s0 = initialize_feasible(d.csi, d.cfg, kFeasibleSeed);
    const auto order = metrics::order_devices(d.csi.effective(s0.v));
    const Csi c = d.csi.permuted(order);
    const BeamformerState s = in_order(s0, order);
    const auto mats = recovery_matrices(s, c, d.cfg);
    CHECK(mats.B1.size() == d.cfg.K);
    CHECK(mats.B2.size() == d.cfg.K - 1);
    std::mt19937_64 rng(3);
    std::vector<CMat> all = mats.B1;
    all.insert(all.end(), mats.B2.begin(), mats.B2.end());
    for (const auto &B : all) {
        const double w = spectral_radius(B);
        const CVec &ft = s.f;
        const double scale = w * ft.squaredNorm();
        CHECK(std::abs(recovery_surrogate(B, w, ft, ft) - ft.dot(B * ft).real()) <= 1e-10 * scale);
        for (int t = 0; t < 1000; ++t) {
            const CVec f = ft + cgauss(ft.size(), 1, rng) * (ft.norm() / std::sqrt(double(ft.size())));
            CHECK(recovery_surrogate(B, w, f, ft) >= f.dot(B * f).real() - 1e-9 * scale);
        }
    }
    SECTION("a feasible start stays feasible") {
        const auto rf = sca_recovery_f(s, c, d.cfg);
        REQUIRE(!rf.beta.empty());
        CHECK(rf.beta.front() <= 1e-9);
        BeamformerState t = s;
        t.f = rf.f;
        const CMatList H = c.effective(t.v);
        for (std::size_t k = 0; k < d.cfg.K; ++k)
            CHECK(metrics::sinr_perfect(t.f, t.a, H, d.cfg.sigma2_n, k) >= d.cfg.gamma_min * (1.0 - 1e-6));
    }
}

TEST_CASE("phase problem assembly") {
    const auto d = desk(kFeasibleSeed);
    const auto s0 = initialize_feasible(d.csi, d.cfg, kFeasibleSeed);
    const auto order = metrics::order_devices(d.csi.effective(s0.v));
    const Csi c = d.csi.permuted(order);
    const BeamformerState s = in_order(s0, order);
    const auto as = assemble_phase_problem(s, c, d.cfg);

    SECTION("counts and Hermitian blocks") {
        CHECK(as.count() == 2 * d.cfg.K);
        CHECK(as.F1.size() == d.cfg.K);
        CHECK(as.F2.size() == d.cfg.K - 1);
        for (std::size_t l = 0; l < as.count(); ++l)
            CHECK((as.F(l) - as.F(l).adjoint()).norm() <= 1e-10 * std::max(1.0, as.F(l).norm()));
    }
    SECTION("objective matches the metrics module for random phases") {
        std::mt19937_64 rng(12);
        for (int t = 0; t < 100; ++t) {
            BeamformerState x = s;
            x.v = phases(Eigen::Index(d.cfg.M), rng);
            const double mse = objective(x, c, d.cfg);
            CHECK(std::abs(phase_value(as, 0, x.v) + as.objective_offset - mse) <= 1e-8 * std::max(1.0, mse));
        }
    }
    SECTION("constraint terms match the SINR and gap margins") {
        std::mt19937_64 rng(13);
        BeamformerState x = s;
        x.v = phases(Eigen::Index(d.cfg.M), rng);
        const CMatList H = c.effective(x.v);
        const double fn = x.f.squaredNorm();
        for (std::size_t k = 0; k < d.cfg.K; ++k) {
            // h_{1,k} <= 0 iff SINR_k >= gamma
            double interf = d.cfg.sigma2_n * fn;
            for (std::size_t j = k + 1; j < d.cfg.K; ++j) interf += std::norm(x.f.dot(H[j] * x.a[j]));
            const double margin = d.cfg.gamma_min * interf - std::norm(x.f.dot(H[k] * x.a[k]));
            CHECK(std::abs(phase_value(as, 1 + k, x.v) - margin) <= 1e-8 * std::max(1.0, std::abs(margin) + interf));
        }
    }
    SECTION("no RIS path leaves constants only") {
        Csi z = c;
        z.channels.g.setZero();
        const auto a0 = assemble_phase_problem(s, z, d.cfg);
        for (std::size_t l = 0; l < a0.count(); ++l) {
            CHECK(a0.F(l).norm() == 0.0);
            CHECK(a0.r(l).norm() == 0.0);
        }
        const auto pr = sca_phase_shifts(s, z, d.cfg);
        CHECK((pr.v - s.v).norm() <= 1e-12);
    }
    SECTION("SCA descends and wraps phases") {
        const auto pr = sca_phase_shifts(s, c, d.cfg);
        for (std::size_t t = 1; t < pr.h0.size(); ++t)
            CHECK(pr.h0[t] <= pr.h0[t - 1] + 1e-9 * std::max(1.0, std::abs(pr.h0[t - 1])));
        for (Eigen::Index m = 0; m < pr.v.size(); ++m) {
            CHECK(pr.v[m] >= 0.0);
            CHECK(pr.v[m] < kTwoPi);
        }
    }
}

TEST_CASE("matrix identities behind the phase assembly") {
    std::mt19937_64 rng(21);
    const CMat A = cgauss(4, 4, rng), B = cgauss(4, 4, rng);
    const RVec v = phases(4, rng);
    CVec e(4);
    for (Eigen::Index m = 0; m < 4; ++m) e[m] = std::polar(1.0, v[m]);
    const CMat Th = e.asDiagonal();
    const cd lhs = (A * Th * B * Th.adjoint()).trace();
    CHECK(std::abs(lhs - e.dot(A.cwiseProduct(B.transpose()) * e)) <= 1e-10 * std::max(1.0, std::abs(lhs)));
    // e^H vecdiag(A) is tr(A Theta^H); tr(A^H Theta) is its conjugate, so the real parts agree
    const cd vd = e.dot(A.diagonal());
    CHECK(std::abs((A * Th.adjoint()).trace() - vd) <= 1e-10 * std::max(1.0, std::abs(vd)));
    CHECK(std::abs((A.adjoint() * Th).trace().real() - vd.real()) <= 1e-10 * std::max(1.0, std::abs(vd)));
    oracle::SuiteOptions o;
    CHECK(oracle::check_trace_identities(o).pass);
}

TEST_CASE("curvature bound") {
    SECTION("zero data gives zero curvature") {
        PhaseProblemAssembly as;
        as.F0 = CMat::Zero(3, 3);
        as.r0 = CVec::Zero(3);
        CHECK(lemma1_xi(as).xi[0] == 0.0);
        CHECK(phase_gradient(as, 0, RVec::Constant(3, 0.4)).norm() == 0.0);
    }
    SECTION("identity F on two elements") {
        PhaseProblemAssembly as;
        as.F0 = CMat::Identity(2, 2);
        as.r0 = CVec::Zero(2);
        const auto cb = lemma1_xi(as);
        CHECK(cb.xi[0] == Catch::Approx(4.0));
        CHECK(cb.spectral_term[0] == Catch::Approx(0.0).margin(1e-15));
    }
    SECTION("single element gradient") {
        PhaseProblemAssembly as;
        as.F0 = CMat::Constant(1, 1, cd(2.5, 0.0));
        as.r0 = CVec::Constant(1, cd(0.3, -0.8));
        const double v = 1.3;
        const cd expect = cd(0, -1) * std::polar(1.0, -v) * as.r0[0];
        CHECK(phase_gradient(as, 0, RVec::Constant(1, v))[0] == Catch::Approx(2.0 * expect.real()).margin(1e-14));
    }
    SECTION("gradient matches finite differences") {
        std::mt19937_64 rng(6);
        PhaseProblemAssembly as;
        const CMat X = cgauss(6, 6, rng);
        as.F0 = 0.5 * (X + X.adjoint());
        as.r0 = cgauss(6, 1, rng);
        const CMat Y = cgauss(6, 6, rng);
        as.F1 = {0.5 * (Y + Y.adjoint())};
        as.r1 = {cgauss(6, 1, rng)};
        as.C1 = {0.7};
        for (std::size_t l = 0; l < 2; ++l) {
            const RVec v = phases(6, rng);
            const RVec g = phase_gradient(as, l, v);
            for (Eigen::Index m = 0; m < 6; ++m) {
                RVec p = v, q = v;
                p[m] += 1e-5;
                q[m] -= 1e-5;
                CHECK(std::abs((phase_value(as, l, p) - phase_value(as, l, q)) / 2e-5 - g[m]) <= 1e-6);
            }
        }
    }
    SECTION("dominates finite-difference curvature") {
        oracle::SuiteOptions o;
        o.hessian_instances = 3;
        o.hessian_points = 30;
        CHECK(oracle::check_curvature_bound(o).pass);
        CHECK(oracle::check_hessian_closed_form(o).pass);
        CHECK(oracle::check_phase_surrogate(o).pass);
    }
}

TEST_CASE("alternating optimization") {
    auto d = desk(kFeasibleSeed);
    const auto s0 = initialize_feasible(d.csi, d.cfg, kFeasibleSeed);

    SECTION("initial point is feasible") { CHECK(audit(s0, d.csi, d.cfg, 1e-6).feasible()); }
    SECTION("zero outer iterations return the start") {
        auto cfg = d.cfg;
        cfg.T0 = 0;
        const auto res = run_algorithm(s0, d.csi, cfg);
        CHECK(res.trace.iterations.empty());
        CHECK(res.state.b == s0.b);
        CHECK(res.state.f == s0.f);
        CHECK(res.state.v == s0.v);
    }
    SECTION("monotone, converged and feasible") {
        const auto res = run_algorithm(s0, d.csi, d.cfg);
        CHECK(res.trace.failure.empty());
        CHECK(res.trace.converged);
        double prev = res.trace.initial_objective;
        for (const auto &it : res.trace.iterations) {
            CHECK(it.objective <= prev + d.cfg.eps0);
            prev = it.objective;
        }
        const auto au = audit(res.state, d.csi, d.cfg, 1e-6);
        CHECK(au.sinr_ok);
        CHECK(au.gap_ok);
        CHECK(au.power_ok);
        CHECK(au.min_sinr >= d.cfg.gamma_min * (1.0 - 1e-6));
        for (const auto &a : res.state.a) CHECK(a.squaredNorm() <= d.cfg.p_max * (1.0 + 1e-9));
    }
}

TEST_CASE("feasible initialization") {
    SECTION("one device") {
        SystemConfig cfg;
        cfg.K = 1;
        for (std::uint64_t seed = 0; seed < 3; ++seed) {
            const auto d = desk(seed, cfg);
            const auto s = initialize_feasible(d.csi, cfg, seed);
            CHECK(audit(s, d.csi, cfg, 1e-6).feasible());
        }
    }
    SECTION("vacuous thresholds") {
        SystemConfig cfg;
        cfg.gamma_min = 0.0;
        cfg.p_gap_perfect = 1e-12;
        const auto d = desk(6, cfg);
        CHECK(audit(initialize_feasible(d.csi, cfg, 6), d.csi, cfg, 1e-6).feasible());
    }
    SECTION("every desk seed is feasible or diagnosed") {
        int feasible = 0;
        for (std::uint64_t seed = 0; seed < 8; ++seed) {
            const auto d = desk(seed);
            try {
                const auto s = initialize_feasible(d.csi, d.cfg, seed);
                CHECK(audit(s, d.csi, d.cfg, 1e-6).feasible());
                ++feasible;
            } catch (const InfeasibleInstance &e) {
                CHECK(!e.family.empty());
                CHECK(std::string(e.what()).size() > 0);
            }
        }
        CHECK(feasible >= 1);
    }
    SECTION("estimation error beyond the SIC ceiling is diagnosed at once") {
        const auto d = desk(kFeasibleSeed);
        const auto model = channel::calibrate_error_model(d.truth, 0.1);
        const auto est = channel::sample_estimate(d.truth, model, 2);
        try {
            initialize_feasible(Csi::imperfect(est), d.cfg, 1);
            FAIL("expected an infeasible instance");
        } catch (const InfeasibleInstance &e) {
            CHECK(e.family == "sinr");
            CHECK(std::string(e.what()).find("estimation error") != std::string::npos);
        }
    }
}
