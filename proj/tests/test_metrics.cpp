// SPDX-License-Identifier: Apache-2.0
#include <random>

#include "catch_amalgamated.hpp"

#include "airfl/metrics.hpp"
#include "airfl/oracles.hpp"

using namespace airfl;
using namespace airfl::metrics;

namespace {

CVec rvec(Eigen::Index n, std::mt19937_64 &rng, double s = 1.0) {
    std::normal_distribution<double> N(0.0, s / std::sqrt(2.0));
    CVec x(n);
    for (auto &c : x) c = cd(N(rng), N(rng));
    return x;
}

CMat rmat(Eigen::Index r, Eigen::Index c, std::mt19937_64 &rng) {
    std::normal_distribution<double> N(0.0, std::sqrt(0.5));
    CMat A(r, c);
    for (Eigen::Index i = 0; i < A.size(); ++i) A.data()[i] = cd(N(rng), N(rng));
    return A;
}

struct Toy {
    CMatList H;
    CVecList a;
    CVec b, f;
};

Toy toy(std::size_t K, Eigen::Index Nr, Eigen::Index Nt, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    Toy t;
    for (std::size_t k = 0; k < K; ++k) {
        t.H.push_back(rmat(Nr, Nt, rng));
        t.a.push_back(rvec(Nt, rng));
    }
    t.b = rvec(Nr, rng, 0.3);
    t.f = rvec(Nr, rng);
    return t;
}

} // namespace

TEST_CASE("mse_perfect") {
    const auto t = toy(3, 4, 2, 1);
    SECTION("zero aggregation beamformer") { CHECK(mse_perfect(CVec::Zero(4), t.a, t.H, 0.1) == 3.0); }
    SECTION("perfect alignment") {
        CMatList H{t.H[0]};
        CVecList a{t.a[0]};
        const CVec u = H[0] * a[0];
        const CVec b = u / u.squaredNorm(); // b^H u = 1
        CHECK(mse_perfect(b, a, H, 0.0) == Catch::Approx(0.0).margin(1e-24));
    }
    SECTION("non-negative") { CHECK(mse_perfect(t.b, t.a, t.H, 0.3) >= 0.0); }
    SECTION("matches the empirical aggregation error") {
        const double s2 = 0.2;
        std::mt19937_64 rng(9);
        std::normal_distribution<double> N(0.0, std::sqrt(0.5));
        const std::size_t draws = 100000;
        double m = 0, m2 = 0;
        for (std::size_t i = 0; i < draws; ++i) {
            CVec y = CVec::Zero(4);
            cd sum = 0.0;
            for (std::size_t k = 0; k < 3; ++k) {
                const cd s(N(rng), N(rng));
                y += t.H[k] * t.a[k] * s;
                sum += s;
            }
            for (auto &c : y) c += std::sqrt(s2) * cd(N(rng), N(rng));
            const double e = std::norm(t.b.dot(y) - sum);
            m += e;
            m2 += e * e;
        }
        m /= double(draws);
        const double se = std::sqrt((m2 / double(draws) - m * m) / double(draws));
        CHECK(std::abs(mse_perfect(t.b, t.a, t.H, s2) - m) <= 3 * se);
    }
    SECTION("shape mismatch") {
        CHECK_THROWS_AS(mse_perfect(CVec::Zero(5), t.a, t.H, 0.1), InvalidInput);
        CVecList a = t.a;
        a.pop_back();
        CHECK_THROWS_AS(mse_perfect(t.b, a, t.H, 0.1), InvalidInput);
    }
}

TEST_CASE("sinr_perfect") {
    const auto t = toy(2, 4, 2, 2);
    const double s2 = 0.05;
    SECTION("last device sees only noise") {
        const double num = std::norm(t.f.dot(t.H[1] * t.a[1]));
        CHECK(sinr_perfect(t.f, t.a, t.H, s2, 1) == Catch::Approx(num / (s2 * t.f.squaredNorm())).epsilon(1e-14));
    }
    SECTION("term-by-term evaluation") {
        // scalar products assembled by hand
        cd p0 = 0.0, p1 = 0.0;
        for (Eigen::Index r = 0; r < 4; ++r)
            for (Eigen::Index c = 0; c < 2; ++c) {
                p0 += std::conj(t.f[r]) * t.H[0](r, c) * t.a[0][c];
                p1 += std::conj(t.f[r]) * t.H[1](r, c) * t.a[1][c];
            }
        double fn = 0.0;
        for (auto c : t.f) fn += std::norm(c);
        CHECK(sinr_perfect(t.f, t.a, t.H, s2, 0) ==
              Catch::Approx(std::norm(p0) / (std::norm(p1) + s2 * fn)).epsilon(1e-12));
    }
    SECTION("zero recovery beamformer") {
        CHECK(sinr_perfect(CVec::Zero(4), t.a, t.H, s2, 0) == 0.0);
        CHECK_THROWS_AS(sinr_perfect(CVec::Zero(4), t.a, t.H, 0.0, 1), DegenerateInput);
    }
    SECTION("index out of range") { CHECK_THROWS_AS(sinr_perfect(t.f, t.a, t.H, s2, 2), InvalidInput); }
}

TEST_CASE("power_gaps") {
    auto t = toy(3, 4, 2, 3);
    SECTION("length K-1 and definition") {
        const RVec g = power_gaps(t.f, t.a, t.H);
        REQUIRE(g.size() == 2);
        const double p0 = std::norm(t.f.dot(t.H[0] * t.a[0])), p1 = std::norm(t.f.dot(t.H[1] * t.a[1])),
                     p2 = std::norm(t.f.dot(t.H[2] * t.a[2]));
        CHECK(g[0] == Catch::Approx(p0 - p1 - p2).epsilon(1e-12));
        CHECK(g[1] == Catch::Approx(p1 - p2).epsilon(1e-12));
    }
    SECTION("no interferer power") {
        CMatList H{t.H[0], t.H[1]};
        CVecList a{t.a[0], CVec::Zero(2)};
        CHECK(power_gaps(t.f, a, H)[0] == Catch::Approx(std::norm(t.f.dot(t.H[0] * t.a[0]))));
    }
    SECTION("all zero transmitters") {
        for (auto &a : t.a) a.setZero();
        CHECK(power_gaps(t.f, t.a, t.H).cwiseAbs().maxCoeff() == 0.0);
    }
    SECTION("single device") { CHECK(power_gaps(t.f, CVecList{t.a[0]}, CMatList{t.H[0]}).size() == 0); }
}

TEST_CASE("SIC order") {
    auto t = toy(4, 4, 2, 4);
    t.H[2] *= 5.0;
    t.H[0] *= 3.0;
    const auto o = order_devices(t.H);
    REQUIRE(o.size() == 4);
    CHECK(o[0] == 2);
    CHECK(o[1] == 0);
    for (std::size_t i = 1; i < o.size(); ++i) CHECK(t.H[o[i - 1]].squaredNorm() >= t.H[o[i]].squaredNorm());
    // ties keep index order
    const auto same = order_devices(CMatList{t.H[1], t.H[1], t.H[1]});
    CHECK(same == std::vector<std::size_t>{0, 1, 2});
}

TEST_CASE("interference matrices and imperfect-CSI metrics") {
    const SystemConfig cfg;
    const auto inst = oracle::random_instance(cfg, 5, 0.1);
    const auto &est = inst.estimate;
    const auto &s = inst.state;

    SECTION("J is Hermitian PSD") {
        for (std::size_t k = 0; k < cfg.K; ++k) {
            const CMat J = interference_matrix(s.a[k], est, k);
            CHECK((J - J.adjoint()).norm() <= 1e-12 * J.norm());
            CHECK(Eigen::SelfAdjointEigenSolver<CMat>(J).eigenvalues().minCoeff() >= -1e-12 * J.norm());
        }
    }
    SECTION("zero variances or zero transmitter give zero J") {
        auto e0 = est;
        e0.error_model = channel::ErrorModel::zero(cfg.K);
        CHECK(interference_matrix(s.a[0], e0, 0).norm() == 0.0);
        CHECK(interference_matrix(CVec::Zero(Eigen::Index(cfg.Nt)), est, 1).norm() == 0.0);
    }
    SECTION("zero error model reduces to the perfect forms") {
        auto e0 = est;
        e0.error_model = channel::ErrorModel::zero(cfg.K);
        const auto H = channel::effective_channel(e0.est, s.v);
        CHECK(mse_imperfect(s.b, s.a, e0, H, cfg.sigma2_n) == mse_perfect(s.b, s.a, H, cfg.sigma2_n));
        CHECK(sinr_imperfect(s.f, s.a, e0, H, cfg.sigma2_n, 0) ==
              Catch::Approx(sinr_perfect(s.f, s.a, H, cfg.sigma2_n, 0)).epsilon(1e-14));
    }
    SECTION("estimation error only adds") {
        const auto H = channel::effective_channel(est.est, s.v);
        CHECK(mse_imperfect(s.b, s.a, est, H, cfg.sigma2_n) >= mse_perfect(s.b, s.a, H, cfg.sigma2_n));
        for (std::size_t k = 0; k < cfg.K; ++k)
            CHECK(sinr_imperfect(s.f, s.a, est, H, cfg.sigma2_n, k) <= sinr_perfect(s.f, s.a, H, cfg.sigma2_n, k));
    }
    SECTION("closed forms match Monte-Carlo") {
        const std::size_t draws = 40000;
        const auto mse = oracle::mc_mse_imperfect(s.b, s.a, est, s.v, cfg.sigma2_n, draws, 17);
        CHECK(mse.z(mse_imperfect(s.b, s.a, est, s.v, cfg.sigma2_n)) <= 3.0);
        const auto H = channel::effective_channel(est.est, s.v);
        for (std::size_t k = 0; k < cfg.K; ++k) {
            const auto den = oracle::mc_sinr_denominator(s.f, s.a, est, s.v, cfg.sigma2_n, k, draws, 23 + k);
            CHECK(den.z(sinr_imperfect_denominator(s.f, s.a, est, H, cfg.sigma2_n, k)) <= 3.0);
            const auto q = oracle::mc_interference_quadratic(s.b, s.a[k], est, s.v, k, draws, 31 + k);
            CHECK(q.z(s.b.dot(interference_matrix(s.a[k], est, k) * s.b).real()) <= 3.0);
        }
    }
}
