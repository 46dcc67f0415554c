// SPDX-License-Identifier: Apache-2.0
#include <algorithm>
#include <limits>

#include "airfl/convex.hpp"

namespace airfl::convex {

double Quadratic::operator()(const RVec &x) const {
    const RVec d = x - anchor;
    return constant + gradient.dot(d) + 0.5 * curvature * d.squaredNorm();
}

RVec Quadratic::grad(const RVec &x) const { return gradient + curvature * (x - anchor); }

namespace {

double quad_scale(const Quadratic &q) {
    double s = std::max({std::abs(q.constant), q.gradient.cwiseAbs().maxCoeff(), q.curvature});
    return s > 0.0 ? s : 1.0;
}

Quadratic scaled(const Quadratic &q, double s) {
    return {q.constant / s, q.gradient / s, q.curvature / s, q.anchor};
}

// Generic problem over z = (x[, beta]): minimise phi(z) s.t. f_i(z) <= 0.
struct Inner {
    std::size_t n = 0;
    bool beta = false;
    Quadratic obj; // used when !beta
    std::vector<Quadratic> cons;

    std::size_t dim() const { return n + (beta ? 1 : 0); }
    RVec xpart(const RVec &z) const { return z.head(Eigen::Index(n)); }

    double phi(const RVec &z) const { return beta ? z[Eigen::Index(n)] : obj(xpart(z)); }
    RVec dphi(const RVec &z) const {
        RVec g = RVec::Zero(Eigen::Index(dim()));
        if (beta)
            g[Eigen::Index(n)] = 1.0;
        else
            g.head(Eigen::Index(n)) = obj.grad(xpart(z));
        return g;
    }
    double fi(std::size_t i, const RVec &z) const {
        return cons[i](xpart(z)) - (beta ? z[Eigen::Index(n)] : 0.0);
    }
    RVec dfi(std::size_t i, const RVec &z) const {
        RVec g = RVec::Zero(Eigen::Index(dim()));
        g.head(Eigen::Index(n)) = cons[i].grad(xpart(z));
        if (beta) g[Eigen::Index(n)] = -1.0;
        return g;
    }
};

struct InnerResult {
    RVec z, lambda;
    Status status = Status::iteration_limit;
    int iterations = 0;
    double kkt = 0.0, viol = 0.0;
};

struct Res {
    RVec rd, rp, f;
    RMat J;
};

Res eval_res(const Inner &P, const RVec &z, const RVec &s, const RVec &lam) {
    const std::size_t m = P.cons.size();
    Res r;
    r.f.resize(Eigen::Index(m));
    r.J.resize(Eigen::Index(m), Eigen::Index(P.dim()));
    for (std::size_t i = 0; i < m; ++i) {
        r.f[Eigen::Index(i)] = P.fi(i, z);
        r.J.row(Eigen::Index(i)) = P.dfi(i, z).transpose();
    }
    r.rd = P.dphi(z) + r.J.transpose() * lam;
    r.rp = r.f + s;
    return r;
}

double merit(const Res &r, const RVec &s, const RVec &lam, double mu) {
    RVec rc = (s.array() * lam.array() - mu).matrix();
    return std::sqrt(r.rd.squaredNorm() + r.rp.squaredNorm() + rc.squaredNorm());
}

InnerResult solve_inner(const Inner &P, RVec z, RVec lam, double feas_tol, double opt_tol, int max_iter,
                        bool accept_initial) {
    const std::size_t m = P.cons.size();
    const auto N = Eigen::Index(P.dim());
    InnerResult out;

    RVec s = RVec::Zero(Eigen::Index(m));
    for (std::size_t i = 0; i < m; ++i) s[Eigen::Index(i)] = std::max(-P.fi(i, z), 1e-8);
    if (lam.size() != Eigen::Index(m)) lam = RVec::Ones(Eigen::Index(m));
    for (Eigen::Index i = 0; i < lam.size(); ++i) lam[i] = std::max(lam[i], 1e-10);

    auto stats = [&](const Res &r, double &kkt, double &viol, double &gap) {
        kkt = r.rd.size() ? r.rd.cwiseAbs().maxCoeff() : 0.0;
        viol = m ? std::max(0.0, r.f.maxCoeff()) : 0.0;
        gap = m ? s.dot(lam) / double(m) : 0.0;
    };

    int iter = 0;
    for (; iter <= max_iter; ++iter) {
        Res r = eval_res(P, z, s, lam);
        double kkt, viol, gap;
        stats(r, kkt, viol, gap);
        out.kkt = std::max(kkt, gap);
        out.viol = viol;
        if (kkt <= opt_tol && viol <= feas_tol && gap <= 0.1 * opt_tol && (iter > 0 || accept_initial)) {
            out.status = Status::optimal;
            break;
        }
        if (iter == max_iter) break;

        const double sigma = 0.1;
        const double mu = sigma * gap;
        // Newton system reduced to dz.
        double curv = P.beta ? 0.0 : P.obj.curvature;
        for (std::size_t i = 0; i < m; ++i) curv += lam[Eigen::Index(i)] * P.cons[i].curvature;
        RMat H = RMat::Zero(N, N);
        H.topLeftCorner(Eigen::Index(P.n), Eigen::Index(P.n)).diagonal().array() += curv;
        RVec D = lam.cwiseQuotient(s);
        H += r.J.transpose() * D.asDiagonal() * r.J;
        RVec rc = (s.array() * lam.array() - mu).matrix();
        RVec rhs = -r.rd - r.J.transpose() * (D.cwiseProduct(r.rp) - rc.cwiseQuotient(s));
        // A tiny ridge keeps the system solvable when curvature vanishes in some direction.
        H.diagonal().array() += 1e-14 * (1.0 + H.diagonal().cwiseAbs().maxCoeff());
        Eigen::LDLT<RMat> ldlt(H);
        if (ldlt.info() != Eigen::Success) break;
        RVec dz = ldlt.solve(rhs);
        if (!dz.allFinite()) break;
        RVec ds = -r.rp - r.J * dz;
        RVec dlam = D.cwiseProduct(r.J * dz + r.rp) - rc.cwiseQuotient(s);

        double amax = 1.0;
        for (std::size_t i = 0; i < m; ++i) {
            const auto ii = Eigen::Index(i);
            if (ds[ii] < 0) amax = std::min(amax, -0.99 * s[ii] / ds[ii]);
            if (dlam[ii] < 0) amax = std::min(amax, -0.99 * lam[ii] / dlam[ii]);
        }
        double alpha = amax;
        const double m0 = merit(r, s, lam, mu);
        for (int ls = 0; ls < 60; ++ls) {
            RVec z1 = z + alpha * dz, s1 = s + alpha * ds, l1 = lam + alpha * dlam;
            Res r1 = eval_res(P, z1, s1, l1);
            if (merit(r1, s1, l1, mu) <= (1.0 - 0.01 * alpha) * m0) break;
            alpha *= 0.5;
        }
        if (alpha < 1e-16) break;
        z += alpha * dz;
        s += alpha * ds;
        lam += alpha * dlam;
    }
    out.z = z;
    out.lambda = lam;
    out.iterations = iter;
    return out;
}

} // namespace

QcqpResult solve_qcqp(const QcqpProblem &problem, double feas_tol, double opt_tol, int max_iter,
                      const QcqpWarmStart *warm) {
    const std::size_t n = problem.dimension;
    auto check = [&](const Quadratic &q) {
        if (std::size_t(q.gradient.size()) != n || std::size_t(q.anchor.size()) != n)
            throw InvalidInput("quadratic dimension mismatch");
        if (!(q.curvature >= 0.0)) throw InvalidInput("negative curvature");
    };
    for (const auto &q : problem.constraints) check(q);
    const bool beta_mode = problem.mode == QcqpMode::minimize_beta;
    if (!beta_mode) check(problem.objective);
    if (beta_mode && problem.constraints.empty()) throw InvalidInput("minimize-beta needs at least one constraint");

    QcqpResult out;
    out.report.method = "slack primal-dual interior point";
    const std::size_t m = problem.constraints.size();

    // Scales: one global scale in minimax mode (keeps the max comparable), per-row otherwise.
    std::vector<double> sc(m, 1.0);
    double global = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
        sc[i] = quad_scale(problem.constraints[i]);
        global = std::max(global, sc[i]);
    }
    if (beta_mode)
        for (auto &v : sc) v = global;

    auto make_inner = [&](bool beta) {
        Inner P;
        P.n = n;
        P.beta = beta;
        for (std::size_t i = 0; i < m; ++i) P.cons.push_back(scaled(problem.constraints[i], sc[i]));
        return P;
    };

    auto start_z = [&](const Inner &P, const RVec &x) {
        RVec z(Eigen::Index(P.dim()));
        z.head(Eigen::Index(n)) = x;
        if (P.beta) {
            double mx = -std::numeric_limits<double>::infinity();
            for (const auto &q : P.cons) mx = std::max(mx, q(x));
            z[Eigen::Index(n)] = mx + 1.0;
        }
        return z;
    };

    RVec x0 = problem.constraints.empty() ? problem.objective.anchor : problem.constraints.front().anchor;
    if (!beta_mode) x0 = problem.objective.anchor;

    if (beta_mode) {
        Inner P = make_inner(true);
        RVec z, lam;
        bool accept = false;
        if (warm && std::size_t(warm->x.size()) == n && std::size_t(warm->lambda.size()) == m) {
            z = RVec(Eigen::Index(n + 1));
            z.head(Eigen::Index(n)) = warm->x;
            z[Eigen::Index(n)] = warm->beta / global;
            lam = warm->lambda * 1.0;
            accept = true;
        } else {
            z = start_z(P, x0);
            lam = RVec::Constant(Eigen::Index(m), 1.0 / double(m));
        }
        InnerResult r = solve_inner(P, z, lam, feas_tol, opt_tol, max_iter, accept);
        out.x = P.xpart(r.z);
        double mx = -std::numeric_limits<double>::infinity();
        for (const auto &q : problem.constraints) mx = std::max(mx, q(out.x));
        out.beta = mx;
        out.lambda = r.lambda;
        out.report.status = r.status;
        out.report.iterations = r.iterations;
        out.report.kkt_residual = r.kkt;
        out.report.max_violation = std::max(0.0, mx / global - r.z[Eigen::Index(n)]);
        out.report.objective = mx;
        return out;
    }

    // minimize-q0.
    const double osc = quad_scale(problem.objective);
    if (m == 0) {
        const Quadratic &q = problem.objective;
        if (q.curvature > 0.0) {
            out.x = q.anchor - q.gradient / q.curvature;
            out.report.status = Status::optimal;
        } else if (q.gradient.cwiseAbs().maxCoeff() == 0.0) {
            out.x = q.anchor;
            out.report.status = Status::optimal;
        } else {
            out.x = q.anchor;
            out.report.status = Status::iteration_limit; // unbounded linear objective
        }
        out.report.objective = q(out.x);
        out.report.kkt_residual = q.grad(out.x).cwiseAbs().maxCoeff() / osc;
        out.lambda = RVec(0);
        return out;
    }

    Inner P = make_inner(false);
    P.obj = scaled(problem.objective, osc);
    RVec xs = x0;
    RVec lam = RVec::Ones(Eigen::Index(m));
    bool accept = false;
    int used = 0;
    if (warm && std::size_t(warm->x.size()) == n && std::size_t(warm->lambda.size()) == m) {
        xs = warm->x;
        for (std::size_t i = 0; i < m; ++i) lam[Eigen::Index(i)] = warm->lambda[Eigen::Index(i)] * osc / sc[i];
        accept = true;
    } else {
        // Phase 1: minimax of the scaled constraints; a positive value certifies infeasibility.
        Inner P1 = make_inner(true);
        InnerResult r1 = solve_inner(P1, start_z(P1, x0), RVec::Constant(Eigen::Index(m), 1.0 / double(m)), feas_tol,
                                     opt_tol, max_iter, false);
        used = r1.iterations;
        RVec x1 = P1.xpart(r1.z);
        double b1 = -std::numeric_limits<double>::infinity();
        for (const auto &q : P1.cons) b1 = std::max(b1, q(x1));
        if (b1 > feas_tol) {
            out.x = x1;
            out.lambda = r1.lambda;
            out.report.status = Status::infeasible;
            out.report.iterations = used;
            out.report.max_violation = b1;
            out.report.objective = problem.objective(x1);
            out.report.certificate.assign(r1.lambda.data(), r1.lambda.data() + r1.lambda.size());
            Eigen::Index worst;
            r1.lambda.maxCoeff(&worst);
            out.report.offending_constraint = std::size_t(worst);
            return out;
        }
        xs = x1;
    }
    RVec z = xs;
    InnerResult r = solve_inner(P, z, lam, feas_tol, opt_tol, max_iter, accept);
    out.x = r.z;
    out.lambda = RVec(Eigen::Index(m));
    for (std::size_t i = 0; i < m; ++i) out.lambda[Eigen::Index(i)] = r.lambda[Eigen::Index(i)] * sc[i] / osc;
    out.report.status = r.status;
    out.report.iterations = used + r.iterations;
    out.report.kkt_residual = r.kkt;
    out.report.max_violation = r.viol;
    out.report.objective = problem.objective(out.x);
    return out;
}

} // namespace airfl::convex
