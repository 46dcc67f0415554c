// SPDX-License-Identifier: Apache-2.0
#include <algorithm>
#include <limits>

#include "airfl/convex.hpp"

namespace airfl::convex {

namespace {

double re_inner(const CMat &A, const CMat &X) { return (A.cwiseProduct(X.transpose())).sum().real(); }

CMat herm(const CMat &W) { return 0.5 * (W + W.adjoint()); }

struct Row {
    std::vector<BlockTerm> terms;
    double rhs = 0.0;
    long slack = -1; // index into slack vector for inequality rows
    double scale = 1.0;
};

struct Data {
    CMatList C;
    std::vector<Row> rows;
    std::size_t n_slack = 0;
    double cost_scale = 1.0;
    std::size_t n_cone = 0; // sum of block sizes + slacks
};

Data normalise(const BlockSdpProblem &p) {
    Data d;
    double cmax = 0.0;
    for (const auto &c : p.costs) cmax = std::max(cmax, c.norm());
    d.cost_scale = cmax > 0.0 ? cmax : 1.0;
    for (const auto &c : p.costs) d.C.push_back(herm(c) / d.cost_scale);
    for (const auto &q : p.inequalities) {
        Row r;
        double s = 0.0;
        for (const auto &t : q.terms) s = std::max(s, t.coeff.norm());
        r.scale = s > 0.0 ? s : 1.0;
        for (const auto &t : q.terms) r.terms.push_back({t.block, herm(t.coeff) / r.scale});
        r.rhs = q.bound / r.scale;
        r.slack = long(d.n_slack++);
        d.rows.push_back(std::move(r));
    }
    for (const auto &pin : p.pins) {
        const Eigen::Index n = p.costs.at(pin.block).rows();
        CMat E = CMat::Zero(n, n);
        E(Eigen::Index(pin.index), Eigen::Index(pin.index)) = 1.0;
        Row r;
        r.terms.push_back({pin.block, E});
        r.rhs = pin.value;
        d.rows.push_back(std::move(r));
    }
    for (const auto &c : d.C) d.n_cone += std::size_t(c.rows());
    d.n_cone += d.n_slack;
    return d;
}

struct Iterate {
    CMatList X, Z;
    RVec s, z, y;
};

RVec apply_A(const Data &d, const CMatList &X, const RVec &s) {
    RVec out(Eigen::Index(d.rows.size()));
    for (std::size_t i = 0; i < d.rows.size(); ++i) {
        double v = 0.0;
        for (const auto &t : d.rows[i].terms) v += re_inner(t.coeff, X[t.block]);
        if (d.rows[i].slack >= 0) v += s[d.rows[i].slack];
        out[Eigen::Index(i)] = v;
    }
    return out;
}

// Block part of A^T y.
CMatList apply_At(const Data &d, const RVec &y) {
    CMatList out;
    for (const auto &c : d.C) out.push_back(CMat::Zero(c.rows(), c.cols()));
    for (std::size_t i = 0; i < d.rows.size(); ++i)
        for (const auto &t : d.rows[i].terms) out[t.block] += y[Eigen::Index(i)] * t.coeff;
    return out;
}

RVec slack_At(const Data &d, const RVec &y) {
    RVec out = RVec::Zero(Eigen::Index(d.n_slack));
    for (std::size_t i = 0; i < d.rows.size(); ++i)
        if (d.rows[i].slack >= 0) out[d.rows[i].slack] = y[Eigen::Index(i)];
    return out;
}

RVec rhs_vec(const Data &d) {
    RVec c(Eigen::Index(d.rows.size()));
    for (std::size_t i = 0; i < d.rows.size(); ++i) c[Eigen::Index(i)] = d.rows[i].rhs;
    return c;
}

double primal_obj(const Data &d, const CMatList &X) {
    double v = 0.0;
    for (std::size_t b = 0; b < d.C.size(); ++b) v += re_inner(d.C[b], X[b]);
    return v;
}

// Largest alpha such that X + alpha dX stays PSD (infinity if unbounded).
double max_step(const CMat &X, const CMat &dX) {
    Eigen::LLT<CMat> llt(X);
    if (llt.info() != Eigen::Success) return 0.0;
    CMat Linv = llt.matrixL().solve(CMat::Identity(X.rows(), X.cols()));
    CMat W = herm(Linv * dX * Linv.adjoint());
    double lmin = Eigen::SelfAdjointEigenSolver<CMat>(W, Eigen::EigenvaluesOnly).eigenvalues().minCoeff();
    return lmin >= 0.0 ? std::numeric_limits<double>::infinity() : -1.0 / lmin;
}

double max_step_vec(const RVec &s, const RVec &ds) {
    double a = std::numeric_limits<double>::infinity();
    for (Eigen::Index i = 0; i < s.size(); ++i)
        if (ds[i] < 0.0) a = std::min(a, -s[i] / ds[i]);
    return a;
}

double min_eig(const CMat &X) {
    if (X.size() == 0) return 0.0;
    return Eigen::SelfAdjointEigenSolver<CMat>(herm(X), Eigen::EigenvaluesOnly).eigenvalues().minCoeff();
}

double max_eig(const CMat &X) {
    if (X.size() == 0) return 0.0;
    return Eigen::SelfAdjointEigenSolver<CMat>(herm(X), Eigen::EigenvaluesOnly).eigenvalues().maxCoeff();
}

struct Residuals {
    RVec rp;
    CMatList Rd;
    RVec rds;
    double pinf = 0, dinf = 0, gap = 0, pobj = 0, dobj = 0;
};

Residuals residuals(const Data &d, const Iterate &it, const RVec &c) {
    Residuals r;
    r.rp = c - apply_A(d, it.X, it.s);
    CMatList At = apply_At(d, it.y);
    double dn = 0.0, cn = 0.0;
    for (std::size_t b = 0; b < d.C.size(); ++b) {
        r.Rd.push_back(d.C[b] - At[b] - it.Z[b]);
        dn += r.Rd.back().squaredNorm();
        cn += d.C[b].squaredNorm();
    }
    r.rds = -slack_At(d, it.y) - it.z;
    dn += r.rds.squaredNorm();
    r.pinf = r.rp.norm() / (1.0 + c.norm());
    r.dinf = std::sqrt(dn) / (1.0 + std::sqrt(cn));
    r.pobj = primal_obj(d, it.X);
    r.dobj = c.dot(it.y);
    r.gap = std::abs(r.pobj - r.dobj) / (1.0 + std::abs(r.pobj) + std::abs(r.dobj));
    return r;
}

double complementarity(const Data &d, const Iterate &it) {
    double v = it.s.dot(it.z);
    for (std::size_t b = 0; b < d.C.size(); ++b) v += re_inner(it.X[b], it.Z[b]);
    return v / double(std::max<std::size_t>(d.n_cone, 1));
}

bool positive_definite(const CMat &X) { return Eigen::LLT<CMat>(X).info() == Eigen::Success; }

// Checks whether y/(c^T y) is a Farkas ray: A^T y_hat <= tol on every cone.
bool infeasibility_ray(const Data &d, const RVec &y, const RVec &c, RVec &y_hat) {
    const double cy = c.dot(y);
    if (!(cy > 0.0)) return false;
    y_hat = y / cy;
    const double tol = 1e-8;
    for (const auto &W : apply_At(d, y_hat))
        if (max_eig(W) > tol) return false;
    RVec sl = slack_At(d, y_hat);
    return sl.size() == 0 || sl.maxCoeff() <= tol;
}

SdpResult finish(const BlockSdpProblem &p, const Data &d, const Iterate &it, Status st, int iters,
                 const Residuals &r) {
    SdpResult out;
    out.X.reserve(it.X.size());
    for (const auto &x : it.X) out.X.push_back(herm(x));
    out.report.status = st;
    out.report.iterations = iters;
    out.report.method = "native-complex HKM interior point";
    out.report.objective = p.objective(out.X);
    out.dual_objective = r.dobj * d.cost_scale;
    double viol = 0.0;
    const RVec Ax = apply_A(d, it.X, RVec::Zero(Eigen::Index(d.n_slack)));
    for (std::size_t i = 0; i < d.rows.size(); ++i) {
        double e = Ax[Eigen::Index(i)] - d.rows[i].rhs;
        viol = std::max(viol, d.rows[i].slack >= 0 ? std::max(e, 0.0) : std::abs(e));
    }
    for (const auto &x : out.X) viol = std::max(viol, -min_eig(x));
    out.report.max_violation = viol;
    out.report.kkt_residual = std::max(r.dinf, r.gap);
    out.final_iterate = {it.X, it.y, it.Z, it.s, it.z};
    return out;
}

} // namespace

double BlockSdpProblem::objective(const CMatList &X) const {
    double v = 0.0;
    for (std::size_t b = 0; b < costs.size(); ++b) v += re_inner(costs[b], X.at(b));
    return v;
}

double BlockSdpProblem::max_violation(const CMatList &X) const {
    double v = 0.0;
    for (const auto &q : inequalities) {
        double lhs = 0.0;
        for (const auto &t : q.terms) lhs += re_inner(t.coeff, X.at(t.block));
        v = std::max(v, lhs - q.bound);
    }
    for (const auto &pin : pins)
        v = std::max(v, std::abs(X.at(pin.block)(Eigen::Index(pin.index), Eigen::Index(pin.index)).real() - pin.value));
    return v;
}

SdpResult solve_block_sdp(const BlockSdpProblem &problem, double feas_tol, double opt_tol, int max_iter,
                          const SdpWarmStart *warm) {
    if (!(feas_tol > 0 && opt_tol > 0)) throw InvalidInput("tolerances must be positive");
    for (const auto &c : problem.costs)
        if (c.rows() != c.cols()) throw InvalidInput("cost blocks must be square");
    for (const auto &q : problem.inequalities)
        for (const auto &t : q.terms)
            if (t.block >= problem.costs.size() || t.coeff.rows() != problem.costs[t.block].rows() ||
                t.coeff.cols() != problem.costs[t.block].cols())
                throw InvalidInput("constraint term shape mismatch");
    for (const auto &pin : problem.pins)
        if (pin.block >= problem.costs.size() || Eigen::Index(pin.index) >= problem.costs[pin.block].rows())
            throw InvalidInput("pin out of range");

    const Data d = normalise(problem);
    const RVec c = rhs_vec(d);
    const std::size_t m = d.rows.size();
    const std::size_t nb = d.C.size();

    Iterate it;
    // Rows with no block terms are decided directly.
    for (std::size_t i = 0; i < m; ++i)
        if (d.rows[i].terms.empty() && d.rows[i].rhs < -feas_tol) {
            it.X.clear();
            for (const auto &cb : d.C) it.X.push_back(CMat::Zero(cb.rows(), cb.cols()));
            it.Z = it.X;
            it.s = RVec::Zero(Eigen::Index(d.n_slack));
            it.z = it.s;
            it.y = RVec::Zero(Eigen::Index(m));
            Residuals r = residuals(d, it, c);
            SdpResult out = finish(problem, d, it, Status::infeasible, 0, r);
            out.report.offending_constraint = i;
            out.report.certificate.assign(m, 0.0);
            out.report.certificate[i] = 1.0 / d.rows[i].rhs;
            return out;
        }

    bool warm_ok = false;
    if (warm && warm->X.size() == nb && warm->Z.size() == nb && std::size_t(warm->y.size()) == m &&
        std::size_t(warm->slack.size()) == d.n_slack && std::size_t(warm->slack_dual.size()) == d.n_slack) {
        warm_ok = true;
        for (std::size_t b = 0; b < nb; ++b)
            warm_ok = warm_ok && warm->X[b].rows() == d.C[b].rows() && positive_definite(warm->X[b]) &&
                      positive_definite(warm->Z[b]);
        warm_ok = warm_ok && (d.n_slack == 0 || (warm->slack.minCoeff() > 0 && warm->slack_dual.minCoeff() > 0));
        if (warm_ok) it = {warm->X, warm->Z, warm->slack, warm->slack_dual, warm->y};
    }
    if (!warm_ok) {
        double xi = 10.0, eta = 10.0;
        for (std::size_t i = 0; i < m; ++i) {
            double an = 0.0;
            for (const auto &t : d.rows[i].terms) an = std::max(an, t.coeff.norm());
            xi = std::max(xi, double(d.n_cone) * (1.0 + std::abs(d.rows[i].rhs)) / (1.0 + an));
            eta = std::max(eta, an);
        }
        for (const auto &cb : d.C) eta = std::max(eta, cb.norm());
        eta *= std::sqrt(double(d.n_cone));
        it.X.clear();
        it.Z.clear();
        for (const auto &cb : d.C) {
            it.X.push_back(xi * CMat::Identity(cb.rows(), cb.cols()));
            it.Z.push_back(eta * CMat::Identity(cb.rows(), cb.cols()));
        }
        it.s = RVec::Constant(Eigen::Index(d.n_slack), xi);
        it.z = RVec::Constant(Eigen::Index(d.n_slack), eta);
        it.y = RVec::Zero(Eigen::Index(m));
    }

    // Internal targets are tighter than the contract so the DC rank residual can be resolved.
    const double gap_target = std::min(opt_tol, 1e-10);
    const double feas_target = std::min(feas_tol, 1e-10);
    auto converged = [&](const Residuals &r, double pt, double dt, double gt) {
        return r.pinf <= pt && r.dinf <= dt && r.gap <= gt;
    };

    Residuals r = residuals(d, it, c);
    int iter = 0;
    int stall = 0;
    double best_merit = std::numeric_limits<double>::infinity();
    Iterate best = it;
    Residuals best_r = r;

    for (; iter < max_iter; ++iter) {
        if (converged(r, feas_target, feas_target, gap_target)) break;
        if (warm_ok && iter == 0 && converged(r, feas_tol, feas_tol, opt_tol)) break;

        RVec y_hat;
        if (iter > 3 && r.pinf > feas_tol && infeasibility_ray(d, it.y, c, y_hat)) {
            SdpResult out = finish(problem, d, it, Status::infeasible, iter, r);
            out.report.certificate.assign(y_hat.data(), y_hat.data() + y_hat.size());
            std::size_t worst = 0;
            double wv = -1.0;
            for (std::size_t i = 0; i < m; ++i)
                if (d.rows[i].slack >= 0 && std::abs(y_hat[Eigen::Index(i)]) > wv) {
                    wv = std::abs(y_hat[Eigen::Index(i)]);
                    worst = i;
                }
            out.report.offending_constraint = worst;
            return out;
        }

        // Factorisations shared by predictor and corrector.
        std::vector<CMat> Zinv(nb);
        bool ok = true;
        for (std::size_t b = 0; b < nb; ++b) {
            Eigen::LLT<CMat> llt(it.Z[b]);
            if (llt.info() != Eigen::Success) {
                ok = false;
                break;
            }
            Zinv[b] = llt.solve(CMat::Identity(it.Z[b].rows(), it.Z[b].cols()));
            Zinv[b] = herm(Zinv[b]);
        }
        if (!ok) break;

        // Schur complement M_ik = sum_b Re tr(A_ib X_b A_kb Z_b^-1) + slack terms.
        RMat Msc = RMat::Zero(Eigen::Index(m), Eigen::Index(m));
        std::vector<std::vector<std::pair<std::size_t, CMat>>> XAZ(m);
        for (std::size_t i = 0; i < m; ++i)
            for (const auto &t : d.rows[i].terms) XAZ[i].push_back({t.block, it.X[t.block] * t.coeff * Zinv[t.block]});
        for (std::size_t i = 0; i < m; ++i) {
            for (std::size_t k = i; k < m; ++k) {
                double v = 0.0;
                for (const auto &[bk, P] : XAZ[k])
                    for (const auto &t : d.rows[i].terms)
                        if (t.block == bk) v += re_inner(t.coeff, P);
                Msc(Eigen::Index(i), Eigen::Index(k)) = v;
                Msc(Eigen::Index(k), Eigen::Index(i)) = v;
            }
            if (d.rows[i].slack >= 0) {
                const auto j = d.rows[i].slack;
                Msc(Eigen::Index(i), Eigen::Index(i)) += it.s[j] / it.z[j];
            }
        }
        Eigen::LDLT<RMat> schur(Msc);
        if (schur.info() != Eigen::Success) break;

        const double mu = complementarity(d, it);

        auto direction = [&](double sigma_mu, const std::vector<CMat> *corrX, const RVec *corrS, CMatList &dX,
                             CMatList &dZ, RVec &ds, RVec &dz, RVec &dy) {
            // Block and slack parts of the "fixed" primal step (terms independent of dy).
            std::vector<CMat> base(nb);
            for (std::size_t b = 0; b < nb; ++b) {
                CMat W = sigma_mu * Zinv[b] - it.X[b] - it.X[b] * r.Rd[b] * Zinv[b];
                if (corrX) W -= (*corrX)[b];
                base[b] = W;
            }
            RVec sbase(Eigen::Index(d.n_slack));
            for (Eigen::Index j = 0; j < sbase.size(); ++j) {
                sbase[j] = sigma_mu / it.z[j] - it.s[j] - it.s[j] * r.rds[j] / it.z[j];
                if (corrS) sbase[j] -= (*corrS)[j];
            }
            RVec rhs = RVec::Zero(Eigen::Index(m));
            for (std::size_t i = 0; i < m; ++i) {
                double v = r.rp[Eigen::Index(i)];
                for (const auto &t : d.rows[i].terms) v -= re_inner(t.coeff, base[t.block]);
                if (d.rows[i].slack >= 0) v -= sbase[d.rows[i].slack];
                rhs[Eigen::Index(i)] = v;
            }
            dy = schur.solve(rhs);
            CMatList Ady = apply_At(d, dy);
            dZ.assign(nb, CMat());
            dX.assign(nb, CMat());
            for (std::size_t b = 0; b < nb; ++b) {
                dZ[b] = r.Rd[b] - Ady[b];
                CMat W = sigma_mu * Zinv[b] - it.X[b] - it.X[b] * dZ[b] * Zinv[b];
                if (corrX) W -= (*corrX)[b];
                dX[b] = herm(W);
            }
            RVec sdy = slack_At(d, dy);
            dz = r.rds - sdy;
            ds.resize(Eigen::Index(d.n_slack));
            for (Eigen::Index j = 0; j < ds.size(); ++j) {
                ds[j] = sigma_mu / it.z[j] - it.s[j] - it.s[j] * dz[j] / it.z[j];
                if (corrS) ds[j] -= (*corrS)[j];
            }
        };

        auto step_lengths = [&](const CMatList &dX, const CMatList &dZ, const RVec &ds, const RVec &dz, double &ap,
                                double &ad) {
            ap = max_step_vec(it.s, ds);
            ad = max_step_vec(it.z, dz);
            for (std::size_t b = 0; b < nb; ++b) {
                ap = std::min(ap, max_step(it.X[b], dX[b]));
                ad = std::min(ad, max_step(it.Z[b], dZ[b]));
            }
        };

        CMatList dXa, dZa;
        RVec dsa, dza, dya;
        direction(0.0, nullptr, nullptr, dXa, dZa, dsa, dza, dya);
        double apa, ada;
        step_lengths(dXa, dZa, dsa, dza, apa, ada);
        apa = std::min(1.0, apa);
        ada = std::min(1.0, ada);
        double mu_aff = (it.s + apa * dsa).dot(it.z + ada * dza);
        for (std::size_t b = 0; b < nb; ++b) mu_aff += re_inner(it.X[b] + apa * dXa[b], it.Z[b] + ada * dZa[b]);
        mu_aff /= double(std::max<std::size_t>(d.n_cone, 1));
        const double sigma = std::clamp(std::pow(std::max(mu_aff, 0.0) / mu, 3.0), 0.0, 1.0);

        std::vector<CMat> corrX(nb);
        for (std::size_t b = 0; b < nb; ++b) corrX[b] = dXa[b] * dZa[b] * Zinv[b];
        RVec corrS = dsa.cwiseProduct(dza).cwiseQuotient(it.z);

        CMatList dX, dZ;
        RVec ds, dz, dy;
        direction(sigma * mu, &corrX, &corrS, dX, dZ, ds, dz, dy);
        double ap, ad;
        step_lengths(dX, dZ, ds, dz, ap, ad);
        const double tau = 0.98;
        ap = std::min(1.0, tau * ap);
        ad = std::min(1.0, tau * ad);
        if (!(ap > 1e-14 && ad > 1e-14)) break;

        for (std::size_t b = 0; b < nb; ++b) {
            it.X[b] = herm(it.X[b] + ap * dX[b]);
            it.Z[b] = herm(it.Z[b] + ad * dZ[b]);
        }
        it.s += ap * ds;
        it.z += ad * dz;
        it.y += ad * dy;
        r = residuals(d, it, c);

        const double merit = std::max({r.pinf, r.dinf, r.gap});
        if (merit < best_merit * 0.999) {
            best_merit = merit;
            best = it;
            best_r = r;
            stall = 0;
        } else if (++stall >= 8) {
            break;
        }
    }

    // Fall back to the best iterate if the last one regressed.
    const double merit = std::max({r.pinf, r.dinf, r.gap});
    if (merit > best_merit) {
        it = best;
        r = best_r;
    }
    const Status st = converged(r, feas_tol, feas_tol, opt_tol) ? Status::optimal : Status::iteration_limit;
    return finish(problem, d, it, st, iter, r);
}

} // namespace airfl::convex
