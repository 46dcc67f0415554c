// SPDX-License-Identifier: Apache-2.0
#include <algorithm>
#include <chrono>
#include <limits>
#include <random>

#include "airfl/optimizer.hpp"

// BeamformerState.a is indexed by original device here; each step works in the SIC order
// recomputed from the current effective channels.
namespace airfl::opt {

namespace {

using Clock = std::chrono::steady_clock;

std::vector<std::size_t> current_order(const BeamformerState &s, const Csi &csi) {
    return metrics::order_devices(csi.effective(s.v));
}

BeamformerState to_order(const BeamformerState &s, const std::vector<std::size_t> &order) {
    BeamformerState o = s;
    o.a = metrics::permute(s.a, order);
    return o;
}

BeamformerState from_order(const BeamformerState &s, const std::vector<std::size_t> &order) {
    BeamformerState o = s;
    o.a = metrics::unpermute(s.a, order);
    return o;
}

SystemConfig scaled(const SystemConfig &cfg, double c) {
    SystemConfig r = cfg;
    r.gamma_min *= c;
    r.p_gap_perfect *= c;
    r.p_gap_imperfect *= c;
    return r;
}

std::string blocking_family(const Audit &a) {
    if (!a.power_ok) return "power";
    if (!a.sinr_ok) return "sinr";
    return "gap";
}

// One b -> a -> f -> v pass in decode order; annotates it.failure / it.note.
void ao_cycle(BeamformerState &s, const Csi &c, const SystemConfig &cfg, AoIteration &it) {
    s.b = update_b(s, c, cfg);
    const double mse_b = objective(s, c, cfg);

    const auto dc = dc_transmit_step(s, c, cfg);
    it.a_reports = dc.reports;
    it.rank_residuals = dc.rank_residuals;
    if (dc.status == convex::Status::infeasible) {
        it.a_accepted = false;
        it.failure = "a-step: transmit SDP infeasible";
        if (dc.offending_constraint) it.failure += " at constraint " + std::to_string(*dc.offending_constraint);
    } else if (dc.lifted.empty()) {
        it.a_accepted = false;
        it.failure = "a-step: no usable SDP solution";
    } else {
        BeamformerState trial = s;
        trial.a = dc.a;
        // Rank-one truncation can cost objective; the pass must stay monotone.
        const double mse_a = objective(trial, c, cfg);
        if (std::isfinite(mse_a) && mse_a <= mse_b * (1.0 + 1e-9) + 1e-15) {
            s.a = dc.a;
        } else {
            it.a_accepted = false;
            it.note = "a-step: recovered beamformers kept previous (objective would increase)";
        }
    }

    const auto rf = sca_recovery_f(s, c, cfg);
    it.f_reports = rf.reports;
    s.f = rf.f;

    if (cfg.M > 0) {
        const auto pv = sca_phase_shifts(s, c, cfg);
        it.v_reports = pv.reports;
        s.v = pv.v;
    }
}

double spectral_norm(const CMat &A) { return A.size() ? Eigen::JacobiSVD<CMat>(A).singularValues()(0) : 0.0; }

// Devices by descending bound ||H_d|| + ||G|| ||H_r|| on their best achievable link gain.
std::vector<std::size_t> devices_by_link_bound(const channel::ChannelRealization &ch) {
    std::vector<double> ub;
    const double gn = spectral_norm(ch.g);
    for (std::size_t k = 0; k < ch.K(); ++k) ub.push_back(spectral_norm(ch.h_direct[k]) + gn * spectral_norm(ch.h_ris[k]));
    std::vector<std::size_t> idx(ch.K());
    for (std::size_t k = 0; k < idx.size(); ++k) idx[k] = k;
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t i, std::size_t j) { return ub[i] > ub[j]; });
    return idx;
}

// Necessary condition: with S_k = |f^H H_k a_k|^2 / ||f||^2 <= P (||H_d|| + ||G|| ||H_r||)^2, the SIC
// chain needs S at position i of at least gamma (sum of the requirements below it + sigma^2). Gap
// constraints scale with ||f||^2 and do not tighten this. Estimation error only adds interference.
void link_budget_check(const channel::ChannelRealization &ch, const SystemConfig &cfg) {
    const double gn = spectral_norm(ch.g);
    std::vector<double> cap;
    for (std::size_t k = 0; k < ch.K(); ++k) {
        const double u = spectral_norm(ch.h_direct[k]) + gn * spectral_norm(ch.h_ris[k]);
        cap.push_back(cfg.p_max * u * u);
    }
    std::sort(cap.rbegin(), cap.rend());
    std::vector<double> need(ch.K());
    double below = 0.0;
    for (std::size_t i = ch.K(); i-- > 0;) {
        need[i] = cfg.gamma_min * (below + cfg.sigma2_n);
        below += need[i];
    }
    for (std::size_t i = 0; i < ch.K(); ++i)
        if (cap[i] < need[i] * (1.0 - 1e-9))
            throw InfeasibleInstance("link budget: position " + std::to_string(i) + " needs SNR " +
                                         std::to_string(10.0 * std::log10(need[i] / cfg.sigma2_n)) +
                                         " dB, best device offers at most " +
                                         std::to_string(10.0 * std::log10(cap[i] / cfg.sigma2_n)) + " dB",
                                     "sinr");
}

// Estimation error caps what SIC can reach, whatever the power. With u_k = ||H_d|| + ||G|| ||H_r|| and
// c_k = sd_k + M sr_k sg, device k's own error term is at least S_k / T_k, T_k = u_k^2 / c_k, where S_k is
// its received power. The SIC chain forces S_0 >= gamma (1 + gamma)^(K-2) S_last, and the last device
// sees the first one's error, so the device decoded first needs T >= gamma^2 (1 + gamma)^(K-2).
void error_ceiling_check(const Csi &csi, const SystemConfig &cfg) {
    if (csi.errors.is_zero()) return;
    const auto &ch = csi.channels;
    const std::size_t K = ch.K();
    const double gn = spectral_norm(ch.g);
    const double M = double(ch.g.rows());
    double best = 0.0;
    for (std::size_t k = 0; k < K; ++k) {
        const double c = csi.errors.sigma2_d[k] + M * csi.errors.sigma2_r[k] * csi.errors.sigma2_g;
        const double u = spectral_norm(ch.h_direct[k]) + gn * spectral_norm(ch.h_ris[k]);
        best = std::max(best, c > 0.0 ? u * u / c : std::numeric_limits<double>::infinity());
    }
    const double g = cfg.gamma_min;
    const double need = K == 1 ? g : g * g * std::pow(1.0 + g, double(K) - 2.0);
    if (best < need * (1.0 - 1e-9))
        throw InfeasibleInstance("estimation error: SIC needs an error ceiling of " +
                                     std::to_string(10.0 * std::log10(need)) + " dB, best device has " +
                                     std::to_string(10.0 * std::log10(best)) + " dB",
                                 "sinr");
}

// Coordinate ascent on ||H_best(v)||_F^2.
void align_phases(RVec &v, const channel::ChannelRealization &ch, std::size_t best) {
    if (v.size() == 0) return;
    const CMat &Hd = ch.h_direct[best];
    const CMat &Hr = ch.h_ris[best];
    const CMat Gh = ch.g.adjoint();
    std::vector<CMat> D(std::size_t(v.size()));
    CMat H = Hd;
    for (Eigen::Index m = 0; m < v.size(); ++m) {
        D[std::size_t(m)] = Gh.col(m) * Hr.row(m);
        H += std::polar(1.0, v[m]) * D[std::size_t(m)];
    }
    for (int sweep = 0; sweep < 5; ++sweep) {
        for (Eigen::Index m = 0; m < v.size(); ++m) {
            const CMat &Dm = D[std::size_t(m)];
            const CMat rest = H - std::polar(1.0, v[m]) * Dm;
            const cd c = (Dm.cwiseProduct(rest.conjugate())).sum(); // tr(rest^H Dm)
            v[m] = wrap_phase(-std::arg(c));
            H = rest + std::polar(1.0, v[m]) * Dm;
        }
    }
}

} // namespace

Audit audit(const BeamformerState &state, const Csi &csi, const SystemConfig &cfg, double rel_tol) {
    Audit au;
    const CMatList H0 = csi.effective(state.v);
    au.order = metrics::order_devices(H0);
    const CMatList H = metrics::permute(H0, au.order);
    const CVecList a = metrics::permute(state.a, au.order);
    const Csi c = csi.permuted(au.order);
    const auto est = c.as_estimate();
    for (std::size_t k = 0; k < cfg.K; ++k) {
        if (csi.regime == Regime::perfect)
            au.sinr.push_back(metrics::sinr_perfect(state.f, a, H, cfg.sigma2_n, k));
        else
            au.sinr.push_back(metrics::sinr_imperfect(state.f, a, est, H, cfg.sigma2_n, k));
    }
    const RVec g = metrics::power_gaps(state.f, a, H);
    au.gaps.assign(g.data(), g.data() + g.size());
    au.min_sinr = *std::min_element(au.sinr.begin(), au.sinr.end());
    au.min_gap = au.gaps.empty() ? std::numeric_limits<double>::infinity()
                                 : *std::min_element(au.gaps.begin(), au.gaps.end());
    for (const auto &ak : state.a) au.max_power = std::max(au.max_power, ak.squaredNorm());
    au.sinr_ok = au.min_sinr >= cfg.gamma_min * (1.0 - rel_tol);
    au.gap_ok = au.min_gap >= cfg.p_gap(csi.regime) * (1.0 - rel_tol);
    au.power_ok = au.max_power <= cfg.p_max * (1.0 + 1e-9);
    return au;
}

AoResult run_algorithm(const BeamformerState &state0, const Csi &csi, const SystemConfig &cfg) {
    cfg.validate();
    state0.validate(cfg);
    AoResult out;
    out.state = state0;
    out.trace.initial_objective = objective(state0, csi, cfg);
    if (cfg.T0 == 0) return out;

    BeamformerState s = state0;
    double prev = out.trace.initial_objective;
    std::vector<std::size_t> last_order = current_order(s, csi);

    for (int t = 0; t < cfg.T0; ++t) {
        const auto t0 = Clock::now();
        AoIteration it;
        const auto order = current_order(s, csi);
        const Csi c = csi.permuted(order);
        BeamformerState w = to_order(s, order);
        try {
            ao_cycle(w, c, cfg, it);
        } catch (const std::exception &e) {
            out.trace.failure = std::string("outer iteration ") + std::to_string(t) + ": " + e.what();
            break;
        }
        last_order = order;
        BeamformerState next = from_order(w, order);
        const double obj = objective(next, csi, cfg);
        if (!std::isfinite(obj)) {
            out.trace.failure = "outer iteration " + std::to_string(t) + ": non-finite objective";
            break;
        }
        s = next;
        const auto au = audit(s, csi, cfg);
        it.objective = obj;
        it.min_sinr = au.min_sinr;
        it.min_gap = au.min_gap;
        it.wall_ms = std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
        out.trace.iterations.push_back(it);
        const double change = std::abs(prev - obj);
        prev = obj;
        if (change <= cfg.eps0 * std::abs(obj)) {
            out.trace.converged = true;
            break;
        }
    }

    // The last v-step may have changed the decode order the SINR constraints refer to.
    const auto final_order = current_order(s, csi);
    if (!out.trace.iterations.empty() && final_order != last_order) {
        try {
            const Csi c = csi.permuted(final_order);
            s.f = sca_recovery_f(to_order(s, final_order), c, cfg).f;
        } catch (const std::exception &e) {
            if (out.trace.failure.empty()) out.trace.failure = std::string("final f-step: ") + e.what();
        }
    }
    out.state = s;
    return out;
}

namespace {

struct HomotopyOutcome {
    BeamformerState state;
    double margin = 0.0; // fraction of the target thresholds met; feasible at 1
    std::string family;
};

// Full power along each device's dominant right singular vector, MMSE b, f unset.
BeamformerState matched_start(const Csi &csi, const SystemConfig &cfg, const RVec &v0) {
    BeamformerState s;
    s.v = v0;
    const CMatList H = csi.effective(s.v);
    for (std::size_t k = 0; k < cfg.K; ++k) {
        Eigen::JacobiSVD<CMat> svd(H[k], Eigen::ComputeThinV);
        s.a.push_back(std::sqrt(cfg.p_max) * svd.matrixV().col(0));
    }
    s.b = update_b(s, csi, cfg);
    s.f = CVec::Zero(Eigen::Index(cfg.Nr));
    return s;
}

RVec random_phases(std::size_t M, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> U(0.0, kTwoPi);
    RVec v = RVec::Zero(Eigen::Index(M));
    for (Eigen::Index m = 0; m < v.size(); ++m) v[m] = U(rng);
    return v;
}

HomotopyOutcome homotopy(const Csi &csi, const SystemConfig &cfg, const RVec &v0) {
    BeamformerState s = matched_start(csi, cfg, v0);

    auto fit_f = [&](BeamformerState &st, const SystemConfig &c) {
        const auto order = current_order(st, csi);
        st.f = sca_recovery_f(to_order(st, order), csi.permuted(order), c).f;
    };
    auto margin = [&](const BeamformerState &st) {
        const Audit a = audit(st, csi, cfg, 0.0);
        double m = cfg.gamma_min > 0.0 ? a.min_sinr / cfg.gamma_min : 1.0;
        const double pg = cfg.p_gap(csi.regime);
        if (pg > 0.0) m = std::min(m, a.min_gap / pg);
        if (!a.power_ok) m = 0.0;
        return std::isfinite(m) ? m : 0.0;
    };

    fit_f(s, cfg);
    double mu = margin(s);
    double scale = 1.0;
    for (int r = 0; r < 40 && mu < scale; ++r) {
        scale *= 0.5;
        fit_f(s, scaled(cfg, scale));
        mu = margin(s);
    }
    if (mu < scale) return {s, mu, blocking_family(audit(s, csi, scaled(cfg, scale)))};

    // Re-tighten. Each round poses the a- and v-steps at a level above the margin already met and
    // keeps a step only if the margin does not shrink; the level step contracts when nothing helps.
    double growth = std::pow(scale, -0.1);
    for (int round = 0; round < 40 && mu < 1.0 && growth > 1.0 + 1e-3; ++round) {
        const SystemConfig c = scaled(cfg, std::min(1.0, mu * growth));
        const double mu0 = mu;
        auto try_step = [&](auto &&step) {
            const auto order = current_order(s, csi);
            const Csi cs = csi.permuted(order);
            BeamformerState wo = to_order(s, order);
            try {
                if (!step(wo, cs)) return;
            } catch (const std::exception &) {
                return;
            }
            BeamformerState w = from_order(wo, order);
            fit_f(w, c);
            const double m = margin(w);
            if (m >= mu) {
                s = w;
                mu = m;
            }
        };
        try_step([&](BeamformerState &w, const Csi &cs) {
            w.b = update_b(w, cs, c);
            const auto dc = dc_transmit_step(w, cs, c);
            if (dc.status == convex::Status::infeasible || dc.lifted.empty()) return false;
            w.a = dc.a;
            return true;
        });
        if (c.M > 0)
            try_step([&](BeamformerState &w, const Csi &cs) {
                w.b = update_b(w, cs, c);
                w.v = sca_phase_shifts(w, cs, c).v;
                return true;
            });
        if (mu <= mu0 * (1.0 + 1e-6)) growth = std::sqrt(growth);
    }
    s.b = update_b(s, csi, cfg);
    const Audit au = audit(s, csi, cfg);
    return {s, au.feasible() ? 1.0 : std::min(mu, 1.0 - 1e-12), au.feasible() ? "" : blocking_family(au)};
}

} // namespace

BeamformerState initialize_feasible(const Csi &csi, const SystemConfig &cfg, std::uint64_t seed) {
    cfg.validate();
    csi.channels.validate(cfg);
    const RVec v0 = random_phases(cfg.M, seed);
    link_budget_check(csi.channels, cfg);
    error_ceiling_check(csi, cfg);

    // Starts: phases aligned to each device (strongest first), then the raw random draw.
    std::vector<RVec> starts;
    if (cfg.M > 0) {
        for (std::size_t k : devices_by_link_bound(csi.channels)) {
            RVec v = v0;
            align_phases(v, csi.channels, k);
            starts.push_back(v);
        }
    }
    starts.push_back(v0);

    HomotopyOutcome best;
    best.margin = -1.0;
    for (const auto &v : starts) {
        auto h = homotopy(csi, cfg, v);
        if (h.family.empty()) return h.state;
        if (h.margin > best.margin) best = std::move(h);
    }
    throw InfeasibleInstance("no feasible point found (best reached " + std::to_string(best.margin) +
                                 " of the thresholds)",
                             best.family);
}

BeamformerState starting_point(const Csi &csi, const SystemConfig &cfg, std::uint64_t seed) {
    cfg.validate();
    csi.channels.validate(cfg);
    RVec v = random_phases(cfg.M, seed);
    if (cfg.M > 0) align_phases(v, csi.channels, devices_by_link_bound(csi.channels).front());
    BeamformerState s = matched_start(csi, cfg, v);
    const auto order = current_order(s, csi);
    s.f = sca_recovery_f(to_order(s, order), csi.permuted(order), cfg).f;
    return s;
}

} // namespace airfl::opt
