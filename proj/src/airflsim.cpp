// SPDX-License-Identifier: Apache-2.0
#include <algorithm>
#include <random>

#include "airfl/airflsim.hpp"

namespace airfl::sim {

Preprocessed preprocess(const std::vector<RVec> &models) {
    if (models.empty()) throw InvalidInput("no models");
    const std::size_t d = std::size_t(models.front().size());
    Preprocessed out;
    out.state.dim = d;
    out.state.padded = d % 2 == 1;
    double var = 0.0;
    for (const auto &w : models) {
        if (std::size_t(w.size()) != d) throw InvalidInput("models differ in dimension");
        if (!w.allFinite()) throw InvalidInput("non-finite model weight");
        const double mu = d ? w.mean() : 0.0;
        out.state.means.push_back(mu);
        var += d ? (w.array() - mu).square().sum() / double(d) : 0.0;
    }
    var /= double(models.size());
    // Two real weights per complex symbol: E|s|^2 = 2 var / scale^2.
    out.state.scale = std::max(std::sqrt(2.0 * var), 1e-12);

    const std::size_t n = (d + 1) / 2;
    for (std::size_t k = 0; k < models.size(); ++k) {
        CVec s = CVec::Zero(Eigen::Index(n));
        const auto &w = models[k];
        const double mu = out.state.means[k];
        for (std::size_t i = 0; i < n; ++i) {
            const double re = w[Eigen::Index(2 * i)] - mu;
            const double im = 2 * i + 1 < d ? w[Eigen::Index(2 * i + 1)] - mu : 0.0;
            s[Eigen::Index(i)] = cd(re, im) / out.state.scale;
        }
        out.symbols.push_back(std::move(s));
    }
    return out;
}

RVec postprocess(const CVec &aggregate, const PreprocessState &state, std::size_t K) {
    if (K == 0 || K != state.means.size()) throw InvalidInput("device count differs from preprocessing");
    if (std::size_t(aggregate.size()) != (state.dim + 1) / 2) throw InvalidInput("aggregate length mismatch");
    double mean_of_means = 0.0;
    for (double m : state.means) mean_of_means += m;
    mean_of_means /= double(K);
    RVec w = RVec::Zero(Eigen::Index(state.dim));
    const double c = state.scale / double(K);
    for (std::size_t i = 0; i < state.dim; ++i) {
        const cd s = aggregate[Eigen::Index(i / 2)];
        w[Eigen::Index(i)] = c * (i % 2 == 0 ? s.real() : s.imag()) + mean_of_means;
    }
    return w;
}

AirCompResult aircomp_round(const std::vector<CVec> &symbols, const BeamformerState &state,
                            const channel::ChannelRealization &truth, double sigma2_n, std::uint64_t seed,
                            const AirCompOptions &options) {
    const std::size_t K = truth.K();
    if (symbols.size() != K || state.a.size() != K) throw InvalidInput("device count mismatch");
    const Eigen::Index T = symbols.empty() ? 0 : symbols.front().size();
    for (const auto &s : symbols)
        if (s.size() != T) throw InvalidInput("symbol sequences differ in length");
    const CMatList H = channel::effective_channel(truth, state.v);
    const Eigen::Index Nr = truth.g.cols();
    if (state.b.size() != Nr || state.f.size() != Nr) throw InvalidInput("receive beamformer length mismatch");

    CMat HA(Nr, Eigen::Index(K));
    for (std::size_t k = 0; k < K; ++k) HA.col(Eigen::Index(k)) = H[k] * state.a[k];
    CMat S(Eigen::Index(K), T);
    for (std::size_t k = 0; k < K; ++k) S.row(Eigen::Index(k)) = symbols[k].transpose();

    std::mt19937_64 rng(seed);
    std::normal_distribution<double> N(0.0, std::sqrt(sigma2_n / 2.0));
    CMat Y = HA * S;
    if (sigma2_n > 0.0)
        for (Eigen::Index t = 0; t < T; ++t)
            for (Eigen::Index r = 0; r < Nr; ++r) Y(r, t) += cd(N(rng), N(rng));

    AirCompResult out;
    out.aggregate = (state.b.adjoint() * Y).transpose();

    // SIC after the recovery beamformer, scalar per slot.
    const CMatList Hdec = options.decoder ? channel::effective_channel(*options.decoder, state.v) : H;
    auto &sic = out.sic;
    sic.order = metrics::order_devices(Hdec);
    sic.decoded.assign(K, CVec());
    sic.success.assign(K, false);
    sic.sinr.assign(K, 0.0);
    const CMatList Hord = metrics::permute(H, sic.order);
    const CVecList aord = metrics::permute(state.a, sic.order);
    for (std::size_t i = 0; i < K; ++i) {
        const std::size_t k = sic.order[i];
        sic.sinr[k] = metrics::sinr_perfect(state.f, aord, Hord, sigma2_n, i);
        sic.success[k] = sic.sinr[k] >= options.gamma_min;
    }

    CVec r = (state.f.adjoint() * Y).transpose();
    for (std::size_t i = 0; i < K; ++i) {
        const std::size_t k = sic.order[i];
        const cd c = state.f.dot(Hdec[k] * state.a[k]);
        if (std::abs(c) == 0.0) {
            sic.decode_failure = true;
            for (std::size_t j = i; j < K; ++j) sic.success[sic.order[j]] = false;
            break;
        }
        CVec est = r / c;
        CVec cancel(T);
        if (!options.constellation.empty()) {
            for (Eigen::Index t = 0; t < T; ++t) {
                const auto it = std::min_element(options.constellation.begin(), options.constellation.end(),
                                                 [&](cd p, cd q) { return std::norm(p - est[t]) < std::norm(q - est[t]); });
                cancel[t] = *it;
            }
        } else {
            cancel = symbols[k];
        }
        r -= c * cancel;
        sic.decoded[k] = std::move(est);
        sic.residual_power.push_back(T ? r.squaredNorm() / double(T) : 0.0);
    }
    return out;
}

namespace {

struct Dataset {
    RMat X;
    RVec y;
};

Dataset draw(std::mt19937_64 &rng, const RVec &w_star, std::size_t n, double noise_std) {
    std::normal_distribution<double> N(0.0, 1.0);
    Dataset d;
    d.X = RMat(Eigen::Index(n), w_star.size());
    for (Eigen::Index i = 0; i < d.X.rows(); ++i)
        for (Eigen::Index j = 0; j < d.X.cols(); ++j) d.X(i, j) = N(rng);
    d.y = d.X * w_star;
    for (Eigen::Index i = 0; i < d.y.size(); ++i) d.y[i] += noise_std * N(rng);
    return d;
}

double loss(const Dataset &d, const RVec &w) { return (d.X * w - d.y).squaredNorm() / double(d.y.size()); }

} // namespace

FederatedTrace run_federated(std::uint64_t task_seed, int rounds, std::size_t K, const LinkProvider &links,
                             double sigma2_n, const FederatedTask &task) {
    if (rounds < 0) throw InvalidInput("rounds must be non-negative");
    if (K == 0) throw InvalidInput("need at least one device");
    std::mt19937_64 rng(task_seed);
    std::normal_distribution<double> N(0.0, 1.0);
    const auto d = Eigen::Index(task.dim);
    RVec w_star(d);
    for (Eigen::Index j = 0; j < d; ++j) w_star[j] = N(rng) / std::sqrt(double(d));

    std::vector<Dataset> local;
    for (std::size_t k = 0; k < K; ++k) local.push_back(draw(rng, w_star, task.samples_per_device, task.noise_std));
    const Dataset test = draw(rng, w_star, task.test_samples, task.noise_std);

    FederatedTrace tr;
    {
        RMat X(Eigen::Index(K * task.samples_per_device), d);
        RVec y(X.rows());
        Eigen::Index row = 0;
        for (const auto &ds : local) {
            X.middleRows(row, ds.X.rows()) = ds.X;
            y.segment(row, ds.y.size()) = ds.y;
            row += ds.X.rows();
        }
        const RVec w_ls = X.colPivHouseholderQr().solve(y);
        tr.centralized_loss = loss(test, w_ls);
    }

    RVec w = RVec::Zero(d);
    tr.initial_loss = loss(test, w);
    for (int t = 0; t < rounds; ++t) {
        std::vector<RVec> models;
        for (const auto &ds : local) {
            RVec wk = w;
            const double n = double(ds.y.size());
            for (int s = 0; s < task.local_steps; ++s) wk -= task.rate * (ds.X.transpose() * (ds.X * wk - ds.y)) / n;
            models.push_back(std::move(wk));
        }
        const auto link = links ? links(t) : std::nullopt;
        if (!link) {
            RVec avg = RVec::Zero(d);
            for (const auto &m : models) avg += m;
            w = avg / double(K);
            tr.aggregation_mse.push_back(0.0);
            tr.sic_successes.push_back(int(K));
            tr.flagged.push_back(false);
        } else {
            const auto pre = preprocess(models);
            const auto res = aircomp_round(pre.symbols, link->state, link->truth, sigma2_n,
                                           task_seed * 1000003ULL + std::uint64_t(t), link->options);
            CVec sum = CVec::Zero(res.aggregate.size());
            for (const auto &s : pre.symbols) sum += s;
            tr.aggregation_mse.push_back((res.aggregate - sum).squaredNorm() / double(sum.size()));
            tr.sic_successes.push_back(int(std::count(res.sic.success.begin(), res.sic.success.end(), true)));
            tr.flagged.push_back(link->flagged);
            w = postprocess(res.aggregate, pre.state, K);
        }
        tr.loss.push_back(loss(test, w));
    }
    tr.model = w;
    return tr;
}

} // namespace airfl::sim
