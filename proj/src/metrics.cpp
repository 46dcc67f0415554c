// SPDX-License-Identifier: Apache-2.0
#include "airfl/metrics.hpp"

#include <algorithm>
#include <numeric>

namespace airfl::metrics {

namespace {

void check_lists(const CVecList &a, const CMatList &channels) {
    if (a.size() != channels.size()) throw InvalidInput("beamformer count differs from channel count");
    for (std::size_t k = 0; k < a.size(); ++k)
        if (channels[k].cols() != a[k].size()) throw InvalidInput("a_k length differs from Nt");
}

void check_receiver(const CVec &x, const CMatList &channels) {
    for (const auto &h : channels)
        if (h.rows() != x.size()) throw InvalidInput("receive beamformer length differs from Nr");
}

// |f^H H_k a_k|^2 for all k.
std::vector<double> received_powers(const CVec &f, const CVecList &a, const CMatList &channels) {
    std::vector<double> p(a.size());
    for (std::size_t k = 0; k < a.size(); ++k) p[k] = std::norm(f.dot(channels[k] * a[k]));
    return p;
}

} // namespace

void BeamformerState::validate(const SystemConfig &cfg) const {
    if (b.size() != Eigen::Index(cfg.Nr) || f.size() != Eigen::Index(cfg.Nr))
        throw InvalidInput("receive beamformer length differs from Nr");
    if (a.size() != cfg.K) throw InvalidInput("transmit beamformer count differs from K");
    for (const auto &ak : a)
        if (ak.size() != Eigen::Index(cfg.Nt)) throw InvalidInput("a_k length differs from Nt");
    if (v.size() != Eigen::Index(cfg.M)) throw InvalidInput("phase vector length differs from M");
}

double mse_perfect(const CVec &b, const CVecList &a, const CMatList &channels, double sigma2_n) {
    check_lists(a, channels);
    check_receiver(b, channels);
    double mse = sigma2_n * b.squaredNorm();
    for (std::size_t k = 0; k < a.size(); ++k) mse += std::norm(b.dot(channels[k] * a[k]) - 1.0);
    return mse;
}

double sinr_perfect(const CVec &f, const CVecList &a, const CMatList &channels, double sigma2_n, std::size_t k) {
    check_lists(a, channels);
    check_receiver(f, channels);
    if (k >= a.size()) throw InvalidInput("device index out of range");
    auto p = received_powers(f, a, channels);
    double den = sigma2_n * f.squaredNorm();
    for (std::size_t j = k + 1; j < a.size(); ++j) den += p[j];
    if (den == 0.0) {
        if (p[k] == 0.0 && f.squaredNorm() == 0.0 && sigma2_n > 0.0) return 0.0;
        throw DegenerateInput("zero SINR denominator");
    }
    return p[k] / den;
}

RVec power_gaps(const CVec &f, const CVecList &a, const CMatList &channels) {
    check_lists(a, channels);
    check_receiver(f, channels);
    const std::size_t K = a.size();
    if (K <= 1) return RVec(0);
    auto p = received_powers(f, a, channels);
    RVec gaps(Eigen::Index(K - 1));
    for (std::size_t k = 0; k + 1 < K; ++k) {
        double tail = 0.0;
        for (std::size_t j = k + 1; j < K; ++j) tail += p[j];
        gaps[Eigen::Index(k)] = p[k] - tail;
    }
    return gaps;
}

CMat interference_matrix(const CVec &a_k, const channel::ChannelRealization &est, const channel::ErrorModel &model,
                         std::size_t k) {
    if (k >= est.K() || k >= model.sigma2_d.size()) throw InvalidInput("device index out of range");
    const CMat &hr = est.h_ris[k];
    if (hr.cols() != a_k.size()) throw InvalidInput("a_k length differs from Nt");
    const double M = double(est.g.rows());
    const double an = a_k.squaredNorm();
    const double sd = model.sigma2_d[k], sr = model.sigma2_r[k], sg = model.sigma2_g;
    const double diag = sd * an + sg * (hr * a_k).squaredNorm() + M * sr * sg * an;
    CMat J = (sr * an) * (est.g.adjoint() * est.g);
    J.diagonal().array() += diag;
    return J;
}

CMat interference_matrix(const CVec &a_k, const channel::ChannelEstimate &estimate, std::size_t k) {
    return interference_matrix(a_k, estimate.est, estimate.error_model, k);
}

double mse_imperfect(const CVec &b, const CVecList &a, const channel::ChannelEstimate &estimate,
                     const CMatList &hatted, double sigma2_n) {
    double mse = mse_perfect(b, a, hatted, sigma2_n);
    for (std::size_t k = 0; k < a.size(); ++k) mse += b.dot(interference_matrix(a[k], estimate, k) * b).real();
    return mse;
}

double mse_imperfect(const CVec &b, const CVecList &a, const channel::ChannelEstimate &estimate, const RVec &phases,
                     double sigma2_n) {
    return mse_imperfect(b, a, estimate, channel::effective_channel(estimate.est, phases), sigma2_n);
}

double sinr_imperfect_denominator(const CVec &f, const CVecList &a, const channel::ChannelEstimate &estimate,
                                  const CMatList &hatted, double sigma2_n, std::size_t k) {
    check_lists(a, hatted);
    check_receiver(f, hatted);
    if (k >= a.size()) throw InvalidInput("device index out of range");
    auto p = received_powers(f, a, hatted);
    double den = sigma2_n * f.squaredNorm();
    for (std::size_t j = k + 1; j < a.size(); ++j) den += p[j];
    for (std::size_t j = 0; j < a.size(); ++j) den += f.dot(interference_matrix(a[j], estimate, j) * f).real();
    return den;
}

double sinr_imperfect(const CVec &f, const CVecList &a, const channel::ChannelEstimate &estimate,
                      const CMatList &hatted, double sigma2_n, std::size_t k) {
    const double den = sinr_imperfect_denominator(f, a, estimate, hatted, sigma2_n, k);
    const double num = std::norm(f.dot(hatted[k] * a[k]));
    if (den == 0.0) {
        if (num == 0.0 && f.squaredNorm() == 0.0 && sigma2_n > 0.0) return 0.0;
        throw DegenerateInput("zero SINR denominator");
    }
    return num / den;
}

double sinr_imperfect(const CVec &f, const CVecList &a, const channel::ChannelEstimate &estimate, const RVec &phases,
                      double sigma2_n, std::size_t k) {
    return sinr_imperfect(f, a, estimate, channel::effective_channel(estimate.est, phases), sigma2_n, k);
}

std::vector<std::size_t> order_devices(const CMatList &channels) {
    std::vector<double> norms(channels.size());
    for (std::size_t k = 0; k < channels.size(); ++k) norms[k] = channels[k].squaredNorm();
    std::vector<std::size_t> order(channels.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t i, std::size_t j) { return norms[i] > norms[j]; });
    return order;
}

} // namespace airfl::metrics
