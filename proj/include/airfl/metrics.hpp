// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "airfl/channel.hpp"
#include "airfl/common.hpp"
#include "airfl/config.hpp"

// Device lists are taken in SIC decode order; reordering is the caller's job.
// Device indices are zero-based.
namespace airfl::metrics {

struct BeamformerState {
    CVec b;      // aggregation beamformer, Nr
    CVec f;      // recovery beamformer, Nr
    CVecList a;  // transmit beamformers, K x Nt
    RVec v;      // RIS phases in [0, 2pi), M

    void validate(const SystemConfig &cfg) const;
};

double mse_perfect(const CVec &b, const CVecList &a, const CMatList &channels, double sigma2_n);

double sinr_perfect(const CVec &f, const CVecList &a, const CMatList &channels, double sigma2_n, std::size_t k);

RVec power_gaps(const CVec &f, const CVecList &a, const CMatList &channels);

CMat interference_matrix(const CVec &a_k, const channel::ChannelEstimate &estimate, std::size_t k);

// Same as above but from the hatted realisation and error model directly.
CMat interference_matrix(const CVec &a_k, const channel::ChannelRealization &est,
                         const channel::ErrorModel &model, std::size_t k);

// hatted_channels are effective_channel(estimate.est, v).
double mse_imperfect(const CVec &b, const CVecList &a, const channel::ChannelEstimate &estimate,
                     const CMatList &hatted_channels, double sigma2_n);
double mse_imperfect(const CVec &b, const CVecList &a, const channel::ChannelEstimate &estimate,
                     const RVec &phases, double sigma2_n);

double sinr_imperfect(const CVec &f, const CVecList &a, const channel::ChannelEstimate &estimate,
                      const CMatList &hatted_channels, double sigma2_n, std::size_t k);
double sinr_imperfect(const CVec &f, const CVecList &a, const channel::ChannelEstimate &estimate,
                      const RVec &phases, double sigma2_n, std::size_t k);

// Interference-plus-noise power in the denominator of sinr_imperfect.
double sinr_imperfect_denominator(const CVec &f, const CVecList &a, const channel::ChannelEstimate &estimate,
                                  const CMatList &hatted_channels, double sigma2_n, std::size_t k);

// Original indices sorted by ||H_k||_F^2 descending, ties by index ascending.
std::vector<std::size_t> order_devices(const CMatList &channels);

template <class T> std::vector<T> permute(const std::vector<T> &xs, const std::vector<std::size_t> &order) {
    std::vector<T> out;
    out.reserve(order.size());
    for (std::size_t i : order) out.push_back(xs.at(i));
    return out;
}

template <class T>
std::vector<T> unpermute(const std::vector<T> &xs, const std::vector<std::size_t> &order) {
    std::vector<T> out(xs.size());
    for (std::size_t i = 0; i < order.size(); ++i) out.at(order[i]) = xs.at(i);
    return out;
}

} // namespace airfl::metrics
