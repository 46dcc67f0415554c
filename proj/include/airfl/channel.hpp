// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>

#include "airfl/common.hpp"
#include "airfl/config.hpp"

namespace airfl::channel {

using Point = std::array<double, 3>;

struct SystemGeometry {
    Point bs_position{0.0, 0.0, 25.0};
    Point ris_position{20.0, 20.0, 20.0};
    std::vector<Point> device_positions;
    double c0 = 1.0; // gain at d0 = 1 m
    double nu_db = 3.2, nu_dr = 2.6, nu_rb = 2.2;
    double rician_db = 2.0, rician_dr = 10.0, rician_rb = 10.0; // 0 -> Rayleigh

    void validate(std::size_t K) const;
};

// H_{d,k}: Nr x Nt, H_{r,k}: M x Nt, G: M x Nr.
struct ChannelRealization {
    CMatList h_direct;
    CMatList h_ris;
    CMat g;

    std::size_t K() const { return h_direct.size(); }
    void validate(const SystemConfig &cfg) const;
};

struct ErrorModel {
    std::vector<double> sigma2_d;
    std::vector<double> sigma2_r;
    double sigma2_g = 0.0;

    static ErrorModel zero(std::size_t K);
    bool is_zero() const;
    void validate() const;
};

struct ChannelEstimate {
    ChannelRealization est;
    ChannelRealization errors; // sampled, oracle use only
    ErrorModel error_model;
};

// Devices uniform over [0, side]^2 at height 0.
std::vector<Point> sample_device_positions(std::size_t K, std::uint64_t seed, double side = 100.0);

double pathloss(double c0, double distance, double exponent);

ChannelRealization sample_channels(const SystemGeometry &geometry, const SystemConfig &config,
                                   std::uint64_t seed);

CMatList effective_channel(const ChannelRealization &realization, const RVec &phases);

ChannelEstimate sample_estimate(const ChannelRealization &truth, const ErrorModel &model,
                                std::uint64_t seed);

ErrorModel calibrate_error_model(const ChannelRealization &truth, double target_nmse);

// Reorders per-device entries; order[i] is the original index decoded i-th.
ChannelRealization permute(const ChannelRealization &r, const std::vector<std::size_t> &order);
ErrorModel permute(const ErrorModel &m, const std::vector<std::size_t> &order);

} // namespace airfl::channel
