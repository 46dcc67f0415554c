// SPDX-License-Identifier: Apache-2.0
#include "airfl/channel.hpp"

#include <random>

namespace airfl::channel {

namespace {

bool finite3(const Point &p) {
    return std::isfinite(p[0]) && std::isfinite(p[1]) && std::isfinite(p[2]);
}

double distance(const Point &a, const Point &b) {
    double dx = a[0] - b[0], dy = a[1] - b[1], dz = a[2] - b[2];
    return std::sqrt(dx * dx + dy * dy + dz * dz);
}

// Half-wavelength ULA along the x axis; cos_psi is the direction cosine to the far end.
CVec steering(std::size_t n, const Point &from, const Point &to) {
    double d = distance(from, to);
    double cos_psi = d > 0.0 ? (to[0] - from[0]) / d : 0.0;
    CVec s(static_cast<Eigen::Index>(n));
    for (std::size_t i = 0; i < n; ++i) s[static_cast<Eigen::Index>(i)] = std::polar(1.0, kPi * double(i) * cos_psi);
    return s;
}

CMat gaussian(Eigen::Index rows, Eigen::Index cols, double variance, std::mt19937_64 &rng) {
    std::normal_distribution<double> nd(0.0, std::sqrt(variance / 2.0));
    CMat m(rows, cols);
    for (Eigen::Index j = 0; j < cols; ++j)
        for (Eigen::Index i = 0; i < rows; ++i) {
            double re = nd(rng);
            double im = nd(rng);
            m(i, j) = cd(re, im);
        }
    return m;
}

// rx x tx link between two nodes.
CMat link(std::size_t n_rx, const Point &rx, std::size_t n_tx, const Point &tx, double c0, double nu,
          double kappa, std::mt19937_64 &rng) {
    const double pl = pathloss(c0, distance(rx, tx), nu);
    CMat nlos = gaussian(Eigen::Index(n_rx), Eigen::Index(n_tx), 1.0, rng);
    if (kappa == 0.0) return std::sqrt(pl) * nlos;
    CMat los = steering(n_rx, rx, tx) * steering(n_tx, tx, rx).adjoint();
    return std::sqrt(pl) * (std::sqrt(kappa / (kappa + 1.0)) * los + std::sqrt(1.0 / (kappa + 1.0)) * nlos);
}

double mean_entry_power(const CMat &m) {
    return m.size() == 0 ? 0.0 : m.squaredNorm() / double(m.size());
}

bool all_finite(const CMat &m) { return m.allFinite(); }

} // namespace

void SystemGeometry::validate(std::size_t K) const {
    if (!finite3(bs_position) || !finite3(ris_position)) throw InvalidInput("non-finite node position");
    for (const auto &p : device_positions)
        if (!finite3(p)) throw InvalidInput("non-finite device position");
    if (device_positions.size() != K) throw InvalidInput("device count differs from K");
    if (!(nu_db > 0 && nu_dr > 0 && nu_rb > 0)) throw InvalidInput("path-loss exponents must be > 0");
    if (!(rician_db >= 0 && rician_dr >= 0 && rician_rb >= 0)) throw InvalidInput("Rician factors must be >= 0");
    if (!(std::isfinite(c0) && c0 > 0)) throw InvalidInput("c0 must be positive");
}

void ChannelRealization::validate(const SystemConfig &cfg) const {
    if (h_direct.size() != cfg.K || h_ris.size() != cfg.K) throw InvalidInput("channel list length differs from K");
    const auto Nr = Eigen::Index(cfg.Nr), Nt = Eigen::Index(cfg.Nt), M = Eigen::Index(cfg.M);
    for (std::size_t k = 0; k < cfg.K; ++k) {
        if (h_direct[k].rows() != Nr || h_direct[k].cols() != Nt) throw InvalidInput("H_d shape mismatch");
        if (h_ris[k].rows() != M || h_ris[k].cols() != Nt) throw InvalidInput("H_r shape mismatch");
        if (!all_finite(h_direct[k]) || !all_finite(h_ris[k])) throw InvalidInput("non-finite channel entry");
    }
    if (g.rows() != M || g.cols() != Nr) throw InvalidInput("G shape mismatch");
    if (!all_finite(g)) throw InvalidInput("non-finite channel entry");
}

ErrorModel ErrorModel::zero(std::size_t K) {
    ErrorModel m;
    m.sigma2_d.assign(K, 0.0);
    m.sigma2_r.assign(K, 0.0);
    return m;
}

bool ErrorModel::is_zero() const {
    for (double s : sigma2_d)
        if (s != 0.0) return false;
    for (double s : sigma2_r)
        if (s != 0.0) return false;
    return sigma2_g == 0.0;
}

void ErrorModel::validate() const {
    if (sigma2_d.size() != sigma2_r.size()) throw InvalidInput("error model lists differ in length");
    for (double s : sigma2_d)
        if (!(s >= 0.0)) throw InvalidInput("negative error variance");
    for (double s : sigma2_r)
        if (!(s >= 0.0)) throw InvalidInput("negative error variance");
    if (!(sigma2_g >= 0.0)) throw InvalidInput("negative error variance");
}

std::vector<Point> sample_device_positions(std::size_t K, std::uint64_t seed, double side) {
    std::mt19937_64 rng(seed ^ 0x9e3779b97f4a7c15ULL);
    std::uniform_real_distribution<double> u(0.0, side);
    std::vector<Point> out(K);
    for (auto &p : out) {
        p[0] = u(rng);
        p[1] = u(rng);
        p[2] = 0.0;
    }
    return out;
}

double pathloss(double c0, double distance, double exponent) { return c0 * std::pow(distance, -exponent); }

ChannelRealization sample_channels(const SystemGeometry &geometry, const SystemConfig &config,
                                   std::uint64_t seed) {
    geometry.validate(config.K);
    if (config.K < 1 || config.Nt < 1 || config.Nr < 1) throw InvalidInput("dimensions must be positive");
    std::mt19937_64 rng(seed);
    ChannelRealization r;
    const auto &g = geometry;
    for (std::size_t k = 0; k < config.K; ++k) {
        const Point &dev = g.device_positions[k];
        r.h_direct.push_back(link(config.Nr, g.bs_position, config.Nt, dev, g.c0, g.nu_db, g.rician_db, rng));
        r.h_ris.push_back(link(config.M, g.ris_position, config.Nt, dev, g.c0, g.nu_dr, g.rician_dr, rng));
    }
    // Physical RIS->BS link is Nr x M and equals G^H.
    r.g = link(config.Nr, g.bs_position, config.M, g.ris_position, g.c0, g.nu_rb, g.rician_rb, rng).adjoint();
    return r;
}

CMatList effective_channel(const ChannelRealization &r, const RVec &phases) {
    const Eigen::Index M = r.g.rows();
    if (phases.size() != M) throw InvalidInput("phase vector length differs from M");
    if (!phases.allFinite()) throw InvalidInput("non-finite phase");
    CVec theta(M);
    for (Eigen::Index m = 0; m < M; ++m) theta[m] = std::polar(1.0, phases[m]);
    CMat gh_theta = r.g.adjoint() * theta.asDiagonal();
    CMatList out;
    out.reserve(r.K());
    for (std::size_t k = 0; k < r.K(); ++k) {
        if (r.h_ris[k].rows() != M || r.h_ris[k].cols() != r.h_direct[k].cols() ||
            r.g.cols() != r.h_direct[k].rows())
            throw InvalidInput("channel shape mismatch");
        out.push_back(r.h_direct[k] + gh_theta * r.h_ris[k]);
    }
    return out;
}

ChannelEstimate sample_estimate(const ChannelRealization &truth, const ErrorModel &model, std::uint64_t seed) {
    model.validate();
    if (model.sigma2_d.size() != truth.K()) throw InvalidInput("error model length differs from K");
    std::mt19937_64 rng(seed);
    ChannelEstimate e;
    e.error_model = model;
    for (std::size_t k = 0; k < truth.K(); ++k) {
        const CMat &hd = truth.h_direct[k], &hr = truth.h_ris[k];
        e.errors.h_direct.push_back(model.sigma2_d[k] > 0 ? gaussian(hd.rows(), hd.cols(), model.sigma2_d[k], rng)
                                                          : CMat::Zero(hd.rows(), hd.cols()));
        e.errors.h_ris.push_back(model.sigma2_r[k] > 0 ? gaussian(hr.rows(), hr.cols(), model.sigma2_r[k], rng)
                                                       : CMat::Zero(hr.rows(), hr.cols()));
    }
    e.errors.g = model.sigma2_g > 0 ? gaussian(truth.g.rows(), truth.g.cols(), model.sigma2_g, rng)
                                    : CMat::Zero(truth.g.rows(), truth.g.cols());
    for (std::size_t k = 0; k < truth.K(); ++k) {
        e.est.h_direct.push_back(truth.h_direct[k] - e.errors.h_direct[k]);
        e.est.h_ris.push_back(truth.h_ris[k] - e.errors.h_ris[k]);
    }
    e.est.g = truth.g - e.errors.g;
    return e;
}

ErrorModel calibrate_error_model(const ChannelRealization &truth, double target_nmse) {
    if (!(target_nmse >= 0.0)) throw InvalidInput("NMSE must be >= 0");
    if (target_nmse >= 1.0) throw UnsupportedRegime("NMSE >= 1 is not supported");
    // With est = truth - err and err independent of truth, E||est||^2 = ||H||^2 + n s p, so
    // NMSE = s / (1 + s) for every link class when each variance is s times its mean entry power.
    const double s = target_nmse / (1.0 - target_nmse);
    ErrorModel m;
    for (std::size_t k = 0; k < truth.K(); ++k) {
        m.sigma2_d.push_back(s * mean_entry_power(truth.h_direct[k]));
        m.sigma2_r.push_back(s * mean_entry_power(truth.h_ris[k]));
    }
    m.sigma2_g = s * mean_entry_power(truth.g);
    return m;
}

ChannelRealization permute(const ChannelRealization &r, const std::vector<std::size_t> &order) {
    ChannelRealization out;
    out.g = r.g;
    for (std::size_t i : order) {
        out.h_direct.push_back(r.h_direct.at(i));
        out.h_ris.push_back(r.h_ris.at(i));
    }
    return out;
}

ErrorModel permute(const ErrorModel &m, const std::vector<std::size_t> &order) {
    ErrorModel out;
    out.sigma2_g = m.sigma2_g;
    for (std::size_t i : order) {
        out.sigma2_d.push_back(m.sigma2_d.at(i));
        out.sigma2_r.push_back(m.sigma2_r.at(i));
    }
    return out;
}

} // namespace airfl::channel
