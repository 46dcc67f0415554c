// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <functional>
#include <optional>

#include "airfl/channel.hpp"
#include "airfl/metrics.hpp"

namespace airfl::sim {

using metrics::BeamformerState;

// One common scale for every device: a per-device scale could not be undone from the sum alone.
struct PreprocessState {
    std::vector<double> means;
    double scale = 1.0;
    std::size_t dim = 0;
    bool padded = false; // odd dim, last symbol carries a zero imaginary part
};

struct Preprocessed {
    std::vector<CVec> symbols; // per device, ceil(d/2) entries
    PreprocessState state;
};

Preprocessed preprocess(const std::vector<RVec> &models);

RVec postprocess(const CVec &aggregate, const PreprocessState &state, std::size_t K);

struct SicOutcome {
    std::vector<std::size_t> order;  // decode order, original indices
    std::vector<CVec> decoded;       // by original index; empty if skipped
    std::vector<bool> success;       // model SINR >= gamma_min on the true channels
    std::vector<double> sinr;        // model SINR by original index
    std::vector<double> residual_power; // mean |r|^2 after each stage, decode order
    bool decode_failure = false;
};

struct AirCompOptions {
    // Channels the receiver believes (hatted under imperfect CSI); truth when absent.
    std::optional<channel::ChannelRealization> decoder;
    // Hard decisions for SIC; without one, SIC subtracts the transmitted symbol (genie-aided).
    std::vector<cd> constellation;
    double gamma_min = 0.0;
};

struct AirCompResult {
    CVec aggregate; // b^H y per slot
    SicOutcome sic;
};

AirCompResult aircomp_round(const std::vector<CVec> &symbols, const BeamformerState &state,
                            const channel::ChannelRealization &truth, double sigma2_n, std::uint64_t seed,
                            const AirCompOptions &options = {});

// ---- federated rounds on a synthetic regression task ----

struct RoundLink {
    BeamformerState state; // device-indexed
    channel::ChannelRealization truth;
    AirCompOptions options;
    bool flagged = false; // e.g. the round fell back to an unoptimised state
};

// nullopt means ideal aggregation (exact average).
using LinkProvider = std::function<std::optional<RoundLink>(int round)>;

struct FederatedTask {
    std::size_t dim = 200;
    std::size_t samples_per_device = 500;
    std::size_t test_samples = 2000;
    int local_steps = 5;
    double rate = 0.05;
    double noise_std = 0.5;
};

struct FederatedTrace {
    double initial_loss = 0.0;
    double centralized_loss = 0.0; // pooled least squares on the held-out set
    std::vector<double> loss;      // held-out MSE after each round
    std::vector<double> aggregation_mse; // mean |s_hat - sum s|^2 per symbol; 0 when ideal
    std::vector<int> sic_successes;
    std::vector<bool> flagged;
    RVec model;
};

FederatedTrace run_federated(std::uint64_t task_seed, int rounds, std::size_t K, const LinkProvider &links,
                             double sigma2_n, const FederatedTask &task = {});

} // namespace airfl::sim
