// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>

#include "json.hpp"

#include "airfl/airflsim.hpp"
#include "airfl/optimizer.hpp"
#include "airfl/oracles.hpp"

// Experiment runner behind the `airfl` binary: config parsing, seeded runs, sweeps,
// oracle verification and federated simulation, with CSV + JSON output.
namespace airfl::exp {

using metrics::BeamformerState;

enum class SweepAxis { none, receive_antennas, nmse, gamma_min, ris_elements };

std::string to_string(SweepAxis a);
SweepAxis parse_axis(const std::string &s);

struct ExperimentConfig {
    SystemConfig system = SystemConfig::desk();
    channel::SystemGeometry geometry;
    bool fixed_positions = false; // device_positions given; otherwise drawn per seed
    bool rayleigh = false;        // Rayleigh device-BS links
    Regime regime = Regime::perfect;
    double iota = 0.0;
    std::vector<std::uint64_t> seeds{1};
    SweepAxis axis = SweepAxis::none;
    std::vector<double> grid;
    int workers = 1;
    // flsim
    int rounds = 50;
    int redraws = 0; // flsim: redraw an infeasible round's channels this many times before falling back
    std::string flsim_mode = "both"; // ideal | optimized | both
    // verify
    std::size_t verify_draws = 100000;
    std::size_t verify_instances = 10;

    nlohmann::json raw = nlohmann::json::object(); // the document as written

    nlohmann::json echo() const; // raw and converted values
    void validate() const;
};

// Unknown keys are rejected. Powers are written in dB/dBm and converted here, once.
ExperimentConfig parse_config(const nlohmann::json &doc, const std::string &profile = "desk");
ExperimentConfig load_config(const std::string &path, const std::string &profile = "desk");

// Applies one sweep value to a copy of the config.
ExperimentConfig at_grid_point(const ExperimentConfig &cfg, double value);

struct ResultRow {
    std::uint64_t seed = 0;
    double sweep_value = 0.0;
    std::string status; // ok | infeasible | error | summary
    Regime regime = Regime::perfect;
    double iota = 0.0;
    double mse = 0.0, initial_mse = 0.0;
    double min_sinr = 0.0, min_gap = 0.0;
    int iterations = 0;
    bool converged = false;
    double wall_ms = 0.0;           // timing file only, so the main outputs stay reproducible
    double nonrobust_min_sinr = 0.0; // imperfect regime: the perfect-CSI design under the imperfect metric
    int count = 1;                  // runs averaged (summary rows)
    std::string detail;
};

struct Report {
    std::vector<std::string> columns;
    std::vector<std::vector<std::string>> rows;
    nlohmann::json sidecar = nlohmann::json::object();
    std::vector<std::vector<std::string>> timing; // seed, sweep value, wall ms
    int exit_code = 0;
};

// One seed at one grid point. Infeasible instances give a status row; other failures an error row.
struct SingleRun {
    ResultRow row;
    nlohmann::json trace;
    BeamformerState state;
};
SingleRun run_single(const ExperimentConfig &cfg, std::uint64_t seed, double sweep_value);

// Rows sorted by (sweep value, seed); summary rows follow each grid point.
std::vector<ResultRow> run_rows(const ExperimentConfig &cfg, bool sweep, nlohmann::json *traces = nullptr);
std::vector<ResultRow> summarize(const std::vector<ResultRow> &rows);

const std::vector<std::string> &result_columns();
std::vector<std::string> format_row(const ResultRow &r, SweepAxis axis);

Report cmd_optimize(const ExperimentConfig &cfg);
Report cmd_sweep(const ExperimentConfig &cfg);
Report cmd_verify(const ExperimentConfig &cfg, const oracle::JFunction &interference = {});
Report cmd_flsim(const ExperimentConfig &cfg);

// CSV at path; sidecar at path with a .json extension; wall times at <stem>.timing.csv.
void write_report(const Report &report, const std::string &path);

std::string format_number(double x);

} // namespace airfl::exp
