// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <complex>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace airfl {

using cd = std::complex<double>;
using CMat = Eigen::MatrixXcd;
using CVec = Eigen::VectorXcd;
using RMat = Eigen::MatrixXd;
using RVec = Eigen::VectorXd;
using CMatList = std::vector<CMat>;
using CVecList = std::vector<CVec>;

constexpr double kPi = 3.14159265358979323846;
constexpr double kTwoPi = 2.0 * kPi;

// Error taxonomy shared by all modules.
struct InvalidInput : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};
struct DegenerateInput : std::domain_error {
    using std::domain_error::domain_error;
};
struct UnsupportedRegime : std::domain_error {
    using std::domain_error::domain_error;
};
struct InfeasibleInstance : std::runtime_error {
    InfeasibleInstance(const std::string &what, std::string family_)
        : std::runtime_error(what), family(std::move(family_)) {}
    std::string family; // "sinr", "gap", "power" or "sdp"
};

enum class Regime { perfect, imperfect };

inline const char *to_string(Regime r) { return r == Regime::perfect ? "perfect" : "imperfect"; }

inline double db_to_linear(double db) { return std::pow(10.0, db / 10.0); }

// Wraps phases into [0, 2pi).
inline double wrap_phase(double x) {
    double r = std::fmod(x, kTwoPi);
    if (r < 0.0) r += kTwoPi;
    if (r >= kTwoPi) r = 0.0;
    return r;
}

} // namespace airfl
