// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>

#include "airfl/common.hpp"

namespace airfl {

// All power quantities are linear, milliwatt-normalised (x dBm -> 10^(x/10)).
struct SystemConfig {
    std::size_t K = 3, Nt = 2, Nr = 8, M = 16;
    double p_max = db_to_linear(30.0);
    double gamma_min = db_to_linear(26.17);
    double p_gap_perfect = db_to_linear(10.0);
    double p_gap_imperfect = db_to_linear(17.0);
    double sigma2_n = db_to_linear(-80.0);
    double alpha = 1.0;

    int T0 = 30, T1 = 30, T2 = 20, T3 = 20;
    double eps0 = 1e-4, eps1 = 1e-6, eps2 = 1e-5, eps3 = 1e-5;

    double feas_tol = 1e-7, opt_tol = 1e-6;
    int max_iter = 500;

    double p_gap(Regime r) const { return r == Regime::perfect ? p_gap_perfect : p_gap_imperfect; }

    void validate() const {
        if (K < 1 || Nt < 1 || Nr < 1) throw InvalidInput("K, Nt, Nr must be >= 1");
        if (!(p_max > 0 && gamma_min >= 0 && p_gap_perfect >= 0 && p_gap_imperfect >= 0 && sigma2_n >= 0 &&
              alpha > 0))
            throw InvalidInput("powers and thresholds must be positive");
        if (T0 < 0 || T1 < 1 || T2 < 1 || T3 < 1) throw InvalidInput("iteration budgets must be positive");
        if (!(eps0 > 0 && eps1 > 0 && eps2 > 0 && eps3 > 0 && feas_tol > 0 && opt_tol > 0 && max_iter > 0))
            throw InvalidInput("tolerances must be positive");
    }

    static SystemConfig desk() { return SystemConfig{}; }
    static SystemConfig table2() {
        SystemConfig c;
        c.Nr = 16;
        c.M = 40;
        return c;
    }
};

} // namespace airfl
