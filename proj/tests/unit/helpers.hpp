#pragma once

#include <vector>

#include "mtm/mtm.hpp"

// Reference parameter set used across the tests: a K = 5 seasonal model with
// trend whose fitted shape is well inside the feasible region, plus published
// per-parameter standard deviations for recovery tolerances.

inline mtm::ModelConfig ref_config(int n = 3650) {
    mtm::ModelConfig cfg;
    cfg.K = 5;
    cfg.n = n;
    cfg.T = 365;
    cfg.harmonics = 1;
    cfg.trend = true;
    return cfg;
}

inline mtm::ThetaParams ref_theta(const mtm::ModelConfig& cfg) {
    mtm::ThetaParams th = mtm::ThetaParams::zeros(cfg);
    th.alpha = {-1.3863, -0.4055, 0.4055, 1.3863};
    th.B = {{-0.1, -0.2, -0.15, -0.3}};
    th.D = {{0.2, 0.1, 0.15, 0.3}};
    if (cfg.trend) th.beta = {0.1, 0.1, 0.1, 0.1};
    return th;
}

inline mtm::XiParams ref_xi() {
    mtm::XiParams xi = mtm::XiParams::zeros(5);
    const double rows[4][4] = {{2.8, 2.2, 1.9, 1.0},
                               {1.3, 1.2, 0.9, 0.6},
                               {0.8, 0.8, 0.5, 0.7},
                               {0.5, 0.4, 0.3, 0.3}};
    for (int k = 1; k <= 4; ++k)
        for (int j = 1; j <= 4; ++j) xi(k, j) = rows[k - 1][j - 1];
    return xi;
}

// Empirical standard deviations of the reference-model estimates at
// n = 3650: alpha, B, D, beta blocks then the 16 xi entries row-major.
inline std::vector<double> ref_sds() {
    return {0.1023, 0.0851, 0.0842, 0.1004,   // alpha
            0.0715, 0.0598, 0.0593, 0.0716,   // B
            0.0721, 0.0601, 0.0599, 0.0718,   // D
            0.1758, 0.1470, 0.1461, 0.1745,   // beta
            0.2077, 0.2077, 0.2044, 0.2182,   // xi row 1
            0.1771, 0.1698, 0.1651, 0.1665,   // xi row 2
            0.1777, 0.1675, 0.1639, 0.1550,   // xi row 3
            0.1768, 0.1685, 0.1582, 0.1540};  // xi row 4
}

// Dependence strengths used by the size/power studies: strong/moderate
// positive, independent, and their negated counterparts.
inline mtm::XiParams study_xi(int which) {
    mtm::XiParams xi = mtm::XiParams::zeros(5);
    const double x1[16] = {5.9, 4.0, 2.6, 1.7, 4.7, 3.6, 2.4, 1.7,
                           3.2, 2.2, 1.5, 1.2, 1.8, 1.6, 0.9, 0.6};
    const double x2[16] = {3.9, 2.7, 1.7, 1.3, 2.3, 1.5, 1.0, 0.5,
                           2.1, 1.1, 0.9, 0.7, 1.2, 0.9, 0.6, 0.5};
    for (int i = 0; i < 16; ++i) {
        double v = 0.0;
        switch (which) {
            case 1: v = x1[i]; break;
            case 2: v = x2[i]; break;
            case 3: v = 0.0; break;
            case 4: v = -x2[i]; break;
            case 5: v = -x1[i]; break;
        }
        xi.xi[static_cast<size_t>(i)] = v;
    }
    return xi;
}

// Size/power study mean model: no harmonics, linear trend.
inline mtm::ModelConfig study_config(int n = 1825) {
    mtm::ModelConfig cfg;
    cfg.K = 5;
    cfg.n = n;
    cfg.T = 365;
    cfg.harmonics = 0;
    cfg.trend = true;
    return cfg;
}

inline mtm::ThetaParams study_theta(const mtm::ModelConfig& cfg) {
    mtm::ThetaParams th = mtm::ThetaParams::zeros(cfg);
    th.alpha = {-1.3863, -0.4055, 0.4055, 1.3863};
    if (cfg.trend) th.beta = {0.1, 0.1, 0.1, 0.1};
    return th;
}
