#pragma once

#include <cmath>
#include <vector>

#include "klite/contrastive.hpp"
#include "support/fixtures.hpp"

namespace klite::testing {

// Direct evaluation of the grouped objective: one log-softmax per (anchor, positive)
// pair, using long double and no max subtraction.
struct Oracle {
    long double i2t = 0, t2i = 0;
};

inline Oracle grouped_oracle(const Tensor& sim, const std::vector<int>& y, double tau) {
    const std::size_t b = y.size();
    Oracle o;
    for (std::size_t i = 0; i < b; ++i) {
        long double row = 0, col = 0;
        for (std::size_t j = 0; j < b; ++j) {
            row += std::exp(static_cast<long double>(tau) * sim(Eigen::Index(i), Eigen::Index(j)));
            col += std::exp(static_cast<long double>(tau) * sim(Eigen::Index(j), Eigen::Index(i)));
        }
        long double si = 0, sj = 0;
        int np = 0;
        for (std::size_t k = 0; k < b; ++k) {
            if (y[k] != y[i]) continue;
            ++np;
            si += std::log(std::exp(static_cast<long double>(tau) * sim(Eigen::Index(i), Eigen::Index(k))) / row);
            sj += std::log(std::exp(static_cast<long double>(tau) * sim(Eigen::Index(k), Eigen::Index(i))) / col);
        }
        o.i2t -= si / np;
        o.t2i -= sj / np;
    }
    return o;
}

// Symmetric InfoNCE: cross-entropy of each row (and column) against its diagonal.
inline double info_nce(const Tensor& sim, double tau) {
    double loss = 0;
    for (Eigen::Index i = 0; i < sim.rows(); ++i) {
        double r = 0, c = 0;
        for (Eigen::Index j = 0; j < sim.cols(); ++j) {
            r += std::exp(tau * sim(i, j));
            c += std::exp(tau * sim(j, i));
        }
        loss += -(tau * sim(i, i) - std::log(r)) - (tau * sim(i, i) - std::log(c));
    }
    return loss;
}

inline Tensor random_unit_rows(Rng& rng, int b, int p) {
    Tensor t(b, p);
    for (int i = 0; i < b; ++i) t.row(i) = normalize(random_vector(rng, p)).transpose();
    return t;
}

}  // namespace klite::testing
