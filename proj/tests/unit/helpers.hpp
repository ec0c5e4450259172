#pragma once

#include <vector>

#include "lab/linalg.hpp"
#include "lab/rng.hpp"

namespace lab::testing {

inline num::Matrix gaussian(num::Index rows, num::Index cols, std::uint64_t seed) {
    SplitMix64 rng(seed);
    num::Matrix m(rows, cols);
    for (num::Index r = 0; r < rows; ++r) {
        for (num::Index c = 0; c < cols; ++c) m(r, c) = rng.normal();
    }
    return m;
}

inline std::vector<double> column(const num::Matrix& m, num::Index c) {
    std::vector<double> out(static_cast<std::size_t>(m.rows()));
    for (num::Index r = 0; r < m.rows(); ++r) out[static_cast<std::size_t>(r)] = m(r, c);
    return out;
}

}  // namespace lab::testing
