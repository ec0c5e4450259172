#pragma once

#include <cstdint>

#include "lab/linalg.hpp"

namespace lab::num {

struct TsneOptions {
    double perplexity = 30.0;
    int iterations = 1000;
    /// Non-positive selects max(n / early_exaggeration / 4, 50).
    double learning_rate = 0.0;
    double early_exaggeration = 12.0;
    int exaggeration_iterations = 250;
    std::uint64_t seed = 0;
};

/// Exact t-SNE to two dimensions. Per-point bandwidths are found by binary
/// search on the perplexity; the optimiser uses early exaggeration, momentum
/// 0.5 switching to 0.8 after the exaggeration phase, and per-parameter
/// gains. Requires n >= 10 and perplexity < (n - 1) / 3.
Matrix tsne_2d(const Matrix& x, const TsneOptions& options = {});

}  // namespace lab::num
