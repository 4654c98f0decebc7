#pragma once

#include <cstdint>

#include "ddl/encoder.hpp"

namespace ddl {

/// SGD with momentum and weight decay:
///   buf   <- mu * buf + (grad + wd * param)
///   param <- param - lr * buf
/// Head columns are re-normalized after every step.
struct OptimizerState {
    std::vector<AffineLayer> layer_momentum;
    Matrix head_momentum;
    double learning_rate = 1e-3;
    double momentum = 0.9;
    double weight_decay = 5e-4;
    std::uint64_t iteration = 0;

    static OptimizerState for_net(const EncoderNet& net, double lr, double mu, double wd);
};

/// One update over every parameter in the net. Throws std::runtime_error
/// with a location diagnostic when any gradient entry is non-finite.
void sgd_step(EncoderNet& net, const ParamGrads& grads, OptimizerState& state);

} // namespace ddl
