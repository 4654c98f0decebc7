#include "ddl/optimizer.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace ddl {

OptimizerState OptimizerState::for_net(const EncoderNet& net, double lr, double mu, double wd) {
    if (lr <= 0.0) throw std::invalid_argument("OptimizerState: learning rate must be positive");
    OptimizerState state;
    state.learning_rate = lr;
    state.momentum = mu;
    state.weight_decay = wd;
    ParamGrads zeros = ParamGrads::zeros_like(net);
    state.layer_momentum = std::move(zeros.layers);
    state.head_momentum = std::move(zeros.head);
    return state;
}

namespace {

void check_finite(std::span<const double> grad, const std::string& where) {
    for (std::size_t i = 0; i < grad.size(); ++i) {
        if (!std::isfinite(grad[i]))
            throw std::runtime_error("sgd_step: non-finite gradient in " + where +
                                     " at index " + std::to_string(i));
    }
}

void update(std::span<double> param, std::span<const double> grad, std::span<double> buf,
            const OptimizerState& state) {
    for (std::size_t i = 0; i < param.size(); ++i) {
        buf[i] = state.momentum * buf[i] + (grad[i] + state.weight_decay * param[i]);
        param[i] -= state.learning_rate * buf[i];
    }
}

std::span<double> whole(Matrix& m) { return {m.data(), m.size()}; }
std::span<const double> whole(const Matrix& m) { return {m.data(), m.size()}; }

} // namespace

void sgd_step(EncoderNet& net, const ParamGrads& grads, OptimizerState& state) {
    if (grads.layers.size() != net.layers.size() || !grads.head.same_shape(net.head))
        throw std::invalid_argument("sgd_step: gradient structure does not match net");

    for (std::size_t l = 0; l < net.layers.size(); ++l) {
        if (!grads.layers[l].weight.same_shape(net.layers[l].weight) ||
            grads.layers[l].bias.size() != net.layers[l].bias.size())
            throw std::invalid_argument("sgd_step: layer gradient shape mismatch");
        const std::string tag = "layer" + std::to_string(l);
        check_finite(whole(grads.layers[l].weight), tag + ".weight");
        check_finite(grads.layers[l].bias, tag + ".bias");
    }
    check_finite(whole(grads.head), "head");

    for (std::size_t l = 0; l < net.layers.size(); ++l) {
        update(whole(net.layers[l].weight), whole(grads.layers[l].weight),
               whole(state.layer_momentum[l].weight), state);
        update(net.layers[l].bias, grads.layers[l].bias, state.layer_momentum[l].bias, state);
    }
    update(whole(net.head), whole(grads.head), whole(state.head_momentum), state);
    net.renormalize_head();
    ++state.iteration;
}

} // namespace ddl
