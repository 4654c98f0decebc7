#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ddl/tensor.hpp"

namespace ddl {

enum class Activation { Tanh, Identity };

std::string activation_name(Activation a);
Activation parse_activation(const std::string& name);

struct AffineLayer {
    Matrix weight; // out x in
    Vector bias;   // out
};

/// Small feed-forward embedding network: affine stack with a smooth
/// nonlinearity between layers, unit-normalized output rows, and a
/// unit-column classification head for the angular-margin term.
struct EncoderNet {
    std::vector<AffineLayer> layers;
    Matrix head; // embed_dim x classes, columns unit-norm
    Activation activation = Activation::Tanh;

    std::size_t input_dim() const { return layers.front().weight.cols(); }
    std::size_t embed_dim() const { return layers.back().weight.rows(); }
    std::size_t num_classes() const { return head.cols(); }

    void renormalize_head();
    void validate_shapes() const; // layer shapes must chain; throws otherwise

    /// dims = {input, hidden..., embed}; Xavier-scaled gaussian weights,
    /// zero biases, unit-norm gaussian head columns.
    static EncoderNet random(const std::vector<std::size_t>& dims, std::size_t classes,
                             std::uint64_t seed, Activation act = Activation::Tanh);
};

/// Everything the backward pass needs, plus fingerprints so a cache built
/// for one (batch, parameters) pair cannot silently be replayed against
/// another.
struct ForwardCache {
    std::vector<Matrix> activations; // activations[0] = input, then per hidden layer
    Matrix prenorm;                  // final affine output, before row normalization
    Vector prenorm_norms;            // per-row norms of prenorm
    Matrix embeddings;               // unit-norm rows
    std::uint64_t batch_fingerprint = 0;
    std::uint64_t param_fingerprint = 0;
};

std::uint64_t fingerprint_params(const EncoderNet& net);

/// Forward pass; every output row is unit-norm. Throws on shape mismatch and
/// on degenerate (near-zero) pre-normalization rows.
ForwardCache encoder_forward(const EncoderNet& net, const Matrix& batch);

struct ParamGrads {
    std::vector<AffineLayer> layers; // same shapes as net.layers
    Matrix head;                     // same shape as net.head

    static ParamGrads zeros_like(const EncoderNet& net);
};

/// Backprop upstream embedding gradients through the row-normalization
/// Jacobian (I - e e^T)/||z|| and the affine stack. Throws when the cache
/// does not match the given net or the gradient shape.
ParamGrads encoder_backward(const EncoderNet& net, const ForwardCache& cache,
                            const Matrix& embedding_grads);

} // namespace ddl
