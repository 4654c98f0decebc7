#include "ddl/encoder.hpp"

#include <cmath>
#include <stdexcept>

#include "ddl/rng.hpp"

namespace ddl {

std::string activation_name(Activation a) {
    switch (a) {
        case Activation::Tanh: return "tanh";
        case Activation::Identity: return "identity";
    }
    throw std::logic_error("activation_name: unknown activation");
}

Activation parse_activation(const std::string& name) {
    if (name == "tanh") return Activation::Tanh;
    if (name == "identity") return Activation::Identity;
    throw std::invalid_argument("unknown activation: " + name);
}

void EncoderNet::renormalize_head() {
    for (std::size_t c = 0; c < head.cols(); ++c) {
        double n = 0.0;
        for (std::size_t r = 0; r < head.rows(); ++r) n += head(r, c) * head(r, c);
        n = std::sqrt(n);
        if (n <= kNormEpsilon) throw std::domain_error("renormalize_head: degenerate head column");
        for (std::size_t r = 0; r < head.rows(); ++r) head(r, c) /= n;
    }
}

void EncoderNet::validate_shapes() const {
    if (layers.empty()) throw std::invalid_argument("EncoderNet: at least one layer required");
    for (std::size_t l = 0; l < layers.size(); ++l) {
        if (layers[l].bias.size() != layers[l].weight.rows())
            throw std::invalid_argument("EncoderNet: bias/weight shape mismatch");
        if (l > 0 && layers[l].weight.cols() != layers[l - 1].weight.rows())
            throw std::invalid_argument("EncoderNet: layer shapes do not chain");
    }
    if (head.rows() != layers.back().weight.rows())
        throw std::invalid_argument("EncoderNet: head rows must equal embedding dim");
}

EncoderNet EncoderNet::random(const std::vector<std::size_t>& dims, std::size_t classes,
                              std::uint64_t seed, Activation act) {
    if (dims.size() < 2) throw std::invalid_argument("EncoderNet::random: need input and output dims");
    if (classes == 0) throw std::invalid_argument("EncoderNet::random: classes must be positive");
    Rng rng(seed);
    EncoderNet net;
    net.activation = act;
    for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
        AffineLayer layer;
        layer.weight = Matrix(dims[l + 1], dims[l]);
        const double scale = 1.0 / std::sqrt(static_cast<double>(dims[l]));
        for (std::size_t r = 0; r < layer.weight.rows(); ++r)
            for (std::size_t c = 0; c < layer.weight.cols(); ++c)
                layer.weight(r, c) = scale * rng.gaussian();
        layer.bias.assign(dims[l + 1], 0.0);
        net.layers.push_back(std::move(layer));
    }
    net.head = Matrix(dims.back(), classes);
    for (std::size_t r = 0; r < net.head.rows(); ++r)
        for (std::size_t c = 0; c < net.head.cols(); ++c)
            net.head(r, c) = rng.gaussian();
    net.renormalize_head();
    net.validate_shapes();
    return net;
}

namespace {

std::uint64_t fingerprint_matrix(const Matrix& m, std::uint64_t h) {
    h = fnv1a_bytes(m.data(), m.size() * sizeof(double), h);
    const std::size_t shape[2] = {m.rows(), m.cols()};
    return fnv1a_bytes(shape, sizeof(shape), h);
}

double apply_activation(Activation act, double x) {
    return act == Activation::Tanh ? std::tanh(x) : x;
}

// derivative expressed through the activation output
double activation_grad(Activation act, double a) {
    return act == Activation::Tanh ? 1.0 - a * a : 1.0;
}

} // namespace

std::uint64_t fingerprint_params(const EncoderNet& net) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (const auto& layer : net.layers) {
        h = fingerprint_matrix(layer.weight, h);
        h = fnv1a_bytes(layer.bias.data(), layer.bias.size() * sizeof(double), h);
    }
    h = fingerprint_matrix(net.head, h);
    const auto act = static_cast<std::uint64_t>(net.activation);
    return fnv1a_bytes(&act, sizeof(act), h);
}

ForwardCache encoder_forward(const EncoderNet& net, const Matrix& batch) {
    net.validate_shapes();
    if (batch.cols() != net.input_dim())
        throw std::invalid_argument("encoder_forward: batch column count does not match input dim");

    ForwardCache cache;
    cache.batch_fingerprint = fnv1a_bytes(batch.data(), batch.size() * sizeof(double));
    cache.param_fingerprint = fingerprint_params(net);
    cache.activations.push_back(batch);

    const std::size_t n = batch.rows();
    Matrix current = batch;
    for (std::size_t l = 0; l < net.layers.size(); ++l) {
        const AffineLayer& layer = net.layers[l];
        Matrix z = matmul(current, false, layer.weight, true);
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < z.cols(); ++j) z(i, j) += layer.bias[j];

        if (l + 1 < net.layers.size()) {
            for (std::size_t i = 0; i < n; ++i)
                for (std::size_t j = 0; j < z.cols(); ++j)
                    z(i, j) = apply_activation(net.activation, z(i, j));
            cache.activations.push_back(z);
            current = std::move(z);
        } else {
            cache.prenorm = std::move(z);
        }
    }

    cache.prenorm_norms.resize(n);
    cache.embeddings = Matrix(n, net.embed_dim());
    for (std::size_t i = 0; i < n; ++i) {
        const double rn = norm(cache.prenorm.row(i));
        if (rn <= kNormEpsilon)
            throw std::domain_error("encoder_forward: degenerate pre-normalization row");
        cache.prenorm_norms[i] = rn;
        for (std::size_t j = 0; j < net.embed_dim(); ++j)
            cache.embeddings(i, j) = cache.prenorm(i, j) / rn;
    }
    if (!all_finite(cache.embeddings))
        throw std::domain_error("encoder_forward: non-finite embedding");
    return cache;
}

ParamGrads ParamGrads::zeros_like(const EncoderNet& net) {
    ParamGrads g;
    for (const auto& layer : net.layers) {
        AffineLayer zero;
        zero.weight = Matrix(layer.weight.rows(), layer.weight.cols());
        zero.bias.assign(layer.bias.size(), 0.0);
        g.layers.push_back(std::move(zero));
    }
    g.head = Matrix(net.head.rows(), net.head.cols());
    return g;
}

ParamGrads encoder_backward(const EncoderNet& net, const ForwardCache& cache,
                            const Matrix& embedding_grads) {
    if (cache.param_fingerprint != fingerprint_params(net))
        throw std::runtime_error("encoder_backward: stale cache (parameter fingerprint mismatch)");
    if (!embedding_grads.same_shape(cache.embeddings))
        throw std::invalid_argument("encoder_backward: gradient shape does not match cached embeddings");

    const std::size_t n = cache.embeddings.rows();
    const std::size_t ed = cache.embeddings.cols();

    // through the row normalization: g_z = (g - (g.e) e) / ||z||
    Matrix grad(n, ed);
    for (std::size_t i = 0; i < n; ++i) {
        const auto e = cache.embeddings.row(i);
        const auto g = embedding_grads.row(i);
        const double ge = dot(g, e);
        const double rn = cache.prenorm_norms[i];
        for (std::size_t j = 0; j < ed; ++j) grad(i, j) = (g[j] - ge * e[j]) / rn;
    }

    ParamGrads out = ParamGrads::zeros_like(net);
    for (std::size_t l = net.layers.size(); l-- > 0;) {
        const Matrix& input = cache.activations[l];
        out.layers[l].weight = matmul(grad, true, input, false);
        for (std::size_t j = 0; j < grad.cols(); ++j) {
            double acc = 0.0;
            for (std::size_t i = 0; i < n; ++i) acc += grad(i, j);
            out.layers[l].bias[j] = acc;
        }
        if (l == 0) break;
        Matrix upstream = matmul(grad, false, net.layers[l].weight, false);
        const Matrix& act = cache.activations[l]; // activation output of layer l-1
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < upstream.cols(); ++j)
                upstream(i, j) *= activation_grad(net.activation, act(i, j));
        grad = std::move(upstream);
    }
    return out;
}

} // namespace ddl
