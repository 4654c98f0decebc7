#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <sstream>

#include "ddl/checkpoint.hpp"
#include "ddl/encoder.hpp"
#include "ddl/optimizer.hpp"
#include "ddl/rng.hpp"
#include "ddl/tensor.hpp"

#include "test_util.hpp"

using namespace ddl;
using namespace ddl::testutil;

TEST_CASE("l2_normalize on a 3-4-5 triangle") {
    const Vector v{3.0, 4.0};
    const Vector unit = l2_normalize(v);
    CHECK(unit[0] == doctest::Approx(0.6).epsilon(1e-12));
    CHECK(unit[1] == doctest::Approx(0.8).epsilon(1e-12));
    CHECK(std::abs(norm(unit) - 1.0) < 1e-12);
}

TEST_CASE("l2_normalize rejects near-zero vectors") {
    const Vector zero(8, 0.0);
    CHECK_THROWS_AS((void)l2_normalize(zero), std::domain_error);
    const Vector tiny(8, 1e-14);
    CHECK_THROWS_AS((void)l2_normalize(tiny), std::domain_error);
}

TEST_CASE("l2_normalize is idempotent") {
    Rng rng(11);
    for (int trial = 0; trial < 50; ++trial) {
        Vector v(5 + rng.uniform_index(10));
        for (double& x : v) x = rng.gaussian() * 3.0;
        if (norm(v) <= 1e-12) continue;
        const Vector once = l2_normalize(v);
        const Vector twice = l2_normalize(once);
        for (std::size_t i = 0; i < v.size(); ++i)
            CHECK(std::abs(once[i] - twice[i]) < 1e-12);
    }
}

TEST_CASE("cosine_similarity endpoints") {
    Rng rng(21);
    const Vector u = random_unit(rng, 16);
    CHECK(cosine_similarity(u, u) == 1.0);

    Vector flipped = u;
    for (double& x : flipped) x = -x;
    CHECK(cosine_similarity(u, flipped) == -1.0);

    Vector e1(4, 0.0), e2(4, 0.0);
    e1[0] = 1.0;
    e2[1] = 1.0;
    CHECK(cosine_similarity(e1, e2) == 0.0);
}

TEST_CASE("cosine_similarity rejects non-unit inputs") {
    const Vector u{1.0, 0.0};
    const Vector bad{1.1, 0.0};
    CHECK_THROWS_AS((void)cosine_similarity(u, bad), std::invalid_argument);
}

TEST_CASE("single identity layer leaves unit inputs unchanged") {
    EncoderNet net;
    AffineLayer layer;
    layer.weight = Matrix(3, 3);
    for (std::size_t i = 0; i < 3; ++i) layer.weight(i, i) = 1.0;
    layer.bias.assign(3, 0.0);
    net.layers.push_back(layer);
    net.head = Matrix(3, 2);
    net.head(0, 0) = 1.0;
    net.head(1, 1) = 1.0;

    Rng rng(3);
    Matrix batch(4, 3);
    for (std::size_t i = 0; i < 4; ++i) {
        const Vector u = random_unit(rng, 3);
        for (std::size_t j = 0; j < 3; ++j) batch(i, j) = u[j];
    }
    const ForwardCache cache = encoder_forward(net, batch);
    for (std::size_t i = 0; i < 4; ++i)
        for (std::size_t j = 0; j < 3; ++j)
            CHECK(cache.embeddings(i, j) == doctest::Approx(batch(i, j)).epsilon(1e-12));
}

TEST_CASE("encoder_forward is deterministic and emits unit rows") {
    Rng rng(5);
    const EncoderNet net = EncoderNet::random({6, 10, 5}, 4, 77);
    const Matrix batch = random_matrix(rng, 12, 6);
    const ForwardCache a = encoder_forward(net, batch);
    const ForwardCache b = encoder_forward(net, batch);
    CHECK(a.embeddings == b.embeddings); // bitwise
    for (std::size_t i = 0; i < a.embeddings.rows(); ++i) {
        const double n = norm(a.embeddings.row(i));
        CHECK(std::abs(n - 1.0) < 1e-9);
    }
}

TEST_CASE("encoder_forward rejects shape mismatch") {
    const EncoderNet net = EncoderNet::random({6, 5}, 3, 1);
    Rng rng(9);
    const Matrix bad = random_matrix(rng, 4, 7);
    CHECK_THROWS_AS((void)encoder_forward(net, bad), std::invalid_argument);
}

TEST_CASE("zero upstream gradient yields zero parameter gradients") {
    const EncoderNet net = EncoderNet::random({5, 8, 4}, 3, 13);
    Rng rng(14);
    const Matrix batch = random_matrix(rng, 6, 5);
    const ForwardCache cache = encoder_forward(net, batch);
    const Matrix zero(6, 4);
    const ParamGrads grads = encoder_backward(net, cache, zero);
    for (const double g : flatten_grads(grads)) CHECK(g == 0.0);
}

TEST_CASE("embedding-norm loss has zero gradient through the normalization") {
    // L = 0.5 * ||e||^2 with e unit: upstream grad is e itself and the
    // normalization Jacobian annihilates it
    const EncoderNet net = EncoderNet::random({5, 7, 4}, 3, 15);
    Rng rng(16);
    const Matrix batch = random_matrix(rng, 5, 5);
    const ForwardCache cache = encoder_forward(net, batch);
    const ParamGrads grads = encoder_backward(net, cache, cache.embeddings);
    for (const double g : flatten_grads(grads)) CHECK(std::abs(g) < 1e-12);
}

TEST_CASE("encoder_backward rejects a stale cache") {
    EncoderNet net = EncoderNet::random({5, 6, 4}, 3, 17);
    Rng rng(18);
    const Matrix batch = random_matrix(rng, 4, 5);
    const ForwardCache cache = encoder_forward(net, batch);
    net.layers[0].weight(0, 0) += 0.5; // parameters moved since the forward pass
    const Matrix upstream = random_matrix(rng, 4, 4);
    CHECK_THROWS_AS((void)encoder_backward(net, cache, upstream), std::runtime_error);
}

namespace {

double probe_loss(const EncoderNet& net, const Matrix& batch, const Matrix& probe) {
    const ForwardCache cache = encoder_forward(net, batch);
    double acc = 0.0;
    for (std::size_t i = 0; i < probe.rows(); ++i)
        for (std::size_t j = 0; j < probe.cols(); ++j) acc += probe(i, j) * cache.embeddings(i, j);
    return acc;
}

} // namespace

TEST_CASE("analytic encoder gradients match central finite differences") {
    // module invariant: 100 random trials, h = 1e-5, max rel err < 1e-4
    double worst = 0.0;
    for (std::uint64_t trial = 0; trial < 100; ++trial) {
        Rng rng(1000 + trial);
        const std::size_t in = 4 + rng.uniform_index(4);
        const std::size_t hidden = 4 + rng.uniform_index(4);
        const std::size_t embed = 3 + rng.uniform_index(3);
        EncoderNet net = EncoderNet::random({in, hidden, embed}, 3, rng.next_u64());
        const Matrix batch = random_matrix(rng, 3, in);
        const Matrix probe = random_matrix(rng, 3, embed);

        const ForwardCache cache = encoder_forward(net, batch);
        const ParamGrads analytic = encoder_backward(net, cache, probe);
        const std::vector<double> flat = flatten_grads(analytic);

        const double h = 1e-5;
        const std::vector<double*> params = param_pointers(net);
        // head does not feed the probe loss; its analytic gradient is zero
        const std::size_t checked = flat.size() - net.head.size();
        for (std::size_t p = 0; p < checked; ++p) {
            const double saved = *params[p];
            *params[p] = saved + h;
            const double up = probe_loss(net, batch, probe);
            *params[p] = saved - h;
            const double down = probe_loss(net, batch, probe);
            *params[p] = saved;
            const double fd = (up - down) / (2.0 * h);
            worst = std::max(worst, relative_error(flat[p], fd));
        }
    }
    CHECK(worst < 1e-4);
}

TEST_CASE("finite-difference directional derivative matches analytic gradient") {
    Rng rng(500);
    EncoderNet net = EncoderNet::random({6, 9, 5}, 3, 501);
    const Matrix batch = random_matrix(rng, 4, 6);
    const Matrix probe = random_matrix(rng, 4, 5);

    const ForwardCache cache = encoder_forward(net, batch);
    const std::vector<double> flat = flatten_grads(encoder_backward(net, cache, probe));
    std::vector<double*> params = param_pointers(net);

    Vector direction(params.size());
    for (double& d : direction) d = rng.gaussian();

    double analytic = 0.0;
    for (std::size_t p = 0; p < params.size(); ++p) analytic += flat[p] * direction[p];

    const double h = 1e-5;
    for (std::size_t p = 0; p < params.size(); ++p) *params[p] += h * direction[p];
    const double up = probe_loss(net, batch, probe);
    for (std::size_t p = 0; p < params.size(); ++p) *params[p] -= 2.0 * h * direction[p];
    const double down = probe_loss(net, batch, probe);
    for (std::size_t p = 0; p < params.size(); ++p) *params[p] += h * direction[p];

    CHECK(relative_error(analytic, (up - down) / (2.0 * h)) < 1e-5);
}

namespace {

EncoderNet scalar_net(double weight) {
    EncoderNet net;
    AffineLayer layer;
    layer.weight = Matrix(1, 1);
    layer.weight(0, 0) = weight;
    layer.bias.assign(1, 0.0);
    net.layers.push_back(layer);
    net.head = Matrix(1, 1);
    net.head(0, 0) = 1.0;
    return net;
}

ParamGrads scalar_grads(const EncoderNet& net, double weight_grad) {
    ParamGrads grads = ParamGrads::zeros_like(net);
    grads.layers[0].weight(0, 0) = weight_grad;
    return grads;
}

} // namespace

TEST_CASE("sgd_step plain update") {
    EncoderNet net = scalar_net(1.0);
    OptimizerState state = OptimizerState::for_net(net, 1.0, 0.0, 0.0);
    sgd_step(net, scalar_grads(net, 0.5), state);
    CHECK(net.layers[0].weight(0, 0) == 0.5);
    CHECK(state.iteration == 1);
}

TEST_CASE("sgd_step with zero gradient and no decay is a no-op") {
    EncoderNet net = scalar_net(1.0);
    OptimizerState state = OptimizerState::for_net(net, 1e-3, 0.9, 0.0);
    sgd_step(net, scalar_grads(net, 0.0), state);
    CHECK(net.layers[0].weight(0, 0) == 1.0);
}

TEST_CASE("sgd_step two-step recurrence matches a direct evaluation") {
    const double mu = 0.9, wd = 5e-4, lr = 1e-3;
    EncoderNet net = scalar_net(1.0);
    OptimizerState state = OptimizerState::for_net(net, lr, mu, wd);
    sgd_step(net, scalar_grads(net, 1.0), state);
    sgd_step(net, scalar_grads(net, 1.0), state);

    // independent recurrence evaluation
    double param = 1.0, buf = 0.0;
    for (int step = 0; step < 2; ++step) {
        buf = mu * buf + (1.0 + wd * param);
        param -= lr * buf;
    }
    CHECK(net.layers[0].weight(0, 0) == doctest::Approx(param).epsilon(1e-15));
}

TEST_CASE("sgd_step aborts on non-finite gradients") {
    EncoderNet net = scalar_net(1.0);
    OptimizerState state = OptimizerState::for_net(net, 1e-3, 0.9, 0.0);
    CHECK_THROWS_AS(sgd_step(net, scalar_grads(net, std::nan("")), state), std::runtime_error);
}

TEST_CASE("sgd_step keeps head columns unit-norm") {
    EncoderNet net = EncoderNet::random({4, 5, 3}, 6, 31);
    OptimizerState state = OptimizerState::for_net(net, 1e-2, 0.9, 5e-4);
    Rng rng(32);
    for (int step = 0; step < 5; ++step) {
        ParamGrads grads = ParamGrads::zeros_like(net);
        for (std::size_t i = 0; i < grads.head.size(); ++i) grads.head.data()[i] = rng.gaussian();
        sgd_step(net, grads, state);
        for (std::size_t c = 0; c < net.head.cols(); ++c) {
            Vector column(net.head.rows());
            for (std::size_t r = 0; r < net.head.rows(); ++r) column[r] = net.head(r, c);
            CHECK(std::abs(norm(column) - 1.0) < 1e-12);
        }
    }
}

TEST_CASE("checkpoint round-trips bit-exactly") {
    const EncoderNet net = EncoderNet::random({7, 9, 5}, 4, 41);
    std::stringstream stream;
    save_checkpoint(stream, net);
    const EncoderNet loaded = load_checkpoint(stream);
    CHECK(loaded.activation == net.activation);
    REQUIRE(loaded.layers.size() == net.layers.size());
    for (std::size_t l = 0; l < net.layers.size(); ++l) {
        CHECK(loaded.layers[l].weight == net.layers[l].weight);
        CHECK(loaded.layers[l].bias == net.layers[l].bias);
    }
    CHECK(loaded.head == net.head);
}

TEST_CASE("checkpoint rejects corrupted input") {
    std::stringstream bad("not-a-checkpoint v9");
    CHECK_THROWS_AS((void)load_checkpoint(bad), std::runtime_error);
}
