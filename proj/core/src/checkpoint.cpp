#include "ddl/checkpoint.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace ddl {

std::string format_g17(double value) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", value);
    return buf;
}

namespace {

void write_tensor(std::ostream& out, const std::string& key, const Matrix& m) {
    out << "tensor " << key << ' ' << m.rows() << ' ' << m.cols() << '\n';
    for (std::size_t r = 0; r < m.rows(); ++r) {
        for (std::size_t c = 0; c < m.cols(); ++c) {
            if (c) out << ' ';
            out << format_g17(m(r, c));
        }
        out << '\n';
    }
}

Matrix read_tensor(std::istream& in, const std::string& expected_key) {
    std::string word, key;
    std::size_t rows = 0, cols = 0;
    if (!(in >> word >> key >> rows >> cols) || word != "tensor")
        throw std::runtime_error("checkpoint: expected tensor record");
    if (key != expected_key)
        throw std::runtime_error("checkpoint: expected tensor '" + expected_key + "', found '" + key + "'");
    Matrix m(rows, cols);
    for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < cols; ++c)
            if (!(in >> m(r, c))) throw std::runtime_error("checkpoint: truncated tensor " + key);
    return m;
}

} // namespace

void save_checkpoint(std::ostream& out, const EncoderNet& net) {
    out << "ddl-checkpoint v1\n";
    out << "activation " << activation_name(net.activation) << '\n';
    out << "layers " << net.layers.size() << '\n';
    for (std::size_t l = 0; l < net.layers.size(); ++l) {
        const std::string prefix = "layer" + std::to_string(l);
        write_tensor(out, prefix + ".weight", net.layers[l].weight);
        Matrix bias_row(1, net.layers[l].bias.size());
        for (std::size_t i = 0; i < net.layers[l].bias.size(); ++i) bias_row(0, i) = net.layers[l].bias[i];
        write_tensor(out, prefix + ".bias", bias_row);
    }
    write_tensor(out, "head", net.head);
    out << "end\n";
}

EncoderNet load_checkpoint(std::istream& in) {
    std::string magic, version;
    if (!(in >> magic >> version) || magic != "ddl-checkpoint" || version != "v1")
        throw std::runtime_error("checkpoint: bad header");
    std::string word, act_name;
    if (!(in >> word >> act_name) || word != "activation")
        throw std::runtime_error("checkpoint: missing activation");
    std::size_t layer_count = 0;
    if (!(in >> word >> layer_count) || word != "layers" || layer_count == 0)
        throw std::runtime_error("checkpoint: missing layer count");

    EncoderNet net;
    net.activation = parse_activation(act_name);
    for (std::size_t l = 0; l < layer_count; ++l) {
        const std::string prefix = "layer" + std::to_string(l);
        AffineLayer layer;
        layer.weight = read_tensor(in, prefix + ".weight");
        Matrix bias_row = read_tensor(in, prefix + ".bias");
        if (bias_row.rows() != 1 || bias_row.cols() != layer.weight.rows())
            throw std::runtime_error("checkpoint: bias shape mismatch in " + prefix);
        layer.bias.assign(bias_row.data(), bias_row.data() + bias_row.cols());
        net.layers.push_back(std::move(layer));
    }
    net.head = read_tensor(in, "head");
    if (!(in >> word) || word != "end") throw std::runtime_error("checkpoint: missing end marker");
    net.validate_shapes();
    return net;
}

void save_checkpoint_file(const std::string& path, const EncoderNet& net) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("checkpoint: cannot open for writing: " + path);
    save_checkpoint(out, net);
    if (!out) throw std::runtime_error("checkpoint: write failed: " + path);
}

EncoderNet load_checkpoint_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("checkpoint: cannot open: " + path);
    return load_checkpoint(in);
}

} // namespace ddl
