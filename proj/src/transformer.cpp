#include "stadm/transformer.hpp"

#include <cmath>

namespace stadm {

Array sinusoidal_table(std::size_t positions, std::size_t dim) {
    Array table({positions, dim});
    for (std::size_t p = 0; p < positions; ++p) {
        Array row = sinusoidal_embedding(static_cast<double>(p), dim);
        for (std::size_t j = 0; j < dim; ++j) table.at(p, j) = row[j];
    }
    return table;
}

Array sinusoidal_embedding(double position, std::size_t dim) {
    Array row({1, dim});
    const std::size_t half = dim / 2;
    for (std::size_t i = 0; i < half; ++i) {
        const double freq = std::pow(10000.0, -2.0 * static_cast<double>(i) /
                                                   static_cast<double>(dim));
        row[2 * i] = std::sin(position * freq);
        row[2 * i + 1] = std::cos(position * freq);
    }
    if (dim % 2 == 1) row[dim - 1] = std::sin(position * 1e-4);
    return row;
}

void create_linear(ParamStore& store, const std::string& prefix, std::size_t in, std::size_t out,
                   Rng& rng, bool bias) {
    store.create(prefix + ".weight",
                 Array::randn({in, out}, rng, 1.0 / std::sqrt(static_cast<double>(in))));
    if (bias) store.create(prefix + ".bias", Array::zeros({out}));
}

void create_layer_norm(ParamStore& store, const std::string& prefix, std::size_t dim) {
    store.create(prefix + ".gain", Array::full({dim}, 1.0));
    store.create(prefix + ".shift", Array::zeros({dim}));
}

void create_attention(ParamStore& store, const std::string& prefix, std::size_t dim, Rng& rng) {
    const double s = 1.0 / std::sqrt(static_cast<double>(dim));
    store.create(prefix + ".wq", Array::randn({dim, dim}, rng, s));
    store.create(prefix + ".wk", Array::randn({dim, dim}, rng, s));
    store.create(prefix + ".wv", Array::randn({dim, dim}, rng, s));
    store.create(prefix + ".wo", Array::randn({dim, dim}, rng, s));
}

void create_ffn(ParamStore& store, const std::string& prefix, std::size_t dim,
                std::size_t hidden, Rng& rng) {
    create_linear(store, prefix + ".fc1", dim, hidden, rng);
    create_linear(store, prefix + ".fc2", hidden, dim, rng);
}

void create_encoder_block(ParamStore& store, const std::string& prefix, std::size_t dim,
                          Rng& rng) {
    create_layer_norm(store, prefix + ".ln1", dim);
    create_attention(store, prefix + ".attn", dim, rng);
    create_layer_norm(store, prefix + ".ln2", dim);
    create_ffn(store, prefix + ".ffn", dim, 4 * dim, rng);
}

Var linear(ParamBinder& bind, const std::string& prefix, Var x, bool bias) {
    Var y = matmul(x, bind(prefix + ".weight"));
    if (bias) y = add_rowvec(y, bind(prefix + ".bias"));
    return y;
}

Var layer_norm(ParamBinder& bind, const std::string& prefix, Var x) {
    return layer_norm_rows(x, bind(prefix + ".gain"), bind(prefix + ".shift"));
}

Var attention_core(Var q, Var k, Var v, std::size_t heads) {
    const std::size_t d = q.val().cols();
    if (heads == 0 || d % heads != 0)
        throw ConfigError("attention width " + std::to_string(d) + " not divisible by " +
                          std::to_string(heads) + " heads");
    const std::size_t dh = d / heads;
    const double scale_factor = 1.0 / std::sqrt(static_cast<double>(dh));
    std::vector<Var> outs;
    outs.reserve(heads);
    for (std::size_t h = 0; h < heads; ++h) {
        Var qh = slice_cols(q, h * dh, dh);
        Var kh = slice_cols(k, h * dh, dh);
        Var vh = slice_cols(v, h * dh, dh);
        Var weights = softmax_rows(scale(matmul(qh, transpose(kh)), scale_factor));
        outs.push_back(matmul(weights, vh));
    }
    return heads == 1 ? outs[0] : concat_cols(outs);
}

Var self_attention(ParamBinder& bind, const std::string& prefix, Var x, std::size_t heads) {
    Var q = matmul(x, bind(prefix + ".wq"));
    Var k = matmul(x, bind(prefix + ".wk"));
    Var v = matmul(x, bind(prefix + ".wv"));
    return matmul(attention_core(q, k, v, heads), bind(prefix + ".wo"));
}

Var ffn(ParamBinder& bind, const std::string& prefix, Var x) {
    return linear(bind, prefix + ".fc2", gelu(linear(bind, prefix + ".fc1", x)));
}

Var encoder_block(ParamBinder& bind, const std::string& prefix, Var x, std::size_t heads) {
    Var h = add(x, self_attention(bind, prefix + ".attn",
                                  layer_norm(bind, prefix + ".ln1", x), heads));
    return add(h, ffn(bind, prefix + ".ffn", layer_norm(bind, prefix + ".ln2", h)));
}

}  // namespace stadm
