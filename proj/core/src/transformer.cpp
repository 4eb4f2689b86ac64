#include "promptlab/transformer.hpp"

#include "promptlab/errors.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace plab {

namespace {

void expect_shape(const Matrix& m, Index rows, Index cols, const std::string& name)
{
    if (m.rows() != rows || m.cols() != cols)
        throw ShapeError(name + " has shape " + std::to_string(m.rows()) + "x" + std::to_string(m.cols()) +
                         ", expected " + std::to_string(rows) + "x" + std::to_string(cols));
}

void expect_size(const Vector& v, Index size, const std::string& name)
{
    if (v.size() != size)
        throw ShapeError(name + " has length " + std::to_string(v.size()) + ", expected " + std::to_string(size));
}

void expect_tokens(const TokenMatrix& x, Index d, const char* what)
{
    if (x.rows() != d)
        throw ShapeError(std::string(what) + " has embedding dimension " + std::to_string(x.rows()) +
                         ", expected " + std::to_string(d));
}

} // namespace

void validate_layer(const LayerWeights& layer, const ModelDims& dims, Index layer_index)
{
    const std::string prefix = "layers[" + std::to_string(layer_index) + "].";
    if (layer.heads.empty()) throw ShapeError(prefix + "heads is empty");
    if (static_cast<Index>(layer.heads.size()) != dims.h)
        throw ShapeError(prefix + "heads has " + std::to_string(layer.heads.size()) + " entries, expected " +
                         std::to_string(dims.h));
    for (std::size_t k = 0; k < layer.heads.size(); ++k) {
        const auto& head = layer.heads[k];
        const std::string hp = prefix + "heads[" + std::to_string(k) + "].";
        expect_shape(head.wq, dims.s, dims.d, hp + "W_q");
        expect_shape(head.wk, dims.s, dims.d, hp + "W_k");
        expect_shape(head.wv, dims.s_prime, dims.d, hp + "W_v");
        expect_shape(head.wo, dims.d, dims.s_prime, hp + "W_o");
    }
    expect_shape(layer.w1, dims.d_ff, dims.d, prefix + "W_1");
    expect_shape(layer.w2, dims.d, dims.d_ff, prefix + "W_2");
    expect_size(layer.b1, dims.d_ff, prefix + "b_1");
    expect_size(layer.b2, dims.d, prefix + "b_2");
}

void TransformerWeights::validate() const
{
    if (dims.d < 1) throw ShapeError("d must be at least 1");
    if (dims.h < 1) throw ShapeError("h must be at least 1");
    if (layers.empty()) throw ShapeError("model has no layers");
    for (std::size_t l = 0; l < layers.size(); ++l) validate_layer(layers[l], dims, static_cast<Index>(l));
}

Vector softmax_weights(const Vector& query, const TokenMatrix& context, const HeadWeights& head)
{
    if (context.cols() == 0) throw PreconditionError("attention over an empty context is undefined");
    const Vector q = head.wq * query;
    Vector scores = (head.wk * context).transpose() * q;
    const double top = scores.maxCoeff();
    scores = (scores.array() - top).exp();
    return scores / scores.sum();
}

Vector attend_head(const Vector& query, const TokenMatrix& context, const HeadWeights& head)
{
    const Vector weights = softmax_weights(query, context, head);
    return head.wo * (head.wv * (context * weights));
}

Vector attend(const Vector& query, const TokenMatrix& context, std::span<const HeadWeights> heads)
{
    if (context.cols() == 0) throw PreconditionError("attention over an empty context is undefined");
    Vector out = Vector::Zero(context.rows());
    for (const auto& head : heads) out += attend_head(query, context, head);
    return out;
}

TokenMatrix self_attention(const TokenMatrix& x, std::span<const HeadWeights> heads)
{
    TokenMatrix out(x.rows(), x.cols());
    for (Index j = 0; j < x.cols(); ++j) out.col(j) = attend(x.col(j), x, heads);
    return out;
}

TokenMatrix masked_self_attention(const TokenMatrix& x, std::span<const HeadWeights> heads)
{
    TokenMatrix out(x.rows(), x.cols());
    for (Index j = 0; j < x.cols(); ++j) out.col(j) = attend(x.col(j), x.leftCols(j + 1), heads);
    return out;
}

Vector mlp_apply(const Vector& z, const LayerWeights& layer)
{
    if (z.size() != layer.w1.cols())
        throw ShapeError("mlp_apply: input has dimension " + std::to_string(z.size()) + ", expected " +
                         std::to_string(layer.w1.cols()));
    const Vector hidden = (layer.w1 * z + layer.b1).cwiseMax(0.0);
    return layer.w2 * hidden + layer.b2 + z;
}

TokenMatrix layer_forward(const TokenMatrix& x, const LayerWeights& layer, bool masked)
{
    const TokenMatrix att = masked ? masked_self_attention(x, layer.heads) : self_attention(x, layer.heads);
    TokenMatrix out(x.rows(), x.cols());
    for (Index j = 0; j < x.cols(); ++j) out.col(j) = mlp_apply(att.col(j) + x.col(j), layer);
    return out;
}

TokenMatrix forward(const TransformerWeights& w, const TokenMatrix& x, bool masked)
{
    expect_tokens(x, w.d(), "input");
    if (w.layers.empty()) throw ShapeError("model has no layers");
    TokenMatrix state = x;
    for (const auto& layer : w.layers) state = layer_forward(state, layer, masked);
    return state;
}

TokenMatrix concat_columns(const TokenMatrix& left, const TokenMatrix& right)
{
    if (left.cols() == 0) return right;
    if (right.cols() == 0) return left;
    if (left.rows() != right.rows()) throw ShapeError("concat_columns: row counts differ");
    TokenMatrix out(left.rows(), left.cols() + right.cols());
    out << left, right;
    return out;
}

TokenMatrix forward_with_prompt(const TransformerWeights& w, const TokenMatrix& prompt, const TokenMatrix& x,
                                bool masked)
{
    expect_tokens(x, w.d(), "input");
    if (prompt.cols() > 0) expect_tokens(prompt, w.d(), "prompt");
    if (prompt.cols() == 0) return forward(w, x, masked);
    const TokenMatrix full = forward(w, concat_columns(prompt, x), masked);
    return full.rightCols(x.cols());
}

ModelDims complete_dims(ModelDims dims)
{
    if (dims.d < 1) throw PreconditionError("model dimension d must be at least 1");
    if (dims.h < 1) throw PreconditionError("head count h must be at least 1");
    const Index per_head = std::max<Index>(1, dims.d / dims.h);
    if (dims.s == 0) dims.s = per_head;
    if (dims.s_prime == 0) dims.s_prime = per_head;
    if (dims.d_ff == 0) dims.d_ff = 4 * dims.d;
    return dims;
}

LayerWeights random_layer(const ModelDims& dims, double gain, Rng& rng)
{
    const double scale = gain / std::sqrt(static_cast<double>(dims.d));
    LayerWeights layer;
    for (Index k = 0; k < dims.h; ++k) {
        HeadWeights head;
        head.wq = scale * sample_normal(dims.s, dims.d, rng);
        head.wk = scale * sample_normal(dims.s, dims.d, rng);
        head.wv = scale * sample_normal(dims.s_prime, dims.d, rng);
        head.wo = scale * sample_normal(dims.d, dims.s_prime, rng);
        layer.heads.push_back(std::move(head));
    }
    layer.w1 = scale * sample_normal(dims.d_ff, dims.d, rng);
    layer.w2 = scale * sample_normal(dims.d, dims.d_ff, rng);
    layer.b1 = scale * sample_normal(dims.d_ff, rng);
    layer.b2 = scale * sample_normal(dims.d, rng);
    return layer;
}

TransformerWeights random_weights(const RandomModelSpec& spec)
{
    if (spec.layers < 1) throw PreconditionError("random_weights: at least one layer required");
    TransformerWeights w;
    w.dims = complete_dims(spec.dims);
    Rng rng(spec.seed);
    for (Index l = 0; l < spec.layers; ++l) w.layers.push_back(random_layer(w.dims, spec.gain, rng));
    return w;
}

TransformerWeights zero_weights(const ModelDims& dims_in, Index layers)
{
    TransformerWeights w;
    w.dims = complete_dims(dims_in);
    const auto& dims = w.dims;
    for (Index l = 0; l < layers; ++l) {
        LayerWeights layer;
        for (Index k = 0; k < dims.h; ++k)
            layer.heads.push_back({Matrix::Zero(dims.s, dims.d), Matrix::Zero(dims.s, dims.d),
                                   Matrix::Zero(dims.s_prime, dims.d), Matrix::Zero(dims.d, dims.s_prime)});
        layer.w1 = Matrix::Zero(dims.d_ff, dims.d);
        layer.w2 = Matrix::Zero(dims.d, dims.d_ff);
        layer.b1 = Vector::Zero(dims.d_ff);
        layer.b2 = Vector::Zero(dims.d);
        w.layers.push_back(std::move(layer));
    }
    return w;
}

} // namespace plab
