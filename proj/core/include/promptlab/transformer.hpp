#pragma once

#include "promptlab/linalg.hpp"

#include <cstdint>
#include <span>
#include <vector>

namespace plab {

// d x m: one token embedding per column.
using TokenMatrix = Matrix;

// One attention head. The 1/sqrt(s) score normalization is expected to be
// folded into wk; nothing is rescaled at runtime.
struct HeadWeights {
    Matrix wq; // s x d
    Matrix wk; // s x d
    Matrix wv; // s' x d
    Matrix wo; // d x s'
};

struct LayerWeights {
    std::vector<HeadWeights> heads;
    Matrix w1; // d_ff x d
    Matrix w2; // d x d_ff
    Vector b1; // d_ff
    Vector b2; // d
};

struct ModelDims {
    Index d = 0;
    Index h = 1;
    Index s = 0;
    Index s_prime = 0;
    Index d_ff = 0;
};

struct TransformerWeights {
    ModelDims dims;
    bool masked_default = false;
    std::vector<LayerWeights> layers;

    Index d() const { return dims.d; }
    Index depth() const { return static_cast<Index>(layers.size()); }

    // Throws ShapeError naming the first inconsistent matrix.
    void validate() const;
};

void validate_layer(const LayerWeights& layer, const ModelDims& dims, Index layer_index = 0);

// Softmax of the scores (wk c_i) . (wq x) over the columns c_i of `context`,
// with max-subtraction. Entries are positive and sum to one.
Vector softmax_weights(const Vector& query, const TokenMatrix& context, const HeadWeights& head);

// Output of a single head for one query against a context.
Vector attend_head(const Vector& query, const TokenMatrix& context, const HeadWeights& head);

// Multi-head attention of one query token against a context (sum over heads).
Vector attend(const Vector& query, const TokenMatrix& context, std::span<const HeadWeights> heads);

TokenMatrix self_attention(const TokenMatrix& x, std::span<const HeadWeights> heads);

// Column i attends to columns 0..i only.
TokenMatrix masked_self_attention(const TokenMatrix& x, std::span<const HeadWeights> heads);

// W2 ReLU(W1 z + b1) + b2 + z
Vector mlp_apply(const Vector& z, const LayerWeights& layer);

TokenMatrix layer_forward(const TokenMatrix& x, const LayerWeights& layer, bool masked);

TokenMatrix forward(const TransformerWeights& w, const TokenMatrix& x, bool masked);

// Runs the model on [P, X] and keeps only the last m columns.
TokenMatrix forward_with_prompt(const TransformerWeights& w, const TokenMatrix& prompt,
                                const TokenMatrix& x, bool masked);

TokenMatrix concat_columns(const TokenMatrix& left, const TokenMatrix& right);

struct RandomModelSpec {
    ModelDims dims;
    Index layers = 1;
    double gain = 1.0; // entries ~ N(0, (gain / sqrt(d))^2)
    std::uint64_t seed = 0;
};

// Gaussian weights; with dims.s / s_prime / d_ff left at 0 they default to
// max(1, d / h), d / h and 4 d.
TransformerWeights random_weights(const RandomModelSpec& spec);
LayerWeights random_layer(const ModelDims& dims, double gain, Rng& rng);
ModelDims complete_dims(ModelDims dims);

// All-zero weights: forward is the identity map.
TransformerWeights zero_weights(const ModelDims& dims, Index layers);

} // namespace plab
