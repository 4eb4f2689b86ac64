#include "promptlab/errors.hpp"
#include "promptlab/single_layer.hpp"
#include "support.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace plab;

namespace {

LayerWeights contractive_layer(Index d, Index heads, double min_margin, Rng& rng)
{
    ModelDims dims;
    dims.d = d;
    dims.h = heads;
    LayerWeights layer = random_layer(complete_dims(dims), 1.0, rng);
    enforce_invertibility_margin(layer, min_margin);
    return layer;
}

std::vector<Vector> ball_points(Index count, Index d, Rng& rng)
{
    std::vector<Vector> out;
    for (Index i = 0; i < count; ++i) out.push_back(sample_ball(d, 1.0, Norm::l2, rng));
    return out;
}

} // namespace

TEST(Decomposition, PromptedAttentionSplitsConvexly)
{
    Rng rng(60);
    for (int t = 0; t < 50; ++t) {
        const Index d = 2 + rng.below(5);
        const HeadWeights head = fixtures::random_head(d, 1 + rng.below(3), rng, 2.0);
        const Vector x0 = sample_ball(d, 1.0, Norm::l2, rng);
        const Vector xi = sample_ball(d, 1.0, Norm::l2, rng);
        const TokenMatrix p = sample_ball_columns(d, 1 + rng.below(5), 1.0, Norm::l2, rng);
        const auto dec = decompose_prompted_attention(x0, xi, p, head);
        EXPECT_GT(dec.lambda, 0.0);
        EXPECT_LT(dec.lambda, 1.0);
        EXPECT_NEAR(dec.lambda + dec.mu, 1.0, 1e-14);
        const Vector mix = dec.lambda * dec.block_output + (1 - dec.lambda) * dec.prompt_output;
        EXPECT_LT((dec.direct - mix).norm(), 1e-10) << t;
    }
    const HeadWeights head = fixtures::random_head(2, 2, rng);
    EXPECT_THROW(decompose_prompted_attention(Vector::Zero(2), Vector::Zero(2), TokenMatrix(2, 0), head),
                 PreconditionError);
}

TEST(HeadVectors, Preconditions)
{
    Rng rng(61);
    std::vector<HeadWeights> one{fixtures::random_head(4, 2, rng)};
    EXPECT_THROW(head_attention_vectors(Vector::Zero(4), ball_points(1, 4, rng), one), PreconditionError);
    std::vector<HeadWeights> two{fixtures::random_head(7, 2, rng), fixtures::random_head(7, 2, rng)};
    // 7 - 2*3 = 1 < 3
    EXPECT_THROW(head_attention_vectors(Vector::Zero(7), ball_points(3, 7, rng), two), PreconditionError);
    std::vector<HeadWeights> two9{fixtures::random_head(9, 2, rng), fixtures::random_head(9, 2, rng)};
    EXPECT_NO_THROW(head_attention_vectors(Vector::Zero(9), ball_points(3, 9, rng), two9));
}

TEST(HeadVectors, ZeroValueMapGivesTrivialSpan)
{
    Rng rng(62);
    HeadWeights head = fixtures::random_head(4, 2, rng);
    head.wv.setZero();
    std::vector<HeadWeights> heads{head};
    const auto hv = head_attention_vectors(sample_ball(4, 1, Norm::l2, rng), ball_points(2, 4, rng), heads);
    EXPECT_TRUE(hv.e_basis.empty());
    EXPECT_EQ(hv.a.size(), 2u);
    EXPECT_EQ(hv.heads(), 1);
}

TEST(Targets, OrthogonalToHeadVectorsAndEachOther)
{
    Rng rng(63);
    for (int t = 0; t < 30; ++t) {
        const Index h = 1 + rng.below(2);
        const Index d = h * (h + 1) + h + 1 + rng.below(3);
        const LayerWeights layer = contractive_layer(d, h, 0.3, rng);
        const auto hv = head_attention_vectors(sample_ball(d, 1, Norm::l2, rng), ball_points(h + 1, d, rng), layer.heads);
        const auto tg = build_inaccessible_targets(hv, layer, 1.0, static_cast<std::uint64_t>(t));
        ASSERT_EQ(static_cast<Index>(tg.y_prime.size()), h + 1);
        for (std::size_t i = 0; i < tg.y_prime.size(); ++i) {
            EXPECT_NEAR(tg.y_prime[i].norm(), 1.0, 1e-12);
            for (std::size_t j = 0; j < tg.y_prime.size(); ++j)
                if (i != j) EXPECT_LT(std::abs(tg.y_prime[i].dot(tg.y_prime[j])), 1e-10);
            for (const auto& row : hv.a)
                for (const auto& a : row) EXPECT_LT(std::abs(tg.y_prime[i].dot(a)), 1e-10);
            EXPECT_LT((tg.y[i] - mlp_apply(tg.y_prime[i] + hv.x0, layer)).norm(), 1e-14);
        }
        double r = INFINITY;
        for (const auto& y : tg.y) r = std::min(r, y.norm());
        EXPECT_EQ(tg.r, r);
        EXPECT_NEAR(tg.bound, tg.margin * r / 2, 1e-15);
    }
}

TEST(Targets, RejectsZeroScale)
{
    Rng rng(64);
    const LayerWeights layer = contractive_layer(4, 1, 0.3, rng);
    const auto hv = head_attention_vectors(sample_ball(4, 1, Norm::l2, rng), ball_points(2, 4, rng), layer.heads);
    EXPECT_THROW(build_inaccessible_targets(hv, layer, 0.0, 1), PreconditionError);
}

TEST(Margin, Values)
{
    Rng rng(65);
    LayerWeights layer = contractive_layer(3, 1, 0.3, rng);
    LayerWeights zero = layer;
    zero.w1.setZero();
    EXPECT_EQ(mlp_invertibility_margin(zero), 1.0);
    LayerWeights unit = layer;
    unit.w1 /= unit.w1.jacobiSvd().singularValues()(0);
    unit.w2 /= unit.w2.jacobiSvd().singularValues()(0);
    EXPECT_NEAR(mlp_invertibility_margin(unit), 0.0, 1e-10);
    for (int t = 0; t < 20; ++t) {
        const LayerWeights l = contractive_layer(4, 1, rng.uniform(0.05, 0.9), rng);
        const double want = 1 - l.w1.jacobiSvd().singularValues()(0) * l.w2.jacobiSvd().singularValues()(0);
        EXPECT_NEAR(mlp_invertibility_margin(l), want, 1e-8);
    }
    EXPECT_GE(mlp_invertibility_margin(layer), 0.3);
}

TEST(MlpInvert, ZeroMlpIsShift)
{
    Rng rng(66);
    LayerWeights layer = contractive_layer(3, 1, 0.3, rng);
    layer.w1.setZero();
    layer.w2.setZero();
    const Vector y = sample_normal(3, rng);
    EXPECT_EQ(mlp_invert(y, layer, 1e-12), (y - layer.b2).eval());
}

TEST(MlpInvert, RoundTripAndContraction)
{
    Rng rng(67);
    for (int t = 0; t < 100; ++t) {
        const LayerWeights layer = contractive_layer(1 + rng.below(6), 1, 0.2, rng);
        const Index d = layer.b2.size();
        const Vector y = 2.0 * sample_normal(d, rng);
        std::vector<double> res;
        const Vector z = mlp_invert(y, layer, 1e-12, &res);
        EXPECT_LE((mlp_apply(z, layer) - y).norm(), 1e-12);
        const double rate = 1 - mlp_invertibility_margin(layer);
        for (std::size_t i = 1; i < res.size(); ++i)
            if (res[i - 1] > 1e-13) EXPECT_LE(res[i], (rate + 1e-6) * res[i - 1] + 1e-15) << t;
    }
}

TEST(MlpInvert, RejectsNonContraction)
{
    Rng rng(68);
    LayerWeights layer = contractive_layer(3, 1, 0.3, rng);
    const double scale = std::sqrt(1.1 / (1 - mlp_invertibility_margin(layer)));
    layer.w1 *= scale;
    layer.w2 *= scale;
    EXPECT_NEAR(mlp_invertibility_margin(layer), -0.1, 1e-9);
    EXPECT_THROW(mlp_invert(Vector::Ones(3), layer, 1e-10), PreconditionError);
    EXPECT_THROW(mlp_invert(Vector::Ones(3), contractive_layer(3, 1, 0.3, rng), 0.0), PreconditionError);
}

TEST(Bound, HandValues)
{
    InaccessibleTargets t;
    t.margin = 1.0;
    t.y = {Vector::Constant(1, 2.0), Vector::Constant(1, -3.0)};
    EXPECT_EQ(inaccessibility_bound(t), 1.0);
    t.margin = 0.5;
    t.y = {Vector::Constant(2, std::sqrt(8.0))};
    EXPECT_NEAR(inaccessibility_bound(t), 1.0, 1e-15);
}

TEST(Certificate, PointReachableSetPassesWithSlack)
{
    Rng rng(69);
    ModelDims dims;
    dims.d = 4;
    TransformerWeights w = zero_weights(dims, 1);
    w.layers[0].heads[0] = fixtures::random_head(4, 4, rng);
    w.layers[0].heads[0].wv.setZero();
    const auto hv = head_attention_vectors(sample_ball(4, 1, Norm::l2, rng), ball_points(2, 4, rng), w.layers[0].heads);
    const auto tg = build_inaccessible_targets(hv, w.layers[0], 1.0, 7);
    CertificateConfig cfg;
    cfg.prompt_lengths = {1, 3};
    cfg.tune.iters = 50;
    cfg.tune.restarts = 2;
    const auto cert = certify_inaccessibility(w, hv, tg, cfg);
    EXPECT_TRUE(cert.passed) << render_certificate(cert);
    for (const auto& o : cert.outcomes) EXPECT_NEAR(o.best_max_error, 1.0, 1e-12);
    EXPECT_NE(render_certificate(cert).find("verdict: PASS"), std::string::npos);
}

TEST(Certificate, RandomInstancesPass)
{
    Rng rng(70);
    for (int t = 0; t < 3; ++t) {
        TransformerWeights w;
        w.dims = complete_dims({8, 1, 0, 0, 0});
        w.layers.push_back(contractive_layer(8, 1, 0.3, rng));
        const auto hv = head_attention_vectors(sample_ball(8, 1, Norm::l2, rng), ball_points(2, 8, rng), w.layers[0].heads);
        const auto tg = build_inaccessible_targets(hv, w.layers[0], 1.0, static_cast<std::uint64_t>(t));
        CertificateConfig cfg;
        cfg.prompt_lengths = {1, 4};
        cfg.tune.iters = 300;
        cfg.tune.restarts = 2;
        const auto cert = certify_inaccessibility(w, hv, tg, cfg);
        EXPECT_TRUE(cert.passed) << render_certificate(cert);
        EXPECT_LT(cert.orthogonality_residual, 1e-10);
    }
}

TEST(Certificate, RejectsDeepModels)
{
    RandomModelSpec spec;
    spec.dims.d = 4;
    spec.layers = 2;
    const auto w = random_weights(spec);
    Rng rng(71);
    const auto hv = head_attention_vectors(sample_ball(4, 1, Norm::l2, rng), ball_points(2, 4, rng), w.layers[0].heads);
    InaccessibleTargets tg;
    tg.y = {Vector::Ones(4), Vector::Ones(4)};
    EXPECT_THROW(certify_inaccessibility(w, hv, tg, {}), PreconditionError);
}

TEST(Certificate, HashIsStableAndSensitive)
{
    RandomModelSpec spec;
    spec.dims.d = 4;
    auto w = random_weights(spec);
    std::vector<Vector> v{Vector::Ones(4)};
    const auto a = instance_hash(w, v);
    EXPECT_EQ(a, instance_hash(w, v));
    EXPECT_EQ(a.size(), 16u);
    w.layers[0].b1(0) = std::nextafter(w.layers[0].b1(0), 10.0);
    EXPECT_NE(a, instance_hash(w, v));
}
