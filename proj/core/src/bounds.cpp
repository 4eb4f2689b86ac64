#include "promptlab/bounds.hpp"

#include "promptlab/errors.hpp"

#include <cmath>
#include <limits>

namespace plab {

double lip_attention_bound(double wv_op, double a_op, double r, Index n)
{
    if (wv_op < 0.0 || a_op < 0.0 || r < 0.0) throw PreconditionError("lip_attention_bound: arguments must be >= 0");
    if (n < 1) throw PreconditionError("lip_attention_bound: n must be at least 1");
    const double nn = static_cast<double>(n);
    const double r2 = r * r;
    return std::sqrt(3.0) * wv_op * std::sqrt(a_op * a_op * r2 * r2 * (4.0 * nn + 1.0) + nn);
}

double lip_meanfield_bound(double wv_op, double a_op, double r)
{
    if (wv_op < 0.0 || a_op < 0.0 || r < 0.0) throw PreconditionError("lip_meanfield_bound: arguments must be >= 0");
    const double t = a_op * r * r;
    return wv_op * (1.0 + 3.0 * t) * std::exp(2.0 * t);
}

bool tightness_regime(Index n, double r, double gamma_min, double gamma_max)
{
    const double g = std::max(-gamma_min, gamma_max / 8.0);
    return static_cast<double>(n) <= 1.0 + std::exp(2.0 * r * r * g);
}

double layer_output_radius(const LayerWeights& layer, double r)
{
    double att = 0.0;
    for (const auto& head : layer.heads) att += spectral_norm(head.wo * head.wv);
    // Attention output is a convex mix of W_o W_v x_i, so |z| <= r + sum |W_o W_v| r.
    const double z = r * (1.0 + att);
    const double w1 = spectral_norm(layer.w1);
    const double w2 = spectral_norm(layer.w2);
    return z + w2 * (w1 * z + layer.b1.norm()) + layer.b2.norm();
}

LayerLipschitz lip_layer_report(const LayerWeights& layer, double r, Index n, LipschitzRegime regime)
{
    LayerLipschitz out;
    out.radius = r;
    out.attention = 1.0;
    for (const auto& head : layer.heads) {
        HeadLipschitz hb;
        hb.wv_op = spectral_norm(head.wo * head.wv);
        const Matrix a = head.wk.transpose() * head.wq;
        hb.a_op = spectral_norm(a);
        hb.bound = regime == LipschitzRegime::discrete ? lip_attention_bound(hb.wv_op, hb.a_op, r, n)
                                                       : lip_meanfield_bound(hb.wv_op, hb.a_op, r);
        hb.a_eigen = real_eigen_extremes(a);
        if (hb.a_eigen) hb.tight = tightness_regime(n, r, hb.a_eigen->min, hb.a_eigen->max);
        out.attention += hb.bound;
        out.heads.push_back(hb);
    }
    out.mlp_factor = 1.0 + spectral_norm(layer.w2) * spectral_norm(layer.w1);
    out.bound = out.attention * out.mlp_factor;
    out.out_radius = layer_output_radius(layer, r);
    return out;
}

double lip_layer_bound(const LayerWeights& layer, double r, Index n, LipschitzRegime regime)
{
    return lip_layer_report(layer, r, n, regime).bound;
}

LipschitzReport lip_transformer_bound(const TransformerWeights& w, double r, Index n, LipschitzRegime regime)
{
    if (!(r > 0.0)) throw PreconditionError("lip_transformer_bound: radius must be positive");
    LipschitzReport report;
    report.radius = r;
    report.tokens = n;
    report.regime = regime;
    double radius = r;
    for (const auto& layer : w.layers) {
        auto lb = lip_layer_report(layer, radius, n, regime);
        report.whole_model *= lb.bound;
        radius = lb.out_radius;
        report.layers.push_back(std::move(lb));
    }
    return report;
}

// ---------------------------------------------------------------------------

void CapacityQuery::validate() const
{
    if (d < 1 || m < 1) throw PreconditionError("capacity query: d and m must be at least 1");
    if (m_p < 0) throw PreconditionError("capacity query: m_p must be nonnegative");
    if (!(lipschitz > 0.0)) throw PreconditionError("capacity query: L must be positive");
    if (!(r > 0.0)) throw PreconditionError("capacity query: r must be positive");
    if (!(eps > 0.0)) throw PreconditionError("capacity query: eps must be positive");
}

namespace {

void check_finite_prompt(const CapacityQuery& qy)
{
    qy.validate();
    if (!(qy.r > 3.0 * qy.eps))
        throw PreconditionError("finite-prompt capacity bound requires r > 3*eps (got r = " + std::to_string(qy.r) +
                                ", eps = " + std::to_string(qy.eps) + ")");
    if (!(3.0 * qy.lipschitz * qy.r > qy.eps))
        throw PreconditionError("finite-prompt capacity bound requires 3*L*r > eps");
}

struct MeanfieldPromptLogs {
    double log_numerator;   // log of (6Lr/eps)^d (1 + log(1 + (4Lr/eps)^q))
    double log_denominator; // log of (3/eps)^d - log C
};

double log1p_exp(double x)
{
    return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

MeanfieldPromptLogs meanfield_prompt_logs(const CapacityQuery& qy)
{
    qy.validate();
    if (!(qy.q >= 1.0)) throw PreconditionError("arbitrary-prompt capacity bound: q must be at least 1");
    if (!(qy.frostman_c > 0.0)) throw PreconditionError("arbitrary-prompt capacity bound: C must be positive");
    const double dd = static_cast<double>(qy.d);
    const double lr = qy.lipschitz * qy.r;
    const double log_a = dd * std::log(6.0 * lr / qy.eps);
    const double log_inner = log1p_exp(qy.q * std::log(4.0 * lr / qy.eps)); // log(1 + (4Lr/eps)^q)
    MeanfieldPromptLogs out;
    out.log_numerator = log_a + std::log1p(log_inner);

    const double log_pow = dd * std::log(3.0 / qy.eps); // log((3/eps)^d)
    const double log_c = std::log(qy.frostman_c);
    // (3/eps)^d - log C > 0  <=>  1 - log C exp(-log_pow) > 0
    const double rel = log_c * std::exp(-log_pow);
    if (!(rel < 1.0))
        throw PreconditionError("arbitrary-prompt capacity bound requires (3/eps)^d > log C");
    out.log_denominator = log_pow + std::log1p(-rel);
    return out;
}

} // namespace

double finite_prompt_threshold(const CapacityQuery& qy)
{
    check_finite_prompt(qy);
    const double mp = static_cast<double>(qy.m_p);
    return mp * (std::log(3.0 * qy.lipschitz * qy.r) - std::log(qy.eps)) / (std::log(qy.r) - std::log(3.0 * qy.eps));
}

double finite_prompt_log_proportion_raw(Index k, const CapacityQuery& qy)
{
    check_finite_prompt(qy);
    const double dd = static_cast<double>(qy.d);
    const double mp = static_cast<double>(qy.m_p);
    const double mk = static_cast<double>(qy.m) * static_cast<double>(k);
    return dd * (mp * std::log(3.0 * qy.lipschitz * qy.r / qy.eps) - mk * std::log(qy.r / (3.0 * qy.eps)));
}

double finite_prompt_log_proportion(Index k, const CapacityQuery& qy)
{
    return std::min(0.0, finite_prompt_log_proportion_raw(k, qy));
}

double meanfield_prompt_threshold(const CapacityQuery& qy)
{
    const auto logs = meanfield_prompt_logs(qy);
    return std::exp(logs.log_numerator - logs.log_denominator);
}

double meanfield_prompt_log_proportion_raw(Index k, const CapacityQuery& qy)
{
    const auto logs = meanfield_prompt_logs(qy);
    const double kk = static_cast<double>(k);
    if (k == 0) return std::exp(logs.log_numerator);
    // B (A/B - k) keeps the magnitude sensible when A and B are both large.
    return std::exp(logs.log_denominator) * (std::exp(logs.log_numerator - logs.log_denominator) - kk);
}

double meanfield_prompt_log_proportion(Index k, const CapacityQuery& qy)
{
    return std::min(0.0, meanfield_prompt_log_proportion_raw(k, qy));
}

CapacityReport capacity_report(const CapacityQuery& qy)
{
    CapacityReport out;
    try {
        out.finite_prompt_threshold = finite_prompt_threshold(qy);
        out.finite_prompt_slope = -static_cast<double>(qy.d) * static_cast<double>(qy.m) * std::log(qy.r / (3.0 * qy.eps));
    } catch (const PreconditionError& e) {
        out.finite_prompt_invalid_reason = e.what();
    }
    try {
        const auto logs = meanfield_prompt_logs(qy);
        out.meanfield_prompt_threshold = std::exp(logs.log_numerator - logs.log_denominator);
        out.meanfield_prompt_slope = -std::exp(logs.log_denominator);
    } catch (const PreconditionError& e) {
        out.meanfield_prompt_invalid_reason = e.what();
    }
    return out;
}

// ---------------------------------------------------------------------------

VolumetricBounds covering_volumetric_bounds(double vol_k, double vol_k_plus_half_eps, double vol_unit_ball,
                                            double eps, Index d)
{
    if (!(vol_k > 0.0 && vol_k_plus_half_eps > 0.0 && vol_unit_ball > 0.0))
        throw PreconditionError("covering_volumetric_bounds: volumes must be positive");
    if (!(eps > 0.0)) throw PreconditionError("covering_volumetric_bounds: eps must be positive");
    const double dd = static_cast<double>(d);
    VolumetricBounds out;
    out.covering_lower = vol_k / (std::pow(eps, dd) * vol_unit_ball);
    out.packing_upper = vol_k_plus_half_eps / (std::pow(eps / 2.0, dd) * vol_unit_ball);
    return out;
}

double wasserstein_covering_log_upper(double r, Index d, double q, double eps)
{
    if (!(eps > 0.0)) throw PreconditionError("wasserstein_covering_log_upper: eps must be positive");
    if (!(r >= 0.0)) throw PreconditionError("wasserstein_covering_log_upper: r must be nonnegative");
    const double inner_cover = std::pow(1.0 + 2.0 * r / eps, static_cast<double>(d));
    const double diam = 2.0 * r;
    const double e = std::exp(1.0);
    return inner_cover * std::log(e + e * std::pow(diam / eps, q));
}

double wasserstein_covering_log_lower(double eps, Index d, double frostman_c)
{
    if (!(eps > 0.0)) throw PreconditionError("wasserstein_covering_log_lower: eps must be positive");
    if (!(frostman_c > 0.0)) throw PreconditionError("wasserstein_covering_log_lower: C must be positive");
    return std::pow(eps, -static_cast<double>(d)) - std::log(frostman_c);
}

} // namespace plab
