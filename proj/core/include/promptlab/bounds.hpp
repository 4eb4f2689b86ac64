#pragma once

#include "promptlab/linalg.hpp"
#include "promptlab/transformer.hpp"

#include <optional>
#include <string>
#include <vector>

namespace plab {

// ---------------------------------------------------------------------------
// Lipschitz bounds
// ---------------------------------------------------------------------------

// Single-head attention on n tokens in the radius-r ball, Frobenius metric:
//   sqrt(3) |W_v| sqrt(|A|^2 r^4 (4n + 1) + n)
// where |W_v| is the operator norm of the effective value map W_o W_v and
// A = W_k^T W_q. The causal (masked) variant obeys the same formula.
double lip_attention_bound(double wv_op, double a_op, double r, Index n);

// Mean-field single-head attention, W_2 metric:
//   |W_v| (1 + 3 |A| r^2) exp(2 |A| r^2)
// Also the bound for the masked mean-field map under the position-aware
// distance.
double lip_meanfield_bound(double wv_op, double a_op, double r);

// True when n <= 1 + exp(2 r^2 gamma), gamma = max(-gamma_min, gamma_max / 8):
// the regime where the sqrt(n) growth of the discrete bound is sharp.
bool tightness_regime(Index n, double r, double gamma_min, double gamma_max);

enum class LipschitzRegime { discrete, meanfield };

struct HeadLipschitz {
    double wv_op = 0.0; // |W_o W_v|_2
    double a_op = 0.0;  // |W_k^T W_q|_2
    double bound = 0.0;
    std::optional<EigenExtremes> a_eigen; // real eigenvalue extremes of A
    bool tight = false;                   // tightness_regime(n, r, ...) when a_eigen is present
};

struct LayerLipschitz {
    std::vector<HeadLipschitz> heads;
    double radius = 0.0;     // token radius assumed at this layer's input
    double attention = 0.0;  // 1 + sum of head bounds (residual included)
    double mlp_factor = 0.0; // 1 + |W_2|_2 |W_1|_2
    double bound = 0.0;      // attention * mlp_factor
    double out_radius = 0.0; // bound on output token norms, the next layer's radius
};

struct LipschitzReport {
    std::vector<LayerLipschitz> layers;
    double whole_model = 1.0; // product of layer bounds
    double radius = 0.0;      // input radius r
    Index tokens = 0;
    LipschitzRegime regime = LipschitzRegime::discrete;
};

// Layer bound (1 + sum_k head_bound_k) (1 + |W_2|_2 |W_1|_2). The residual
// branches give the "+1" terms and ReLU is 1-Lipschitz.
LayerLipschitz lip_layer_report(const LayerWeights& layer, double r, Index n, LipschitzRegime regime);
double lip_layer_bound(const LayerWeights& layer, double r, Index n, LipschitzRegime regime);

// Radius bound for the output tokens of a layer whose input tokens have
// norm at most r.
double layer_output_radius(const LayerWeights& layer, double r);

// Product of layer bounds. Layer l > 0 is bounded on the ball that contains
// layer l-1's outputs rather than on the input ball.
LipschitzReport lip_transformer_bound(const TransformerWeights& w, double r, Index n, LipschitzRegime regime);

// ---------------------------------------------------------------------------
// Capacity thresholds (natural-log space throughout)
// ---------------------------------------------------------------------------

struct CapacityQuery {
    Index d = 1;
    Index m = 1;
    Index m_p = 1;
    double lipschitz = 1.0; // L
    double r = 1.0;
    double eps = 0.1;
    double q = 2.0;         // Wasserstein order
    double frostman_c = 1.0; // C, existential; every mean-field capacity output is parametric in it

    void validate() const;
};

// Finite prompt length: any k above
//   m_p (log(3Lr) - log eps) / (log r - log(3 eps))
// leaves some output sequences inaccessible. Requires r > 3 eps and 3Lr > eps.
double finite_prompt_threshold(const CapacityQuery& qy);

// log of [ (3Lr/eps)^{m_p} / (r/(3eps))^{mk} ]^d, not clamped.
double finite_prompt_log_proportion_raw(Index k, const CapacityQuery& qy);
// Same, clamped at 0 (a proportion bound above 1 is vacuous).
double finite_prompt_log_proportion(Index k, const CapacityQuery& qy);

// Arbitrary prompt length (mean-field):
//   (6Lr/eps)^d (1 + log(1 + (4Lr/eps)^q)) / ((3/eps)^d - log C)
// Requires (3/eps)^d > log C.
double meanfield_prompt_threshold(const CapacityQuery& qy);

// (6Lr/eps)^d (1 + log(1 + (4Lr/eps)^q)) - k ((3/eps)^d - log C),
// without ever forming the doubly exponential numerator.
double meanfield_prompt_log_proportion_raw(Index k, const CapacityQuery& qy);
double meanfield_prompt_log_proportion(Index k, const CapacityQuery& qy);

struct CapacityReport {
    std::optional<double> finite_prompt_threshold;
    std::optional<double> meanfield_prompt_threshold;
    std::string finite_prompt_invalid_reason; // empty when the preconditions hold
    std::string meanfield_prompt_invalid_reason;
    double finite_prompt_slope = 0.0; // d log-proportion / dk above threshold
    double meanfield_prompt_slope = 0.0;
};

CapacityReport capacity_report(const CapacityQuery& qy);

// ---------------------------------------------------------------------------
// Covering and packing formulas
// ---------------------------------------------------------------------------

struct VolumetricBounds {
    double covering_lower = 0.0; // Vol(K) / Vol(eps B)
    double packing_upper = 0.0;  // Vol(K + eps/2 B) / Vol(eps/2 B)
};

// The caller supplies Vol(K + (eps/2) B) (exact for boxes and balls).
VolumetricBounds covering_volumetric_bounds(double vol_k, double vol_k_plus_half_eps, double vol_unit_ball,
                                            double eps, Index d);

// Upper bound on log N(discrete measures on B^d(0,r), W_q, 2 eps):
//   N_theta log(e + e Diam^q / eps^q)
// with N_theta = (1 + 2r/eps)^d and Diam = 2r.
double wasserstein_covering_log_upper(double r, Index d, double q, double eps);

// Lower bound on log N: 1/eps^d - log C.
double wasserstein_covering_log_lower(double eps, Index d, double frostman_c);

} // namespace plab
