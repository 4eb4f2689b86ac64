#include "promptlab/meanfield.hpp"

#include "promptlab/assignment.hpp"
#include "promptlab/errors.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <string>

namespace plab {

TokenMatrix EmpiricalMeasure::as_matrix() const
{
    TokenMatrix out(dim(), size());
    for (Index j = 0; j < size(); ++j) out.col(j) = atoms[static_cast<std::size_t>(j)];
    return out;
}

EmpiricalMeasure from_tokens(const TokenMatrix& x)
{
    EmpiricalMeasure mu;
    mu.atoms.reserve(static_cast<std::size_t>(x.cols()));
    for (Index j = 0; j < x.cols(); ++j) mu.atoms.emplace_back(x.col(j));
    return mu;
}

TimedMeasure timed_from_tokens(const TokenMatrix& x)
{
    TimedMeasure mu;
    const double m = static_cast<double>(x.cols());
    for (Index j = 0; j < x.cols(); ++j) mu.atoms.push_back({static_cast<double>(j + 1) / m, x.col(j)});
    return mu;
}

Vector gamma(const EmpiricalMeasure& mu, const Vector& x, std::span<const HeadWeights> heads)
{
    if (mu.atoms.empty()) throw PreconditionError("gamma: empty measure");
    return attend(x, mu.as_matrix(), heads);
}

EmpiricalMeasure attention_pushforward(const EmpiricalMeasure& mu, std::span<const HeadWeights> heads)
{
    if (mu.atoms.empty()) throw PreconditionError("attention_pushforward: empty measure");
    const TokenMatrix support = mu.as_matrix();
    EmpiricalMeasure out;
    for (const auto& a : mu.atoms) out.atoms.push_back(attend(a, support, heads));
    return out;
}

EmpiricalMeasure pushforward_layer(const EmpiricalMeasure& mu, const LayerWeights& layer)
{
    if (mu.atoms.empty()) throw PreconditionError("pushforward_layer: empty measure");
    const TokenMatrix support = mu.as_matrix();
    EmpiricalMeasure out;
    for (const auto& a : mu.atoms) out.atoms.push_back(mlp_apply(attend(a, support, layer.heads) + a, layer));
    return out;
}

namespace {

// Context of atoms stamped at or before `stamp`, in stored order.
TokenMatrix past_of(const TimedMeasure& mu, double stamp)
{
    std::vector<Index> keep;
    for (Index j = 0; j < mu.size(); ++j)
        if (mu.atoms[static_cast<std::size_t>(j)].stamp <= stamp) keep.push_back(j);
    const Index d = mu.atoms.front().x.size();
    TokenMatrix ctx(d, static_cast<Index>(keep.size()));
    for (std::size_t c = 0; c < keep.size(); ++c) ctx.col(static_cast<Index>(c)) = mu.atoms[keep[c]].x;
    return ctx;
}

void check_stamps(const TimedMeasure& mu)
{
    if (mu.atoms.empty()) throw PreconditionError("timed measure is empty");
    for (const auto& a : mu.atoms)
        if (!(a.stamp >= 0.0 && a.stamp <= 1.0)) throw PreconditionError("timed measure stamp outside [0, 1]");
}

double matching_cost(const std::vector<const Vector*>& xs, const std::vector<const Vector*>& ys, double q)
{
    const Index n = static_cast<Index>(xs.size());
    Matrix cost(n, n);
    for (Index i = 0; i < n; ++i)
        for (Index j = 0; j < n; ++j) {
            const double dist = (*xs[static_cast<std::size_t>(i)] - *ys[static_cast<std::size_t>(j)]).norm();
            cost(i, j) = q == 1.0 ? dist : (q == 2.0 ? dist * dist : std::pow(dist, q));
        }
    return solve_assignment(cost).cost;
}

} // namespace

TimedMeasure masked_attention_pushforward(const TimedMeasure& mu, std::span<const HeadWeights> heads)
{
    check_stamps(mu);
    TimedMeasure out;
    for (const auto& a : mu.atoms) out.atoms.push_back({a.stamp, attend(a.x, past_of(mu, a.stamp), heads)});
    return out;
}

TimedMeasure masked_pushforward(const TimedMeasure& mu, const LayerWeights& layer)
{
    check_stamps(mu);
    TimedMeasure out;
    for (const auto& a : mu.atoms) {
        const Vector z = attend(a.x, past_of(mu, a.stamp), layer.heads) + a.x;
        out.atoms.push_back({a.stamp, mlp_apply(z, layer)});
    }
    return out;
}

double wasserstein(const EmpiricalMeasure& mu, const EmpiricalMeasure& nu, double q)
{
    if (!(q >= 1.0)) throw PreconditionError("wasserstein: order q must be at least 1");
    if (mu.atoms.empty() || nu.atoms.empty()) throw PreconditionError("wasserstein: empty measure");
    if (mu.dim() != nu.dim()) throw ShapeError("wasserstein: measures live in different dimensions");

    const std::size_t a = mu.atoms.size();
    const std::size_t b = nu.atoms.size();
    const std::size_t common = std::lcm(a, b);
    if (common > 256)
        throw PreconditionError("wasserstein: atom counts " + std::to_string(a) + " and " + std::to_string(b) +
                                " need replication to " + std::to_string(common) + " atoms (limit 256)");
    std::vector<const Vector*> xs;
    std::vector<const Vector*> ys;
    for (std::size_t i = 0; i < common; ++i) {
        xs.push_back(&mu.atoms[i % a]);
        ys.push_back(&nu.atoms[i % b]);
    }
    const double total = matching_cost(xs, ys, q);
    return std::pow(std::max(total, 0.0) / static_cast<double>(common), 1.0 / q);
}

double masked_distance(const TimedMeasure& mu, const TimedMeasure& nu, double q)
{
    if (!(q >= 1.0)) throw PreconditionError("masked_distance: order q must be at least 1");
    check_stamps(mu);
    check_stamps(nu);
    if (mu.size() != nu.size()) throw PreconditionError("masked_distance: stamp multisets differ");

    std::map<double, std::pair<std::vector<const Vector*>, std::vector<const Vector*>>> groups;
    for (const auto& a : mu.atoms) groups[a.stamp].first.push_back(&a.x);
    for (const auto& a : nu.atoms) groups[a.stamp].second.push_back(&a.x);

    double total = 0.0;
    for (const auto& [stamp, g] : groups) {
        if (g.first.size() != g.second.size())
            throw PreconditionError("masked_distance: stamp multisets differ at s = " + std::to_string(stamp));
        // Group mass |g| / M times the within-group mean cost reduces to
        // cost / M.
        total += matching_cost(g.first, g.second, q);
    }
    return std::pow(std::max(total, 0.0) / static_cast<double>(mu.size()), 1.0 / q);
}

} // namespace plab
