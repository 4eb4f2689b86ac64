#include "promptlab/single_layer.hpp"

#include "promptlab/errors.hpp"
#include "promptlab/report_io.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <limits>
#include <sstream>

namespace plab {

HeadVectorSet head_attention_vectors(const Vector& x0, std::span<const Vector> probes,
                                     std::span<const HeadWeights> heads)
{
    const Index d = x0.size();
    const Index h = static_cast<Index>(heads.size());
    if (h < 1) throw PreconditionError("head_attention_vectors: need at least one head");
    if (static_cast<Index>(probes.size()) != h + 1)
        throw PreconditionError("head_attention_vectors: need h + 1 = " + std::to_string(h + 1) + " probes, got " +
                                std::to_string(probes.size()));
    if (d - h * (h + 1) < h + 1)
        throw PreconditionError("head_attention_vectors: dimension condition d - h(h+1) >= h+1 fails for d = " +
                                std::to_string(d) + ", h = " + std::to_string(h));

    HeadVectorSet hv;
    hv.x0 = x0;
    hv.probes.assign(probes.begin(), probes.end());
    std::vector<Vector> all;
    for (const auto& xi : probes) {
        if (xi.size() != d) throw ShapeError("head_attention_vectors: probe dimension differs from x_0");
        TokenMatrix ctx(d, 2);
        ctx << xi, x0;
        std::vector<Vector> row;
        for (const auto& head : heads) {
            row.push_back(attend_head(x0, ctx, head));
            all.push_back(row.back());
        }
        hv.a.push_back(std::move(row));
    }
    hv.e_basis = orthonormal_basis(all, d);
    return hv;
}

PromptedDecomposition decompose_prompted_attention(const Vector& x0, const Vector& xi, const TokenMatrix& prompt,
                                                   const HeadWeights& head)
{
    if (prompt.cols() == 0) throw PreconditionError("decompose_prompted_attention: prompt is empty (m_p = 0)");
    const Index d = x0.size();
    const Index mp = prompt.cols();
    TokenMatrix block(d, 2);
    block << xi, x0;
    const TokenMatrix full = concat_columns(prompt, block);

    const Vector q = head.wq * x0;
    const Vector scores = (head.wk * full).transpose() * q;
    const double top = scores.maxCoeff();
    const Vector e = (scores.array() - top).exp();
    const double prompt_mass = e.head(mp).sum();
    const double block_mass = e.tail(2).sum();
    const double total = prompt_mass + block_mass;

    PromptedDecomposition out;
    out.lambda = block_mass / total;
    out.mu = prompt_mass / total;
    out.block_output = attend_head(x0, block, head);
    out.prompt_output = attend_head(x0, prompt, head);
    out.direct = attend_head(x0, full, head);
    return out;
}

double mlp_invertibility_margin(const LayerWeights& layer)
{
    return 1.0 - spectral_norm(layer.w1) * spectral_norm(layer.w2);
}

void enforce_invertibility_margin(LayerWeights& layer, double min_margin)
{
    if (!(min_margin < 1.0)) throw PreconditionError("invertibility margin must be below 1");
    const double product = spectral_norm(layer.w1) * spectral_norm(layer.w2);
    if (1.0 - product >= min_margin || product == 0.0) return;
    const double factor = std::sqrt((1.0 - min_margin) / product);
    layer.w1 *= factor;
    layer.w2 *= factor;
    // Guard against the product landing a rounding error short.
    while (mlp_invertibility_margin(layer) < min_margin) {
        layer.w1 *= 1.0 - 1e-12;
        layer.w2 *= 1.0 - 1e-12;
    }
}

Vector mlp_invert(const Vector& y, const LayerWeights& layer, double tol, std::vector<double>* residuals,
                  int max_iterations)
{
    if (!(tol > 0.0)) throw PreconditionError("mlp_invert: tol must be positive");
    const double margin = mlp_invertibility_margin(layer);
    if (!(margin > 0.0))
        throw PreconditionError("mlp_invert: |W_1|_2 |W_2|_2 = " + format_double(1.0 - margin) +
                                " is not below 1, the MLP is not a contraction perturbation of identity");

    Vector z = y - layer.b2;
    double residual = 0.0;
    for (int it = 0; it <= max_iterations; ++it) {
        const Vector hidden = (layer.w1 * z + layer.b1).cwiseMax(0.0);
        const Vector image = layer.w2 * hidden + layer.b2 + z;
        residual = (image - y).norm();
        if (residuals) residuals->push_back(residual);
        if (residual <= tol) return z;
        z = y - layer.b2 - layer.w2 * hidden;
    }
    throw ConvergenceError("mlp_invert: no convergence after " + std::to_string(max_iterations) +
                               " iterations (residual " + format_double(residual) + ")",
                           residual);
}

InaccessibleTargets build_inaccessible_targets(const HeadVectorSet& hv, const LayerWeights& layer, double scale,
                                               std::uint64_t seed)
{
    if (!(scale > 0.0)) throw PreconditionError("build_inaccessible_targets: scale must be positive (targets are nonzero)");
    const double margin = mlp_invertibility_margin(layer);
    if (!(margin > 0.0))
        throw PreconditionError("build_inaccessible_targets: invertibility margin " + format_double(margin) +
                                " is not positive (need |W_1|_2 |W_2|_2 < 1)");

    const Index d = hv.x0.size();
    const Index count = static_cast<Index>(hv.probes.size());
    const auto complement = orthonormal_complement(hv.e_basis, d);
    const Index room = static_cast<Index>(complement.size());
    if (room < count)
        throw PreconditionError("build_inaccessible_targets: E-perp has dimension " + std::to_string(room) +
                                ", need " + std::to_string(count));

    Matrix basis(d, room);
    for (Index j = 0; j < room; ++j) basis.col(j) = complement[static_cast<std::size_t>(j)];

    // Seeded orthonormal frame inside E-perp.
    Rng rng(seed);
    const Matrix coeffs = sample_normal(room, count, rng);
    Eigen::HouseholderQR<Matrix> qr(coeffs);
    const Matrix frame = qr.householderQ() * Matrix::Identity(room, count);

    InaccessibleTargets t;
    t.margin = margin;
    t.r = std::numeric_limits<double>::infinity();
    for (Index i = 0; i < count; ++i) {
        Vector yp = scale * (basis * frame.col(i));
        Vector y = mlp_apply(yp + hv.x0, layer);
        t.r = std::min(t.r, y.norm());
        t.y_prime.push_back(std::move(yp));
        t.y.push_back(std::move(y));
    }
    t.bound = inaccessibility_bound(t);
    return t;
}

double inaccessibility_bound(const InaccessibleTargets& targets)
{
    double r = std::numeric_limits<double>::infinity();
    for (const auto& y : targets.y) r = std::min(r, y.norm());
    if (targets.y.empty()) r = 0.0;
    return targets.margin * r / 2.0;
}

std::string instance_hash(const TransformerWeights& w, std::span<const Vector> vectors)
{
    std::uint64_t h = 0xcbf29ce484222325ull;
    auto feed = [&h](const double* data, Index count) {
        for (Index i = 0; i < count; ++i) {
            unsigned char bytes[sizeof(double)];
            std::memcpy(bytes, data + i, sizeof(double));
            for (unsigned char b : bytes) {
                h ^= b;
                h *= 0x100000001b3ull;
            }
        }
    };
    for (const auto& layer : w.layers) {
        for (const auto& head : layer.heads) {
            feed(head.wq.data(), head.wq.size());
            feed(head.wk.data(), head.wk.size());
            feed(head.wv.data(), head.wv.size());
            feed(head.wo.data(), head.wo.size());
        }
        feed(layer.w1.data(), layer.w1.size());
        feed(layer.w2.data(), layer.w2.size());
        feed(layer.b1.data(), layer.b1.size());
        feed(layer.b2.data(), layer.b2.size());
    }
    for (const auto& v : vectors) feed(v.data(), v.size());
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

Certificate certify_inaccessibility(const TransformerWeights& w, const HeadVectorSet& hv,
                                    const InaccessibleTargets& targets, const CertificateConfig& cfg)
{
    if (w.depth() != 1)
        throw PreconditionError("certify_inaccessibility: needs a 1-layer model, got " + std::to_string(w.depth()) +
                                " layers");
    if (targets.y.size() != hv.probes.size())
        throw PreconditionError("certify_inaccessibility: target count differs from probe count");
    if (cfg.prompt_lengths.empty()) throw PreconditionError("certify_inaccessibility: no prompt lengths given");

    Certificate cert;
    std::vector<Vector> hashed{hv.x0};
    hashed.insert(hashed.end(), hv.probes.begin(), hv.probes.end());
    hashed.insert(hashed.end(), targets.y.begin(), targets.y.end());
    cert.instance_hash = instance_hash(w, hashed);
    cert.bound = targets.bound;
    cert.invertibility_margin = mlp_invertibility_margin(w.layers.front());

    double residual = 0.0;
    for (std::size_t i = 0; i < targets.y_prime.size(); ++i) {
        for (std::size_t j = 0; j < targets.y_prime.size(); ++j)
            if (i != j) residual = std::max(residual, std::abs(targets.y_prime[i].dot(targets.y_prime[j])));
        for (const auto& row : hv.a)
            for (const auto& a : row) residual = std::max(residual, std::abs(targets.y_prime[i].dot(a)));
    }
    cert.orthogonality_residual = residual;

    double radius = hv.x0.norm();
    for (const auto& x : hv.probes) radius = std::max(radius, x.norm());
    for (const auto& y : targets.y) radius = std::max(radius, y.norm());
    cert.embedding_radius = radius;

    MemorizationTask task;
    task.norm = Norm::l2;
    task.radius = radius;
    task.last_column_only = true;
    // Reaching below bound - tolerance is exactly what would break the certificate.
    task.eps = std::max(cert.bound - cfg.tolerance, 1e-300);
    for (std::size_t i = 0; i < hv.probes.size(); ++i) {
        TokenMatrix x(hv.x0.size(), 2);
        x << hv.probes[i], hv.x0;
        TokenMatrix y(hv.x0.size(), 2);
        y << hv.probes[i], targets.y[i];
        task.pairs.push_back({std::move(x), std::move(y)});
    }

    const double threshold = cert.bound - cfg.tolerance;
    cert.slack = std::numeric_limits<double>::infinity();
    for (Index mp : cfg.prompt_lengths) {
        TuneConfig tc = cfg.tune;
        tc.prompt_length = mp;
        tc.project_radius = cfg.project_radius > 0.0 ? cfg.project_radius : radius;
        const TuneResult res = tune_prompt(w, task, tc);
        PromptLengthOutcome o;
        o.prompt_length = mp;
        o.per_target_error = res.per_pair_error;
        o.best_max_error = res.max_error();
        cert.slack = std::min(cert.slack, o.best_max_error - threshold);
        cert.outcomes.push_back(std::move(o));
    }
    cert.passed = cert.slack >= 0.0;

    auto note = [&cert](const char* reason) { cert.note += (cert.note.empty() ? "" : "; ") + std::string(reason); };
    if (!cert.passed) note("optimizer reached the targets below the bound");
    if (!(cert.invertibility_margin > 0.0)) note("invertibility margin is not positive");
    if (cert.orthogonality_residual > 1e-10) note("target orthogonality residual exceeds 1e-10");
    return cert;
}

std::string render_certificate(const Certificate& cert)
{
    std::ostringstream out;
    out << "instance_hash: " << cert.instance_hash << "\n";
    out << "invertibility_margin: " << format_double(cert.invertibility_margin) << "\n";
    out << "embedding_radius: " << format_double(cert.embedding_radius) << "\n";
    out << "orthogonality_residual: " << format_double(cert.orthogonality_residual) << "\n";
    out << "bound: " << format_double(cert.bound) << "\n";
    out << "best_max_error_by_prompt_length:\n";
    for (const auto& o : cert.outcomes)
        out << "  m_p=" << o.prompt_length << ": " << format_double(o.best_max_error) << "\n";
    out << "slack: " << format_double(cert.slack) << "\n";
    out << "verdict: " << (cert.passed ? "PASS" : "FAIL") << "\n";
    if (!cert.note.empty()) out << "note: " << cert.note << "\n";
    return out.str();
}

} // namespace plab
