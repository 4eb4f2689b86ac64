#include "promptlab/linalg.hpp"

#include "promptlab/errors.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

namespace plab {

Norm parse_norm(std::string_view name)
{
    if (name == "l2") return Norm::l2;
    if (name == "linf") return Norm::linf;
    if (name == "frobenius" || name == "fro") return Norm::frobenius;
    throw PreconditionError("unknown norm '" + std::string(name) + "' (expected l2, linf or frobenius)");
}

std::string_view to_string(Norm norm)
{
    switch (norm) {
    case Norm::l2: return "l2";
    case Norm::linf: return "linf";
    case Norm::frobenius: return "frobenius";
    }
    return "unknown";
}

double vector_norm(const Vector& v, Norm norm)
{
    if (v.size() == 0) return 0.0;
    return norm == Norm::linf ? v.cwiseAbs().maxCoeff() : v.norm();
}

double matrix_norm(const Matrix& m, Norm norm)
{
    if (m.size() == 0) return 0.0;
    switch (norm) {
    case Norm::frobenius: return frobenius_norm(m);
    case Norm::l2: return spectral_norm(m);
    case Norm::linf: return m.cwiseAbs().maxCoeff();
    }
    return 0.0;
}

double frobenius_norm(const Matrix& m)
{
    double sum = 0.0;
    for (Index j = 0; j < m.cols(); ++j)
        for (Index i = 0; i < m.rows(); ++i)
            sum += m(i, j) * m(i, j);
    return std::sqrt(sum);
}

double spectral_norm(const Matrix& m, double tol)
{
    if (!(tol > 0.0)) throw PreconditionError("spectral_norm: tol must be positive");
    if (m.size() == 0) return 0.0;

    constexpr int max_iterations = 10'000;
    Rng rng(0);
    Vector v = sample_normal(m.cols(), rng);
    v.normalize();

    Vector mv(m.rows());
    Vector w(m.cols());
    double lambda = 0.0;
    double prev_increment = -1.0;
    for (int it = 0; it < max_iterations; ++it) {
        mv.noalias() = m * v;
        w.noalias() = m.transpose() * mv;
        const double next = v.dot(w);
        const double wn = w.norm();
        if (wn == 0.0) return 0.0;
        v = w / wn;

        const double increment = std::abs(next - lambda);
        lambda = next;
        if (it == 0) continue;
        if (increment == 0.0) return std::sqrt(lambda);
        // Geometric tail estimate of the remaining error in lambda.
        if (prev_increment > 0.0) {
            const double ratio = std::min(increment / prev_increment, 0.999999);
            if (increment * ratio / (1.0 - ratio) <= tol * lambda) return std::sqrt(lambda);
        }
        prev_increment = increment;
    }
    throw ConvergenceError("spectral_norm: power iteration did not converge in 10000 iterations",
                           prev_increment);
}

namespace {

Eigen::ColPivHouseholderQR<Matrix> pivoted_qr(std::span<const Vector> vs, Index dim)
{
    Matrix stacked(dim, static_cast<Index>(vs.size()));
    for (std::size_t j = 0; j < vs.size(); ++j) {
        if (vs[j].size() != dim)
            throw ShapeError("orthonormal basis: vector " + std::to_string(j) + " has dimension " +
                             std::to_string(vs[j].size()) + ", expected " + std::to_string(dim));
        stacked.col(static_cast<Index>(j)) = vs[j];
    }
    Eigen::ColPivHouseholderQR<Matrix> qr(stacked);
    qr.setThreshold(1e-12);
    return qr;
}

} // namespace

std::vector<Vector> orthonormal_basis(std::span<const Vector> vs, Index dim)
{
    std::vector<Vector> out;
    if (vs.empty()) return out;
    auto qr = pivoted_qr(vs, dim);
    const Index rank = qr.rank();
    const Matrix q = qr.householderQ() * Matrix::Identity(dim, dim);
    for (Index j = 0; j < rank; ++j) out.emplace_back(q.col(j));
    return out;
}

std::vector<Vector> orthonormal_complement(std::span<const Vector> vs, Index dim)
{
    std::vector<Vector> out;
    if (vs.empty()) {
        for (Index j = 0; j < dim; ++j) out.emplace_back(Vector::Unit(dim, j));
        return out;
    }
    auto qr = pivoted_qr(vs, dim);
    const Index rank = qr.rank();
    const Matrix q = qr.householderQ() * Matrix::Identity(dim, dim);
    for (Index j = rank; j < dim; ++j) out.emplace_back(q.col(j));
    return out;
}

std::optional<EigenExtremes> real_eigen_extremes(const Matrix& a)
{
    if (a.rows() != a.cols()) throw ShapeError("real_eigen_extremes: matrix must be square");
    if (a.size() == 0) return std::nullopt;

    Eigen::EigenSolver<Matrix> solver(a, false);
    if (solver.info() != Eigen::Success)
        throw ConvergenceError("real_eigen_extremes: eigenvalue solver did not converge", 0.0);

    std::optional<EigenExtremes> out;
    for (const auto& lambda : solver.eigenvalues()) {
        if (std::abs(lambda.imag()) >= 1e-9) continue;
        const double re = lambda.real();
        if (!out) out = EigenExtremes{re, re};
        else {
            out->min = std::min(out->min, re);
            out->max = std::max(out->max, re);
        }
    }
    return out;
}

Rng::Rng(std::uint64_t seed) : engine_(seed) {}

std::uint64_t Rng::next_u64() { return engine_(); }

double Rng::uniform()
{
    return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
}

double Rng::uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

double Rng::normal()
{
    if (has_spare_) {
        has_spare_ = false;
        return spare_;
    }
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    const double radius = std::sqrt(-2.0 * std::log(u1));
    const double angle = 2.0 * std::numbers::pi * u2;
    spare_ = radius * std::sin(angle);
    has_spare_ = true;
    return radius * std::cos(angle);
}

Index Rng::below(Index n)
{
    return static_cast<Index>(uniform() * static_cast<double>(n));
}

Vector sample_normal(Index d, Rng& rng)
{
    Vector v(d);
    for (Index i = 0; i < d; ++i) v(i) = rng.normal();
    return v;
}

Matrix sample_normal(Index rows, Index cols, Rng& rng)
{
    Matrix m(rows, cols);
    for (Index i = 0; i < rows; ++i)
        for (Index j = 0; j < cols; ++j) m(i, j) = rng.normal();
    return m;
}

Vector sample_ball(Index d, double r, Norm norm, Rng& rng)
{
    if (r < 0.0) throw PreconditionError("sample_ball: radius must be nonnegative");
    Vector v = Vector::Zero(d);
    if (d == 0 || r == 0.0) return v;

    if (norm == Norm::linf) {
        for (Index i = 0; i < d; ++i) v(i) = rng.uniform(-r, r);
        return v;
    }
    v = sample_normal(d, rng);
    double n = v.norm();
    while (n == 0.0) {
        v = sample_normal(d, rng);
        n = v.norm();
    }
    const double radial = r * std::pow(rng.uniform(), 1.0 / static_cast<double>(d));
    v *= radial / n;
    // Rounding can push the norm a hair past r.
    project_to_ball(v, r, norm);
    return v;
}

Vector sample_ball(Index d, double r, Norm norm, std::uint64_t seed)
{
    Rng rng(seed);
    return sample_ball(d, r, norm, rng);
}

Matrix sample_ball_columns(Index d, Index m, double r, Norm norm, Rng& rng)
{
    Matrix out(d, m);
    for (Index j = 0; j < m; ++j) out.col(j) = sample_ball(d, r, norm, rng);
    return out;
}

void project_to_ball(Eigen::Ref<Vector> v, double r, Norm norm)
{
    if (norm == Norm::linf) {
        const double n = v.cwiseAbs().maxCoeff();
        if (n > r) v = (v * (r / n)).cwiseMax(-r).cwiseMin(r);
        return;
    }
    const double n = v.norm();
    if (n > r) {
        v *= r / n;
        // Scaling is not exact in floating point; nudge until inside.
        while (v.norm() > r) v *= (1.0 - 1e-16);
    }
}

} // namespace plab
