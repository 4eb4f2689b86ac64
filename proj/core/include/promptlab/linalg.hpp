#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <string_view>
#include <vector>

namespace plab {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Index = Eigen::Index;

// Norm selector. For vectors `l2` and `frobenius` coincide; for matrices
// `l2` is the spectral norm and `linf` the max-abs entry.
enum class Norm { l2, linf, frobenius };

Norm parse_norm(std::string_view name);
std::string_view to_string(Norm norm);

double vector_norm(const Vector& v, Norm norm);
double matrix_norm(const Matrix& m, Norm norm);

double frobenius_norm(const Matrix& m);

// Largest singular value via power iteration on M^T M. The start vector is
// drawn from a fixed seed so results do not depend on call history.
// Throws ConvergenceError after 10 000 iterations.
double spectral_norm(const Matrix& m, double tol = 1e-12);

// Orthonormal basis of span(vs), rank decided by column-pivoted Householder
// QR with threshold 1e-12 relative to the largest column norm.
std::vector<Vector> orthonormal_basis(std::span<const Vector> vs, Index dim);

// d - rank(vs) orthonormal vectors orthogonal to every input.
std::vector<Vector> orthonormal_complement(std::span<const Vector> vs, Index dim);

struct EigenExtremes {
    double min;
    double max;
};

// Smallest and largest eigenvalues with |imag| < 1e-9, or nullopt when the
// spectrum has no real eigenvalue.
std::optional<EigenExtremes> real_eigen_extremes(const Matrix& a);

// std::mt19937_64 is fully specified by the standard; the distributions are
// not, so uniform/normal transforms are done here to keep streams identical
// across standard library implementations.
class Rng {
public:
    explicit Rng(std::uint64_t seed);

    double uniform();                 // [0, 1)
    double uniform(double lo, double hi);
    double normal();                  // standard normal, Box-Muller
    std::uint64_t next_u64();
    Index below(Index n);             // uniform integer in [0, n)

private:
    std::mt19937_64 engine_;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

Vector sample_normal(Index d, Rng& rng);
Matrix sample_normal(Index rows, Index cols, Rng& rng);

// Uniform draw from the radius-r ball of the given norm (a cube for linf).
Vector sample_ball(Index d, double r, Norm norm, Rng& rng);
Vector sample_ball(Index d, double r, Norm norm, std::uint64_t seed);

// d x m matrix with every column drawn from the radius-r ball.
Matrix sample_ball_columns(Index d, Index m, double r, Norm norm, Rng& rng);

// Radially shrinks v onto the radius-r ball; vectors inside are unchanged.
void project_to_ball(Eigen::Ref<Vector> v, double r, Norm norm);

} // namespace plab
