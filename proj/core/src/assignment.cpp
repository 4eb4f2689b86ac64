#include "promptlab/assignment.hpp"

#include "promptlab/errors.hpp"

#include <limits>

namespace plab {

Assignment solve_assignment(const Matrix& cost)
{
    if (cost.rows() != cost.cols()) throw ShapeError("solve_assignment: cost matrix must be square");
    const Index n = cost.rows();
    Assignment result;
    if (n == 0) return result;
    if (!cost.allFinite()) throw PreconditionError("solve_assignment: costs must be finite");

    constexpr double inf = std::numeric_limits<double>::infinity();
    // 1-based arrays; index 0 is the virtual column used to seed each row.
    std::vector<double> row_pot(static_cast<std::size_t>(n + 1), 0.0);
    std::vector<double> col_pot(static_cast<std::size_t>(n + 1), 0.0);
    std::vector<Index> row_of_col(static_cast<std::size_t>(n + 1), 0);
    std::vector<Index> way(static_cast<std::size_t>(n + 1), 0);

    for (Index i = 1; i <= n; ++i) {
        row_of_col[0] = i;
        Index j0 = 0;
        std::vector<double> min_slack(static_cast<std::size_t>(n + 1), inf);
        std::vector<char> used(static_cast<std::size_t>(n + 1), 0);
        do {
            used[j0] = 1;
            const Index i0 = row_of_col[j0];
            double delta = inf;
            Index j1 = 0;
            for (Index j = 1; j <= n; ++j) {
                if (used[j]) continue;
                const double cur = cost(i0 - 1, j - 1) - row_pot[i0] - col_pot[j];
                if (cur < min_slack[j]) {
                    min_slack[j] = cur;
                    way[j] = j0;
                }
                if (min_slack[j] < delta) {
                    delta = min_slack[j];
                    j1 = j;
                }
            }
            for (Index j = 0; j <= n; ++j) {
                if (used[j]) {
                    row_pot[row_of_col[j]] += delta;
                    col_pot[j] -= delta;
                } else {
                    min_slack[j] -= delta;
                }
            }
            j0 = j1;
        } while (row_of_col[j0] != 0);
        do {
            const Index j1 = way[j0];
            row_of_col[j0] = row_of_col[j1];
            j0 = j1;
        } while (j0 != 0);
    }

    result.column_of_row.assign(static_cast<std::size_t>(n), 0);
    for (Index j = 1; j <= n; ++j) result.column_of_row[row_of_col[j] - 1] = j - 1;
    // Sum the chosen entries directly rather than trusting the potentials.
    for (Index i = 0; i < n; ++i) result.cost += cost(i, result.column_of_row[i]);
    return result;
}

} // namespace plab
