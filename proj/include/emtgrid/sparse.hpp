#pragma once

#include <vector>

#include <Eigen/Dense>

#include "emtgrid/common.hpp"

namespace emtgrid {

/// CSR structure of a square matrix, columns ascending within each row.
struct SparsePattern {
    int dim = 0;
    std::vector<int> row_ptr;  // dim+1
    std::vector<int> col_idx;  // nnz

    [[nodiscard]] int nnz() const { return static_cast<int>(col_idx.size()); }
    /// Entry index of (row, col), -1 when not in the pattern.
    [[nodiscard]] int find(int row, int col) const;

    bool operator==(const SparsePattern&) const = default;
};

/// Builds a pattern from (row, col) pairs; duplicates collapse.
SparsePattern pattern_from_pairs(int dim, std::vector<std::pair<int, int>> pairs);

/// The system conductance matrix: shared pattern plus values in siemens.
struct SparseConductanceMatrix {
    SparsePattern pattern;
    std::vector<double> values;  // nnz

    [[nodiscard]] Eigen::MatrixXd dense() const;
};

/// Fill-in structure of the no-pivot LU factorization. L is strictly lower
/// with implicit unit diagonal; U is upper including the diagonal, which is
/// always first in its row. Row permutation is the identity: the nodal
/// conductance matrices this solver targets are stamped symmetric positive
/// definite, so static pivoting keeps the factorization deterministic and
/// lane-batchable.
struct LuSymbolic {
    int dim = 0;
    std::vector<int> l_row_ptr, l_col;
    std::vector<int> u_row_ptr, u_col;

    [[nodiscard]] int l_nnz() const { return static_cast<int>(l_col.size()); }
    [[nodiscard]] int u_nnz() const { return static_cast<int>(u_col.size()); }

    bool operator==(const LuSymbolic&) const = default;
};

LuSymbolic lu_symbolic(const SparsePattern& a);

/// Numeric factorization over `width` independent value lanes stored
/// slot-major (value[k*width + lane]). Each lane performs exactly the
/// operation sequence of a width-1 factorization. `scratch` needs
/// dim*width doubles. Throws SingularMatrix when a pivot magnitude falls
/// below 1e-12 times the lane's largest input entry.
void lu_factor(const LuSymbolic& sym, const SparsePattern& a, const double* a_values,
               int width, double* l_values, double* u_values, double* scratch);

/// In-place forward/backward substitution on `x` (dim*width, slot-major).
void lu_solve(const LuSymbolic& sym, const double* l_values, const double* u_values,
              int width, double* x);

/// Width-1 conveniences over Eigen vectors.
struct LuFactors {
    LuSymbolic symbolic;
    std::vector<double> l_values, u_values;
};

LuFactors factorize(const SparseConductanceMatrix& matrix);
Eigen::VectorXd forward_backward_solve(const LuFactors& factors,
                                       const Eigen::VectorXd& injections);

}  // namespace emtgrid
