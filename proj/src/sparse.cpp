#include "emtgrid/sparse.hpp"

#include <algorithm>
#include <cmath>
#include <set>

namespace emtgrid {

int SparsePattern::find(int row, int col) const {
    const auto begin = col_idx.begin() + row_ptr[static_cast<std::size_t>(row)];
    const auto end = col_idx.begin() + row_ptr[static_cast<std::size_t>(row) + 1];
    const auto it = std::lower_bound(begin, end, col);
    if (it == end || *it != col) return -1;
    return static_cast<int>(it - col_idx.begin());
}

SparsePattern pattern_from_pairs(int dim, std::vector<std::pair<int, int>> pairs) {
    std::sort(pairs.begin(), pairs.end());
    pairs.erase(std::unique(pairs.begin(), pairs.end()), pairs.end());
    SparsePattern p;
    p.dim = dim;
    p.row_ptr.assign(static_cast<std::size_t>(dim) + 1, 0);
    for (const auto& [r, c] : pairs) ++p.row_ptr[static_cast<std::size_t>(r) + 1];
    for (int r = 0; r < dim; ++r) {
        p.row_ptr[static_cast<std::size_t>(r) + 1] += p.row_ptr[static_cast<std::size_t>(r)];
    }
    p.col_idx.reserve(pairs.size());
    for (const auto& [r, c] : pairs) p.col_idx.push_back(c);
    return p;
}

Eigen::MatrixXd SparseConductanceMatrix::dense() const {
    Eigen::MatrixXd out = Eigen::MatrixXd::Zero(pattern.dim, pattern.dim);
    for (int r = 0; r < pattern.dim; ++r) {
        for (int k = pattern.row_ptr[static_cast<std::size_t>(r)];
             k < pattern.row_ptr[static_cast<std::size_t>(r) + 1]; ++k) {
            out(r, pattern.col_idx[static_cast<std::size_t>(k)]) =
                values[static_cast<std::size_t>(k)];
        }
    }
    return out;
}

LuSymbolic lu_symbolic(const SparsePattern& a) {
    LuSymbolic sym;
    sym.dim = a.dim;
    sym.l_row_ptr.assign(static_cast<std::size_t>(a.dim) + 1, 0);
    sym.u_row_ptr.assign(static_cast<std::size_t>(a.dim) + 1, 0);

    // Row-by-row reachability: the pattern of row i is A's row plus, for
    // every settled column k < i, the tail of U's row k.
    std::vector<std::set<int>> u_rows(static_cast<std::size_t>(a.dim));
    for (int i = 0; i < a.dim; ++i) {
        std::set<int> cols;
        for (int k = a.row_ptr[static_cast<std::size_t>(i)];
             k < a.row_ptr[static_cast<std::size_t>(i) + 1]; ++k) {
            cols.insert(a.col_idx[static_cast<std::size_t>(k)]);
        }
        cols.insert(i);  // structural diagonal; numeric zero trips the pivot check
        for (auto it = cols.begin(); it != cols.end() && *it < i; ++it) {
            for (int j : u_rows[static_cast<std::size_t>(*it)]) {
                if (j > *it) cols.insert(j);
            }
        }
        for (int c : cols) {
            if (c < i) {
                sym.l_col.push_back(c);
            } else {
                u_rows[static_cast<std::size_t>(i)].insert(c);
                sym.u_col.push_back(c);
            }
        }
        sym.l_row_ptr[static_cast<std::size_t>(i) + 1] = static_cast<int>(sym.l_col.size());
        sym.u_row_ptr[static_cast<std::size_t>(i) + 1] = static_cast<int>(sym.u_col.size());
    }
    return sym;
}

void lu_factor(const LuSymbolic& sym, const SparsePattern& a, const double* a_values,
               int width, double* l_values, double* u_values, double* scratch) {
    const int n = sym.dim;
    const std::size_t w = static_cast<std::size_t>(width);

    std::vector<double> max_abs(w, 0.0);
    for (int k = 0; k < a.nnz(); ++k) {
        for (std::size_t lane = 0; lane < w; ++lane) {
            max_abs[lane] = std::max(max_abs[lane],
                                     std::abs(a_values[static_cast<std::size_t>(k) * w + lane]));
        }
    }

    // u_diag[i]: index of U(i,i), always first in its row.
    for (int i = 0; i < n; ++i) {
        // Scatter row i of A over the union pattern, fill positions zero.
        for (int k = sym.l_row_ptr[static_cast<std::size_t>(i)];
             k < sym.l_row_ptr[static_cast<std::size_t>(i) + 1]; ++k) {
            double* cell = scratch + static_cast<std::size_t>(sym.l_col[static_cast<std::size_t>(k)]) * w;
            for (std::size_t lane = 0; lane < w; ++lane) cell[lane] = 0.0;
        }
        for (int k = sym.u_row_ptr[static_cast<std::size_t>(i)];
             k < sym.u_row_ptr[static_cast<std::size_t>(i) + 1]; ++k) {
            double* cell = scratch + static_cast<std::size_t>(sym.u_col[static_cast<std::size_t>(k)]) * w;
            for (std::size_t lane = 0; lane < w; ++lane) cell[lane] = 0.0;
        }
        for (int k = a.row_ptr[static_cast<std::size_t>(i)];
             k < a.row_ptr[static_cast<std::size_t>(i) + 1]; ++k) {
            double* cell = scratch + static_cast<std::size_t>(a.col_idx[static_cast<std::size_t>(k)]) * w;
            const double* src = a_values + static_cast<std::size_t>(k) * w;
            for (std::size_t lane = 0; lane < w; ++lane) cell[lane] = src[lane];
        }

        // Eliminate with settled rows, ascending columns.
        for (int k = sym.l_row_ptr[static_cast<std::size_t>(i)];
             k < sym.l_row_ptr[static_cast<std::size_t>(i) + 1]; ++k) {
            const int col = sym.l_col[static_cast<std::size_t>(k)];
            const int u_row_begin = sym.u_row_ptr[static_cast<std::size_t>(col)];
            const double* u_diag = u_values + static_cast<std::size_t>(u_row_begin) * w;
            double* lik = l_values + static_cast<std::size_t>(k) * w;
            double* wcol = scratch + static_cast<std::size_t>(col) * w;
            for (std::size_t lane = 0; lane < w; ++lane) lik[lane] = wcol[lane] / u_diag[lane];
            for (int j = u_row_begin + 1; j < sym.u_row_ptr[static_cast<std::size_t>(col) + 1]; ++j) {
                double* wj = scratch + static_cast<std::size_t>(sym.u_col[static_cast<std::size_t>(j)]) * w;
                const double* ukj = u_values + static_cast<std::size_t>(j) * w;
                for (std::size_t lane = 0; lane < w; ++lane) wj[lane] -= lik[lane] * ukj[lane];
            }
        }

        for (int k = sym.u_row_ptr[static_cast<std::size_t>(i)];
             k < sym.u_row_ptr[static_cast<std::size_t>(i) + 1]; ++k) {
            double* cell = scratch + static_cast<std::size_t>(sym.u_col[static_cast<std::size_t>(k)]) * w;
            double* dst = u_values + static_cast<std::size_t>(k) * w;
            for (std::size_t lane = 0; lane < w; ++lane) dst[lane] = cell[lane];
        }

        const double* diag =
            u_values + static_cast<std::size_t>(sym.u_row_ptr[static_cast<std::size_t>(i)]) * w;
        for (std::size_t lane = 0; lane < w; ++lane) {
            if (!(std::abs(diag[lane]) > 1e-12 * max_abs[lane])) {
                fail(ErrorCode::SingularMatrix, "row " + std::to_string(i),
                     "zero pivot below tolerance" +
                         (width > 1 ? " in lane " + std::to_string(lane) : std::string()));
            }
        }
    }
}

void lu_solve(const LuSymbolic& sym, const double* l_values, const double* u_values,
              int width, double* x) {
    const int n = sym.dim;
    const std::size_t w = static_cast<std::size_t>(width);

    for (int i = 0; i < n; ++i) {
        double* xi = x + static_cast<std::size_t>(i) * w;
        for (int k = sym.l_row_ptr[static_cast<std::size_t>(i)];
             k < sym.l_row_ptr[static_cast<std::size_t>(i) + 1]; ++k) {
            const double* xk = x + static_cast<std::size_t>(sym.l_col[static_cast<std::size_t>(k)]) * w;
            const double* lik = l_values + static_cast<std::size_t>(k) * w;
            for (std::size_t lane = 0; lane < w; ++lane) xi[lane] -= lik[lane] * xk[lane];
        }
    }
    for (int i = n - 1; i >= 0; --i) {
        double* xi = x + static_cast<std::size_t>(i) * w;
        const int row_begin = sym.u_row_ptr[static_cast<std::size_t>(i)];
        for (int k = row_begin + 1; k < sym.u_row_ptr[static_cast<std::size_t>(i) + 1]; ++k) {
            const double* xj = x + static_cast<std::size_t>(sym.u_col[static_cast<std::size_t>(k)]) * w;
            const double* uij = u_values + static_cast<std::size_t>(k) * w;
            for (std::size_t lane = 0; lane < w; ++lane) xi[lane] -= uij[lane] * xj[lane];
        }
        const double* diag = u_values + static_cast<std::size_t>(row_begin) * w;
        for (std::size_t lane = 0; lane < w; ++lane) xi[lane] /= diag[lane];
    }
}

LuFactors factorize(const SparseConductanceMatrix& matrix) {
    if (matrix.pattern.dim == 0) {
        fail(ErrorCode::DimensionMismatch, "", "cannot factorize an empty matrix");
    }
    LuFactors f;
    f.symbolic = lu_symbolic(matrix.pattern);
    f.l_values.assign(static_cast<std::size_t>(f.symbolic.l_nnz()), 0.0);
    f.u_values.assign(static_cast<std::size_t>(f.symbolic.u_nnz()), 0.0);
    std::vector<double> scratch(static_cast<std::size_t>(matrix.pattern.dim), 0.0);
    lu_factor(f.symbolic, matrix.pattern, matrix.values.data(), 1, f.l_values.data(),
              f.u_values.data(), scratch.data());
    return f;
}

Eigen::VectorXd forward_backward_solve(const LuFactors& factors,
                                       const Eigen::VectorXd& injections) {
    if (injections.size() != factors.symbolic.dim) {
        fail(ErrorCode::DimensionMismatch, "",
             "injection vector length " + std::to_string(injections.size()) +
                 " does not match dimension " + std::to_string(factors.symbolic.dim));
    }
    Eigen::VectorXd x = injections;
    lu_solve(factors.symbolic, factors.l_values.data(), factors.u_values.data(), 1, x.data());
    return x;
}

}  // namespace emtgrid
