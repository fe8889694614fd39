#pragma once

#include <Eigen/Dense>
#include <Eigen/SparseCore>
#include <Eigen/SparseLU>
#include <string>
#include <vector>

#include "nsp_ope/common.hpp"

/// \file linear_solve.hpp
/// Direct solver for the empirical moment systems. Small systems go through
/// a dense LU with a reciprocal-condition estimate; larger systems use a
/// sparse LU (the moment matrices from tabular data are sparse). Both paths
/// verify the residual and raise a computation_error carrying the condition
/// estimate when the system is singular or ill-conditioned.

namespace nspope {

struct SparseSystem {
    int n = 0;
    std::vector<Eigen::Triplet<real_t>> entries;
    std::vector<real_t> rhs;

    explicit SparseSystem(int n_unknowns) : n(n_unknowns), rhs(n_unknowns, 0.0) {}
    void add(int row, int col, real_t value) {
        if (value != 0.0) entries.emplace_back(row, col, value);
    }
};

/// Unknown-count threshold below which a dense LU is used.
inline constexpr int kDenseSolveLimit = 512;

/// Solves the system, returning the solution; `label` names the system in
/// error messages and `diag` receives a condition/residual record.
inline std::vector<real_t> solve_moment_system(const SparseSystem& sys, const std::string& label,
                                               Diagnostics* diag = nullptr,
                                               real_t residual_tol = kMomentTol) {
    if (sys.n == 0) return {};
    Eigen::VectorXd b = Eigen::Map<const Eigen::VectorXd>(sys.rhs.data(), sys.n);
    Eigen::VectorXd x;
    if (sys.n <= kDenseSolveLimit) {
        Eigen::MatrixXd a = Eigen::MatrixXd::Zero(sys.n, sys.n);
        for (const auto& e : sys.entries) a(e.row(), e.col()) += e.value();
        Eigen::FullPivLU<Eigen::MatrixXd> lu(a);
        real_t rcond = lu.rcond();
        if (diag) diag->set_max(label + "_inv_rcond", rcond > 0.0 ? 1.0 / rcond : 1e300);
        if (!lu.isInvertible())
            throw computation_error(label + ": singular moment system (rcond=" +
                                    std::to_string(rcond) + ")");
        x = lu.solve(b);
        real_t resid = (a * x - b).cwiseAbs().maxCoeff();
        if (resid > residual_tol * std::max<real_t>(1.0, b.cwiseAbs().maxCoeff()))
            throw computation_error(label + ": ill-conditioned moment system, residual " +
                                    std::to_string(resid) + " (rcond=" + std::to_string(rcond) +
                                    ")");
    } else {
        Eigen::SparseMatrix<real_t> a(sys.n, sys.n);
        a.setFromTriplets(sys.entries.begin(), sys.entries.end());
        a.makeCompressed();
        Eigen::SparseLU<Eigen::SparseMatrix<real_t>> lu;
        lu.compute(a);
        if (lu.info() != Eigen::Success)
            throw computation_error(label + ": sparse factorization failed (singular system)");
        x = lu.solve(b);
        real_t resid = (a * x - b).cwiseAbs().maxCoeff();
        if (diag) diag->set_max(label + "_residual", resid);
        if (resid > residual_tol * std::max<real_t>(1.0, b.cwiseAbs().maxCoeff()))
            throw computation_error(label + ": ill-conditioned moment system, residual " +
                                    std::to_string(resid));
    }
    return std::vector<real_t>(x.data(), x.data() + sys.n);
}

}  // namespace nspope
