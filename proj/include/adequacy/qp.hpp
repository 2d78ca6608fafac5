#pragma once

// Small dense convex QP:  min ½ xᵀGx + cᵀx  s.t.  A_eqᵀx = b_eq,  A_inᵀx ≥ b_in
// with G symmetric positive definite. Primal active-set method started from
// a feasible point.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <vector>

namespace adequacy {

struct QpProblem {
    Eigen::MatrixXd G;
    Eigen::VectorXd c;
    Eigen::MatrixXd A_eq;  // n × m_eq, one constraint per column
    Eigen::VectorXd b_eq;
    Eigen::MatrixXd A_in;  // n × m_in
    Eigen::VectorXd b_in;
};

struct QpResult {
    Eigen::VectorXd x;
    Eigen::VectorXd lambda_eq;
    Eigen::VectorXd lambda_in;  // ≥ 0, zero for inactive constraints
    int iterations = 0;
    double kkt_residual = 0.0;
};

/// Max of stationarity, primal infeasibility, dual infeasibility and
/// complementarity violations.
inline double kkt_residual(const QpProblem& qp, const Eigen::VectorXd& x, const Eigen::VectorXd& lambda_eq,
                           const Eigen::VectorXd& lambda_in) {
    Eigen::VectorXd stationarity = qp.G * x + qp.c;
    if (qp.A_eq.cols() > 0) stationarity -= qp.A_eq * lambda_eq;
    if (qp.A_in.cols() > 0) stationarity -= qp.A_in * lambda_in;
    double r = stationarity.cwiseAbs().maxCoeff();
    if (qp.A_eq.cols() > 0) r = std::max(r, (qp.A_eq.transpose() * x - qp.b_eq).cwiseAbs().maxCoeff());
    if (qp.A_in.cols() > 0) {
        const Eigen::VectorXd slack = qp.A_in.transpose() * x - qp.b_in;
        for (Eigen::Index i = 0; i < slack.size(); ++i) {
            r = std::max(r, -slack[i]);
            r = std::max(r, -lambda_in[i]);
            r = std::max(r, std::abs(lambda_in[i] * slack[i]));
        }
    }
    return r;
}

inline QpResult solve_qp_active_set(const QpProblem& qp, Eigen::VectorXd x, int max_iterations = 5000) {
    const Eigen::Index n = qp.G.rows();
    const Eigen::Index m_eq = qp.A_eq.cols();
    const Eigen::Index m_in = qp.A_in.cols();
    const double feas_tol = 1e-9;
    if (m_eq > 0 && (qp.A_eq.transpose() * x - qp.b_eq).cwiseAbs().maxCoeff() > feas_tol)
        throw std::invalid_argument("solve_qp_active_set: start violates equality constraints");
    if (m_in > 0 && (qp.A_in.transpose() * x - qp.b_in).minCoeff() < -feas_tol)
        throw std::invalid_argument("solve_qp_active_set: start violates inequality constraints");

    const Eigen::LLT<Eigen::MatrixXd> g_chol(qp.G);
    if (g_chol.info() != Eigen::Success) throw std::invalid_argument("solve_qp_active_set: G is not positive definite");

    std::vector<Eigen::Index> working;  // active inequality indices
    QpResult res;
    for (res.iterations = 0; res.iterations < max_iterations; ++res.iterations) {
        const Eigen::Index k = m_eq + static_cast<Eigen::Index>(working.size());
        Eigen::MatrixXd A(n, k);
        if (m_eq > 0) A.leftCols(m_eq) = qp.A_eq;
        for (std::size_t j = 0; j < working.size(); ++j) A.col(m_eq + static_cast<Eigen::Index>(j)) = qp.A_in.col(working[j]);

        // Stationary point on the working set: Gp + g = Aλ, Aᵀp = 0.
        const Eigen::VectorXd g = qp.G * x + qp.c;
        Eigen::VectorXd lambda = Eigen::VectorXd::Zero(k);
        Eigen::VectorXd p;
        if (k > 0) {
            const Eigen::MatrixXd GinvA = g_chol.solve(A);
            const Eigen::MatrixXd S = A.transpose() * GinvA;
            lambda = S.ldlt().solve(A.transpose() * g_chol.solve(g));
            p = GinvA * lambda - g_chol.solve(g);
        } else {
            p = -g_chol.solve(g);
        }

        const double scale = std::max(1.0, x.cwiseAbs().maxCoeff());
        if (p.cwiseAbs().maxCoeff() <= 1e-12 * scale) {
            Eigen::Index drop = -1;
            double most_negative = -1e-12;
            for (std::size_t j = 0; j < working.size(); ++j) {
                const double l = lambda[m_eq + static_cast<Eigen::Index>(j)];
                if (l < most_negative) {
                    most_negative = l;
                    drop = static_cast<Eigen::Index>(j);
                }
            }
            if (drop < 0) {
                res.x = x;
                res.lambda_eq = lambda.head(m_eq);
                res.lambda_in = Eigen::VectorXd::Zero(m_in);
                for (std::size_t j = 0; j < working.size(); ++j)
                    res.lambda_in[working[j]] = std::max(0.0, lambda[m_eq + static_cast<Eigen::Index>(j)]);
                res.kkt_residual = kkt_residual(qp, res.x, res.lambda_eq, res.lambda_in);
                return res;
            }
            working.erase(working.begin() + drop);
            continue;
        }

        double alpha = 1.0;
        Eigen::Index blocking = -1;
        for (Eigen::Index i = 0; i < m_in; ++i) {
            if (std::find(working.begin(), working.end(), i) != working.end()) continue;
            const double ap = qp.A_in.col(i).dot(p);
            if (ap >= -1e-14) continue;
            const double step = std::max(0.0, (qp.b_in[i] - qp.A_in.col(i).dot(x)) / ap);
            if (step < alpha) {
                alpha = step;
                blocking = i;
            }
        }
        x += alpha * p;
        if (blocking >= 0) working.push_back(blocking);
    }
    throw std::runtime_error("solve_qp_active_set: iteration limit reached");
}

}  // namespace adequacy
