#pragma once

// =============================================================================
// Dense smooth NLP solver
// =============================================================================
// minimize f(z)  s.t.  c_E(z) = 0,  c_I(z) <= 0,  lb <= z <= ub
//
// Primal-dual interior point: slacks for general inequalities, log barriers
// on variable bounds (iterates stay strictly inside the bound box, so
// evaluators are only called there), damped-BFGS approximation of the
// Lagrangian Hessian, monotone barrier reduction (x0.2), fraction-to-boundary
// 0.995, and an l1 merit line search. The condensed primal block is kept
// positive definite by construction, so the Newton system is solved by two
// SPD factorizations (primal block, then the equality Schur complement) with
// delta-regularization standing in for inertia correction.
//
// Desk-scale only: everything is dense. Determinism: fixed iteration order,
// no randomness, no time-dependent heuristics.
// =============================================================================

#include <cmath>
#include <cstdlib>
#include <functional>
#include <iostream>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/Dense>

#include <lapacke.h>

namespace dlr::nlp {

using Eigen::MatrixXd;
using Eigen::VectorXd;

inline constexpr double kInf = std::numeric_limits<double>::infinity();

enum class Status { Converged, MaxIter, Diverged };

inline const char* to_string(Status s) {
    switch (s) {
        case Status::Converged: return "Converged";
        case Status::MaxIter: return "MaxIter";
        case Status::Diverged: return "Diverged";
    }
    return "?";
}

struct Problem {
    int n = 0;
    /// Returns f(z); fills the gradient when grad != nullptr.
    std::function<double(const VectorXd&, VectorXd*)> objective;
    int m_eq = 0;
    /// Fills c (size m_eq) and, when J != nullptr, the m_eq x n Jacobian.
    std::function<void(const VectorXd&, VectorXd&, MatrixXd*)> eq;
    int m_ineq = 0;
    std::function<void(const VectorXd&, VectorXd&, MatrixXd*)> ineq;
    VectorXd lb, ub;  ///< sized n; use +-inf for absent bounds
    VectorXd z0;
    /// Optional diagonal estimate of the objective curvature. Seeds the BFGS
    /// matrix so stiff quadratics (large penalty terms) start at the right
    /// scale instead of identity.
    VectorXd hess_diag0;
    /// Optional exact Hessian of sigma*f + lam'c_E + mu'c_I (no barrier
    /// terms). When supplied, it replaces the BFGS approximation; indefinite
    /// directions are handled by the regularization loop.
    std::function<void(const VectorXd& z, double sigma, const VectorXd& lam,
                       const VectorXd& mu, MatrixXd& W)>
        lagr_hessian;
};

struct Result {
    VectorXd point;
    VectorXd mult_eq;     ///< equality multipliers
    VectorXd mult_ineq;   ///< inequality multipliers, >= 0
    VectorXd mult_lb;     ///< lower-bound multipliers, >= 0
    VectorXd mult_ub;     ///< upper-bound multipliers, >= 0
    double objective = 0.0;
    double kkt_residual = 0.0;  ///< infinity-norm KKT error of the scaled problem
    int iterations = 0;
    Status status = Status::MaxIter;
};

struct Options {
    double tol = 1e-6;
    int max_iter = 300;
    double mu0 = 0.1;
    double tau_boundary = 0.995;
    double mu_shrink = 0.2;
};

namespace detail {

struct Inertia {
    int pos = 0, neg = 0, zero = 0;
};

/// Bunch-Kaufman LDL^T in place (lower triangle); returns false only on a
/// LAPACK argument error. Inertia is read off the block-diagonal factor.
inline bool ldlt_inertia(MatrixXd& K, std::vector<lapack_int>& ipiv,
                         Inertia& inertia) {
    const lapack_int nn = lapack_int(K.rows());
    ipiv.assign(nn, 0);
    const lapack_int info =
        LAPACKE_dsytrf(LAPACK_COL_MAJOR, 'L', nn, K.data(), nn, ipiv.data());
    if (info < 0) return false;
    inertia = {};
    for (lapack_int k = 0; k < nn;) {
        if (ipiv[k] > 0) {
            const double d = K(k, k);
            if (d > 0) {
                ++inertia.pos;
            } else if (d < 0) {
                ++inertia.neg;
            } else {
                ++inertia.zero;
            }
            ++k;
        } else {
            const double d11 = K(k, k), d22 = K(k + 1, k + 1), d21 = K(k + 1, k);
            const double det = d11 * d22 - d21 * d21;
            if (det < 0) {
                ++inertia.pos;
                ++inertia.neg;
            } else if (det > 0) {
                if (d11 + d22 > 0) inertia.pos += 2; else inertia.neg += 2;
            } else {
                inertia.zero += 2;
            }
            k += 2;
        }
    }
    return true;
}

inline bool ldlt_solve(const MatrixXd& K, const std::vector<lapack_int>& ipiv,
                       VectorXd& rhs) {
    const lapack_int nn = lapack_int(K.rows());
    return LAPACKE_dsytrs(LAPACK_COL_MAJOR, 'L', nn, 1, K.data(), nn,
                          ipiv.data(), rhs.data(), nn) == 0;
}

struct Eval {
    double f = 0.0;
    VectorXd grad;
    VectorXd ce, ci;
    MatrixXd je, ji;
};

inline void evaluate(const Problem& p, const VectorXd& z, Eval& e) {
    e.grad.resize(p.n);
    e.f = p.objective(z, &e.grad);
    e.ce.resize(p.m_eq);
    e.je.resize(p.m_eq, p.n);
    if (p.m_eq > 0) p.eq(z, e.ce, &e.je);
    e.ci.resize(p.m_ineq);
    e.ji.resize(p.m_ineq, p.n);
    if (p.m_ineq > 0) p.ineq(z, e.ci, &e.ji);
}

}  // namespace detail

inline Result minimize(const Problem& p, const Options& opt = {}) {
    if (p.n <= 0 || !p.objective) throw std::invalid_argument("nlp: empty problem");
    if (p.m_eq > 0 && !p.eq) throw std::invalid_argument("nlp: missing eq evaluator");
    if (p.m_ineq > 0 && !p.ineq) throw std::invalid_argument("nlp: missing ineq evaluator");

    const int n = p.n, me = p.m_eq, mi = p.m_ineq;
    VectorXd lb = p.lb.size() ? p.lb : VectorXd::Constant(n, -kInf);
    VectorXd ub = p.ub.size() ? p.ub : VectorXd::Constant(n, kInf);

    // Fixed coordinates (lb == ub) are pinned and excluded from the barrier.
    std::vector<bool> fixed(n, false), has_lb(n, false), has_ub(n, false);
    for (int i = 0; i < n; ++i) {
        if (ub[i] - lb[i] <= 1e-12) {
            fixed[i] = true;
        } else {
            has_lb[i] = std::isfinite(lb[i]);
            has_ub[i] = std::isfinite(ub[i]);
        }
    }

    // Interior starting point.
    VectorXd z = p.z0.size() ? p.z0 : VectorXd::Zero(n);
    for (int i = 0; i < n; ++i) {
        if (fixed[i]) {
            z[i] = lb[i];
            continue;
        }
        const double width = ub[i] - lb[i];
        if (has_lb[i]) {
            const double push = std::isfinite(width)
                                    ? std::min(1e-2 * std::max(1.0, std::abs(lb[i])),
                                               0.25 * width)
                                    : 1e-2 * std::max(1.0, std::abs(lb[i]));
            z[i] = std::max(z[i], lb[i] + push);
        }
        if (has_ub[i]) {
            const double push = std::isfinite(width)
                                    ? std::min(1e-2 * std::max(1.0, std::abs(ub[i])),
                                               0.25 * width)
                                    : 1e-2 * std::max(1.0, std::abs(ub[i]));
            z[i] = std::min(z[i], ub[i] - push);
        }
    }

    detail::Eval ev;
    detail::evaluate(p, z, ev);

    // Objective scaling so the initial gradient is O(100).
    const double gmax = ev.grad.lpNorm<Eigen::Infinity>();
    const double sigma = std::min(1.0, 100.0 / std::max(gmax, 1e-8));

    double mu = opt.mu0;
    VectorXd s(mi), mu_i(mi);
    for (int i = 0; i < mi; ++i) {
        s[i] = std::max(1e-2, -ev.ci[i]);
        mu_i[i] = mu / s[i];
    }
    VectorXd lam = VectorXd::Zero(me);
    VectorXd zl = VectorXd::Zero(n), zu = VectorXd::Zero(n);
    for (int i = 0; i < n; ++i) {
        if (has_lb[i]) zl[i] = mu / (z[i] - lb[i]);
        if (has_ub[i]) zu[i] = mu / (ub[i] - z[i]);
    }

    double nu = 1.0;        // l1 merit penalty
    double delta_x = 0.0;   // primal regularization carried between iterations

    auto stationarity = [&](const detail::Eval& e, VectorXd& out) {
        out = sigma * e.grad;
        if (me) out.noalias() += e.je.transpose() * lam;
        if (mi) out.noalias() += e.ji.transpose() * mu_i;
        out -= zl;
        out += zu;
        for (int i = 0; i < n; ++i)
            if (fixed[i]) out[i] = 0.0;
    };

    auto kkt_error = [&](const detail::Eval& e, double mu_target) {
        VectorXd st;
        stationarity(e, st);
        double mult_sum = lam.lpNorm<1>() + mu_i.lpNorm<1>() + zl.lpNorm<1>() + zu.lpNorm<1>();
        int mult_cnt = me + mi + 2 * n;
        const double sd = std::max(100.0, mult_sum / std::max(1, mult_cnt)) / 100.0;
        double err = st.lpNorm<Eigen::Infinity>() / sd;
        if (me) err = std::max(err, e.ce.lpNorm<Eigen::Infinity>());
        for (int i = 0; i < mi; ++i) {
            err = std::max(err, std::abs(e.ci[i] + s[i]));
            err = std::max(err, std::abs(s[i] * mu_i[i] - mu_target) / sd);
        }
        for (int i = 0; i < n; ++i) {
            if (has_lb[i]) err = std::max(err, std::abs((z[i] - lb[i]) * zl[i] - mu_target) / sd);
            if (has_ub[i]) err = std::max(err, std::abs((ub[i] - z[i]) * zu[i] - mu_target) / sd);
        }
        return err;
    };

    auto merit = [&](const detail::Eval& e, const VectorXd& zz, const VectorXd& ss) {
        double phi = sigma * e.f;
        for (int i = 0; i < mi; ++i) phi -= mu * std::log(ss[i]);
        for (int i = 0; i < n; ++i) {
            if (has_lb[i]) phi -= mu * std::log(zz[i] - lb[i]);
            if (has_ub[i]) phi -= mu * std::log(ub[i] - zz[i]);
        }
        double viol = e.ce.lpNorm<1>();
        for (int i = 0; i < mi; ++i) viol += std::abs(e.ci[i] + ss[i]);
        return phi + nu * viol;
    };

    const bool exact_hessian = bool(p.lagr_hessian);
    MatrixXd W = MatrixXd::Identity(n, n);  // Lagrangian Hessian (estimate)
    if (!exact_hessian && p.hess_diag0.size() == n) {
        for (int i = 0; i < n; ++i) {
            W(i, i) = std::clamp(sigma * p.hess_diag0[i], 1.0, 1e12);
        }
    }

    Result res;
    res.status = Status::MaxIter;
    int it = 0;
    for (; it < opt.max_iter; ++it) {
        const double err0 = kkt_error(ev, 0.0);
        if (err0 <= opt.tol) {
            res.status = Status::Converged;
            break;
        }
        if (!std::isfinite(ev.f) || std::abs(ev.f) > 1e14 ||
            z.lpNorm<Eigen::Infinity>() > 1e12) {
            res.status = Status::Diverged;
            break;
        }
        bool mu_dropped = false;
        while (mu > 1e-11 && kkt_error(ev, mu) <= 10.0 * mu) {
            const double next =
                std::max(opt.tol / 10.0, std::min(opt.mu_shrink * mu, std::pow(mu, 1.5)));
            if (next >= mu) break;  // floor reached
            mu = next;
            mu_dropped = true;
        }
        if (mu_dropped && !exact_hessian) {
            // curvature of the barrier changes regime with mu; stale
            // quasi-Newton information is worse than the seed
            W = MatrixXd::Identity(n, n);
            if (p.hess_diag0.size() == n) {
                for (int i = 0; i < n; ++i)
                    W(i, i) = std::clamp(sigma * p.hess_diag0[i], 1.0, 1e12);
            }
        }
        if (exact_hessian) p.lagr_hessian(z, sigma, lam, mu_i, W);

        // --- assemble condensed system -----------------------------------
        VectorXd g1;
        stationarity(ev, g1);

        VectorXd sigma_i(mi), h_i(mi);
        for (int i = 0; i < mi; ++i) {
            sigma_i[i] = mu_i[i] / s[i];
            h_i[i] = mu / s[i] - mu_i[i] + sigma_i[i] * (ev.ci[i] + s[i]);
        }
        VectorXd dbar = VectorXd::Zero(n);  // bound barrier curvature
        VectorXd abl = VectorXd::Zero(n), abu = VectorXd::Zero(n);
        for (int i = 0; i < n; ++i) {
            if (has_lb[i]) {
                const double sl = z[i] - lb[i];
                dbar[i] += zl[i] / sl;
                abl[i] = (mu - sl * zl[i]) / sl;
            }
            if (has_ub[i]) {
                const double su = ub[i] - z[i];
                dbar[i] += zu[i] / su;
                abu[i] = (mu - su * zu[i]) / su;
            }
        }

        MatrixXd H = W;
        if (mi) H.noalias() += ev.ji.transpose() * sigma_i.asDiagonal() * ev.ji;
        H.diagonal() += dbar;

        VectorXd rhs1 = -g1 + abl - abu;
        if (mi) rhs1.noalias() -= ev.ji.transpose() * h_i;

        MatrixXd jef = ev.je;
        for (int i = 0; i < n; ++i) {
            if (!fixed[i]) continue;
            H.row(i).setZero();
            H.col(i).setZero();
            H(i, i) = 1.0;
            rhs1[i] = 0.0;
            if (me) jef.col(i).setZero();
        }

        // --- inertia-corrected step ------------------------------------------
        // Factor the full KKT matrix [H J_E'; J_E -dc I]. The step is a
        // proper descent direction exactly when the inertia is (n, me, 0);
        // otherwise shift the primal block (negative curvature) or the dual
        // block (rank-deficient J_E) and refactor.
        const double hscale = 1.0 + H.diagonal().cwiseAbs().maxCoeff();
        VectorXd dz(n), dlam(me);
        double dx_try = 0.0;
        double dc_try = 0.0;
        double used_dx = 0.0;
        bool step_ok = false;
        MatrixXd K(n + me, n + me);
        std::vector<lapack_int> ipiv;
        for (int attempt = 0; attempt < 80 && !step_ok; ++attempt) {
            K.setZero();
            K.topLeftCorner(n, n) = H;
            if (dx_try > 0.0) K.topLeftCorner(n, n).diagonal().array() += dx_try;
            if (me > 0) {
                K.bottomLeftCorner(me, n) = jef;
                K.topRightCorner(n, me) = jef.transpose();
                K.bottomRightCorner(me, me).diagonal().setConstant(-dc_try);
            }
            detail::Inertia inertia;
            if (!detail::ldlt_inertia(K, ipiv, inertia)) {
                res.status = Status::Diverged;
                break;
            }
            if (inertia.zero > 0 && dc_try < hscale) {
                dc_try = (dc_try == 0.0) ? 1e-10 * hscale : dc_try * 100.0;
                continue;
            }
            if (inertia.pos != n || inertia.neg != me) {
                dx_try = (dx_try == 0.0)
                             ? ((delta_x > 0.0) ? delta_x / 3.0 : 1e-8 * hscale)
                             : dx_try * 10.0;
                if (dx_try > 1e16 * hscale) break;
                continue;
            }
            VectorXd sol(n + me);
            sol.head(n) = rhs1;
            if (me) sol.tail(me) = -ev.ce;
            if (!detail::ldlt_solve(K, ipiv, sol) || !sol.allFinite()) {
                dx_try = (dx_try == 0.0) ? 1e-8 * hscale : dx_try * 10.0;
                if (dx_try > 1e16 * hscale) break;
                continue;
            }
            dz = sol.head(n);
            if (me) dlam = sol.tail(me);
            used_dx = dx_try;
            step_ok = true;
        }
        if (!step_ok) {
            if (res.status != Status::Diverged) res.status = Status::Diverged;
            break;
        }
        delta_x = used_dx;  // warm-start the shift search next iteration
        for (int i = 0; i < n; ++i)
            if (fixed[i]) dz[i] = 0.0;

        VectorXd ds(mi), dmu(mi);
        for (int i = 0; i < mi; ++i) {
            const double jidz = ev.ji.row(i).dot(dz);
            ds[i] = -(ev.ci[i] + s[i]) - jidz;
            dmu[i] = h_i[i] + sigma_i[i] * jidz;
        }
        VectorXd dzl = VectorXd::Zero(n), dzu = VectorXd::Zero(n);
        for (int i = 0; i < n; ++i) {
            if (has_lb[i]) dzl[i] = abl[i] - (zl[i] / (z[i] - lb[i])) * dz[i];
            if (has_ub[i]) dzu[i] = abu[i] + (zu[i] / (ub[i] - z[i])) * dz[i];
        }

        // --- fraction to boundary -----------------------------------------
        const double taub = opt.tau_boundary;
        double alpha_p = 1.0, alpha_d = 1.0;
        for (int i = 0; i < mi; ++i) {
            if (ds[i] < 0) alpha_p = std::min(alpha_p, -taub * s[i] / ds[i]);
            if (dmu[i] < 0) alpha_d = std::min(alpha_d, -taub * mu_i[i] / dmu[i]);
        }
        for (int i = 0; i < n; ++i) {
            if (has_lb[i]) {
                if (dz[i] < 0) alpha_p = std::min(alpha_p, -taub * (z[i] - lb[i]) / dz[i]);
                if (dzl[i] < 0) alpha_d = std::min(alpha_d, -taub * zl[i] / dzl[i]);
            }
            if (has_ub[i]) {
                if (dz[i] > 0) alpha_p = std::min(alpha_p, taub * (ub[i] - z[i]) / dz[i]);
                if (dzu[i] < 0) alpha_d = std::min(alpha_d, -taub * zu[i] / dzu[i]);
            }
        }

        // --- merit line search --------------------------------------------
        double viol0 = ev.ce.lpNorm<1>();
        for (int i = 0; i < mi; ++i) viol0 += std::abs(ev.ci[i] + s[i]);

        double dir = sigma * ev.grad.dot(dz);
        for (int i = 0; i < mi; ++i) dir -= mu * ds[i] / s[i];
        for (int i = 0; i < n; ++i) {
            if (has_lb[i]) dir -= mu * dz[i] / (z[i] - lb[i]);
            if (has_ub[i]) dir += mu * dz[i] / (ub[i] - z[i]);
        }
        // model-based penalty update: large enough that the step is a merit
        // descent direction, indifferent to transient dual blow-ups
        if (viol0 > 1e-10) {
            const double qterm =
                0.5 * dz.dot(H * dz) + 0.5 * used_dx * dz.squaredNorm();
            const double nu_req = (dir + std::max(qterm, 0.0)) / (0.5 * viol0);
            const double nu_target = std::max(1e-4, 1.1 * nu_req);
            if (nu < nu_target) {
                nu = nu_target;
            } else if (nu > 10.0 * nu_target) {
                nu = std::max(nu_target, nu / 10.0);
            }
        }
        double dphi = dir - nu * viol0;

        const double phi0 = merit(ev, z, s);
        // merit values are only comparable above roundoff
        const double phi_slack = 1e2 * std::numeric_limits<double>::epsilon() *
                                 (1.0 + std::abs(phi0));
        double alpha = alpha_p;
        detail::Eval ev_trial;
        VectorXd z_trial, s_trial;
        bool accepted = false;
        for (int ls = 0; ls < 40; ++ls) {
            z_trial = z + alpha * dz;
            s_trial = s + alpha * ds;
            detail::evaluate(p, z_trial, ev_trial);
            const double phi1 = merit(ev_trial, z_trial, s_trial);
            if (std::isfinite(phi1) &&
                phi1 <= phi0 + 1e-4 * alpha * std::min(dphi, 0.0) + phi_slack) {
                accepted = true;
                break;
            }
            if (ls == 0 && me > 0) {
                // Second-order correction: re-project the trial point onto
                // the constraint manifold through the factored KKT system
                // (slacks corrected alongside). Cures the Maratos crawl along
                // curved constraint surfaces; up to three rounds.
                VectorXd z_soc = z_trial;
                VectorXd s_soc = s_trial;
                detail::Eval ev_soc = ev_trial;
                bool soc_valid = true;
                for (int round = 0; round < 3 && soc_valid; ++round) {
                    const double ce_before = ev_soc.ce.lpNorm<1>();
                    VectorXd rhs_soc = VectorXd::Zero(n + me);
                    rhs_soc.tail(me) = -ev_soc.ce;
                    if (!detail::ldlt_solve(K, ipiv, rhs_soc) ||
                        !rhs_soc.allFinite()) {
                        break;
                    }
                    VectorXd dzc = rhs_soc.head(n);
                    for (int i = 0; i < n; ++i)
                        if (fixed[i]) dzc[i] = 0.0;
                    VectorXd z_next = z_soc + dzc;
                    VectorXd s_next = s_soc;
                    for (int i = 0; i < mi; ++i) {
                        const double dsc =
                            -(ev_soc.ci[i] + s_soc[i]) - ev_soc.ji.row(i).dot(dzc);
                        s_next[i] = s_soc[i] + dsc;
                    }
                    for (int i = 0; i < n && soc_valid; ++i) {
                        if (has_lb[i] &&
                            z_next[i] - lb[i] < (1 - taub) * (z[i] - lb[i]))
                            soc_valid = false;
                        if (has_ub[i] &&
                            ub[i] - z_next[i] < (1 - taub) * (ub[i] - z[i]))
                            soc_valid = false;
                    }
                    for (int i = 0; i < mi && soc_valid; ++i) {
                        if (s_next[i] < (1 - taub) * s[i]) soc_valid = false;
                    }
                    if (!soc_valid) break;
                    z_soc = std::move(z_next);
                    s_soc = std::move(s_next);
                    detail::evaluate(p, z_soc, ev_soc);
                    const double phi_soc = merit(ev_soc, z_soc, s_soc);
                    if (std::isfinite(phi_soc) &&
                        phi_soc <=
                            phi0 + 1e-4 * alpha * std::min(dphi, 0.0) + phi_slack) {
                        z_trial = std::move(z_soc);
                        s_trial = std::move(s_soc);
                        ev_trial = std::move(ev_soc);
                        accepted = true;
                        break;
                    }
                    // keep correcting only while feasibility improves fast
                    if (ev_soc.ce.lpNorm<1>() > 0.5 * ce_before) break;
                }
                if (accepted) break;
            }
            alpha *= 0.5;
            if (alpha < 1e-12) break;
        }
        if (!accepted) {
            // take the last tiny step anyway; repeated failures end in MaxIter
            z_trial = z + alpha * dz;
            s_trial = s + alpha * ds;
            detail::evaluate(p, z_trial, ev_trial);
        }

        // --- multiplier step and BFGS update ---------------------------------
        VectorXd lam_new = lam + alpha_d * dlam;
        VectorXd mui_new = mu_i + alpha_d * dmu;
        for (int i = 0; i < mi; ++i) mui_new[i] = std::max(mui_new[i], 1e-14);

        if (!exact_hessian) {
            VectorXd lgrad_old = sigma * ev.grad;
            if (me) lgrad_old.noalias() += ev.je.transpose() * lam_new;
            if (mi) lgrad_old.noalias() += ev.ji.transpose() * mui_new;
            VectorXd lgrad_new = sigma * ev_trial.grad;
            if (me) lgrad_new.noalias() += ev_trial.je.transpose() * lam_new;
            if (mi) lgrad_new.noalias() += ev_trial.ji.transpose() * mui_new;

            VectorXd sk = z_trial - z;
            VectorXd yk = lgrad_new - lgrad_old;
            const double sk2 = sk.squaredNorm();
            // negligible steps carry no curvature information, only noise
            const double step_floor = 1e-9 * std::max(1.0, z.norm());
            if (sk2 > step_floor * step_floor) {
                VectorXd Ws = W * sk;
                const double sWs = sk.dot(Ws);
                double sy = sk.dot(yk);
                if (sy < 0.2 * sWs) {  // Powell damping keeps W positive definite
                    const double theta = 0.8 * sWs / (sWs - sy);
                    yk = theta * yk + (1.0 - theta) * Ws;
                    sy = sk.dot(yk);
                }
                if (sy > 1e-14 * sWs && sWs > 0.0) {
                    W.noalias() -= (Ws * Ws.transpose()) / sWs;
                    W.noalias() += (yk * yk.transpose()) / sy;
                }
            }
        }

        if (std::getenv("DLR_NLP_TRACE")) {
            int imax = 0;
            dz.cwiseAbs().maxCoeff(&imax);
            std::cerr << "it=" << it << " mu=" << mu << " E0=" << err0
                      << " f=" << ev.f << " alpha=" << alpha << " ap=" << alpha_p
                      << " dphi=" << dphi << " |dz|=" << dz.norm()
                      << " argdz=" << imax << " dz_i=" << dz[imax]
                      << " z_i=" << z[imax]
                      << " feasE=" << ev.ce.lpNorm<Eigen::Infinity>() << " nu=" << nu
                      << " dx=" << delta_x << "\n";
        }
        z = z_trial;
        s = s_trial;
        ev = ev_trial;
        lam = lam_new;
        mu_i = mui_new;
        for (int i = 0; i < n; ++i) {
            if (has_lb[i]) {
                zl[i] = std::max(zl[i] + alpha_d * dzl[i], 1e-14);
                // keep bound duals near the barrier trajectory
                const double cap = 1e10 * mu / (z[i] - lb[i]);
                zl[i] = std::min(zl[i], std::max(cap, 1e-14));
            }
            if (has_ub[i]) {
                zu[i] = std::max(zu[i] + alpha_d * dzu[i], 1e-14);
                const double cap = 1e10 * mu / (ub[i] - z[i]);
                zu[i] = std::min(zu[i], std::max(cap, 1e-14));
            }
        }
    }

    res.point = z;
    res.iterations = it;
    res.objective = ev.f;
    res.kkt_residual = kkt_error(ev, 0.0);
    // report multipliers of the unscaled problem
    const double gmax2 = 1.0 / std::max(sigma, 1e-300);
    res.mult_eq = lam * gmax2;
    res.mult_ineq = mu_i * gmax2;
    res.mult_lb = zl * gmax2;
    res.mult_ub = zu * gmax2;
    return res;
}

inline Result minimize(const Problem& p, double tol, int max_iter = 300) {
    Options opt;
    opt.tol = tol;
    opt.max_iter = max_iter;
    return minimize(p, opt);
}

/// Max relative error between analytic derivatives and central differences
/// over the objective gradient and all constraint Jacobian rows.
inline double check_derivatives(const Problem& p, const VectorXd& point, double h) {
    VectorXd z = point;
    auto rel = [](double a, double b) {
        return std::abs(a - b) / std::max({1.0, std::abs(a), std::abs(b)});
    };
    double worst = 0.0;

    VectorXd grad(p.n);
    p.objective(z, &grad);
    VectorXd ce0(p.m_eq), ci0(p.m_ineq);
    MatrixXd je(p.m_eq, p.n), ji(p.m_ineq, p.n);
    if (p.m_eq) p.eq(z, ce0, &je);
    if (p.m_ineq) p.ineq(z, ci0, &ji);

    VectorXd cep(p.m_eq), cem(p.m_eq), cip(p.m_ineq), cim(p.m_ineq);
    for (int j = 0; j < p.n; ++j) {
        const double zj = z[j];
        const double hj = h * std::max(1.0, std::abs(zj));
        z[j] = zj + hj;
        const double fp = p.objective(z, nullptr);
        if (p.m_eq) p.eq(z, cep, nullptr);
        if (p.m_ineq) p.ineq(z, cip, nullptr);
        z[j] = zj - hj;
        const double fm = p.objective(z, nullptr);
        if (p.m_eq) p.eq(z, cem, nullptr);
        if (p.m_ineq) p.ineq(z, cim, nullptr);
        z[j] = zj;

        worst = std::max(worst, rel(grad[j], (fp - fm) / (2 * hj)));
        for (int i = 0; i < p.m_eq; ++i)
            worst = std::max(worst, rel(je(i, j), (cep[i] - cem[i]) / (2 * hj)));
        for (int i = 0; i < p.m_ineq; ++i)
            worst = std::max(worst, rel(ji(i, j), (cip[i] - cim[i]) / (2 * hj)));
    }
    return worst;
}

}  // namespace dlr::nlp
