#pragma once

// =============================================================================
// Per-period rectangular ACOPF block
// =============================================================================
// Variables per period: bus voltages (e, f), generator injections (p, q) and,
// for every current-modeled branch, the rectangular current pair (Ire, Iim)
// together with its squared magnitude iota. Power balance, current definition
// and the squared-magnitude identity are equalities; voltage magnitude, angle
// (as tangent envelopes on the C/S bilinears) and optional current caps are
// inequalities. Everything is quadratic, so Jacobians are exact and cheap.
//
// The same evaluators serve the single-period augmented-Lagrangian subproblem
// and the monolithic multi-period reference solve (via row/column offsets).
// =============================================================================

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "dlr/network.hpp"
#include "dlr/nlp.hpp"

namespace dlr::acopf {

using Eigen::MatrixXd;
using Eigen::VectorXd;

struct SubproblemFailure : std::runtime_error {
    int period = -1;
    int iterations = 0;
    double best_residual = 0.0;
    SubproblemFailure(const std::string& msg, int period_, int iters, double resid)
        : std::runtime_error(msg), period(period_), iterations(iters),
          best_residual(resid) {}
};

// ---------------------------------------------------------------------------
// Variable layout of one period
// ---------------------------------------------------------------------------

struct AcLayout {
    int nb = 0;  ///< buses
    int ng = 0;  ///< generators
    int nc = 0;  ///< current-modeled branches
    std::vector<int> cur_branch;   ///< branch index per current slot
    std::vector<int> branch_slot;  ///< current slot per branch, -1 if none

    int e(int i) const { return i; }
    int f(int i) const { return nb + i; }
    int pg(int g) const { return 2 * nb + g; }
    int qg(int g) const { return 2 * nb + ng + g; }
    int ire(int l) const { return 2 * nb + 2 * ng + l; }
    int iim(int l) const { return 2 * nb + 2 * ng + nc + l; }
    int iota(int l) const { return 2 * nb + 2 * ng + 2 * nc + l; }
    int size() const { return 2 * nb + 2 * ng + 3 * nc; }
};

/// One consensus coupling term on a single x coordinate:
///   v * (target - scale*x) + rho/2 * (target - scale*x)^2
/// where target folds in the y and u slices of the consensus vector.
struct CouplingTerm {
    int x_index = 0;
    double scale = 1.0;
    double v = 0.0;
    double target = 0.0;
};

struct AcSubproblemSpec {
    int period = 0;
    double rho = 0.0;
    std::vector<CouplingTerm> coupling;
    VectorXd caps;  ///< per current slot, +inf when uncapped; empty = no caps
    VectorXd warm;  ///< warm start (empty = flat start)
    double nlp_tol = 1e-6;
    int nlp_max_iter = 300;
};

// ---------------------------------------------------------------------------
// Model
// ---------------------------------------------------------------------------

class AcModel {
public:
    explicit AcModel(const net::NetworkCase& nc) : case_(&nc) {
        layout_.nb = int(nc.buses.size());
        layout_.ng = int(nc.generators.size());
        layout_.branch_slot.assign(nc.branches.size(), -1);
        for (std::size_t b = 0; b < nc.branches.size(); ++b) {
            if (nc.branches[b].has_current_model()) {
                layout_.branch_slot[b] = int(layout_.cur_branch.size());
                layout_.cur_branch.push_back(int(b));
            }
        }
        layout_.nc = int(layout_.cur_branch.size());
        incident_.assign(layout_.nb, {});
        for (std::size_t b = 0; b < nc.branches.size(); ++b) {
            incident_[nc.branches[b].from].push_back(int(b));
            incident_[nc.branches[b].to].push_back(int(b));
        }
        gens_at_.assign(layout_.nb, {});
        for (int g = 0; g < layout_.ng; ++g) gens_at_[nc.generators[g].bus].push_back(g);
    }

    const AcLayout& layout() const { return layout_; }
    const net::NetworkCase& network() const { return *case_; }
    int ref_bus() const { return 0; }

    int num_eq() const { return 2 * layout_.nb + 3 * layout_.nc; }
    int num_base_ineq() const {
        return 2 * layout_.nb + 3 * int(case_->branches.size());
    }

    // --- objective -----------------------------------------------------------

    /// Generation cost of one period in $/h (quadratic in MW).
    double cost(const VectorXd& x, int xoff, VectorXd* grad) const {
        const double s = case_->base_mva;
        double total = 0.0;
        for (int g = 0; g < layout_.ng; ++g) {
            const auto& gen = case_->generators[g];
            const double p_mw = x[xoff + layout_.pg(g)] * s;
            total += gen.c2 * p_mw * p_mw + gen.c1 * p_mw + gen.c0;
            if (grad) {
                (*grad)[xoff + layout_.pg(g)] += (2.0 * gen.c2 * p_mw + gen.c1) * s;
            }
        }
        return total;
    }

    // --- equality residuals ----------------------------------------------------

    /// Power balance, current definition and magnitude identities for period t.
    /// Rows land at roff.., columns at xoff.. in the caller's matrices.
    void eval_eq(const VectorXd& x, int xoff, int t, VectorXd& r, int roff,
                 MatrixXd* J, int jroff) const {
        const auto& nc = *case_;
        const auto& L = layout_;
        auto E = [&](int i) { return x[xoff + L.e(i)]; };
        auto F = [&](int i) { return x[xoff + L.f(i)]; };

        for (int i = 0; i < L.nb; ++i) {
            const auto& bus = nc.buses[i];
            const double ei = E(i), fi = F(i);
            const double nu = ei * ei + fi * fi;
            double rp = bus.shunt_g * nu;
            double rq = -bus.shunt_b * nu;
            double drp_dei = 2 * bus.shunt_g * ei, drp_dfi = 2 * bus.shunt_g * fi;
            double drq_dei = -2 * bus.shunt_b * ei, drq_dfi = -2 * bus.shunt_b * fi;
            const int rowp = roff + 2 * i, rowq = roff + 2 * i + 1;
            for (int bidx : incident_[i]) {
                const auto& br = nc.branches[bidx];
                const int j = (br.from == i) ? br.to : br.from;
                const double ej = E(j), fj = F(j);
                const double C = ei * ej + fi * fj;
                const double S = fi * ej - ei * fj;
                rp += br.g * (nu - C) - br.b * S;
                rq += br.b * (C - nu) - br.g * S;
                if (J) {
                    (*J)(jroff + 2 * i, xoff + L.e(j)) += -br.g * ei - br.b * fi;
                    (*J)(jroff + 2 * i, xoff + L.f(j)) += -br.g * fi + br.b * ei;
                    (*J)(jroff + 2 * i + 1, xoff + L.e(j)) += br.b * ei - br.g * fi;
                    (*J)(jroff + 2 * i + 1, xoff + L.f(j)) += br.b * fi + br.g * ei;
                }
                drp_dei += br.g * (2 * ei - ej) + br.b * fj;
                drp_dfi += br.g * (2 * fi - fj) - br.b * ej;
                drq_dei += br.b * (ej - 2 * ei) + br.g * fj;
                drq_dfi += br.b * (fj - 2 * fi) - br.g * ej;
            }
            for (int g : gens_at_[i]) {
                rp -= x[xoff + L.pg(g)];
                rq -= x[xoff + L.qg(g)];
                if (J) {
                    (*J)(jroff + 2 * i, xoff + L.pg(g)) = -1.0;
                    (*J)(jroff + 2 * i + 1, xoff + L.qg(g)) = -1.0;
                }
            }
            rp += nc.demand_p[i][t];
            rq += nc.demand_q[i][t];
            r[rowp] = rp;
            r[rowq] = rq;
            if (J) {
                (*J)(jroff + 2 * i, xoff + L.e(i)) = drp_dei;
                (*J)(jroff + 2 * i, xoff + L.f(i)) = drp_dfi;
                (*J)(jroff + 2 * i + 1, xoff + L.e(i)) = drq_dei;
                (*J)(jroff + 2 * i + 1, xoff + L.f(i)) = drq_dfi;
            }
        }

        for (int l = 0; l < L.nc; ++l) {
            const auto& br = nc.branches[L.cur_branch[l]];
            const int i = br.from, j = br.to;
            const double de = E(i) - E(j), df = F(i) - F(j);
            const double ire = x[xoff + L.ire(l)], iim = x[xoff + L.iim(l)];
            const int r1 = roff + 2 * L.nb + 3 * l;
            r[r1] = ire - br.g * de + br.b * df;
            r[r1 + 1] = iim - br.g * df - br.b * de;
            r[r1 + 2] = x[xoff + L.iota(l)] - ire * ire - iim * iim;
            if (J) {
                const int jr = jroff + 2 * L.nb + 3 * l;
                (*J)(jr, xoff + L.ire(l)) = 1.0;
                (*J)(jr, xoff + L.e(i)) = -br.g;
                (*J)(jr, xoff + L.e(j)) = br.g;
                (*J)(jr, xoff + L.f(i)) = br.b;
                (*J)(jr, xoff + L.f(j)) = -br.b;
                (*J)(jr + 1, xoff + L.iim(l)) = 1.0;
                (*J)(jr + 1, xoff + L.f(i)) = -br.g;
                (*J)(jr + 1, xoff + L.f(j)) = br.g;
                (*J)(jr + 1, xoff + L.e(i)) = -br.b;
                (*J)(jr + 1, xoff + L.e(j)) = br.b;
                (*J)(jr + 2, xoff + L.iota(l)) = 1.0;
                (*J)(jr + 2, xoff + L.ire(l)) = -2 * ire;
                (*J)(jr + 2, xoff + L.iim(l)) = -2 * iim;
            }
        }
    }

    // --- inequality residuals ---------------------------------------------------

    /// Voltage envelopes, angle tangent envelopes (with C >= 0) and current
    /// caps; caps may be empty (no cap rows) or sized nc with +inf entries.
    void eval_ineq(const VectorXd& x, int xoff, const VectorXd& caps, VectorXd& r,
                   int roff, MatrixXd* J, int jroff) const {
        const auto& nc = *case_;
        const auto& L = layout_;
        auto E = [&](int i) { return x[xoff + L.e(i)]; };
        auto F = [&](int i) { return x[xoff + L.f(i)]; };

        for (int i = 0; i < L.nb; ++i) {
            const double ei = E(i), fi = F(i);
            const double nu = ei * ei + fi * fi;
            const auto& bus = nc.buses[i];
            r[roff + 2 * i] = nu - bus.v_max * bus.v_max;
            r[roff + 2 * i + 1] = bus.v_min * bus.v_min - nu;
            if (J) {
                (*J)(jroff + 2 * i, xoff + L.e(i)) = 2 * ei;
                (*J)(jroff + 2 * i, xoff + L.f(i)) = 2 * fi;
                (*J)(jroff + 2 * i + 1, xoff + L.e(i)) = -2 * ei;
                (*J)(jroff + 2 * i + 1, xoff + L.f(i)) = -2 * fi;
            }
        }
        const int nbr = int(nc.branches.size());
        for (int b = 0; b < nbr; ++b) {
            const auto& br = nc.branches[b];
            const int i = br.from, j = br.to;
            const double ei = E(i), fi = F(i), ej = E(j), fj = F(j);
            const double C = ei * ej + fi * fj;
            const double S = fi * ej - ei * fj;
            const double tmax = std::tan(br.angle_max), tmin = std::tan(br.angle_min);
            const int row = roff + 2 * L.nb + 3 * b;
            r[row] = S - tmax * C;
            r[row + 1] = tmin * C - S;
            r[row + 2] = -C;
            if (J) {
                const int jr = jroff + 2 * L.nb + 3 * b;
                // dC: (ej, fj, ei, fi); dS: (-fj, ej, fi, -ei) w.r.t (ei, fi, ej, fj)
                (*J)(jr, xoff + L.e(i)) = -fj - tmax * ej;
                (*J)(jr, xoff + L.f(i)) = ej - tmax * fj;
                (*J)(jr, xoff + L.e(j)) = fi - tmax * ei;
                (*J)(jr, xoff + L.f(j)) = -ei - tmax * fi;
                (*J)(jr + 1, xoff + L.e(i)) = tmin * ej + fj;
                (*J)(jr + 1, xoff + L.f(i)) = tmin * fj - ej;
                (*J)(jr + 1, xoff + L.e(j)) = tmin * ei - fi;
                (*J)(jr + 1, xoff + L.f(j)) = tmin * fi + ei;
                (*J)(jr + 2, xoff + L.e(i)) = -ej;
                (*J)(jr + 2, xoff + L.f(i)) = -fj;
                (*J)(jr + 2, xoff + L.e(j)) = -ei;
                (*J)(jr + 2, xoff + L.f(j)) = -fi;
            }
        }
        if (caps.size() > 0) {
            for (int l = 0; l < L.nc; ++l) {
                const int row = roff + 2 * L.nb + 3 * nbr + l;
                if (std::isfinite(caps[l])) {
                    r[row] = x[xoff + L.iota(l)] - caps[l];
                    if (J) (*J)(jroff + 2 * L.nb + 3 * nbr + l, xoff + L.iota(l)) = 1.0;
                } else {
                    r[row] = -1.0;  // vacuous row keeps the count uniform
                }
            }
        }
    }

    int num_ineq(bool with_caps) const {
        return num_base_ineq() + (with_caps ? layout_.nc : 0);
    }

    // --- Lagrangian curvature ----------------------------------------------------
    // Every AC residual is quadratic, so the constraint Hessians are constant
    // stamps weighted by the row multipliers.

    void add_cost_hessian(MatrixXd& W, int xoff, double factor) const {
        const double s = case_->base_mva;
        for (int g = 0; g < layout_.ng; ++g) {
            W(xoff + layout_.pg(g), xoff + layout_.pg(g)) +=
                factor * 2.0 * case_->generators[g].c2 * s * s;
        }
    }

    /// Accumulate sum_r lam[lam_off + r] * Hessian(eq row r) into W.
    void add_eq_hessian(MatrixXd& W, int xoff, const VectorXd& lam,
                        int lam_off) const {
        const auto& nc = *case_;
        const auto& L = layout_;
        auto stamp_nu = [&](int row_mult, int i, double w) {
            const double m = lam[lam_off + row_mult] * w;
            W(xoff + L.e(i), xoff + L.e(i)) += 2.0 * m;
            W(xoff + L.f(i), xoff + L.f(i)) += 2.0 * m;
        };
        auto stamp_C = [&](int row_mult, int i, int j, double w) {
            const double m = lam[lam_off + row_mult] * w;
            W(xoff + L.e(i), xoff + L.e(j)) += m;
            W(xoff + L.e(j), xoff + L.e(i)) += m;
            W(xoff + L.f(i), xoff + L.f(j)) += m;
            W(xoff + L.f(j), xoff + L.f(i)) += m;
        };
        auto stamp_S = [&](int row_mult, int i, int j, double w) {
            const double m = lam[lam_off + row_mult] * w;
            W(xoff + L.f(i), xoff + L.e(j)) += m;
            W(xoff + L.e(j), xoff + L.f(i)) += m;
            W(xoff + L.e(i), xoff + L.f(j)) -= m;
            W(xoff + L.f(j), xoff + L.e(i)) -= m;
        };
        for (int i = 0; i < L.nb; ++i) {
            const auto& bus = nc.buses[i];
            stamp_nu(2 * i, i, bus.shunt_g);
            stamp_nu(2 * i + 1, i, -bus.shunt_b);
            for (int bidx : incident_[i]) {
                const auto& br = nc.branches[bidx];
                const int j = (br.from == i) ? br.to : br.from;
                stamp_nu(2 * i, i, br.g);
                stamp_C(2 * i, i, j, -br.g);
                stamp_S(2 * i, i, j, -br.b);
                stamp_nu(2 * i + 1, i, -br.b);
                stamp_C(2 * i + 1, i, j, br.b);
                stamp_S(2 * i + 1, i, j, -br.g);
            }
        }
        for (int l = 0; l < L.nc; ++l) {
            const double m = lam[lam_off + 2 * L.nb + 3 * l + 2];
            W(xoff + L.ire(l), xoff + L.ire(l)) -= 2.0 * m;
            W(xoff + L.iim(l), xoff + L.iim(l)) -= 2.0 * m;
        }
    }

    /// Accumulate the inequality-row curvature (voltage and angle envelopes;
    /// cap rows are linear).
    void add_ineq_hessian(MatrixXd& W, int xoff, const VectorXd& mu,
                          int mu_off) const {
        const auto& nc = *case_;
        const auto& L = layout_;
        for (int i = 0; i < L.nb; ++i) {
            const double m = mu[mu_off + 2 * i] - mu[mu_off + 2 * i + 1];
            W(xoff + L.e(i), xoff + L.e(i)) += 2.0 * m;
            W(xoff + L.f(i), xoff + L.f(i)) += 2.0 * m;
        }
        const int nbr = int(nc.branches.size());
        for (int b = 0; b < nbr; ++b) {
            const auto& br = nc.branches[b];
            const int i = br.from, j = br.to;
            const double tmax = std::tan(br.angle_max), tmin = std::tan(br.angle_min);
            const int row = mu_off + 2 * L.nb + 3 * b;
            const double wC = -tmax * mu[row] + tmin * mu[row + 1] - mu[row + 2];
            const double wS = mu[row] - mu[row + 1];
            W(xoff + L.e(i), xoff + L.e(j)) += wC;
            W(xoff + L.e(j), xoff + L.e(i)) += wC;
            W(xoff + L.f(i), xoff + L.f(j)) += wC;
            W(xoff + L.f(j), xoff + L.f(i)) += wC;
            W(xoff + L.f(i), xoff + L.e(j)) += wS;
            W(xoff + L.e(j), xoff + L.f(i)) += wS;
            W(xoff + L.e(i), xoff + L.f(j)) -= wS;
            W(xoff + L.f(j), xoff + L.e(i)) -= wS;
        }
    }

    // --- starting point and bounds ----------------------------------------------

    VectorXd flat_start() const {
        VectorXd x = VectorXd::Zero(layout_.size());
        for (int i = 0; i < layout_.nb; ++i) x[layout_.e(i)] = 1.0;
        for (int g = 0; g < layout_.ng; ++g) {
            const auto& gen = case_->generators[g];
            x[layout_.pg(g)] = 0.5 * (gen.p_min + gen.p_max);
            x[layout_.qg(g)] = 0.5 * (gen.q_min + gen.q_max);
        }
        return x;
    }

    void bounds(VectorXd& lb, VectorXd& ub) const {
        const auto& L = layout_;
        lb = VectorXd::Constant(L.size(), -nlp::kInf);
        ub = VectorXd::Constant(L.size(), nlp::kInf);
        for (int i = 0; i < L.nb; ++i) {
            lb[L.e(i)] = -2.0;
            ub[L.e(i)] = 2.0;
            lb[L.f(i)] = -2.0;
            ub[L.f(i)] = 2.0;
        }
        // gauge fix: reference bus at angle zero, positive real part
        lb[L.f(ref_bus())] = 0.0;
        ub[L.f(ref_bus())] = 0.0;
        lb[L.e(ref_bus())] = 0.2;
        for (int g = 0; g < L.ng; ++g) {
            lb[L.pg(g)] = case_->generators[g].p_min;
            ub[L.pg(g)] = case_->generators[g].p_max;
            lb[L.qg(g)] = case_->generators[g].q_min;
            ub[L.qg(g)] = case_->generators[g].q_max;
        }
        for (int l = 0; l < L.nc; ++l) lb[L.iota(l)] = 0.0;
    }

private:
    const net::NetworkCase* case_;
    AcLayout layout_;
    std::vector<std::vector<int>> incident_;
    std::vector<std::vector<int>> gens_at_;
};

// ---------------------------------------------------------------------------
// Subproblem solve
// ---------------------------------------------------------------------------

struct AcSolution {
    VectorXd x;
    nlp::Result nlp;
    double cost = 0.0;  ///< generation cost only, without coupling terms
};

/// Stationary point of  C(x_t) + sum_c [ v_c (target_c - scale_c x_c)
/// + rho/2 (target_c - scale_c x_c)^2 ]  over the period-t AC set.
inline AcSolution solve_ac_subproblem(const AcModel& model,
                                      const AcSubproblemSpec& spec) {
    const auto& L = model.layout();
    const bool with_caps = spec.caps.size() > 0;

    nlp::Problem p;
    p.n = L.size();
    p.objective = [&model, &spec](const VectorXd& x, VectorXd* grad) {
        if (grad) grad->setZero();
        double val = model.cost(x, 0, grad);
        for (const auto& c : spec.coupling) {
            const double dev = c.target - c.scale * x[c.x_index];
            val += c.v * dev + 0.5 * spec.rho * dev * dev;
            if (grad) {
                (*grad)[c.x_index] += -c.scale * (c.v + spec.rho * dev);
            }
        }
        return val;
    };
    p.m_eq = model.num_eq();
    p.eq = [&model, &spec](const VectorXd& x, VectorXd& r, MatrixXd* J) {
        if (J) J->setZero();
        model.eval_eq(x, 0, spec.period, r, 0, J, 0);
    };
    p.m_ineq = model.num_ineq(with_caps);
    p.ineq = [&model, &spec, with_caps](const VectorXd& x, VectorXd& r, MatrixXd* J) {
        if (J) J->setZero();
        model.eval_ineq(x, 0, with_caps ? spec.caps : VectorXd(), r, 0, J, 0);
    };
    model.bounds(p.lb, p.ub);
    p.z0 = spec.warm.size() ? spec.warm : model.flat_start();
    p.lagr_hessian = [&model, &spec](const VectorXd&, double sigma,
                                     const VectorXd& lam, const VectorXd& mu,
                                     MatrixXd& W) {
        W.setZero();
        model.add_cost_hessian(W, 0, sigma);
        for (const auto& c : spec.coupling) {
            W(c.x_index, c.x_index) += sigma * spec.rho * c.scale * c.scale;
        }
        model.add_eq_hessian(W, 0, lam, 0);
        model.add_ineq_hessian(W, 0, mu, 0);
    };

    nlp::Result res = nlp::minimize(p, spec.nlp_tol, spec.nlp_max_iter);
    if (res.status != nlp::Status::Converged && spec.warm.size()) {
        // retry once from flat start; warm starts can sit in bad basins
        p.z0 = model.flat_start();
        res = nlp::minimize(p, spec.nlp_tol, spec.nlp_max_iter);
    }
    if (res.status != nlp::Status::Converged) {
        throw SubproblemFailure("AC subproblem for period " +
                                    std::to_string(spec.period) + " ended " +
                                    nlp::to_string(res.status) + " (kkt " +
                                    std::to_string(res.kkt_residual) + ")",
                                spec.period, res.iterations, res.kkt_residual);
    }
    AcSolution sol;
    sol.x = res.point;
    sol.cost = model.cost(res.point, 0, nullptr);
    sol.nlp = std::move(res);
    return sol;
}

}  // namespace dlr::acopf
