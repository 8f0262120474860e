#pragma once

// =============================================================================
// Consensus decomposition and bi-level ADMM
// =============================================================================
// The multi-period problem splits into per-period AC blocks (x), per-device
// temporal blocks (y: generator ramp profiles, screened-line temperature
// schedules) and a slack block u tying them together:
//
//   L(x,y,u,v,w) = C(x) + w'u + theta/2 |u|^2 + v'p + rho/2 |p|^2,
//   p = Ax + By + u,   A = (-I | 0),  B = (I | 0).
//
// The inner loop is a 3-block ADMM (x-blocks in parallel, y-blocks in
// parallel, u in closed form, dual ascent on v). The outer loop performs
// dual ascent on w with penalty escalation on theta and terminates when
// |Ax + By|_2 <= sqrt(d) * eps.
//
// Consensus coordinates are scaled: generator powers in p.u., line currents
// in (kA)^2.
// =============================================================================

#include <chrono>
#include <cmath>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "dlr/acopf.hpp"
#include "dlr/network.hpp"
#include "dlr/nlp.hpp"
#include "dlr/ratings.hpp"
#include "dlr/thermal.hpp"
#include "dlr/util.hpp"

namespace dlr::admm {

using Eigen::MatrixXd;
using Eigen::VectorXd;

struct AdmmParams {
    double theta0 = 100.0;
    double gamma = 6.0;
    double omega = 0.6;
    double eps = 1e-4;
    int inner_cap = 200;
    int outer_cap = 25;
    double w_lo = -1e6;
    double w_hi = 1e6;
    int workers = 1;
    double nlp_tol = 1e-6;
    int nlp_max_iter = 300;
    double screen_cool_below = 363.15;   ///< K; lines starting hotter are excluded
    double screen_hot_margin = 0.5;      ///< K; "reaches the limit" slack
};

// ---------------------------------------------------------------------------
// Selection maps
// ---------------------------------------------------------------------------

/// One consensus coordinate: a (device, period) pair together with the index
/// and unit scale of the x-side copy it ties to.
struct ConsensusCoord {
    bool is_gen = true;
    int device = 0;       ///< generator index, or position in `screened`
    int period = 0;
    int x_index = 0;      ///< index inside the period's AC vector
    double x_scale = 1.0; ///< multiplies the raw x value into consensus units
};

struct SelectionMaps {
    std::vector<ConsensusCoord> coords;
    std::vector<std::vector<int>> gen_coords;   ///< [gen][period] -> coord id
    std::vector<std::vector<int>> line_coords;  ///< [screened pos][period] -> coord id
    std::vector<int> screened;                  ///< branch indices under the transient model
    int d() const { return int(coords.size()); }
};

// ---------------------------------------------------------------------------
// State, trace, report
// ---------------------------------------------------------------------------

struct ConsensusState {
    std::vector<VectorXd> x;           ///< per period
    std::vector<VectorXd> y_gen;       ///< per generator, length M
    std::vector<VectorXd> y_line_iota; ///< per screened line, (kA)^2, length M
    std::vector<VectorXd> y_line_temp; ///< per screened line, K, length M
    VectorXd u, v, w;
    double theta = 0.0;
    double rho = 0.0;
    int k = 0;
};

struct TraceRecord {
    int k = 0;
    int r = 0;
    double consensus_l2 = 0.0;  ///< |Ax + By + u|_2, the inner residual
    double feas_l2 = 0.0;       ///< |Ax + By|_2
    double feas_inf = 0.0;      ///< |Ax + By|_inf
    double theta = 0.0;
    double rho = 0.0;
    double wall_ms = 0.0;
};

/// Snapshot of the invariants that must hold when an inner loop starts.
struct InnerEntryRecord {
    int k = 0;
    double theta = 0.0;
    double rho = 0.0;
    double dual_consistency_inf = 0.0;  ///< |w + theta u - v|_inf at entry
};

struct LineReport {
    std::string id;
    bool screened = false;
    std::vector<double> iota_pu2;   ///< dispatched squared current per period
    std::vector<double> iota_ka2;
    std::vector<double> cap_pu2;    ///< applied cap (inf for screened lines)
    std::vector<double> temp_k;     ///< transient re-simulation under dispatch
    std::vector<double> temp_ss_k;  ///< per-period steady-state temperatures
};

struct GenReport {
    std::string id;
    std::vector<double> p, q;  ///< p.u. per period
};

struct SolveReport {
    std::string mode;    ///< "admm" or "monolithic"
    std::string scheme;
    bool converged = false;
    std::string status;  ///< "Converged", "OuterMaxIter", ...
    double objective = 0.0;  ///< sum over periods of hourly-rate generation cost
    int outer_iters = 0;
    int inner_iters_total = 0;
    double wall_ms = 0.0;

    // consensus block (empty for monolithic solves)
    int d = 0;
    double eps = 0.0;
    double theta_final = 0.0;
    double rho_final = 0.0;
    double consensus_l2 = 0.0;   ///< recomputed |Ax + By|_2
    double consensus_inf = 0.0;
    VectorXd x_hat, y_hat, u, v, v_prev, p_last, w;
    VectorXd w_inner;  ///< outer dual as seen by the last inner loop
    std::vector<InnerEntryRecord> inner_entries;
    std::vector<TraceRecord> trace;

    // primal data
    std::vector<VectorXd> period_x;
    std::vector<LineReport> lines;
    std::vector<GenReport> gens;

    // diagnostics
    double max_ac_residual = 0.0;       ///< worst power-flow equality violation
    double max_ramp_violation = 0.0;
    double max_temp_violation = 0.0;    ///< re-simulated transient vs t_max
    double max_cap_violation = 0.0;
    double c_delta = 0.0;               ///< flow-map Hessian bound (screened lines)
    double lambda_estimate = 0.0;       ///< safety-factored multiplier bound
    bool rho_below_descent_bound = false;  ///< rho < 2 * c_delta * lambda
    bool inner_stalled = false;
};

struct InnerStalled : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct OuterMaxIter : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// ---------------------------------------------------------------------------
// Solve context
// ---------------------------------------------------------------------------

class SolveContext {
public:
    SolveContext(const net::NetworkCase& nc, ratings::RatingScheme scheme,
                 AdmmParams params, std::vector<int> screened = {})
        : nc_(&nc), scheme_(scheme), params_(params), model_(nc),
          screened_(std::move(screened)) {
        caps_ = ratings::current_caps(nc, scheme);
        for (int b : screened_) {
            for (int t = 0; t < nc.horizon; ++t) {
                caps_.cap_pu2[b][t] = std::numeric_limits<double>::infinity();
            }
        }
        lin_fits_.assign(nc.branches.size(), {});
        for (std::size_t b = 0; b < nc.branches.size(); ++b) {
            if (!nc.branches[b].thermal) continue;
            auto& row = lin_fits_[b];
            row.reserve(nc.horizon);
            for (int t = 0; t < nc.horizon; ++t) {
                row.push_back(thermal::linearize_convection(
                    nc.branches[b].thermal->conductor, nc.weather[b][t]));
            }
        }
        build_maps();
    }

    const net::NetworkCase& network() const { return *nc_; }
    const acopf::AcModel& model() const { return model_; }
    const SelectionMaps& maps() const { return maps_; }
    const AdmmParams& params() const { return params_; }
    const ratings::RatingScheme& scheme() const { return scheme_; }
    const ratings::CurrentCaps& caps() const { return caps_; }
    const std::vector<std::vector<thermal::LinearConvection>>& lin_fits() const {
        return lin_fits_;
    }

    /// Caps vector for one period in current-slot order (the x-subproblem view).
    VectorXd caps_for_period(int t) const {
        const auto& L = model_.layout();
        VectorXd caps(L.nc);
        for (int l = 0; l < L.nc; ++l) caps[l] = caps_.cap_pu2[L.cur_branch[l]][t];
        return caps;
    }

    VectorXd gather_x(const ConsensusState& s) const {
        VectorXd out(maps_.d());
        for (int c = 0; c < maps_.d(); ++c) {
            const auto& co = maps_.coords[c];
            out[c] = co.x_scale * s.x[co.period][co.x_index];
        }
        return out;
    }

    VectorXd gather_y(const ConsensusState& s) const {
        VectorXd out(maps_.d());
        for (int c = 0; c < maps_.d(); ++c) {
            const auto& co = maps_.coords[c];
            out[c] = co.is_gen ? s.y_gen[co.device][co.period]
                               : s.y_line_iota[co.device][co.period];
        }
        return out;
    }

private:
    void build_maps() {
        const auto& nc = *nc_;
        const auto& L = model_.layout();
        const int M = nc.horizon;
        maps_.screened = screened_;
        maps_.gen_coords.assign(nc.generators.size(), std::vector<int>(M, -1));
        maps_.line_coords.assign(screened_.size(), std::vector<int>(M, -1));
        for (int g = 0; g < int(nc.generators.size()); ++g) {
            for (int t = 0; t < M; ++t) {
                ConsensusCoord co;
                co.is_gen = true;
                co.device = g;
                co.period = t;
                co.x_index = L.pg(g);
                co.x_scale = 1.0;  // p.u.
                maps_.gen_coords[g][t] = int(maps_.coords.size());
                maps_.coords.push_back(co);
            }
        }
        for (int sl = 0; sl < int(screened_.size()); ++sl) {
            const int b = screened_[sl];
            const int slot = L.branch_slot[b];
            if (slot < 0) {
                throw std::logic_error("screened branch has no current model");
            }
            const double scale = nc.to_ka2_current_sq(1.0, nc.branches[b]);
            for (int t = 0; t < M; ++t) {
                ConsensusCoord co;
                co.is_gen = false;
                co.device = sl;
                co.period = t;
                co.x_index = L.iota(slot);
                co.x_scale = scale;  // p.u.^2 -> (kA)^2
                maps_.line_coords[sl][t] = int(maps_.coords.size());
                maps_.coords.push_back(co);
            }
        }
    }

    const net::NetworkCase* nc_;
    ratings::RatingScheme scheme_;
    AdmmParams params_;
    acopf::AcModel model_;
    std::vector<int> screened_;
    ratings::CurrentCaps caps_;
    SelectionMaps maps_;
    std::vector<std::vector<thermal::LinearConvection>> lin_fits_;
};

// ---------------------------------------------------------------------------
// y-subproblems
// ---------------------------------------------------------------------------

/// Nearest ramp- and box-feasible profile to the coupling target, in the
/// uniform scaled norm. Always feasible (constant profiles satisfy ramps).
inline VectorXd solve_ramp_subproblem(const net::Generator& gen,
                                      const VectorXd& target, double rho,
                                      const VectorXd& v_slice, double nlp_tol) {
    const int m = int(target.size());
    // The quadratic v'}p + rho/2 p^2 in y has its unconstrained minimum at
    // zeta = target - v/rho (target already folds in x and u).
    VectorXd zeta = target;
    if (rho > 0) zeta -= v_slice / rho;

    auto feasible = [&](const VectorXd& p) {
        for (int t = 0; t < m; ++t) {
            if (p[t] < gen.p_min - 1e-12 || p[t] > gen.p_max + 1e-12) return false;
            if (t > 0) {
                const double step = p[t] - p[t - 1];
                if (step > gen.ramp_up + 1e-12 || step < -gen.ramp_down - 1e-12)
                    return false;
            }
        }
        return true;
    };
    if (feasible(zeta)) return zeta;

    if (m == 1) {
        VectorXd out(1);
        out[0] = std::clamp(zeta[0], gen.p_min, gen.p_max);
        return out;
    }

    nlp::Problem p;
    p.n = m;
    p.objective = [&zeta](const VectorXd& z, VectorXd* g) {
        if (g) *g = z - zeta;
        return 0.5 * (z - zeta).squaredNorm();
    };
    p.m_ineq = 2 * (m - 1);
    p.ineq = [&gen, m](const VectorXd& z, VectorXd& c, MatrixXd* J) {
        if (J) J->setZero();
        for (int t = 1; t < m; ++t) {
            const double step = z[t] - z[t - 1];
            c[2 * (t - 1)] = step - gen.ramp_up;
            c[2 * (t - 1) + 1] = -step - gen.ramp_down;
            if (J) {
                (*J)(2 * (t - 1), t) = 1.0;
                (*J)(2 * (t - 1), t - 1) = -1.0;
                (*J)(2 * (t - 1) + 1, t) = -1.0;
                (*J)(2 * (t - 1) + 1, t - 1) = 1.0;
            }
        }
    };
    p.lb = VectorXd::Constant(m, gen.p_min);
    p.ub = VectorXd::Constant(m, gen.p_max);
    p.z0 = zeta.cwiseMax(gen.p_min).cwiseMin(gen.p_max);
    auto res = nlp::minimize(p, std::min(nlp_tol, 1e-8), 200);
    return res.point;
}

struct TempSubproblemResult {
    VectorXd iota_ka2;
    VectorXd temp_k;
    double mult_l1 = 0.0;  ///< 1-norm of the temperature-constraint multipliers
};

/// Nearest nonnegative current schedule to the coupling target such that the
/// transient temperature stays at or below the conductor limit in every
/// period. Derivatives come from the forward-sensitivity step Jacobians.
inline TempSubproblemResult solve_temperature_subproblem(
    const net::NetworkCase& nc, int branch, const std::vector<thermal::LinearConvection>& lins,
    const VectorXd& target, double rho, const VectorXd& v_slice, double nlp_tol) {
    const auto& br = nc.branches[branch];
    const auto& cond = br.thermal->conductor;
    const double t0 = br.thermal->initial_temp;
    const double tmax = cond.max_temperature;
    const int m = int(target.size());
    const double dt = nc.dt_seconds;
    const std::vector<thermal::WeatherSample>& weather = nc.weather[branch];

    VectorXd zeta = target;
    if (rho > 0) zeta -= v_slice / rho;
    VectorXd zeta_pos = zeta.cwiseMax(0.0);

    auto simulate = [&](const VectorXd& iota_ka2) {
        std::vector<double> a2(m);
        for (int t = 0; t < m; ++t) a2[t] = iota_ka2[t] * 1e6;
        return thermal::simulate_schedule(t0, a2, weather, cond, lins, dt);
    };

    // the clipped target may already be feasible (cool line, light coupling)
    {
        const auto temps = simulate(zeta_pos);
        bool ok = true;
        for (double tk : temps) ok = ok && tk <= tmax;
        if (ok) {
            TempSubproblemResult out;
            out.iota_ka2 = zeta_pos;
            out.temp_k.resize(m);
            for (int t = 0; t < m; ++t) out.temp_k[t] = temps[t];
            return out;
        }
    }

    nlp::Problem p;
    p.n = m;
    p.objective = [&zeta](const VectorXd& z, VectorXd* g) {
        if (g) *g = z - zeta;
        return 0.5 * (z - zeta).squaredNorm();
    };
    p.m_ineq = m;
    p.ineq = [&](const VectorXd& z, VectorXd& c, MatrixXd* J) {
        std::vector<double> a2(m);
        for (int t = 0; t < m; ++t) a2[t] = z[t] * 1e6;
        const auto temps = thermal::simulate_schedule(t0, a2, weather, cond, lins, dt);
        for (int t = 0; t < m; ++t) c[t] = temps[t] - tmax;
        if (J) {
            J->setZero();
            const auto jacs =
                thermal::schedule_jacobians(t0, a2, weather, cond, lins, dt);
            // dPhi^t/diota_k = J2_k * prod_{j>k} J1_j, in (kA)^2 units
            for (int t = 0; t < m; ++t) {
                double chain = 1.0;
                for (int k = t; k >= 0; --k) {
                    (*J)(t, k) = jacs[k].dt_diota * chain * 1e6;
                    chain *= jacs[k].dt_dt0;
                }
            }
        }
    };
    p.lb = VectorXd::Zero(m);
    p.ub = VectorXd::Constant(m, nlp::kInf);
    // start from a schedule that is safely inside the temperature envelope
    VectorXd z0(m);
    for (int t = 0; t < m; ++t) {
        bool clamped = false;
        const double cap_a2 = thermal::max_steady_current_sq(
            cond, weather[t], lins[t], tmax, &clamped);
        z0[t] = std::min(zeta_pos[t], 0.9 * cap_a2 * 1e-6);
    }
    p.z0 = z0;
    auto res = nlp::minimize(p, std::min(nlp_tol, 1e-8), 300);
    if (res.status == nlp::Status::Diverged) {
        throw acopf::SubproblemFailure("temperature subproblem for line " + br.id,
                                       -1, res.iterations, res.kkt_residual);
    }
    TempSubproblemResult out;
    out.iota_ka2 = res.point.cwiseMax(0.0);
    const auto temps = simulate(out.iota_ka2);
    out.temp_k.resize(m);
    for (int t = 0; t < m; ++t) out.temp_k[t] = temps[t];
    // multipliers of the normalized projection scale back by rho to bound
    // the multipliers of the augmented-Lagrangian subproblem
    out.mult_l1 = std::max(rho, 1.0) * res.mult_ineq.lpNorm<1>();
    return out;
}

/// Closed-form slack update: u minimizes w'u + theta/2 |u|^2 + v'(q+u)
/// + rho/2 |q+u|^2 for q = Ax + By.
inline VectorXd update_slack(const VectorXd& q, const VectorXd& v, const VectorXd& w,
                             double rho, double theta) {
    return (-v - w - rho * q) / (rho + theta);
}

// ---------------------------------------------------------------------------
// Inner ADMM (one outer round)
// ---------------------------------------------------------------------------

struct InnerResult {
    bool hit_cap = false;
    int iterations = 0;
    VectorXd v_prev;   ///< dual before the final ascent step
    VectorXd p_last;   ///< final residual Ax + By + u
    double max_temp_mult_l1 = 0.0;
};

inline InnerResult inner_admm(const SolveContext& ctx, ConsensusState& state,
                              std::vector<TraceRecord>& trace,
                              const std::chrono::steady_clock::time_point& t_start) {
    const auto& maps = ctx.maps();
    const auto& nc = ctx.network();
    const int M = nc.horizon;
    const int d = maps.d();
    const double eps = ctx.params().eps;
    const double rho = state.rho, theta = state.theta;

    InnerResult out;
    for (int r = 1; r <= ctx.params().inner_cap; ++r) {
        // ---- x-update: per-period AC subproblems in parallel --------------
        const VectorXd y_hat = ctx.gather_y(state);
        std::vector<acopf::AcSubproblemSpec> specs(M);
        for (int t = 0; t < M; ++t) {
            auto& spec = specs[t];
            spec.period = t;
            spec.rho = rho;
            spec.caps = ctx.caps_for_period(t);
            spec.warm = state.x[t];
            spec.nlp_tol = ctx.params().nlp_tol;
            spec.nlp_max_iter = ctx.params().nlp_max_iter;
        }
        for (int c = 0; c < d; ++c) {
            const auto& co = maps.coords[c];
            acopf::CouplingTerm term;
            term.x_index = co.x_index;
            term.scale = co.x_scale;
            term.v = state.v[c];
            term.target = y_hat[c] + state.u[c];
            specs[co.period].coupling.push_back(term);
        }
        util::parallel_for(M, ctx.params().workers, [&](int t) {
            state.x[t] = acopf::solve_ac_subproblem(ctx.model(), specs[t]).x;
        });

        // ---- y-update: per-device subproblems in parallel ------------------
        const VectorXd x_hat = ctx.gather_x(state);
        const int ngen = int(nc.generators.size());
        const int nline = int(maps.screened.size());
        std::vector<double> line_mults(std::max(nline, 1), 0.0);
        util::parallel_for(ngen + nline, ctx.params().workers, [&](int idx) {
            if (idx < ngen) {
                const int g = idx;
                VectorXd target(M), v_slice(M);
                for (int t = 0; t < M; ++t) {
                    const int c = maps.gen_coords[g][t];
                    target[t] = x_hat[c] - state.u[c];
                    v_slice[t] = state.v[c];
                }
                state.y_gen[g] = solve_ramp_subproblem(nc.generators[g], target, rho,
                                                       v_slice, ctx.params().nlp_tol);
            } else {
                const int sl = idx - ngen;
                const int b = maps.screened[sl];
                VectorXd target(M), v_slice(M);
                for (int t = 0; t < M; ++t) {
                    const int c = maps.line_coords[sl][t];
                    target[t] = x_hat[c] - state.u[c];
                    v_slice[t] = state.v[c];
                }
                auto res = solve_temperature_subproblem(nc, b, ctx.lin_fits()[b],
                                                        target, rho, v_slice,
                                                        ctx.params().nlp_tol);
                state.y_line_iota[sl] = res.iota_ka2;
                state.y_line_temp[sl] = res.temp_k;
                line_mults[sl] = res.mult_l1;
            }
        });
        for (int sl = 0; sl < nline; ++sl) {
            out.max_temp_mult_l1 = std::max(out.max_temp_mult_l1, line_mults[sl]);
        }

        // ---- slack and dual updates ----------------------------------------
        const VectorXd q = ctx.gather_y(state) - x_hat;  // Ax + By
        state.u = update_slack(q, state.v, state.w, rho, theta);
        const VectorXd p = q + state.u;
        out.v_prev = state.v;
        state.v += rho * p;
        out.p_last = p;
        out.iterations = r;

        TraceRecord rec;
        rec.k = state.k;
        rec.r = r;
        rec.consensus_l2 = p.norm();
        rec.feas_l2 = q.norm();
        rec.feas_inf = q.lpNorm<Eigen::Infinity>();
        rec.theta = theta;
        rec.rho = rho;
        rec.wall_ms = std::chrono::duration<double, std::milli>(
                          std::chrono::steady_clock::now() - t_start)
                          .count();
        trace.push_back(rec);

        const double threshold =
            std::max(eps, (1.0 / state.k) * std::sqrt(double(d) / theta));
        if (rec.consensus_l2 <= threshold) return out;
    }
    out.hit_cap = true;
    return out;
}

// ---------------------------------------------------------------------------
// Screening
// ---------------------------------------------------------------------------

/// Solve one single-period ACOPF per period under steady-state caps and pick
/// the lines that start cool but whose dispatched steady-state temperature
/// reaches the conductor limit in some period.
inline std::vector<int> screen_transient_lines(const net::NetworkCase& nc,
                                               const AdmmParams& params) {
    ratings::RatingScheme ss{ratings::Kind::DLR_SS, ratings::Season::Summer};
    SolveContext ctx(nc, ss, params);
    const auto& L = ctx.model().layout();
    std::vector<VectorXd> sols(nc.horizon);
    util::parallel_for(nc.horizon, params.workers, [&](int t) {
        acopf::AcSubproblemSpec spec;
        spec.period = t;
        spec.rho = 0.0;
        spec.caps = ctx.caps_for_period(t);
        spec.nlp_tol = params.nlp_tol;
        spec.nlp_max_iter = params.nlp_max_iter;
        try {
            sols[t] = acopf::solve_ac_subproblem(ctx.model(), spec).x;
        } catch (const acopf::SubproblemFailure& e) {
            throw acopf::SubproblemFailure(
                "screening period " + std::to_string(t) + ": " + e.what(), t,
                e.iterations, e.best_residual);
        }
    });
    std::vector<int> screened;
    for (std::size_t b = 0; b < nc.branches.size(); ++b) {
        const auto& br = nc.branches[b];
        if (!br.thermal) continue;
        if (br.thermal->initial_temp >= params.screen_cool_below) continue;
        const int slot = L.branch_slot[int(b)];
        bool reaches_limit = false;
        for (int t = 0; t < nc.horizon && !reaches_limit; ++t) {
            const double iota_pu = std::max(sols[t][L.iota(slot)], 0.0);
            const double iota_a2 = nc.to_physical_current_sq(iota_pu, br);
            const double s1 = thermal::steady_state_temperature(
                iota_a2, br.thermal->conductor, nc.weather[b][t],
                ctx.lin_fits()[b][t]);
            if (s1 >= br.thermal->conductor.max_temperature - params.screen_hot_margin) {
                reaches_limit = true;
            }
        }
        if (reaches_limit) screened.push_back(int(b));
    }
    return screened;
}

// ---------------------------------------------------------------------------
// Report assembly
// ---------------------------------------------------------------------------

namespace detail {

inline void fill_primal_report(const SolveContext& ctx, SolveReport& rep,
                               const std::vector<VectorXd>& period_x) {
    const auto& nc = ctx.network();
    const auto& L = ctx.model().layout();
    const int M = nc.horizon;
    rep.period_x = period_x;

    VectorXd resid(ctx.model().num_eq());
    for (int t = 0; t < M; ++t) {
        ctx.model().eval_eq(period_x[t], 0, t, resid, 0, nullptr, 0);
        rep.max_ac_residual =
            std::max(rep.max_ac_residual, resid.lpNorm<Eigen::Infinity>());
    }

    double obj = 0.0;
    for (int t = 0; t < M; ++t) obj += ctx.model().cost(period_x[t], 0, nullptr);
    rep.objective = obj;

    rep.gens.clear();
    for (int g = 0; g < int(nc.generators.size()); ++g) {
        GenReport gr;
        gr.id = nc.generators[g].id;
        for (int t = 0; t < M; ++t) {
            gr.p.push_back(period_x[t][L.pg(g)]);
            gr.q.push_back(period_x[t][L.qg(g)]);
        }
        const auto& gen = nc.generators[g];
        for (int t = 1; t < M; ++t) {
            const double step = gr.p[t] - gr.p[t - 1];
            rep.max_ramp_violation = std::max(
                {rep.max_ramp_violation, step - gen.ramp_up, -step - gen.ramp_down});
        }
        rep.gens.push_back(std::move(gr));
    }

    rep.lines.clear();
    for (std::size_t b = 0; b < nc.branches.size(); ++b) {
        const auto& br = nc.branches[b];
        if (!br.has_current_model()) continue;
        const int slot = L.branch_slot[int(b)];
        LineReport lr;
        lr.id = br.id;
        lr.screened = false;
        for (int sb : ctx.maps().screened) lr.screened = lr.screened || sb == int(b);
        for (int t = 0; t < M; ++t) {
            const double iota = std::max(period_x[t][L.iota(slot)], 0.0);
            lr.iota_pu2.push_back(iota);
            lr.cap_pu2.push_back(ctx.caps().cap_pu2[b][t]);
            if (!lr.screened && std::isfinite(ctx.caps().cap_pu2[b][t])) {
                rep.max_cap_violation = std::max(
                    rep.max_cap_violation, iota - ctx.caps().cap_pu2[b][t]);
            }
        }
        if (br.thermal) {
            std::vector<double> a2(M);
            for (int t = 0; t < M; ++t) {
                lr.iota_ka2.push_back(nc.to_ka2_current_sq(lr.iota_pu2[t], br));
                a2[t] = nc.to_physical_current_sq(lr.iota_pu2[t], br);
            }
            const auto temps = thermal::simulate_schedule(
                br.thermal->initial_temp, a2, nc.weather[b], br.thermal->conductor,
                ctx.lin_fits()[b], nc.dt_seconds);
            for (int t = 0; t < M; ++t) {
                lr.temp_k.push_back(temps[t]);
                lr.temp_ss_k.push_back(thermal::steady_state_temperature(
                    a2[t], br.thermal->conductor, nc.weather[b][t],
                    ctx.lin_fits()[b][t]));
                if (lr.screened) {
                    rep.max_temp_violation =
                        std::max(rep.max_temp_violation,
                                 temps[t] - br.thermal->conductor.max_temperature);
                }
            }
        }
        rep.lines.push_back(std::move(lr));
    }

    // descent-condition diagnostic (screened lines only)
    rep.c_delta = 0.0;
    for (int b : ctx.maps().screened) {
        const auto& br = nc.branches[b];
        for (int t = 0; t < M; ++t) {
            const auto sb = thermal::smoothness_bounds(
                br.thermal->conductor, nc.weather[b][t], ctx.lin_fits()[b][t],
                nc.dt_seconds, br.thermal->conductor.max_temperature);
            rep.c_delta = std::max(rep.c_delta, sb.hessian_op_bound);
        }
    }
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Outer loop
// ---------------------------------------------------------------------------

inline SolveReport outer_loop(const net::NetworkCase& nc,
                              const ratings::RatingScheme& scheme,
                              const AdmmParams& params) {
    const auto t_start = std::chrono::steady_clock::now();

    std::vector<int> screened;
    if (scheme.kind == ratings::Kind::DLR_TRANS) {
        screened = screen_transient_lines(nc, params);
    }
    SolveContext ctx(nc, scheme, params, screened);
    const auto& maps = ctx.maps();
    const int M = nc.horizon;
    const int d = maps.d();

    // ---- initialization: uncoupled per-period solves, then device projection.
    // The transient scheme starts from steady-state caps so the first iterates
    // are nearly feasible for the coupled problem.
    ratings::CurrentCaps init_caps = ctx.caps();
    if (scheme.kind == ratings::Kind::DLR_TRANS) {
        init_caps = ratings::current_caps(
            nc, ratings::RatingScheme{ratings::Kind::DLR_SS, scheme.season});
    }
    const auto& L = ctx.model().layout();
    auto init_caps_for_period = [&](int t) {
        VectorXd caps(L.nc);
        for (int l = 0; l < L.nc; ++l) caps[l] = init_caps.cap_pu2[L.cur_branch[l]][t];
        return caps;
    };
    ConsensusState state;
    state.x.resize(M);
    util::parallel_for(M, params.workers, [&](int t) {
        acopf::AcSubproblemSpec spec;
        spec.period = t;
        spec.rho = 0.0;
        spec.caps = init_caps_for_period(t);
        spec.nlp_tol = params.nlp_tol;
        spec.nlp_max_iter = params.nlp_max_iter;
        state.x[t] = acopf::solve_ac_subproblem(ctx.model(), spec).x;
    });
    const VectorXd x0_hat = ctx.gather_x(state);
    state.y_gen.resize(nc.generators.size());
    const VectorXd zero_v = VectorXd::Zero(M);
    for (int g = 0; g < int(nc.generators.size()); ++g) {
        VectorXd target(M);
        for (int t = 0; t < M; ++t) target[t] = x0_hat[maps.gen_coords[g][t]];
        state.y_gen[g] =
            solve_ramp_subproblem(nc.generators[g], target, 0.0, zero_v, params.nlp_tol);
    }
    state.y_line_iota.resize(maps.screened.size());
    state.y_line_temp.resize(maps.screened.size());
    for (int sl = 0; sl < int(maps.screened.size()); ++sl) {
        const int b = maps.screened[sl];
        VectorXd target(M);
        for (int t = 0; t < M; ++t) target[t] = x0_hat[maps.line_coords[sl][t]];
        auto res = solve_temperature_subproblem(nc, b, ctx.lin_fits()[b], target, 0.0,
                                                zero_v, params.nlp_tol);
        state.y_line_iota[sl] = res.iota_ka2;
        state.y_line_temp[sl] = res.temp_k;
    }
    state.u = VectorXd::Zero(d);
    state.w = VectorXd::Zero(d);
    state.v = VectorXd::Zero(d);
    state.theta = params.theta0;

    SolveReport rep;
    rep.mode = "admm";
    rep.scheme = ratings::to_string(scheme.kind);
    rep.d = d;
    rep.eps = params.eps;

    double u_prev_norm = 0.0;
    bool converged = false;
    InnerResult inner_out;
    VectorXd w_inner = state.w;
    for (int k = 1; k <= params.outer_cap; ++k) {
        state.k = k;
        state.rho = 2.0 * state.theta;            // inner entry invariant
        state.v = state.w + state.theta * state.u;  // dual consistency at entry
        w_inner = state.w;

        InnerEntryRecord entry;
        entry.k = k;
        entry.theta = state.theta;
        entry.rho = state.rho;
        entry.dual_consistency_inf =
            (state.w + state.theta * state.u - state.v).lpNorm<Eigen::Infinity>();
        rep.inner_entries.push_back(entry);

        inner_out = inner_admm(ctx, state, rep.trace, t_start);
        rep.inner_iters_total += inner_out.iterations;
        rep.inner_stalled = rep.inner_stalled || inner_out.hit_cap;
        rep.outer_iters = k;

        // outer dual ascent with projection, then penalty escalation
        state.w = (state.w + state.theta * state.u)
                      .cwiseMax(params.w_lo)
                      .cwiseMin(params.w_hi);
        const double u_norm = state.u.norm();
        if (u_norm >= params.omega * u_prev_norm) state.theta *= params.gamma;
        u_prev_norm = u_norm;

        const VectorXd q = ctx.gather_y(state) - ctx.gather_x(state);
        if (q.norm() <= std::sqrt(double(d)) * params.eps) {
            converged = true;
            break;
        }
    }

    rep.converged = converged;
    rep.status = converged ? "Converged" : "OuterMaxIter";
    rep.theta_final = state.theta;
    rep.rho_final = state.rho;
    rep.x_hat = ctx.gather_x(state);
    rep.y_hat = ctx.gather_y(state);
    rep.u = state.u;
    rep.v = state.v;
    rep.v_prev = inner_out.v_prev;
    rep.p_last = inner_out.p_last;
    rep.w = state.w;
    rep.w_inner = w_inner;
    const VectorXd q_final = rep.y_hat - rep.x_hat;
    rep.consensus_l2 = q_final.norm();
    rep.consensus_inf = q_final.lpNorm<Eigen::Infinity>();

    detail::fill_primal_report(ctx, rep, state.x);
    rep.lambda_estimate = 2.0 * inner_out.max_temp_mult_l1;
    rep.rho_below_descent_bound =
        state.rho < 2.0 * rep.c_delta * rep.lambda_estimate;
    rep.wall_ms = std::chrono::duration<double, std::milli>(
                      std::chrono::steady_clock::now() - t_start)
                      .count();
    return rep;
}

// ---------------------------------------------------------------------------
// Monolithic reference solve
// ---------------------------------------------------------------------------

/// Direct solve of the undecomposed multi-period program. Desk-scale only;
/// guarded by a size check. Used as the acceptance oracle for the ADMM path.
inline SolveReport solve_monolithic(const net::NetworkCase& nc,
                                    const ratings::RatingScheme& scheme,
                                    const AdmmParams& params) {
    if (int(nc.buses.size()) > 60 || nc.horizon > 12) {
        throw std::invalid_argument(
            "solve_monolithic: case exceeds the desk-scale guard (60 buses, 12 periods)");
    }
    const auto t_start = std::chrono::steady_clock::now();

    std::vector<int> screened;
    if (scheme.kind == ratings::Kind::DLR_TRANS) {
        screened = screen_transient_lines(nc, params);
    }
    SolveContext ctx(nc, scheme, params, screened);
    const auto& L = ctx.model().layout();
    const int M = nc.horizon;
    const int nper = L.size();
    const int n = M * nper;
    const int ngen = int(nc.generators.size());
    const int nsl = int(screened.size());

    const int m_eq = M * ctx.model().num_eq();
    const int base_ineq = ctx.model().num_ineq(true);
    const int m_ineq = M * base_ineq + 2 * (M - 1) * ngen + M * nsl;

    nlp::Problem p;
    p.n = n;
    p.objective = [&ctx, M, nper](const VectorXd& z, VectorXd* g) {
        if (g) g->setZero();
        double total = 0.0;
        for (int t = 0; t < M; ++t) total += ctx.model().cost(z, t * nper, g);
        return total;
    };
    p.m_eq = m_eq;
    p.eq = [&ctx, M, nper](const VectorXd& z, VectorXd& r, MatrixXd* J) {
        if (J) J->setZero();
        const int rows = ctx.model().num_eq();
        for (int t = 0; t < M; ++t) {
            ctx.model().eval_eq(z, t * nper, t, r, t * rows, J, t * rows);
        }
    };
    p.m_ineq = m_ineq;
    p.ineq = [&ctx, &nc, &L, &screened, M, nper, ngen, nsl, base_ineq](
                 const VectorXd& z, VectorXd& r, MatrixXd* J) {
        if (J) J->setZero();
        for (int t = 0; t < M; ++t) {
            ctx.model().eval_ineq(z, t * nper, ctx.caps_for_period(t), r,
                                  t * base_ineq, J, t * base_ineq);
        }
        int row = M * base_ineq;
        for (int g = 0; g < ngen; ++g) {
            const auto& gen = nc.generators[g];
            for (int t = 1; t < M; ++t) {
                const double step =
                    z[t * nper + L.pg(g)] - z[(t - 1) * nper + L.pg(g)];
                r[row] = step - gen.ramp_up;
                r[row + 1] = -step - gen.ramp_down;
                if (J) {
                    (*J)(row, t * nper + L.pg(g)) = 1.0;
                    (*J)(row, (t - 1) * nper + L.pg(g)) = -1.0;
                    (*J)(row + 1, t * nper + L.pg(g)) = -1.0;
                    (*J)(row + 1, (t - 1) * nper + L.pg(g)) = 1.0;
                }
                row += 2;
            }
        }
        for (int sl = 0; sl < nsl; ++sl) {
            const int b = screened[sl];
            const auto& br = nc.branches[b];
            const int slot = L.branch_slot[b];
            const double to_a2 = nc.to_physical_current_sq(1.0, br);
            std::vector<double> a2(M);
            for (int t = 0; t < M; ++t) {
                a2[t] = std::max(z[t * nper + L.iota(slot)], 0.0) * to_a2;
            }
            const auto temps = thermal::simulate_schedule(
                br.thermal->initial_temp, a2, nc.weather[b], br.thermal->conductor,
                ctx.lin_fits()[b], nc.dt_seconds);
            std::vector<thermal::StepJacobian> jacs;
            if (J) {
                jacs = thermal::schedule_jacobians(br.thermal->initial_temp, a2,
                                                   nc.weather[b],
                                                   br.thermal->conductor,
                                                   ctx.lin_fits()[b], nc.dt_seconds);
            }
            for (int t = 0; t < M; ++t) {
                r[row] = temps[t] - br.thermal->conductor.max_temperature;
                if (J) {
                    double chain = 1.0;
                    for (int k = t; k >= 0; --k) {
                        (*J)(row, k * nper + L.iota(slot)) =
                            jacs[k].dt_diota * chain * to_a2;
                        chain *= jacs[k].dt_dt0;
                    }
                }
                ++row;
            }
        }
    };

    // Exact curvature for the quadratic AC part; the flow-map rows are left
    // to the regularization (their curvature is bounded by the Lemma-style
    // constant, orders of magnitude below the AC stamps).
    p.lagr_hessian = [&ctx, M, nper, base_ineq](const VectorXd&, double sigma,
                                                const VectorXd& lam,
                                                const VectorXd& mu, MatrixXd& W) {
        W.setZero();
        const int eq_rows = ctx.model().num_eq();
        for (int t = 0; t < M; ++t) {
            ctx.model().add_cost_hessian(W, t * nper, sigma);
            ctx.model().add_eq_hessian(W, t * nper, lam, t * eq_rows);
            ctx.model().add_ineq_hessian(W, t * nper, mu, t * base_ineq);
        }
    };

    VectorXd lb_p, ub_p;
    ctx.model().bounds(lb_p, ub_p);
    p.lb.resize(n);
    p.ub.resize(n);
    for (int t = 0; t < M; ++t) {
        p.lb.segment(t * nper, nper) = lb_p;
        p.ub.segment(t * nper, nper) = ub_p;
    }

    // warm start from uncoupled per-period solves under steady-state caps
    ratings::CurrentCaps init_caps = ctx.caps();
    if (scheme.kind == ratings::Kind::DLR_TRANS) {
        init_caps = ratings::current_caps(
            nc, ratings::RatingScheme{ratings::Kind::DLR_SS, scheme.season});
    }
    p.z0.resize(n);
    std::vector<VectorXd> warm(M);
    util::parallel_for(M, params.workers, [&](int t) {
        acopf::AcSubproblemSpec spec;
        spec.period = t;
        spec.rho = 0.0;
        spec.caps.resize(L.nc);
        for (int l = 0; l < L.nc; ++l)
            spec.caps[l] = init_caps.cap_pu2[L.cur_branch[l]][t];
        spec.nlp_tol = params.nlp_tol;
        spec.nlp_max_iter = params.nlp_max_iter;
        warm[t] = acopf::solve_ac_subproblem(ctx.model(), spec).x;
    });
    for (int t = 0; t < M; ++t) p.z0.segment(t * nper, nper) = warm[t];

    nlp::Result res = nlp::minimize(p, params.nlp_tol, 3 * params.nlp_max_iter);
    if (res.status != nlp::Status::Converged) {
        throw acopf::SubproblemFailure(
            std::string("monolithic solve ended ") + nlp::to_string(res.status),
            -1, res.iterations, res.kkt_residual);
    }

    SolveReport rep;
    rep.mode = "monolithic";
    rep.scheme = ratings::to_string(scheme.kind);
    rep.converged = true;
    rep.status = "Converged";
    std::vector<VectorXd> period_x(M);
    for (int t = 0; t < M; ++t) period_x[t] = res.point.segment(t * nper, nper);
    detail::fill_primal_report(ctx, rep, period_x);
    rep.wall_ms = std::chrono::duration<double, std::milli>(
                      std::chrono::steady_clock::now() - t_start)
                      .count();
    return rep;
}

}  // namespace dlr::admm
