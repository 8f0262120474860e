#pragma once

// =============================================================================
// Conductor heat-balance model
// =============================================================================
// Lumped thermal model of an overhead conductor:
//
//   m*cp * dT/dtau = r*iota + q_s - q_c(T) - q_r(T)
//
// with radiative loss q_r = pi*D0*eps*sigma*(T^4 - Ta^4) and forced convection
// q_c. Once q_c is replaced by a linear fit k_c*T + k0_c, the dynamics become
//
//   dT/dtau = -K4*T^4 - K1*T + K0
//
// which admits a closed-form inverse solution tau(T) via the factorization of
// the quartic P(T) = T^4 + (K1/K4)*T - (K0/K4) = (T-s1)(T+s2)(T^2-pT+q).
// Everything in this header works in SI units per unit length of conductor
// (W/m, J/(m*K), A^2) and Kelvin.
// =============================================================================

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

namespace dlr::thermal {

inline constexpr double kStefanBoltzmann = 5.6704e-8;  // W m^-2 K^-4
inline constexpr double kCelsiusOffset = 273.15;

// ---------------------------------------------------------------------------
// Errors
// ---------------------------------------------------------------------------

struct ThermalError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Heat input at zero temperature is non-positive: the sample lies outside
/// the operating regime the closed form assumes. Callers reject the sample.
struct NonPositiveK0 : ThermalError {
    using ThermalError::ThermalError;
};

/// Requested temperature is not on the monotone branch between T0 and s1.
struct OutOfBranch : ThermalError {
    using ThermalError::ThermalError;
};

/// Root finder failed to converge (pathological coefficients).
struct NoConvergence : ThermalError {
    using ThermalError::ThermalError;
};

/// All sampled convection values identical; no line can be fit.
struct DegenerateFit : ThermalError {
    using ThermalError::ThermalError;
};

// ---------------------------------------------------------------------------
// Domain types
// ---------------------------------------------------------------------------

/// Physical parameters of one conductor. Resistance is the "hot" value, so
/// the model is conservative; it is treated as temperature independent.
struct ConductorParams {
    double resistance_per_m = 0.0;  ///< ohm/m at T_max
    double mass_per_m = 0.0;        ///< kg/m
    double specific_heat = 0.0;     ///< J/(kg K)
    double diameter = 0.0;          ///< m
    double emissivity = 0.0;        ///< (0, 1]
    double absorptivity = 0.0;      ///< (0, 1]
    double max_temperature = 0.0;   ///< K

    void validate() const {
        auto bad = [](double x) { return !(x > 0.0) || !std::isfinite(x); };
        if (bad(resistance_per_m) || bad(mass_per_m) || bad(specific_heat) ||
            bad(diameter) || bad(max_temperature)) {
            throw ThermalError("ConductorParams: all fields must be strictly positive");
        }
        if (!(emissivity > 0.0 && emissivity <= 1.0)) {
            throw ThermalError("ConductorParams: emissivity must lie in (0,1]");
        }
        if (!(absorptivity > 0.0 && absorptivity <= 1.0)) {
            throw ThermalError("ConductorParams: absorptivity must lie in (0,1]");
        }
        if (!(max_temperature > kCelsiusOffset)) {
            throw ThermalError("ConductorParams: max_temperature must exceed 273.15 K");
        }
    }

    double heat_capacity() const { return mass_per_m * specific_heat; }  // J/(m K)
};

/// Weather on one line over one dispatch interval. solar_gain is the absorbed
/// solar power per unit length (absorptivity already applied).
struct WeatherSample {
    double wind_speed = 0.0;    ///< m/s
    double wind_angle = 0.0;    ///< rad in [0, pi/2], angle between wind and line
    double ambient_temp = 0.0;  ///< K
    double solar_gain = 0.0;    ///< W/m
};

/// Least-squares line through the exact convection curve: q_c ~ slope*T + intercept.
struct LinearConvection {
    double slope = 0.0;      ///< W/(m K)
    double intercept = 0.0;  ///< W/m
    double fit_r2 = 0.0;
};

/// Coefficients of dT/dtau = -k4 T^4 - k1 T + k0, with k0 = k0' + r'*iota.
struct ThermalCoefficients {
    double k0_prime = 0.0;  ///< K/s at zero current
    double k0 = 0.0;        ///< K/s
    double k1 = 0.0;        ///< 1/s
    double k4 = 0.0;        ///< 1/(s K^3)
    double r_prime = 0.0;   ///< K/(s A^2)
};

/// Real roots of P(T) = T^4 + (k1/k4) T - (k0/k4) and the derived scalars of
/// its factorization (T-s1)(T+s2)(T^2 - p T + q).
struct QuarticRoots {
    double s1 = 0.0;  ///< positive real root (steady-state temperature)
    double s2 = 0.0;  ///< magnitude of the negative real root
    double p = 0.0;   ///< s2 - s1
    double q = 0.0;   ///< s1^2 - s1 s2 + s2^2
    double g1 = 0.0;  ///< 3 s1^2 - 2 s1 s2 + s2^2
    double g2 = 0.0;  ///< s1^2 - 2 s1 s2 + 3 s2^2
    double g3 = 0.0;  ///< 3 s1^2 - 2 s1 s2 + 3 s2^2
};

/// Curvature/contraction constants of the single-interval flow map and the
/// resulting uniform bound on the operator norm of the multi-period Hessian.
struct SmoothnessBounds {
    double beta = 0.0;              ///< |F''| <= beta on [0, T_max]
    double kappa_lower = 0.0;       ///< 1/s, fastest contraction rate
    double g_delta = 0.0;           ///< e^{-K1 dt}, slowest contraction per step
    double m_delta = 0.0;           ///< single-step Hessian bound
    double hessian_op_bound = 0.0;  ///< multi-period Hessian operator norm bound
};

// ---------------------------------------------------------------------------
// Forced convection
// ---------------------------------------------------------------------------

/// Wind-direction factor; 1 for wind perpendicular to the line.
inline double wind_angle_factor(double phi) {
    return 1.194 - std::cos(phi) + 0.194 * std::cos(2.0 * phi) +
           0.368 * std::sin(2.0 * phi);
}

/// Forced-convection heat loss q_c(T) in W/m. Air properties are evaluated at
/// the film temperature (T + Ta)/2 at sea level; wind speed is floored at
/// 0.1 m/s so the Reynolds number never vanishes. The low- and high-Reynolds
/// correlations are both evaluated and the larger one is used.
inline double exact_convection(const ConductorParams& params,
                               const WeatherSample& weather, double temp) {
    const double t_film = 0.5 * (temp + weather.ambient_temp);
    const double t_film_c = t_film - kCelsiusOffset;
    const double k_air =
        2.424e-2 + 7.477e-5 * t_film_c - 4.407e-9 * t_film_c * t_film_c;
    const double mu_air = 1.458e-6 * std::pow(t_film, 1.5) / (t_film + 383.4);
    const double rho_air = 1.293 / (1.0 + 0.00367 * t_film_c);
    const double wind = std::max(weather.wind_speed, 0.1);
    const double reynolds = params.diameter * rho_air * wind / mu_air;
    const double low_re = 1.01 + 1.35 * std::pow(reynolds, 0.52);
    const double high_re = 0.754 * std::pow(reynolds, 0.6);
    return wind_angle_factor(weather.wind_angle) * std::max(low_re, high_re) *
           k_air * (temp - weather.ambient_temp);
}

/// Radiative heat loss q_r(T) in W/m relative to ambient.
inline double radiative_loss(const ConductorParams& params,
                             const WeatherSample& weather, double temp) {
    const double t4 = temp * temp * temp * temp;
    const double a4 = std::pow(weather.ambient_temp, 4);
    return M_PI * params.diameter * params.emissivity * kStefanBoltzmann * (t4 - a4);
}

/// Least-squares line through an arbitrary scalar curve sampled uniformly on
/// [t_lo, t_hi]. Exposed so alternate convection formulas can be fitted.
inline LinearConvection fit_convection_line(const std::function<double(double)>& qc,
                                            double t_lo, double t_hi,
                                            std::size_t samples = 48) {
    if (!(t_hi > t_lo)) throw ThermalError("fit_convection_line: empty fit range");
    samples = std::max<std::size_t>(samples, 32);

    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    std::vector<double> ts(samples), qs(samples);
    for (std::size_t i = 0; i < samples; ++i) {
        const double t = t_lo + (t_hi - t_lo) * double(i) / double(samples - 1);
        const double v = qc(t);
        ts[i] = t;
        qs[i] = v;
        sx += t;
        sy += v;
        sxx += t * t;
        sxy += t * v;
    }
    const double n = double(samples);
    const double denom = n * sxx - sx * sx;
    double ss_tot = 0;
    const double mean_y = sy / n;
    for (double v : qs) ss_tot += (v - mean_y) * (v - mean_y);
    if (ss_tot <= 0.0) {
        throw DegenerateFit("fit_convection_line: sampled values are constant");
    }
    LinearConvection lin;
    lin.slope = (n * sxy - sx * sy) / denom;
    lin.intercept = (sy - lin.slope * sx) / n;
    double ss_res = 0;
    for (std::size_t i = 0; i < samples; ++i) {
        const double e = qs[i] - (lin.slope * ts[i] + lin.intercept);
        ss_res += e * e;
    }
    lin.fit_r2 = 1.0 - ss_res / ss_tot;
    return lin;
}

/// Fit the exact convection curve over [t_lo, t_hi]. The range must span the
/// temperatures the ODE can visit, typically [Ta, T_max + 10].
inline LinearConvection linearize_convection(const ConductorParams& params,
                                             const WeatherSample& weather,
                                             double t_lo, double t_hi,
                                             std::size_t samples = 48) {
    return fit_convection_line(
        [&](double t) { return exact_convection(params, weather, t); }, t_lo, t_hi,
        samples);
}

inline LinearConvection linearize_convection(const ConductorParams& params,
                                             const WeatherSample& weather) {
    return linearize_convection(params, weather, weather.ambient_temp,
                                params.max_temperature + 10.0);
}

// ---------------------------------------------------------------------------
// ODE coefficients and quartic roots
// ---------------------------------------------------------------------------

namespace detail {

/// Coefficients without the positivity check; used where K0 > 0 is not
/// required (ampacity evaluation).
inline ThermalCoefficients coefficients_unchecked(const ConductorParams& params,
                                                  const WeatherSample& weather,
                                                  const LinearConvection& lin,
                                                  double current_sq) {
    const double mcp = params.heat_capacity();
    const double rad = M_PI * params.diameter * params.emissivity * kStefanBoltzmann;
    ThermalCoefficients c;
    c.k0_prime = (rad * std::pow(weather.ambient_temp, 4) + weather.solar_gain -
                  lin.intercept) /
                 mcp;
    c.k1 = lin.slope / mcp;
    c.k4 = rad / mcp;
    c.r_prime = params.resistance_per_m / mcp;
    c.k0 = c.k0_prime + c.r_prime * current_sq;
    return c;
}

/// Safeguarded Newton on a monotone-increasing function with root in (0, hi].
/// The bracket is grown by doubling until f changes sign.
template <typename F, typename DF>
double increasing_root(F f, DF df, double hi_guess, const char* what) {
    double lo = 0.0;
    double hi = std::max(hi_guess, 1.0);
    int guard = 0;
    while (f(hi) < 0.0) {
        lo = hi;
        hi *= 2.0;
        if (++guard > 200) throw NoConvergence(std::string(what) + ": bracket failed");
    }
    double x = 0.5 * (lo + hi);
    for (int it = 0; it < 200; ++it) {
        const double fx = f(x);
        if (fx > 0.0) hi = x; else lo = x;
        const double dfx = df(x);
        double next = (dfx > 0.0) ? x - fx / dfx : 0.5 * (lo + hi);
        if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
        if (std::abs(next - x) <= 1e-15 * std::max(1.0, std::abs(x))) return next;
        x = next;
    }
    // interval is tiny by now; midpoint is as good as it gets
    if (hi - lo <= 1e-9 * std::max(1.0, hi)) return 0.5 * (lo + hi);
    throw NoConvergence(std::string(what) + ": no convergence in 200 iterations");
}

}  // namespace detail

/// Assemble the ODE coefficients at a given squared current (A^2).
/// Throws NonPositiveK0 when the heat input at T = 0 is non-positive, which
/// puts the sample outside the regime the closed form assumes.
inline ThermalCoefficients compute_coefficients(const ConductorParams& params,
                                                const WeatherSample& weather,
                                                const LinearConvection& lin,
                                                double current_sq) {
    if (current_sq < 0.0) {
        throw ThermalError("compute_coefficients: negative squared current");
    }
    ThermalCoefficients c =
        detail::coefficients_unchecked(params, weather, lin, current_sq);
    if (!(c.k0 > 0.0)) {
        throw NonPositiveK0("compute_coefficients: K0 <= 0 (K0 = " +
                            std::to_string(c.k0) + ")");
    }
    return c;
}

/// Both real roots of P(T) = T^4 + (k1/k4) T - (k0/k4), plus the factorization
/// scalars. P is strictly increasing on [0, inf) from -k0/k4 < 0, so s1 is the
/// unique positive root; the unique negative root is -s2.
inline QuarticRoots quartic_roots(const ThermalCoefficients& coeffs) {
    if (!(coeffs.k4 > 0.0) || !(coeffs.k0 > 0.0)) {
        throw ThermalError("quartic_roots: requires k4 > 0 and k0 > 0");
    }
    const double b = coeffs.k1 / coeffs.k4;
    const double c = coeffs.k0 / coeffs.k4;

    const double hi1 = std::pow(c, 0.25) + 1.0;
    QuarticRoots r;
    r.s1 = detail::increasing_root(
        [&](double t) { return ((t * t) * (t * t)) + b * t - c; },
        [&](double t) { return 4.0 * t * t * t + b; }, hi1, "quartic_roots(s1)");
    // -s2 solves P(-s) = 0  =>  s^4 - b s - c = 0, increasing for s beyond
    // the stationary point; same bracketing applies.
    const double hi2 = std::pow(c, 0.25) + std::cbrt(std::max(b, 0.0)) + 1.0;
    r.s2 = detail::increasing_root(
        [&](double s) { return ((s * s) * (s * s)) - b * s - c; },
        [&](double s) { return 4.0 * s * s * s - b; }, hi2, "quartic_roots(s2)");

    r.p = r.s2 - r.s1;
    r.q = r.s1 * r.s1 - r.s1 * r.s2 + r.s2 * r.s2;
    r.g1 = 3.0 * r.s1 * r.s1 - 2.0 * r.s1 * r.s2 + r.s2 * r.s2;
    r.g2 = r.s1 * r.s1 - 2.0 * r.s1 * r.s2 + 3.0 * r.s2 * r.s2;
    r.g3 = 3.0 * r.s1 * r.s1 - 2.0 * r.s1 * r.s2 + 3.0 * r.s2 * r.s2;
    return r;
}

// ---------------------------------------------------------------------------
// Closed-form transient solution
// ---------------------------------------------------------------------------

/// Elapsed time on the monotone branch from T0 to T (both on the same side of
/// s1). tau(T0) = 0 and tau -> inf as T -> s1.
inline double tau_of_temperature(double temp, double t0, const QuarticRoots& roots,
                                 double k4) {
    if (temp == t0) return 0.0;
    const double lo = std::min(t0, roots.s1);
    const double hi = std::max(t0, roots.s1);
    if (!(temp > lo && temp < hi)) {
        throw OutOfBranch("tau_of_temperature: T = " + std::to_string(temp) +
                          " not between T0 = " + std::to_string(t0) +
                          " and s1 = " + std::to_string(roots.s1));
    }
    const double s1 = roots.s1, s2 = roots.s2;
    const double p = roots.p, q = roots.q;
    const double g1 = roots.g1, g2 = roots.g2, g3 = roots.g3;
    const double sqrt_g3 = std::sqrt(g3);

    const double quad_term =
        (s2 - s1) / (g1 * g2) *
        std::log(std::abs(temp * temp - p * temp + q) /
                 std::abs(t0 * t0 - p * t0 + q));
    const double lin_term =
        1.0 / (s1 + s2) *
        ((1.0 / g1) * std::log(std::abs(temp - s1) / std::abs(t0 - s1)) -
         (1.0 / g2) * std::log(std::abs(temp + s2) / std::abs(t0 + s2)));
    const double atan_term =
        4.0 * s1 * s2 / (g1 * g2 * sqrt_g3) *
        (std::atan((2.0 * temp - p) / sqrt_g3) - std::atan((2.0 * t0 - p) / sqrt_g3));

    const double tau = (quad_term - lin_term + atan_term) / k4;
    return std::max(tau, 0.0);
}

/// Temperature after dt seconds at constant squared current and weather,
/// obtained by inverting tau(T) = dt with bisection on the monotone branch.
inline double step_temperature(double t0, double current_sq,
                               const ConductorParams& params,
                               const WeatherSample& weather,
                               const LinearConvection& lin, double dt) {
    if (dt < 0.0) throw ThermalError("step_temperature: negative dt");
    if (!(t0 > 0.0)) throw ThermalError("step_temperature: T0 must be positive");
    const ThermalCoefficients coeffs =
        compute_coefficients(params, weather, lin, current_sq);
    const QuarticRoots roots = quartic_roots(coeffs);
    if (dt == 0.0) return t0;
    if (std::abs(t0 - roots.s1) <= 1e-9) return roots.s1;  // equilibrium

    // tau grows monotonically from 0 (at T0) to inf (at s1); bisect.
    double lo = t0, hi = roots.s1;
    for (int it = 0; it < 200 && std::abs(hi - lo) > 1e-9; ++it) {
        const double mid = 0.5 * (lo + hi);
        if (tau_of_temperature(mid, t0, roots, coeffs.k4) < dt) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    return 0.5 * (lo + hi);
}

/// Equilibrium temperature under constant current and weather (the positive
/// quartic root s1).
inline double steady_state_temperature(double current_sq,
                                       const ConductorParams& params,
                                       const WeatherSample& weather,
                                       const LinearConvection& lin) {
    return quartic_roots(compute_coefficients(params, weather, lin, current_sq)).s1;
}

/// Largest squared current (A^2) whose steady state stays at or below t_max.
/// Negative values are clamped to zero and flagged: the line would exceed
/// t_max even unloaded.
inline double max_steady_current_sq(const ConductorParams& params,
                                    const WeatherSample& weather,
                                    const LinearConvection& lin, double t_max,
                                    bool* clamped = nullptr) {
    if (!(t_max > weather.ambient_temp)) {
        throw ThermalError("max_steady_current_sq: t_max must exceed ambient");
    }
    const ThermalCoefficients c =
        detail::coefficients_unchecked(params, weather, lin, 0.0);
    const double t4 = t_max * t_max * t_max * t_max;
    double iota = (c.k4 * t4 + c.k1 * t_max - c.k0_prime) / c.r_prime;
    if (clamped) *clamped = iota < 0.0;
    return std::max(iota, 0.0);
}

// ---------------------------------------------------------------------------
// Multi-period schedules
// ---------------------------------------------------------------------------

/// Compose step_temperature over a schedule of per-period squared currents and
/// weather. Returns the temperature at the end of each period.
inline std::vector<double> simulate_schedule(double t0,
                                             const std::vector<double>& currents_sq,
                                             const std::vector<WeatherSample>& weather,
                                             const ConductorParams& params,
                                             const std::vector<LinearConvection>& lins,
                                             double dt) {
    if (currents_sq.size() != weather.size() || currents_sq.size() != lins.size()) {
        throw ThermalError("simulate_schedule: mismatched schedule lengths");
    }
    std::vector<double> temps(currents_sq.size());
    double t = t0;
    for (std::size_t i = 0; i < currents_sq.size(); ++i) {
        try {
            t = step_temperature(t, currents_sq[i], params, weather[i], lins[i], dt);
        } catch (const NonPositiveK0& e) {
            throw NonPositiveK0("period " + std::to_string(i) + ": " + e.what());
        } catch (const ThermalError& e) {
            throw ThermalError("period " + std::to_string(i) + ": " + e.what());
        }
        temps[i] = t;
    }
    return temps;
}

/// Jacobian of one temperature step: end temperature plus its sensitivities
/// to the start temperature and to the squared current.
struct StepJacobian {
    double t_end = 0.0;
    double dt_dt0 = 0.0;    ///< in (0, 1); exactly P(T_end)/P(T0)
    double dt_diota = 0.0;  ///< K per A^2, >= 0
};

/// Forward-sensitivity integration of one interval: the pair (J1, J2) solves
/// J' = -kappa(T) J + (0, r')  along the trajectory, with kappa = K1+4 K4 T^3.
/// T is integrated alongside with the same RK4 grid.
inline StepJacobian step_jacobian(double t0, double current_sq,
                                  const ConductorParams& params,
                                  const WeatherSample& weather,
                                  const LinearConvection& lin, double dt,
                                  int rk_steps = 256) {
    const ThermalCoefficients c = compute_coefficients(params, weather, lin, current_sq);
    StepJacobian out;
    if (dt == 0.0) {
        out.t_end = t0;
        out.dt_dt0 = 1.0;
        out.dt_diota = 0.0;
        return out;
    }
    const double h = dt / rk_steps;
    double temp = t0, j1 = 1.0, j2 = 0.0;
    auto rhs = [&](double T, double J1, double J2, double& dT, double& dJ1,
                   double& dJ2) {
        const double kappa = c.k1 + 4.0 * c.k4 * T * T * T;
        dT = -c.k4 * T * T * T * T - c.k1 * T + c.k0;
        dJ1 = -kappa * J1;
        dJ2 = -kappa * J2 + c.r_prime;
    };
    for (int i = 0; i < rk_steps; ++i) {
        double a1, b1, c1, a2, b2, c2, a3, b3, c3, a4, b4, c4;
        rhs(temp, j1, j2, a1, b1, c1);
        rhs(temp + 0.5 * h * a1, j1 + 0.5 * h * b1, j2 + 0.5 * h * c1, a2, b2, c2);
        rhs(temp + 0.5 * h * a2, j1 + 0.5 * h * b2, j2 + 0.5 * h * c2, a3, b3, c3);
        rhs(temp + h * a3, j1 + h * b3, j2 + h * c3, a4, b4, c4);
        temp += h / 6.0 * (a1 + 2.0 * a2 + 2.0 * a3 + a4);
        j1 += h / 6.0 * (b1 + 2.0 * b2 + 2.0 * b3 + b4);
        j2 += h / 6.0 * (c1 + 2.0 * c2 + 2.0 * c3 + c4);
    }
    out.t_end = temp;
    out.dt_dt0 = j1;
    out.dt_diota = j2;
    return out;
}

/// Per-step Jacobians along a schedule, evaluated on the closed-form
/// trajectory so the values match simulate_schedule.
inline std::vector<StepJacobian> schedule_jacobians(
    double t0, const std::vector<double>& currents_sq,
    const std::vector<WeatherSample>& weather, const ConductorParams& params,
    const std::vector<LinearConvection>& lins, double dt, int rk_steps = 256) {
    if (currents_sq.size() != weather.size() || currents_sq.size() != lins.size()) {
        throw ThermalError("schedule_jacobians: mismatched schedule lengths");
    }
    std::vector<StepJacobian> jacs(currents_sq.size());
    double t = t0;
    for (std::size_t i = 0; i < currents_sq.size(); ++i) {
        jacs[i] = step_jacobian(t, currents_sq[i], params, weather[i], lins[i], dt,
                                rk_steps);
        t = step_temperature(t, currents_sq[i], params, weather[i], lins[i], dt);
        jacs[i].t_end = t;  // keep values consistent with the closed form
    }
    return jacs;
}

/// Gradient of the final temperature of a schedule with respect to the
/// initial temperature and every per-period squared current. Chain rule over
/// the per-step Jacobians: g_t = J2 e_t + J1 g_{t-1}.
struct FlowGradient {
    double final_temp = 0.0;
    double d_t0 = 0.0;
    std::vector<double> d_currents_sq;
};

inline FlowGradient flow_map_gradient(double t0,
                                      const std::vector<double>& currents_sq,
                                      const std::vector<WeatherSample>& weather,
                                      const ConductorParams& params,
                                      const std::vector<LinearConvection>& lins,
                                      double dt) {
    const auto jacs = schedule_jacobians(t0, currents_sq, weather, params, lins, dt);
    FlowGradient g;
    g.d_currents_sq.assign(currents_sq.size(), 0.0);
    g.d_t0 = 1.0;
    for (std::size_t i = 0; i < jacs.size(); ++i) {
        for (std::size_t k = 0; k < i; ++k) g.d_currents_sq[k] *= jacs[i].dt_dt0;
        g.d_currents_sq[i] = jacs[i].dt_diota;
        g.d_t0 *= jacs[i].dt_dt0;
        g.final_temp = jacs[i].t_end;
    }
    if (jacs.empty()) g.final_temp = t0;
    return g;
}

// ---------------------------------------------------------------------------
// Smoothness constants
// ---------------------------------------------------------------------------

/// Uniform curvature constants of the flow map on trajectories below t_max,
/// and the implied operator-norm bound on the Hessian of the multi-period
/// flow map.
inline SmoothnessBounds smoothness_bounds(const ConductorParams& params,
                                          const WeatherSample& weather,
                                          const LinearConvection& lin, double dt,
                                          double t_max) {
    if (!(dt > 0.0)) throw ThermalError("smoothness_bounds: dt must be positive");
    const ThermalCoefficients c = detail::coefficients_unchecked(params, weather, lin, 0.0);
    SmoothnessBounds b;
    b.beta = 12.0 * c.k4 * t_max * t_max;
    b.kappa_lower = c.k1 + 4.0 * c.k4 * t_max * t_max * t_max;
    b.g_delta = std::exp(-c.k1 * dt);
    const double r_over_k1 = c.r_prime / c.k1;
    b.m_delta = (b.beta / b.kappa_lower) * (1.0 + r_over_k1 * r_over_k1) *
                (1.0 - std::exp(-b.kappa_lower * dt));
    b.hessian_op_bound =
        b.m_delta + b.m_delta * (1.0 + r_over_k1) * (1.0 + r_over_k1) /
                        (1.0 - std::exp(-c.k1 * dt));
    return b;
}

}  // namespace dlr::thermal
