#pragma once

// =============================================================================
// Rating schemes
// =============================================================================
// The four schemes differ only in the weather fed to the steady-state
// ampacity computation:
//   SLR       fixed conservative wind and seasonal ambient
//   AAR       conservative wind, real ambient
//   DLR-SS    real weather, steady-state temperature model
//   DLR-Trans real weather, transient temperature model on screened lines
// Actual solar gain is retained for every scheme (conservative direction).
// =============================================================================

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "dlr/network.hpp"
#include "dlr/thermal.hpp"

namespace dlr::ratings {

enum class Kind { SLR, AAR, DLR_SS, DLR_TRANS };
enum class Season { Summer, Winter };

struct RatingScheme {
    Kind kind = Kind::DLR_SS;
    Season season = Season::Summer;  ///< used by SLR only
};

inline const char* to_string(Kind k) {
    switch (k) {
        case Kind::SLR: return "slr";
        case Kind::AAR: return "aar";
        case Kind::DLR_SS: return "dlr-ss";
        case Kind::DLR_TRANS: return "dlr-trans";
    }
    return "?";
}

inline Kind kind_from_string(const std::string& s) {
    if (s == "slr") return Kind::SLR;
    if (s == "aar") return Kind::AAR;
    if (s == "dlr-ss") return Kind::DLR_SS;
    if (s == "dlr-trans") return Kind::DLR_TRANS;
    throw std::invalid_argument("unknown rating scheme '" + s + "'");
}

inline constexpr double kConservativeWind = 0.6;       // m/s
inline constexpr double kSlrAmbientSummer = 313.15;    // K (40 C)
inline constexpr double kSlrAmbientWinter = 293.15;    // K (20 C)

/// Weather actually used by a scheme's rating computation.
inline thermal::WeatherSample effective_weather(const RatingScheme& scheme,
                                                const thermal::WeatherSample& actual) {
    thermal::WeatherSample w = actual;
    switch (scheme.kind) {
        case Kind::DLR_SS:
        case Kind::DLR_TRANS:
            return w;
        case Kind::AAR:
            w.wind_speed = kConservativeWind;
            w.wind_angle = M_PI / 2;
            return w;
        case Kind::SLR:
            w.wind_speed = kConservativeWind;
            w.wind_angle = M_PI / 2;
            w.ambient_temp = scheme.season == Season::Summer ? kSlrAmbientSummer
                                                             : kSlrAmbientWinter;
            return w;
    }
    return w;
}

/// Per-line, per-period steady-state current caps in p.u.^2 under the
/// scheme's effective weather. Non-thermal branches keep their static cap
/// (or +inf). A zero cap means the line exceeds its temperature limit even
/// unloaded under the effective weather.
struct CurrentCaps {
    std::vector<std::vector<double>> cap_pu2;  ///< [branch][period]
    bool any_clamped = false;
};

inline CurrentCaps current_caps(const net::NetworkCase& nc,
                                const RatingScheme& scheme) {
    CurrentCaps out;
    out.cap_pu2.assign(nc.branches.size(),
                       std::vector<double>(nc.horizon,
                                           std::numeric_limits<double>::infinity()));
    for (std::size_t b = 0; b < nc.branches.size(); ++b) {
        const auto& br = nc.branches[b];
        if (!br.thermal) {
            if (br.static_current_cap) {
                for (int t = 0; t < nc.horizon; ++t)
                    out.cap_pu2[b][t] = *br.static_current_cap;
            }
            continue;
        }
        const auto& cond = br.thermal->conductor;
        for (int t = 0; t < nc.horizon; ++t) {
            const auto eff = effective_weather(scheme, nc.weather[b][t]);
            const auto lin = thermal::linearize_convection(cond, eff);
            bool clamped = false;
            double imax_a2;
            try {
                imax_a2 = thermal::max_steady_current_sq(cond, eff,
                                                         lin, cond.max_temperature,
                                                         &clamped);
            } catch (const thermal::ThermalError& e) {
                throw thermal::ThermalError("caps for line " + br.id + " period " +
                                            std::to_string(t) + ": " + e.what());
            }
            out.any_clamped = out.any_clamped || clamped;
            out.cap_pu2[b][t] = nc.to_pu_current_sq(imax_a2, br);
        }
    }
    return out;
}

/// Mean ampacity over thermal line-periods in kA (the capacity figure used in
/// scheme comparisons).
inline double mean_capacity_ka(const net::NetworkCase& nc, const CurrentCaps& caps) {
    double sum = 0.0;
    int count = 0;
    for (std::size_t b = 0; b < nc.branches.size(); ++b) {
        if (!nc.branches[b].thermal) continue;
        for (int t = 0; t < nc.horizon; ++t) {
            const double ka2 = nc.to_ka2_current_sq(caps.cap_pu2[b][t], nc.branches[b]);
            sum += std::sqrt(std::max(ka2, 0.0));
            ++count;
        }
    }
    return count ? sum / count : 0.0;
}

}  // namespace dlr::ratings
