#include <catch2/catch_amalgamated.hpp>

#include <set>

#include "dlr/admm.hpp"
#include "dlr/network.hpp"
#include "oracles.hpp"

using namespace dlr;
using Catch::Approx;
using Eigen::VectorXd;

namespace {

net::NetworkCase case2() {
    return net::load_case(std::string(DLR_DATA_DIR) + "/case2.json");
}

net::NetworkCase case9() {
    return net::load_case(std::string(DLR_DATA_DIR) + "/case9.json");
}

admm::AdmmParams fast_params() {
    admm::AdmmParams p;
    p.workers = 2;
    return p;
}

/// case2 with demand pushed against the calm-weather ampacity of line1.
net::NetworkCase congested_case2() {
    auto nc = case2();
    for (int t = 0; t < nc.horizon; ++t) {
        nc.demand_p[1][t] = 1.35;
        nc.demand_q[1][t] = 0.27;
    }
    return nc;
}

}  // namespace

TEST_CASE("consensus maps", "[admm]") {
    auto nc = case9();

    SECTION("power-only schemes tie one coordinate per generator-period") {
        admm::SolveContext ctx(nc, {ratings::Kind::SLR, ratings::Season::Summer},
                               fast_params());
        CHECK(ctx.maps().d() == nc.horizon * int(nc.generators.size()));
    }
    SECTION("transient scheme adds one coordinate per screened line-period") {
        std::vector<int> screened = {nc.branch_index("l57"), nc.branch_index("l78")};
        admm::SolveContext ctx(nc, {ratings::Kind::DLR_TRANS, ratings::Season::Summer},
                               fast_params(), screened);
        CHECK(ctx.maps().d() ==
              nc.horizon * (int(nc.generators.size()) + 2));
        // screened lines run uncapped on the AC side
        for (int b : screened) {
            for (int t = 0; t < nc.horizon; ++t) {
                CHECK(std::isinf(ctx.caps().cap_pu2[b][t]));
            }
        }
    }
    SECTION("coordinate ids form a bijection with (device, period) pairs") {
        std::vector<int> screened = {nc.branch_index("l45")};
        admm::SolveContext ctx(nc, {ratings::Kind::DLR_TRANS, ratings::Season::Summer},
                               fast_params(), screened);
        std::set<int> seen;
        for (const auto& row : ctx.maps().gen_coords) {
            for (int c : row) seen.insert(c);
        }
        for (const auto& row : ctx.maps().line_coords) {
            for (int c : row) seen.insert(c);
        }
        CHECK(int(seen.size()) == ctx.maps().d());
        CHECK(*seen.rbegin() == ctx.maps().d() - 1);
    }
}

TEST_CASE("ramp projection", "[admm]") {
    net::Generator gen;
    gen.p_min = 0.0;
    gen.p_max = 1.0;
    gen.ramp_up = 0.4;
    gen.ramp_down = 0.4;
    const VectorXd v0 = VectorXd::Zero(2);

    SECTION("feasible targets pass through unchanged") {
        VectorXd target(2);
        target << 0.3, 0.55;
        const VectorXd out = admm::solve_ramp_subproblem(gen, target, 10.0, v0, 1e-8);
        CHECK(out[0] == target[0]);
        CHECK(out[1] == target[1]);
    }
    SECTION("two-period KKT by hand: (0,1) projects to (0.3, 0.7)") {
        VectorXd target(2);
        target << 0.0, 1.0;
        const VectorXd out = admm::solve_ramp_subproblem(gen, target, 10.0, v0, 1e-8);
        CHECK(out[0] == Approx(0.3).margin(1e-6));
        CHECK(out[1] == Approx(0.7).margin(1e-6));
    }
    SECTION("tightening the band never shrinks the distance") {
        VectorXd target(2);
        target << 0.0, 1.0;
        double prev = 0.0;
        for (double band : {0.5, 0.4, 0.3, 0.2, 0.1}) {
            net::Generator g2 = gen;
            g2.ramp_up = g2.ramp_down = band;
            const VectorXd out = admm::solve_ramp_subproblem(g2, target, 10.0, v0, 1e-8);
            const double dist = (out - target).norm();
            CHECK(dist >= prev - 1e-9);
            prev = dist;
        }
    }
    SECTION("box is honored") {
        VectorXd target(2);
        target << -0.4, 1.4;
        const VectorXd out = admm::solve_ramp_subproblem(gen, target, 10.0, v0, 1e-8);
        CHECK(out[0] >= -1e-9);
        CHECK(out[1] <= 1.0 + 1e-9);
    }
}

TEST_CASE("temperature subproblem", "[admm]") {
    auto nc = case2();
    const int b = nc.branch_index("line1");
    const auto& br = nc.branches[b];
    const auto& cond = br.thermal->conductor;
    std::vector<thermal::LinearConvection> lins;
    for (int t = 0; t < nc.horizon; ++t) {
        lins.push_back(thermal::linearize_convection(cond, nc.weather[b][t]));
    }
    const VectorXd v0 = VectorXd::Zero(nc.horizon);

    SECTION("already-safe target is returned unchanged") {
        VectorXd target = VectorXd::Constant(nc.horizon, 0.2);  // (kA)^2, mild
        auto res = admm::solve_temperature_subproblem(nc, b, lins, target, 10.0, v0,
                                                      1e-8);
        for (int t = 0; t < nc.horizon; ++t) {
            CHECK(res.iota_ka2[t] == target[t]);
            CHECK(res.temp_k[t] <= cond.max_temperature);
        }
    }
    SECTION("single period clips to the tau-inversion boundary") {
        auto one = net::truncate_horizon(nc, 1);
        // oracle: bisect the current whose one-step temperature hits the limit
        auto temp_of = [&](double iota_a2) {
            return thermal::step_temperature(br.thermal->initial_temp, iota_a2, cond,
                                             one.weather[b][0], lins[0],
                                             one.dt_seconds);
        };
        double lo = 0.0, hi = 4e6;
        REQUIRE(temp_of(hi) > cond.max_temperature);
        for (int it = 0; it < 200; ++it) {
            const double mid = 0.5 * (lo + hi);
            (temp_of(mid) < cond.max_temperature ? lo : hi) = mid;
        }
        const double boundary_ka2 = 0.5 * (lo + hi) * 1e-6;

        VectorXd target = VectorXd::Constant(1, boundary_ka2 * 2.0);
        auto res = admm::solve_temperature_subproblem(one, b, {lins[0]}, target, 10.0,
                                                      VectorXd::Zero(1), 1e-8);
        CHECK(res.iota_ka2[0] == Approx(boundary_ka2).epsilon(1e-4));
        CHECK(res.temp_k[0] <= cond.max_temperature + 1e-6);
    }
    SECTION("two-period solution matches a grid-search oracle") {
        auto two = net::truncate_horizon(nc, 2);
        std::vector<thermal::LinearConvection> lin2 = {lins[0], lins[1]};
        VectorXd target(2);
        target << 0.9, 0.8;  // (kA)^2, above what the limit allows
        auto res = admm::solve_temperature_subproblem(two, b, lin2, target, 10.0,
                                                      VectorXd::Zero(2), 1e-8);

        auto feasible = [&](double i0, double i1) {
            const auto temps = thermal::simulate_schedule(
                br.thermal->initial_temp, {i0 * 1e6, i1 * 1e6},
                {two.weather[b][0], two.weather[b][1]}, cond, lin2, two.dt_seconds);
            return temps[0] <= cond.max_temperature &&
                   temps[1] <= cond.max_temperature;
        };
        double best = 1e30;
        const int grid = 140;
        for (int i = 0; i <= grid; ++i) {
            for (int j = 0; j <= grid; ++j) {
                const double i0 = 1.0 * i / grid;
                const double i1 = 1.0 * j / grid;
                if (!feasible(i0, i1)) continue;
                const double obj = 0.5 * ((i0 - target[0]) * (i0 - target[0]) +
                                          (i1 - target[1]) * (i1 - target[1]));
                best = std::min(best, obj);
            }
        }
        const double obj_sub = 0.5 * (res.iota_ka2 - target).squaredNorm();
        CHECK(obj_sub <= best + 1e-4);
        CHECK(feasible(res.iota_ka2[0], res.iota_ka2[1]));
    }
}

TEST_CASE("slack update", "[admm]") {
    const int d = 5;
    oracles::Rng rng(3);
    VectorXd q(d), v(d), w(d);
    for (int i = 0; i < d; ++i) {
        q[i] = rng.uniform(-1, 1);
        v[i] = rng.uniform(-2, 2);
        w[i] = rng.uniform(-2, 2);
    }
    const double rho = 200.0, theta = 100.0;

    SECTION("zero data gives zero slack") {
        const VectorXd u =
            admm::update_slack(VectorXd::Zero(d), VectorXd::Zero(d),
                               VectorXd::Zero(d), rho, theta);
        CHECK(u.norm() == 0.0);
    }
    SECTION("stationarity of the slack block") {
        const VectorXd u = admm::update_slack(q, v, w, rho, theta);
        // dL/du = w + theta u + v + rho (q + u) must vanish
        const VectorXd grad = w + theta * u + v + rho * (q + u);
        CHECK(grad.lpNorm<Eigen::Infinity>() <= 1e-10);
    }
    SECTION("heavy penalties squeeze the slack toward zero") {
        // with consistent blocks (q = 0) the slack is -(v+w)/(rho+theta)
        const VectorXd u =
            admm::update_slack(VectorXd::Zero(d), v, w, 2e9, 1e9);
        CHECK(u.lpNorm<Eigen::Infinity>() <= 1e-8);
    }
}

TEST_CASE("outer loop on the two-bus case", "[admm]") {
    auto nc = case2();
    auto params = fast_params();
    auto rep = admm::outer_loop(nc, {ratings::Kind::DLR_SS, ratings::Season::Summer},
                                params);

    REQUIRE(rep.converged);
    const double sqrt_d_eps = std::sqrt(double(rep.d)) * rep.eps;
    CHECK(rep.consensus_l2 <= sqrt_d_eps);
    CHECK(rep.consensus_inf <= 1.3e-2);  // sanity ceiling
    CHECK(rep.max_ramp_violation <= 1e-6);
    CHECK(rep.max_temp_violation <= 1e-6);
    CHECK(rep.max_cap_violation <= 1e-6);
    CHECK(rep.max_ac_residual <= 1e-5);

    SECTION("inner entry invariants") {
        for (const auto& e : rep.inner_entries) {
            CHECK(e.rho == 2.0 * e.theta);
            CHECK(e.dual_consistency_inf == 0.0);
        }
    }
    SECTION("dual ascent identity is exact") {
        const VectorXd expect = rep.v_prev + rep.rho_final * rep.p_last;
        CHECK((rep.v - expect).lpNorm<Eigen::Infinity>() == 0.0);
    }
    SECTION("slack stationarity at the final iterate") {
        const double theta_inner = rep.rho_final / 2.0;
        const VectorXd grad = rep.w_inner + theta_inner * rep.u + rep.v_prev +
                              rep.rho_final * rep.p_last;
        const double scale = std::max(
            {1.0, rep.v_prev.lpNorm<Eigen::Infinity>(),
             rep.w_inner.lpNorm<Eigen::Infinity>(),
             rep.rho_final * rep.p_last.lpNorm<Eigen::Infinity>()});
        CHECK(grad.lpNorm<Eigen::Infinity>() <= 1e-10 * scale);
    }
    SECTION("trace is ordered and ends converged") {
        REQUIRE(!rep.trace.empty());
        for (std::size_t i = 1; i < rep.trace.size(); ++i) {
            const bool ordered = rep.trace[i].k > rep.trace[i - 1].k ||
                                 (rep.trace[i].k == rep.trace[i - 1].k &&
                                  rep.trace[i].r == rep.trace[i - 1].r + 1);
            CHECK(ordered);
        }
    }
    SECTION("consensus residual drops quickly at the start") {
        // property from the paper's convergence plots: the inner residual
        // falls by an order of magnitude within the first outer round
        double first = -1.0, last = -1.0;
        for (const auto& t : rep.trace) {
            if (t.k != 1) continue;
            if (first < 0) first = t.consensus_l2;
            last = t.consensus_l2;
        }
        REQUIRE(first >= 0.0);
        if (first > 1e-8) CHECK(last <= first / 10.0 + 1e-9);
    }
}

TEST_CASE("screening", "[admm]") {
    SECTION("unloaded network screens nothing") {
        auto nc = case2();
        for (auto& row : nc.demand_p) std::fill(row.begin(), row.end(), 0.0);
        for (auto& row : nc.demand_q) std::fill(row.begin(), row.end(), 0.0);
        auto screened = admm::screen_transient_lines(nc, fast_params());
        CHECK(screened.empty());
    }
    SECTION("a congested cool line is selected") {
        auto nc = congested_case2();
        auto screened = admm::screen_transient_lines(nc, fast_params());
        REQUIRE(screened.size() == 1);
        CHECK(screened[0] == nc.branch_index("line1"));
    }
    SECTION("hot lines are excluded by the 90C rule") {
        auto nc = congested_case2();
        nc.branches[0].thermal->initial_temp = 368.15;  // 95 C
        auto screened = admm::screen_transient_lines(nc, fast_params());
        CHECK(screened.empty());
    }
}

TEST_CASE("monolithic reference solve", "[admm]") {
    SECTION("single period equals the plain ACOPF") {
        auto nc = net::truncate_horizon(case2(), 1);
        auto rep = admm::solve_monolithic(
            nc, {ratings::Kind::DLR_SS, ratings::Season::Summer}, fast_params());
        acopf::AcModel model(nc);
        admm::SolveContext ctx(nc, {ratings::Kind::DLR_SS, ratings::Season::Summer},
                               fast_params());
        acopf::AcSubproblemSpec spec;
        spec.period = 0;
        spec.caps = ctx.caps_for_period(0);
        auto sol = acopf::solve_ac_subproblem(model, spec);
        CHECK(rep.objective == Approx(sol.cost).epsilon(1e-5));
    }
    SECTION("transient relaxes steady state (Prop 3 direction)") {
        auto nc = net::truncate_horizon(congested_case2(), 3);
        auto ss = admm::solve_monolithic(
            nc, {ratings::Kind::DLR_SS, ratings::Season::Summer}, fast_params());
        auto tr = admm::solve_monolithic(
            nc, {ratings::Kind::DLR_TRANS, ratings::Season::Summer}, fast_params());
        CHECK(tr.objective <= ss.objective * (1.0 + 1e-6) + 1e-6);
        CHECK(tr.max_temp_violation <= 1e-6);
    }
    SECTION("ADMM lands within one percent of the monolithic objective") {
        auto nc = net::truncate_horizon(congested_case2(), 3);
        auto mono = admm::solve_monolithic(
            nc, {ratings::Kind::DLR_SS, ratings::Season::Summer}, fast_params());
        auto dist = admm::outer_loop(
            nc, {ratings::Kind::DLR_SS, ratings::Season::Summer}, fast_params());
        REQUIRE(dist.converged);
        CHECK(std::abs(dist.objective - mono.objective) / mono.objective <= 0.01);
    }
    SECTION("size guard rejects oversized cases") {
        auto nc = case2();
        nc.horizon = 13;  // exceeds the guard without building data
        CHECK_THROWS_AS(admm::solve_monolithic(
                            nc, {ratings::Kind::DLR_SS, ratings::Season::Summer},
                            fast_params()),
                        std::invalid_argument);
    }
}
