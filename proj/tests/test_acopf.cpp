#include <catch2/catch_amalgamated.hpp>

#include "dlr/acopf.hpp"
#include "dlr/network.hpp"
#include "oracles.hpp"

using namespace dlr;
using Catch::Approx;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

net::NetworkCase lossless_two_bus() {
    return net::parse_case(net::json::parse(R"({
      "base_mva": 100.0, "dt_seconds": 300.0, "horizon": 1,
      "buses": [
        {"id": "b1", "v_min": 0.9, "v_max": 1.1},
        {"id": "b2", "v_min": 0.9, "v_max": 1.1}
      ],
      "branches": [
        {"id": "l1", "from": "b1", "to": "b2", "r": 0.0, "x": 0.1,
         "current_cap_pu2": 100.0}
      ],
      "generators": [
        {"id": "g1", "bus": "b1", "c2": 0.01, "c1": 10.0, "c0": 0.0,
         "p_min": 0.0, "p_max": 2.5, "q_min": -1.5, "q_max": 1.5},
        {"id": "g2", "bus": "b2", "c2": 0.02, "c1": 40.0, "c0": 0.0,
         "p_min": 0.0, "p_max": 1.5, "q_min": -1.0, "q_max": 1.0}
      ],
      "demand": {"b2": [{"p": 1.0, "q": 0.0}]}
    })"));
}

net::NetworkCase isolated_pair() {
    // no demand, no shunts: flat start is an exact power-flow solution
    return net::parse_case(net::json::parse(R"({
      "base_mva": 100.0, "dt_seconds": 300.0, "horizon": 1,
      "buses": [
        {"id": "b1", "v_min": 0.9, "v_max": 1.1},
        {"id": "b2", "v_min": 0.9, "v_max": 1.1}
      ],
      "branches": [
        {"id": "l1", "from": "b1", "to": "b2", "r": 0.02, "x": 0.2}
      ],
      "generators": [
        {"id": "g1", "bus": "b1", "c1": 5.0,
         "p_min": 0.0, "p_max": 1.0, "q_min": -1.0, "q_max": 1.0}
      ]
    })"));
}

}  // namespace

TEST_CASE("flat start with no injections satisfies the power balance",
          "[acopf]") {
    auto nc = isolated_pair();
    acopf::AcModel model(nc);
    VectorXd x = model.flat_start();
    x[model.layout().pg(0)] = 0.0;  // zero the midpoint start
    x[model.layout().qg(0)] = 0.0;
    VectorXd r(model.num_eq());
    model.eval_eq(x, 0, 0, r, 0, nullptr, 0);
    CHECK(r.lpNorm<Eigen::Infinity>() == Approx(0.0).margin(1e-14));
}

TEST_CASE("hand-computed lossless flow is an exact solution", "[acopf]") {
    auto nc = lossless_two_bus();
    acopf::AcModel model(nc);
    const auto& L = model.layout();
    VectorXd x = VectorXd::Zero(L.size());
    // V1 = 1 + 0j; V2 solves the injection equations for 1 p.u. transfer
    const double e2 = 0.9898979485566356;
    x[L.e(0)] = 1.0;
    x[L.e(1)] = e2;
    x[L.f(1)] = -0.1;
    x[L.pg(0)] = 1.0;
    x[L.qg(0)] = 0.10102051443364402;
    x[L.ire(0)] = 1.0;
    x[L.iim(0)] = -0.10102051443364402;
    x[L.iota(0)] = 1.0102051443364382;
    VectorXd r(model.num_eq());
    model.eval_eq(x, 0, 0, r, 0, nullptr, 0);
    CHECK(r.lpNorm<Eigen::Infinity>() == Approx(0.0).margin(1e-12));
}

TEST_CASE("analytic Jacobians match finite differences", "[acopf]") {
    auto nc = net::load_case(std::string(DLR_DATA_DIR) + "/case2.json");
    acopf::AcModel model(nc);
    const auto& L = model.layout();

    acopf::AcSubproblemSpec spec;
    spec.period = 1;
    spec.rho = 40.0;
    spec.caps = VectorXd::Constant(L.nc, 2.5);
    acopf::CouplingTerm term;
    term.x_index = L.pg(0);
    term.scale = 1.0;
    term.v = 0.3;
    term.target = 0.8;
    spec.coupling.push_back(term);

    nlp::Problem p;
    p.n = L.size();
    p.objective = [&](const VectorXd& x, VectorXd* g) {
        if (g) g->setZero();
        double val = model.cost(x, 0, g);
        for (const auto& c : spec.coupling) {
            const double dev = c.target - c.scale * x[c.x_index];
            val += c.v * dev + 0.5 * spec.rho * dev * dev;
            if (g) (*g)[c.x_index] += -c.scale * (c.v + spec.rho * dev);
        }
        return val;
    };
    p.m_eq = model.num_eq();
    p.eq = [&](const VectorXd& x, VectorXd& r, MatrixXd* J) {
        if (J) J->setZero();
        model.eval_eq(x, 0, spec.period, r, 0, J, 0);
    };
    p.m_ineq = model.num_ineq(true);
    p.ineq = [&](const VectorXd& x, VectorXd& r, MatrixXd* J) {
        if (J) J->setZero();
        model.eval_ineq(x, 0, spec.caps, r, 0, J, 0);
    };

    oracles::Rng rng(5);
    for (int trial = 0; trial < 5; ++trial) {
        VectorXd z(L.size());
        for (int i = 0; i < L.size(); ++i) z[i] = rng.uniform(-0.8, 1.1);
        CHECK(nlp::check_derivatives(p, z, 1e-5) <= 1e-6);
    }
}

TEST_CASE("angle envelope activates exactly at the limit", "[acopf]") {
    auto nc = isolated_pair();
    nc.branches[0].angle_min = -0.4;
    nc.branches[0].angle_max = 0.4;
    acopf::AcModel model(nc);
    const auto& L = model.layout();
    VectorXd r(model.num_ineq(false));

    auto fill = [&](double theta_i) {
        VectorXd x = VectorXd::Zero(L.size());
        x[L.e(0)] = std::cos(theta_i);
        x[L.f(0)] = std::sin(theta_i);
        x[L.e(1)] = 1.0;
        model.eval_ineq(x, 0, VectorXd(), r, 0, nullptr, 0);
        return r[2 * L.nb];  // S - tan(theta_max) C for the only branch
    };
    CHECK(fill(0.0) < 0.0);                       // interior
    CHECK(fill(0.4) == Approx(0.0).margin(1e-12));  // active at the limit
    CHECK(fill(0.45) > 0.0);                      // violated => positive
}

TEST_CASE("single-period subproblem", "[acopf]") {
    auto nc = lossless_two_bus();
    acopf::AcModel model(nc);

    SECTION("plain ACOPF matches the hand dispatch") {
        acopf::AcSubproblemSpec spec;
        spec.period = 0;
        spec.rho = 0.0;
        auto sol = acopf::solve_ac_subproblem(model, spec);
        // lossless line, cheap generator covers everything
        CHECK(sol.x[model.layout().pg(0)] == Approx(1.0).margin(2e-5));
        CHECK(sol.x[model.layout().pg(1)] == Approx(0.0).margin(2e-5));
        // C(p) = 0.01*(100)^2 + 10*100 = 1100 $/h
        CHECK(sol.cost == Approx(1100.0).epsilon(2e-4));
    }
    SECTION("huge penalty pins the solution to the previous solution") {
        acopf::AcSubproblemSpec plain;
        plain.period = 0;
        auto base = acopf::solve_ac_subproblem(model, plain);

        acopf::AcSubproblemSpec spec;
        spec.period = 0;
        spec.rho = 1e8;
        acopf::CouplingTerm term;
        term.x_index = model.layout().pg(0);
        term.scale = 1.0;
        term.v = 0.0;
        term.target = base.x[model.layout().pg(0)];
        spec.coupling.push_back(term);
        auto sol = acopf::solve_ac_subproblem(model, spec);
        CHECK(sol.x[model.layout().pg(0)] == Approx(term.target).margin(1e-4));
    }
    SECTION("moderate penalty pulls toward an off-optimum target") {
        acopf::AcSubproblemSpec spec;
        spec.period = 0;
        spec.rho = 1e6;
        acopf::CouplingTerm term;
        term.x_index = model.layout().pg(0);
        term.scale = 1.0;
        term.v = 0.0;
        term.target = 0.6;
        spec.coupling.push_back(term);
        auto sol = acopf::solve_ac_subproblem(model, spec);
        // deviation ~ cost-gradient difference / rho ~ 3e-3
        CHECK(sol.x[model.layout().pg(0)] == Approx(0.6).margin(1e-2));
        CHECK(sol.x[model.layout().pg(1)] == Approx(0.4).margin(1e-2));
    }
    SECTION("infeasible demand fails loudly") {
        auto heavy = lossless_two_bus();
        heavy.demand_p[1][0] = 10.0;  // beyond total p_max
        acopf::AcModel hmodel(heavy);
        acopf::AcSubproblemSpec spec;
        spec.period = 0;
        CHECK_THROWS_AS(acopf::solve_ac_subproblem(hmodel, spec),
                        acopf::SubproblemFailure);
    }
}

TEST_CASE("subproblem KKT contract", "[acopf]") {
    auto nc = net::load_case(std::string(DLR_DATA_DIR) + "/case2.json");
    acopf::AcModel model(nc);
    acopf::AcSubproblemSpec spec;
    spec.period = 0;
    spec.rho = 0.0;
    spec.caps = VectorXd::Constant(model.layout().nc, 3.0);
    auto sol = acopf::solve_ac_subproblem(model, spec);
    CHECK(sol.nlp.kkt_residual <= spec.nlp_tol);
    CHECK((sol.nlp.mult_ineq.array() >= 0.0).all());
    // equality residuals recomputed from the returned point
    VectorXd r(model.num_eq());
    model.eval_eq(sol.x, 0, 0, r, 0, nullptr, 0);
    CHECK(r.lpNorm<Eigen::Infinity>() <= 1e-6);
}
