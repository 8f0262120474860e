#include <catch2/catch_amalgamated.hpp>

#include "dlr/nlp.hpp"
#include "oracles.hpp"

using namespace dlr::nlp;
using Catch::Approx;
using Eigen::MatrixXd;
using Eigen::VectorXd;

TEST_CASE("unconstrained quadratic", "[nlp]") {
    Problem p;
    p.n = 1;
    p.objective = [](const VectorXd& z, VectorXd* g) {
        if (g) (*g)[0] = 2.0 * (z[0] - 3.0);
        return (z[0] - 3.0) * (z[0] - 3.0);
    };
    p.z0 = VectorXd::Zero(1);
    auto res = minimize(p, 1e-8, 100);
    REQUIRE(res.status == Status::Converged);
    CHECK(res.point[0] == Approx(3.0).margin(1e-7));
    CHECK(res.kkt_residual <= 1e-8);
}

TEST_CASE("equality-constrained symmetric minimum", "[nlp]") {
    // min z1 + z2  s.t.  z1^2 + z2^2 = 1  ->  both at -sqrt(2)/2
    Problem p;
    p.n = 2;
    p.objective = [](const VectorXd&, VectorXd* g) {
        if (g) g->setOnes();
        return 0.0;  // value shifted; gradient is what matters
    };
    p.m_eq = 1;
    p.eq = [](const VectorXd& z, VectorXd& c, MatrixXd* J) {
        c[0] = z[0] * z[0] + z[1] * z[1] - 1.0;
        if (J) {
            (*J)(0, 0) = 2 * z[0];
            (*J)(0, 1) = 2 * z[1];
        }
    };
    p.z0 = VectorXd::Constant(2, -0.30);
    auto res = minimize(p, 1e-8, 200);
    REQUIRE(res.status == Status::Converged);
    CHECK(res.point[0] == Approx(-std::sqrt(2.0) / 2).margin(1e-6));
    CHECK(res.point[1] == Approx(-std::sqrt(2.0) / 2).margin(1e-6));
}

TEST_CASE("objective shift does not change the minimizer", "[nlp]") {
    Problem p;
    p.n = 2;
    p.objective = [](const VectorXd& z, VectorXd* g) {
        if (g) {
            (*g)[0] = 2 * z[0];
            (*g)[1] = 2 * (z[1] - 1.0);
        }
        return z[0] * z[0] + (z[1] - 1.0) * (z[1] - 1.0) + 1000.0;
    };
    p.m_ineq = 1;
    p.ineq = [](const VectorXd& z, VectorXd& c, MatrixXd* J) {
        c[0] = 0.5 - z[1];  // z1 >= 0.5... applied to z[1]
        if (J) {
            (*J)(0, 0) = 0.0;
            (*J)(0, 1) = -1.0;
        }
    };
    p.z0 = VectorXd::Constant(2, 2.0);
    auto res = minimize(p, 1e-8, 200);
    REQUIRE(res.status == Status::Converged);
    CHECK(res.point[0] == Approx(0.0).margin(1e-6));
    CHECK(res.point[1] == Approx(1.0).margin(1e-6));  // constraint inactive
    CHECK(res.mult_ineq[0] <= 1e-6);
}

TEST_CASE("random convex QPs agree with active-set enumeration", "[nlp]") {
    oracles::Rng rng(101);
    int solved = 0;
    for (int trial = 0; trial < 25; ++trial) {
        const int n = 2 + int(rng.uniform(0.0, 4.999));  // up to 6
        const int m = 1 + int(rng.uniform(0.0, 3.999));  // up to 4
        MatrixXd A0(n, n);
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j) A0(i, j) = rng.uniform(-1.0, 1.0);
        MatrixXd Q = A0 * A0.transpose() + 0.5 * MatrixXd::Identity(n, n);
        VectorXd c(n), b(m);
        MatrixXd A(m, n);
        for (int i = 0; i < n; ++i) c[i] = rng.uniform(-2.0, 2.0);
        for (int i = 0; i < m; ++i) {
            for (int j = 0; j < n; ++j) A(i, j) = rng.uniform(-1.0, 1.0);
            b[i] = rng.uniform(0.2, 2.0);  // keeps z = 0 strictly feasible
        }
        auto oracle = oracles::qp_enumerate(Q, c, A, b);
        REQUIRE(oracle.feasible);

        Problem p;
        p.n = n;
        p.objective = [&](const VectorXd& z, VectorXd* g) {
            if (g) *g = Q * z + c;
            return 0.5 * z.dot(Q * z) + c.dot(z);
        };
        p.m_ineq = m;
        p.ineq = [&](const VectorXd& z, VectorXd& cv, MatrixXd* J) {
            cv = A * z - b;
            if (J) *J = A;
        };
        p.z0 = VectorXd::Zero(n);
        auto res = minimize(p, 1e-9, 300);
        REQUIRE(res.status == Status::Converged);
        CHECK(std::abs(res.objective - oracle.objective) /
                  std::max(1.0, std::abs(oracle.objective)) <=
              1e-6);
        ++solved;
    }
    CHECK(solved == 25);
}

TEST_CASE("bounds are honored and multipliers split correctly", "[nlp]") {
    // min (z0 - 2)^2 + (z1 + 2)^2, -1 <= z <= 1
    Problem p;
    p.n = 2;
    p.objective = [](const VectorXd& z, VectorXd* g) {
        if (g) {
            (*g)[0] = 2 * (z[0] - 2.0);
            (*g)[1] = 2 * (z[1] + 2.0);
        }
        return (z[0] - 2.0) * (z[0] - 2.0) + (z[1] + 2.0) * (z[1] + 2.0);
    };
    p.lb = VectorXd::Constant(2, -1.0);
    p.ub = VectorXd::Constant(2, 1.0);
    p.z0 = VectorXd::Zero(2);
    auto res = minimize(p, 1e-8, 200);
    REQUIRE(res.status == Status::Converged);
    CHECK(res.point[0] == Approx(1.0).margin(1e-6));
    CHECK(res.point[1] == Approx(-1.0).margin(1e-6));
    CHECK(res.mult_ub[0] == Approx(2.0).margin(1e-4));  // gradient balance at z=1
    CHECK(res.mult_lb[1] == Approx(2.0).margin(1e-4));
}

TEST_CASE("fixed variables stay fixed", "[nlp]") {
    Problem p;
    p.n = 2;
    p.objective = [](const VectorXd& z, VectorXd* g) {
        if (g) *g = 2.0 * z;
        return z.squaredNorm();
    };
    p.lb = VectorXd(2);
    p.ub = VectorXd(2);
    p.lb << 0.7, -5.0;
    p.ub << 0.7, 5.0;
    p.z0 = VectorXd::Zero(2);
    auto res = minimize(p, 1e-8, 100);
    REQUIRE(res.status == Status::Converged);
    CHECK(res.point[0] == 0.7);
    CHECK(res.point[1] == Approx(0.0).margin(1e-7));
}

TEST_CASE("infeasible box-vs-inequality pair ends without convergence", "[nlp]") {
    // z >= 1 via bound, z <= 0 via inequality: no feasible point.
    Problem p;
    p.n = 1;
    p.objective = [](const VectorXd& z, VectorXd* g) {
        if (g) (*g)[0] = 1.0;
        return z[0];
    };
    p.m_ineq = 1;
    p.ineq = [](const VectorXd& z, VectorXd& c, MatrixXd* J) {
        c[0] = z[0];
        if (J) (*J)(0, 0) = 1.0;
    };
    p.lb = VectorXd::Constant(1, 1.0);
    p.ub = VectorXd::Constant(1, kInf);
    p.z0 = VectorXd::Constant(1, 2.0);
    auto res = minimize(p, 1e-8, 60);
    CHECK(res.status != Status::Converged);
}

TEST_CASE("determinism: identical inputs give identical output", "[nlp]") {
    auto build = [] {
        Problem p;
        p.n = 3;
        p.objective = [](const VectorXd& z, VectorXd* g) {
            if (g) {
                (*g)[0] = 2 * z[0] + std::sin(z[1]);
                (*g)[1] = z[0] * std::cos(z[1]) + 2 * z[1];
                (*g)[2] = 4 * z[2] * z[2] * z[2];
            }
            return z[0] * z[0] + z[0] * std::sin(z[1]) + z[1] * z[1] +
                   z[2] * z[2] * z[2] * z[2];
        };
        p.m_ineq = 1;
        p.ineq = [](const VectorXd& z, VectorXd& c, MatrixXd* J) {
            c[0] = -z.sum() - 2.0;
            if (J) J->setConstant(-1.0);
        };
        p.z0 = VectorXd::Constant(3, 0.5);
        return p;
    };
    auto r1 = minimize(build(), 1e-9, 200);
    auto r2 = minimize(build(), 1e-9, 200);
    REQUIRE(r1.status == r2.status);
    CHECK(r1.iterations == r2.iterations);
    CHECK((r1.point - r2.point).lpNorm<Eigen::Infinity>() == 0.0);
}

TEST_CASE("derivative checker", "[nlp]") {
    Problem good;
    good.n = 2;
    good.objective = [](const VectorXd& z, VectorXd* g) {
        if (g) {
            (*g)[0] = 2 * z[0] + z[1];
            (*g)[1] = z[0] + 6 * z[1];
        }
        return z[0] * z[0] + z[0] * z[1] + 3 * z[1] * z[1];
    };
    VectorXd at(2);
    at << 0.3, -0.7;
    CHECK(check_derivatives(good, at, 1e-5) <= 1e-9);

    Problem bad = good;
    bad.objective = [](const VectorXd& z, VectorXd* g) {
        if (g) {
            (*g)[0] = 2 * z[0];  // missing cross term
            (*g)[1] = z[0] + 6 * z[1];
        }
        return z[0] * z[0] + z[0] * z[1] + 3 * z[1] * z[1];
    };
    CHECK(check_derivatives(bad, at, 1e-5) > 1e-2);
}
