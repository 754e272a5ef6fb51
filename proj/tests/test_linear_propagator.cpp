#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include <doctest.h>

#include "breathers/fit.hpp"
#include "breathers/integrator.hpp"
#include "breathers/linear_propagator.hpp"

using namespace breathers;
using doctest::Approx;

namespace {

constexpr double kPi = std::numbers::pi;

LatticeState random_skew(int N, unsigned seed, int support) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> nd;
    LatticeState x(N);
    for (int k = -support; k <= support; ++k) {
        x.p[x.index(k)] = nd(rng);
        x.q[x.index(k)] = nd(rng);
    }
    return skew_symmetrize(x);
}

LatticeState random_half(int N, unsigned seed, int support, int sides = 2) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> nd;
    LatticeState x(N, false);
    for (int k = 1; k <= support; ++k) {
        x.p[x.index(k)] = nd(rng);
        x.q[x.index(k)] = nd(rng);
        if (sides == 2) {
            x.p[x.index(-k)] = nd(rng);
            x.q[x.index(-k)] = nd(rng);
        }
    }
    return x;
}

Eigen::VectorXcd random_vec(int n, unsigned seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> nd;
    Eigen::VectorXcd y(n);
    for (int i = 0; i < n; ++i) y[i] = cplx(nd(rng), nd(rng));
    return y;
}

}  // namespace

TEST_CASE("dispersion relation") {
    CHECK(nu(0.3, 0.0) == 1.0);
    CHECK(nu(0.1, kPi) == Approx(std::sqrt(1.4)).epsilon(1e-15));
    CHECK(nu(0.25, kPi / 2) == Approx(std::sqrt(1.5)).epsilon(1e-15));
    const double h = 1e-5;
    for (double th : {-2.0, 0.3, 1.9}) {
        CHECK(nu_prime(0.1, th) == Approx((nu(0.1, th + h) - nu(0.1, th - h)) / (2 * h)).epsilon(1e-8));
        CHECK(nu_second(0.1, th) == Approx((nu_prime(0.1, th + h) - nu_prime(0.1, th - h)) / (2 * h)).epsilon(1e-7));
    }
}

TEST_CASE("Parseval on the ring") {
    LinearPropagator prop(100, 0.1);
    const int M = prop.ring_size();
    std::mt19937_64 rng(3);
    std::normal_distribution<double> nd;
    Eigen::VectorXd x(M);
    for (int i = 0; i < M; ++i) x[i] = nd(rng);
    Eigen::VectorXcd h;
    prop.forward(x, h);
    double s = std::norm(h[0]) + std::norm(h[M / 2]);
    for (int j = 1; j < M / 2; ++j) s += 2.0 * std::norm(h[j]);
    CHECK(s / M == Approx(x.squaredNorm()).epsilon(1e-12));
    Eigen::VectorXd back;
    prop.backward(h, back);
    CHECK((back - x).norm() < 1e-12 * x.norm());
}

TEST_CASE("whole chain propagation") {
    LatticeState x = random_skew(64, 1, 6);
    LatticeState y0 = propagate_whole_chain(x, 0.0, 0.1);
    CHECK(norm(y0 - x, 2.0) < 1e-13);
    LatticeState r = propagate_whole_chain(x, 1.3, 0.0);
    for (int i = 0; i < x.size(); ++i) {
        CHECK(r.p[i] == Approx(std::cos(1.3) * x.p[i] - std::sin(1.3) * x.q[i]).epsilon(1e-12));
        CHECK(r.q[i] == Approx(std::cos(1.3) * x.q[i] + std::sin(1.3) * x.p[i]).epsilon(1e-12));
    }
    LatticeState d(200);
    d.q[d.index(1)] = 1.0;
    d.q[d.index(-1)] = -1.0;
    LatticeState a = propagate_whole_chain(d, 50.0, 0.1);
    LatticeState b = flow(d, PotentialSpec::zero(), 0.1, 50.0, 0.005);
    CHECK(norm(a - b, 2.0) < 1e-8);
    CHECK(hamiltonian(a, PotentialSpec::zero(), 0.1) == Approx(hamiltonian(d, PotentialSpec::zero(), 0.1)).epsilon(1e-12));
    LatticeState nonskew(10);
    nonskew.q[nonskew.index(1)] = 1.0;
    CHECK_THROWS(propagate_whole_chain(nonskew, 1.0, 0.1));
}

TEST_CASE("half chain propagation") {
    LatticeState x = random_half(80, 2, 6);
    CHECK(norm(propagate_HL(x, 0.0, 0.1) - x, 2.0) < 1e-13);
    LatticeState left = random_half(80, 3, 6, 1);
    for (int k = 1; k <= 80; ++k) {
        left.p[left.index(-k)] = left.p[left.index(k)];
        left.q[left.index(-k)] = left.q[left.index(k)];
        left.p[left.index(k)] = 0.0;
        left.q[left.index(k)] = 0.0;
    }
    LatticeState l = propagate_HL(left, 25.0, 0.1);
    for (int k = 1; k <= 80; ++k) {
        CHECK(l.p_at(k) == 0.0);
        CHECK(l.q_at(k) == 0.0);
    }
    LatticeState a = propagate_HL(x, 30.0, 0.1);
    LatticeState b = flow(x, PotentialSpec::zero(), 0.1, 30.0, 0.005);
    CHECK(norm(a - b, 2.0) < 1e-8);
    CHECK(modified_energy(a, 0.1) == Approx(modified_energy(x, 0.1)).epsilon(1e-12));
}

TEST_CASE("Duhamel integral") {
    // constant forcing F: u(t) = A^{-1}(e^{At} - 1) F
    const int N = 40;
    const double dt = 0.01, eps = 0.1;
    LatticeState F = random_half(N, 5, 3);
    std::vector<LatticeState> forcing(301, F);
    auto u = duhamel(forcing, dt, eps);
    CHECK(u.size() == forcing.size());
    CHECK(norm(u.front(), 2.0) == 0.0);
    const double t = 300 * dt;
    LatticeState ref(N, false);
    for (int i = 0; i <= 3000; ++i) {
        double w = (i == 0 || i == 3000) ? 0.5 : 1.0;
        ref += (w * t / 3000) * propagate_HL(F, t - i * t / 3000, eps);
    }
    CHECK(norm(u.back() - ref, 2.0) < 1e-4 * norm(ref, 2.0));
}

TEST_CASE("decay fit basics") {
    LatticeState x = compact_skew_datum(2048);
    DecayFit l2 = measure_decay(x, 0.1, {2.0, WeightSpec::none()}, geomspace(5.0, 50.0, 8));
    CHECK(std::abs(l2.slope) < 1e-2);
    LinearPropagator prop(2048, 0.1);
    for (double t : {50.0, 500.0})
        CHECK(modified_energy(prop.propagate(x, t), 0.1) == Approx(modified_energy(x, 0.1)).epsilon(1e-12));
    CHECK_THROWS(measure_decay(x, 0.1, {2.0, WeightSpec::none()}, {10.0, 200.0}));
    CHECK_THROWS(compact_skew_datum(3));
}

TEST_CASE("oscillatory integral") {
    for (auto which : {VdcInterval::I1, VdcInterval::I2, VdcInterval::full}) {
        double len = 0.0;
        for (auto [a, b] : vdc_segments(which)) len += b - a;
        CHECK(std::abs(oscillatory_integral(0.3, 0.0, 0.1, which) - len) < 1e-12);
        cplx v = oscillatory_integral(0.0, 7.0, 0.0, which);
        CHECK(std::abs(v - std::exp(cplx(0.0, 7.0)) * len) < 1e-11);
    }
    CHECK(vdc_segments(VdcInterval::I1).size() == 4);
    // 30-digit adaptive quadrature
    CHECK(std::abs(oscillatory_integral(0.5, 100.0, 0.1, VdcInterval::full)) < 1e-10);
    cplx i1 = oscillatory_integral(0.05, 100.0, 0.1, VdcInterval::I1);
    cplx i2 = oscillatory_integral(0.05, 100.0, 0.1, VdcInterval::I2);
    CHECK(std::abs(i1 - cplx(-0.53034670519486649385, -0.72034856093889131003)) < 1e-10);
    CHECK(std::abs(i2 - cplx(0.12189745834653609457, 0.3091078009187045734)) < 1e-10);
}

TEST_CASE("oscillatory sup agrees with direct quadrature") {
    const double eps = 0.1, t = 2000.0;
    double rho = 0.0;
    double s = vdc_sup(t, eps, VdcInterval::I2, &rho);
    CHECK(s == Approx(std::abs(oscillatory_integral(rho, t, eps, VdcInterval::I2))).epsilon(1e-6));
    for (double r : linspace(-0.12, 0.12, 25)) CHECK(std::abs(oscillatory_integral(r, t, eps, VdcInterval::I2)) <= s * (1 + 1e-6));
}

TEST_CASE("doubling lambda on I1") {
    const double eps = 0.1;
    double a = vdc_sup(1000.0 / eps, eps, VdcInterval::I1), b = vdc_sup(2000.0 / eps, eps, VdcInterval::I1);
    CHECK(a / b == Approx(std::sqrt(2.0)).epsilon(0.1));
}

TEST_CASE("resolvent kernel") {
    const cplx nut(-1.0, 0.0);
    cplx th = resolvent_theta(nut);
    CHECK(std::abs(2.0 - 2.0 * std::cos(th) - nut) < 1e-13);
    CHECK(th.imag() < 0.0);
    const int N = 256;
    Eigen::MatrixXcd G = truncated_minus_laplacian(N, nut).inverse();
    CHECK(std::abs(G(N, N) - resolvent_kernel(nut, 0, 0)) < 1e-12);
    // (-Delta + 1)^{-1} has the real diagonal 1 / sqrt(5)
    CHECK(std::abs(resolvent_kernel(nut, 0, 0) - 1.0 / std::sqrt(5.0)) < 1e-14);
    CHECK(std::abs(resolvent_kernel(nut, 4, 4) - cplx(0.0, -0.5) / std::sin(th)) < 1e-14);

    const cplx z(2.0, 0.5);
    Eigen::MatrixXcd G2 = truncated_minus_laplacian(N, z).inverse();
    CHECK(std::abs(G2(N + 3, N) - resolvent_kernel(z, 3, 0)) < 1e-6);
    double prev = std::abs(resolvent_kernel(z, 0, 0));
    const double ratio = std::abs(std::exp(cplx(0.0, -1.0) * resolvent_theta(z)));
    CHECK(ratio < 1.0);
    for (int d = 1; d < 10; ++d) {
        double v = std::abs(resolvent_kernel(z, d, 0));
        CHECK(v / prev == Approx(ratio).epsilon(1e-10));
        prev = v;
    }
    CHECK_THROWS(resolvent_kernel(cplx(2.0, 0.0), 0, 0));
}

TEST_CASE("resolvent of B") {
    const double eps = 0.1;
    Eigen::VectorXcd y = random_vec(11, 4);
    const int K = 30;
    const cplx z(-0.7, 0.4);
    Eigen::VectorXcd a = resolvent_B(1.0 + eps * z, eps, y, K), b = resolvent_apply(z, y, K) / eps;
    CHECK((a - b).norm() < 1e-13 * b.norm());

    const cplx big(300.0, 40.0);
    Eigen::VectorXcd r = resolvent_B(big, eps, y, 5);
    CHECK(r.norm() * std::abs(big) / y.norm() == Approx(1.0).epsilon(0.01));

    // dense (B - nu) x = y on a lattice wide enough for the kernel to vanish at the edges
    const int N = 200;
    const cplx v(1.2, 0.05);
    Eigen::MatrixXcd B = eps * truncated_minus_laplacian(N, 0.0) +
                         Eigen::MatrixXcd::Identity(2 * N + 1, 2 * N + 1) * (1.0 - v);
    Eigen::VectorXcd rhs = Eigen::VectorXcd::Zero(2 * N + 1);
    rhs.segment(N - 5, 11) = y;
    Eigen::VectorXcd x = B.partialPivLu().solve(rhs);
    Eigen::VectorXcd k = resolvent_B(v, eps, y, 20);
    CHECK((x.segment(N - 20, 41) - k).norm() < 1e-8 * k.norm());
    CHECK_THROWS(resolvent_B(cplx(1.2, 0.0), eps, y, 5));
}

TEST_CASE("Puiseux leading term") {
    Eigen::VectorXd q(3);
    q << -1.0, 0.0, 1.0;
    Eigen::VectorXd lead = puiseux_leading(q, 10);
    for (int k = -10; k <= 10; ++k) CHECK(lead[k + 10] == Approx(-0.5 * (std::abs(k - 1) - std::abs(k + 1))));
    Eigen::VectorXd even(3);
    even << 1.0, 0.0, 1.0;
    CHECK_THROWS(puiseux_leading_check(even, {1e-3}));
    auto p = puiseux_leading_check(q, geomspace(1e-4, 1e-2, 5), 2.0, 20000);
    CHECK(p.slope == Approx(0.5).epsilon(0.2));
}

TEST_CASE("limiting absorption") {
    Eigen::VectorXd q(3);
    q << -1.0, 0.0, 1.0;
    auto d = limiting_absorption_check(1.0, q, {1e-2, 1e-3, 1e-4});
    CHECK(d[0] > d[1]);
    CHECK(d[1] > d[2]);
}

TEST_CASE("space-time norms") {
    Trajectory zero;
    zero.dt = 1.0;
    zero.states.assign(5, LatticeState(10));
    CHECK(spacetime_norm(zero, 7.0, 14.0, 0.1) == 0.0);

    LatticeState x = random_skew(10, 6, 3);
    Trajectory c;
    c.dt = 0.5;
    c.states.assign(41, x);
    const double T = 20.0, eps = 0.1;
    CHECK(spacetime_norm(c, 7.0, 14.0, eps) == Approx(norm(x, 14.0) * std::pow(eps * T, 1.0 / 7.0)).epsilon(1e-12));
    CHECK(spacetime_norm(c, kInf, 2.0, eps) == Approx(norm(x, 2.0)));

    // homogeneous Strichartz quotient over an ensemble
    double worst = 0.0;
    for (unsigned s = 0; s < 6; ++s) {
        LatticeState d = random_skew(1024, 10 + s, 4);
        Trajectory tr = sample_linear_flow(d, eps, 1000.0, 801);
        worst = std::max(worst, spacetime_norm(tr, 7.0, 14.0, eps) / norm(d, 2.0));
        double sup = 0.0;
        for (const auto& s : tr.states) sup = std::max(sup, norm(s, 2.0));
        CHECK(spacetime_norm(tr, kInf, 2.0, eps) == sup);
    }
    CHECK(worst < 3.0);
}

TEST_CASE("space-time exchange inequality") {
    Trajectory empty;
    auto e = sp_temp_check(empty, 3.0, 2.0);
    CHECK(e.holds);

    LatticeState one(20);
    one.q[one.index(0)] = 1.0;
    Trajectory single;
    single.dt = 0.1;
    for (int i = 0; i < 30; ++i) single.states.push_back(one);
    auto s1 = sp_temp_check(single, 3.0, 2.0);
    CHECK(s1.lhs == Approx(s1.rhs).epsilon(1e-12));
    CHECK(s1.holds);

    Trajectory tr = sample_linear_flow(random_skew(512, 8, 3), 0.1, 500.0, 401);
    auto r = sp_temp_check(tr, 3.0, 2.0);
    CHECK(r.holds);
    CHECK(r.lhs <= std::sqrt(r.constant) * r.rhs);
    CHECK(r.constant > 1.0);
    CHECK_THROWS(sp_temp_check(tr, 2.0, 2.0));
}
