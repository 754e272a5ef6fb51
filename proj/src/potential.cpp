#include "breathers/potential.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <functional>
#include <numbers>
#include <stdexcept>
#include <string>

#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <boost/math/tools/roots.hpp>
#include <boost/numeric/odeint.hpp>

namespace breathers {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

double U(const PotentialSpec& V, double q) { return 0.5 * q * q + V.V(q); }
double dU(const PotentialSpec& V, double q) { return q + V.dV(q); }
double d2U(const PotentialSpec& V, double q) { return 1.0 + V.d2V(q); }

inline double ipow(double x, int m) {
    double r = 1.0;
    while (m > 0) {
        if (m & 1) r *= x;
        x *= x;
        m >>= 1;
    }
    return r;
}

// (U(a) - U(b)) / (a - b), evaluated without cancellation.
double divided_difference(const PotentialSpec& V, double a, double b) {
    auto pow_sum = [](double x, double y, int m) {
        // sum_{j=0}^{m-1} x^j y^{m-1-j}
        double s = 0.0, yi = 1.0;
        for (int i = 0; i < m; ++i) {
            s = s * x + yi;
            yi *= y;
        }
        return s;
    };
    double g = 0.5 * (a + b);
    for (const auto& [m, c] : V.terms) g += c * pow_sum(a, b, m);
    return g;
}

double gk_integrate(const std::function<double(double)>& f, double a, double b) {
    if (b <= a) return 0.0;
    double err = 0.0;
    double val = boost::math::quadrature::gauss_kronrod<double, 31>::integrate(f, a, b, 12, 1e-14, &err);
    if (!(err <= 1e-11 * std::max(1.0, std::abs(val))))
        throw std::runtime_error("oscillator quadrature did not converge (err " + std::to_string(err) + ")");
    return val;
}

void check_convex(const PotentialSpec& V, double qm, double qp) {
    for (int i = 0; i <= 64; ++i) {
        double q = qm + (qp - qm) * i / 64.0;
        if (d2U(V, q) <= 0.0) throw std::domain_error("level set is not convex at this energy");
    }
}

// time from q to q_+ along the branch p <= 0 (right half)
double time_from_right(const PotentialSpec& V, double qp, double q) {
    double smax = std::sqrt(std::max(0.0, qp - q));
    return gk_integrate(
        [&](double s) {
            double x = qp - s * s;
            return 2.0 / std::sqrt(2.0 * divided_difference(V, qp, x));
        },
        0.0, smax);
}

// time from q_- to q
double time_from_left(const PotentialSpec& V, double qm, double q) {
    double smax = std::sqrt(std::max(0.0, q - qm));
    return gk_integrate(
        [&](double s) {
            double x = qm + s * s;
            return 2.0 / std::sqrt(-2.0 * divided_difference(V, x, qm));
        },
        0.0, smax);
}

}  // namespace

PotentialSpec::PotentialSpec(std::vector<std::pair<int, double>> t, int min_deg)
    : terms(std::move(t)), min_degree(min_deg) {
    validate();
}

PotentialSpec PotentialSpec::monomial(int degree, double coef) {
    return PotentialSpec({{degree, coef}}, degree >= 8 ? 8 : 4);
}

void PotentialSpec::validate() const {
    if (min_degree != 4 && min_degree != 8) throw std::invalid_argument("min_degree must be 4 or 8");
    for (const auto& [m, c] : terms) {
        if (m < min_degree)
            throw std::invalid_argument("potential degree " + std::to_string(m) + " below min_degree");
        if (!std::isfinite(c)) throw std::invalid_argument("non-finite potential coefficient");
    }
}

int PotentialSpec::max_degree() const {
    int d = 0;
    for (const auto& t : terms) d = std::max(d, t.first);
    return d;
}

double PotentialSpec::V(double q) const {
    double s = 0.0;
    for (const auto& [m, c] : terms) s += c * ipow(q, m);
    return s;
}

double PotentialSpec::dV(double q) const {
    double s = 0.0;
    for (const auto& [m, c] : terms) s += c * m * ipow(q, m - 1);
    return s;
}

double PotentialSpec::d2V(double q) const {
    double s = 0.0;
    for (const auto& [m, c] : terms) s += c * m * (m - 1) * ipow(q, m - 2);
    return s;
}

double eval_potential(const PotentialSpec& V, double q) { return V.V(q); }

double oscillator_energy(const PotentialSpec& V, double p, double q) { return 0.5 * p * p + U(V, q); }

std::pair<double, double> turning_points(const PotentialSpec& V, double E) {
    if (!(E > 0.0)) throw std::domain_error("energy must be positive");
    auto find = [&](double dir) {
        double a = 0.0, b = std::sqrt(2.0 * E);
        int guard = 0;
        while (U(V, dir * b) < E) {
            if (dU(V, dir * b) * dir <= 0.0 || ++guard > 200)
                throw std::domain_error("level set is unbounded or not a closed curve");
            a = b;
            b *= 2.0;
        }
        boost::math::tools::eps_tolerance<double> tol(52);
        std::uintmax_t it = 200;
        auto r = boost::math::tools::toms748_solve([&](double x) { return U(V, dir * x) - E; }, a, b, tol, it);
        return dir * 0.5 * (r.first + r.second);
    };
    double qp = find(1.0), qm = find(-1.0);
    check_convex(V, qm, qp);
    return {qm, qp};
}

double action_of_energy(const PotentialSpec& V, double E) {
    if (E == 0.0) return 0.0;
    auto [qm, qp] = turning_points(V, E);
    double c = 0.5 * (qm + qp);
    double right = gk_integrate(
        [&](double s) {
            double x = qp - s * s;
            return 2.0 * s * s * std::sqrt(2.0 * divided_difference(V, qp, x));
        },
        0.0, std::sqrt(qp - c));
    double left = gk_integrate(
        [&](double s) {
            double x = qm + s * s;
            return 2.0 * s * s * std::sqrt(-2.0 * divided_difference(V, x, qm));
        },
        0.0, std::sqrt(c - qm));
    return (right + left) / std::numbers::pi;
}

double period_of_energy(const PotentialSpec& V, double E) {
    auto [qm, qp] = turning_points(V, E);
    double c = 0.5 * (qm + qp);
    return 2.0 * (time_from_right(V, qp, c) + time_from_left(V, qm, c));
}

ActionAngleChart::ActionAngleChart(PotentialSpec V, double I_lo, double I_hi, int n_grid)
    : V_(std::move(V)), I_lo_(I_lo), I_hi_(I_hi) {
    V_.validate();
    if (!(I_lo > 0.0 && I_hi > I_lo)) throw std::invalid_argument("chart needs 0 < I_lo < I_hi");
    if (n_grid < 8) throw std::invalid_argument("chart grid too small");
    I_grid_.resize(n_grid);
    E_table_.resize(n_grid);
    omega_table_.resize(n_grid);
    double h = (I_hi - I_lo) / (n_grid - 1);
    double E_prev = 0.0;
    for (int i = 0; i < n_grid; ++i) {
        double I = I_lo + i * h;
        I_grid_[i] = I;
        double b = std::max(2.0 * I, E_prev * 1.5 + 1e-3);
        while (action_of_energy(V_, b) < I) b *= 2.0;
        boost::math::tools::eps_tolerance<double> tol(50);
        std::uintmax_t it = 200;
        auto r = boost::math::tools::toms748_solve([&](double E) { return action_of_energy(V_, E) - I; }, E_prev, b,
                                                   tol, it);
        E_table_[i] = 0.5 * (r.first + r.second);
        if (i > 0 && !(E_table_[i] > E_table_[i - 1])) throw std::runtime_error("E(I) not increasing");
        omega_table_[i] = kTwoPi / period_of_energy(V_, E_table_[i]);
        if (!(omega_table_[i] > 0.0)) throw std::runtime_error("non-positive frequency");
        E_prev = E_table_[i];
    }
    E_lo_ = E_table_.front();
    E_hi_ = E_table_.back();
    spline_ = std::make_shared<const boost::math::interpolators::cardinal_cubic_b_spline<double>>(
        E_table_.begin(), E_table_.end(), I_lo, h, omega_table_.front(), omega_table_.back());
}

bool ActionAngleChart::in_range(double I) const {
    double slack = 1e-12 * (I_hi_ - I_lo_);
    return I >= I_lo_ - slack && I <= I_hi_ + slack;
}

void ActionAngleChart::check_range(double I) const {
    if (!in_range(I)) throw std::out_of_range("action " + std::to_string(I) + " outside chart range");
}

double ActionAngleChart::h0(double I) const {
    check_range(I);
    if (V_.is_zero()) return I;
    double h = (I_hi_ - I_lo_) / (I_grid_.size() - 1);
    int j = std::clamp(static_cast<int>((I - I_lo_) / h), 0, static_cast<int>(I_grid_.size()) - 2);
    double a = E_table_[j], b = E_table_[j + 1];
    // widen by a little to absorb tabulation round-off
    double w = 1e-9 * (b - a) + 1e-15;
    a = std::max(0.0, a - w);
    b += w;
    auto f = [&](double E) { return action_of_energy(V_, E) - I; };
    while (f(a) > 0.0) a = std::max(0.0, a - (b - a));
    while (f(b) < 0.0) b += (b - a);
    boost::math::tools::eps_tolerance<double> tol(52);
    std::uintmax_t it = 200;
    auto r = boost::math::tools::toms748_solve(f, a, b, tol, it);
    return 0.5 * (r.first + r.second);
}

double ActionAngleChart::h0_interp(double I) const {
    check_range(I);
    return (*spline_)(I);
}

double ActionAngleChart::omega_interp(double I) const {
    check_range(I);
    return spline_->prime(I);
}

double ActionAngleChart::omega0(double I) const {
    if (V_.is_zero()) {
        check_range(I);
        return 1.0;
    }
    return kTwoPi / period_of_energy(V_, h0(I));
}

std::pair<double, double> ActionAngleChart::to_cartesian(double I, double alpha) const {
    double E = h0(I);
    double a = std::fmod(alpha, kTwoPi);
    if (a < 0.0) a += kTwoPi;
    if (V_.is_zero()) {
        double r = std::sqrt(2.0 * I);
        return {-r * std::sin(a), r * std::cos(a)};
    }
    double qp = turning_points(V_, E).second;
    double T = period_of_energy(V_, E);
    double t_end = a / kTwoPi * T;
    using state_t = std::array<double, 2>;
    state_t x{0.0, qp};
    if (t_end > 0.0) {
        namespace ode = boost::numeric::odeint;
        auto rhs = [&](const state_t& s, state_t& ds, double) {
            ds[0] = -s[1] - V_.dV(s[1]);
            ds[1] = s[0];
        };
        ode::integrate_adaptive(ode::make_controlled<ode::runge_kutta_fehlberg78<state_t>>(1e-15, 1e-15), rhs, x,
                                0.0, t_end, 1e-3);
    }
    return {x[0], x[1]};
}

std::pair<double, double> ActionAngleChart::from_cartesian(double p, double q) const {
    double E = oscillator_energy(V_, p, q);
    if (E < E_lo_ * (1.0 - 1e-12) || E > E_hi_ * (1.0 + 1e-12))
        throw std::out_of_range("energy outside chart range");
    double I = action_of_energy(V_, E);
    if (V_.is_zero()) {
        double a = std::atan2(-p, q);
        if (a < 0.0) a += kTwoPi;
        return {I, a};
    }
    auto [qm, qp] = turning_points(V_, E);
    double c = 0.5 * (qm + qp);
    double T = period_of_energy(V_, E);
    double qc = std::clamp(q, qm, qp);
    double t = qc >= c ? time_from_right(V_, qp, qc) : 0.5 * T - time_from_left(V_, qm, qc);
    if (p > 0.0) t = T - t;
    double a = kTwoPi * t / T;
    if (a >= kTwoPi) a -= kTwoPi;
    return {I, a};
}

double h0_of_action(const ActionAngleChart& chart, double I) { return chart.h0(I); }
double omega0(const ActionAngleChart& chart, double I) { return chart.omega0(I); }
std::pair<double, double> to_cartesian(const ActionAngleChart& chart, double I, double alpha) {
    return chart.to_cartesian(I, alpha);
}
std::pair<double, double> from_cartesian(const ActionAngleChart& chart, double p, double q) {
    return chart.from_cartesian(p, q);
}

double nonresonance_margin(const ActionAngleChart& chart, double I_lo, double I_hi, int n_max, int n_grid) {
    if (n_max < 1) throw std::invalid_argument("n_max must be >= 1");
    if (!chart.in_range(I_lo) || !chart.in_range(I_hi) || I_hi < I_lo)
        throw std::out_of_range("margin interval outside chart");
    double margin = INFINITY;
    for (int i = 0; i < n_grid; ++i) {
        double I = n_grid == 1 ? I_lo : I_lo + (I_hi - I_lo) * i / (n_grid - 1);
        double w = chart.omega0(I);
        for (int n = 1; n <= n_max; ++n) {
            margin = std::min(margin, std::abs(w - 1.0 / n));
            margin = std::min(margin, std::abs(w + 1.0 / n));
        }
    }
    return margin;
}

}  // namespace breathers
