#include "breathers/breather.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>
#include <numbers>
#include <ostream>
#include <stdexcept>

#include <Eigen/Eigenvalues>

#include "breathers/fit.hpp"
#include "breathers/integrator.hpp"

namespace breathers {

Breather anti_continuum_seed(const ActionAngleChart& chart, double I, int N, const BreatherOptions& opt) {
    if (!chart.in_range(I)) throw std::out_of_range("I outside the chart range");
    Breather b;
    b.V = chart.potential();
    b.eps = 0.0;
    b.T = 2.0 * std::numbers::pi / chart.omega0(I);
    b.I_label = I;
    b.x0 = LatticeState(N, true);
    auto [p0, q0] = chart.to_cartesian(I, 0.0);
    b.x0.p[b.x0.index(0)] = p0;
    b.x0.q[b.x0.index(0)] = q0;
    const double om = chart.omega0(I);
    for (int j = 0; j < opt.n_samples; ++j) {
        double t = b.T * j / opt.n_samples;
        LatticeState s(N, true);
        auto [p, q] = chart.to_cartesian(I, om * t);
        s.p[s.index(0)] = p;
        s.q[s.index(0)] = q;
        b.t.push_back(t);
        b.orbit.push_back(std::move(s));
    }
    b.monodromy = flow_with_monodromy(b.x0, b.V, 0.0, b.T, opt.dt_jacobian).monodromy;
    b.loc = localization_fit(b);
    return b;
}

void sample_orbit(Breather& b, int n, double dt) {
    b.t.clear();
    b.orbit.clear();
    LatticeState x = b.x0;
    const double h = b.T / n;
    for (int j = 0; j < n; ++j) {
        b.t.push_back(j * h);
        b.orbit.push_back(x);
        x = flow(x, b.V, b.eps, h, dt);
    }
}

Breather polish_breather(const LatticeState& guess, const PotentialSpec& V, double eps, double T,
                         const BreatherOptions& opt) {
    if (!guess.include_site0) throw std::invalid_argument("breather state needs site 0");
    LatticeState x = guess;
    const int n = 2 * x.size();
    const int ip0 = x.index(0);
    Breather b;
    b.V = V;
    b.eps = eps;
    b.T = T;
    for (int it = 0;; ++it) {
        Eigen::VectorXd F = flow(x, V, eps, T, opt.dt).flat() - x.flat();
        b.defect = F.norm();
        if (b.defect < opt.tol) {
            b.newton_steps = it;
            break;
        }
        if (it == opt.max_newton)
            throw std::runtime_error("breather Newton did not converge, defect " + std::to_string(b.defect));
        Eigen::MatrixXd M = flow_with_monodromy(x, V, eps, T, opt.dt_jacobian).monodromy;
        Eigen::MatrixXd A = Eigen::MatrixXd::Zero(n + 1, n + 1);
        A.topLeftCorner(n, n) = M - Eigen::MatrixXd::Identity(n, n);
        A.block(0, n, n, 1) = gradient(x, V, eps).flat();
        A(n, ip0) = 1.0;
        Eigen::VectorXd rhs(n + 1);
        rhs << -F, -x.p[ip0];
        Eigen::FullPivLU<Eigen::MatrixXd> lu(A);
        if (!lu.isInvertible()) throw std::runtime_error("singular bordered Jacobian");
        Eigen::VectorXd d = lu.solve(rhs);
        x = LatticeState::from_flat(x.flat() + d.head(n), x.N, true);
    }
    if (!(x.q[ip0] > 0.0)) throw std::runtime_error("converged orbit left the section q_0 > 0");
    b.x0 = x;
    b.monodromy = flow_with_monodromy(x, V, eps, T, opt.dt_jacobian).monodromy;
    sample_orbit(b, opt.n_samples, opt.dt);
    b.loc = localization_fit(b);
    b.I_label = central_action(b);
    return b;
}

Breather continue_breather(const Breather& seed, double eps_target, double eps_step, const BreatherOptions& opt) {
    if (eps_target == seed.eps) return seed;
    if (!(eps_step > 0.0)) throw std::invalid_argument("eps step must be positive");
    const int n = static_cast<int>(std::ceil(std::abs(eps_target - seed.eps) / eps_step - 1e-12));
    Breather cur = seed;
    LatticeState prev = seed.x0;
    bool have_prev = false;
    for (int i = 1; i <= n; ++i) {
        double eps = seed.eps + (eps_target - seed.eps) * i / n;
        // secant predictor once two solutions are known
        LatticeState guess = have_prev ? cur.x0 + (cur.x0 - prev) : cur.x0;
        Breather next = polish_breather(guess, seed.V, eps, seed.T, opt);
        prev = cur.x0;
        have_prev = true;
        cur = std::move(next);
    }
    return cur;
}

Localization localization_fit(const Breather& b) {
    Localization loc;
    if (b.orbit.empty()) throw std::invalid_argument("breather has no orbit samples");
    const LatticeState& s0 = b.orbit.front();
    std::vector<double> ks, la;
    for (int k = -s0.N; k <= s0.N; ++k) {
        if (k == 0) continue;
        double a = 0.0;
        for (const auto& s : b.orbit) a = std::max(a, std::abs(s.q_at(k)) + std::abs(s.p_at(k)));
        if (a > 1e-13) {
            ks.push_back(std::abs(k));
            la.push_back(std::log(a));
        }
    }
    loc.n_sites = static_cast<int>(ks.size());
    if (ks.size() < 3) {
        loc.degenerate = true;
        loc.beta_hat = std::numeric_limits<double>::infinity();
        return loc;
    }
    LineFit f = fit_line(ks, la);
    loc.beta_hat = -f.slope;
    loc.r2 = f.r2;
    return loc;
}

double central_action(const Breather& b) {
    if (b.orbit.empty()) throw std::invalid_argument("breather has no orbit samples");
    double acc = 0.0;
    for (const auto& s : b.orbit) {
        double E = oscillator_energy(b.V, s.p_at(0), s.q_at(0));
        acc += E > 0.0 ? action_of_energy(b.V, E) : 0.0;
    }
    return acc / b.orbit.size();
}

double distance_to_unperturbed(const Breather& b, const NormSpec& metric) {
    double best = std::numeric_limits<double>::infinity();
    for (const auto& s : b.orbit) {
        double E = oscillator_energy(b.V, s.p_at(0), s.q_at(0));
        double I = E > 0.0 ? action_of_energy(b.V, E) : 0.0;
        // the unperturbed family contains every phase, so the angle gap vanishes
        double d = std::max(std::abs(I - b.I_label), norm(drop_site0(s), metric.r_exp, metric.weight));
        best = std::min(best, d);
    }
    return best;
}

FloquetReport floquet_spectrum(const Breather& b) {
    const Eigen::MatrixXd& M = b.monodromy;
    if (M.rows() == 0) throw std::invalid_argument("breather has no monodromy");
    Eigen::EigenSolver<Eigen::MatrixXd> es(M, false);
    if (es.info() != Eigen::Success) throw std::runtime_error("eigen-solver failure");
    FloquetReport r;
    for (Eigen::Index i = 0; i < es.eigenvalues().size(); ++i) r.eigenvalues.push_back(es.eigenvalues()[i]);
    std::vector<size_t> idx(r.eigenvalues.size());
    for (size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    std::sort(idx.begin(), idx.end(),
              [&](size_t a, size_t c) { return std::abs(r.eigenvalues[a] - 1.0) < std::abs(r.eigenvalues[c] - 1.0); });
    r.trivial[0] = r.eigenvalues[idx[0]];
    r.trivial[1] = r.eigenvalues[idx[1]];
    r.max_excess = -std::numeric_limits<double>::infinity();
    for (size_t i = 2; i < idx.size(); ++i) r.max_excess = std::max(r.max_excess, std::abs(r.eigenvalues[idx[i]]) - 1.0);
    for (const auto& l : r.eigenvalues) {
        double m = std::numeric_limits<double>::infinity();
        for (const auto& o : r.eigenvalues) m = std::min(m, std::abs(1.0 / l - o));
        r.reciprocity = std::max(r.reciprocity, m);
    }
    const Eigen::Index n = M.rows() / 2;
    Eigen::MatrixXd J = Eigen::MatrixXd::Zero(2 * n, 2 * n);
    J.topRightCorner(n, n) = -Eigen::MatrixXd::Identity(n, n);
    J.bottomLeftCorner(n, n) = Eigen::MatrixXd::Identity(n, n);
    r.symplectic_defect = (M.transpose() * J * M - J).cwiseAbs().maxCoeff();
    return r;
}

void write_breather_csv(std::ostream& os, const Breather& b) {
    os << std::setprecision(17) << "# I_label=" << b.I_label << ",eps=" << b.eps << ",T=" << b.T
       << ",beta_hat=" << b.loc.beta_hat << ",defect=" << b.defect << '\n';
    write_state_csv(os, b.x0);
}

}  // namespace breathers
