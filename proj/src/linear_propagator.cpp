#include "breathers/linear_propagator.hpp"

#include <algorithm>
#include <cmath>
#include <mutex>
#include <numbers>
#include <stdexcept>

#include <boost/math/quadrature/gauss.hpp>
#include <boost/math/tools/minima.hpp>
#include <fftw3.h>

#include "breathers/fit.hpp"

namespace breathers {

namespace {

constexpr double kPi = std::numbers::pi;

std::mutex& planner_mutex() {
    static std::mutex m;
    return m;
}

using Gauss = boost::math::quadrature::gauss<double, 64>;

// sum over 64 Gauss-Legendre nodes on [a, b] of w * f(x)
template <class F>
cplx gauss_panel(F&& f, double a, double b) {
    const auto& x = Gauss::abscissa();
    const auto& w = Gauss::weights();
    double c = 0.5 * (a + b), h = 0.5 * (b - a);
    cplx s = 0.0;
    for (size_t i = 0; i < x.size(); ++i) s += w[i] * (f(c + h * x[i]) + f(c - h * x[i]));
    return h * s;
}

template <class F>
cplx composite(F&& f, double a, double b, int panels) {
    cplx s = 0.0;
    double h = (b - a) / panels;
    for (int i = 0; i < panels; ++i) s += gauss_panel(f, a + i * h, a + (i + 1) * h);
    return s;
}

double weighted_l2(const Eigen::VectorXcd& v, int K, double s) {
    double acc = 0.0;
    for (int i = 0; i < v.size(); ++i) acc += std::norm(v[i]) * std::pow(japanese_bracket(i - K), -2.0 * s);
    return std::sqrt(acc);
}

bool is_skew(const Eigen::VectorXd& q) {
    const Eigen::Index n = q.size();
    if (n % 2 == 0) return false;
    for (Eigen::Index i = 0; i < n; ++i)
        if (q[i] != -q[n - 1 - i]) return false;
    return true;
}

void check_cut(cplx nut) {
    if (nut.imag() == 0.0 && nut.real() >= 0.0 && nut.real() <= 4.0)
        throw std::domain_error("resolvent parameter on the spectral cut [0, 4]");
}

Eigen::VectorXcd apply_kernel(cplx theta, const Eigen::VectorXcd& y, int K) {
    if (y.size() % 2 == 0) throw std::invalid_argument("sequence must live on -N..N");
    const int Ny = static_cast<int>(y.size() / 2);
    const int L = K + Ny;
    Eigen::VectorXcd g(L + 1);
    const cplx pre = cplx(0.0, -1.0) / (2.0 * std::sin(theta));
    for (int m = 0; m <= L; ++m) g[m] = pre * std::exp(cplx(0.0, -1.0) * theta * static_cast<double>(m));
    Eigen::VectorXcd out = Eigen::VectorXcd::Zero(2 * K + 1);
    for (int l = -Ny; l <= Ny; ++l) {
        cplx yl = y[l + Ny];
        if (yl == 0.0) continue;
        for (int k = -K; k <= K; ++k) out[k + K] += g[std::abs(k - l)] * yl;
    }
    return out;
}

}  // namespace

double nu(double eps, double theta) {
    double s = std::sin(0.5 * theta);
    return std::sqrt(1.0 + 4.0 * eps * s * s);
}

double nu_prime(double eps, double theta) { return eps * std::sin(theta) / nu(eps, theta); }

double nu_second(double eps, double theta) {
    double n = nu(eps, theta), d = nu_prime(eps, theta);
    return (eps * std::cos(theta) - d * d) / n;
}

struct LinearPropagator::Plans {
    double* real = nullptr;
    fftw_complex* spec = nullptr;
    fftw_plan fwd = nullptr, bwd = nullptr;
};

LinearPropagator::LinearPropagator(int N, double eps) : N_(N), M_(2 * N + 2), eps_(eps) {
    if (N < 1) throw std::invalid_argument("propagator needs N >= 1");
    if (!(eps >= 0.0)) throw std::invalid_argument("eps must be >= 0");
    nu_.resize(M_ / 2 + 1);
    for (int j = 0; j <= M_ / 2; ++j) nu_[j] = nu(eps, 2.0 * kPi * j / M_);
    plans_ = std::make_unique<Plans>();
    std::lock_guard<std::mutex> lock(planner_mutex());
    plans_->real = fftw_alloc_real(M_);
    plans_->spec = fftw_alloc_complex(M_ / 2 + 1);
    plans_->fwd = fftw_plan_dft_r2c_1d(M_, plans_->real, plans_->spec, FFTW_ESTIMATE);
    plans_->bwd = fftw_plan_dft_c2r_1d(M_, plans_->spec, plans_->real, FFTW_ESTIMATE);
}

LinearPropagator::~LinearPropagator() {
    std::lock_guard<std::mutex> lock(planner_mutex());
    fftw_destroy_plan(plans_->fwd);
    fftw_destroy_plan(plans_->bwd);
    fftw_free(plans_->real);
    fftw_free(plans_->spec);
}

void LinearPropagator::forward(const Eigen::VectorXd& seq, Eigen::VectorXcd& hat) const {
    if (seq.size() != M_) throw std::invalid_argument("ring sequence has wrong length");
    std::copy(seq.data(), seq.data() + M_, plans_->real);
    fftw_execute_dft_r2c(plans_->fwd, plans_->real, plans_->spec);
    hat.resize(M_ / 2 + 1);
    for (int j = 0; j <= M_ / 2; ++j) hat[j] = cplx(plans_->spec[j][0], plans_->spec[j][1]);
}

void LinearPropagator::backward(const Eigen::VectorXcd& hat, Eigen::VectorXd& seq) const {
    if (hat.size() != M_ / 2 + 1) throw std::invalid_argument("spectrum has wrong length");
    for (int j = 0; j <= M_ / 2; ++j) {
        plans_->spec[j][0] = hat[j].real();
        plans_->spec[j][1] = hat[j].imag();
    }
    fftw_execute_dft_c2r(plans_->bwd, plans_->spec, plans_->real);
    seq.resize(M_);
    for (int i = 0; i < M_; ++i) seq[i] = plans_->real[i] / M_;
}

LatticeState LinearPropagator::propagate(const LatticeState& x, double t) const {
    x.check();
    if (x.N != N_) throw std::invalid_argument("state size does not match propagator");
    Eigen::VectorXd rp(M_), rq(M_);
    Eigen::VectorXcd ph, qh;
    auto evolve_ring = [&]() {
        forward(rp, ph);
        forward(rq, qh);
        for (int j = 0; j <= M_ / 2; ++j) {
            double n = nu_[j], c = std::cos(n * t), s = std::sin(n * t);
            cplx p0 = ph[j], q0 = qh[j];
            ph[j] = p0 * c - q0 * (n * s);
            qh[j] = q0 * c + p0 * (s / n);
        }
        backward(ph, rp);
        backward(qh, rq);
    };
    LatticeState y(N_, x.include_site0);
    if (x.include_site0) {
        if (!check_skew(x)) throw std::invalid_argument("whole-chain propagation needs a skew-symmetric state");
        for (int i = 0; i < M_; ++i) {
            int k = i <= N_ ? i : i - M_;
            rp[i] = x.p_at(k);
            rq[i] = x.q_at(k);
        }
        evolve_ring();
        for (int k = -N_; k <= N_; ++k) {
            int i = k >= 0 ? k : k + M_;
            y.p[y.index(k)] = k == 0 ? 0.0 : rp[i];
            y.q[y.index(k)] = k == 0 ? 0.0 : rq[i];
        }
        return y;
    }
    // each half-chain is the positive part of an odd ring sequence
    for (int side : {1, -1}) {
        rp.setZero();
        rq.setZero();
        for (int k = 1; k <= N_; ++k) {
            rp[k] = x.p_at(side * k);
            rq[k] = x.q_at(side * k);
            rp[M_ - k] = -rp[k];
            rq[M_ - k] = -rq[k];
        }
        evolve_ring();
        for (int k = 1; k <= N_; ++k) {
            y.p[y.index(side * k)] = rp[k];
            y.q[y.index(side * k)] = rq[k];
        }
    }
    return y;
}

LatticeState propagate_whole_chain(const LatticeState& x, double t, double eps) {
    if (!x.include_site0) throw std::invalid_argument("whole-chain propagation needs site 0");
    return LinearPropagator(x.N, eps).propagate(x, t);
}

LatticeState propagate_HL(const LatticeState& x, double t, double eps) {
    if (x.include_site0) throw std::invalid_argument("half-chain propagation expects no site 0");
    return LinearPropagator(x.N, eps).propagate(x, t);
}

double modified_energy(const LatticeState& x, double eps) {
    return 2.0 * hamiltonian(x, PotentialSpec::zero(), eps);
}

std::vector<LatticeState> duhamel(const std::vector<LatticeState>& forcing, double dt, double eps) {
    if (forcing.empty()) return {};
    const LatticeState& f0 = forcing.front();
    LinearPropagator prop(f0.N, eps);
    std::vector<LatticeState> u;
    u.reserve(forcing.size());
    u.push_back(LatticeState(f0.N, f0.include_site0));
    for (size_t n = 0; n + 1 < forcing.size(); ++n) {
        LatticeState a = u.back() + (0.5 * dt) * forcing[n];
        u.push_back(prop.propagate(a, dt) + (0.5 * dt) * forcing[n + 1]);
    }
    return u;
}

DecayFit measure_decay(const LatticeState& x0, double eps, const NormSpec& metric, const std::vector<double>& eps_t) {
    if (!(eps > 0.0)) throw std::invalid_argument("decay measurement needs eps > 0");
    if (eps_t.size() < 2) throw std::invalid_argument("decay fit needs at least two times");
    double t_max = *std::max_element(eps_t.begin(), eps_t.end()) / eps;
    if (t_max >= 0.5 * x0.N) throw std::runtime_error("decay window reaches the lattice boundary (t >= N/2)");
    LinearPropagator prop(x0.N, eps);
    DecayFit out;
    out.eps_t = eps_t;
    for (double et : eps_t) out.norms.push_back(norm(prop.propagate(x0, et / eps), metric.r_exp, metric.weight));
    LineFit f = fit_loglog(out.eps_t, out.norms);
    out.slope = f.slope;
    out.intercept = f.intercept;
    out.r2 = f.r2;
    return out;
}

LatticeState compact_skew_datum(int N) {
    if (N < 5) throw std::invalid_argument("datum needs N >= 5");
    LatticeState x(N, true);
    for (int k = 1; k <= 5; ++k) {
        double v = std::exp(-k * k / 8.0);
        x.q[x.index(k)] = v;
        x.q[x.index(-k)] = -v;
    }
    return x;
}

std::vector<std::pair<double, double>> vdc_segments(VdcInterval which) {
    switch (which) {
        case VdcInterval::I1:
            return {{-kPi, -2 * kPi / 3}, {-kPi / 3, 0.0}, {0.0, kPi / 3}, {2 * kPi / 3, kPi}};
        case VdcInterval::I2:
            return {{-2 * kPi / 3, -kPi / 3}, {kPi / 3, 2 * kPi / 3}};
        case VdcInterval::full:
            return {{-kPi, kPi}};
    }
    return {};
}

cplx oscillatory_integral(double rho, double lambda, double eps, VdcInterval which, bool check) {
    auto f = [&](double th) { return std::exp(cplx(0.0, lambda * (nu(eps, th) + rho * th))); };
    // about 8 oscillations per 64-node panel
    const double rate = std::abs(lambda) * (eps + std::abs(rho)) / (2.0 * kPi);
    cplx total = 0.0;
    for (auto [a, b] : vdc_segments(which)) {
        int panels = static_cast<int>(std::ceil((b - a) * rate / 8.0)) + 1;
        cplx v = composite(f, a, b, panels);
        if (check) {
            for (int it = 0;; ++it) {
                panels *= 2;
                cplx w = composite(f, a, b, panels);
                double diff = std::abs(w - v);
                v = w;
                if (diff <= 1e-11 + 1e-10 * std::abs(w)) break;
                if (it == 6) throw std::runtime_error("oscillatory quadrature did not converge");
            }
        }
        total += v;
    }
    return total;
}

double vdc_sup(double t, double eps, VdcInterval which, double* argmax) {
    if (!(t > 0.0)) throw std::invalid_argument("vdc_sup needs t > 0");
    const double rho_max = 1.2 * eps + 10.0 / t;
    const int P = 4;
    int M = 1;
    while (M < std::max(t, 2.5 * t * rho_max) + 256) M *= 2;
    const int L = M * P;
    const double h = 2.0 * kPi / M;
    auto segs = vdc_segments(which);
    auto inside = [&](double th) {
        for (auto [a, b] : segs)
            if (th >= a && th < b) return true;
        return false;
    };

    fftw_complex* buf;
    fftw_plan plan;
    {
        std::lock_guard<std::mutex> lock(planner_mutex());
        buf = fftw_alloc_complex(L);
        plan = fftw_plan_dft_1d(L, buf, buf, FFTW_BACKWARD, FFTW_ESTIMATE);
    }
    for (int m = 0; m < L; ++m) {
        buf[m][0] = buf[m][1] = 0.0;
        if (m >= M) continue;
        double th = -kPi + m * h;
        if (!inside(th)) continue;
        double ph = t * nu(eps, th);
        buf[m][0] = std::cos(ph);
        buf[m][1] = std::sin(ph);
    }
    fftw_execute(plan);
    std::vector<std::pair<double, double>> scan;  // (rho, |F|)
    for (int j = 0; j < L; ++j) {
        int jj = j < L / 2 ? j : j - L;
        double kappa = static_cast<double>(jj) / P;
        double rho = kappa / t;
        if (std::abs(rho) > rho_max) continue;
        cplx v = h * cplx(buf[j][0], buf[j][1]) * std::exp(cplx(0.0, -kappa * kPi));
        scan.emplace_back(rho, std::abs(v));
    }
    {
        std::lock_guard<std::mutex> lock(planner_mutex());
        fftw_destroy_plan(plan);
        fftw_free(buf);
    }
    std::sort(scan.begin(), scan.end());
    std::vector<std::pair<double, double>> peaks;
    for (size_t i = 1; i + 1 < scan.size(); ++i)
        if (scan[i].second >= scan[i - 1].second && scan[i].second >= scan[i + 1].second) peaks.push_back(scan[i]);
    std::sort(peaks.begin(), peaks.end(), [](auto& a, auto& b) { return a.second > b.second; });
    if (peaks.size() > 6) peaks.resize(6);

    const double dr = 1.0 / (P * t);
    double best = 0.0, best_rho = 0.0;
    for (auto [r0, mag] : peaks) {
        auto neg = [&](double r) { return -std::abs(oscillatory_integral(r, t, eps, which, false)); };
        auto [r, v] = boost::math::tools::brent_find_minima(neg, r0 - dr, r0 + dr, 40);
        if (-v > best) {
            best = -v;
            best_rho = r;
        }
    }
    best = std::abs(oscillatory_integral(best_rho, t, eps, which, true));
    if (argmax) *argmax = best_rho;
    return best;
}

VdcResult van_der_corput_check(double eps, const std::vector<double>& lambda, const std::vector<double>& rho_grid) {
    if (!(eps > 0.0)) throw std::invalid_argument("van der Corput check needs eps > 0");
    VdcResult out;
    out.lambda = lambda;
    for (double lam : lambda) {
        double t = lam / eps;
        for (auto which : {VdcInterval::I1, VdcInterval::I2}) {
            double sup = 0.0, arg = 0.0;
            if (rho_grid.empty()) {
                sup = vdc_sup(t, eps, which, &arg);
            } else {
                for (double r : rho_grid) {
                    double v = std::abs(oscillatory_integral(r, t, eps, which));
                    if (v > sup) {
                        sup = v;
                        arg = r;
                    }
                }
            }
            (which == VdcInterval::I1 ? out.sup_I1 : out.sup_I2).push_back(sup);
            (which == VdcInterval::I1 ? out.rho_I1 : out.rho_I2).push_back(arg);
        }
    }
    if (lambda.size() >= 2) {
        out.slope_I1 = fit_loglog(lambda, out.sup_I1).slope;
        out.slope_I2 = fit_loglog(lambda, out.sup_I2).slope;
    }
    return out;
}

cplx resolvent_theta(cplx nut) {
    check_cut(nut);
    cplx th = std::acos(1.0 - 0.5 * nut);
    if (th.imag() > 0.0) th = -th;
    if (!(th.imag() < 0.0)) throw std::domain_error("resolvent parameter on the spectral cut [0, 4]");
    return th;
}

cplx resolvent_kernel(cplx nut, long j, long k) {
    cplx th = resolvent_theta(nut);
    return cplx(0.0, -1.0) * std::exp(cplx(0.0, -1.0) * th * static_cast<double>(std::labs(j - k))) /
           (2.0 * std::sin(th));
}

namespace {

cplx limit_theta(double nut, int sign) {
    if (!(nut > 0.0 && nut < 4.0)) throw std::domain_error("boundary values need nu~ in (0, 4)");
    if (sign != 1 && sign != -1) throw std::invalid_argument("sign must be +1 or -1");
    return cplx(-sign * std::acos(1.0 - 0.5 * nut), 0.0);
}

}  // namespace

cplx resolvent_kernel_limit(double nut, int sign, long j, long k) {
    cplx th = limit_theta(nut, sign);
    return cplx(0.0, -1.0) * std::exp(cplx(0.0, -1.0) * th * static_cast<double>(std::labs(j - k))) /
           (2.0 * std::sin(th));
}

Eigen::VectorXcd resolvent_apply(cplx nut, const Eigen::VectorXcd& y, int K) {
    return apply_kernel(resolvent_theta(nut), y, K);
}

Eigen::VectorXcd resolvent_limit_apply(double nut, int sign, const Eigen::VectorXcd& y, int K) {
    return apply_kernel(limit_theta(nut, sign), y, K);
}

Eigen::VectorXcd resolvent_B(cplx nu_, double eps, const Eigen::VectorXcd& y, int K) {
    if (!(eps > 0.0)) throw std::invalid_argument("resolvent_B needs eps > 0");
    if (nu_.imag() == 0.0 && nu_.real() >= 1.0 && nu_.real() <= 1.0 + 4.0 * eps)
        throw std::domain_error("nu on the spectral cut [1, 1 + 4 eps]");
    return resolvent_apply((nu_ - 1.0) / eps, y, K) / eps;
}

Eigen::MatrixXcd truncated_minus_laplacian(int N, cplx shift) {
    const int n = 2 * N + 1;
    Eigen::MatrixXcd A = Eigen::MatrixXcd::Zero(n, n);
    for (int i = 0; i < n; ++i) {
        A(i, i) = 2.0 - shift;
        if (i > 0) A(i, i - 1) = -1.0;
        if (i + 1 < n) A(i, i + 1) = -1.0;
    }
    return A;
}

Eigen::VectorXd puiseux_leading(const Eigen::VectorXd& q, int K) {
    const int Nq = static_cast<int>(q.size() / 2);
    Eigen::VectorXd out = Eigen::VectorXd::Zero(2 * K + 1);
    for (int l = -Nq; l <= Nq; ++l) {
        double ql = q[l + Nq];
        if (ql == 0.0) continue;
        for (int k = -K; k <= K; ++k) out[k + K] -= 0.5 * std::abs(k - l) * ql;
    }
    return out;
}

PuiseuxResult puiseux_leading_check(const Eigen::VectorXd& q, const std::vector<double>& nut, double s, int K) {
    if (!is_skew(q)) throw std::invalid_argument("Puiseux check needs a skew-symmetric sequence");
    if (!(s > 1.5)) throw std::invalid_argument("Puiseux check needs s > 3/2");
    Eigen::VectorXcd y = q.cast<cplx>();
    Eigen::VectorXcd lead = puiseux_leading(q, K).cast<cplx>();
    PuiseuxResult out;
    out.nut = nut;
    for (double v : nut) out.error.push_back(weighted_l2(resolvent_limit_apply(v, 1, y, K) - lead, K, s));
    if (nut.size() >= 2) out.slope = fit_loglog(out.nut, out.error).slope;
    return out;
}

std::vector<double> limiting_absorption_check(double nut, const Eigen::VectorXd& q, const std::vector<double>& mus,
                                              double s, int K) {
    Eigen::VectorXcd y = q.cast<cplx>();
    Eigen::VectorXcd lim = resolvent_limit_apply(nut, 1, y, K);
    std::vector<double> out;
    for (double mu : mus) out.push_back(weighted_l2(resolvent_apply(cplx(nut, mu), y, K) - lim, K, s));
    return out;
}

Trajectory sample_linear_flow(const LatticeState& x0, double eps, double t_final, int n_samples) {
    if (n_samples < 2) throw std::invalid_argument("need at least two samples");
    LinearPropagator prop(x0.N, eps);
    Trajectory tr;
    tr.dt = t_final / (n_samples - 1);
    for (int i = 0; i < n_samples; ++i) tr.states.push_back(prop.propagate(x0, i * tr.dt));
    return tr;
}

double spacetime_norm(const Trajectory& traj, double q_exp, double r_exp, double eps, const WeightSpec& w) {
    if (traj.states.empty()) return 0.0;
    if (!(q_exp >= 1.0)) throw std::invalid_argument("time exponent must be >= 1");
    const size_t n = traj.states.size();
    if (std::isinf(q_exp)) {
        double m = 0.0;
        for (const auto& x : traj.states) m = std::max(m, norm(x, r_exp, w));
        return m;
    }
    double acc = 0.0;
    for (size_t i = 0; i < n; ++i) {
        double wt = (i == 0 || i + 1 == n) ? 0.5 : 1.0;
        acc += wt * std::pow(norm(traj.states[i], r_exp, w), q_exp);
    }
    return std::pow(acc * eps * traj.dt, 1.0 / q_exp);
}

double weighted_linf_L2(const Trajectory& traj, double s, double eps) {
    if (traj.states.empty()) return 0.0;
    const auto& x0 = traj.states.front();
    const size_t n = traj.states.size();
    Eigen::VectorXd acc = Eigen::VectorXd::Zero(x0.size());
    for (size_t i = 0; i < n; ++i) {
        double wt = (i == 0 || i + 1 == n) ? 0.5 : 1.0;
        acc += wt * (traj.states[i].p.array().square() + traj.states[i].q.array().square()).matrix();
    }
    double m = 0.0;
    for (int i = 0; i < x0.size(); ++i)
        m = std::max(m, std::pow(japanese_bracket(x0.site(i)), -s) * std::sqrt(acc[i] * eps * traj.dt));
    return m;
}

SpTempResult sp_temp_check(const Trajectory& traj, double s, double s_prime) {
    if (!(s > s_prime + 0.5)) throw std::invalid_argument("sp_temp_check needs s > s' + 1/2");
    SpTempResult out;
    const double a = 2.0 * (s - s_prime);
    const long L = 100000;
    double c = 1.0;
    for (long n = L; n >= 1; --n) c += 2.0 * std::pow(1.0 + static_cast<double>(n) * n, -0.5 * a);
    c += 2.0 * std::pow(L + 0.5, 1.0 - a) / (a - 1.0);
    out.constant = c;
    if (traj.states.empty()) {
        out.holds = true;
        return out;
    }
    const auto& x0 = traj.states.front();
    const size_t n = traj.states.size();
    Eigen::VectorXd per_site = Eigen::VectorXd::Zero(x0.size());
    double lhs = 0.0;
    for (size_t i = 0; i < n; ++i) {
        double wt = (i == 0 || i + 1 == n) ? 0.5 : 1.0;
        const auto& q = traj.states[i].q;
        double m = 0.0;
        for (int j = 0; j < q.size(); ++j) m = std::max(m, std::pow(japanese_bracket(x0.site(j)), -s) * std::abs(q[j]));
        lhs += wt * m * m;
        per_site += wt * q.array().square().matrix();
    }
    out.lhs = std::sqrt(lhs * traj.dt);
    double rhs = 0.0;
    for (int j = 0; j < x0.size(); ++j)
        rhs = std::max(rhs, std::pow(japanese_bracket(x0.site(j)), -s_prime) * std::sqrt(per_site[j] * traj.dt));
    out.rhs = rhs;
    out.holds = out.lhs <= std::sqrt(c) * out.rhs * (1.0 + 1e-12);
    return out;
}

}  // namespace breathers
