#include "breathers/experiments.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <istream>
#include <numbers>
#include <ostream>
#include <random>
#include <sstream>
#include <stdexcept>

namespace breathers {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

// flat (p, q) restricted to sites |k| <= n
Eigen::VectorXd window(const LatticeState& x, int n) {
    Eigen::VectorXd y(2 * (2 * n + 1));
    for (int k = -n; k <= n; ++k) {
        y[k + n] = x.p_at(k);
        y[2 * n + 1 + k + n] = x.q_at(k);
    }
    return y;
}

double wrap_phase(double a) {
    a = std::fmod(a, kTwoPi);
    return a < 0.0 ? a + kTwoPi : a;
}

}  // namespace

BreatherFamily BreatherFamily::build(const Breather& base, double rel_width, int n_nodes, int harmonics,
                                     const BreatherOptions& opt) {
    if (n_nodes < 3) throw std::invalid_argument("family needs at least 3 nodes");
    if (!(rel_width > 0.0 && rel_width < 0.5)) throw std::invalid_argument("family width out of range");
    if (harmonics < 1 || 2 * harmonics >= opt.n_samples) throw std::invalid_argument("harmonics vs samples");
    BreatherFamily f;
    f.V_ = base.V;
    f.eps_ = base.eps;
    f.N_ = base.x0.N;
    f.K_ = harmonics;
    const int n = n_nodes;
    std::vector<double> x(n);
    for (int j = 0; j < n; ++j) {
        x[j] = -std::cos(std::numbers::pi * j / (n - 1));
        f.T_.push_back(base.T * (1.0 + rel_width * x[j]));
        f.bw_.push_back((j % 2 == 0 ? 1.0 : -1.0) * ((j == 0 || j == n - 1) ? 0.5 : 1.0));
    }
    f.I_.assign(n, 0.0);
    f.coef_.resize(n);
    f.samples_.resize(n);
    std::vector<Breather> nodes(n);
    const int mid = (n - 1) / 2;
    nodes[mid] = polish_breather(base.x0, base.V, base.eps, f.T_[mid], opt);
    // walk outwards from the middle node with a secant predictor
    for (int dir : {1, -1}) {
        for (int j = mid + dir; j >= 0 && j < n; j += dir) {
            const LatticeState& a = nodes[j - dir].x0;
            LatticeState guess = a;
            int jj = j - 2 * dir;
            if (jj >= 0 && jj < n && !nodes[jj].orbit.empty()) {
                double r = (f.T_[j] - f.T_[j - dir]) / (f.T_[j - dir] - f.T_[jj]);
                guess = a + r * (a - nodes[jj].x0);
            }
            nodes[j] = polish_breather(guess, base.V, base.eps, f.T_[j], opt);
        }
    }
    const int ns = opt.n_samples;
    for (int j = 0; j < n; ++j) {
        const Breather& b = nodes[j];
        f.I_[j] = b.I_label;
        const Eigen::Index dof = b.x0.flat().size();
        Eigen::MatrixXcd C = Eigen::MatrixXcd::Zero(dof, f.K_ + 1);
        for (int m = 0; m < ns; ++m) {
            Eigen::VectorXd s = b.orbit[m].flat();
            f.samples_[j].push_back(s);
            for (int k = 0; k <= f.K_; ++k)
                C.col(k) += s.cast<std::complex<double>>() * std::exp(std::complex<double>(0.0, -kTwoPi * k * m / ns));
        }
        C /= static_cast<double>(ns);
        C.rightCols(f.K_) *= 2.0;
        f.coef_[j] = C;
    }
    return f;
}

Eigen::RowVectorXd BreatherFamily::weights(double T, Eigen::RowVectorXd* dw) const {
    const int n = static_cast<int>(T_.size());
    Eigen::RowVectorXd w(n);
    int hit = -1;
    for (int j = 0; j < n; ++j) {
        if (T == T_[j]) hit = j;
        w[j] = bw_[j] / (T - T_[j]);
    }
    if (hit >= 0) {
        w.setZero();
        w[hit] = 1.0;
    } else {
        w /= w.sum();
    }
    if (dw) {
        // p'(T) = sum_j l_j(T) p'(T_j) with p'(T_j) from the nodal differentiation matrix
        Eigen::MatrixXd D = Eigen::MatrixXd::Zero(n, n);
        for (int i = 0; i < n; ++i) {
            for (int j = 0; j < n; ++j)
                if (i != j) D(i, j) = bw_[j] / bw_[i] / (T_[i] - T_[j]);
            D(i, i) = -D.row(i).sum();
        }
        *dw = w * D;
    }
    return w;
}

Eigen::VectorXd BreatherFamily::point(double T, double phi, Eigen::VectorXd* dT, Eigen::VectorXd* dphi) const {
    if (T_.empty()) throw std::logic_error("empty breather family");
    Eigen::RowVectorXd dw;
    Eigen::RowVectorXd w = weights(T, dT ? &dw : nullptr);
    Eigen::VectorXcd e(K_ + 1), de(K_ + 1);
    for (int k = 0; k <= K_; ++k) {
        e[k] = std::exp(std::complex<double>(0.0, k * phi));
        de[k] = std::complex<double>(0.0, k) * e[k];
    }
    const Eigen::Index dof = coef_.front().rows();
    Eigen::VectorXd x = Eigen::VectorXd::Zero(dof);
    if (dT) *dT = Eigen::VectorXd::Zero(dof);
    if (dphi) *dphi = Eigen::VectorXd::Zero(dof);
    for (size_t j = 0; j < T_.size(); ++j) {
        Eigen::VectorXd g = (coef_[j] * e).real();
        x += w[j] * g;
        if (dT) *dT += dw[j] * g;
        if (dphi) *dphi += w[j] * (coef_[j] * de).real();
    }
    return x;
}

double BreatherFamily::action(double T) const {
    Eigen::RowVectorXd w = weights(T, nullptr);
    return w * Eigen::Map<const Eigen::VectorXd>(I_.data(), I_.size());
}

double BreatherFamily::dT_dI(double T) const {
    Eigen::RowVectorXd dw;
    weights(T, &dw);
    return 1.0 / (dw * Eigen::Map<const Eigen::VectorXd>(I_.data(), I_.size()))(0);
}

namespace {

// Omega(u, v) on flat (p, q) vectors
double omega(const Eigen::VectorXd& u, const Eigen::VectorXd& v) {
    const Eigen::Index n = u.size() / 2;
    return u.tail(n).dot(v.head(n)) - u.head(n).dot(v.tail(n));
}

Eigen::Vector2d symplectic_conditions(const Eigen::VectorXd& y, const BreatherFamily& fam, double T, double phi) {
    Eigen::VectorXd gT, gp;
    Eigen::VectorXd xi = y - fam.point(T, phi, &gT, &gp);
    return {omega(xi, gT), omega(xi, gp)};
}

}  // namespace

Modulation track_modulation(const LatticeState& x, const BreatherFamily& fam, const Modulation* warm, Projection proj) {
    const int nf = fam.N();
    const Eigen::VectorXd y = window(x, nf);
    double T, phi;
    if (warm) {
        T = warm->T;
        phi = warm->phase;
    } else {
        double best = kInf;
        T = fam.T_lo();
        phi = 0.0;
        for (size_t j = 0; j < fam.periods().size(); ++j) {
            const auto& s = fam.samples(static_cast<int>(j));
            for (size_t m = 0; m < s.size(); ++m) {
                double d = (y - s[m]).squaredNorm();
                if (d < best) {
                    best = d;
                    T = fam.periods()[j];
                    phi = kTwoPi * m / s.size();
                }
            }
        }
    }
    Modulation mod;
    Eigen::VectorXd dT, dphi;
    Eigen::VectorXd r = y - fam.point(T, phi, &dT, &dphi);
    double f = r.squaredNorm();
    const double scale = fam.T_hi() - fam.T_lo();
    for (int it = 0; it < 50; ++it) {
        Eigen::Matrix<double, Eigen::Dynamic, 2> J(y.size(), 2);
        J.col(0) = dT * scale;
        J.col(1) = dphi;
        Eigen::Vector2d d = (J.transpose() * J).ldlt().solve(J.transpose() * r);
        double lam = 1.0;
        bool improved = false;
        for (int ls = 0; ls < 30; ++ls) {
            double Tn = T + lam * d[0] * scale, pn = phi + lam * d[1];
            Eigen::VectorXd dTn, dpn;
            Eigen::VectorXd rn = y - fam.point(Tn, pn, &dTn, &dpn);
            double fn = rn.squaredNorm();
            if (fn <= f) {
                T = Tn;
                phi = pn;
                r = rn;
                dT = dTn;
                dphi = dpn;
                improved = fn < f;
                f = fn;
                break;
            }
            lam *= 0.5;
        }
        mod.iterations = it + 1;
        if (!improved || lam * d.norm() < 1e-13) break;
    }
    if (proj == Projection::symplectic) {
        const double h = 1e-7;
        Eigen::Vector2d F = symplectic_conditions(y, fam, T, phi);
        for (int it = 0; it < 50 && F.norm() > 1e-14; ++it) {
            Eigen::Matrix2d Jm;
            Jm.col(0) = (symplectic_conditions(y, fam, T + h, phi) - symplectic_conditions(y, fam, T - h, phi)) / (2 * h);
            Jm.col(1) = (symplectic_conditions(y, fam, T, phi + h) - symplectic_conditions(y, fam, T, phi - h)) / (2 * h);
            Eigen::Vector2d d = Jm.fullPivLu().solve(F);
            T -= d[0];
            phi -= d[1];
            F = symplectic_conditions(y, fam, T, phi);
            mod.iterations++;
            if (d.norm() < 1e-14) break;
        }
        if (!(F.norm() < 1e-9)) throw std::runtime_error("symplectic projection did not converge");
    }
    if (!(T > fam.T_lo() && T < fam.T_hi()))
        throw std::runtime_error("modulation window exhausted: T = " + std::to_string(T));
    mod.T = T;
    mod.phase = wrap_phase(phi);
    mod.I_bar = fam.action(T);
    Eigen::VectorXd g = fam.point(T, phi);
    LatticeState gs = LatticeState::from_flat(g, nf, true);
    mod.residual = x;
    for (int i = 0; i < x.size(); ++i) {
        int k = x.site(i);
        mod.residual.p[i] -= gs.p_at(k);
        mod.residual.q[i] -= gs.q_at(k);
    }
    mod.residual_l2 = norm(mod.residual, 2.0, WeightSpec::none());
    return mod;
}

LatticeState perturb(const Breather& b, const BreatherFamily& fam, double mu, PerturbShape shape, unsigned seed,
                     int N_out, int support) {
    if (!(mu >= 0.0)) throw std::invalid_argument("perturbation size must be >= 0");
    LatticeState x0 = resize_lattice(b.x0, N_out);
    if (mu == 0.0) return x0;
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> nd;
    LatticeState r(N_out, true);
    const int reach = shape == PerturbShape::localized ? std::min(support, N_out) : N_out;
    for (int k = -reach; k <= reach; ++k) {
        r.p[r.index(k)] = nd(rng);
        r.q[r.index(k)] = nd(rng);
    }
    std::vector<Eigen::VectorXd> basis;
    basis.push_back(gradient(x0, b.V, b.eps).flat());
    basis.push_back(vector_field(x0, b.V, b.eps).flat());
    Eigen::VectorXd dT;
    fam.point(b.T, 0.0, &dT);
    basis.push_back(resize_lattice(LatticeState::from_flat(dT * fam.dT_dI(b.T), fam.N(), true), N_out).flat());
    Eigen::VectorXd v = r.flat();
    std::vector<Eigen::VectorXd> ortho;
    for (auto u : basis) {
        for (const auto& o : ortho) u -= o.dot(u) * o;
        double nu = u.norm();
        if (nu > 0.0) ortho.push_back(u / nu);
    }
    for (int pass = 0; pass < 2; ++pass)
        for (const auto& o : ortho) v -= o.dot(v) * o;
    v *= mu / v.norm();
    return x0 + LatticeState::from_flat(v, N_out, true);
}

double ExperimentConfig::mu_value() const { return mu < 0.0 ? std::pow(eps, delta) : mu; }

void ExperimentConfig::validate() const {
    if (!(eps > 0.0)) throw std::invalid_argument("eps must be positive");
    if (!(delta > 0.5)) throw std::invalid_argument("delta must exceed 1/2");
    double m = mu_value();
    if (m > std::pow(eps, delta) * (1.0 + 1e-12)) throw std::invalid_argument("mu exceeds eps^delta");
    if (!(dt > 0.0) || !(sample_dt >= dt)) throw std::invalid_argument("bad time steps");
    double stride = sample_dt / dt;
    if (std::abs(stride - std::round(stride)) > 1e-9) throw std::invalid_argument("sample_dt must be a multiple of dt");
    if (!(eps_T > 0.0)) throw std::invalid_argument("horizon must be positive");
    if (!(N > 4.0 * horizon() * std::sqrt(eps))) throw std::invalid_argument("lattice too small for the horizon");
    if (family_N > N) throw std::invalid_argument("family lattice larger than the run lattice");
    for (const auto& a : norms)
        if (!is_admissible(a)) throw std::invalid_argument("recorded norm is not an admissible pair");
}

Breather stability_breather(const ExperimentConfig& cfg, const BreatherOptions& opt) {
    ActionAngleChart chart(cfg.V, 0.5 * cfg.I_label, 1.5 * cfg.I_label, 256);
    Breather seed = anti_continuum_seed(chart, cfg.I_label, cfg.family_N, opt);
    return continue_breather(seed, cfg.eps, 0.01, opt);
}

double slow_time_norm(const std::vector<double>& t, const std::vector<double>& f, double q, double eps, double t_from,
                      double t_to) {
    if (t.size() != f.size()) throw std::invalid_argument("time and value series differ in length");
    double acc = 0.0;
    for (size_t i = 0; i + 1 < t.size(); ++i) {
        if (t[i] < t_from - 1e-12 || t[i + 1] > t_to + 1e-12) continue;
        if (std::isinf(q)) {
            acc = std::max({acc, std::abs(f[i]), std::abs(f[i + 1])});
        } else {
            acc += 0.5 * (std::pow(std::abs(f[i]), q) + std::pow(std::abs(f[i + 1]), q)) * eps * (t[i + 1] - t[i]);
        }
    }
    return std::isinf(q) ? acc : std::pow(acc, 1.0 / q);
}

StabilityRecord run_stability(const ExperimentConfig& cfg, const Breather& b, const BreatherFamily& fam) {
    cfg.validate();
    StabilityRecord rec;
    rec.mu = cfg.mu_value();
    rec.norms = cfg.norms;
    rec.dist.assign(cfg.norms.size(), {});
    LatticeState x = perturb(b, fam, rec.mu, cfg.shape, cfg.seed, cfg.N);
    const double E0 = hamiltonian(x, b.V, b.eps);
    const int stride = static_cast<int>(std::lround(cfg.sample_dt / cfg.dt));
    const long n_samples = std::lround(cfg.horizon() / cfg.sample_dt);
    Eigen::VectorXd local = Eigen::VectorXd::Zero(x.size());
    Eigen::VectorXd first, last;
    Modulation mod;
    for (long i = 0; i <= n_samples; ++i) {
        if (i > 0)
            for (int s = 0; s < stride; ++s) step_inplace(x, b.V, b.eps, cfg.dt, cfg.scheme);
        mod = track_modulation(x, fam, i == 0 ? nullptr : &mod, cfg.projection);
        double t = i * cfg.sample_dt;
        rec.t.push_back(t);
        rec.I_bar.push_back(mod.I_bar);
        rec.phase.push_back(mod.phase);
        rec.residual_l2.push_back(mod.residual_l2);
        for (size_t j = 0; j < cfg.norms.size(); ++j)
            rec.dist[j].push_back(norm(mod.residual, cfg.norms[j].r_exp, WeightSpec::none()));
        Eigen::VectorXd sq = mod.residual.p.cwiseAbs2() + mod.residual.q.cwiseAbs2();
        local += sq;
        if (i == 0) first = sq;
        last = sq;
        if (!std::isfinite(mod.residual_l2)) throw std::runtime_error("blow-up in the stability run");
    }
    const double w = b.eps * cfg.sample_dt;
    local = (local - 0.5 * (first + last)) * w;
    for (int i = 0; i < x.size(); ++i)
        rec.local_L2 = std::max(rec.local_L2, std::pow(japanese_bracket(x.site(i)), -cfg.local_s) * std::sqrt(local[i]));
    const double T = rec.t.back();
    for (size_t j = 0; j < cfg.norms.size(); ++j) {
        double full = slow_time_norm(rec.t, rec.dist[j], cfg.norms[j].q_exp, b.eps);
        double head = slow_time_norm(rec.t, rec.dist[j], cfg.norms[j].q_exp, b.eps, 0.0, T / 10.0);
        rec.spacetime.push_back(full);
        rec.spacetime_decade.push_back(full - head);
    }
    rec.I0 = rec.I_bar.front();
    rec.IT = rec.I_bar.back();
    auto at = [&](double tt) {
        auto it = std::lower_bound(rec.t.begin(), rec.t.end(), tt - 1e-9);
        return rec.I_bar[std::min<size_t>(it - rec.t.begin(), rec.t.size() - 1)];
    };
    for (int k = 1; k <= 5; ++k) {
        double Tp = T / std::pow(2.0, k);
        rec.cauchy.push_back(std::abs(at(2.0 * Tp) - at(Tp)));
    }
    rec.energy_drift = std::abs(hamiltonian(x, b.V, b.eps) - E0) / std::abs(E0);
    if (rec.mu > 0.0)
        rec.max_residual_ratio = *std::max_element(rec.residual_l2.begin(), rec.residual_l2.end()) / rec.mu;
    return rec;
}

StabilityRecord run_stability(const ExperimentConfig& cfg) {
    cfg.validate();
    Breather b = stability_breather(cfg);
    BreatherFamily fam = BreatherFamily::build(b, cfg.family_width, cfg.family_nodes, cfg.harmonics);
    return run_stability(cfg, b, fam);
}

namespace {

std::string dist_name(const AdmissiblePair& a) {
    std::ostringstream s;
    s << "dist_" << a.q_exp << '_' << a.r_exp;
    return s.str();
}

}  // namespace

void write_stability_csv(std::ostream& os, const StabilityRecord& rec) {
    os << "t,I_bar,phase,residual_l2";
    for (const auto& a : rec.norms) os << ',' << dist_name(a);
    os << '\n' << std::setprecision(17);
    for (size_t i = 0; i < rec.t.size(); ++i) {
        os << rec.t[i] << ',' << rec.I_bar[i] << ',' << rec.phase[i] << ',' << rec.residual_l2[i];
        for (const auto& d : rec.dist) os << ',' << d[i];
        os << '\n';
    }
}

StabilityRecord read_stability_csv(std::istream& is) {
    StabilityRecord rec;
    std::string line;
    if (!std::getline(is, line)) throw std::runtime_error("empty stability csv");
    std::stringstream hs(line);
    std::string cell;
    int col = 0;
    while (std::getline(hs, cell, ',')) {
        if (col++ < 4) continue;
        AdmissiblePair a;
        if (std::sscanf(cell.c_str(), "dist_%lf_%lf", &a.q_exp, &a.r_exp) != 2)
            throw std::runtime_error("bad stability csv column: " + cell);
        rec.norms.push_back(a);
    }
    rec.dist.assign(rec.norms.size(), {});
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        std::stringstream ss(line);
        std::vector<double> v;
        while (std::getline(ss, cell, ',')) v.push_back(std::stod(cell));
        if (v.size() != 4 + rec.norms.size()) throw std::runtime_error("stability csv row has wrong width");
        rec.t.push_back(v[0]);
        rec.I_bar.push_back(v[1]);
        rec.phase.push_back(v[2]);
        rec.residual_l2.push_back(v[3]);
        for (size_t j = 0; j < rec.norms.size(); ++j) rec.dist[j].push_back(v[4 + j]);
    }
    if (!rec.I_bar.empty()) {
        rec.I0 = rec.I_bar.front();
        rec.IT = rec.I_bar.back();
    }
    return rec;
}

void write_stability_summary(std::ostream& os, const StabilityRecord& rec, const ExperimentConfig& cfg) {
    os << "key,value\n" << std::setprecision(12);
    os << "eps," << cfg.eps << "\nmu," << rec.mu << "\nI0," << rec.I0 << "\nIT," << rec.IT << "\ndrift," << rec.drift()
       << "\ndrift_over_mu2_sqrteps," << (rec.mu > 0 ? rec.drift() * std::sqrt(cfg.eps) / (rec.mu * rec.mu) : 0.0)
       << "\nmax_residual_over_mu," << rec.max_residual_ratio << "\nenergy_drift," << rec.energy_drift
       << "\nlocal_L2," << rec.local_L2 << '\n';
    for (size_t j = 0; j < rec.norms.size(); ++j)
        os << "L" << rec.norms[j].q_exp << "_l" << rec.norms[j].r_exp << ',' << rec.spacetime[j] << "\nL"
           << rec.norms[j].q_exp << "_l" << rec.norms[j].r_exp << "_last_decade," << rec.spacetime_decade[j] << '\n';
    for (size_t k = 0; k < rec.cauchy.size(); ++k) os << "cauchy_T/" << (1 << (k + 1)) << ',' << rec.cauchy[k] << '\n';
}

ExperimentConfig experiment_config_from(const Config& c) {
    ExperimentConfig e;
    e.eps = c.get("eps", e.eps);
    e.delta = c.get("delta", e.delta);
    e.mu = c.get("mu", e.mu);
    if (c.has("potential")) e.V = parse_potential(c.get("potential", std::string()), 8);
    e.I_label = c.get("I_label", e.I_label);
    e.N = c.get("N", e.N);
    e.eps_T = c.get("eps_T", e.eps_T);
    e.dt = c.get("dt", e.dt);
    e.scheme = parse_scheme(c.get("scheme", to_string(e.scheme)));
    e.sample_dt = c.get("sample_dt", e.sample_dt);
    if (c.has("norm_q") || c.has("norm_r")) {
        auto q = c.get_list("norm_q", {7.0});
        auto r = c.get_list("norm_r", {14.0});
        if (q.size() != r.size()) throw std::invalid_argument("norm_q and norm_r differ in length");
        e.norms.clear();
        for (size_t i = 0; i < q.size(); ++i) e.norms.push_back({q[i], r[i]});
    }
    e.local_s = c.get("local_s", e.local_s);
    std::string shape = c.get("shape", std::string("localized"));
    if (shape == "localized")
        e.shape = PerturbShape::localized;
    else if (shape == "spread")
        e.shape = PerturbShape::spread;
    else
        throw std::invalid_argument("unknown perturbation shape: " + shape);
    e.seed = static_cast<unsigned>(c.get("seed", static_cast<int>(e.seed)));
    e.family_N = c.get("family_N", e.family_N);
    e.family_nodes = c.get("family_nodes", e.family_nodes);
    e.family_width = c.get("family_width", e.family_width);
    e.harmonics = c.get("harmonics", e.harmonics);
    std::string proj = c.get("projection", std::string("l2"));
    if (proj == "l2")
        e.projection = Projection::l2;
    else if (proj == "symplectic")
        e.projection = Projection::symplectic;
    else
        throw std::invalid_argument("unknown projection: " + proj);
    return e;
}

}  // namespace breathers
