#include "breathers/integrator.hpp"

#include <array>
#include <cmath>
#include <iomanip>
#include <ostream>
#include <stdexcept>

namespace breathers {

namespace {

// Yoshida triple-jump weights.
const double kW1 = 1.0 / (2.0 - std::cbrt(2.0));
const double kW0 = -std::cbrt(2.0) * kW1;

struct Stage {
    std::vector<double> rot;   // rotation angles, one more than kicks
    std::vector<double> kick;  // kick lengths
};

Stage stages(double dt, Scheme scheme) {
    if (scheme == Scheme::strang2) return {{0.5 * dt, 0.5 * dt}, {dt}};
    return {{0.5 * kW1 * dt, 0.5 * (kW1 + kW0) * dt, 0.5 * (kW0 + kW1) * dt, 0.5 * kW1 * dt},
            {kW1 * dt, kW0 * dt, kW1 * dt}};
}

void rotate(Eigen::Ref<Eigen::VectorXd> p, Eigen::Ref<Eigen::VectorXd> q, double c, double s) {
    for (Eigen::Index i = 0; i < p.size(); ++i) {
        double pi = p[i], qi = q[i];
        p[i] = c * pi - s * qi;
        q[i] = c * qi + s * pi;
    }
}

template <class Mat>
void rotate_cols(Mat& P, Mat& Q, double c, double s) {
    Mat Pn = c * P - s * Q;
    Q = c * Q + s * P;
    P = std::move(Pn);
}

void kick(LatticeState& x, const PotentialSpec& V, double eps, double h) {
    const int n = x.size();
    const int gap = x.include_site0 ? -1 : x.N;
    const auto& q = x.q;
    for (int i = 0; i < n; ++i) {
        double left = (i > 0 && i != gap) ? q[i - 1] : 0.0;
        double right = (i + 1 < n && i + 1 != gap) ? q[i + 1] : 0.0;
        x.p[i] += h * (-V.dV(q[i]) + eps * (left + right - 2.0 * q[i]));
    }
}

void kick_tangent(const LatticeState& x, Eigen::MatrixXd& P, const Eigen::MatrixXd& Q, const PotentialSpec& V,
                  double eps, double h) {
    const int n = x.size();
    const int gap = x.include_site0 ? -1 : x.N;
    Eigen::VectorXd d2(n);
    for (int i = 0; i < n; ++i) d2[i] = -V.d2V(x.q[i]) - 2.0 * eps;
    for (Eigen::Index c = 0; c < P.cols(); ++c) {
        for (int i = 0; i < n; ++i) {
            double left = (i > 0 && i != gap) ? Q(i - 1, c) : 0.0;
            double right = (i + 1 < n && i + 1 != gap) ? Q(i + 1, c) : 0.0;
            P(i, c) += h * (d2[i] * Q(i, c) + eps * (left + right));
        }
    }
}

}  // namespace

Scheme parse_scheme(const std::string& s) {
    if (s == "strang2") return Scheme::strang2;
    if (s == "yoshida4") return Scheme::yoshida4;
    throw std::invalid_argument("unknown scheme: " + s);
}

std::string to_string(Scheme s) { return s == Scheme::strang2 ? "strang2" : "yoshida4"; }

void IntegratorConfig::validate(double eps) const {
    if (!(dt > 0.0)) throw std::invalid_argument("dt must be positive");
    if (dt * std::sqrt(1.0 + 4.0 * std::max(eps, 0.0)) > 0.5) throw std::invalid_argument("dt violates stability guard");
    if (stride < 1) throw std::invalid_argument("stride must be >= 1");
    if (t_final < 0.0) throw std::invalid_argument("t_final must be >= 0");
}

void step_inplace(LatticeState& x, const PotentialSpec& V, double eps, double dt, Scheme scheme) {
    Stage st = stages(dt, scheme);
    for (size_t j = 0; j < st.kick.size(); ++j) {
        rotate(x.p, x.q, std::cos(st.rot[j]), std::sin(st.rot[j]));
        kick(x, V, eps, st.kick[j]);
    }
    rotate(x.p, x.q, std::cos(st.rot.back()), std::sin(st.rot.back()));
}

LatticeState step(const LatticeState& x, const PotentialSpec& V, double eps, double dt, Scheme scheme) {
    LatticeState y = x;
    step_inplace(y, V, eps, dt, scheme);
    return y;
}

void step_tangent(LatticeState& x, Eigen::MatrixXd& P, Eigen::MatrixXd& Q, const PotentialSpec& V, double eps,
                  double dt, Scheme scheme) {
    Stage st = stages(dt, scheme);
    for (size_t j = 0; j < st.kick.size(); ++j) {
        double c = std::cos(st.rot[j]), s = std::sin(st.rot[j]);
        rotate(x.p, x.q, c, s);
        rotate_cols(P, Q, c, s);
        kick_tangent(x, P, Q, V, eps, st.kick[j]);
        kick(x, V, eps, st.kick[j]);
    }
    double c = std::cos(st.rot.back()), s = std::sin(st.rot.back());
    rotate(x.p, x.q, c, s);
    rotate_cols(P, Q, c, s);
}

LatticeState flow(const LatticeState& x, const PotentialSpec& V, double eps, double t, double dt_max, Scheme scheme) {
    if (t == 0.0) return x;
    int n = static_cast<int>(std::ceil(std::abs(t) / dt_max - 1e-12));
    double h = t / n;
    LatticeState y = x;
    for (int i = 0; i < n; ++i) step_inplace(y, V, eps, h, scheme);
    return y;
}

FlowWithMonodromy flow_with_monodromy(const LatticeState& x, const PotentialSpec& V, double eps, double t,
                                      double dt_max, Scheme scheme) {
    const int n = x.size();
    Eigen::MatrixXd P = Eigen::MatrixXd::Zero(n, 2 * n), Q = Eigen::MatrixXd::Zero(n, 2 * n);
    P.leftCols(n).setIdentity();
    Q.rightCols(n).setIdentity();
    LatticeState y = x;
    if (t != 0.0) {
        int steps = static_cast<int>(std::ceil(std::abs(t) / dt_max - 1e-12));
        double h = t / steps;
        for (int i = 0; i < steps; ++i) step_tangent(y, P, Q, V, eps, h, scheme);
    }
    Eigen::MatrixXd M(2 * n, 2 * n);
    M.topRows(n) = P;
    M.bottomRows(n) = Q;
    return {std::move(y), std::move(M)};
}

const std::vector<double>& TrajectoryRecord::series(const std::string& name) const {
    for (size_t j = 0; j < names.size(); ++j)
        if (names[j] == name) return values[j];
    throw std::out_of_range("no observable named " + name);
}

TrajectoryRecord evolve(const LatticeState& x0, const PotentialSpec& V, double eps, const IntegratorConfig& config,
                        const std::vector<Observer>& observers, bool keep_states,
                        const std::function<void(double, const LatticeState&)>& on_sample) {
    config.validate(eps);
    TrajectoryRecord rec;
    for (const auto& o : observers) rec.names.push_back(o.name);
    rec.values.resize(observers.size());
    int steps = static_cast<int>(std::llround(config.t_final / config.dt));
    LatticeState x = x0;
    auto sample = [&](int i) {
        double t = i * config.dt;
        rec.t.push_back(t);
        for (size_t j = 0; j < observers.size(); ++j) rec.values[j].push_back(observers[j].f(t, x));
        if (keep_states) rec.states.push_back(x);
        if (on_sample) on_sample(t, x);
    };
    sample(0);
    for (int i = 1; i <= steps; ++i) {
        step_inplace(x, V, eps, config.dt, config.scheme);
        if (i % config.stride == 0 || i == steps) {
            if (!x.p.allFinite() || !x.q.allFinite() || x.q.cwiseAbs().maxCoeff() > 1e6)
                throw std::runtime_error("integration blew up at t = " + std::to_string(i * config.dt));
            sample(i);
        }
    }
    return rec;
}

void write_record_csv(std::ostream& os, const TrajectoryRecord& rec) {
    os << "t,observable,value\n" << std::setprecision(17);
    for (size_t i = 0; i < rec.t.size(); ++i)
        for (size_t j = 0; j < rec.names.size(); ++j) os << rec.t[i] << ',' << rec.names[j] << ',' << rec.values[j][i] << '\n';
}

}  // namespace breathers
