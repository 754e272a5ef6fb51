#include "breathers/lattice.hpp"

#include <cmath>
#include <iomanip>
#include <istream>
#include <numbers>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <vector>

namespace breathers {

LatticeState::LatticeState(int N_, bool with0) : N(N_), include_site0(with0) {
    if (N_ < 1) throw std::invalid_argument("lattice needs N >= 1");
    int n = 2 * N_ + (with0 ? 1 : 0);
    p = Eigen::VectorXd::Zero(n);
    q = Eigen::VectorXd::Zero(n);
}

bool LatticeState::has_site(int k) const { return k >= -N && k <= N && (include_site0 || k != 0); }

int LatticeState::index(int k) const {
    if (!has_site(k)) throw std::out_of_range("site " + std::to_string(k) + " not on lattice");
    if (include_site0 || k < 0) return k + N;
    return k + N - 1;
}

int LatticeState::site(int i) const {
    if (include_site0) return i - N;
    return i < N ? i - N : i - N + 1;
}

void LatticeState::check() const {
    int n = 2 * N + (include_site0 ? 1 : 0);
    if (p.size() != n || q.size() != n) throw std::invalid_argument("inconsistent lattice state lengths");
}

Eigen::VectorXd LatticeState::flat() const {
    Eigen::VectorXd x(2 * size());
    x << p, q;
    return x;
}

LatticeState LatticeState::from_flat(const Eigen::VectorXd& x, int N, bool with0) {
    LatticeState s(N, with0);
    int n = s.size();
    if (x.size() != 2 * n) throw std::invalid_argument("flat vector has wrong length");
    s.p = x.head(n);
    s.q = x.tail(n);
    return s;
}

LatticeState& LatticeState::operator+=(const LatticeState& o) {
    if (o.N != N || o.include_site0 != include_site0) throw std::invalid_argument("lattice layouts differ");
    p += o.p;
    q += o.q;
    return *this;
}

LatticeState& LatticeState::operator-=(const LatticeState& o) {
    if (o.N != N || o.include_site0 != include_site0) throw std::invalid_argument("lattice layouts differ");
    p -= o.p;
    q -= o.q;
    return *this;
}

LatticeState& LatticeState::operator*=(double a) {
    p *= a;
    q *= a;
    return *this;
}

LatticeState operator+(LatticeState a, const LatticeState& b) { return a += b; }
LatticeState operator-(LatticeState a, const LatticeState& b) { return a -= b; }
LatticeState operator*(double s, LatticeState a) { return a *= s; }

LatticeState resize_lattice(const LatticeState& x, int N_new) {
    LatticeState y(N_new, x.include_site0);
    for (int i = 0; i < y.size(); ++i) {
        int k = y.site(i);
        y.p[i] = x.p_at(k);
        y.q[i] = x.q_at(k);
    }
    return y;
}

LatticeState drop_site0(const LatticeState& x) {
    LatticeState y(x.N, false);
    for (int i = 0; i < y.size(); ++i) {
        int k = y.site(i);
        y.p[i] = x.p_at(k);
        y.q[i] = x.q_at(k);
    }
    return y;
}

LatticeState with_site0(const LatticeState& x) {
    LatticeState y(x.N, true);
    for (int i = 0; i < y.size(); ++i) {
        int k = y.site(i);
        y.p[i] = x.p_at(k);
        y.q[i] = x.q_at(k);
    }
    return y;
}

WeightSpec WeightSpec::expo(int sign, double beta) {
    if (!(beta > 0.0)) throw std::invalid_argument("beta must be positive");
    if (sign != 1 && sign != -1) throw std::invalid_argument("sign must be +1 or -1");
    return {Kind::exponential, 0.0, sign, beta};
}

bool is_admissible(const AdmissiblePair& pair) {
    if (!(pair.q_exp >= 6.0) || !(pair.r_exp >= 2.0)) return false;
    double lhs = 1.0 / pair.q_exp + 1.0 / (3.0 * pair.r_exp);
    return lhs <= 1.0 / 6.0 + 1e-15;
}

double japanese_bracket(int k) { return std::sqrt(1.0 + static_cast<double>(k) * k); }

Eigen::VectorXd laplacian(const Eigen::VectorXd& q, int N, bool with0) {
    const int n = static_cast<int>(q.size());
    Eigen::VectorXd d(n);
    // without site 0 the halves [0, N) and [N, 2N) do not talk to each other
    const int gap = with0 ? -1 : N;
    for (int i = 0; i < n; ++i) {
        double left = (i > 0 && i != gap) ? q[i - 1] : 0.0;
        double right = (i + 1 < n && i + 1 != gap) ? q[i + 1] : 0.0;
        d[i] = left + right - 2.0 * q[i];
    }
    return d;
}

Eigen::VectorXd laplacian(const LatticeState& x) { return laplacian(x.q, x.N, x.include_site0); }

double hamiltonian(const LatticeState& x, const PotentialSpec& V, double eps) {
    x.check();
    double h = 0.0;
    for (int i = 0; i < x.size(); ++i) h += 0.5 * (x.p[i] * x.p[i] + x.q[i] * x.q[i]) + V.V(x.q[i]);
    double c = 0.0;
    for (int k = -x.N - 1; k <= x.N; ++k) {
        double d = x.q_at(k + 1) - x.q_at(k);
        c += d * d;
    }
    return h + 0.5 * eps * c;
}

LatticeState vector_field(const LatticeState& x, const PotentialSpec& V, double eps) {
    x.check();
    LatticeState f(x.N, x.include_site0);
    Eigen::VectorXd lap = laplacian(x);
    for (int i = 0; i < x.size(); ++i) {
        f.p[i] = -x.q[i] - V.dV(x.q[i]) + eps * lap[i];
        f.q[i] = x.p[i];
    }
    return f;
}

LatticeState gradient(const LatticeState& x, const PotentialSpec& V, double eps) {
    LatticeState f = vector_field(x, V, eps);
    LatticeState g(x.N, x.include_site0);
    g.p = f.q;
    g.q = -f.p;
    return g;
}

namespace {

// r-th power sum (or max, or squared exponential sum), combined by norm()
double partial_norm(const Eigen::VectorXd& v, const LatticeState& layout, double r_exp, const WeightSpec& w) {
    if (w.kind == WeightSpec::Kind::exponential) {
        double s = 0.0;
        for (int i = 0; i < v.size(); ++i)
            s += std::exp(w.sign * w.beta * std::abs(layout.site(i))) * v[i] * v[i];
        return s;
    }
    if (!(r_exp >= 1.0)) throw std::invalid_argument("norm exponent must be >= 1");
    if (std::isinf(r_exp)) {
        double m = 0.0;
        for (int i = 0; i < v.size(); ++i) m = std::max(m, std::abs(v[i]) * std::pow(japanese_bracket(layout.site(i)), w.s));
        return m;
    }
    double s = 0.0;
    for (int i = 0; i < v.size(); ++i)
        s += std::pow(std::abs(v[i]) * std::pow(japanese_bracket(layout.site(i)), w.s), r_exp);
    return s;
}

}  // namespace

double norm(const LatticeState& x, double r_exp, const WeightSpec& w) {
    x.check();
    double a = partial_norm(x.p, x, r_exp, w), b = partial_norm(x.q, x, r_exp, w);
    if (w.kind == WeightSpec::Kind::exponential) return std::sqrt(a + b);
    if (std::isinf(r_exp)) return std::max(a, b);
    return std::pow(a + b, 1.0 / r_exp);
}

double angle_gap(double a, double b) {
    constexpr double two_pi = 2.0 * std::numbers::pi;
    double d = std::fmod(std::abs(a - b), two_pi);
    return std::min(d, two_pi - d);
}

double distance(const Zeta& a, const Zeta& b, const NormSpec& metric) {
    double dI = std::abs(a.I - b.I);
    double da = angle_gap(a.alpha, b.alpha);
    double dx = norm(a.xi - b.xi, metric.r_exp, metric.weight);
    return std::max({dI, da, dx});
}

LatticeState skew_symmetrize(const LatticeState& x) {
    if (!x.include_site0) throw std::invalid_argument("skew_symmetrize needs site 0");
    LatticeState y(x.N, true);
    for (int k = -x.N; k <= x.N; ++k) {
        y.p[y.index(k)] = 0.5 * (x.p_at(k) - x.p_at(-k));
        y.q[y.index(k)] = 0.5 * (x.q_at(k) - x.q_at(-k));
    }
    return y;
}

bool check_skew(const LatticeState& x) {
    if (!x.include_site0) return false;
    for (int k = 0; k <= x.N; ++k) {
        if (x.p_at(k) != -x.p_at(-k) || x.q_at(k) != -x.q_at(-k)) return false;
    }
    return true;
}

void write_state_csv(std::ostream& os, const LatticeState& x) {
    os << "k,p_k,q_k\n" << std::setprecision(17);
    for (int i = 0; i < x.size(); ++i) os << x.site(i) << ',' << x.p[i] << ',' << x.q[i] << '\n';
}

LatticeState read_state_csv(std::istream& is) {
    std::string line;
    // leading '#' lines carry metadata, then the header row
    while (std::getline(is, line) && !line.empty() && line[0] == '#') {
    }
    std::vector<int> ks;
    std::vector<double> ps, qs;
    while (std::getline(is, line)) {
        if (line.empty() || line[0] == '#') continue;
        std::stringstream ss(line);
        std::string a, b, c;
        std::getline(ss, a, ',');
        std::getline(ss, b, ',');
        std::getline(ss, c, ',');
        ks.push_back(std::stoi(a));
        ps.push_back(std::stod(b));
        qs.push_back(std::stod(c));
    }
    if (ks.empty()) throw std::runtime_error("empty state csv");
    int N = -ks.front();
    bool with0 = static_cast<int>(ks.size()) == 2 * N + 1;
    LatticeState x(N, with0);
    if (x.size() != static_cast<int>(ks.size())) throw std::runtime_error("state csv has inconsistent sites");
    for (size_t i = 0; i < ks.size(); ++i) {
        x.p[x.index(ks[i])] = ps[i];
        x.q[x.index(ks[i])] = qs[i];
    }
    return x;
}

}  // namespace breathers
