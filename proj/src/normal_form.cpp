#include "breathers/normal_form.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <iomanip>
#include <numbers>
#include <ostream>

#include <boost/math/tools/roots.hpp>
#include <boost/numeric/odeint.hpp>

namespace breathers {

namespace {

constexpr double kPi = std::numbers::pi;
const cplx kI(0.0, 1.0);

Monomial merge(const Monomial& a, const Monomial& b) {
    Monomial m;
    m.reserve(a.size() + b.size());
    std::merge(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(m));
    return m;
}

Monomial remove_one(const Monomial& a, std::uint8_t v) {
    Monomial m = a;
    m.erase(std::find(m.begin(), m.end(), v));
    return m;
}

Monomial conjugate(const Monomial& a) {
    Monomial m = a;
    for (auto& v : m) v ^= 1;
    std::sort(m.begin(), m.end());
    return m;
}

struct Prepared {
    const Monomial* m;
    const FourierCoef* c;
    FourierCoef dI, dA;
    bool hasI, hasA;
};

std::vector<Prepared> prepare(const GradedHamiltonian& f) {
    std::vector<Prepared> out;
    out.reserve(f.terms.size());
    for (const auto& [m, c] : f.terms) {
        Prepared p{&m, &c, {}, {}, !c.I_constant(), c.band > 0};
        if (p.hasI) p.dI = c.d_I(f.grid());
        if (p.hasA) p.dA = c.d_alpha();
        out.push_back(std::move(p));
    }
    return out;
}

}  // namespace

std::shared_ptr<const NFGrid> NFGrid::make(double I_lo, double I_hi, int nI, int M) {
    if (!(I_hi > I_lo)) throw std::invalid_argument("grid needs I_lo < I_hi");
    if (nI < 3) throw std::invalid_argument("grid needs at least 3 I nodes");
    if (M < 1) throw std::invalid_argument("Fourier cutoff must be >= 1");
    auto g = std::make_shared<NFGrid>();
    g->I_lo = I_lo;
    g->I_hi = I_hi;
    g->nI = nI;
    g->M = M;
    Eigen::VectorXd x(nI);
    for (int j = 0; j < nI; ++j) x[j] = -std::cos(kPi * j / (nI - 1));
    g->nodes = (I_lo + 0.5 * (x.array() + 1.0) * (I_hi - I_lo)).matrix();
    Eigen::MatrixXd D = Eigen::MatrixXd::Zero(nI, nI);
    auto cw = [&](int j) { return (j == 0 || j == nI - 1) ? 2.0 : 1.0; };
    for (int i = 0; i < nI; ++i) {
        for (int j = 0; j < nI; ++j) {
            if (i == j) continue;
            double sgn = ((i + j) % 2 == 0) ? 1.0 : -1.0;
            D(i, j) = cw(i) / cw(j) * sgn / (x[i] - x[j]);
        }
        D(i, i) = -D.row(i).sum();
    }
    g->D = D * (2.0 / (I_hi - I_lo));
    return g;
}

Eigen::RowVectorXd NFGrid::interp(double I) const {
    Eigen::RowVectorXd w(nI);
    for (int j = 0; j < nI; ++j) {
        if (I == nodes[j]) {
            w.setZero();
            w[j] = 1.0;
            return w;
        }
        double bw = (j % 2 == 0 ? 1.0 : -1.0) * ((j == 0 || j == nI - 1) ? 0.5 : 1.0);
        w[j] = bw / (I - nodes[j]);
    }
    return w / w.sum();
}

FourierCoef FourierCoef::zero(const NFGrid& g) { return {Eigen::MatrixXcd::Zero(g.nI, 2 * g.M + 1), 0}; }

FourierCoef FourierCoef::constant(const NFGrid& g, cplx v) {
    FourierCoef f = zero(g);
    f.c.col(g.M).setConstant(v);
    return f;
}

FourierCoef FourierCoef::of_I(const NFGrid& g, const Eigen::VectorXd& values) {
    FourierCoef f = zero(g);
    f.c.col(g.M) = values.cast<cplx>();
    return f;
}

bool FourierCoef::is_zero() const { return (c.array() == cplx(0.0)).all(); }

bool FourierCoef::I_constant() const {
    const int M = static_cast<int>(c.cols() - 1) / 2;
    for (int n = -band; n <= band; ++n) {
        auto col = c.col(n + M);
        for (Eigen::Index i = 1; i < col.size(); ++i)
            if (col[i] != col[0]) return false;
    }
    return true;
}

FourierCoef FourierCoef::d_alpha() const {
    FourierCoef f{Eigen::MatrixXcd::Zero(c.rows(), c.cols()), band};
    const int M = static_cast<int>(c.cols() - 1) / 2;
    for (int n = -band; n <= band; ++n) f.c.col(n + M) = c.col(n + M) * cplx(0.0, n);
    return f;
}

FourierCoef FourierCoef::d_I(const NFGrid& g) const {
    FourierCoef f{Eigen::MatrixXcd::Zero(c.rows(), c.cols()), band};
    for (int n = -band; n <= band; ++n) f.c.col(n + g.M) = g.D * c.col(n + g.M);
    return f;
}

FourierCoef FourierCoef::conj_reflect() const {
    FourierCoef f{Eigen::MatrixXcd::Zero(c.rows(), c.cols()), band};
    const int M = static_cast<int>(c.cols() - 1) / 2;
    for (int n = -band; n <= band; ++n) f.c.col(n + M) = c.col(-n + M).conjugate();
    return f;
}

double FourierCoef::majorant() const { return c.cwiseAbs().rowwise().sum().maxCoeff(); }

cplx FourierCoef::eval(const NFGrid& g, double I, double alpha) const {
    Eigen::RowVectorXcd modes = g.interp(I).cast<cplx>() * c;
    cplx s = 0.0;
    for (int n = -band; n <= band; ++n) s += modes[n + g.M] * std::exp(cplx(0.0, n * alpha));
    return s;
}

FourierCoef& FourierCoef::operator+=(const FourierCoef& o) {
    c += o.c;
    band = std::max(band, o.band);
    return *this;
}

FourierCoef& FourierCoef::operator*=(cplx s) {
    c *= s;
    return *this;
}

FourierCoef multiply(const FourierCoef& a, const FourierCoef& b, int M, double* dropped) {
    FourierCoef out{Eigen::MatrixXcd::Zero(a.c.rows(), a.c.cols()), std::min(M, a.band + b.band)};
    Eigen::VectorXd lost = Eigen::VectorXd::Zero(a.c.rows());
    for (int n1 = -a.band; n1 <= a.band; ++n1) {
        auto ca = a.c.col(n1 + M);
        for (int n2 = -b.band; n2 <= b.band; ++n2) {
            int n = n1 + n2;
            if (std::abs(n) <= M) {
                out.c.col(n + M) += ca.cwiseProduct(b.c.col(n2 + M));
            } else if (dropped) {
                lost += (ca.cwiseAbs().cwiseProduct(b.c.col(n2 + M).cwiseAbs()));
            }
        }
    }
    if (dropped) *dropped += lost.maxCoeff();
    return out;
}

int nf_site_index(int k, int N) {
    if (k == 0 || std::abs(k) > N) throw std::out_of_range("not an off-center site");
    return k < 0 ? k + N : k + N - 1;
}

int nf_site(int s, int N) { return s < N ? s - N : s - N + 1; }

GradedHamiltonian::GradedHamiltonian(std::shared_ptr<const NFGrid> grid, int N, int D)
    : grid_(std::move(grid)), N_(N), D_(D) {
    if (N < 1 || 4 * N > 255) throw std::invalid_argument("unsupported lattice size for the normal form");
    if (D < 1) throw std::invalid_argument("degree cutoff must be >= 1");
}

void GradedHamiltonian::add(const Monomial& m, const FourierCoef& c) {
    if (static_cast<int>(m.size()) > D_) {
        dropped += c.majorant();
        return;
    }
    if (c.is_zero()) return;
    auto it = terms.find(m);
    if (it == terms.end())
        terms.emplace(m, c);
    else
        it->second += c;
}

GradedHamiltonian& GradedHamiltonian::operator+=(const GradedHamiltonian& o) {
    for (const auto& [m, c] : o.terms) add(m, c);
    dropped += o.dropped;
    return *this;
}

GradedHamiltonian& GradedHamiltonian::operator-=(const GradedHamiltonian& o) {
    for (const auto& [m, c] : o.terms) {
        FourierCoef n = c;
        n *= -1.0;
        add(m, n);
    }
    dropped += o.dropped;
    return *this;
}

GradedHamiltonian& GradedHamiltonian::operator*=(cplx s) {
    for (auto& [m, c] : terms) c *= s;
    dropped *= std::abs(s);
    return *this;
}

GradedHamiltonian operator+(GradedHamiltonian a, const GradedHamiltonian& b) { return a += b; }
GradedHamiltonian operator-(GradedHamiltonian a, const GradedHamiltonian& b) { return a -= b; }
GradedHamiltonian operator*(cplx s, GradedHamiltonian a) { return a *= s; }

GradedHamiltonian GradedHamiltonian::empty_like() const { return GradedHamiltonian(grid_, N_, D_); }

GradedHamiltonian GradedHamiltonian::degree_range(int lo, int hi) const {
    GradedHamiltonian out = empty_like();
    for (const auto& [m, c] : terms) {
        int d = static_cast<int>(m.size());
        if (d >= lo && d <= hi) out.terms.emplace(m, c);
    }
    return out;
}

GradedHamiltonian GradedHamiltonian::degree_part(int d) const { return degree_range(d, d); }

const FourierCoef* GradedHamiltonian::find(const Monomial& m) const {
    auto it = terms.find(m);
    return it == terms.end() ? nullptr : &it->second;
}

cplx GradedHamiltonian::evaluate(double I, double alpha, const Eigen::VectorXcd& z, const Eigen::VectorXcd& w) const {
    cplx s = 0.0;
    for (const auto& [m, c] : terms) {
        cplx v = c.eval(*grid_, I, alpha);
        for (auto var : m) v *= (var & 1) ? w[var >> 1] : z[var >> 1];
        s += v;
    }
    return s;
}

double GradedHamiltonian::majorant() const {
    double m = 0.0;
    for (const auto& [mono, c] : terms) m = std::max(m, c.majorant());
    return m;
}

double GradedHamiltonian::reality_defect() const {
    double worst = 0.0;
    for (const auto& [m, c] : terms) {
        FourierCoef target = c.conj_reflect();
        const FourierCoef* partner = find(conjugate(m));
        if (partner) {
            target.c -= partner->c;
        }
        worst = std::max(worst, target.majorant());
    }
    return worst;
}

double GradedHamiltonian::scaled_norm(double R_xi) const {
    double a = 0.0, b = 0.0, x = 0.0;
    for (const auto& [m, c] : terms) {
        int d = static_cast<int>(m.size());
        double rd = std::pow(R_xi, d);
        if (c.band > 0) a += c.d_alpha().majorant() * rd;
        if (!c.I_constant()) b += c.d_I(*grid_).majorant() * rd;
        if (d > 0) x += d * c.majorant() * std::pow(R_xi, d - 2);
    }
    return std::max({a, b, x});
}

GradedHamiltonian nf_function(std::shared_ptr<const NFGrid> g, int N, int D, const FourierCoef& c) {
    GradedHamiltonian h(std::move(g), N, D);
    h.add({}, c);
    return h;
}

GradedHamiltonian nf_q(std::shared_ptr<const NFGrid> g, int N, int D, int k) {
    GradedHamiltonian h(g, N, D);
    int s = nf_site_index(k, N);
    h.add({var_z(s)}, FourierCoef::constant(*g, cplx(0.0, -1.0 / std::sqrt(2.0))));
    h.add({var_w(s)}, FourierCoef::constant(*g, cplx(0.0, 1.0 / std::sqrt(2.0))));
    return h;
}

GradedHamiltonian nf_p(std::shared_ptr<const NFGrid> g, int N, int D, int k) {
    GradedHamiltonian h(g, N, D);
    int s = nf_site_index(k, N);
    h.add({var_z(s)}, FourierCoef::constant(*g, 1.0 / std::sqrt(2.0)));
    h.add({var_w(s)}, FourierCoef::constant(*g, 1.0 / std::sqrt(2.0)));
    return h;
}

GradedHamiltonian nf_action(std::shared_ptr<const NFGrid> g, int N, int D) {
    FourierCoef c = FourierCoef::of_I(*g, g->nodes);
    return nf_function(g, N, D, c);
}

GradedHamiltonian multiply(const GradedHamiltonian& f, const GradedHamiltonian& g) {
    GradedHamiltonian out = f.empty_like();
    const int M = f.grid().M;
    for (const auto& [mf, cf] : f.terms)
        for (const auto& [mg, cg] : g.terms) {
            if (static_cast<int>(mf.size() + mg.size()) > f.D()) {
                out.dropped += cf.majorant() * cg.majorant();
                continue;
            }
            out.add(merge(mf, mg), multiply(cf, cg, M, &out.dropped));
        }
    return out;
}

GradedHamiltonian poisson_bracket(const GradedHamiltonian& f, const GradedHamiltonian& g) {
    GradedHamiltonian out = f.empty_like();
    const int M = f.grid().M;
    const int D = f.D();
    auto pf = prepare(f), pg = prepare(g);
    for (const auto& a : pf) {
        const int df = static_cast<int>(a.m->size());
        for (const auto& b : pg) {
            const int dg = static_cast<int>(b.m->size());
            // action-angle part
            bool t1 = a.hasI && b.hasA, t2 = a.hasA && b.hasI;
            if (t1 || t2) {
                if (df + dg > D) {
                    out.dropped += (t1 ? a.dI.majorant() * b.dA.majorant() : 0.0) +
                                   (t2 ? a.dA.majorant() * b.dI.majorant() : 0.0);
                } else {
                    FourierCoef c = FourierCoef::zero(f.grid());
                    if (t1) c += multiply(a.dI, b.dA, M, &out.dropped);
                    if (t2) {
                        FourierCoef s = multiply(a.dA, b.dI, M, &out.dropped);
                        s *= -1.0;
                        c += s;
                    }
                    out.add(merge(*a.m, *b.m), c);
                }
            }
            // transverse part
            if (df == 0 || dg == 0) continue;
            FourierCoef prod;
            bool have = false;
            for (size_t i = 0; i < a.m->size(); ++i) {
                std::uint8_t v = (*a.m)[i];
                if (i > 0 && (*a.m)[i - 1] == v) continue;
                std::uint8_t vb = v ^ 1;
                auto rg = std::equal_range(b.m->begin(), b.m->end(), vb);
                int cg = static_cast<int>(rg.second - rg.first);
                if (cg == 0) continue;
                int cf = static_cast<int>(std::count(a.m->begin(), a.m->end(), v));
                if (df + dg - 2 > D) {
                    out.dropped += cf * cg * a.c->majorant() * b.c->majorant();
                    continue;
                }
                if (!have) {
                    prod = multiply(*a.c, *b.c, M, &out.dropped);
                    have = true;
                }
                FourierCoef c = prod;
                double sgn = (v & 1) ? 1.0 : -1.0;
                c *= kI * (sgn * cf * cg);
                out.add(merge(remove_one(*a.m, v), remove_one(*b.m, vb)), c);
            }
        }
    }
    return out;
}

Parts split_parts(const GradedHamiltonian& f) {
    Parts p{f.degree_part(0), f.degree_part(1), f.degree_range(2, f.D()), FourierCoef::zero(f.grid())};
    if (const FourierCoef* c0 = p.f0.find({})) {
        p.mean.c.col(f.grid().M) = c0->c.col(f.grid().M);
    }
    return p;
}

GradedHamiltonian solve_cohomological(const Eigen::VectorXd& omega, const GradedHamiltonian& Psi, double floor,
                                      double* min_divisor) {
    const NFGrid& g = Psi.grid();
    if (omega.size() != g.nI) throw std::invalid_argument("omega must live on the I nodes");
    GradedHamiltonian chi = Psi.empty_like();
    double mind = std::numeric_limits<double>::infinity();
    for (const auto& [m, c] : Psi.terms) {
        if (m.size() > 1) throw std::invalid_argument("cohomological right-hand side must have degree <= 1");
        double shift = 0.0;
        if (m.size() == 1) shift = (m[0] & 1) ? -1.0 : 1.0;
        if (m.empty()) {
            double mean = c.c.col(g.M).cwiseAbs().maxCoeff();
            if (mean > 1e-13 * std::max(1.0, c.majorant()))
                throw std::invalid_argument("degree-0 right-hand side must have zero mean");
        }
        FourierCoef x{Eigen::MatrixXcd::Zero(g.nI, 2 * g.M + 1), c.band};
        for (int n = -c.band; n <= c.band; ++n) {
            if (m.empty() && n == 0) continue;
            for (int j = 0; j < g.nI; ++j) {
                double d = n * omega[j] + shift;
                if (std::abs(d) < floor)
                    throw ResonanceError("small divisor at n = " + std::to_string(n) + ": " + std::to_string(d), n);
                mind = std::min(mind, std::abs(d));
                x.c(j, n + g.M) = c.c(j, n + g.M) / (kI * d);
            }
        }
        chi.add(m, x);
    }
    if (min_divisor) *min_divisor = mind;
    return chi;
}

GradedHamiltonian cohomological_residual(const Eigen::VectorXd& hs, const GradedHamiltonian& chi,
                                         const GradedHamiltonian& Psi) {
    auto g = chi.grid_ptr();
    GradedHamiltonian Hlin = nf_function(g, chi.N(), chi.D(), FourierCoef::of_I(*g, hs));
    for (int s = 0; s < 2 * chi.N(); ++s) Hlin.add({var_z(s), var_w(s)}, FourierCoef::constant(*g, 1.0));
    return poisson_bracket(Hlin, chi) - Psi;
}

LieResult lie_transform(const GradedHamiltonian& H, const GradedHamiltonian& chi, int L) {
    for (const auto& [m, c] : chi.terms)
        if (m.size() > 1) throw std::invalid_argument("generator must have degree <= 1");
    LieResult r{H, 0.0, 0};
    GradedHamiltonian term = H;
    for (int l = 1; l <= L + 1; ++l) {
        term = poisson_bracket(chi, term);
        term *= 1.0 / l;
        if (l == L + 1) {
            r.remainder = term.majorant();
            break;
        }
        r.H += term;
        r.terms = l;
        if (term.terms.empty()) break;
    }
    return r;
}

InitialDecomposition build_initial(const ActionAngleChart& chart, double eps, const NormalFormConfig& cfg) {
    if (!chart.in_range(cfg.I_lo) || !chart.in_range(cfg.I_hi)) throw std::out_of_range("I interval outside chart");
    if (cfg.n_alpha < 2 * cfg.M + 2) throw std::invalid_argument("too few alpha nodes for the Fourier cutoff");
    auto g = NFGrid::make(cfg.I_lo, cfg.I_hi, cfg.nI, cfg.M);
    const int N = cfg.N, D = cfg.D, M = cfg.M;
    const PotentialSpec& V = chart.potential();
    InitialDecomposition init;
    init.eps = eps;
    init.hs0.resize(g->nI);
    init.q0 = FourierCoef::zero(*g);
    init.q0.band = M;
    const int na = cfg.n_alpha;
    namespace ode = boost::numeric::odeint;
    using state_t = std::array<double, 2>;
    auto rhs = [&](const state_t& s, state_t& ds, double) {
        ds[0] = -s[1] - V.dV(s[1]);
        ds[1] = s[0];
    };
    for (int j = 0; j < g->nI; ++j) {
        double E = chart.h0(g->nodes[j]);
        init.hs0[j] = E;
        double qp = turning_points(V, E).second;
        double T = period_of_energy(V, E);
        std::vector<double> times(na), qs;
        for (int k = 0; k < na; ++k) times[k] = T * k / na;
        state_t x{0.0, qp};
        ode::integrate_times(ode::make_controlled<ode::runge_kutta_fehlberg78<state_t>>(1e-14, 1e-14), rhs, x,
                             times.begin(), times.end(), T / na, [&](const state_t& s, double) { qs.push_back(s[1]); });
        double tail = 0.0;
        for (int n = -na / 2 + 1; n < na / 2; ++n) {
            cplx acc = 0.0;
            for (int k = 0; k < na; ++k) acc += qs[k] * std::exp(cplx(0.0, -2.0 * kPi * n * k / na));
            acc /= static_cast<double>(na);
            if (std::abs(n) <= M)
                init.q0.c(j, n + M) = acc;
            else
                tail += std::abs(acc);
        }
        init.q0_tail = std::max(init.q0_tail, tail);
    }
    if (init.q0_tail > cfg.tail_tol)
        throw std::runtime_error("Fourier tail of q_0 beyond the cutoff is " + std::to_string(init.q0_tail));

    init.H0 = nf_function(g, N, D, FourierCoef::of_I(*g, init.hs0));
    for (int s = 0; s < 2 * N; ++s) init.H0.add({var_z(s), var_w(s)}, FourierCoef::constant(*g, 1.0));

    auto q = [&](int k) {
        if (k == 0 || std::abs(k) > N) return GradedHamiltonian(g, N, D);
        return nf_q(g, N, D, k);
    };
    init.Z2 = GradedHamiltonian(g, N, D);
    for (int k = -N - 1; k <= N; ++k) {
        GradedHamiltonian d = q(k + 1) - q(k);
        if (d.terms.empty()) continue;
        init.Z2 += (0.5 * eps) * multiply(d, d);
    }
    for (int k = -N; k <= N; ++k) {
        if (k == 0) continue;
        GradedHamiltonian qk = q(k);
        for (const auto& [m, a] : V.terms) {
            if (m > D) continue;
            GradedHamiltonian pw = qk;
            for (int i = 1; i < m; ++i) pw = multiply(pw, qk);
            init.Z2 += cplx(a) * pw;
        }
    }
    GradedHamiltonian Q0 = nf_function(g, N, D, init.q0);
    init.R1 = (-eps) * multiply(Q0, q(-1) + q(1));
    init.R0 = cplx(eps) * multiply(Q0, Q0);
    init.full = init.H0 + init.Z2 + init.R1 + init.R0;
    return init;
}

GradedHamiltonian residual_part(const GradedHamiltonian& H, const Eigen::VectorXd& hs) {
    GradedHamiltonian R = H.degree_range(0, 1);
    FourierCoef h = FourierCoef::of_I(H.grid(), hs);
    h *= -1.0;
    R.add({}, h);
    return R;
}

double invariant_manifold_check(const GradedHamiltonian& H) {
    double m = 0.0;
    for (const auto& [mono, c] : H.terms)
        if (mono.size() == 1) m = std::max(m, c.majorant());
    return m;
}

double invariant_manifold_action_drift(const GradedHamiltonian& H) {
    const FourierCoef* c = H.find({});
    return c ? c->d_alpha().majorant() : 0.0;
}

NormalFormResult normalize(const InitialDecomposition& init, const NormalFormConfig& cfg) {
    if (cfg.r_max < 1) throw std::invalid_argument("r_max must be >= 1");
    NormalFormResult res;
    res.eps = init.eps;
    res.cfg = cfg;
    res.H = init.full;
    res.hs = init.hs0;
    res.quad0 = init.full.degree_part(2);
    const NFGrid& g = res.H.grid();
    const double R = std::sqrt(init.eps);
    auto report = [&](int step) {
        StepReport s;
        s.step = step;
        GradedHamiltonian rp = residual_part(res.H, res.hs);
        s.residual_norm = rp.scaled_norm(R);
        s.deg0_norm = rp.degree_part(0).scaled_norm(R);
        s.deg1_norm = rp.degree_part(1).scaled_norm(R);
        s.z_norm = (res.H.degree_part(2) - res.quad0).scaled_norm(R);
        s.invariant_defect = invariant_manifold_check(res.H);
        s.dropped = res.H.dropped;
        return s;
    };
    res.steps.push_back(report(0));
    for (int r = 1; r <= cfg.r_max; ++r) {
        Parts parts = split_parts(res.H);
        Eigen::VectorXd omega = g.D * res.hs;
        GradedHamiltonian Psi = res.H.empty_like();
        Eigen::VectorXd h_new = Eigen::VectorXd::Zero(g.nI);
        if (r == 1) {
            Psi = parts.f1;
        } else {
            GradedHamiltonian R0 = parts.f0;
            R0.add({}, [&] {
                FourierCoef h = FourierCoef::of_I(g, res.hs);
                h *= -1.0;
                return h;
            }());
            const FourierCoef* c0 = R0.find({});
            if (c0) h_new = c0->c.col(g.M).real();
            FourierCoef mean = FourierCoef::of_I(g, h_new);
            mean *= -1.0;
            R0.add({}, mean);
            // drop the exactly-cancelled mean column
            for (auto& [m, c] : R0.terms) c.c.col(g.M).setZero();
            Psi = R0;
            if (r >= 3) Psi += parts.f1;
        }
        double mind = 0.0;
        GradedHamiltonian chi = solve_cohomological(omega, Psi, cfg.divisor_floor, &mind);
        double cres = cohomological_residual(res.hs, chi, Psi).majorant();
        LieResult lr = lie_transform(res.H, chi, cfg.lie_order);
        res.H = std::move(lr.H);
        res.hs += h_new;
        res.generators.push_back(std::move(chi));
        StepReport s = report(r);
        s.min_divisor = mind;
        s.cohomological_residual = cres;
        s.lie_remainder = lr.remainder;
        s.h_norm = (g.D * h_new).cwiseAbs().maxCoeff();
        res.steps.push_back(s);
    }
    return res;
}

double normalized_frequency(const NormalFormResult& res, double I) {
    const NFGrid& g = res.H.grid();
    const FourierCoef* c0 = res.H.find({});
    if (!c0) throw std::runtime_error("normalized Hamiltonian has no degree-0 part");
    Eigen::VectorXd mean = c0->c.col(g.M).real();
    Eigen::VectorXd om = g.D * mean;
    return g.interp(I) * om;
}

double action_for_frequency(const NormalFormResult& res, double omega) {
    const NFGrid& g = res.H.grid();
    auto f = [&](double I) { return normalized_frequency(res, I) - omega; };
    double a = g.I_lo, b = g.I_hi;
    if (f(a) * f(b) > 0.0) throw std::out_of_range("frequency not attained on the normal-form interval");
    boost::math::tools::eps_tolerance<double> tol(50);
    std::uintmax_t it = 200;
    auto r = boost::math::tools::toms748_solve(f, a, b, tol, it);
    return 0.5 * (r.first + r.second);
}

void generator_flow(const GradedHamiltonian& chi, double& I, double& alpha, Eigen::VectorXcd& z, int steps) {
    const NFGrid& g = chi.grid();
    struct Term {
        int var;  // -1 for degree 0
        FourierCoef c, dI, dA;
    };
    std::vector<Term> ts;
    for (const auto& [m, c] : chi.terms) {
        if (m.size() > 1) throw std::invalid_argument("generator must have degree <= 1");
        ts.push_back({m.empty() ? -1 : m[0], c, c.d_I(g), c.d_alpha()});
    }
    const int ns = 2 * chi.N();
    if (z.size() != ns) throw std::invalid_argument("z has wrong length");
    // state: I, alpha, z
    auto field = [&](double I_, double a_, const Eigen::VectorXcd& z_, double& dI_, double& da_, Eigen::VectorXcd& dz) {
        cplx sI = 0.0, sa = 0.0;
        dz = Eigen::VectorXcd::Zero(ns);
        for (const auto& t : ts) {
            cplx xi = 1.0;
            if (t.var >= 0) xi = (t.var & 1) ? std::conj(z_[t.var >> 1]) : z_[t.var >> 1];
            sI -= t.dA.eval(g, I_, a_) * xi;
            sa += t.dI.eval(g, I_, a_) * xi;
            if (t.var >= 0 && (t.var & 1)) dz[t.var >> 1] += kI * t.c.eval(g, I_, a_);
        }
        dI_ = sI.real();
        da_ = sa.real();
    };
    const double h = 1.0 / steps;
    for (int i = 0; i < steps; ++i) {
        double k1I, k1a, k2I, k2a, k3I, k3a, k4I, k4a;
        Eigen::VectorXcd k1z, k2z, k3z, k4z;
        field(I, alpha, z, k1I, k1a, k1z);
        field(I + 0.5 * h * k1I, alpha + 0.5 * h * k1a, z + 0.5 * h * k1z, k2I, k2a, k2z);
        field(I + 0.5 * h * k2I, alpha + 0.5 * h * k2a, z + 0.5 * h * k2z, k3I, k3a, k3z);
        field(I + h * k3I, alpha + h * k3a, z + h * k3z, k4I, k4a, k4z);
        I += h / 6.0 * (k1I + 2 * k2I + 2 * k3I + k4I);
        alpha += h / 6.0 * (k1a + 2 * k2a + 2 * k3a + k4a);
        z += h / 6.0 * (k1z + 2 * k2z + 2 * k3z + k4z);
    }
}

namespace {

void push_back_point(const NormalFormResult& res, double& I, double& alpha, Eigen::VectorXcd& z) {
    z = Eigen::VectorXcd::Zero(2 * res.cfg.N);
    for (auto it = res.generators.rbegin(); it != res.generators.rend(); ++it) generator_flow(*it, I, alpha, z);
}

}  // namespace

std::pair<double, double> transformed_action_angle(const NormalFormResult& res, double I, double alpha) {
    Eigen::VectorXcd z;
    push_back_point(res, I, alpha, z);
    return {I, alpha};
}

LatticeState reconstruct_breather_from_nf(const NormalFormResult& res, const ActionAngleChart& chart, double I,
                                          double alpha, int N_out) {
    Eigen::VectorXcd z;
    push_back_point(res, I, alpha, z);
    LatticeState x(N_out, true);
    auto [p0, q0] = chart.to_cartesian(I, alpha);
    x.p[x.index(0)] = p0;
    x.q[x.index(0)] = q0;
    const int N = res.cfg.N;
    for (int s = 0; s < 2 * N; ++s) {
        int k = nf_site(s, N);
        if (std::abs(k) > N_out) continue;
        x.p[x.index(k)] = std::sqrt(2.0) * z[s].real();
        x.q[x.index(k)] = std::sqrt(2.0) * z[s].imag();
    }
    return x;
}

void write_normalization_csv(std::ostream& os, const NormalFormResult& res) {
    os << "step,residual_norm,deg0_norm,deg1_norm,h_norm,z_norm,min_divisor,cohomological_residual,invariant_defect,lie_remainder,"
          "dropped\n"
       << std::setprecision(12);
    for (const auto& s : res.steps)
        os << s.step << ',' << s.residual_norm << ',' << s.deg0_norm << ',' << s.deg1_norm << ',' << s.h_norm << ',' << s.z_norm << ',' << s.min_divisor << ','
           << s.cohomological_residual << ',' << s.invariant_defect << ',' << s.lie_remainder << ',' << s.dropped
           << '\n';
}

}  // namespace breathers
