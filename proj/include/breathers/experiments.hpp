#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "breathers/breather.hpp"
#include "breathers/config.hpp"
#include "breathers/integrator.hpp"
#include "breathers/lattice.hpp"
#include "breathers/potential.hpp"

namespace breathers {

/// Breathers at fixed eps and varying period, each stored as a Fourier series in the orbit phase.
///
/// Phase phi = 2 pi t / T with phi = 0 at the p_0 = 0, q_0 > 0 section point.
class BreatherFamily {
public:
    BreatherFamily() = default;

    /// Continue `base` in the period over n_nodes Chebyshev nodes on [T(1 - rel_width), T(1 + rel_width)].
    static BreatherFamily build(const Breather& base, double rel_width, int n_nodes, int harmonics,
                                const BreatherOptions& opt = BreatherOptions());

    int N() const { return N_; }
    double eps() const { return eps_; }
    const PotentialSpec& potential() const { return V_; }
    const std::vector<double>& periods() const { return T_; }
    const std::vector<double>& actions() const { return I_; }
    double T_lo() const { return T_.front(); }
    double T_hi() const { return T_.back(); }

    /// Flat (p, q) family point and its derivatives in T and phi.
    Eigen::VectorXd point(double T, double phi, Eigen::VectorXd* dT = nullptr, Eigen::VectorXd* dphi = nullptr) const;
    double action(double T) const;
    double dT_dI(double T) const;

    /// Stored orbit samples of node j (n_samples per period).
    const std::vector<Eigen::VectorXd>& samples(int j) const { return samples_[j]; }

private:
    Eigen::RowVectorXd weights(double T, Eigen::RowVectorXd* dw) const;

    PotentialSpec V_;
    double eps_ = 0.0;
    int N_ = 0;
    int K_ = 0;
    std::vector<double> T_, I_, bw_;
    std::vector<Eigen::MatrixXcd> coef_;  // per node: dof x (K + 1), x(phi) = Re sum_n c_n e^{i n phi}
    std::vector<std::vector<Eigen::VectorXd>> samples_;
};

struct Modulation {
    double I_bar = 0.0;
    double T = 0.0;
    double phase = 0.0;
    double residual_l2 = 0.0;
    LatticeState residual;  // state - family point, on the state's lattice
    int iterations = 0;
};

enum class Projection {
    l2,          // l^2-closest family point
    symplectic,  // residual symplectically orthogonal to d_T and d_phi of the family
};

/// Family point matched to x over (period, phase). The l^2 fit is a coarse search over stored samples
/// followed by Gauss-Newton; a warm start (T, phase) skips the coarse search. The symplectic projection
/// starts from the l^2 fit and solves Omega(x - g, g_T) = Omega(x - g, g_phi) = 0 by Newton.
Modulation track_modulation(const LatticeState& x, const BreatherFamily& fam, const Modulation* warm = nullptr,
                            Projection proj = Projection::l2);

enum class PerturbShape { localized, spread };

/// Breather point plus a seeded random kick of exact l^2 norm mu, orthogonal to grad H, X_H and d_I b.
LatticeState perturb(const Breather& b, const BreatherFamily& fam, double mu, PerturbShape shape, unsigned seed,
                     int N_out, int support = 8);

struct ExperimentConfig {
    double eps = 0.05;
    double delta = 0.6;
    double mu = -1.0;  // negative: mu = eps^delta
    PotentialSpec V = PotentialSpec::monomial(8);
    double I_label = 0.4;
    int N = 2048;
    double eps_T = 100.0;  // horizon in slow time
    double dt = 0.01;
    Scheme scheme = Scheme::yoshida4;
    double sample_dt = 1.0;
    std::vector<AdmissiblePair> norms = {{7.0, 14.0}};
    double local_s = 2.0;  // weight of the l^inf_{-s} L^2 residual norm
    PerturbShape shape = PerturbShape::localized;
    unsigned seed = 1;
    int family_N = 32;
    int family_nodes = 9;
    double family_width = 0.04;
    int harmonics = 32;
    Projection projection = Projection::l2;

    double mu_value() const;
    double horizon() const { return eps_T / eps; }
    void validate() const;
};

struct StabilityRecord {
    std::vector<double> t, I_bar, phase, residual_l2;
    std::vector<std::vector<double>> dist;  // dist[j][i]: l^r distance for norms[j]
    std::vector<AdmissiblePair> norms;
    std::vector<double> spacetime;          // L^q_{eps t} l^r over [0, T]
    std::vector<double> spacetime_decade;   // norm on [0, T] minus norm on [0, T/10]
    double local_L2 = 0.0;                  // sup_k <k>^{-s} (int |xi_k|^2 eps dt)^{1/2}
    double I0 = 0.0, IT = 0.0;
    double mu = 0.0;
    double energy_drift = 0.0;
    std::vector<double> cauchy;  // |I(2T') - I(T')| for T' = T/2, T/4, ...
    double max_residual_ratio = 0.0;  // max_t |xi|_2 / mu
    double drift() const { return std::abs(IT - I0); }
};

/// Breather at (I_label, eps) on family_N sites with the same seed and options used by run_stability.
Breather stability_breather(const ExperimentConfig& cfg, const BreatherOptions& opt = BreatherOptions());

StabilityRecord run_stability(const ExperimentConfig& cfg, const Breather& b, const BreatherFamily& fam);
StabilityRecord run_stability(const ExperimentConfig& cfg);

/// Trapezoid (sum eps dt |f|^q)^{1/q} over samples in [t_from, t_to]; q = inf gives the max.
double slow_time_norm(const std::vector<double>& t, const std::vector<double>& f, double q, double eps,
                      double t_from = 0.0, double t_to = kInf);

/// Time series CSV and a key,value summary.
void write_stability_csv(std::ostream& os, const StabilityRecord& rec);
StabilityRecord read_stability_csv(std::istream& is);
void write_stability_summary(std::ostream& os, const StabilityRecord& rec, const ExperimentConfig& cfg);

ExperimentConfig experiment_config_from(const Config& c);

}  // namespace breathers
