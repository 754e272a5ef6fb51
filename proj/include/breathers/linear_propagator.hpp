#pragma once

#include <complex>
#include <memory>
#include <vector>

#include <Eigen/Dense>

#include "breathers/lattice.hpp"

namespace breathers {

using cplx = std::complex<double>;

/// nu(theta) = sqrt(1 + 4 eps sin^2(theta/2)).
double nu(double eps, double theta);
double nu_prime(double eps, double theta);
double nu_second(double eps, double theta);

/// Exact Fourier propagator of the linear chain on the ring of size 2N+2.
///
/// A skew-symmetric sequence on -N..N is an odd sequence on the ring, so
/// the ring flow reproduces the Dirichlet chain.
class LinearPropagator {
public:
    LinearPropagator(int N, double eps);
    ~LinearPropagator();
    LinearPropagator(const LinearPropagator&) = delete;
    LinearPropagator& operator=(const LinearPropagator&) = delete;

    int N() const { return N_; }
    double eps() const { return eps_; }
    int ring_size() const { return M_; }

    LatticeState propagate(const LatticeState& x, double t) const;

    /// Fourier amplitudes on theta_j = 2 pi j / M, j = 0..M/2.
    void forward(const Eigen::VectorXd& seq, Eigen::VectorXcd& hat) const;
    void backward(const Eigen::VectorXcd& hat, Eigen::VectorXd& seq) const;
    const Eigen::VectorXd& nu_grid() const { return nu_; }

private:
    struct Plans;
    int N_, M_;
    double eps_;
    Eigen::VectorXd nu_;
    std::unique_ptr<Plans> plans_;
};

LatticeState propagate_whole_chain(const LatticeState& x, double t, double eps);

/// Flow of the linear Hamiltonian on the two half-chains (site 0 pinned).
LatticeState propagate_HL(const LatticeState& x, double t, double eps);

/// Energy of the half-chain system: <p;p> + <q;Bq> with B = 1 - eps Delta, q_0 = 0.
double modified_energy(const LatticeState& x, double eps);

/// Forced linear flow u' = A u + F with u(0) = 0, trapezoid in time on a uniform grid.
std::vector<LatticeState> duhamel(const std::vector<LatticeState>& forcing, double dt, double eps);

struct DecayFit {
    double slope = 0.0;
    double intercept = 0.0;
    double r2 = 0.0;
    std::vector<double> eps_t;
    std::vector<double> norms;
};

/// Least-squares slope of log norm against log(eps t) over the given samples.
DecayFit measure_decay(const LatticeState& x0, double eps, const NormSpec& metric, const std::vector<double>& eps_t);

/// Compact skew datum used by the decay measurements: q_k = sign(k) exp(-k^2/8), |k| <= 5.
LatticeState compact_skew_datum(int N);

enum class VdcInterval { I1, I2, full };

/// Sub-intervals of [-pi, pi]; I2 surrounds the inflection points of nu.
std::vector<std::pair<double, double>> vdc_segments(VdcInterval which);

/// Composite Gauss-Legendre value of int_I exp(i lambda (nu(theta) + rho theta)) dtheta.
cplx oscillatory_integral(double rho, double lambda, double eps, VdcInterval which, bool check = true);

struct VdcResult {
    std::vector<double> lambda;  // in units of eps t
    std::vector<double> sup_I1, sup_I2;
    std::vector<double> rho_I1, rho_I2;
    double slope_I1 = 0.0, slope_I2 = 0.0;
};

/// sup over rho of |oscillatory_integral(rho, t)|: FFT scan in rho, then local refinement.
double vdc_sup(double t, double eps, VdcInterval which, double* argmax = nullptr);

/// Per-interval sups at t = lambda / eps and fitted slopes against lambda.
/// An empty rho grid means the refined scan of vdc_sup.
VdcResult van_der_corput_check(double eps, const std::vector<double>& lambda,
                               const std::vector<double>& rho_grid = {});

/// theta(nu~) solving 2 - 2 cos theta = nu~ with -pi <= Re theta <= pi and Im theta < 0.
cplx resolvent_theta(cplx nut);

/// Kernel of (-Delta - nu~)^{-1} on the infinite lattice.
cplx resolvent_kernel(cplx nut, long j, long k);

/// Boundary value from above (+1) or below (-1) of the kernel for real nu~ in (0, 4).
cplx resolvent_kernel_limit(double nut, int sign, long j, long k);

/// Apply the kernel to a finitely supported sequence y (sites -Ny..Ny), output on -K..K.
Eigen::VectorXcd resolvent_apply(cplx nut, const Eigen::VectorXcd& y, int K);
Eigen::VectorXcd resolvent_limit_apply(double nut, int sign, const Eigen::VectorXcd& y, int K);

/// (B - nu)^{-1} y = (1/eps) R_{-Delta}((nu - 1)/eps) y.
Eigen::VectorXcd resolvent_B(cplx nu_, double eps, const Eigen::VectorXcd& y, int K);

/// Dense truncated (-Delta - nu~) on sites -N..N with Dirichlet closure.
Eigen::MatrixXcd truncated_minus_laplacian(int N, cplx shift);

/// -1/2 sum_l |k - l| q_l on -K..K.
Eigen::VectorXd puiseux_leading(const Eigen::VectorXd& q, int K);

struct PuiseuxResult {
    std::vector<double> nut;
    std::vector<double> error;
    double slope = 0.0;
};

/// Error of the leading Puiseux term in l^2_{-s} for a skew sequence q on -Nq..Nq.
PuiseuxResult puiseux_leading_check(const Eigen::VectorXd& q, const std::vector<double>& nut, double s = 2.0,
                                    int K = 40000);

/// Cauchy differences |R(nu~ + i mu) q - R^+(nu~) q| in l^2_{-s} for each mu.
std::vector<double> limiting_absorption_check(double nut, const Eigen::VectorXd& q, const std::vector<double>& mus,
                                              double s = 2.0, int K = 4000);

struct Trajectory {
    double dt = 0.0;  // physical time step
    std::vector<LatticeState> states;
};

Trajectory sample_linear_flow(const LatticeState& x0, double eps, double t_final, int n_samples);

/// (int ||xi(t)||_{l^r_s}^q eps dt)^{1/q}; q = inf gives the sup.
double spacetime_norm(const Trajectory& traj, double q_exp, double r_exp, double eps,
                      const WeightSpec& w = WeightSpec::none());
/// sup_k <k>^{-s} (int (p_k^2 + q_k^2) eps dt)^{1/2}.
double weighted_linf_L2(const Trajectory& traj, double s, double eps);

struct SpTempResult {
    double lhs = 0.0, rhs = 0.0, constant = 0.0;
    bool holds = false;
};

/// ||q||_{L^2_t l^inf_{-s}} <= sqrt(C) ||q||_{l^inf_{-s'} L^2_t}, C = sum_n <n>^{-2(s - s')}.
SpTempResult sp_temp_check(const Trajectory& traj, double s, double s_prime);

}  // namespace breathers
