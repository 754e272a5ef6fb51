#pragma once

#include <complex>
#include <cstdint>
#include <iosfwd>
#include <map>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "breathers/lattice.hpp"
#include "breathers/potential.hpp"

namespace breathers {

using cplx = std::complex<double>;

/// Chebyshev-Lobatto nodes in I and the Fourier cutoff in alpha shared by all coefficients.
struct NFGrid {
    double I_lo = 0.0, I_hi = 1.0;
    int nI = 0;
    int M = 0;
    Eigen::VectorXd nodes;
    Eigen::MatrixXd D;  // d/dI on nodal values

    static std::shared_ptr<const NFGrid> make(double I_lo, double I_hi, int nI, int M);

    /// Barycentric interpolation weights at I.
    Eigen::RowVectorXd interp(double I) const;
};

/// c(I, alpha) = sum_{|n| <= M} c_n(I) e^{i n alpha}; rows are I nodes, column n + M.
struct FourierCoef {
    Eigen::MatrixXcd c;
    int band = 0;  // c_n = 0 for |n| > band

    static FourierCoef zero(const NFGrid& g);
    static FourierCoef constant(const NFGrid& g, cplx v);
    static FourierCoef of_I(const NFGrid& g, const Eigen::VectorXd& values);

    bool is_zero() const;
    bool I_constant() const;
    FourierCoef d_alpha() const;
    FourierCoef d_I(const NFGrid& g) const;
    FourierCoef conj_reflect() const;  // conj(c_{-n})
    double majorant() const;             // max over nodes of sum_n |c_n|
    cplx eval(const NFGrid& g, double I, double alpha) const;
    Eigen::VectorXcd mode(int n) const { return c.col(n + (c.cols() - 1) / 2); }

    FourierCoef& operator+=(const FourierCoef& o);
    FourierCoef& operator*=(cplx s);
};

/// Truncated product; the discarded Fourier mass is added to *dropped.
FourierCoef multiply(const FourierCoef& a, const FourierCoef& b, int M, double* dropped = nullptr);

/// Sorted variable ids; variable 2s is z_s and 2s+1 is w_s, s the off-center site index
/// (layout of a LatticeState without site 0).
using Monomial = std::vector<std::uint8_t>;

int nf_site_index(int k, int N);
int nf_site(int s, int N);
inline std::uint8_t var_z(int s) { return static_cast<std::uint8_t>(2 * s); }
inline std::uint8_t var_w(int s) { return static_cast<std::uint8_t>(2 * s + 1); }

/// Fourier-in-alpha x polynomial-in-(z, w) Hamiltonian with I-dependent coefficients.
class GradedHamiltonian {
public:
    GradedHamiltonian() = default;
    GradedHamiltonian(std::shared_ptr<const NFGrid> grid, int N, int D);

    const NFGrid& grid() const { return *grid_; }
    std::shared_ptr<const NFGrid> grid_ptr() const { return grid_; }
    int N() const { return N_; }
    int D() const { return D_; }

    std::map<Monomial, FourierCoef> terms;
    double dropped = 0.0;  // majorant bound of everything cut by truncation

    void add(const Monomial& m, const FourierCoef& c);
    GradedHamiltonian& operator+=(const GradedHamiltonian& o);
    GradedHamiltonian& operator-=(const GradedHamiltonian& o);
    GradedHamiltonian& operator*=(cplx s);

    GradedHamiltonian empty_like() const;
    GradedHamiltonian degree_part(int d) const;
    GradedHamiltonian degree_range(int lo, int hi) const;
    const FourierCoef* find(const Monomial& m) const;

    /// Value at (I, alpha, z, w).
    cplx evaluate(double I, double alpha, const Eigen::VectorXcd& z, const Eigen::VectorXcd& w) const;

    /// Max majorant over all terms.
    double majorant() const;
    /// max majorant of c_m - conj(c_{bar m}(-n)); zero for a real Hamiltonian.
    double reality_defect() const;
    /// Norm of the Hamiltonian vector field with scales R_I = R_alpha = 1, R_xi given.
    double scaled_norm(double R_xi) const;

private:
    std::shared_ptr<const NFGrid> grid_;
    int N_ = 0, D_ = 0;
};

GradedHamiltonian operator+(GradedHamiltonian a, const GradedHamiltonian& b);
GradedHamiltonian operator-(GradedHamiltonian a, const GradedHamiltonian& b);
GradedHamiltonian operator*(cplx s, GradedHamiltonian a);

/// Degree-0 function of (I, alpha).
GradedHamiltonian nf_function(std::shared_ptr<const NFGrid> g, int N, int D, const FourierCoef& c);
/// q_k and p_k of an off-center site as degree-1 Hamiltonians.
GradedHamiltonian nf_q(std::shared_ptr<const NFGrid> g, int N, int D, int k);
GradedHamiltonian nf_p(std::shared_ptr<const NFGrid> g, int N, int D, int k);
/// I as a degree-0 Hamiltonian.
GradedHamiltonian nf_action(std::shared_ptr<const NFGrid> g, int N, int D);

GradedHamiltonian multiply(const GradedHamiltonian& f, const GradedHamiltonian& g);

/// {f, g} = d_I f d_alpha g - d_alpha f d_I g + i sum_k (d_{w_k} f d_{z_k} g - d_{z_k} f d_{w_k} g).
/// With this sign x' = {H, x} gives alpha' = dH/dI, z' = i dH/dw.
GradedHamiltonian poisson_bracket(const GradedHamiltonian& f, const GradedHamiltonian& g);

struct Parts {
    GradedHamiltonian f0, f1, f2;
    FourierCoef mean;  // n = 0 mode of f0
};

Parts split_parts(const GradedHamiltonian& f);

class ResonanceError : public std::runtime_error {
public:
    ResonanceError(const std::string& what, int n) : std::runtime_error(what), n_(n) {}
    int n() const { return n_; }

private:
    int n_;
};

/// Solve {hs(I) + sum z_k w_k, chi} = Psi for Psi of degree <= 1 with zero mean at degree 0.
/// omega holds dhs/dI on the I nodes. *min_divisor receives the smallest |n omega|, |n omega +- 1|.
GradedHamiltonian solve_cohomological(const Eigen::VectorXd& omega, const GradedHamiltonian& Psi,
                                      double floor = 1e-3, double* min_divisor = nullptr);

/// {hs + sum z w, chi} - Psi.
GradedHamiltonian cohomological_residual(const Eigen::VectorXd& hs, const GradedHamiltonian& chi,
                                         const GradedHamiltonian& Psi);

struct LieResult {
    GradedHamiltonian H;
    double remainder = 0.0;  // majorant of the first omitted term
    int terms = 0;
};

/// H o Phi^1_chi = sum_{l <= L} H_(l) / l!, H_(l) = {chi, H_(l-1)}.
LieResult lie_transform(const GradedHamiltonian& H, const GradedHamiltonian& chi, int L);

struct NormalFormConfig {
    int D = 4;
    int M = 32;
    int N = 8;
    int nI = 12;
    double I_lo = 0.35, I_hi = 0.45;
    int r_max = 2;
    int lie_order = 8;
    double divisor_floor = 1e-3;
    double tail_tol = 1e-10;
    int n_alpha = 256;
};

struct InitialDecomposition {
    GradedHamiltonian H0, Z2, R1, R0;
    GradedHamiltonian full;
    Eigen::VectorXd hs0;  // h0 on the I nodes
    FourierCoef q0;       // central coordinate q_0(I, alpha)
    double q0_tail = 0.0;
    double eps = 0.0;
};

InitialDecomposition build_initial(const ActionAngleChart& chart, double eps, const NormalFormConfig& cfg);

struct StepReport {
    int step = 0;
    double residual_norm = 0.0;  // degree 0 (minus hs) and degree 1 together
    double deg0_norm = 0.0;      // alpha-dependent and unabsorbed degree-0 part
    double deg1_norm = 0.0;      // xi-linear part
    double h_norm = 0.0;
    double z_norm = 0.0;
    double min_divisor = 0.0;
    double cohomological_residual = 0.0;
    double invariant_defect = 0.0;
    double lie_remainder = 0.0;
    double dropped = 0.0;
};

struct NormalFormResult {
    double eps = 0.0;
    NormalFormConfig cfg;
    Eigen::VectorXd hs;  // accumulated h on the I nodes
    GradedHamiltonian H;
    GradedHamiltonian quad0;  // quadratic part before normalization
    std::vector<GradedHamiltonian> generators;
    std::vector<StepReport> steps;  // steps[0] describes the initial Hamiltonian
};

NormalFormResult normalize(const InitialDecomposition& init, const NormalFormConfig& cfg);

/// Residual R = (degree-0 part - hs) + degree-1 part.
GradedHamiltonian residual_part(const GradedHamiltonian& H, const Eigen::VectorXd& hs);

/// max over sites of the majorant of the xi-component of X_H at xi = 0.
double invariant_manifold_check(const GradedHamiltonian& H);
/// max majorant of d_alpha of the degree-0 part (I-component of X_H at xi = 0).
double invariant_manifold_action_drift(const GradedHamiltonian& H);

/// d/dI of the alpha-mean of the degree-0 part of the normalized Hamiltonian.
double normalized_frequency(const NormalFormResult& res, double I);
/// Action with normalized_frequency(I) = omega, searched on the grid interval.
double action_for_frequency(const NormalFormResult& res, double omega);

/// Time-1 flow of a degree <= 1 generator applied to (I, alpha, z); w = conj(z).
void generator_flow(const GradedHamiltonian& chi, double& I, double& alpha, Eigen::VectorXcd& z, int steps = 16);

/// Push (I, alpha, xi = 0) of the normalized chart back to lattice coordinates on -N_out..N_out.
LatticeState reconstruct_breather_from_nf(const NormalFormResult& res, const ActionAngleChart& chart, double I,
                                          double alpha, int N_out);
/// Same, also returning the original-coordinate (I, alpha) of the central site before the lattice map.
std::pair<double, double> transformed_action_angle(const NormalFormResult& res, double I, double alpha);

void write_normalization_csv(std::ostream& os, const NormalFormResult& res);

}  // namespace breathers
