#pragma once

#include <complex>
#include <iosfwd>
#include <vector>

#include <Eigen/Dense>

#include "breathers/lattice.hpp"
#include "breathers/potential.hpp"

namespace breathers {

struct BreatherOptions {
    double dt = 0.0015;         // state flows; the period is split into equal steps
    double dt_jacobian = 0.01;  // monodromy for the Newton matrix and Floquet diagnostics
    double tol = 1e-10;  // l^2 periodicity defect
    int max_newton = 12;
    int n_samples = 256;  // orbit samples per period
};

struct Localization {
    double beta_hat = 0.0;
    double r2 = 0.0;
    int n_sites = 0;
    bool degenerate = false;
};

/// Periodic orbit through x0 with p_0 = 0, q_0 > 0.
struct Breather {
    PotentialSpec V;
    double eps = 0.0;
    double T = 0.0;
    double I_label = 0.0;
    LatticeState x0;
    std::vector<double> t;
    std::vector<LatticeState> orbit;
    Eigen::MatrixXd monodromy;
    Localization loc;
    double defect = 0.0;
    int newton_steps = 0;
};

Breather anti_continuum_seed(const ActionAngleChart& chart, double I, int N,
                             const BreatherOptions& opt = BreatherOptions());

/// Newton solve of Phi_T(x) = x at fixed T, bordered by grad H (column) and the p_0 section (row).
Breather polish_breather(const LatticeState& guess, const PotentialSpec& V, double eps, double T,
                         const BreatherOptions& opt = BreatherOptions());

/// Path-following in eps at fixed period; each increment is a polish from the previous solution.
Breather continue_breather(const Breather& seed, double eps_target, double eps_step,
                           const BreatherOptions& opt = BreatherOptions());

/// Slope of log max_t(|q_k| + |p_k|) against |k| over off-center sites above 1e-13.
Localization localization_fit(const Breather& b);

/// Orbit-averaged action of the central oscillator.
double central_action(const Breather& b);

/// min over orbit samples of d_+ to the unperturbed family at the same I label.
double distance_to_unperturbed(const Breather& b, const NormSpec& metric = {2.0, WeightSpec::expo(1, 1.0)});

struct FloquetReport {
    std::vector<std::complex<double>> eigenvalues;
    std::complex<double> trivial[2];
    double max_excess = 0.0;     // max |lambda| - 1 over the non-trivial spectrum
    double reciprocity = 0.0;    // max distance of 1/lambda to the spectrum
    double symplectic_defect = 0.0;
};

FloquetReport floquet_spectrum(const Breather& b);

/// Samples of the orbit on n equally spaced times in [0, T).
void sample_orbit(Breather& b, int n, double dt);

void write_breather_csv(std::ostream& os, const Breather& b);

}  // namespace breathers
