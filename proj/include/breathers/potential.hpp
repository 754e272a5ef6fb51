#pragma once

#include <memory>
#include <utility>
#include <vector>

#include <boost/math/interpolators/cardinal_cubic_b_spline.hpp>

namespace breathers {

/// On-site anharmonic potential V(q) = sum a_m q^m.
struct PotentialSpec {
    std::vector<std::pair<int, double>> terms;
    int min_degree = 8;

    PotentialSpec() = default;
    PotentialSpec(std::vector<std::pair<int, double>> t, int min_deg = 8);

    static PotentialSpec monomial(int degree, double coef = 1.0);
    static PotentialSpec zero(int min_deg = 8) { return PotentialSpec({}, min_deg); }

    void validate() const;
    bool is_zero() const { return terms.empty(); }
    int max_degree() const;

    double V(double q) const;
    double dV(double q) const;
    double d2V(double q) const;
};

double eval_potential(const PotentialSpec& V, double q);

/// Single oscillator energy p^2/2 + q^2/2 + V(q).
double oscillator_energy(const PotentialSpec& V, double p, double q);

/// Turning points q_- < 0 < q_+ of the level set at energy E.
std::pair<double, double> turning_points(const PotentialSpec& V, double E);

/// I(E) = (1/2pi) * enclosed area.
double action_of_energy(const PotentialSpec& V, double E);

/// Period T(E) of the single oscillator.
double period_of_energy(const PotentialSpec& V, double E);

/// Tabulated action-angle chart on [I_lo, I_hi].
///
/// Angle origin: alpha = 0 at (p = 0, q = q_max), alpha increasing with time.
class ActionAngleChart {
public:
    ActionAngleChart(PotentialSpec V, double I_lo, double I_hi, int n_grid = 512);

    const PotentialSpec& potential() const { return V_; }
    double I_lo() const { return I_lo_; }
    double I_hi() const { return I_hi_; }
    const std::vector<double>& I_grid() const { return I_grid_; }
    const std::vector<double>& E_table() const { return E_table_; }
    const std::vector<double>& omega_table() const { return omega_table_; }

    /// Exact inverse of action_of_energy by bracketed root finding.
    double h0(double I) const;
    /// Spline of the tabulated energies and its derivative.
    double h0_interp(double I) const;
    double omega_interp(double I) const;
    /// 2pi / T(h0(I)).
    double omega0(double I) const;

    std::pair<double, double> to_cartesian(double I, double alpha) const;
    std::pair<double, double> from_cartesian(double p, double q) const;

    bool in_range(double I) const;

private:
    void check_range(double I) const;

    PotentialSpec V_;
    double I_lo_, I_hi_;
    double E_lo_, E_hi_;
    std::vector<double> I_grid_, E_table_, omega_table_;
    std::shared_ptr<const boost::math::interpolators::cardinal_cubic_b_spline<double>> spline_;
};

double h0_of_action(const ActionAngleChart& chart, double I);
double omega0(const ActionAngleChart& chart, double I);
std::pair<double, double> to_cartesian(const ActionAngleChart& chart, double I, double alpha);
std::pair<double, double> from_cartesian(const ActionAngleChart& chart, double p, double q);

/// min over an n_grid-point grid on [I_lo, I_hi] and 1 <= |n| <= n_max of |omega0(I) - 1/n|.
double nonresonance_margin(const ActionAngleChart& chart, double I_lo, double I_hi, int n_max,
                           int n_grid = 256);

}  // namespace breathers
