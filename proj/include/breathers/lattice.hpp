#pragma once

#include <iosfwd>
#include <limits>
#include <string>

#include <Eigen/Dense>

#include "breathers/potential.hpp"

namespace breathers {

/// Canonical pairs (p_k, q_k) on sites k = -N..N.
///
/// Without site 0 the chain is split in two halves and q_0 is pinned to zero.
struct LatticeState {
    int N = 0;
    bool include_site0 = true;
    Eigen::VectorXd p, q;

    LatticeState() = default;
    LatticeState(int N_, bool with0 = true);

    int size() const { return static_cast<int>(p.size()); }
    int index(int k) const;
    int site(int i) const;
    bool has_site(int k) const;

    double p_at(int k) const { return has_site(k) ? p[index(k)] : 0.0; }
    double q_at(int k) const { return has_site(k) ? q[index(k)] : 0.0; }

    void check() const;

    /// Concatenated (p, q).
    Eigen::VectorXd flat() const;
    static LatticeState from_flat(const Eigen::VectorXd& x, int N, bool with0 = true);

    LatticeState& operator+=(const LatticeState& o);
    LatticeState& operator-=(const LatticeState& o);
    LatticeState& operator*=(double a);
};

LatticeState operator+(LatticeState a, const LatticeState& b);
LatticeState operator-(LatticeState a, const LatticeState& b);
LatticeState operator*(double s, LatticeState a);

/// Copy onto a lattice of a different size; sites outside the target are dropped.
LatticeState resize_lattice(const LatticeState& x, int N_new);
/// Remove or insert site 0 (inserted as zero).
LatticeState drop_site0(const LatticeState& x);
LatticeState with_site0(const LatticeState& x);

struct WeightSpec {
    enum class Kind { polynomial, exponential };
    Kind kind = Kind::polynomial;
    double s = 0.0;
    int sign = 1;
    double beta = 1.0;

    static WeightSpec poly(double s) { return {Kind::polynomial, s, 1, 1.0}; }
    static WeightSpec expo(int sign, double beta);
    static WeightSpec none() { return poly(0.0); }
};

constexpr double kInf = std::numeric_limits<double>::infinity();

struct AdmissiblePair {
    double q_exp = kInf;
    double r_exp = 2.0;
};

bool is_admissible(const AdmissiblePair& pair);

double japanese_bracket(int k);

double hamiltonian(const LatticeState& x, const PotentialSpec& V, double eps);

/// (Delta q)_k with Dirichlet closure, and q_0 = 0 when site 0 is absent.
Eigen::VectorXd laplacian(const LatticeState& x);
Eigen::VectorXd laplacian(const Eigen::VectorXd& q, int N, bool with0);

/// Time derivative (p-dot, q-dot) of the Hamilton equations.
LatticeState vector_field(const LatticeState& x, const PotentialSpec& V, double eps);

/// Gradient (dH/dp, dH/dq).
LatticeState gradient(const LatticeState& x, const PotentialSpec& V, double eps);

/// Weighted norm of the concatenated (p, q) sequence.
double norm(const LatticeState& x, double r_exp, const WeightSpec& w = WeightSpec::none());

/// Point (I, alpha, xi) with xi the off-center sites.
struct Zeta {
    double I = 0.0;
    double alpha = 0.0;
    LatticeState xi;
};

struct NormSpec {
    double r_exp = 2.0;
    WeightSpec weight = WeightSpec::none();
};

double angle_gap(double a, double b);
double distance(const Zeta& a, const Zeta& b, const NormSpec& metric);

LatticeState skew_symmetrize(const LatticeState& x);
bool check_skew(const LatticeState& x);

void write_state_csv(std::ostream& os, const LatticeState& x);
LatticeState read_state_csv(std::istream& is);

}  // namespace breathers
