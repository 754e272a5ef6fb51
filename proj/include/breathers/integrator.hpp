#pragma once

#include <functional>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "breathers/lattice.hpp"

namespace breathers {

enum class Scheme { strang2, yoshida4 };

Scheme parse_scheme(const std::string& s);
std::string to_string(Scheme s);

struct IntegratorConfig {
    double dt = 0.05;
    Scheme scheme = Scheme::yoshida4;
    double t_final = 0.0;
    int stride = 1;

    void validate(double eps) const;
};

/// One splitting step: exact on-site rotation composed with the coupling + anharmonic kick.
LatticeState step(const LatticeState& x, const PotentialSpec& V, double eps, double dt,
                  Scheme scheme = Scheme::yoshida4);
void step_inplace(LatticeState& x, const PotentialSpec& V, double eps, double dt, Scheme scheme);

/// Same step applied to the state and to tangent columns (dp block P, dq block Q).
void step_tangent(LatticeState& x, Eigen::MatrixXd& P, Eigen::MatrixXd& Q, const PotentialSpec& V, double eps,
                  double dt, Scheme scheme);

/// Advance by exactly t using ceil(|t|/dt_max) equal steps.
LatticeState flow(const LatticeState& x, const PotentialSpec& V, double eps, double t, double dt_max,
                  Scheme scheme = Scheme::yoshida4);

struct FlowWithMonodromy {
    LatticeState state;
    Eigen::MatrixXd monodromy;  // acts on flat (p, q)
};

FlowWithMonodromy flow_with_monodromy(const LatticeState& x, const PotentialSpec& V, double eps, double t,
                                      double dt_max, Scheme scheme = Scheme::yoshida4);

struct Observer {
    std::string name;
    std::function<double(double, const LatticeState&)> f;
};

struct TrajectoryRecord {
    std::vector<double> t;
    std::vector<std::string> names;
    std::vector<std::vector<double>> values;  // values[j][i] for observer j at sample i
    std::vector<LatticeState> states;          // only when requested

    const std::vector<double>& series(const std::string& name) const;
};

/// Repeated stepping with observers sampled every config.stride steps.
TrajectoryRecord evolve(const LatticeState& x0, const PotentialSpec& V, double eps, const IntegratorConfig& config,
                        const std::vector<Observer>& observers, bool keep_states = false,
                        const std::function<void(double, const LatticeState&)>& on_sample = {});

void write_record_csv(std::ostream& os, const TrajectoryRecord& rec);

}  // namespace breathers
