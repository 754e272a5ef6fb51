#pragma once

#include <vector>

namespace breathers {

struct LineFit {
    double slope = 0.0;
    double intercept = 0.0;
    double r2 = 0.0;
};

LineFit fit_line(const std::vector<double>& x, const std::vector<double>& y);

/// Fit of log(y) against log(x).
LineFit fit_loglog(const std::vector<double>& x, const std::vector<double>& y);

std::vector<double> geomspace(double a, double b, int n);
std::vector<double> linspace(double a, double b, int n);

}  // namespace breathers
