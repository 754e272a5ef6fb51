#include "breathers/fit.hpp"

#include <cmath>
#include <stdexcept>

#include <Eigen/Dense>

namespace breathers {

LineFit fit_line(const std::vector<double>& x, const std::vector<double>& y) {
    if (x.size() != y.size() || x.size() < 2) throw std::invalid_argument("fit needs >= 2 paired samples");
    const Eigen::Index n = static_cast<Eigen::Index>(x.size());
    Eigen::MatrixXd A(n, 2);
    Eigen::VectorXd b(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        A(i, 0) = x[i];
        A(i, 1) = 1.0;
        b[i] = y[i];
    }
    Eigen::Vector2d c = A.colPivHouseholderQr().solve(b);
    double mean = b.mean();
    double ss_tot = (b.array() - mean).square().sum();
    double ss_res = (A * c - b).squaredNorm();
    return {c[0], c[1], ss_tot > 0.0 ? 1.0 - ss_res / ss_tot : 1.0};
}

LineFit fit_loglog(const std::vector<double>& x, const std::vector<double>& y) {
    std::vector<double> lx(x.size()), ly(y.size());
    for (size_t i = 0; i < x.size(); ++i) {
        if (!(x[i] > 0.0) || !(y[i] > 0.0)) throw std::invalid_argument("log-log fit needs positive data");
        lx[i] = std::log(x[i]);
        ly[i] = std::log(y[i]);
    }
    return fit_line(lx, ly);
}

std::vector<double> geomspace(double a, double b, int n) {
    std::vector<double> v(n);
    for (int i = 0; i < n; ++i) v[i] = n == 1 ? a : a * std::pow(b / a, static_cast<double>(i) / (n - 1));
    return v;
}

std::vector<double> linspace(double a, double b, int n) {
    std::vector<double> v(n);
    for (int i = 0; i < n; ++i) v[i] = n == 1 ? a : a + (b - a) * i / (n - 1);
    return v;
}

}  // namespace breathers
