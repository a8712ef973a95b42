#include "spinread/fit.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <vector>

namespace spinread {
namespace {

using Vec3 = std::array<double, 3>;
using Mat3 = std::array<Vec3, 3>;

// Parameter order inside the solver: (A, T1, B).
struct Normal {
  Mat3 jtj{};
  Vec3 jtr{};
  double chi2 = 0.0;
};

Normal build_normal(std::span<const double> t, std::span<const double> p,
                    std::span<const double> s, const Vec3& theta) {
  Normal n;
  for (std::size_t i = 0; i < t.size(); ++i) {
    const double e = std::exp(-t[i] / theta[1]);
    const double w = 1.0 / s[i];
    const double r = (p[i] - (theta[0] * e + theta[2])) * w;
    const Vec3 j = {e * w, theta[0] * t[i] * e / (theta[1] * theta[1]) * w, w};
    for (int a = 0; a < 3; ++a) {
      n.jtr[a] += j[a] * r;
      for (int b = 0; b < 3; ++b) n.jtj[a][b] += j[a] * j[b];
    }
    n.chi2 += r * r;
  }
  return n;
}

double chi2_at(std::span<const double> t, std::span<const double> p, std::span<const double> s,
               const Vec3& theta) {
  double chi2 = 0.0;
  for (std::size_t i = 0; i < t.size(); ++i) {
    const double r = (p[i] - exp_decay(t[i], theta[0], theta[1], theta[2])) / s[i];
    chi2 += r * r;
  }
  return chi2;
}

// Gaussian elimination with partial pivoting. Empty result when singular.
std::optional<Vec3> solve3(Mat3 m, Vec3 rhs) {
  double scale = 0.0;
  for (const auto& row : m)
    for (double v : row) scale = std::max(scale, std::abs(v));
  if (scale == 0.0) return std::nullopt;
  for (int col = 0; col < 3; ++col) {
    int piv = col;
    for (int r = col + 1; r < 3; ++r)
      if (std::abs(m[r][col]) > std::abs(m[piv][col])) piv = r;
    if (std::abs(m[piv][col]) <= 1e-13 * scale) return std::nullopt;
    std::swap(m[piv], m[col]);
    std::swap(rhs[piv], rhs[col]);
    for (int r = col + 1; r < 3; ++r) {
      const double f = m[r][col] / m[col][col];
      for (int c = col; c < 3; ++c) m[r][c] -= f * m[col][c];
      rhs[r] -= f * rhs[col];
    }
  }
  Vec3 x{};
  for (int r = 2; r >= 0; --r) {
    double acc = rhs[r];
    for (int c = r + 1; c < 3; ++c) acc -= m[r][c] * x[c];
    x[r] = acc / m[r][r];
  }
  return x;
}

// Diagonal of the inverse, column by column.
std::optional<Vec3> inverse_diagonal(const Mat3& m) {
  Vec3 diag{};
  for (int k = 0; k < 3; ++k) {
    Vec3 e{};
    e[k] = 1.0;
    const auto col = solve3(m, e);
    if (!col) return std::nullopt;
    diag[k] = (*col)[k];
  }
  return diag;
}

Vec3 initial_guess(std::span<const double> t, std::span<const double> p) {
  const double b = *std::min_element(p.begin(), p.end());
  const double a = *std::max_element(p.begin(), p.end()) - b;
  // ln(p - B) = ln A - t / T1 over the points strictly above B.
  double sx = 0.0, sy = 0.0, sxx = 0.0, sxy = 0.0;
  std::size_t m = 0;
  for (std::size_t i = 0; i < t.size(); ++i) {
    const double d = p[i] - b;
    if (d <= 0.0) continue;
    const double y = std::log(d);
    sx += t[i];
    sy += y;
    sxx += t[i] * t[i];
    sxy += t[i] * y;
    ++m;
  }
  double t1 = 0.5 * (t.back() - t.front());
  if (m >= 2) {
    const double denom = static_cast<double>(m) * sxx - sx * sx;
    const double slope = denom != 0.0 ? (static_cast<double>(m) * sxy - sx * sy) / denom : 0.0;
    if (slope < 0.0 && std::isfinite(slope)) t1 = -1.0 / slope;
  }
  if (!(t1 > 0.0) || !std::isfinite(t1)) t1 = 1.0;
  return {a, t1, b};
}

FitResult to_result(const Vec3& theta, double chi2, std::size_t iterations) {
  FitResult r;
  r.amplitude_a = theta[0];
  r.t1_us = theta[1];
  r.offset_b = theta[2];
  r.chi2 = chi2;
  r.iterations = iterations;
  return r;
}

}  // namespace

double binomial_sigma(double p, std::size_t n) {
  if (n == 0) throw std::invalid_argument("binomial sigma needs n >= 1");
  const double floor = 0.5 / static_cast<double>(n);
  const double q = std::clamp(p, floor, 1.0 - floor);
  return std::sqrt(q * (1.0 - q) / static_cast<double>(n));
}

double exp_decay(double t, double amplitude, double t1, double offset) {
  return amplitude * std::exp(-t / t1) + offset;
}

FitResult fit_exponential(std::span<const double> t, std::span<const double> p,
                          std::span<const double> sigma_p, const FitOptions& options) {
  if (t.size() != p.size() || t.size() != sigma_p.size()) {
    throw std::invalid_argument("fit inputs must have equal lengths");
  }
  if (t.size() < 4) throw std::invalid_argument("exponential fit needs at least 4 points");
  for (std::size_t i = 0; i < t.size(); ++i) {
    if (!std::isfinite(t[i]) || !std::isfinite(p[i])) {
      throw std::invalid_argument("fit inputs must be finite");
    }
    if (!(sigma_p[i] > 0.0)) throw std::invalid_argument("fit sigmas must be positive");
    if (i > 0 && !(t[i] > t[i - 1])) throw std::invalid_argument("fit times must be strictly increasing");
  }

  Vec3 theta = initial_guess(t, p);
  Normal n = build_normal(t, p, sigma_p, theta);
  double lambda = options.initial_lambda;
  bool converged = false;
  std::size_t iter = 0;

  for (; iter < options.max_iterations && !converged; ++iter) {
    if (n.chi2 <= 1e-30) {
      converged = true;
      break;
    }
    double max_diag = 0.0;
    for (int k = 0; k < 3; ++k) max_diag = std::max(max_diag, n.jtj[k][k]);

    bool accepted = false;
    while (!accepted) {
      Mat3 damped = n.jtj;
      for (int k = 0; k < 3; ++k) damped[k][k] += lambda * std::max(n.jtj[k][k], 1e-12 * max_diag);
      const auto step = solve3(damped, n.jtr);
      Vec3 trial = theta;
      if (step) {
        for (int k = 0; k < 3; ++k) trial[k] += (*step)[k];
      }
      const double trial_chi2 = (step && trial[1] > 0.0) ? chi2_at(t, p, sigma_p, trial)
                                                          : std::numeric_limits<double>::infinity();
      if (trial_chi2 < n.chi2) {
        double rel_step = 0.0;
        for (int k = 0; k < 3; ++k) {
          rel_step = std::max(rel_step, std::abs((*step)[k]) / (std::abs(theta[k]) + 1e-12));
        }
        // chi2 is in units of the data variance, so a drop far below 1 no
        // longer moves the fit; flat valleys (A -> 0, T1 -> inf) stop here.
        const double drop = n.chi2 - trial_chi2;
        theta = trial;
        n = build_normal(t, p, sigma_p, theta);
        lambda = std::max(lambda * 0.1, 1e-12);
        accepted = true;
        converged = drop < 1e-9 * (1.0 + trial_chi2) || rel_step < 1e-10;
      } else {
        lambda *= 10.0;
        if (lambda > 1e16) {
          // No downhill direction left: the current point is the minimum.
          accepted = true;
          converged = true;
        }
      }
    }
  }

  FitResult result = to_result(theta, n.chi2, iter);
  if (!converged) {
    throw FitError("exponential fit did not converge in " + std::to_string(options.max_iterations) +
                       " iterations",
                   result);
  }

  const double dof = static_cast<double>(t.size()) - 3.0;
  const double scale = n.chi2 / dof;
  const double inf = std::numeric_limits<double>::infinity();
  if (const auto diag = inverse_diagonal(n.jtj)) {
    result.sigma_a = std::sqrt(std::max(0.0, (*diag)[0] * scale));
    result.sigma_t1 = std::sqrt(std::max(0.0, (*diag)[1] * scale));
    result.sigma_b = std::sqrt(std::max(0.0, (*diag)[2] * scale));
  } else {
    // T1 is the parameter that loses identifiability (A -> 0); A and B
    // still come from the 2x2 block.
    const double a = n.jtj[0][0], b = n.jtj[0][2], d = n.jtj[2][2];
    const double det = a * d - b * b;
    result.sigma_t1 = inf;
    result.sigma_a = det > 0.0 ? std::sqrt(d / det * scale) : inf;
    result.sigma_b = det > 0.0 ? std::sqrt(a / det * scale) : inf;
  }
  return result;
}

}  // namespace spinread
