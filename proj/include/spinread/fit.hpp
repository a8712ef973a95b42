#pragma once

// Weighted nonlinear least squares for p(t) = A * exp(-t / T1) + B.

#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>

namespace spinread {

struct FitResult {
  double t1_us = 0.0;
  double amplitude_a = 0.0;
  double offset_b = 0.0;
  double sigma_t1 = 0.0;
  double sigma_a = 0.0;
  double sigma_b = 0.0;
  double chi2 = 0.0;
  std::size_t iterations = 0;
};

class FitError : public std::runtime_error {
 public:
  FitError(const std::string& what, FitResult last) : std::runtime_error(what), last_(last) {}
  const FitResult& last_iterate() const { return last_; }

 private:
  FitResult last_;
};

struct FitOptions {
  std::size_t max_iterations = 200;
  double initial_lambda = 1e-3;
};

// Standard error of a binomial fraction. p is clamped to [1/(2n), 1 - 1/(2n)]
// first, so fractions of exactly 0 or 1 still carry a finite weight.
double binomial_sigma(double p, std::size_t n);

double exp_decay(double t, double amplitude, double t1, double offset);

// Levenberg-Marquardt with Marquardt diagonal scaling. Starts from
// B = min(p), A = max(p) - B and T1 from a log-linear regression of p - B.
// Uncertainties: sqrt(diag((J^T W J)^-1) * chi2 / (n - 3)). A parameter the
// data cannot constrain (singular normal matrix) gets an infinite sigma.
FitResult fit_exponential(std::span<const double> t, std::span<const double> p,
                          std::span<const double> sigma_p, const FitOptions& options = {});

}  // namespace spinread
