#pragma once

namespace tuned::nn {

/// ln Γ(x) for x > 0. Shifts the argument up by the recurrence
/// ln Γ(x) = ln Γ(x + 1) − ln x and finishes with Stirling's series.
/// Absolute error below 1e-10 on [1e-3, 1e4].
double lgamma(double x);

/// ψ(x) = d/dx ln Γ(x) for x > 0, via ψ(x) = ψ(x + 1) − 1/x and the
/// asymptotic expansion once x is large.
double digamma(double x);

/// ψ'(x) for x > 0. Needed for the analytic gradients of the Dirichlet losses.
double trigamma(double x);

/// ln(1 + e^x) without overflow.
double softplus(double x);
/// Logistic function, the derivative of softplus.
double sigmoid(double x);

}  // namespace tuned::nn
