#pragma once

#include "bitcn/rng.hpp"
#include "bitcn/tensor.hpp"

namespace bitcn {

// Output distribution family for the probabilistic head.
enum class Family { student_t3, gaussian };

Family parse_family(const std::string& name);
std::string family_name(Family f);

namespace dist {

// Standard Student's t with 3 degrees of freedom:
//   f(y) = 2 / (pi * sqrt(3) * (1 + y^2/3)^2)
// and its closed-form CDF. The heavy tail keeps NLL gradients bounded in
// the residual, which is the point of using it as the default head.
double t3_pdf(double y);
double t3_cdf(double y);
double t3_log_pdf(double y);

double gaussian_pdf(double z);
double gaussian_cdf(double z);

// Standard quantile by bracketed bisection on the CDF; the bracket shrinks
// below 1e-10 before returning. p must lie strictly inside (0, 1).
double quantile(Family f, double p);
// Location-scale quantile: mu + sigma * quantile(f, p).
double quantile(Family f, double p, double mu, double sigma);

// Inverse-CDF sampling, one uniform draw per sample.
double sample(Family f, Rng& rng, double mu, double sigma);

// Mean negative log likelihood of y under the location-scale family,
// differentiable in mu and sigma:
//   t3:       mean( 2 log(1 + z^2/3) - log(2/(pi sqrt(3))) + log sigma )
//   gaussian: mean( z^2/2 + log sigma + log(2 pi)/2 )
// with z = (y - mu)/sigma. All three tensors must share a shape and sigma
// must be strictly positive.
Tensor t3_nll(const Tensor& y, const Tensor& mu, const Tensor& sigma);
Tensor gaussian_nll(const Tensor& y, const Tensor& mu, const Tensor& sigma);
Tensor nll(Family f, const Tensor& y, const Tensor& mu, const Tensor& sigma);

} // namespace dist

} // namespace bitcn
