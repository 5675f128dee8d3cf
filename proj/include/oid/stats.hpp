#pragma once

namespace oid {

double norm_pdf(double x);
double norm_cdf(double x);

/// Inverse standard normal CDF, accurate to ~1e-15 over (0, 1).
double norm_ppf(double p);

} // namespace oid
