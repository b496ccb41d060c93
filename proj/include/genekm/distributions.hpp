#pragma once

namespace genekm {

// Upper tail of chi^2 with `dof` degrees of freedom (non-integer allowed).
double chisq_sf(double x, double dof);

// Upper tail of the F(d1, d2) distribution.
double f_sf(double f, double d1, double d2);

// Standard normal quantile.
double normal_quantile(double p);

}  // namespace genekm
