#include "tailflow/special_fn.hpp"

#include <boost/math/special_functions/digamma.hpp>
#include <boost/math/special_functions/gamma.hpp>

#include <cmath>
#include <limits>
#include <string>

#include "tailflow/errors.hpp"

namespace tailflow {
namespace {

// W. J. Cody, "Rational Chebyshev approximations for the error function",
// Math. Comp. 1969. kind: 0 = erf, 1 = erfc, 2 = erfcx.
double cody_erf(double x, int kind) {
  static constexpr double a[5] = {3.1611237438705656, 113.864154151050156, 377.485237685302021,
                                  3209.37758913846947, .185777706184603153};
  static constexpr double b[4] = {23.6012909523441209, 244.024637934444173, 1282.61652607737228,
                                  2844.23683343917062};
  static constexpr double c[9] = {.564188496988670089, 8.88314979438837594, 66.1191906371416295,
                                  298.635138197400131, 881.95222124176909,  1712.04761263407058,
                                  2051.07837782607147, 1230.33935479799725, 2.15311535474403846e-8};
  static constexpr double d[8] = {15.7449261107098347, 117.693950891312499, 537.181101862009858,
                                  1621.38957456669019, 3290.79923573345963, 4362.61909014324716,
                                  3439.36767414372164, 1230.33935480374942};
  static constexpr double p[6] = {.305326634961232344, .360344899949804439,
                                  .125781726111229246, .0160837851487422766,
                                  6.58749161529837803e-4, .0163153871373020978};
  static constexpr double q[5] = {2.56852019228982242, 1.87295284992346047, .527905102951428412,
                                  .0605183413124413191, .00233520497626869185};
  static constexpr double sqrpi = 0.56418958354775628695;  // 1/sqrt(pi)
  static constexpr double thresh = 0.46875;
  static constexpr double xneg = -26.628;
  static constexpr double xsmall = 1.11e-16;
  static constexpr double xbig = 26.543;
  static constexpr double xhuge = 6.71e7;
  static constexpr double xmax = 2.53e307;

  // exp(-y^2) split to avoid losing bits in y*y.
  auto exp_neg_sq = [](double y) {
    const double ysq = std::trunc(y * 16.0) / 16.0;
    const double del = (y - ysq) * (y + ysq);
    return std::exp(-ysq * ysq) * std::exp(-del);
  };

  const double y = std::fabs(x);
  double result = 0.0;
  if (y <= thresh) {
    const double ysq = y > xsmall ? y * y : 0.0;
    double xnum = a[4] * ysq;
    double xden = ysq;
    for (int i = 0; i < 3; ++i) {
      xnum = (xnum + a[i]) * ysq;
      xden = (xden + b[i]) * ysq;
    }
    result = x * (xnum + a[3]) / (xden + b[3]);
    if (kind != 0) result = 1.0 - result;
    if (kind == 2) result *= std::exp(ysq);
    return result;
  }
  if (y <= 4.0) {
    double xnum = c[8] * y;
    double xden = y;
    for (int i = 0; i < 7; ++i) {
      xnum = (xnum + c[i]) * y;
      xden = (xden + d[i]) * y;
    }
    result = (xnum + c[7]) / (xden + d[7]);
    if (kind != 2) result *= exp_neg_sq(y);
  } else {
    bool done = false;
    if (y >= xbig) {
      if (kind != 2 || y >= xmax) {
        done = true;
      } else if (y >= xhuge) {
        result = sqrpi / y;
        done = true;
      }
    }
    if (!done) {
      const double ysq = 1.0 / (y * y);
      double xnum = p[5] * ysq;
      double xden = ysq;
      for (int i = 0; i < 4; ++i) {
        xnum = (xnum + p[i]) * ysq;
        xden = (xden + q[i]) * ysq;
      }
      result = ysq * (xnum + p[4]) / (xden + q[4]);
      result = (sqrpi - result) / y;
      if (kind != 2) result *= exp_neg_sq(y);
    }
  }

  switch (kind) {
    case 0:
      result = (0.5 - result) + 0.5;
      return x < 0.0 ? -result : result;
    case 1:
      return x < 0.0 ? 2.0 - result : result;
    default:
      if (x < 0.0) {
        if (x < xneg) return std::numeric_limits<double>::infinity();
        const double e = 1.0 / exp_neg_sq(x);
        result = (e + e) - result;
      }
      return result;
  }
}

void require_finite(double x, const char* fn) {
  if (std::isnan(x)) throw DomainError(std::string(fn) + ": NaN argument");
}

}  // namespace

double erf(double z) {
  require_finite(z, "erf");
  return cody_erf(z, 0);
}

double erfc(double z) {
  require_finite(z, "erfc");
  return cody_erf(z, 1);
}

double erfcx(double z) {
  require_finite(z, "erfcx");
  return cody_erf(z, 2);
}

double log_erfc(double z) {
  require_finite(z, "log_erfc");
  if (z < 0.5) return std::log(cody_erf(z, 1));
  return std::log(cody_erf(z, 2)) - z * z;
}

double log_erfc_derivative(double z) {
  require_finite(z, "log_erfc_derivative");
  return -2.0 / (kSqrtPi * cody_erf(z, 2));
}

double inv_log_erfc(double w) {
  static const double kLog2 = std::log(2.0);
  if (std::isnan(w) || w >= kLog2) {
    throw DomainError("inv_log_erfc: argument must be < log(2), got " + std::to_string(w));
  }
  double v;
  if (w > -690.0) {
    v = erfc_inv(std::exp(w));
  } else {
    // erfc(v) ~ exp(-v^2) / (v sqrt(pi)) for large v.
    v = std::sqrt(-w);
    for (int i = 0; i < 4; ++i) v = std::sqrt(-w - std::log(kSqrtPi * v));
  }
  // Newton polish on log(erfc(v)) - w; the slope is bounded away from zero.
  for (int i = 0; i < 2; ++i) {
    const double f = log_erfc(v) - w;
    v -= f / log_erfc_derivative(v);
  }
  return v;
}

double normal_cdf(double z) {
  require_finite(z, "normal_cdf");
  return 0.5 * cody_erf(-z / kSqrt2, 1);
}

double normal_pdf(double z) { return std::exp(-0.5 * z * z - kLogSqrt2Pi); }

double normal_quantile(double p) {
  if (!(p > 0.0 && p < 1.0)) {
    throw DomainError("normal_quantile: probability must lie in (0, 1), got " +
                      std::to_string(p));
  }
  const double q = p - 0.5;
  if (std::fabs(q) <= 0.425) {
    const double r = 0.180625 - q * q;
    return q *
           (((((((r * 2509.0809287301226727 + 33430.575583588128105) * r +
                 67265.770927008700853) * r + 45921.953931549871457) * r +
               13731.693765509461125) * r + 1971.5909503065514427) * r +
             133.14166789178437745) * r + 3.387132872796366608) /
           (((((((r * 5226.495278852854561 + 28729.085735721942674) * r +
                 39307.89580009271061) * r + 21213.794301586595867) * r +
               5394.1960214247511077) * r + 687.1870074920579083) * r +
             42.313330701600911252) * r + 1.0);
  }
  double r = q < 0.0 ? p : 1.0 - p;
  r = std::sqrt(-std::log(r));
  double val;
  if (r <= 5.0) {
    r -= 1.6;
    val = (((((((r * 7.7454501427834140764e-4 + .0227238449892691845833) * r +
                .24178072517745061177) * r + 1.27045825245236838258) * r +
              3.64784832476320460504) * r + 5.7694972214606914055) * r +
            4.6303378461565452959) * r + 1.42343711074968357734) /
          (((((((r * 1.05075007164441684324e-9 + 5.475938084995344946e-4) * r +
                .0151986665636164571966) * r + .14810397642748007459) * r +
              .68976733498510000455) * r + 1.6763848301838038494) * r +
            2.05319162663775882187) * r + 1.0);
  } else {
    r -= 5.0;
    val = (((((((r * 2.01033439929228813265e-7 + 2.71155556874348757815e-5) * r +
                .0012426609473880784386) * r + .026532189526576123093) * r +
              .29656057182850489123) * r + 1.7848265399172913358) * r +
            5.4637849111641143699) * r + 6.6579046435011037772) /
          (((((((r * 2.04426310338993978564e-15 + 1.4215117583164458887e-7) * r +
                1.8463183175100546818e-5) * r + 7.868691311456132591e-4) * r +
              .0148753612908506148525) * r + .13692988092273580531) * r +
            .59983220655588793769) * r + 1.0);
  }
  return q < 0.0 ? -val : val;
}

double erfc_inv(double x) {
  if (!(x > 0.0 && x < 2.0)) {
    throw DomainError("erfc_inv: argument must lie in (0, 2), got " + std::to_string(x));
  }
  return -normal_quantile(0.5 * x) / kSqrt2;
}

double log_gamma(double x) {
  if (!(x > 0.0) || std::isinf(x)) {
    throw DomainError("log_gamma: argument must be positive and finite, got " +
                      std::to_string(x));
  }
  return boost::math::lgamma(x);
}

double digamma(double x) {
  if (!(x > 0.0) || std::isinf(x)) {
    throw DomainError("digamma: argument must be positive and finite, got " + std::to_string(x));
  }
  return boost::math::digamma(x);
}

double softplus(double x) {
  return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

double softplus_inverse(double y) {
  if (!(y > 0.0)) {
    throw DomainError("softplus_inverse: argument must be positive, got " + std::to_string(y));
  }
  return y + std::log(-std::expm1(-y));
}

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace tailflow
