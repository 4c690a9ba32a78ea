#include "ivinfer/distributions.hpp"

#include <boost/math/distributions/chi_squared.hpp>
#include <boost/math/special_functions/gamma.hpp>

#include <cmath>

namespace ivinfer {

double chi2_cdf(double x, double df) {
    if (x <= 0.0) return 0.0;
    if (std::isinf(x)) return 1.0;
    return boost::math::cdf(boost::math::chi_squared(df), x);
}

double chi2_sf(double x, double df) {
    if (x <= 0.0) return 1.0;
    if (std::isinf(x)) return 0.0;
    return boost::math::cdf(boost::math::complement(boost::math::chi_squared(df), x));
}

double chi2_quantile(double p, double df) {
    return boost::math::quantile(boost::math::chi_squared(df), p);
}

double chi2_pdf(double x, double df) {
    return boost::math::pdf(boost::math::chi_squared(df), x);
}

double gamma_p(double a, double x) {
    if (x <= 0.0) return 0.0;
    return boost::math::gamma_p(a, x);
}

}  // namespace ivinfer
