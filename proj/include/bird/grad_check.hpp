#pragma once

#include <cmath>
#include <functional>
#include <stdexcept>

#include "bird/optim.hpp"

namespace bird {

/// Compares an analytic gradient against central finite differences of the
/// scalar function f at `point`, coordinate by coordinate. Returns the
/// maximum of |analytic - central| / max(1, |analytic|) over all entries.
/// f must be a pure function of the parameter map.
inline double finite_difference_check(const std::function<double(const ParamMap&)>& f,
                                      ParamMap point, const ParamMap& analytic,
                                      double eps = 1e-5) {
  if (!(eps > 0.0)) throw std::invalid_argument("finite_difference_check: eps must be > 0");
  double worst = 0.0;
  for (auto& [name, p] : point) {
    auto ait = analytic.find(name);
    if (ait == analytic.end())
      throw std::invalid_argument("finite_difference_check: missing analytic entry '" + name + "'");
    const Array& a = ait->second;
    for (std::size_t i = 0; i < p.size(); ++i) {
      double keep = p[i];
      p[i] = keep + eps;
      double fp = f(point);
      p[i] = keep - eps;
      double fm = f(point);
      p[i] = keep;
      if (!std::isfinite(fp) || !std::isfinite(fm))
        throw std::runtime_error("finite_difference_check: non-finite f at perturbed '" + name + "'");
      double numeric = (fp - fm) / (2.0 * eps);
      double err = std::abs(a[i] - numeric) / std::max(1.0, std::abs(a[i]));
      worst = std::max(worst, err);
    }
  }
  return worst;
}

}  // namespace bird
