#include "pfl/geometry.hpp"

#include <algorithm>
#include <cmath>

#include "pfl/errors.hpp"

namespace pfl {

void clip01_inplace(Tensor& t) {
  for (double& v : t.data) v = std::min(1.0, std::max(0.0, v));
}

Tensor clip01(const Tensor& t) {
  Tensor out = t;
  clip01_inplace(out);
  return out;
}

std::vector<double> simplex_project(const std::vector<double>& v) {
  if (v.empty()) throw ArgumentError("simplex_project: empty input");
  for (double x : v) {
    if (!std::isfinite(x)) throw ArgumentError("simplex_project: non-finite input");
  }

  // Sort descending, find the largest k with u_k - (cumsum_k - 1)/k > 0,
  // then shift the active coordinates by that threshold.
  std::vector<double> u(v);
  std::sort(u.begin(), u.end(), std::greater<double>());

  double cumsum = 0.0;
  double tau = 0.0;
  std::size_t k = 0;
  for (std::size_t i = 0; i < u.size(); ++i) {
    cumsum += u[i];
    const double candidate = (cumsum - 1.0) / static_cast<double>(i + 1);
    if (u[i] - candidate > 0.0) {
      tau = candidate;
      k = i + 1;
    }
  }
  (void)k;

  std::vector<double> w(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) {
    w[i] = std::max(v[i] - tau, 0.0);
  }
  return w;
}

}  // namespace pfl
