#pragma once

// Linear prediction analysis and z-plane pole manipulation.
//
// Prediction polynomial convention, used everywhere in this project:
//   A(z) = 1 - sum_{k=1..p} a_k z^-k
// so a frame is predicted as x[n] ~ sum_k a_k x[n-k] and the synthesis filter
// is 1/A(z).

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <complex>
#include <limits>
#include <numbers>
#include <string>
#include <type_traits>
#include <vector>

#include "vpdiag/error.hpp"

namespace vpdiag {

template <typename Scalar>
using VectorX = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

template <typename Scalar>
struct LpcModel {
  int order = 0;
  VectorX<Scalar> coeffs;    // a_1..a_p; all zero for passthrough frames
  VectorX<Scalar> residual;  // inverse-filtered frame, same length as frame
  Scalar frame_energy = 0;
  Scalar residual_energy = 0;
  bool passthrough = false;
};

template <typename Scalar>
struct PoleSet {
  std::vector<std::complex<Scalar>> poles;
};

inline constexpr double kPassthroughRms = 1e-6;

template <typename Scalar>
VectorX<Scalar> autocorrelation(const Eigen::Ref<const VectorX<Scalar>>& x,
                                int max_lag) {
  const Eigen::Index n = x.size();
  VectorX<Scalar> r = VectorX<Scalar>::Zero(max_lag + 1);
  for (int lag = 0; lag <= max_lag && lag < n; ++lag) {
    r[lag] = x.head(n - lag).dot(x.tail(n - lag));
  }
  return r;
}

/// Levinson-Durbin recursion. Returns a_1..a_p and writes the final
/// prediction error power to `error`. Stops early (remaining coefficients
/// zero) if the error collapses.
template <typename Scalar>
VectorX<Scalar> levinson_durbin(const VectorX<Scalar>& r, int order,
                                Scalar* error = nullptr) {
  VectorX<Scalar> a = VectorX<Scalar>::Zero(order);
  VectorX<Scalar> prev(order);
  Scalar err = r[0];
  for (int i = 0; i < order; ++i) {
    if (err <= r[0] * Scalar(1e-14)) break;
    Scalar acc = r[i + 1];
    for (int j = 0; j < i; ++j) acc -= a[j] * r[i - j];
    const Scalar k = acc / err;
    prev.head(i) = a.head(i);
    a[i] = k;
    for (int j = 0; j < i; ++j) a[j] = prev[j] - k * prev[i - 1 - j];
    err *= (Scalar(1) - k * k);
  }
  if (error) *error = err;
  return a;
}

/// FIR inverse filter e[n] = x[n] - sum a_k x[n-k], zero initial state.
template <typename Scalar>
VectorX<Scalar> inverse_filter(const VectorX<Scalar>& coeffs,
                               const Eigen::Ref<const VectorX<Scalar>>& x) {
  const Eigen::Index n = x.size();
  const Eigen::Index p = coeffs.size();
  VectorX<Scalar> e(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    Scalar acc = x[i];
    const Eigen::Index kmax = std::min(p, i);
    for (Eigen::Index k = 1; k <= kmax; ++k) acc -= coeffs[k - 1] * x[i - k];
    e[i] = acc;
  }
  return e;
}

/// All-pole synthesis y[n] = e[n] + sum a_k y[n-k], zero initial state.
template <typename Scalar>
VectorX<Scalar> synthesis_filter(const VectorX<Scalar>& coeffs,
                                 const Eigen::Ref<const VectorX<Scalar>>& e) {
  const Eigen::Index n = e.size();
  const Eigen::Index p = coeffs.size();
  VectorX<Scalar> y(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    Scalar acc = e[i];
    const Eigen::Index kmax = std::min(p, i);
    for (Eigen::Index k = 1; k <= kmax; ++k) acc += coeffs[k - 1] * y[i - k];
    y[i] = acc;
  }
  return y;
}

/// Autocorrelation-method LPC of an already windowed frame.
template <typename Scalar>
LpcModel<Scalar> lpc_analyze(const Eigen::Ref<const VectorX<Scalar>>& frame,
                             int order) {
  if (order < 1 || frame.size() <= order) {
    throw Error(ErrorCode::kInvalidArgument,
                "LPC order " + std::to_string(order) +
                    " needs a longer frame (got " +
                    std::to_string(frame.size()) + " samples)");
  }
  LpcModel<Scalar> model;
  model.order = order;
  model.frame_energy = frame.squaredNorm();
  const Scalar rms =
      std::sqrt(model.frame_energy / static_cast<Scalar>(frame.size()));
  if (!(rms >= Scalar(kPassthroughRms))) {
    model.passthrough = true;
    model.coeffs = VectorX<Scalar>::Zero(order);
    model.residual = frame;
    model.residual_energy = model.frame_energy;
    return model;
  }
  const VectorX<Scalar> r = autocorrelation<Scalar>(frame, order);
  model.coeffs = levinson_durbin<Scalar>(r, order);
  model.residual = inverse_filter<Scalar>(model.coeffs, frame);
  model.residual_energy = model.residual.squaredNorm();
  return model;
}

namespace detail {

// Horner evaluation of a monic polynomial given descending coefficients
// c[0] = 1, c[1], ..., c[n]; also returns the derivative.
template <typename Scalar>
void horner(const std::vector<std::complex<Scalar>>& c,
            std::complex<Scalar> z, std::complex<Scalar>& value,
            std::complex<Scalar>& deriv) {
  value = c[0];
  deriv = 0;
  for (std::size_t i = 1; i < c.size(); ++i) {
    deriv = deriv * z + value;
    value = value * z + c[i];
  }
}

}  // namespace detail

struct RootFinderOptions {
  double tolerance = 1e-12;
  int max_iterations = 200;
};

/// Aberth-Ehrlich simultaneous root iteration for a monic polynomial with
/// descending coefficients (leading 1 included). Initial guesses lie on a
/// circle with a fixed angular offset so the result is deterministic.
template <typename Scalar>
std::vector<std::complex<Scalar>> polynomial_roots(
    const std::vector<std::complex<Scalar>>& monic,
    const RootFinderOptions& opts = {}) {
  using Complex = std::complex<Scalar>;
  const int n = static_cast<int>(monic.size()) - 1;
  if (n <= 0) return {};

  // Fujiwara bound caps the start radius; the geometric mean of root
  // magnitudes (|c_n|^(1/n)) is a good typical radius.
  Scalar bound = 0;
  for (int i = 1; i <= n; ++i) {
    Scalar term = std::pow(std::abs(monic[i]), Scalar(1) / i);
    if (i == n) term = std::pow(std::abs(monic[i]) / 2, Scalar(1) / i);
    bound = std::max(bound, 2 * term);
  }
  Scalar radius = std::pow(std::abs(monic[n]), Scalar(1) / n);
  if (!(radius > Scalar(1e-3))) radius = Scalar(0.5);
  radius = std::min(radius, std::max(bound, Scalar(1e-3)));

  std::vector<Complex> z(n);
  const Scalar two_pi = 2 * std::numbers::pi_v<Scalar>;
  for (int k = 0; k < n; ++k) {
    z[k] = std::polar(radius, two_pi * k / n + Scalar(0.25));
  }

  // A root is frozen once its Aberth correction is below tolerance or its
  // residual is at the rounding level of the Horner evaluation.
  std::vector<bool> done(n, false);
  std::vector<Complex> step(n);
  const Scalar eps = std::numeric_limits<Scalar>::epsilon();
  bool converged = false;
  for (int it = 0; it < opts.max_iterations && !converged; ++it) {
    for (int k = 0; k < n; ++k) {
      step[k] = 0;
      if (done[k]) continue;
      Complex value, deriv;
      detail::horner(monic, z[k], value, deriv);
      const Scalar az = std::abs(z[k]);
      Scalar rounding = 0;
      for (const auto& c : monic) rounding = rounding * az + std::abs(c);
      if (std::abs(value) <= 8 * eps * rounding) {
        done[k] = true;
        continue;
      }
      const Complex ratio = value / deriv;
      Complex repel = 0;
      for (int j = 0; j < n; ++j) {
        if (j != k) repel += Scalar(1) / (z[k] - z[j]);
      }
      step[k] = ratio / (Scalar(1) - ratio * repel);
      if (std::abs(step[k]) <=
          Scalar(opts.tolerance) * std::max(Scalar(1), az)) {
        done[k] = true;
      }
    }
    for (int k = 0; k < n; ++k) z[k] -= step[k];
    converged = std::all_of(done.begin(), done.end(), [](bool b) { return b; });
  }
  for (const auto& root : z) {
    if (!std::isfinite(root.real()) || !std::isfinite(root.imag())) {
      converged = false;
    }
  }
  if (!converged) {
    throw Error(ErrorCode::kRootFinding,
                "root finder did not converge for degree " +
                    std::to_string(n));
  }
  // One polishing step per root; the Aberth repulsion term keeps members of
  // a tight cluster from collapsing onto the same root. A step is kept only
  // if it lowers the residual.
  std::vector<Complex> polished = z;
  for (int k = 0; k < n; ++k) {
    Complex value, deriv;
    detail::horner(monic, z[k], value, deriv);
    if (value == Complex(0) || deriv == Complex(0)) continue;
    const Complex ratio = value / deriv;
    Complex repel = 0;
    for (int j = 0; j < n; ++j) {
      if (j != k) repel += Scalar(1) / (z[k] - z[j]);
    }
    const Complex candidate = z[k] - ratio / (Scalar(1) - ratio * repel);
    Complex cand_value, cand_deriv;
    detail::horner(monic, candidate, cand_value, cand_deriv);
    if (std::abs(cand_value) < std::abs(value)) polished[k] = candidate;
  }
  z = polished;
  return z;
}

/// Roots of z^p A(z). The result is exactly conjugate-closed: near-real
/// roots are snapped to the real axis and complex roots are re-paired.
template <typename Scalar>
PoleSet<Scalar> poles_from_coeffs(const VectorX<Scalar>& coeffs,
                                  const RootFinderOptions& opts = {}) {
  using Complex = std::complex<Scalar>;
  // Double-precision inputs are solved in extended precision: clustered
  // formant roots otherwise lose several digits in the Horner residual.
  using Work = std::conditional_t<std::is_same_v<Scalar, double>, long double,
                                  Scalar>;
  const Eigen::Index p = coeffs.size();
  if (p == 0) return {};
  std::vector<std::complex<Work>> monic(p + 1);
  monic[0] = 1;
  for (Eigen::Index k = 0; k < p; ++k) {
    monic[k + 1] = -static_cast<Work>(coeffs[k]);
  }

  std::vector<Complex> roots;
  for (const auto& r : polynomial_roots<Work>(monic, opts)) {
    roots.emplace_back(static_cast<Scalar>(r.real()),
                       static_cast<Scalar>(r.imag()));
  }

  std::vector<Complex> upper, lower, real;
  for (const auto& r : roots) {
    const Scalar snap = Scalar(1e-9) * std::max(Scalar(1), std::abs(r));
    if (std::abs(r.imag()) <= snap) {
      real.emplace_back(r.real(), 0);
    } else if (r.imag() > 0) {
      upper.push_back(r);
    } else {
      lower.push_back(r);
    }
  }
  if (upper.size() != lower.size()) {
    throw Error(ErrorCode::kRootFinding,
                "root finder returned unpaired complex roots");
  }
  PoleSet<Scalar> out;
  std::vector<bool> used(lower.size(), false);
  for (const auto& u : upper) {
    std::size_t best = lower.size();
    Scalar best_dist = 0;
    for (std::size_t j = 0; j < lower.size(); ++j) {
      if (used[j]) continue;
      const Scalar d = std::abs(u - std::conj(lower[j]));
      if (best == lower.size() || d < best_dist) {
        best = j;
        best_dist = d;
      }
    }
    used[best] = true;
    const Complex mid = (u + std::conj(lower[best])) / Scalar(2);
    out.poles.push_back(mid);
    out.poles.push_back(std::conj(mid));
  }
  std::sort(real.begin(), real.end(),
            [](const Complex& a, const Complex& b) {
              return a.real() > b.real();
            });
  out.poles.insert(out.poles.end(), real.begin(), real.end());
  return out;
}

/// Expands prod_k (1 - p_k z^-1) into prediction coefficients a_1..a_p.
/// Conjugate pairs are multiplied out as real quadratics, so the result is
/// real by construction.
template <typename Scalar>
VectorX<Scalar> coeffs_from_poles(const PoleSet<Scalar>& set) {
  const auto& poles = set.poles;
  const std::size_t p = poles.size();

  // Ascending powers of z^-1: poly[0] = 1.
  std::vector<Scalar> poly(p + 1, Scalar(0));
  poly[0] = 1;
  std::size_t degree = 0;
  auto multiply = [&](Scalar c1, Scalar c2, int order) {
    for (std::size_t i = degree + order; i > 0; --i) {
      Scalar acc = poly[i] + c1 * poly[i - 1];
      if (order == 2 && i >= 2) acc += c2 * poly[i - 2];
      poly[i] = acc;
    }
    degree += order;
  };

  std::vector<bool> used(p, false);
  for (std::size_t i = 0; i < p; ++i) {
    if (used[i]) continue;
    used[i] = true;
    const auto& pole = poles[i];
    const Scalar tol = Scalar(1e-9) * std::max(Scalar(1), std::abs(pole));
    if (pole.imag() == Scalar(0)) {
      multiply(-pole.real(), 0, 1);
      continue;
    }
    std::size_t mate = p;
    for (std::size_t j = i + 1; j < p && mate == p; ++j) {
      if (!used[j] && std::abs(poles[j] - std::conj(pole)) <= tol) mate = j;
    }
    if (mate == p) {
      if (std::abs(pole.imag()) > tol) {
        throw Error(ErrorCode::kConjugateSymmetry,
                    "pole set is not closed under conjugation");
      }
      multiply(-pole.real(), 0, 1);
      continue;
    }
    used[mate] = true;
    const std::complex<Scalar> mid = (pole + std::conj(poles[mate])) / Scalar(2);
    multiply(-2 * mid.real(), std::norm(mid), 2);
  }

  VectorX<Scalar> a(static_cast<Eigen::Index>(p));
  for (std::size_t i = 1; i <= p; ++i) {
    a[static_cast<Eigen::Index>(i - 1)] = -poly[i];
  }
  return a;
}

inline constexpr double kMaxShiftedPhase = std::numbers::pi - 1e-3;

/// Raises the phase of every complex pole to the power alpha. Conjugates are
/// mirrored, real poles and all magnitudes are left untouched.
template <typename Scalar>
PoleSet<Scalar> mcadams_shift(const PoleSet<Scalar>& set, Scalar alpha) {
  PoleSet<Scalar> out;
  out.poles.reserve(set.poles.size());
  for (const auto& pole : set.poles) {
    if (pole.imag() == Scalar(0)) {
      out.poles.push_back(pole);
      continue;
    }
    const Scalar mag = std::abs(pole);
    const Scalar phase = std::abs(std::arg(pole));
    const Scalar shifted =
        std::min(std::pow(phase, alpha), Scalar(kMaxShiftedPhase));
    out.poles.push_back(
        std::polar(mag, pole.imag() > 0 ? shifted : -shifted));
  }
  return out;
}

/// Pulls poles on or beyond `threshold` radius back to `target` radius.
template <typename Scalar>
PoleSet<Scalar> limit_pole_radius(const PoleSet<Scalar>& set,
                                  Scalar threshold = Scalar(0.999),
                                  Scalar target = Scalar(0.998)) {
  PoleSet<Scalar> out = set;
  for (auto& pole : out.poles) {
    const Scalar mag = std::abs(pole);
    if (mag >= threshold) {
      pole = pole.imag() == Scalar(0)
                 ? std::complex<Scalar>(pole.real() > 0 ? target : -target, 0)
                 : pole * (target / mag);
    }
  }
  return out;
}

}  // namespace vpdiag
