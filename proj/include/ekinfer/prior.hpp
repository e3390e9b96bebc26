#pragma once

#include <cmath>
#include <functional>
#include <limits>
#include <random>
#include <stdexcept>
#include <vector>

#include "ekinfer/ensemble.hpp"
#include "ekinfer/rng.hpp"

namespace ekinfer {

inline constexpr double kNegInf = -std::numeric_limits<double>::infinity();
inline constexpr double kLogTwoPi = 1.8378770664093454835606594728112353;

inline double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }

// Inverse standard normal CDF: Acklam's rational approximation polished with
// one Halley step, good to near machine precision on (0,1).
inline double normal_quantile(double p) {
  if (!(p > 0.0 && p < 1.0)) throw std::invalid_argument("normal_quantile: p outside (0,1)");
  static const double a[] = {-3.969683028665376e+01, 2.209460984245205e+02,
                             -2.759285104469687e+02, 1.383577518672690e+02,
                             -3.066479806614716e+01, 2.506628277459239e+00};
  static const double b[] = {-5.447609879822406e+01, 1.615858368580409e+02,
                             -1.556989798598866e+02, 6.680131188771972e+01,
                             -1.328068155288572e+01};
  static const double c[] = {-7.784894002430293e-03, -3.223964580411365e-01,
                             -2.400758277161838e+00, -2.549732539343734e+00,
                             4.374664141464968e+00,  2.938163982698783e+00};
  static const double d[] = {7.784695709041462e-03, 3.224671290700398e-01,
                             2.445134137142996e+00, 3.754408661907416e+00};
  const double plow = 0.02425;
  double x;
  if (p < plow) {
    double q = std::sqrt(-2.0 * std::log(p));
    x = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  } else if (p <= 1.0 - plow) {
    double q = p - 0.5, r = q * q;
    x = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
        (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
  } else {
    double q = std::sqrt(-2.0 * std::log(1.0 - p));
    x = -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  }
  double e = normal_cdf(x) - p;
  double u = e * std::sqrt(2.0 * M_PI) * std::exp(0.5 * x * x);
  return x - u / (1.0 + 0.5 * x * u);
}

// Independent per-coordinate prior. A joint log-density hook can replace the
// product density (sampling stays componentwise).
class Prior {
 public:
  struct Component {
    enum Kind { Uniform, Normal, TruncatedNormal } kind;
    double a = 0.0, b = 0.0;      // bounds (Uniform, TruncatedNormal)
    double mu = 0.0, sigma = 1.0; // location/scale (Normal, TruncatedNormal)
  };

  Prior() = default;

  static Prior uniform(double a, double b) {
    if (!(a < b)) throw std::invalid_argument("Prior::uniform: need a < b");
    Prior p;
    p.comps_.push_back({Component::Uniform, a, b, 0.0, 0.0});
    return p;
  }
  static Prior normal(double mu, double sigma) {
    if (!(sigma > 0)) throw std::invalid_argument("Prior::normal: need sigma > 0");
    Prior p;
    p.comps_.push_back({Component::Normal, 0.0, 0.0, mu, sigma});
    return p;
  }
  static Prior truncated_normal(double mu, double sigma, double a, double b) {
    if (!(sigma > 0)) throw std::invalid_argument("Prior::truncated_normal: need sigma > 0");
    if (!(a < b)) throw std::invalid_argument("Prior::truncated_normal: need a < b");
    Prior p;
    p.comps_.push_back({Component::TruncatedNormal, a, b, mu, sigma});
    return p;
  }

  Prior& append(const Prior& other) {
    comps_.insert(comps_.end(), other.comps_.begin(), other.comps_.end());
    return *this;
  }
  static Prior product(std::initializer_list<Prior> parts) {
    Prior p;
    for (const auto& q : parts) p.append(q);
    return p;
  }

  int dim() const { return static_cast<int>(comps_.size()); }
  const Component& component(int i) const { return comps_.at(i); }

  // Finite support bounds for bounded kinds; +-inf for Normal.
  double lower(int i) const {
    const auto& c = comps_.at(i);
    return c.kind == Component::Normal ? -std::numeric_limits<double>::infinity() : c.a;
  }
  double upper(int i) const {
    const auto& c = comps_.at(i);
    return c.kind == Component::Normal ? std::numeric_limits<double>::infinity() : c.b;
  }

  void set_joint_log_pdf_hook(std::function<double(const Vector&)> hook) {
    joint_hook_ = std::move(hook);
  }

  double log_pdf(const Vector& x) const {
    if (x.size() != dim()) throw std::invalid_argument("Prior::log_pdf: dimension mismatch");
    if (joint_hook_) return joint_hook_(x);
    double lp = 0.0;
    for (int i = 0; i < dim(); ++i) {
      const auto& c = comps_[i];
      double v = x(i);
      switch (c.kind) {
        case Component::Uniform:
          if (v < c.a || v > c.b) return kNegInf;
          lp += -std::log(c.b - c.a);
          break;
        case Component::Normal: {
          double z = (v - c.mu) / c.sigma;
          lp += -0.5 * (kLogTwoPi + z * z) - std::log(c.sigma);
          break;
        }
        case Component::TruncatedNormal: {
          if (v < c.a || v > c.b) return kNegInf;
          double z = (v - c.mu) / c.sigma;
          double mass = normal_cdf((c.b - c.mu) / c.sigma) - normal_cdf((c.a - c.mu) / c.sigma);
          lp += -0.5 * (kLogTwoPi + z * z) - std::log(c.sigma) - std::log(mass);
          break;
        }
      }
    }
    return lp;
  }

  bool in_support(const Vector& x) const { return std::isfinite(log_pdf(x)); }

  // One i.i.d. draw. Truncated normals use the inverse CDF restricted to
  // [a, b], so every draw consumes exactly one uniform.
  Vector sample(std::mt19937_64& rng) const {
    Vector x(dim());
    for (int i = 0; i < dim(); ++i) {
      const auto& c = comps_[i];
      switch (c.kind) {
        case Component::Uniform:
          x(i) = c.a + (c.b - c.a) * uniform01(rng);
          break;
        case Component::Normal:
          x(i) = c.mu + c.sigma * standard_normal(rng);
          break;
        case Component::TruncatedNormal: {
          double lo = normal_cdf((c.a - c.mu) / c.sigma);
          double hi = normal_cdf((c.b - c.mu) / c.sigma);
          double p = lo + (hi - lo) * uniform01(rng);
          p = std::min(std::max(p, std::numeric_limits<double>::min()),
                       1.0 - std::numeric_limits<double>::epsilon());
          x(i) = c.mu + c.sigma * normal_quantile(p);
          x(i) = std::min(std::max(x(i), c.a), c.b);
          break;
        }
      }
    }
    return x;
  }

 private:
  std::vector<Component> comps_;
  std::function<double(const Vector&)> joint_hook_;
};

}  // namespace ekinfer
