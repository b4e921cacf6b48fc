// SPDX-License-Identifier: Apache-2.0
#include "lrc/nn/adam.hpp"

#include <cmath>

namespace lrc::nn {

template <typename T>
AdamState<T> AdamState<T>::init(std::span<const Parameter<T>> params, AdamConfig cfg) {
  AdamState s;
  s.config = cfg;
  for (const auto& p : params) {
    s.first_moment.emplace_back(p.value.size(), T(0));
    s.second_moment.emplace_back(p.value.size(), T(0));
  }
  return s;
}

template <typename T>
void adam_step(std::span<Parameter<T>> params, AdamState<T>& state, double lr) {
  require(lr > 0.0, Errc::domain, "learning rate must be positive");
  require(state.first_moment.size() == params.size(), Errc::shape, "optimizer state does not match parameters");
  for (std::size_t p = 0; p < params.size(); ++p) {
    const auto& prm = params[p];
    require(prm.grad.size() == prm.value.size() && state.first_moment[p].size() == prm.value.size(), Errc::shape,
            "gradient/moment shape mismatch for " + prm.name);
    for (T g : prm.grad.data)
      require(std::isfinite(g), Errc::divergence, "non-finite gradient in " + prm.name);
  }

  state.step_count += 1;
  const auto& cfg = state.config;
  const double t = static_cast<double>(state.step_count);
  const T b1 = static_cast<T>(cfg.beta1), b2 = static_cast<T>(cfg.beta2);
  const T c1 = static_cast<T>(1.0 - std::pow(cfg.beta1, t));
  const T c2 = static_cast<T>(1.0 - std::pow(cfg.beta2, t));
  const T eps = static_cast<T>(cfg.epsilon);
  const T rate = static_cast<T>(lr);
  for (std::size_t p = 0; p < params.size(); ++p) {
    auto& v = params[p].value.data;
    const auto& g = params[p].grad.data;
    auto& m1 = state.first_moment[p];
    auto& m2 = state.second_moment[p];
    for (std::size_t i = 0; i < v.size(); ++i) {
      m1[i] = b1 * m1[i] + (T(1) - b1) * g[i];
      m2[i] = b2 * m2[i] + (T(1) - b2) * g[i] * g[i];
      const T mhat = m1[i] / c1;
      const T vhat = m2[i] / c2;
      v[i] -= rate * mhat / (std::sqrt(vhat) + eps);
    }
  }
}

template struct AdamState<float>;
template struct AdamState<double>;
template void adam_step<float>(std::span<Parameter<float>>, AdamState<float>&, double);
template void adam_step<double>(std::span<Parameter<double>>, AdamState<double>&, double);

}  // namespace lrc::nn
