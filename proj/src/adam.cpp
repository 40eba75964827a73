#include "sert/adam.hpp"

#include <cmath>
#include <string>

#include "sert/errors.hpp"

namespace sert {

void adam_step(std::span<Tensor> params, AdamState& state) {
  for (std::size_t p = 0; p < params.size(); ++p) {
    for (double g : params[p].grad()) {
      if (!std::isfinite(g)) throw NumericError("adam_step: non-finite gradient in parameter " + std::to_string(p));
    }
  }
  if (state.m.empty()) {
    for (const auto& t : params) {
      state.m.emplace_back(t.size(), 0.0);
      state.v.emplace_back(t.size(), 0.0);
    }
  }
  if (state.m.size() != params.size()) throw UsageError("adam_step: state built for a different parameter list");
  for (std::size_t p = 0; p < params.size(); ++p) {
    if (state.m[p].size() != params[p].size()) throw UsageError("adam_step: moment buffer shape mismatch");
  }

  const auto& o = state.options;
  state.step += 1;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(o.beta1, t);
  const double c2 = 1.0 - std::pow(o.beta2, t);
  for (std::size_t p = 0; p < params.size(); ++p) {
    auto w = params[p].mutable_data();
    auto g = params[p].grad();
    auto& m = state.m[p];
    auto& v = state.v[p];
    for (std::size_t i = 0; i < w.size(); ++i) {
      const double gi = g.empty() ? 0.0 : g[i];
      m[i] = o.beta1 * m[i] + (1.0 - o.beta1) * gi;
      v[i] = o.beta2 * v[i] + (1.0 - o.beta2) * gi * gi;
      const double mhat = m[i] / c1;
      const double vhat = v[i] / c2;
      w[i] -= o.lr * mhat / (std::sqrt(vhat) + o.eps);
    }
  }
}

}  // namespace sert
