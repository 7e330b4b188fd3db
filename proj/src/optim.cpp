#include "hop/optim.hpp"

#include <cmath>
#include <string>

namespace hop {

void TrainConfig::validate() const {
  require(batch_size >= 1, ErrorKind::kConfig, "batch_size must be >= 1");
  require(max_epochs >= 1, ErrorKind::kConfig, "max_epochs must be >= 1");
  require(patience <= max_epochs, ErrorKind::kConfig, "patience must not exceed max_epochs");
  require(dropout >= 0.0 && dropout < 1.0, ErrorKind::kConfig, "dropout must be in [0, 1)");
  require(lr >= 0.0 && std::isfinite(lr), ErrorKind::kConfig, "lr must be finite and >= 0");
  require(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0, ErrorKind::kConfig,
          "Adam betas must be in [0, 1)");
  require(eps > 0.0, ErrorKind::kConfig, "Adam eps must be positive");
}

AdamState AdamState::for_params(std::span<Matrix* const> params) {
  AdamState s;
  for (const Matrix* p : params) {
    s.m.emplace_back(p->rows(), p->cols());
    s.v.emplace_back(p->rows(), p->cols());
  }
  return s;
}

void adam_step(std::span<Matrix* const> params, std::span<const Matrix* const> grads,
               AdamState& state, const TrainConfig& cfg) {
  require(params.size() == grads.size() && params.size() == state.m.size() &&
              params.size() == state.v.size(),
          ErrorKind::kShape, "adam_step: parameter/gradient/state count mismatch");
  for (std::size_t i = 0; i < params.size(); ++i)
    require(params[i]->rows() == grads[i]->rows() && params[i]->cols() == grads[i]->cols() &&
                state.m[i].size() == params[i]->size() && state.v[i].size() == params[i]->size(),
            ErrorKind::kShape, "adam_step: shape mismatch in tensor " + std::to_string(i));

  state.step += 1;
  const double t = static_cast<double>(state.step);
  const double correction1 = 1.0 - std::pow(cfg.beta1, t);
  const double correction2 = 1.0 - std::pow(cfg.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto p = params[i]->values();
    auto g = grads[i]->values();
    auto m = state.m[i].values();
    auto v = state.v[i].values();
    for (std::size_t k = 0; k < p.size(); ++k) {
      const double gk = g[k];
      const double mk = cfg.beta1 * m[k] + (1.0 - cfg.beta1) * gk;
      const double vk = cfg.beta2 * v[k] + (1.0 - cfg.beta2) * gk * gk;
      m[k] = static_cast<float>(mk);
      v[k] = static_cast<float>(vk);
      const double m_hat = mk / correction1;
      const double v_hat = vk / correction2;
      p[k] = static_cast<float>(p[k] - cfg.lr * m_hat / (std::sqrt(v_hat) + cfg.eps));
    }
  }
}

}  // namespace hop
