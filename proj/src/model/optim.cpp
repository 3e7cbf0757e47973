#include "steerlm/model/optim.hpp"

#include <cmath>
#include <stdexcept>

namespace steerlm {

nlohmann::json AdamConfig::to_json() const {
  return {{"optimizer", "adam"}, {"lr", lr}, {"beta1", beta1}, {"beta2", beta2}, {"eps", eps}, {"clip_norm", clip_norm}};
}

AdamConfig AdamConfig::from_json(const nlohmann::json& j) {
  AdamConfig c;
  c.lr = j.value("lr", c.lr);
  c.beta1 = j.value("beta1", c.beta1);
  c.beta2 = j.value("beta2", c.beta2);
  c.eps = j.value("eps", c.eps);
  c.clip_norm = j.value("clip_norm", c.clip_norm);
  return c;
}

Adam::Adam(AdamConfig cfg, std::vector<Tensor*> params) : cfg_(cfg), params_(std::move(params)) {
  if (!(cfg_.lr > 0)) throw std::invalid_argument("Adam: learning rate must be positive");
  for (Tensor* p : params_) {
    m_.emplace_back(p->shape());
    v_.emplace_back(p->shape());
  }
}

double Adam::step(const std::vector<Tensor>& grads) {
  if (grads.size() != params_.size()) throw std::invalid_argument("Adam: gradient count does not match parameters");
  double sq = 0;
  for (std::size_t i = 0; i < grads.size(); ++i) {
    if (grads[i].shape() != params_[i]->shape()) {
      throw ShapeError("Adam: gradient " + shape_str(grads[i].shape()) + " vs parameter " +
                       shape_str(params_[i]->shape()));
    }
    for (Scalar g : grads[i].vec()) sq += static_cast<double>(g) * g;
  }
  const double norm = std::sqrt(sq);
  const double clip = cfg_.clip_norm > 0 && norm > cfg_.clip_norm ? cfg_.clip_norm / norm : 1.0;
  ++t_;
  const double c1 = 1.0 - std::pow(cfg_.beta1, t_);
  const double c2 = 1.0 - std::pow(cfg_.beta2, t_);
  for (std::size_t i = 0; i < grads.size(); ++i) {
    Tensor& p = *params_[i];
    for (std::size_t j = 0; j < p.size(); ++j) {
      const double g = grads[i][j] * clip;
      const double m = cfg_.beta1 * m_[i][j] + (1 - cfg_.beta1) * g;
      const double v = cfg_.beta2 * v_[i][j] + (1 - cfg_.beta2) * g * g;
      m_[i][j] = static_cast<Scalar>(m);
      v_[i][j] = static_cast<Scalar>(v);
      p[j] -= static_cast<Scalar>(cfg_.lr * (m / c1) / (std::sqrt(v / c2) + cfg_.eps));
    }
  }
  return norm;
}

}  // namespace steerlm
