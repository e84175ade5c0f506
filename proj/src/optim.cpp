#include "usf/optim.hpp"

#include <cmath>
#include <sstream>

namespace usf::opt {

using nd::Tensor;

OptimizerState init_state(const std::map<std::string, Tensor>& params) {
  OptimizerState s;
  for (const auto& [name, p] : params) {
    s.m.emplace(name, Tensor(p.shape));
    s.v.emplace(name, Tensor(p.shape));
  }
  return s;
}

namespace {

// Both maps must hold exactly the same keys; reports the difference otherwise.
void check_same_keys(const std::map<std::string, Tensor>& a, const std::map<std::string, Tensor>& b,
                     const char* a_name, const char* b_name) {
  std::ostringstream missing;
  int n = 0;
  for (const auto& [k, t] : a)
    if (!b.count(k)) missing << (n++ ? ", " : "") << k;
  for (const auto& [k, t] : b)
    if (!a.count(k)) missing << (n++ ? ", " : "") << k;
  if (n)
    throw ValidationError(std::string("adamw_step: key mismatch between ") + a_name + " and " +
                          b_name + ": " + missing.str());
}

}  // namespace

void adamw_step(std::map<std::string, Tensor>& params, const std::map<std::string, Tensor>& grads,
                OptimizerState& state, double lr, double wd, double beta1, double beta2,
                double eps) {
  check_same_keys(params, grads, "params", "grads");
  check_same_keys(params, state.m, "params", "state.m");
  check_same_keys(params, state.v, "params", "state.v");
  state.t += 1;
  const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(state.t));
  const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(state.t));
  for (auto& [name, theta] : params) {
    const Tensor& g = grads.at(name);
    Tensor& m = state.m.at(name);
    Tensor& v = state.v.at(name);
    if (!g.same_shape(theta))
      throw ValidationError("adamw_step: gradient shape " + nd::shape_str(g.shape) +
                            " does not match parameter '" + name + "' " +
                            nd::shape_str(theta.shape));
    for (size_t i = 0; i < theta.v.size(); ++i) {
      m.v[i] = beta1 * m.v[i] + (1.0 - beta1) * g.v[i];
      v.v[i] = beta2 * v.v[i] + (1.0 - beta2) * g.v[i] * g.v[i];
      const double mhat = m.v[i] / bc1;
      const double vhat = v.v[i] / bc2;
      theta.v[i] -= lr * (mhat / (std::sqrt(vhat) + eps) + wd * theta.v[i]);
    }
  }
}

double lr_at(int epoch, const ScheduleConfig& cfg) {
  if (!(cfg.warmup_fraction > 0.0 && cfg.warmup_fraction < 1.0))
    throw ValidationError("lr_at: warmup_fraction must lie in (0,1)");
  if (cfg.min_lr < 0.0 || cfg.base_lr <= cfg.min_lr)
    throw ValidationError("lr_at: need base_lr > min_lr >= 0");
  if (cfg.total_epochs < 1) throw ValidationError("lr_at: total_epochs must be positive");
  if (epoch < 0 || epoch >= cfg.total_epochs)
    throw ValidationError("lr_at: epoch " + std::to_string(epoch) + " outside [0," +
                          std::to_string(cfg.total_epochs) + ")");
  const int warm = static_cast<int>(std::ceil(cfg.warmup_fraction * cfg.total_epochs));
  if (epoch < warm) return cfg.base_lr * (epoch + 1) / warm;
  const double t = static_cast<double>(epoch - warm) / (cfg.total_epochs - warm);
  return cfg.min_lr + (cfg.base_lr - cfg.min_lr) * 0.5 * (1.0 + std::cos(M_PI * t));
}

}  // namespace usf::opt
