#pragma once

#include <map>
#include <string>

#include "usf/tensor.hpp"

namespace usf::opt {

// Per-parameter first/second moments plus the shared step counter.
struct OptimizerState {
  std::map<std::string, nd::Tensor> m;
  std::map<std::string, nd::Tensor> v;
  int64_t t = 0;
};

OptimizerState init_state(const std::map<std::string, nd::Tensor>& params);

// Decoupled-weight-decay Adam update, applied in place:
//   m <- b1*m + (1-b1)*g;  v <- b2*v + (1-b2)*g^2
//   theta <- theta - lr*(mhat/(sqrt(vhat)+eps) + wd*theta)
void adamw_step(std::map<std::string, nd::Tensor>& params,
                const std::map<std::string, nd::Tensor>& grads, OptimizerState& state, double lr,
                double wd, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);

struct ScheduleConfig {
  double base_lr = 1e-3;
  int total_epochs = 100;
  double warmup_fraction = 0.10;
  double min_lr = 0.0;
};

// Linear warmup over the first ceil(warmup_fraction*total) epochs, then a
// cosine ramp from base_lr down to min_lr.
double lr_at(int epoch, const ScheduleConfig& cfg);

}  // namespace usf::opt
