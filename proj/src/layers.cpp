#include "probsal/layers.hpp"

#include <cmath>

#include "probsal/error.hpp"

namespace probsal {

Conv2d::Conv2d(ConvSpec spec) : spec_(spec) {
  require(spec.in > 0 && spec.out > 0 && spec.kernel > 0, "Conv2d: non-positive dims");
  if (spec_.pad < 0) spec_.pad = spec_.dilation * (spec_.kernel - 1) / 2;
  weight_ = ag::parameter(Tensor(Shape{spec_.out, spec_.in, spec_.kernel, spec_.kernel}));
  bias_ = ag::parameter(Tensor(Shape{1, spec_.out, 1, 1}));
}

ag::Var Conv2d::operator()(const ag::Var& x) const {
  return ag::conv2d(x, weight_, bias_, {spec_.stride, spec_.pad, spec_.dilation});
}

void Conv2d::init(InitScheme scheme, double std, Rng& rng) {
  Tensor& w = weight_->mutable_value();
  switch (scheme) {
    case InitScheme::He: {
      const double fan_in = double(spec_.in) * spec_.kernel * spec_.kernel;
      const double s = std::sqrt(2.0 / fan_in);
      for (auto& v : w.vec()) v = s * rng.normal();
      break;
    }
    case InitScheme::Gaussian:
      for (auto& v : w.vec()) v = std * rng.normal();
      break;
    case InitScheme::Zero:
      w.fill(0.0);
      break;
  }
  // Biases start at a constant 0.
  bias_->mutable_value().fill(0.0);
}

void Conv2d::collect(ParamList& out, const std::string& name) const {
  out.push_back({name + ".weight", weight_});
  out.push_back({name + ".bias", bias_});
}

void zero_grads(const ParamList& params) {
  for (const auto& p : params) p.var->zero_grad();
}

std::size_t count_parameters(const ParamList& params) {
  std::size_t n = 0;
  for (const auto& p : params) n += p.var->value().numel();
  return n;
}

}  // namespace probsal
