#pragma once

#include <string>
#include <vector>

#include "probsal/ops.hpp"
#include "probsal/rng.hpp"

namespace probsal {

struct NamedParam {
  std::string name;
  ag::Var var;
};
using ParamList = std::vector<NamedParam>;

enum class InitScheme {
  He,        // N(0, 2/fan_in); stands in for pretrained encoder weights
  Gaussian,  // N(0, std) for newly added layers
  Zero,
};

struct ConvSpec {
  int in = 1;
  int out = 1;
  int kernel = 3;
  int stride = 1;
  int dilation = 1;
  // -1 selects "same" padding for stride 1: dilation * (kernel - 1) / 2.
  int pad = -1;
};

class Conv2d {
 public:
  Conv2d() = default;
  explicit Conv2d(ConvSpec spec);

  ag::Var operator()(const ag::Var& x) const;
  void init(InitScheme scheme, double std, Rng& rng);
  void collect(ParamList& out, const std::string& name) const;

  const ConvSpec& spec() const { return spec_; }
  const ag::Var& weight() const { return weight_; }
  const ag::Var& bias() const { return bias_; }

 private:
  ConvSpec spec_;
  ag::Var weight_;
  ag::Var bias_;
};

void zero_grads(const ParamList& params);
std::size_t count_parameters(const ParamList& params);

}  // namespace probsal
