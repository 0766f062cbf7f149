#pragma once

#include <random>
#include <vector>

#include "peerstyle/adam.hpp"
#include "peerstyle/nn.hpp"
#include "peerstyle/tpfr.hpp"

namespace peerstyle {

enum class ParamGroup { encoder, aux_decoder, main_decoder, tpfr, discriminator };

inline constexpr ParamGroup kAllGroups[] = {ParamGroup::encoder, ParamGroup::aux_decoder, ParamGroup::main_decoder,
                                            ParamGroup::tpfr, ParamGroup::discriminator};

const char* group_name(ParamGroup g);

struct Model {
  Model() = default;
  /// Initializes every network from `rng` in a fixed order.
  Model(const NetConfig& config, std::mt19937_64& rng);

  ParameterList parameters(ParamGroup group) const;
  ParameterList parameters(std::initializer_list<ParamGroup> groups) const;
  /// All groups, in kAllGroups order. Names are unique.
  ParameterList all_parameters() const;

  /// Toggles requires_grad on every parameter of `group`.
  void set_trainable(ParamGroup group, bool trainable) const;

  NetConfig config;
  Encoder encoder;
  Decoder aux_decoder;
  Decoder main_decoder;
  Tpfr tpfr;
  Discriminator discriminator;
};

}  // namespace peerstyle
