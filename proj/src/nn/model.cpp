#include "peerstyle/model.hpp"

namespace peerstyle {

const char* group_name(ParamGroup g) {
  switch (g) {
    case ParamGroup::encoder: return "encoder";
    case ParamGroup::aux_decoder: return "aux_decoder";
    case ParamGroup::main_decoder: return "main_decoder";
    case ParamGroup::tpfr: return "tpfr";
    case ParamGroup::discriminator: return "discriminator";
  }
  return "?";
}

Model::Model(const NetConfig& c, std::mt19937_64& rng)
    : config(c),
      encoder(c, rng),
      aux_decoder(c, rng),
      main_decoder(c, rng),
      tpfr(c, rng),
      discriminator(c, rng) {}

ParameterList Model::parameters(ParamGroup group) const {
  ParameterList out;
  const std::string prefix = group_name(group);
  switch (group) {
    case ParamGroup::encoder: encoder.collect(prefix, out); break;
    case ParamGroup::aux_decoder: aux_decoder.collect(prefix, out); break;
    case ParamGroup::main_decoder: main_decoder.collect(prefix, out); break;
    case ParamGroup::tpfr: tpfr.collect(prefix, out); break;
    case ParamGroup::discriminator: discriminator.collect(prefix, out); break;
  }
  return out;
}

ParameterList Model::parameters(std::initializer_list<ParamGroup> groups) const {
  ParameterList out;
  for (ParamGroup g : groups) {
    ParameterList part = parameters(g);
    out.insert(out.end(), part.begin(), part.end());
  }
  return out;
}

ParameterList Model::all_parameters() const {
  return parameters({ParamGroup::encoder, ParamGroup::aux_decoder, ParamGroup::main_decoder, ParamGroup::tpfr,
                     ParamGroup::discriminator});
}

void Model::set_trainable(ParamGroup group, bool trainable) const {
  for (const auto& p : parameters(group)) {
    Tensor t = p.tensor;
    t.set_requires_grad(trainable);
  }
}

}  // namespace peerstyle
