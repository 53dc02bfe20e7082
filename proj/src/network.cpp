#include "feonet/network.hpp"

namespace feonet {

std::string to_string(Activation a) {
  switch (a) {
    case Activation::identity: return "identity";
    case Activation::relu: return "relu";
    case Activation::swish: return "swish";
    case Activation::sigmoid: return "sigmoid";
  }
  return "unknown";
}

Activation parse_activation(std::string_view tag) {
  if (tag == "identity") return Activation::identity;
  if (tag == "relu") return Activation::relu;
  if (tag == "swish") return Activation::swish;
  if (tag == "sigmoid") return Activation::sigmoid;
  throw Error(ErrorCode::parse_error, "unknown activation '" + std::string(tag) + "' (identity, relu, swish, sigmoid)");
}

double lipschitz_constant(Activation a) {
  switch (a) {
    case Activation::swish: return 1.1;
    case Activation::sigmoid: return 0.25;
    default: return 1.0;
  }
}

}  // namespace feonet
