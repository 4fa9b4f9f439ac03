#include "mfauc/losses.hpp"

namespace mfauc {

LossKind parse_loss_kind(std::string_view name) {
  if (name == "square_hinge") return LossKind::square_hinge;
  if (name == "square") return LossKind::square;
  if (name == "sigmoid") return LossKind::sigmoid;
  if (name == "logistic") return LossKind::logistic;
  throw ParameterError("unknown loss '" + std::string(name) + "'");
}

WeightKind parse_weight_kind(std::string_view name) {
  if (name == "identity") return WeightKind::identity;
  if (name == "tanh") return WeightKind::tanh;
  throw ParameterError("unknown weighting '" + std::string(name) + "'");
}

std::string to_string(LossKind kind) {
  switch (kind) {
    case LossKind::square_hinge: return "square_hinge";
    case LossKind::square: return "square";
    case LossKind::sigmoid: return "sigmoid";
    case LossKind::logistic: return "logistic";
  }
  return "?";
}

std::string to_string(WeightKind kind) {
  return kind == WeightKind::identity ? "identity" : "tanh";
}

}  // namespace mfauc
