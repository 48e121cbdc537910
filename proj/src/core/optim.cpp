#include "core/optim.hpp"

#include <cmath>

namespace prefopt::trainer {

void AdamWConfig::validate() const {
  if (!(lr >= 0.0)) throw ConfigError("adamw: lr must be >= 0");
  if (beta1 < 0.0 || beta1 >= 1.0 || beta2 < 0.0 || beta2 >= 1.0)
    throw ConfigError("adamw: betas must be in [0, 1)");
  if (!(eps > 0.0)) throw ConfigError("adamw: eps must be > 0");
  if (weight_decay < 0.0) throw ConfigError("adamw: weight_decay must be >= 0");
}

FreezeMask FreezeMask::encoder_frozen(const model::Model& m) {
  FreezeMask mask;
  for (const model::Param& p : m.params())
    if (p.group == model::ParamGroup::kEncoder) mask.frozen_names.insert(p.name);
  return mask;
}

void FreezeMask::validate_against(const model::Model& m) const {
  for (const std::string& name : frozen_names)
    if (!m.has_param(name))
      throw ConfigError("freeze mask names unknown parameter '" + name + "'");
}

double trainable_fraction(const model::Model& m, const FreezeMask& mask) {
  mask.validate_against(m);
  int64_t total = 0, trainable = 0;
  for (const model::Param& p : m.params()) {
    total += p.tensor.size();
    if (!mask.is_frozen(p.name)) trainable += p.tensor.size();
  }
  if (total == 0) throw UsageError("trainable_fraction: model has no parameters");
  return static_cast<double>(trainable) / static_cast<double>(total);
}

AdamW::AdamW(std::vector<model::Param>& params, FreezeMask mask,
             AdamWConfig cfg)
    : params_(params), mask_(std::move(mask)), cfg_(cfg) {
  cfg_.validate();
  for (const std::string& name : mask_.frozen_names) {
    bool found = false;
    for (const model::Param& p : params_) found = found || p.name == name;
    if (!found)
      throw ConfigError("freeze mask names unknown parameter '" + name + "'");
  }
  for (size_t i = 0; i < params_.size(); ++i) {
    model::Param& p = params_[i];
    const bool frozen = mask_.is_frozen(p.name);
    p.tensor.set_requires_grad(!frozen);
    if (frozen) continue;
    trainable_.push_back(i);
    SlotState slot;
    slot.name = p.name;
    slot.m.assign(static_cast<size_t>(p.tensor.size()), 0.0);
    slot.v.assign(static_cast<size_t>(p.tensor.size()), 0.0);
    slots_.push_back(std::move(slot));
  }
}

void AdamW::zero_grad() {
  for (size_t i : trainable_) params_[i].tensor.zero_grad();
}

void AdamW::step() {
  ++t_;
  const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  for (size_t s = 0; s < trainable_.size(); ++s) {
    model::Param& p = params_[trainable_[s]];
    const std::vector<double>* grad = p.tensor.grad_if_allocated();
    if (grad == nullptr)
      throw UsageError("adamw: missing gradient for trainable parameter '" +
                       p.name + "'");
    SlotState& slot = slots_[s];
    auto& w = p.tensor.values();
    for (size_t i = 0; i < w.size(); ++i) {
      const double g = (*grad)[i];
      slot.m[i] = cfg_.beta1 * slot.m[i] + (1.0 - cfg_.beta1) * g;
      slot.v[i] = cfg_.beta2 * slot.v[i] + (1.0 - cfg_.beta2) * g * g;
      const double m_hat = slot.m[i] / bc1;
      const double v_hat = slot.v[i] / bc2;
      w[i] -= cfg_.lr * (m_hat / (std::sqrt(v_hat) + cfg_.eps) +
                         cfg_.weight_decay * w[i]);
    }
  }
}

void AdamW::restore(int64_t t, std::vector<SlotState> slots) {
  if (slots.size() != slots_.size())
    throw DataError("adamw restore: state has " + std::to_string(slots.size()) +
                    " slots, optimizer expects " +
                    std::to_string(slots_.size()));
  for (size_t i = 0; i < slots.size(); ++i) {
    if (slots[i].name != slots_[i].name ||
        slots[i].m.size() != slots_[i].m.size())
      throw DataError("adamw restore: slot mismatch at '" + slots[i].name +
                      "'");
  }
  t_ = t;
  slots_ = std::move(slots);
}

}  // namespace prefopt::trainer
