#pragma once

#include <cstdint>
#include <set>
#include <string>
#include <vector>

#include "core/model.hpp"

namespace prefopt::trainer {

struct AdamWConfig {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.01;

  void validate() const;
};

struct FreezeMask {
  std::set<std::string> frozen_names;

  // Default partition: the entire encoder group is frozen.
  static FreezeMask encoder_frozen(const model::Model& m);
  static FreezeMask none() { return {}; }
  bool is_frozen(const std::string& name) const {
    return frozen_names.count(name) > 0;
  }
  void validate_against(const model::Model& m) const;
};

// Exact ratio of non-frozen parameter elements to the total.
double trainable_fraction(const model::Model& m, const FreezeMask& mask);

// Decoupled-weight-decay Adam over the non-frozen entries of a parameter
// list. State exists only for trainable parameters; frozen tensors are never
// touched. The list must outlive the optimizer.
class AdamW {
 public:
  AdamW(std::vector<model::Param>& params, FreezeMask mask, AdamWConfig cfg);
  AdamW(model::Model& m, FreezeMask mask, AdamWConfig cfg)
      : AdamW(m.params(), std::move(mask), cfg) {}

  // One update from the gradients currently on the parameters. Every
  // trainable parameter must have an allocated gradient buffer.
  void step();

  void zero_grad();
  int64_t step_count() const { return t_; }
  const FreezeMask& mask() const { return mask_; }
  const AdamWConfig& config() const { return cfg_; }

  struct SlotState {
    std::string name;
    std::vector<double> m, v;
  };
  std::vector<SlotState>& slots() { return slots_; }
  const std::vector<SlotState>& slots() const { return slots_; }
  void restore(int64_t t, std::vector<SlotState> slots);

 private:
  std::vector<model::Param>& params_;
  FreezeMask mask_;
  AdamWConfig cfg_;
  int64_t t_ = 0;
  std::vector<SlotState> slots_;   // parallel to trainable params
  std::vector<size_t> trainable_;  // indices into params_
};

}  // namespace prefopt::trainer
