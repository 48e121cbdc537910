#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "core/errors.hpp"

namespace prefopt::ad {

using Shape = std::vector<int64_t>;

int64_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

// Dense row-major 64-bit tensor with an optional gradient buffer. Copies are
// shallow (shared storage), which is what the tape relies on: a leaf handed to
// an op is the same object whose .grad() fills during backward(). Scalars are
// rank-0 (empty shape, one element).
class Tensor {
 public:
  Tensor() : impl_(std::make_shared<Impl>()) {}

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor from_values(Shape shape, std::vector<double> values,
                            bool requires_grad = false);
  static Tensor scalar(double value);

  const Shape& shape() const { return impl_->shape; }
  int64_t size() const { return static_cast<int64_t>(impl_->values.size()); }

  std::vector<double>& values() { return impl_->values; }
  const std::vector<double>& values() const { return impl_->values; }

  double item() const;
  double at(int64_t row, int64_t col) const;
  int64_t rows() const;
  int64_t cols() const;

  bool requires_grad() const { return impl_->requires_grad; }
  void set_requires_grad(bool flag) { impl_->requires_grad = flag; }

  // Gradient buffer, allocated (zeroed) on first access.
  std::vector<double>& grad();
  const std::vector<double>* grad_if_allocated() const;
  void zero_grad();

  // Identity of the underlying storage.
  const void* id() const { return impl_.get(); }

 private:
  struct Impl {
    Shape shape;
    std::vector<double> values;
    std::vector<double> grad;
    bool requires_grad = false;
  };
  std::shared_ptr<Impl> impl_;
};

// Per-leaf result of a finite-difference gradient check.
struct GradCheckEntry {
  std::string name;
  double max_rel_error = 0.0;
  bool pass = true;
};

struct GradCheckReport {
  std::vector<GradCheckEntry> entries;
  bool pass = true;
};

// Wengert-list reverse-mode tape. Ops append nodes in execution order;
// backward() replays them in reverse exactly once and then resets the tape.
// Single-threaded per tape; independent tapes are safe concurrently.
class Tape {
 public:
  explicit Tape(bool recording = true) : recording_(recording) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  bool recording() const { return recording_; }
  size_t node_count() const { return nodes_.size(); }

  // --- forward ops -------------------------------------------------------
  Tensor matmul(Tensor a, Tensor b);     // (m,k) @ (k,n)
  Tensor matmul_nt(Tensor a, Tensor b);  // (m,k) @ (n,k)^T
  Tensor add(Tensor a, Tensor b);        // elementwise
  Tensor sub(Tensor a, Tensor b);
  Tensor mul(Tensor a, Tensor b);        // elementwise
  Tensor scale(Tensor a, double c);
  Tensor add_const(Tensor a, double c);
  Tensor add_rowvec(Tensor mat, Tensor vec);  // bias per row
  Tensor gather_rows(Tensor table, const std::vector<int64_t>& rows);
  Tensor gather_per_row(Tensor mat, const std::vector<int64_t>& cols);
  Tensor slice_elems(Tensor vec, int64_t begin, int64_t end);
  Tensor concat_cols(std::vector<Tensor> parts);
  Tensor log_softmax(Tensor a);  // over last axis
  Tensor softmax(Tensor a);      // over last axis
  Tensor sigmoid(Tensor a);
  Tensor log_sigmoid(Tensor a);
  Tensor tanh(Tensor a);
  Tensor causal_mask(Tensor scores);  // square; cols > row get -1e30
  Tensor sum(Tensor a);               // all elements -> scalar
  Tensor mean(Tensor a);              // all elements -> scalar

  // --- reverse pass ------------------------------------------------------
  // output must be scalar. Seeds d(output)=1, accumulates into .grad() of
  // every reachable tensor, then resets the tape for reuse.
  void backward(const Tensor& output);

 private:
  struct Node {
    const char* op;
    std::function<void()> back;
  };

  Tensor make_output(Shape shape, const char* op,
                     std::initializer_list<const Tensor*> inputs);
  void record(const char* op, std::function<void()> back);
  static void check_finite(const Tensor& t, const char* op);

  std::vector<Node> nodes_;
  bool recording_;
};

// Value used by causal_mask for disallowed positions. Finite so the
// no-NaN-forward invariant holds; softmax maps it to exactly 0.
inline constexpr double kMaskValue = -1e30;

// Builds a scalar loss from the given parameters on the given tape. The
// builder must be deterministic: grad_check evaluates it repeatedly.
using GraphBuilder = std::function<Tensor(Tape&, std::vector<Tensor>& params)>;

// Compares tape gradients of `builder` against central finite differences
// (step h) for every element of every named parameter. Relative error per
// element is |a-n| / max(1, |a|, |n|).
GradCheckReport grad_check(const GraphBuilder& builder,
                           std::vector<std::pair<std::string, Tensor>> params,
                           double tolerance, double h = 1e-5);

}  // namespace prefopt::ad
