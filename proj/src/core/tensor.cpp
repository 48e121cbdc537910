#include "core/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace prefopt::ad {

int64_t shape_numel(const Shape& shape) {
  int64_t n = 1;
  for (int64_t d : shape) n *= d;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << "(";
  for (size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ",";
    os << shape[i];
  }
  os << ")";
  return os.str();
}

namespace {

[[noreturn]] void shape_error(const char* op, const Shape& a, const Shape& b) {
  throw DimensionError(std::string(op) + ": incompatible shapes " +
                       shape_str(a) + " and " + shape_str(b));
}

// out(m,n) += A(m,k) @ B(k,n)
void mm_acc(double* out, const double* a, const double* b, int64_t m,
            int64_t k, int64_t n) {
  for (int64_t i = 0; i < m; ++i) {
    double* out_row = out + i * n;
    const double* a_row = a + i * k;
    for (int64_t p = 0; p < k; ++p) {
      const double av = a_row[p];
      if (av == 0.0) continue;
      const double* b_row = b + p * n;
      for (int64_t j = 0; j < n; ++j) out_row[j] += av * b_row[j];
    }
  }
}

// out(m,n) += A(m,k) @ B(n,k)^T
void mm_nt_acc(double* out, const double* a, const double* b, int64_t m,
               int64_t k, int64_t n) {
  for (int64_t i = 0; i < m; ++i) {
    const double* a_row = a + i * k;
    double* out_row = out + i * n;
    for (int64_t j = 0; j < n; ++j) {
      const double* b_row = b + j * k;
      double acc = 0.0;
      for (int64_t p = 0; p < k; ++p) acc += a_row[p] * b_row[p];
      out_row[j] += acc;
    }
  }
}

// out(k,n) += X(m,k)^T @ Y(m,n)
void mm_tn_acc(double* out, const double* x, const double* y, int64_t m,
               int64_t k, int64_t n) {
  for (int64_t i = 0; i < m; ++i) {
    const double* x_row = x + i * k;
    const double* y_row = y + i * n;
    for (int64_t p = 0; p < k; ++p) {
      const double xv = x_row[p];
      if (xv == 0.0) continue;
      double* out_row = out + p * n;
      for (int64_t j = 0; j < n; ++j) out_row[j] += xv * y_row[j];
    }
  }
}

// Last-axis view: any tensor of rank >= 1 as (rows x cols).
void last_axis_dims(const Tensor& t, const char* op, int64_t* rows,
                    int64_t* cols) {
  if (t.shape().empty())
    throw DimensionError(std::string(op) + ": requires rank >= 1, got scalar");
  *cols = t.shape().back();
  if (*cols <= 0)
    throw DomainError(std::string(op) + ": empty reduction axis");
  *rows = t.size() / *cols;
}

double stable_sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double stable_log_sigmoid(double x) {
  // -softplus(-x), branch form keeps both tails finite
  if (x >= 0.0) return -std::log1p(std::exp(-x));
  return x - std::log1p(std::exp(x));
}

}  // namespace

// --- Tensor --------------------------------------------------------------

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  return full(std::move(shape), 0.0, requires_grad);
}

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  Tensor t;
  const int64_t n = shape_numel(shape);
  if (n < 0) throw DimensionError("tensor: negative dimension");
  t.impl_->shape = std::move(shape);
  t.impl_->values.assign(static_cast<size_t>(n), value);
  t.impl_->requires_grad = requires_grad;
  return t;
}

Tensor Tensor::from_values(Shape shape, std::vector<double> values,
                           bool requires_grad) {
  const int64_t n = shape_numel(shape);
  if (n != static_cast<int64_t>(values.size()))
    throw DimensionError("tensor: " + std::to_string(values.size()) +
                         " values do not fill shape " + shape_str(shape));
  Tensor t;
  t.impl_->shape = std::move(shape);
  t.impl_->values = std::move(values);
  t.impl_->requires_grad = requires_grad;
  return t;
}

Tensor Tensor::scalar(double value) { return from_values({}, {value}); }

double Tensor::item() const {
  if (size() != 1)
    throw UsageError("item: tensor has " + std::to_string(size()) +
                     " elements, expected 1");
  return impl_->values[0];
}

int64_t Tensor::rows() const {
  if (impl_->shape.size() != 2) throw UsageError("rows: tensor is not 2-D");
  return impl_->shape[0];
}

int64_t Tensor::cols() const {
  if (impl_->shape.size() != 2) throw UsageError("cols: tensor is not 2-D");
  return impl_->shape[1];
}

double Tensor::at(int64_t row, int64_t col) const {
  return impl_->values[static_cast<size_t>(row * cols() + col)];
}

std::vector<double>& Tensor::grad() {
  if (impl_->grad.size() != impl_->values.size())
    impl_->grad.assign(impl_->values.size(), 0.0);
  return impl_->grad;
}

const std::vector<double>* Tensor::grad_if_allocated() const {
  if (impl_->grad.size() != impl_->values.size()) return nullptr;
  return &impl_->grad;
}

void Tensor::zero_grad() { impl_->grad.assign(impl_->values.size(), 0.0); }

// --- Tape ----------------------------------------------------------------

void Tape::check_finite(const Tensor& t, const char* op) {
  for (double v : t.values()) {
    if (!std::isfinite(v))
      throw NumericError(std::string("op '") + op +
                         "' produced a non-finite value");
  }
}

Tensor Tape::make_output(Shape shape, const char* op,
                         std::initializer_list<const Tensor*> inputs) {
  Tensor out = Tensor::zeros(std::move(shape));
  if (recording_) {
    for (const Tensor* in : inputs) {
      if (in->requires_grad()) {
        out.set_requires_grad(true);
        break;
      }
    }
  }
  (void)op;
  return out;
}

void Tape::record(const char* op, std::function<void()> back) {
  nodes_.push_back(Node{op, std::move(back)});
}

Tensor Tape::matmul(Tensor a, Tensor b) {
  if (a.shape().size() != 2 || b.shape().size() != 2 ||
      a.shape()[1] != b.shape()[0])
    shape_error("matmul", a.shape(), b.shape());
  const int64_t m = a.shape()[0], k = a.shape()[1], n = b.shape()[1];
  Tensor out = make_output({m, n}, "matmul", {&a, &b});
  mm_acc(out.values().data(), a.values().data(), b.values().data(), m, k, n);
  check_finite(out, "matmul");
  if (out.requires_grad()) {
    record("matmul", [a, b, out, m, k, n]() mutable {
      const double* dc = out.grad().data();
      if (a.requires_grad())
        mm_nt_acc(a.grad().data(), dc, b.values().data(), m, n, k);
      if (b.requires_grad())
        mm_tn_acc(b.grad().data(), a.values().data(), dc, m, k, n);
    });
  }
  return out;
}

Tensor Tape::matmul_nt(Tensor a, Tensor b) {
  if (a.shape().size() != 2 || b.shape().size() != 2 ||
      a.shape()[1] != b.shape()[1])
    shape_error("matmul_nt", a.shape(), b.shape());
  const int64_t m = a.shape()[0], k = a.shape()[1], n = b.shape()[0];
  Tensor out = make_output({m, n}, "matmul_nt", {&a, &b});
  mm_nt_acc(out.values().data(), a.values().data(), b.values().data(), m, k,
            n);
  check_finite(out, "matmul_nt");
  if (out.requires_grad()) {
    record("matmul_nt", [a, b, out, m, k, n]() mutable {
      const double* dc = out.grad().data();
      if (a.requires_grad())
        mm_acc(a.grad().data(), dc, b.values().data(), m, n, k);
      if (b.requires_grad())
        mm_tn_acc(b.grad().data(), dc, a.values().data(), m, n, k);
    });
  }
  return out;
}

Tensor Tape::add(Tensor a, Tensor b) {
  if (a.shape() != b.shape()) shape_error("add", a.shape(), b.shape());
  Tensor out = make_output(a.shape(), "add", {&a, &b});
  const size_t n = a.values().size();
  for (size_t i = 0; i < n; ++i)
    out.values()[i] = a.values()[i] + b.values()[i];
  check_finite(out, "add");
  if (out.requires_grad()) {
    record("add", [a, b, out]() mutable {
      const auto& d = out.grad();
      if (a.requires_grad()) {
        auto& ga = a.grad();
        for (size_t i = 0; i < d.size(); ++i) ga[i] += d[i];
      }
      if (b.requires_grad()) {
        auto& gb = b.grad();
        for (size_t i = 0; i < d.size(); ++i) gb[i] += d[i];
      }
    });
  }
  return out;
}

Tensor Tape::sub(Tensor a, Tensor b) {
  if (a.shape() != b.shape()) shape_error("sub", a.shape(), b.shape());
  Tensor out = make_output(a.shape(), "sub", {&a, &b});
  const size_t n = a.values().size();
  for (size_t i = 0; i < n; ++i)
    out.values()[i] = a.values()[i] - b.values()[i];
  check_finite(out, "sub");
  if (out.requires_grad()) {
    record("sub", [a, b, out]() mutable {
      const auto& d = out.grad();
      if (a.requires_grad()) {
        auto& ga = a.grad();
        for (size_t i = 0; i < d.size(); ++i) ga[i] += d[i];
      }
      if (b.requires_grad()) {
        auto& gb = b.grad();
        for (size_t i = 0; i < d.size(); ++i) gb[i] -= d[i];
      }
    });
  }
  return out;
}

Tensor Tape::mul(Tensor a, Tensor b) {
  if (a.shape() != b.shape()) shape_error("mul", a.shape(), b.shape());
  Tensor out = make_output(a.shape(), "mul", {&a, &b});
  const size_t n = a.values().size();
  for (size_t i = 0; i < n; ++i)
    out.values()[i] = a.values()[i] * b.values()[i];
  check_finite(out, "mul");
  if (out.requires_grad()) {
    record("mul", [a, b, out]() mutable {
      const auto& d = out.grad();
      if (a.requires_grad()) {
        auto& ga = a.grad();
        for (size_t i = 0; i < d.size(); ++i) ga[i] += d[i] * b.values()[i];
      }
      if (b.requires_grad()) {
        auto& gb = b.grad();
        for (size_t i = 0; i < d.size(); ++i) gb[i] += d[i] * a.values()[i];
      }
    });
  }
  return out;
}

Tensor Tape::scale(Tensor a, double c) {
  Tensor out = make_output(a.shape(), "scale", {&a});
  const size_t n = a.values().size();
  for (size_t i = 0; i < n; ++i) out.values()[i] = a.values()[i] * c;
  check_finite(out, "scale");
  if (out.requires_grad()) {
    record("scale", [a, out, c]() mutable {
      const auto& d = out.grad();
      auto& ga = a.grad();
      for (size_t i = 0; i < d.size(); ++i) ga[i] += d[i] * c;
    });
  }
  return out;
}

Tensor Tape::add_const(Tensor a, double c) {
  Tensor out = make_output(a.shape(), "add_const", {&a});
  const size_t n = a.values().size();
  for (size_t i = 0; i < n; ++i) out.values()[i] = a.values()[i] + c;
  check_finite(out, "add_const");
  if (out.requires_grad()) {
    record("add_const", [a, out]() mutable {
      const auto& d = out.grad();
      auto& ga = a.grad();
      for (size_t i = 0; i < d.size(); ++i) ga[i] += d[i];
    });
  }
  return out;
}

Tensor Tape::add_rowvec(Tensor mat, Tensor vec) {
  if (mat.shape().size() != 2 || vec.shape().size() != 1 ||
      mat.shape()[1] != vec.shape()[0])
    shape_error("add_rowvec", mat.shape(), vec.shape());
  const int64_t m = mat.shape()[0], n = mat.shape()[1];
  Tensor out = make_output({m, n}, "add_rowvec", {&mat, &vec});
  for (int64_t i = 0; i < m; ++i)
    for (int64_t j = 0; j < n; ++j)
      out.values()[i * n + j] = mat.values()[i * n + j] + vec.values()[j];
  check_finite(out, "add_rowvec");
  if (out.requires_grad()) {
    record("add_rowvec", [mat, vec, out, m, n]() mutable {
      const auto& d = out.grad();
      if (mat.requires_grad()) {
        auto& gm = mat.grad();
        for (size_t i = 0; i < d.size(); ++i) gm[i] += d[i];
      }
      if (vec.requires_grad()) {
        auto& gv = vec.grad();
        for (int64_t i = 0; i < m; ++i)
          for (int64_t j = 0; j < n; ++j) gv[j] += d[i * n + j];
      }
    });
  }
  return out;
}

Tensor Tape::gather_rows(Tensor table,
                         const std::vector<int64_t>& rows) {
  if (table.shape().size() != 2)
    throw DimensionError("gather_rows: table must be 2-D, got " +
                         shape_str(table.shape()));
  const int64_t nrows = table.shape()[0], width = table.shape()[1];
  for (int64_t r : rows)
    if (r < 0 || r >= nrows)
      throw DomainError("gather_rows: row index " + std::to_string(r) +
                        " out of range [0," + std::to_string(nrows) + ")");
  const int64_t m = static_cast<int64_t>(rows.size());
  Tensor out = make_output({m, width}, "gather_rows", {&table});
  for (int64_t i = 0; i < m; ++i)
    std::copy_n(table.values().data() + rows[i] * width, width,
                out.values().data() + i * width);
  check_finite(out, "gather_rows");
  if (out.requires_grad()) {
    record("gather_rows", [table, out, rows, width, m]() mutable {
      const auto& d = out.grad();
      auto& gt = table.grad();
      for (int64_t i = 0; i < m; ++i)
        for (int64_t j = 0; j < width; ++j)
          gt[rows[i] * width + j] += d[i * width + j];
    });
  }
  return out;
}

Tensor Tape::gather_per_row(Tensor mat,
                            const std::vector<int64_t>& cols) {
  if (mat.shape().size() != 2)
    throw DimensionError("gather_per_row: input must be 2-D");
  const int64_t m = mat.shape()[0], n = mat.shape()[1];
  if (static_cast<int64_t>(cols.size()) != m)
    throw DimensionError("gather_per_row: need one column index per row");
  for (int64_t c : cols)
    if (c < 0 || c >= n)
      throw DomainError("gather_per_row: column index out of range");
  Tensor out = make_output({m}, "gather_per_row", {&mat});
  for (int64_t i = 0; i < m; ++i)
    out.values()[i] = mat.values()[i * n + cols[i]];
  check_finite(out, "gather_per_row");
  if (out.requires_grad()) {
    record("gather_per_row", [mat, out, cols, m, n]() mutable {
      const auto& d = out.grad();
      auto& gm = mat.grad();
      for (int64_t i = 0; i < m; ++i) gm[i * n + cols[i]] += d[i];
    });
  }
  return out;
}

Tensor Tape::slice_elems(Tensor vec, int64_t begin, int64_t end) {
  if (vec.shape().size() != 1)
    throw DimensionError("slice_elems: input must be 1-D");
  const int64_t n = vec.shape()[0];
  if (begin < 0 || end > n || begin >= end)
    throw DomainError("slice_elems: invalid range [" + std::to_string(begin) +
                      "," + std::to_string(end) + ") for length " +
                      std::to_string(n));
  Tensor out = make_output({end - begin}, "slice_elems", {&vec});
  std::copy_n(vec.values().data() + begin, end - begin, out.values().data());
  check_finite(out, "slice_elems");
  if (out.requires_grad()) {
    record("slice_elems", [vec, out, begin]() mutable {
      const auto& d = out.grad();
      auto& gv = vec.grad();
      for (size_t i = 0; i < d.size(); ++i)
        gv[static_cast<size_t>(begin) + i] += d[i];
    });
  }
  return out;
}

Tensor Tape::concat_cols(std::vector<Tensor> parts) {
  if (parts.empty()) throw DimensionError("concat_cols: no inputs");
  const int64_t m = parts[0].shape().size() == 2 ? parts[0].shape()[0] : -1;
  if (m < 0) throw DimensionError("concat_cols: inputs must be 2-D");
  int64_t total = 0;
  for (const Tensor& p : parts) {
    if (p.shape().size() != 2 || p.shape()[0] != m)
      shape_error("concat_cols", parts[0].shape(), p.shape());
    total += p.shape()[1];
  }
  bool any_grad = false;
  for (const Tensor& p : parts) any_grad = any_grad || p.requires_grad();
  Tensor out = Tensor::zeros({m, total});
  out.set_requires_grad(recording_ && any_grad);
  int64_t off = 0;
  for (const Tensor& p : parts) {
    const int64_t w = p.shape()[1];
    for (int64_t i = 0; i < m; ++i)
      std::copy_n(p.values().data() + i * w, w,
                  out.values().data() + i * total + off);
    off += w;
  }
  check_finite(out, "concat_cols");
  if (out.requires_grad()) {
    record("concat_cols", [parts, out, m, total]() mutable {
      const auto& d = out.grad();
      int64_t off = 0;
      for (Tensor& p : parts) {
        const int64_t w = p.shape()[1];
        if (p.requires_grad()) {
          auto& gp = p.grad();
          for (int64_t i = 0; i < m; ++i)
            for (int64_t j = 0; j < w; ++j)
              gp[i * w + j] += d[i * total + off + j];
        }
        off += w;
      }
    });
  }
  return out;
}

Tensor Tape::log_softmax(Tensor a) {
  int64_t rows, cols;
  last_axis_dims(a, "log_softmax", &rows, &cols);
  Tensor out = make_output(a.shape(), "log_softmax", {&a});
  for (int64_t i = 0; i < rows; ++i) {
    const double* x = a.values().data() + i * cols;
    double* y = out.values().data() + i * cols;
    double mx = x[0];
    for (int64_t j = 1; j < cols; ++j) mx = std::max(mx, x[j]);
    double se = 0.0;
    for (int64_t j = 0; j < cols; ++j) se += std::exp(x[j] - mx);
    const double lse = mx + std::log(se);
    for (int64_t j = 0; j < cols; ++j) y[j] = x[j] - lse;
  }
  check_finite(out, "log_softmax");
  if (out.requires_grad()) {
    record("log_softmax", [a, out, rows, cols]() mutable {
      const auto& d = out.grad();
      auto& ga = a.grad();
      const auto& y = out.values();
      for (int64_t i = 0; i < rows; ++i) {
        double dsum = 0.0;
        for (int64_t j = 0; j < cols; ++j) dsum += d[i * cols + j];
        for (int64_t j = 0; j < cols; ++j)
          ga[i * cols + j] +=
              d[i * cols + j] - std::exp(y[i * cols + j]) * dsum;
      }
    });
  }
  return out;
}

Tensor Tape::softmax(Tensor a) {
  int64_t rows, cols;
  last_axis_dims(a, "softmax", &rows, &cols);
  Tensor out = make_output(a.shape(), "softmax", {&a});
  for (int64_t i = 0; i < rows; ++i) {
    const double* x = a.values().data() + i * cols;
    double* y = out.values().data() + i * cols;
    double mx = x[0];
    for (int64_t j = 1; j < cols; ++j) mx = std::max(mx, x[j]);
    double se = 0.0;
    for (int64_t j = 0; j < cols; ++j) {
      y[j] = std::exp(x[j] - mx);
      se += y[j];
    }
    for (int64_t j = 0; j < cols; ++j) y[j] /= se;
  }
  check_finite(out, "softmax");
  if (out.requires_grad()) {
    record("softmax", [a, out, rows, cols]() mutable {
      const auto& d = out.grad();
      auto& ga = a.grad();
      const auto& y = out.values();
      for (int64_t i = 0; i < rows; ++i) {
        double dot = 0.0;
        for (int64_t j = 0; j < cols; ++j)
          dot += d[i * cols + j] * y[i * cols + j];
        for (int64_t j = 0; j < cols; ++j)
          ga[i * cols + j] += y[i * cols + j] * (d[i * cols + j] - dot);
      }
    });
  }
  return out;
}

Tensor Tape::sigmoid(Tensor a) {
  Tensor out = make_output(a.shape(), "sigmoid", {&a});
  for (size_t i = 0; i < a.values().size(); ++i)
    out.values()[i] = stable_sigmoid(a.values()[i]);
  check_finite(out, "sigmoid");
  if (out.requires_grad()) {
    record("sigmoid", [a, out]() mutable {
      const auto& d = out.grad();
      const auto& y = out.values();
      auto& ga = a.grad();
      for (size_t i = 0; i < d.size(); ++i)
        ga[i] += d[i] * y[i] * (1.0 - y[i]);
    });
  }
  return out;
}

Tensor Tape::log_sigmoid(Tensor a) {
  Tensor out = make_output(a.shape(), "log_sigmoid", {&a});
  for (size_t i = 0; i < a.values().size(); ++i)
    out.values()[i] = stable_log_sigmoid(a.values()[i]);
  check_finite(out, "log_sigmoid");
  if (out.requires_grad()) {
    record("log_sigmoid", [a, out]() mutable {
      const auto& d = out.grad();
      const auto& y = out.values();
      auto& ga = a.grad();
      // d/dx log sigmoid(x) = 1 - sigmoid(x) = 1 - exp(y)
      for (size_t i = 0; i < d.size(); ++i)
        ga[i] += d[i] * (1.0 - std::exp(y[i]));
    });
  }
  return out;
}

Tensor Tape::tanh(Tensor a) {
  Tensor out = make_output(a.shape(), "tanh", {&a});
  for (size_t i = 0; i < a.values().size(); ++i)
    out.values()[i] = std::tanh(a.values()[i]);
  check_finite(out, "tanh");
  if (out.requires_grad()) {
    record("tanh", [a, out]() mutable {
      const auto& d = out.grad();
      const auto& y = out.values();
      auto& ga = a.grad();
      for (size_t i = 0; i < d.size(); ++i)
        ga[i] += d[i] * (1.0 - y[i] * y[i]);
    });
  }
  return out;
}

Tensor Tape::causal_mask(Tensor scores) {
  if (scores.shape().size() != 2 || scores.shape()[0] != scores.shape()[1])
    throw DimensionError("causal_mask: scores must be square, got " +
                         shape_str(scores.shape()));
  const int64_t n = scores.shape()[0];
  Tensor out = make_output({n, n}, "causal_mask", {&scores});
  for (int64_t i = 0; i < n; ++i)
    for (int64_t j = 0; j < n; ++j)
      out.values()[i * n + j] =
          j <= i ? scores.values()[i * n + j] : kMaskValue;
  check_finite(out, "causal_mask");
  if (out.requires_grad()) {
    record("causal_mask", [scores, out, n]() mutable {
      const auto& d = out.grad();
      auto& gs = scores.grad();
      for (int64_t i = 0; i < n; ++i)
        for (int64_t j = 0; j <= i; ++j) gs[i * n + j] += d[i * n + j];
    });
  }
  return out;
}

Tensor Tape::sum(Tensor a) {
  if (a.size() == 0) throw DomainError("sum: empty tensor");
  Tensor out = make_output({}, "sum", {&a});
  double acc = 0.0;
  for (double v : a.values()) acc += v;
  out.values()[0] = acc;
  check_finite(out, "sum");
  if (out.requires_grad()) {
    record("sum", [a, out]() mutable {
      const double d = out.grad()[0];
      auto& ga = a.grad();
      for (size_t i = 0; i < ga.size(); ++i) ga[i] += d;
    });
  }
  return out;
}

Tensor Tape::mean(Tensor a) {
  if (a.size() == 0) throw DomainError("mean: empty tensor");
  Tensor out = make_output({}, "mean", {&a});
  double acc = 0.0;
  for (double v : a.values()) acc += v;
  const double inv = 1.0 / static_cast<double>(a.size());
  out.values()[0] = acc * inv;
  check_finite(out, "mean");
  if (out.requires_grad()) {
    record("mean", [a, out, inv]() mutable {
      const double d = out.grad()[0] * inv;
      auto& ga = a.grad();
      for (size_t i = 0; i < ga.size(); ++i) ga[i] += d;
    });
  }
  return out;
}

void Tape::backward(const Tensor& output) {
  if (output.size() != 1 || !output.shape().empty())
    throw UsageError("backward: output must be a rank-0 scalar, got shape " +
                     shape_str(output.shape()));
  Tensor out = output;
  out.grad()[0] = 1.0;
  for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) it->back();
  nodes_.clear();
}

// --- grad_check ----------------------------------------------------------

GradCheckReport grad_check(const GraphBuilder& builder,
                           std::vector<std::pair<std::string, Tensor>> params,
                           double tolerance, double h) {
  std::vector<Tensor> ps;
  ps.reserve(params.size());
  for (auto& [name, t] : params) {
    t.set_requires_grad(true);
    ps.push_back(t);
  }

  auto eval_forward = [&]() {
    Tape t(/*recording=*/false);
    Tensor out = builder(t, ps);
    if (out.size() != 1)
      throw UsageError("grad_check: builder must return a scalar");
    return out.item();
  };

  const double v0 = eval_forward();
  const double v1 = eval_forward();
  if (!(v0 == v1))
    throw UsageError("grad_check: builder is non-deterministic (" +
                     std::to_string(v0) + " vs " + std::to_string(v1) + ")");

  GradCheckReport report;
  if (params.empty()) return report;

  Tape tape;
  for (Tensor& p : ps) p.zero_grad();
  Tensor out = builder(tape, ps);
  if (out.size() != 1)
    throw UsageError("grad_check: builder must return a scalar");
  tape.backward(out);

  for (auto& [name, p] : params) {
    GradCheckEntry entry;
    entry.name = name;
    auto& vals = p.values();
    const auto& analytic = p.grad();
    for (size_t e = 0; e < vals.size(); ++e) {
      const double orig = vals[e];
      vals[e] = orig + h;
      const double fp = eval_forward();
      vals[e] = orig - h;
      const double fm = eval_forward();
      vals[e] = orig;
      const double numeric = (fp - fm) / (2.0 * h);
      const double a = analytic[e];
      const double rel = std::abs(a - numeric) /
                         std::max({1.0, std::abs(a), std::abs(numeric)});
      entry.max_rel_error = std::max(entry.max_rel_error, rel);
    }
    entry.pass = entry.max_rel_error < tolerance;
    report.pass = report.pass && entry.pass;
    report.entries.push_back(std::move(entry));
  }
  return report;
}

}  // namespace prefopt::ad
