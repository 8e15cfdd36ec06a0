#include "vhp/diffcore/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "vhp/error.hpp"

namespace vhp::diffcore {
namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMat>;
using MutMap = Eigen::Map<RowMat>;

ConstMap as_matrix(const Tensor& t) {
  return ConstMap(t.data().data(), static_cast<Eigen::Index>(t.rows()), static_cast<Eigen::Index>(t.cols()));
}

MutMap as_matrix(Tensor& t) {
  return MutMap(t.data().data(), static_cast<Eigen::Index>(t.rows()), static_cast<Eigen::Index>(t.cols()));
}

void require_matrix(const Tensor& t, const char* op) {
  if (t.empty()) throw ShapeError(std::string(op) + ": empty operand");
  if (t.rank() > 2) {
    throw ShapeError(std::string(op) + ": expected rank <= 2, got " + shape_string(t.shape()));
  }
}

enum class Mode { full, row, scalar };

struct Broadcast {
  Shape out;
  std::size_t cols;
  Mode a;
  Mode b;
};

bool is_row_of(const Tensor& r, const Tensor& m) {
  return m.rank() == 2 && r.rows() == 1 && r.cols() == m.cols();
}

Broadcast resolve(const Tensor& a, const Tensor& b, const char* op) {
  require_matrix(a, op);
  require_matrix(b, op);
  if (a.shape() == b.shape()) return {a.shape(), a.cols(), Mode::full, Mode::full};
  if (b.size() == 1) return {a.shape(), a.cols(), Mode::full, Mode::scalar};
  if (a.size() == 1) return {b.shape(), b.cols(), Mode::scalar, Mode::full};
  if (is_row_of(b, a)) return {a.shape(), a.cols(), Mode::full, Mode::row};
  if (is_row_of(a, b)) return {b.shape(), b.cols(), Mode::row, Mode::full};
  throw ShapeError(std::string(op) + ": cannot broadcast " + shape_string(a.shape()) + " with " +
                   shape_string(b.shape()));
}

inline std::size_t index(Mode m, std::size_t i, std::size_t cols) {
  switch (m) {
    case Mode::full:
      return i;
    case Mode::row:
      return i % cols;
    case Mode::scalar:
      return 0;
  }
  return 0;
}

// f(x, y) -> z; da/db(x, y, z) -> partial derivatives w.r.t. x and y.
template <class F, class DA, class DB>
Var binary(const char* name, Var a, Var b, F f, DA da, DB db) {
  const Broadcast bc = resolve(a.value(), b.value(), name);
  Tensor out(bc.out);
  {
    const auto& x = a.value().storage();
    const auto& y = b.value().storage();
    auto& z = out.storage();
    for (std::size_t i = 0; i < z.size(); ++i) {
      z[i] = f(x[index(bc.a, i, bc.cols)], y[index(bc.b, i, bc.cols)]);
    }
  }
  const std::size_t ia = a.id();
  const std::size_t ib = b.id();
  return a.tape().record(name, std::move(out), {a, b}, [=](Tape& t, const Tensor& out, const Tensor& g) {
    const auto& x = t.value(ia).storage();
    const auto& y = t.value(ib).storage();
    const auto& z = out.storage();
    const auto& gv = g.storage();
    if (t.requires_grad(ia)) {
      auto& ga = t.grad_buffer(ia).storage();
      for (std::size_t i = 0; i < gv.size(); ++i) {
        const std::size_t xi = index(bc.a, i, bc.cols);
        ga[xi] += gv[i] * da(x[xi], y[index(bc.b, i, bc.cols)], z[i]);
      }
    }
    if (t.requires_grad(ib)) {
      auto& gb = t.grad_buffer(ib).storage();
      for (std::size_t i = 0; i < gv.size(); ++i) {
        const std::size_t yi = index(bc.b, i, bc.cols);
        gb[yi] += gv[i] * db(x[index(bc.a, i, bc.cols)], y[yi], z[i]);
      }
    }
  });
}

// f(x) -> y; df(x, y) -> dy/dx.
template <class F, class DF>
Var unary(const char* name, Var a, F f, DF df) {
  require_matrix(a.value(), name);
  Tensor out(a.shape());
  {
    const auto& x = a.value().storage();
    auto& y = out.storage();
    for (std::size_t i = 0; i < y.size(); ++i) y[i] = f(x[i]);
  }
  const std::size_t ia = a.id();
  return a.tape().record(name, std::move(out), {a}, [=](Tape& t, const Tensor& out, const Tensor& g) {
    const auto& x = t.value(ia).storage();
    const auto& y = out.storage();
    const auto& gv = g.storage();
    auto& ga = t.grad_buffer(ia).storage();
    for (std::size_t i = 0; i < gv.size(); ++i) ga[i] += gv[i] * df(x[i], y[i]);
  });
}

double stable_sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double stable_softplus(double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); }

struct AxisLayout {
  Shape out;
  bool over_cols;  // reduce within each row
};

AxisLayout reduction_layout(const Tensor& t, std::size_t axis, const char* op) {
  require_matrix(t, op);
  if (t.rank() == 1) {
    if (axis != 0) throw ShapeError(std::string(op) + ": axis out of range for rank-1 tensor");
    return {Shape{}, true};
  }
  if (t.rank() == 0 || axis > 1) {
    throw ShapeError(std::string(op) + ": axis " + std::to_string(axis) + " invalid for shape " +
                     shape_string(t.shape()));
  }
  if (axis == 0) return {Shape{1, t.cols()}, false};
  return {Shape{t.rows(), 1}, true};
}

}  // namespace

Var add(Var a, Var b) {
  return binary(
      "add", a, b, [](double x, double y) { return x + y; }, [](double, double, double) { return 1.0; },
      [](double, double, double) { return 1.0; });
}

Var sub(Var a, Var b) {
  return binary(
      "sub", a, b, [](double x, double y) { return x - y; }, [](double, double, double) { return 1.0; },
      [](double, double, double) { return -1.0; });
}

Var mul(Var a, Var b) {
  return binary(
      "mul", a, b, [](double x, double y) { return x * y; }, [](double, double y, double) { return y; },
      [](double x, double, double) { return x; });
}

Var div(Var a, Var b) {
  for (double v : b.value().storage()) {
    if (v == 0.0) throw DomainError("div: division by zero");
  }
  return binary(
      "div", a, b, [](double x, double y) { return x / y; }, [](double, double y, double) { return 1.0 / y; },
      [](double, double y, double z) { return -z / y; });
}

Var matmul(Var a, Var b) {
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  require_matrix(av, "matmul");
  require_matrix(bv, "matmul");
  if (av.cols() != bv.rows()) {
    throw ShapeError("matmul: inner dimensions differ, " + shape_string(av.shape()) + " x " +
                     shape_string(bv.shape()));
  }
  Tensor out(Shape{av.rows(), bv.cols()});
  as_matrix(out).noalias() = as_matrix(av) * as_matrix(bv);
  const std::size_t ia = a.id();
  const std::size_t ib = b.id();
  return a.tape().record("matmul", std::move(out), {a, b}, [=](Tape& t, const Tensor&, const Tensor& g) {
    if (t.requires_grad(ia)) {
      as_matrix(t.grad_buffer(ia)).noalias() += as_matrix(g) * as_matrix(t.value(ib)).transpose();
    }
    if (t.requires_grad(ib)) {
      as_matrix(t.grad_buffer(ib)).noalias() += as_matrix(t.value(ia)).transpose() * as_matrix(g);
    }
  });
}

Var linear(Var x, Var weight, Var bias) {
  const Tensor& xv = x.value();
  const Tensor& wv = weight.value();
  const Tensor& bv = bias.value();
  require_matrix(xv, "linear");
  require_matrix(wv, "linear");
  if (wv.rank() != 2 || wv.cols() != xv.cols()) {
    throw ShapeError("linear: weight " + shape_string(wv.shape()) + " does not accept input " +
                     shape_string(xv.shape()));
  }
  if (bv.size() != wv.rows()) {
    throw ShapeError("linear: bias " + shape_string(bv.shape()) + " does not match weight " +
                     shape_string(wv.shape()));
  }
  Tensor out(Shape{xv.rows(), wv.rows()});
  auto om = as_matrix(out);
  om.noalias() = as_matrix(xv) * as_matrix(wv).transpose();
  const Eigen::Map<const Eigen::RowVectorXd> bias_row(bv.data().data(), static_cast<Eigen::Index>(bv.size()));
  om.rowwise() += bias_row;
  const std::size_t ix = x.id();
  const std::size_t iw = weight.id();
  const std::size_t ib = bias.id();
  return x.tape().record("linear", std::move(out), {x, weight, bias},
                         [=](Tape& t, const Tensor&, const Tensor& g) {
                           const auto gm = as_matrix(g);
                           if (t.requires_grad(ix)) {
                             as_matrix(t.grad_buffer(ix)).noalias() += gm * as_matrix(t.value(iw));
                           }
                           if (t.requires_grad(iw)) {
                             as_matrix(t.grad_buffer(iw)).noalias() += gm.transpose() * as_matrix(t.value(ix));
                           }
                           if (t.requires_grad(ib)) {
                             Tensor& gb = t.grad_buffer(ib);
                             Eigen::Map<Eigen::RowVectorXd>(gb.data().data(), static_cast<Eigen::Index>(gb.size())) +=
                                 gm.colwise().sum();
                           }
                         });
}

Var elementwise(Elementwise op, Var a) {
  switch (op) {
    case Elementwise::relu:
      return unary(
          "relu", a, [](double x) { return x > 0.0 ? x : 0.0; },
          [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
    case Elementwise::tanh:
      return unary(
          "tanh", a, [](double x) { return std::tanh(x); }, [](double, double y) { return 1.0 - y * y; });
    case Elementwise::sigmoid:
      return unary(
          "sigmoid", a, stable_sigmoid, [](double, double y) { return y * (1.0 - y); });
    case Elementwise::exp:
      return unary(
          "exp", a, [](double x) { return std::exp(x); }, [](double, double y) { return y; });
    case Elementwise::log:
      for (double v : a.value().storage()) {
        if (!(v > 0.0)) throw DomainError("log: non-positive argument " + std::to_string(v));
      }
      return unary(
          "log", a, [](double x) { return std::log(x); }, [](double x, double) { return 1.0 / x; });
    case Elementwise::neg:
      return unary(
          "neg", a, [](double x) { return -x; }, [](double, double) { return -1.0; });
    case Elementwise::square:
      return unary(
          "square", a, [](double x) { return x * x; }, [](double x, double) { return 2.0 * x; });
    case Elementwise::softplus:
      return unary(
          "softplus", a, stable_softplus, [](double x, double) { return stable_sigmoid(x); });
  }
  throw Error("elementwise: unknown op");
}

Var scale(Var a, double factor) {
  return unary(
      "scale", a, [factor](double x) { return factor * x; }, [factor](double, double) { return factor; });
}

Var add_scalar(Var a, double offset) {
  return unary(
      "add_scalar", a, [offset](double x) { return x + offset; }, [](double, double) { return 1.0; });
}

Var clamp(Var a, double lo, double hi) {
  if (!(lo <= hi)) throw DomainError("clamp: lower bound exceeds upper bound");
  return unary(
      "clamp", a, [lo, hi](double x) { return std::clamp(x, lo, hi); },
      [lo, hi](double x, double) { return (x >= lo && x <= hi) ? 1.0 : 0.0; });
}

Var sum(Var a) {
  require_matrix(a.value(), "sum");
  double s = 0.0;
  for (double v : a.value().storage()) s += v;
  const std::size_t ia = a.id();
  return a.tape().record("sum", Tensor::scalar(s), {a}, [=](Tape& t, const Tensor&, const Tensor& g) {
    const double gv = g[0];
    for (double& v : t.grad_buffer(ia).storage()) v += gv;
  });
}

Var mean(Var a) {
  require_matrix(a.value(), "mean");
  const double n = static_cast<double>(a.value().size());
  double s = 0.0;
  for (double v : a.value().storage()) s += v;
  const std::size_t ia = a.id();
  return a.tape().record("mean", Tensor::scalar(s / n), {a}, [=](Tape& t, const Tensor&, const Tensor& g) {
    const double gv = g[0] / n;
    for (double& v : t.grad_buffer(ia).storage()) v += gv;
  });
}

Var sum(Var a, std::size_t axis) {
  const Tensor& av = a.value();
  const AxisLayout layout = reduction_layout(av, axis, "sum");
  const std::size_t rows = av.rows();
  const std::size_t cols = av.cols();
  Tensor out(layout.out);
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) {
      out[layout.over_cols ? r : c] += av(r, c);
    }
  }
  const std::size_t ia = a.id();
  const bool over_cols = layout.over_cols;
  return a.tape().record("sum_axis", std::move(out), {a}, [=](Tape& t, const Tensor&, const Tensor& g) {
    Tensor& ga = t.grad_buffer(ia);
    for (std::size_t r = 0; r < rows; ++r) {
      for (std::size_t c = 0; c < cols; ++c) ga(r, c) += g[over_cols ? r : c];
    }
  });
}

Var logsumexp(Var a, std::size_t axis) {
  const Tensor& av = a.value();
  const AxisLayout layout = reduction_layout(av, axis, "logsumexp");
  const std::size_t rows = av.rows();
  const std::size_t cols = av.cols();
  const std::size_t groups = layout.over_cols ? rows : cols;
  const std::size_t length = layout.over_cols ? cols : rows;
  auto at = [&](std::size_t group, std::size_t k) { return layout.over_cols ? av(group, k) : av(k, group); };

  Tensor out(layout.out);
  for (std::size_t gi = 0; gi < groups; ++gi) {
    double m = -std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < length; ++k) m = std::max(m, at(gi, k));
    double s = 0.0;
    for (std::size_t k = 0; k < length; ++k) s += std::exp(at(gi, k) - m);
    out[gi] = m + std::log(s);
  }
  const std::size_t ia = a.id();
  const bool over_cols = layout.over_cols;
  return a.tape().record("logsumexp", std::move(out), {a}, [=](Tape& t, const Tensor& out, const Tensor& g) {
    const Tensor& x = t.value(ia);
    Tensor& ga = t.grad_buffer(ia);
    for (std::size_t r = 0; r < rows; ++r) {
      for (std::size_t c = 0; c < cols; ++c) {
        const std::size_t gi = over_cols ? r : c;
        ga(r, c) += g[gi] * std::exp(x(r, c) - out[gi]);
      }
    }
  });
}

Var slice_cols(Var a, std::size_t begin, std::size_t end) {
  const Tensor& av = a.value();
  require_matrix(av, "slice_cols");
  if (begin >= end || end > av.cols()) {
    throw ShapeError("slice_cols: range [" + std::to_string(begin) + ", " + std::to_string(end) +
                     ") invalid for " + shape_string(av.shape()));
  }
  const std::size_t rows = av.rows();
  const std::size_t width = end - begin;
  Tensor out(av.rank() == 2 ? Shape{rows, width} : Shape{width});
  for (std::size_t r = 0; r < rows; ++r) {
    std::copy_n(av.row(r).begin() + static_cast<std::ptrdiff_t>(begin), width, out.row(r).begin());
  }
  const std::size_t ia = a.id();
  return a.tape().record("slice_cols", std::move(out), {a}, [=](Tape& t, const Tensor&, const Tensor& g) {
    Tensor& ga = t.grad_buffer(ia);
    for (std::size_t r = 0; r < rows; ++r) {
      for (std::size_t c = 0; c < width; ++c) ga(r, begin + c) += g(r, c);
    }
  });
}

Var reshape(Var a, Shape shape) {
  Tensor out = a.value().reshaped(std::move(shape));
  const std::size_t ia = a.id();
  return a.tape().record("reshape", std::move(out), {a}, [=](Tape& t, const Tensor&, const Tensor& g) {
    auto& ga = t.grad_buffer(ia).storage();
    const auto& gv = g.storage();
    for (std::size_t i = 0; i < gv.size(); ++i) ga[i] += gv[i];
  });
}

Var repeat_rows(Var a, std::size_t times) {
  const Tensor& av = a.value();
  require_matrix(av, "repeat_rows");
  if (times == 0) throw ShapeError("repeat_rows: times must be positive");
  const std::size_t rows = av.rows();
  const std::size_t cols = av.cols();
  Tensor out(Shape{rows * times, cols});
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t k = 0; k < times; ++k) {
      std::copy_n(av.row(r).begin(), cols, out.row(r * times + k).begin());
    }
  }
  const std::size_t ia = a.id();
  return a.tape().record("repeat_rows", std::move(out), {a}, [=](Tape& t, const Tensor&, const Tensor& g) {
    Tensor& ga = t.grad_buffer(ia);
    for (std::size_t r = 0; r < rows; ++r) {
      for (std::size_t k = 0; k < times; ++k) {
        for (std::size_t c = 0; c < cols; ++c) ga(r, c) += g(r * times + k, c);
      }
    }
  });
}

}  // namespace vhp::diffcore
