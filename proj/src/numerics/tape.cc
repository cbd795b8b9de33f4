// Copyright 2026 The mbdlab Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "mbdlab/numerics/tape.h"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include "mbdlab/errors.h"

namespace mbdlab::numerics {

namespace {

double stable_sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace

Shape Var::shape() const { return tape_->shape(*this); }
std::span<const double> Var::value() const { return tape_->value(*this); }
double Var::scalar() const {
  if (shape() != Shape{1, 1}) {
    throw ShapeError("scalar() on node of shape " + to_string(shape()));
  }
  return value()[0];
}

const Tape::Node& Tape::node(Var v) const {
  if (v.tape() != this || v.id() >= nodes_.size()) {
    throw std::logic_error("variable is not recorded on this tape");
  }
  return nodes_[v.id()];
}

Tape::Node& Tape::node(Var v) {
  if (v.tape() != this || v.id() >= nodes_.size()) {
    throw std::logic_error("variable is not recorded on this tape");
  }
  return nodes_[v.id()];
}

Var Tape::push(Shape shape, std::vector<double> value, bool requires_grad,
               std::function<void(Tape&, const Node&)> backward) {
  if (consumed_) {
    throw std::logic_error("tape already consumed by backward; start a new one");
  }
  nodes_.push_back(Node{shape, std::move(value), {}, requires_grad,
                        requires_grad ? std::move(backward) : nullptr});
  return Var(this, nodes_.size() - 1);
}

std::vector<double>& Tape::grad_buffer(std::size_t id) {
  Node& n = nodes_[id];
  if (n.grad.empty()) n.grad.assign(n.value.size(), 0.0);
  return n.grad;
}

void Tape::check_same_shape(Var a, Var b, const char* op) const {
  if (shape(a) != shape(b)) {
    throw ShapeError(std::string(op) + ": shape mismatch " +
                     to_string(shape(a)) + " vs " + to_string(shape(b)));
  }
}

Var Tape::constant(Shape shape, std::vector<double> values) {
  if (values.size() != shape.size()) {
    throw ShapeError("constant of shape " + to_string(shape) + " given " +
                     std::to_string(values.size()) + " values");
  }
  return push(shape, std::move(values), false, nullptr);
}

Var Tape::variable(Shape shape, std::vector<double> values) {
  if (values.size() != shape.size()) {
    throw ShapeError("variable of shape " + to_string(shape) + " given " +
                     std::to_string(values.size()) + " values");
  }
  return push(shape, std::move(values), true, [](Tape&, const Node&) {});
}

Var Tape::param(ParamStore& store, std::size_t index) {
  Param& p = store.at(index);
  return push(p.shape, p.value, true,
              [&store, index](Tape&, const Node& self) {
                std::vector<double>& g = store.at(index).grad;
                for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
              });
}

Var Tape::frozen_param(const ParamStore& store, std::size_t index) {
  const Param& p = store.at(index);
  return push(p.shape, p.value, false, nullptr);
}

Var Tape::matmul(Var x, Var w) {
  const Shape xs = shape(x);
  const Shape ws = shape(w);
  if (xs.cols != ws.rows) {
    throw ShapeError("matmul: " + to_string(xs) + " * " + to_string(ws));
  }
  const std::size_t b = xs.rows, n = xs.cols, m = ws.cols;
  std::vector<double> out(b * m, 0.0);
  {
    const std::vector<double>& xv = node(x).value;
    const std::vector<double>& wv = node(w).value;
    for (std::size_t i = 0; i < b; ++i) {
      double* yi = out.data() + i * m;
      for (std::size_t k = 0; k < n; ++k) {
        const double xik = xv[i * n + k];
        const double* wk = wv.data() + k * m;
        for (std::size_t j = 0; j < m; ++j) yi[j] += xik * wk[j];
      }
    }
  }
  const std::size_t xi = x.id(), wi = w.id();
  const bool rg = needs_grad(xi) || needs_grad(wi);
  return push({b, m}, std::move(out), rg,
              [xi, wi, b, n, m](Tape& t, const Node& self) {
                const std::vector<double>& dy = self.grad;
                if (t.needs_grad(xi)) {
                  std::vector<double>& dx = t.grad_buffer(xi);
                  const std::vector<double>& wv = t.nodes_[wi].value;
                  for (std::size_t i = 0; i < b; ++i) {
                    const double* dyi = dy.data() + i * m;
                    for (std::size_t k = 0; k < n; ++k) {
                      const double* wk = wv.data() + k * m;
                      double s = 0.0;
                      for (std::size_t j = 0; j < m; ++j) s += dyi[j] * wk[j];
                      dx[i * n + k] += s;
                    }
                  }
                }
                if (t.needs_grad(wi)) {
                  std::vector<double>& dw = t.grad_buffer(wi);
                  const std::vector<double>& xv = t.nodes_[xi].value;
                  for (std::size_t i = 0; i < b; ++i) {
                    const double* dyi = dy.data() + i * m;
                    for (std::size_t k = 0; k < n; ++k) {
                      const double xik = xv[i * n + k];
                      double* dwk = dw.data() + k * m;
                      for (std::size_t j = 0; j < m; ++j) dwk[j] += xik * dyi[j];
                    }
                  }
                }
              });
}

Var Tape::add_row(Var x, Var row) {
  const Shape xs = shape(x);
  const Shape rs = shape(row);
  if (rs.rows != 1 || rs.cols != xs.cols) {
    throw ShapeError("add_row: " + to_string(xs) + " + " + to_string(rs));
  }
  std::vector<double> out = node(x).value;
  {
    const std::vector<double>& rv = node(row).value;
    for (std::size_t i = 0; i < xs.rows; ++i) {
      for (std::size_t j = 0; j < xs.cols; ++j) out[i * xs.cols + j] += rv[j];
    }
  }
  const std::size_t xi = x.id(), ri = row.id();
  return push(xs, std::move(out), needs_grad(xi) || needs_grad(ri),
              [xi, ri, xs](Tape& t, const Node& self) {
                if (t.needs_grad(xi)) {
                  std::vector<double>& dx = t.grad_buffer(xi);
                  for (std::size_t i = 0; i < dx.size(); ++i) dx[i] += self.grad[i];
                }
                if (t.needs_grad(ri)) {
                  std::vector<double>& dr = t.grad_buffer(ri);
                  for (std::size_t i = 0; i < xs.rows; ++i) {
                    for (std::size_t j = 0; j < xs.cols; ++j) {
                      dr[j] += self.grad[i * xs.cols + j];
                    }
                  }
                }
              });
}

Var Tape::add(Var a, Var b) {
  check_same_shape(a, b, "add");
  std::vector<double> out = node(a).value;
  const std::vector<double>& bv = node(b).value;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += bv[i];
  const std::size_t ai = a.id(), bi = b.id();
  return push(shape(a), std::move(out), needs_grad(ai) || needs_grad(bi),
              [ai, bi](Tape& t, const Node& self) {
                for (std::size_t id : {ai, bi}) {
                  if (!t.needs_grad(id)) continue;
                  std::vector<double>& g = t.grad_buffer(id);
                  for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
                }
              });
}

Var Tape::sub(Var a, Var b) {
  check_same_shape(a, b, "sub");
  std::vector<double> out = node(a).value;
  const std::vector<double>& bv = node(b).value;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= bv[i];
  const std::size_t ai = a.id(), bi = b.id();
  return push(shape(a), std::move(out), needs_grad(ai) || needs_grad(bi),
              [ai, bi](Tape& t, const Node& self) {
                if (t.needs_grad(ai)) {
                  std::vector<double>& g = t.grad_buffer(ai);
                  for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
                }
                if (t.needs_grad(bi)) {
                  std::vector<double>& g = t.grad_buffer(bi);
                  for (std::size_t i = 0; i < g.size(); ++i) g[i] -= self.grad[i];
                }
              });
}

Var Tape::mul(Var a, Var b) {
  check_same_shape(a, b, "mul");
  std::vector<double> out = node(a).value;
  const std::vector<double>& bv = node(b).value;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= bv[i];
  const std::size_t ai = a.id(), bi = b.id();
  return push(shape(a), std::move(out), needs_grad(ai) || needs_grad(bi),
              [ai, bi](Tape& t, const Node& self) {
                if (t.needs_grad(ai)) {
                  std::vector<double>& g = t.grad_buffer(ai);
                  const std::vector<double>& bv = t.nodes_[bi].value;
                  for (std::size_t i = 0; i < g.size(); ++i) {
                    g[i] += self.grad[i] * bv[i];
                  }
                }
                if (t.needs_grad(bi)) {
                  std::vector<double>& g = t.grad_buffer(bi);
                  const std::vector<double>& av = t.nodes_[ai].value;
                  for (std::size_t i = 0; i < g.size(); ++i) {
                    g[i] += self.grad[i] * av[i];
                  }
                }
              });
}

Var Tape::unary(Var a, const std::function<double(double)>& f,
                const std::function<double(double, double)>& dfdx) {
  std::vector<double> out = node(a).value;
  for (double& v : out) v = f(v);
  const std::size_t ai = a.id();
  return push(shape(a), std::move(out), needs_grad(ai),
              [ai, dfdx](Tape& t, const Node& self) {
                std::vector<double>& g = t.grad_buffer(ai);
                const std::vector<double>& x = t.nodes_[ai].value;
                for (std::size_t i = 0; i < g.size(); ++i) {
                  g[i] += self.grad[i] * dfdx(x[i], self.value[i]);
                }
              });
}

Var Tape::scale(Var a, double c) {
  return unary(
      a, [c](double x) { return c * x; }, [c](double, double) { return c; });
}

Var Tape::relu(Var a) {
  return unary(
      a, [](double x) { return x > 0.0 ? x : 0.0; },
      [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

Var Tape::sigmoid(Var a) {
  return unary(
      a, stable_sigmoid, [](double, double y) { return y * (1.0 - y); });
}

Var Tape::exp(Var a) {
  return unary(
      a, [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}

Var Tape::square(Var a) {
  return unary(
      a, [](double x) { return x * x; }, [](double x, double) { return 2.0 * x; });
}

Var Tape::clamp_min(Var a, double floor) {
  return unary(
      a, [floor](double x) { return x > floor ? x : floor; },
      [floor](double x, double) { return x > floor ? 1.0 : 0.0; });
}

Var Tape::column(Var a, std::size_t c) {
  const Shape s = shape(a);
  if (c >= s.cols) {
    throw ShapeError("column " + std::to_string(c) + " of " + to_string(s));
  }
  std::vector<double> out(s.rows);
  const std::vector<double>& av = node(a).value;
  for (std::size_t i = 0; i < s.rows; ++i) out[i] = av[i * s.cols + c];
  const std::size_t ai = a.id();
  return push({s.rows, 1}, std::move(out), needs_grad(ai),
              [ai, s, c](Tape& t, const Node& self) {
                std::vector<double>& g = t.grad_buffer(ai);
                for (std::size_t i = 0; i < s.rows; ++i) {
                  g[i * s.cols + c] += self.grad[i];
                }
              });
}

Var Tape::sum(Var a) {
  double total = 0.0;
  for (double v : node(a).value) total += v;
  const std::size_t ai = a.id();
  return push({1, 1}, {total}, needs_grad(ai), [ai](Tape& t, const Node& self) {
    std::vector<double>& g = t.grad_buffer(ai);
    for (double& v : g) v += self.grad[0];
  });
}

Var Tape::mean(Var a) {
  const std::size_t n = shape(a).size();
  if (n == 0) throw ShapeError("mean of an empty node");
  return scale(sum(a), 1.0 / static_cast<double>(n));
}

Var Tape::stop_gradient(Var a) {
  return push(shape(a), node(a).value, false, nullptr);
}

Var Tape::bce_with_logits(Var logits, Var labels) {
  check_same_shape(logits, labels, "bce_with_logits");
  const std::vector<double>& z = node(logits).value;
  const std::vector<double>& y = node(labels).value;
  std::vector<double> out(z.size());
  for (std::size_t i = 0; i < z.size(); ++i) {
    out[i] = std::max(z[i], 0.0) - z[i] * y[i] + std::log1p(std::exp(-std::abs(z[i])));
  }
  const std::size_t zi = logits.id(), yi = labels.id();
  return push(shape(logits), std::move(out), needs_grad(zi),
              [zi, yi](Tape& t, const Node& self) {
                std::vector<double>& g = t.grad_buffer(zi);
                const std::vector<double>& z = t.nodes_[zi].value;
                const std::vector<double>& y = t.nodes_[yi].value;
                for (std::size_t i = 0; i < g.size(); ++i) {
                  g[i] += self.grad[i] * (stable_sigmoid(z[i]) - y[i]);
                }
              });
}

Var Tape::pinball(Var target, Var q, double tau) {
  check_same_shape(target, q, "pinball");
  if (!(tau > 0.0 && tau < 1.0)) {
    throw std::invalid_argument("pinball: quantile level must lie in (0,1), got " +
                                std::to_string(tau));
  }
  const std::vector<double>& p = node(target).value;
  const std::vector<double>& qv = node(q).value;
  std::vector<double> out(p.size());
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double below = p[i] < qv[i] ? 1.0 : 0.0;
    out[i] = (tau - below) * (p[i] - qv[i]);
  }
  const std::size_t pi = target.id(), qi = q.id();
  return push(shape(q), std::move(out), needs_grad(qi),
              [pi, qi, tau](Tape& t, const Node& self) {
                std::vector<double>& g = t.grad_buffer(qi);
                const std::vector<double>& p = t.nodes_[pi].value;
                const std::vector<double>& qv = t.nodes_[qi].value;
                for (std::size_t i = 0; i < g.size(); ++i) {
                  const double below = p[i] < qv[i] ? 1.0 : 0.0;
                  g[i] -= self.grad[i] * (tau - below);
                }
              });
}

void Tape::backward(Var root) {
  if (shape(root) != Shape{1, 1}) {
    throw ShapeError("backward without upstream gradient needs a scalar root, got " +
                     to_string(shape(root)));
  }
  const double one = 1.0;
  backward(root, std::span<const double>(&one, 1));
}

void Tape::backward(Var root, std::span<const double> upstream) {
  if (nodes_.empty() || root.tape() != this || root.id() >= nodes_.size()) {
    throw std::logic_error("backward called without a recorded forward pass");
  }
  if (consumed_) {
    throw std::logic_error("backward already ran on this tape");
  }
  Node& r = nodes_[root.id()];
  if (upstream.size() != r.value.size()) {
    throw ShapeError("upstream gradient has " + std::to_string(upstream.size()) +
                     " entries, root has " + std::to_string(r.value.size()));
  }
  consumed_ = true;
  if (!r.requires_grad) return;
  std::vector<double>& g = grad_buffer(root.id());
  for (std::size_t i = 0; i < g.size(); ++i) g[i] += upstream[i];
  // Node ids are a topological order of the recorded graph.
  for (std::size_t id = root.id() + 1; id-- > 0;) {
    const Node& n = nodes_[id];
    if (!n.requires_grad || n.grad.empty() || !n.backward) continue;
    n.backward(*this, n);
  }
}

std::vector<double> Tape::grad(Var v) const {
  const Node& n = node(v);
  if (n.grad.empty()) return std::vector<double>(n.value.size(), 0.0);
  return n.grad;
}

}  // namespace mbdlab::numerics
