#include "consor/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "consor/error.hpp"
#include "consor/kernels.hpp"

namespace consor::ad {

std::string shape_string(const Shape& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += ",";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

std::size_t shape_size(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

Tensor::Tensor(Shape shape, double fill) : shape_(std::move(shape)), data_(shape_size(shape_), fill) {}

Tensor::Tensor(Shape shape, std::vector<double> data) : shape_(std::move(shape)), data_(std::move(data)) {
  if (data_.size() != shape_size(shape_))
    throw Error(ErrorCode::ShapeMismatch, "data length " + std::to_string(data_.size()) + " does not fit shape " +
                                              shape_string(shape_));
}

// ---- Var / Tape -----------------------------------------------------------

const Tensor& Var::value() const { return tape_->nodes_[id_].value; }
const Tensor& Var::grad() const { return tape_->grad(id_); }

Tensor& Tape::grad(std::size_t id) {
  Node& n = nodes_[id];
  if (n.grad.size() != n.value.size()) n.grad = Tensor(n.value.shape());
  return n.grad;
}

void Tape::check(const Var& v) const {
  if (v.tape() != this || v.id() >= nodes_.size())
    throw Error(ErrorCode::DanglingTape, "value was not recorded on this tape");
}

Var Tape::constant(Tensor value) {
  nodes_.push_back(Node{std::move(value), {}, {}, {}, nullptr, false});
  return Var(this, nodes_.size() - 1);
}

Var Tape::variable(Tensor value) {
  nodes_.push_back(Node{std::move(value), {}, {}, {}, nullptr, true});
  return Var(this, nodes_.size() - 1);
}

Var Tape::parameter(Parameter& p) {
  auto it = param_nodes_.find(&p);
  if (it != param_nodes_.end()) return Var(this, it->second);
  nodes_.push_back(Node{p.value, {}, {}, {}, &p, true});
  param_nodes_.emplace(&p, nodes_.size() - 1);
  return Var(this, nodes_.size() - 1);
}

Var Tape::record(Tensor value, std::vector<std::size_t> inputs, BackwardFn fn) {
  bool rg = false;
  for (auto id : inputs) rg = rg || nodes_[id].requires_grad;
  Node n{std::move(value), {}, std::move(inputs), {}, nullptr, rg};
  if (rg) n.backward = std::move(fn);
  nodes_.push_back(std::move(n));
  return Var(this, nodes_.size() - 1);
}

void Tape::backward(const Var& loss, GradSink sink) {
  check(loss);
  if (loss.value().size() != 1)
    throw Error(ErrorCode::NotScalarLoss, "loss has shape " + shape_string(loss.shape()));
  for (auto& n : nodes_) n.grad = Tensor();
  grad(loss.id())[0] = 1.0;
  for (std::size_t id = loss.id() + 1; id-- > 0;) {
    Node& n = nodes_[id];
    if (!n.requires_grad || !n.backward || n.grad.empty()) continue;
    n.backward(*this, id);
  }
  backward_done_ = true;
  if (sink == GradSink::Accumulate) flush_parameter_grads();
}

void Tape::flush_parameter_grads() {
  for (auto& [param, id] : param_nodes_) {
    Node& n = nodes_[id];
    if (n.grad.empty()) continue;
    auto* p = const_cast<Parameter*>(param);
    if (p->grad.shape() != p->value.shape()) p->grad = Tensor(p->value.shape());
    auto dst = p->grad.data();
    auto src = n.grad.data();
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
    n.grad = Tensor();
  }
}

// ---- helpers --------------------------------------------------------------

namespace {

Tape& same_tape(const Var& a) {
  if (a.tape() == nullptr) throw Error(ErrorCode::DanglingTape, "var is not attached to a tape");
  a.tape()->check(a);
  return *a.tape();
}

Tape& same_tape(const Var& a, const Var& b) {
  Tape& t = same_tape(a);
  if (b.tape() != &t) throw Error(ErrorCode::DanglingTape, "operands come from different tapes");
  t.check(b);
  return t;
}

[[noreturn]] void shape_mismatch(const char* op, const Shape& a, const Shape& b) {
  throw Error(ErrorCode::ShapeMismatch, std::string(op) + ": " + shape_string(a) + " vs " + shape_string(b));
}

struct AxisView {
  std::size_t outer = 1, len = 1, inner = 1;
};

AxisView axis_view(const Shape& s, std::size_t axis) {
  if (axis >= s.size())
    throw Error(ErrorCode::AxisOutOfRange, "axis " + std::to_string(axis) + " for shape " + shape_string(s));
  AxisView v;
  for (std::size_t i = 0; i < axis; ++i) v.outer *= s[i];
  v.len = s[axis];
  for (std::size_t i = axis + 1; i < s.size(); ++i) v.inner *= s[i];
  return v;
}

enum class Bcast { Same, Row };

Bcast broadcast_kind(const char* op, const Shape& a, const Shape& b) {
  if (a == b) return Bcast::Same;
  if (b.size() == 1 && !a.empty() && a.back() == b[0]) return Bcast::Row;
  shape_mismatch(op, a, b);
}

Var binary(const char* op, const Var& a, const Var& b, double sign_b, bool multiply) {
  Tape& t = same_tape(a, b);
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  const Bcast kind = broadcast_kind(op, av.shape(), bv.shape());
  const std::size_t width = bv.size();
  Tensor out(av.shape());
  for (std::size_t i = 0; i < av.size(); ++i) {
    const double y = kind == Bcast::Same ? bv[i] : bv[i % width];
    out[i] = multiply ? av[i] * y : av[i] + sign_b * y;
  }
  const std::size_t ia = a.id(), ib = b.id();
  return t.record(std::move(out), {ia, ib}, [=](Tape& tp, std::size_t self) {
    const Tensor& g = tp.grad(self);
    if (tp.requires_grad(ia)) {
      Tensor& ga = tp.grad(ia);
      if (multiply) {
        const Tensor& bval = tp.value(ib);
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * (kind == Bcast::Same ? bval[i] : bval[i % width]);
      } else {
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
      }
    }
    if (tp.requires_grad(ib)) {
      Tensor& gb = tp.grad(ib);
      const Tensor& aval = tp.value(ia);
      for (std::size_t i = 0; i < g.size(); ++i) {
        const double d = multiply ? g[i] * aval[i] : sign_b * g[i];
        gb[kind == Bcast::Same ? i : i % width] += d;
      }
    }
  });
}

void require_rank2(const char* op, const Var& a) {
  if (a.value().rank() != 2)
    throw Error(ErrorCode::ShapeMismatch, std::string(op) + " expects a 2-D tensor, got " + shape_string(a.shape()));
}

}  // namespace

// ---- ops ------------------------------------------------------------------

Var matmul(const Var& a, const Var& b) {
  Tape& t = same_tape(a, b);
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  if (av.rank() != 2 || bv.rank() != 2 || av.dim(1) != bv.dim(0)) shape_mismatch("matmul", av.shape(), bv.shape());
  const std::size_t m = av.dim(0), k = av.dim(1), n = bv.dim(1);
  Tensor out({m, n});
  kernels::gemm(false, false, m, n, k, av.data().data(), bv.data().data(), out.data().data(), false);
  const std::size_t ia = a.id(), ib = b.id();
  return t.record(std::move(out), {ia, ib}, [=](Tape& tp, std::size_t self) {
    const double* g = tp.grad(self).data().data();
    if (tp.requires_grad(ia))
      kernels::gemm(false, true, m, k, n, g, tp.value(ib).data().data(), tp.grad(ia).data().data(), true);
    if (tp.requires_grad(ib))
      kernels::gemm(true, false, k, n, m, tp.value(ia).data().data(), g, tp.grad(ib).data().data(), true);
  });
}

Var transpose(const Var& a) {
  Tape& t = same_tape(a);
  require_rank2("transpose", a);
  const Tensor& av = a.value();
  const std::size_t r = av.dim(0), c = av.dim(1);
  Tensor out({c, r});
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out[j * r + i] = av[i * c + j];
  const std::size_t ia = a.id();
  return t.record(std::move(out), {ia}, [=](Tape& tp, std::size_t self) {
    const Tensor& g = tp.grad(self);
    Tensor& ga = tp.grad(ia);
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < c; ++j) ga[i * c + j] += g[j * r + i];
  });
}

Var add(const Var& a, const Var& b) { return binary("add", a, b, 1.0, false); }
Var sub(const Var& a, const Var& b) { return binary("sub", a, b, -1.0, false); }
Var mul(const Var& a, const Var& b) { return binary("mul", a, b, 0.0, true); }

Var scale(const Var& a, double s) {
  Tape& t = same_tape(a);
  Tensor out = a.value();
  for (auto& v : out.data()) v *= s;
  const std::size_t ia = a.id();
  return t.record(std::move(out), {ia}, [=](Tape& tp, std::size_t self) {
    const Tensor& g = tp.grad(self);
    Tensor& ga = tp.grad(ia);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += s * g[i];
  });
}

Var add_scalar(const Var& a, double s) {
  Tape& t = same_tape(a);
  Tensor out = a.value();
  for (auto& v : out.data()) v += s;
  const std::size_t ia = a.id();
  return t.record(std::move(out), {ia}, [=](Tape& tp, std::size_t self) {
    const Tensor& g = tp.grad(self);
    Tensor& ga = tp.grad(ia);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
  });
}

Var concat(const std::vector<Var>& parts, std::size_t axis) {
  if (parts.empty()) throw Error(ErrorCode::ShapeMismatch, "concat of nothing");
  Tape& t = same_tape(parts.front());
  const Shape& first = parts.front().shape();
  const AxisView base = axis_view(first, axis);
  std::vector<std::size_t> lens, ids;
  std::size_t total = 0;
  for (const auto& p : parts) {
    if (p.tape() != &t) throw Error(ErrorCode::DanglingTape, "concat operands come from different tapes");
    t.check(p);
    Shape s = p.shape();
    if (s.size() != first.size()) shape_mismatch("concat", first, s);
    for (std::size_t d = 0; d < s.size(); ++d)
      if (d != axis && s[d] != first[d]) shape_mismatch("concat", first, s);
    lens.push_back(s[axis]);
    ids.push_back(p.id());
    total += s[axis];
  }
  Shape out_shape = first;
  out_shape[axis] = total;
  Tensor out(out_shape);
  const std::size_t outer = base.outer, inner = base.inner;
  std::size_t offset = 0;
  for (std::size_t k = 0; k < parts.size(); ++k) {
    const Tensor& pv = parts[k].value();
    for (std::size_t o = 0; o < outer; ++o)
      std::copy_n(pv.data().begin() + static_cast<std::ptrdiff_t>(o * lens[k] * inner), lens[k] * inner,
                  out.data().begin() + static_cast<std::ptrdiff_t>((o * total + offset) * inner));
    offset += lens[k];
  }
  return t.record(std::move(out), ids, [=](Tape& tp, std::size_t self) {
    const Tensor& g = tp.grad(self);
    std::size_t off = 0;
    for (std::size_t k = 0; k < ids.size(); ++k) {
      if (tp.requires_grad(ids[k])) {
        Tensor& gk = tp.grad(ids[k]);
        for (std::size_t o = 0; o < outer; ++o)
          for (std::size_t i = 0; i < lens[k] * inner; ++i) gk[o * lens[k] * inner + i] += g[(o * total + off) * inner + i];
      }
      off += lens[k];
    }
  });
}

Var slice(const Var& a, std::size_t axis, std::size_t begin, std::size_t end) {
  Tape& t = same_tape(a);
  const AxisView v = axis_view(a.shape(), axis);
  if (begin >= end || end > v.len)
    throw Error(ErrorCode::ShapeMismatch, "slice [" + std::to_string(begin) + "," + std::to_string(end) +
                                              ") of axis length " + std::to_string(v.len));
  Shape out_shape = a.shape();
  const std::size_t n = end - begin;
  out_shape[axis] = n;
  Tensor out(out_shape);
  const Tensor& av = a.value();
  for (std::size_t o = 0; o < v.outer; ++o)
    for (std::size_t i = 0; i < n * v.inner; ++i) out[o * n * v.inner + i] = av[(o * v.len + begin) * v.inner + i];
  const std::size_t ia = a.id();
  return t.record(std::move(out), {ia}, [=](Tape& tp, std::size_t self) {
    const Tensor& g = tp.grad(self);
    Tensor& ga = tp.grad(ia);
    for (std::size_t o = 0; o < v.outer; ++o)
      for (std::size_t i = 0; i < n * v.inner; ++i) ga[(o * v.len + begin) * v.inner + i] += g[o * n * v.inner + i];
  });
}

Var relu(const Var& a) {
  Tape& t = same_tape(a);
  Tensor out = a.value();
  for (auto& v : out.data()) v = v > 0.0 ? v : 0.0;
  const std::size_t ia = a.id();
  return t.record(std::move(out), {ia}, [=](Tape& tp, std::size_t self) {
    const Tensor& g = tp.grad(self);
    const Tensor& x = tp.value(ia);
    Tensor& ga = tp.grad(ia);
    for (std::size_t i = 0; i < g.size(); ++i)
      if (x[i] > 0.0) ga[i] += g[i];
  });
}

Var softmax(const Var& a, std::size_t axis) {
  Tape& t = same_tape(a);
  const AxisView v = axis_view(a.shape(), axis);
  const Tensor& x = a.value();
  Tensor out(x.shape());
  for (std::size_t o = 0; o < v.outer; ++o) {
    for (std::size_t in = 0; in < v.inner; ++in) {
      auto idx = [&](std::size_t i) { return (o * v.len + i) * v.inner + in; };
      double mx = x[idx(0)];
      for (std::size_t i = 1; i < v.len; ++i) mx = std::max(mx, x[idx(i)]);
      double z = 0.0;
      for (std::size_t i = 0; i < v.len; ++i) z += (out[idx(i)] = std::exp(x[idx(i)] - mx));
      for (std::size_t i = 0; i < v.len; ++i) out[idx(i)] /= z;
    }
  }
  const std::size_t ia = a.id();
  return t.record(std::move(out), {ia}, [=](Tape& tp, std::size_t self) {
    const Tensor& g = tp.grad(self);
    const Tensor& y = tp.value(self);
    Tensor& ga = tp.grad(ia);
    for (std::size_t o = 0; o < v.outer; ++o) {
      for (std::size_t in = 0; in < v.inner; ++in) {
        auto idx = [&](std::size_t i) { return (o * v.len + i) * v.inner + in; };
        double dot = 0.0;
        for (std::size_t i = 0; i < v.len; ++i) dot += g[idx(i)] * y[idx(i)];
        for (std::size_t i = 0; i < v.len; ++i) ga[idx(i)] += y[idx(i)] * (g[idx(i)] - dot);
      }
    }
  });
}

Var layer_norm(const Var& a, std::size_t axis, double eps) {
  Tape& t = same_tape(a);
  const AxisView v = axis_view(a.shape(), axis);
  const Tensor& x = a.value();
  Tensor out(x.shape());
  std::vector<double> inv_sigma(v.outer * v.inner);
  const double n = static_cast<double>(v.len);
  for (std::size_t o = 0; o < v.outer; ++o) {
    for (std::size_t in = 0; in < v.inner; ++in) {
      auto idx = [&](std::size_t i) { return (o * v.len + i) * v.inner + in; };
      double mu = 0.0;
      for (std::size_t i = 0; i < v.len; ++i) mu += x[idx(i)];
      mu /= n;
      double var = 0.0;
      for (std::size_t i = 0; i < v.len; ++i) var += (x[idx(i)] - mu) * (x[idx(i)] - mu);
      var /= n;
      const double is = 1.0 / std::sqrt(var + eps);
      inv_sigma[o * v.inner + in] = is;
      for (std::size_t i = 0; i < v.len; ++i) out[idx(i)] = (x[idx(i)] - mu) * is;
    }
  }
  const std::size_t ia = a.id();
  return t.record(std::move(out), {ia}, [=, inv_sigma = std::move(inv_sigma)](Tape& tp, std::size_t self) {
    const Tensor& g = tp.grad(self);
    const Tensor& xhat = tp.value(self);
    Tensor& ga = tp.grad(ia);
    for (std::size_t o = 0; o < v.outer; ++o) {
      for (std::size_t in = 0; in < v.inner; ++in) {
        auto idx = [&](std::size_t i) { return (o * v.len + i) * v.inner + in; };
        double mg = 0.0, mgx = 0.0;
        for (std::size_t i = 0; i < v.len; ++i) {
          mg += g[idx(i)];
          mgx += g[idx(i)] * xhat[idx(i)];
        }
        mg /= n;
        mgx /= n;
        const double is = inv_sigma[o * v.inner + in];
        for (std::size_t i = 0; i < v.len; ++i) ga[idx(i)] += is * (g[idx(i)] - mg - xhat[idx(i)] * mgx);
      }
    }
  });
}

Var dropout(const Var& a, double rate, Rng& rng, Mode mode) {
  Tape& t = same_tape(a);
  if (rate < 0.0 || rate >= 1.0) throw Error(ErrorCode::InvalidConfig, "dropout rate must be in [0,1)");
  if (mode == Mode::Eval || rate == 0.0) return a;
  const double keep_scale = 1.0 / (1.0 - rate);
  std::bernoulli_distribution keep(1.0 - rate);
  std::vector<double> mask(a.value().size());
  for (auto& m : mask) m = keep(rng) ? keep_scale : 0.0;
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= mask[i];
  const std::size_t ia = a.id();
  return t.record(std::move(out), {ia}, [=, mask = std::move(mask)](Tape& tp, std::size_t self) {
    const Tensor& g = tp.grad(self);
    Tensor& ga = tp.grad(ia);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * mask[i];
  });
}

Var l2_normalize(const Var& a, std::size_t axis, double eps) {
  Tape& t = same_tape(a);
  const AxisView v = axis_view(a.shape(), axis);
  const Tensor& x = a.value();
  Tensor out(x.shape());
  std::vector<double> norms(v.outer * v.inner);
  for (std::size_t o = 0; o < v.outer; ++o) {
    for (std::size_t in = 0; in < v.inner; ++in) {
      auto idx = [&](std::size_t i) { return (o * v.len + i) * v.inner + in; };
      double ss = 0.0;
      for (std::size_t i = 0; i < v.len; ++i) ss += x[idx(i)] * x[idx(i)];
      const double nrm = std::sqrt(ss);
      norms[o * v.inner + in] = nrm;
      const double denom = std::max(nrm, eps);
      for (std::size_t i = 0; i < v.len; ++i) out[idx(i)] = x[idx(i)] / denom;
    }
  }
  const std::size_t ia = a.id();
  return t.record(std::move(out), {ia}, [=, norms = std::move(norms)](Tape& tp, std::size_t self) {
    const Tensor& g = tp.grad(self);
    const Tensor& y = tp.value(self);
    Tensor& ga = tp.grad(ia);
    for (std::size_t o = 0; o < v.outer; ++o) {
      for (std::size_t in = 0; in < v.inner; ++in) {
        auto idx = [&](std::size_t i) { return (o * v.len + i) * v.inner + in; };
        const double nrm = norms[o * v.inner + in];
        if (nrm > eps) {
          double dot = 0.0;
          for (std::size_t i = 0; i < v.len; ++i) dot += y[idx(i)] * g[idx(i)];
          for (std::size_t i = 0; i < v.len; ++i) ga[idx(i)] += (g[idx(i)] - y[idx(i)] * dot) / nrm;
        } else {
          for (std::size_t i = 0; i < v.len; ++i) ga[idx(i)] += g[idx(i)] / eps;
        }
      }
    }
  });
}

Var sum(const Var& a) {
  Tape& t = same_tape(a);
  double s = 0.0;
  for (double v : a.value().data()) s += v;
  const std::size_t ia = a.id();
  return t.record(Tensor::scalar(s), {ia}, [=](Tape& tp, std::size_t self) {
    const double g = tp.grad(self)[0];
    for (auto& v : tp.grad(ia).data()) v += g;
  });
}

Var mean(const Var& a) {
  const double n = static_cast<double>(a.value().size());
  return scale(sum(a), n > 0 ? 1.0 / n : 0.0);
}

Var gather_rows(const Var& a, std::vector<std::size_t> rows) {
  Tape& t = same_tape(a);
  require_rank2("gather_rows", a);
  const Tensor& av = a.value();
  const std::size_t n = av.dim(0), d = av.dim(1);
  for (auto r : rows)
    if (r >= n) throw Error(ErrorCode::ShapeMismatch, "gather row " + std::to_string(r) + " of " + std::to_string(n));
  Tensor out({rows.size(), d});
  for (std::size_t i = 0; i < rows.size(); ++i)
    std::copy_n(av.data().begin() + static_cast<std::ptrdiff_t>(rows[i] * d), d,
                out.data().begin() + static_cast<std::ptrdiff_t>(i * d));
  const std::size_t ia = a.id();
  return t.record(std::move(out), {ia}, [=, rows = std::move(rows)](Tape& tp, std::size_t self) {
    const Tensor& g = tp.grad(self);
    Tensor& ga = tp.grad(ia);
    for (std::size_t i = 0; i < rows.size(); ++i)
      for (std::size_t j = 0; j < d; ++j) ga[rows[i] * d + j] += g[i * d + j];
  });
}

Var row_norms(const Var& a) {
  Tape& t = same_tape(a);
  require_rank2("row_norms", a);
  const Tensor& av = a.value();
  const std::size_t n = av.dim(0), d = av.dim(1);
  Tensor out({n});
  for (std::size_t i = 0; i < n; ++i) {
    double ss = 0.0;
    for (std::size_t j = 0; j < d; ++j) ss += av[i * d + j] * av[i * d + j];
    out[i] = std::sqrt(ss);
  }
  const std::size_t ia = a.id();
  return t.record(std::move(out), {ia}, [=](Tape& tp, std::size_t self) {
    const Tensor& g = tp.grad(self);
    const Tensor& y = tp.value(self);
    const Tensor& x = tp.value(ia);
    Tensor& ga = tp.grad(ia);
    for (std::size_t i = 0; i < n; ++i) {
      if (y[i] == 0.0) continue;  // subgradient 0 at the origin
      for (std::size_t j = 0; j < d; ++j) ga[i * d + j] += g[i] * x[i * d + j] / y[i];
    }
  });
}

}  // namespace consor::ad
