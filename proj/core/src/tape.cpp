#include "lapp/numerics/tape.hpp"

#include <cmath>
#include <limits>
#include <memory>
#include <numbers>
#include <stdexcept>
#include <string>

namespace lapp::num {

namespace {

[[noreturn]] void shape_error(const char* op, const DenseArray& a) {
  throw std::invalid_argument(std::string(op) + ": bad shape " + a.shape_str());
}

[[noreturn]] void shape_error(const char* op, const DenseArray& a,
                              const DenseArray& b) {
  throw std::invalid_argument(std::string(op) + ": shape mismatch " +
                              a.shape_str() + " vs " + b.shape_str());
}

double stable_sigmoid(double x) {
  if (x >= 0.0) {
    return 1.0 / (1.0 + std::exp(-x));
  }
  double e = std::exp(x);
  return e / (1.0 + e);
}

constexpr double kInvSqrt2 = 0.7071067811865475244;
constexpr double kInvSqrt2Pi = 0.3989422804014326779;

}  // namespace

void gemm(const double* a, const double* b, double* c, std::size_t m,
          std::size_t k, std::size_t n, bool trans_a, bool trans_b,
          bool accumulate) {
  if (!accumulate) {
    for (std::size_t i = 0; i < m * n; ++i) c[i] = 0.0;
  }
  if (!trans_a && !trans_b) {
    for (std::size_t i = 0; i < m; ++i) {
      const double* arow = a + i * k;
      double* crow = c + i * n;
      for (std::size_t kk = 0; kk < k; ++kk) {
        const double aik = arow[kk];
        const double* brow = b + kk * n;
        for (std::size_t j = 0; j < n; ++j) crow[j] += aik * brow[j];
      }
    }
  } else if (!trans_a && trans_b) {
    // b is (n,k); dot rows against rows.
    for (std::size_t i = 0; i < m; ++i) {
      const double* arow = a + i * k;
      double* crow = c + i * n;
      for (std::size_t j = 0; j < n; ++j) {
        const double* brow = b + j * k;
        double acc = 0.0;
        for (std::size_t kk = 0; kk < k; ++kk) acc += arow[kk] * brow[kk];
        crow[j] += acc;
      }
    }
  } else if (trans_a && !trans_b) {
    // a is (k,m); rank-1 accumulation per kk keeps rows contiguous.
    for (std::size_t kk = 0; kk < k; ++kk) {
      const double* arow = a + kk * m;
      const double* brow = b + kk * n;
      for (std::size_t i = 0; i < m; ++i) {
        const double aik = arow[i];
        double* crow = c + i * n;
        for (std::size_t j = 0; j < n; ++j) crow[j] += aik * brow[j];
      }
    }
  } else {
    for (std::size_t i = 0; i < m; ++i) {
      for (std::size_t j = 0; j < n; ++j) {
        double acc = 0.0;
        for (std::size_t kk = 0; kk < k; ++kk)
          acc += a[kk * m + i] * b[j * k + kk];
        c[i * n + j] += acc;
      }
    }
  }
}

Var Tape::push(Node n) {
  nodes_.push_back(std::move(n));
  return Var{static_cast<std::uint32_t>(nodes_.size() - 1)};
}

void Tape::accum(std::uint32_t idx, const double* g, std::size_t len) {
  Node& p = nodes_[idx];
  if (!p.needs_grad) return;
  double* dst = p.grad.data();
  for (std::size_t i = 0; i < len; ++i) dst[i] += g[i];
}

bool Tape::any_grad(std::initializer_list<Var> vs) const {
  for (Var v : vs)
    if (node(v).needs_grad) return true;
  return false;
}

Var Tape::leaf(DenseArray v) {
  Node n;
  n.value = std::move(v);
  return push(std::move(n));
}

Var Tape::param(Parameter& p) {
  Node n;
  n.value = p.value;
  n.needs_grad = true;
  n.bound = &p;
  n.grad = DenseArray(p.value.shape());
  n.pull = [](Tape&, const Node& self) {
    double* dst = self.bound->grad.data();
    const double* g = self.grad.data();
    for (std::size_t i = 0; i < self.grad.size(); ++i) dst[i] += g[i];
  };
  return push(std::move(n));
}

// Builds the op's output node; grad buffer only if gradient flows.
#define MAKE_NODE(VALUE, NEEDS)            \
  Node n;                                  \
  n.value = (VALUE);                       \
  n.needs_grad = (NEEDS);                  \
  if (n.needs_grad) n.grad = DenseArray(n.value.shape());

Var Tape::add(Var a, Var b) {
  const DenseArray& va = node(a).value;
  const DenseArray& vb = node(b).value;
  if (!va.same_shape(vb)) shape_error("add", va, vb);
  DenseArray out = va;
  const double* pb = vb.data();
  double* po = out.data();
  for (std::size_t i = 0; i < out.size(); ++i) po[i] += pb[i];
  MAKE_NODE(std::move(out), any_grad({a, b}))
  if (n.needs_grad) {
    std::uint32_t ia = a.idx, ib = b.idx;
    n.pull = [ia, ib](Tape& t, const Node& self) {
      t.accum(ia, self.grad.data(), self.grad.size());
      t.accum(ib, self.grad.data(), self.grad.size());
    };
  }
  return push(std::move(n));
}

Var Tape::sub(Var a, Var b) {
  const DenseArray& va = node(a).value;
  const DenseArray& vb = node(b).value;
  if (!va.same_shape(vb)) shape_error("sub", va, vb);
  DenseArray out = va;
  const double* pb = vb.data();
  double* po = out.data();
  for (std::size_t i = 0; i < out.size(); ++i) po[i] -= pb[i];
  MAKE_NODE(std::move(out), any_grad({a, b}))
  if (n.needs_grad) {
    std::uint32_t ia = a.idx, ib = b.idx;
    n.pull = [ia, ib](Tape& t, const Node& self) {
      t.accum(ia, self.grad.data(), self.grad.size());
      Node& pb2 = t.nodes_[ib];
      if (pb2.needs_grad) {
        double* dst = pb2.grad.data();
        const double* g = self.grad.data();
        for (std::size_t i = 0; i < self.grad.size(); ++i) dst[i] -= g[i];
      }
    };
  }
  return push(std::move(n));
}

Var Tape::mul(Var a, Var b) {
  const DenseArray& va = node(a).value;
  const DenseArray& vb = node(b).value;
  if (!va.same_shape(vb)) shape_error("mul", va, vb);
  DenseArray out = va;
  const double* pb = vb.data();
  double* po = out.data();
  for (std::size_t i = 0; i < out.size(); ++i) po[i] *= pb[i];
  MAKE_NODE(std::move(out), any_grad({a, b}))
  if (n.needs_grad) {
    std::uint32_t ia = a.idx, ib = b.idx;
    n.pull = [ia, ib](Tape& t, const Node& self) {
      const double* g = self.grad.data();
      Node& pa = t.nodes_[ia];
      Node& pb2 = t.nodes_[ib];
      const double* xa = pa.value.data();
      const double* xb = pb2.value.data();
      if (pa.needs_grad) {
        double* dst = pa.grad.data();
        for (std::size_t i = 0; i < self.grad.size(); ++i) dst[i] += g[i] * xb[i];
      }
      if (pb2.needs_grad) {
        double* dst = pb2.grad.data();
        for (std::size_t i = 0; i < self.grad.size(); ++i) dst[i] += g[i] * xa[i];
      }
    };
  }
  return push(std::move(n));
}

Var Tape::neg(Var a) { return scale(a, -1.0); }

Var Tape::scale(Var a, double k) {
  DenseArray out = node(a).value;
  double* po = out.data();
  for (std::size_t i = 0; i < out.size(); ++i) po[i] *= k;
  MAKE_NODE(std::move(out), node(a).needs_grad)
  if (n.needs_grad) {
    std::uint32_t ia = a.idx;
    n.pull = [ia, k](Tape& t, const Node& self) {
      Node& pa = t.nodes_[ia];
      if (!pa.needs_grad) return;
      double* dst = pa.grad.data();
      const double* g = self.grad.data();
      for (std::size_t i = 0; i < self.grad.size(); ++i) dst[i] += k * g[i];
    };
  }
  return push(std::move(n));
}

Var Tape::add_scalar(Var a, double c) {
  DenseArray out = node(a).value;
  double* po = out.data();
  for (std::size_t i = 0; i < out.size(); ++i) po[i] += c;
  MAKE_NODE(std::move(out), node(a).needs_grad)
  if (n.needs_grad) {
    std::uint32_t ia = a.idx;
    n.pull = [ia](Tape& t, const Node& self) {
      t.accum(ia, self.grad.data(), self.grad.size());
    };
  }
  return push(std::move(n));
}

Var Tape::add_rowvec(Var x, Var v) {
  const DenseArray& vx = node(x).value;
  const DenseArray& vv = node(v).value;
  if (vx.rank() != 2 || vv.rank() != 1 || vv.size() != vx.cols())
    shape_error("add_rowvec", vx, vv);
  DenseArray out = vx;
  const std::size_t m = vx.rows(), c = vx.cols();
  for (std::size_t i = 0; i < m; ++i) {
    double* row = out.data() + i * c;
    const double* pv = vv.data();
    for (std::size_t j = 0; j < c; ++j) row[j] += pv[j];
  }
  MAKE_NODE(std::move(out), any_grad({x, v}))
  if (n.needs_grad) {
    std::uint32_t ix = x.idx, iv = v.idx;
    n.pull = [ix, iv, m, c](Tape& t, const Node& self) {
      const double* g = self.grad.data();
      t.accum(ix, g, m * c);
      Node& pv = t.nodes_[iv];
      if (pv.needs_grad) {
        double* dst = pv.grad.data();
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t j = 0; j < c; ++j) dst[j] += g[i * c + j];
      }
    };
  }
  return push(std::move(n));
}

Var Tape::mul_rowvec(Var x, Var v) {
  const DenseArray& vx = node(x).value;
  const DenseArray& vv = node(v).value;
  if (vx.rank() != 2 || vv.rank() != 1 || vv.size() != vx.cols())
    shape_error("mul_rowvec", vx, vv);
  DenseArray out = vx;
  const std::size_t m = vx.rows(), c = vx.cols();
  for (std::size_t i = 0; i < m; ++i) {
    double* row = out.data() + i * c;
    const double* pv = vv.data();
    for (std::size_t j = 0; j < c; ++j) row[j] *= pv[j];
  }
  MAKE_NODE(std::move(out), any_grad({x, v}))
  if (n.needs_grad) {
    std::uint32_t ix = x.idx, iv = v.idx;
    n.pull = [ix, iv, m, c](Tape& t, const Node& self) {
      const double* g = self.grad.data();
      Node& px = t.nodes_[ix];
      Node& pv = t.nodes_[iv];
      if (px.needs_grad) {
        double* dst = px.grad.data();
        const double* val_v = pv.value.data();
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t j = 0; j < c; ++j)
            dst[i * c + j] += g[i * c + j] * val_v[j];
      }
      if (pv.needs_grad) {
        double* dst = pv.grad.data();
        const double* val_x = px.value.data();
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t j = 0; j < c; ++j)
            dst[j] += g[i * c + j] * val_x[i * c + j];
      }
    };
  }
  return push(std::move(n));
}

Var Tape::gelu(Var a) {
  DenseArray out = node(a).value;
  double* po = out.data();
  for (std::size_t i = 0; i < out.size(); ++i) {
    double x = po[i];
    po[i] = 0.5 * x * (1.0 + std::erf(x * kInvSqrt2));
  }
  MAKE_NODE(std::move(out), node(a).needs_grad)
  if (n.needs_grad) {
    std::uint32_t ia = a.idx;
    n.pull = [ia](Tape& t, const Node& self) {
      Node& pa = t.nodes_[ia];
      if (!pa.needs_grad) return;
      double* dst = pa.grad.data();
      const double* g = self.grad.data();
      const double* x = pa.value.data();
      for (std::size_t i = 0; i < self.grad.size(); ++i) {
        double cdf = 0.5 * (1.0 + std::erf(x[i] * kInvSqrt2));
        double pdf = kInvSqrt2Pi * std::exp(-0.5 * x[i] * x[i]);
        dst[i] += g[i] * (cdf + x[i] * pdf);
      }
    };
  }
  return push(std::move(n));
}

Var Tape::elu(Var a) {
  DenseArray out = node(a).value;
  double* po = out.data();
  for (std::size_t i = 0; i < out.size(); ++i)
    po[i] = po[i] > 0.0 ? po[i] : std::expm1(po[i]);
  MAKE_NODE(std::move(out), node(a).needs_grad)
  if (n.needs_grad) {
    std::uint32_t ia = a.idx;
    n.pull = [ia](Tape& t, const Node& self) {
      Node& pa = t.nodes_[ia];
      if (!pa.needs_grad) return;
      double* dst = pa.grad.data();
      const double* g = self.grad.data();
      const double* x = pa.value.data();
      const double* y = self.value.data();
      for (std::size_t i = 0; i < self.grad.size(); ++i)
        dst[i] += g[i] * (x[i] > 0.0 ? 1.0 : y[i] + 1.0);
    };
  }
  return push(std::move(n));
}

Var Tape::tanh(Var a) {
  DenseArray out = node(a).value;
  double* po = out.data();
  for (std::size_t i = 0; i < out.size(); ++i) po[i] = std::tanh(po[i]);
  MAKE_NODE(std::move(out), node(a).needs_grad)
  if (n.needs_grad) {
    std::uint32_t ia = a.idx;
    n.pull = [ia](Tape& t, const Node& self) {
      Node& pa = t.nodes_[ia];
      if (!pa.needs_grad) return;
      double* dst = pa.grad.data();
      const double* g = self.grad.data();
      const double* y = self.value.data();
      for (std::size_t i = 0; i < self.grad.size(); ++i)
        dst[i] += g[i] * (1.0 - y[i] * y[i]);
    };
  }
  return push(std::move(n));
}

Var Tape::sigmoid(Var a) {
  DenseArray out = node(a).value;
  double* po = out.data();
  for (std::size_t i = 0; i < out.size(); ++i) po[i] = stable_sigmoid(po[i]);
  MAKE_NODE(std::move(out), node(a).needs_grad)
  if (n.needs_grad) {
    std::uint32_t ia = a.idx;
    n.pull = [ia](Tape& t, const Node& self) {
      Node& pa = t.nodes_[ia];
      if (!pa.needs_grad) return;
      double* dst = pa.grad.data();
      const double* g = self.grad.data();
      const double* y = self.value.data();
      for (std::size_t i = 0; i < self.grad.size(); ++i)
        dst[i] += g[i] * y[i] * (1.0 - y[i]);
    };
  }
  return push(std::move(n));
}

Var Tape::exp(Var a) {
  DenseArray out = node(a).value;
  double* po = out.data();
  for (std::size_t i = 0; i < out.size(); ++i) po[i] = std::exp(po[i]);
  MAKE_NODE(std::move(out), node(a).needs_grad)
  if (n.needs_grad) {
    std::uint32_t ia = a.idx;
    n.pull = [ia](Tape& t, const Node& self) {
      Node& pa = t.nodes_[ia];
      if (!pa.needs_grad) return;
      double* dst = pa.grad.data();
      const double* g = self.grad.data();
      const double* y = self.value.data();
      for (std::size_t i = 0; i < self.grad.size(); ++i) dst[i] += g[i] * y[i];
    };
  }
  return push(std::move(n));
}

Var Tape::log(Var a) {
  DenseArray out = node(a).value;
  double* po = out.data();
  for (std::size_t i = 0; i < out.size(); ++i) po[i] = std::log(po[i]);
  MAKE_NODE(std::move(out), node(a).needs_grad)
  if (n.needs_grad) {
    std::uint32_t ia = a.idx;
    n.pull = [ia](Tape& t, const Node& self) {
      Node& pa = t.nodes_[ia];
      if (!pa.needs_grad) return;
      double* dst = pa.grad.data();
      const double* g = self.grad.data();
      const double* x = pa.value.data();
      for (std::size_t i = 0; i < self.grad.size(); ++i) dst[i] += g[i] / x[i];
    };
  }
  return push(std::move(n));
}

Var Tape::square(Var a) {
  DenseArray out = node(a).value;
  double* po = out.data();
  for (std::size_t i = 0; i < out.size(); ++i) po[i] *= po[i];
  MAKE_NODE(std::move(out), node(a).needs_grad)
  if (n.needs_grad) {
    std::uint32_t ia = a.idx;
    n.pull = [ia](Tape& t, const Node& self) {
      Node& pa = t.nodes_[ia];
      if (!pa.needs_grad) return;
      double* dst = pa.grad.data();
      const double* g = self.grad.data();
      const double* x = pa.value.data();
      for (std::size_t i = 0; i < self.grad.size(); ++i)
        dst[i] += g[i] * 2.0 * x[i];
    };
  }
  return push(std::move(n));
}

Var Tape::minimum(Var a, Var b) {
  const DenseArray& va = node(a).value;
  const DenseArray& vb = node(b).value;
  if (!va.same_shape(vb)) shape_error("minimum", va, vb);
  DenseArray out = va;
  const double* pb = vb.data();
  double* po = out.data();
  for (std::size_t i = 0; i < out.size(); ++i)
    po[i] = po[i] <= pb[i] ? po[i] : pb[i];
  MAKE_NODE(std::move(out), any_grad({a, b}))
  if (n.needs_grad) {
    std::uint32_t ia = a.idx, ib = b.idx;
    n.pull = [ia, ib](Tape& t, const Node& self) {
      Node& pa = t.nodes_[ia];
      Node& pb2 = t.nodes_[ib];
      const double* xa = pa.value.data();
      const double* xb = pb2.value.data();
      const double* g = self.grad.data();
      for (std::size_t i = 0; i < self.grad.size(); ++i) {
        // Ties route to the first argument; fixed rule keeps runs identical.
        if (xa[i] <= xb[i]) {
          if (pa.needs_grad) pa.grad[i] += g[i];
        } else if (pb2.needs_grad) {
          pb2.grad[i] += g[i];
        }
      }
    };
  }
  return push(std::move(n));
}

Var Tape::clamp(Var a, double lo, double hi) {
  DenseArray out = node(a).value;
  double* po = out.data();
  for (std::size_t i = 0; i < out.size(); ++i)
    po[i] = po[i] < lo ? lo : (po[i] > hi ? hi : po[i]);
  MAKE_NODE(std::move(out), node(a).needs_grad)
  if (n.needs_grad) {
    std::uint32_t ia = a.idx;
    n.pull = [ia, lo, hi](Tape& t, const Node& self) {
      Node& pa = t.nodes_[ia];
      if (!pa.needs_grad) return;
      const double* x = pa.value.data();
      const double* g = self.grad.data();
      double* dst = pa.grad.data();
      for (std::size_t i = 0; i < self.grad.size(); ++i)
        if (x[i] >= lo && x[i] <= hi) dst[i] += g[i];
    };
  }
  return push(std::move(n));
}

Var Tape::matmul(Var a, Var b) {
  const DenseArray& va = node(a).value;
  const DenseArray& vb = node(b).value;
  if (va.rank() != 2 || vb.rank() != 2 || va.cols() != vb.rows())
    shape_error("matmul", va, vb);
  const std::size_t m = va.rows(), k = va.cols(), nn = vb.cols();
  DenseArray out({m, nn});
  gemm(va.data(), vb.data(), out.data(), m, k, nn, false, false, false);
  MAKE_NODE(std::move(out), any_grad({a, b}))
  if (n.needs_grad) {
    std::uint32_t ia = a.idx, ib = b.idx;
    n.pull = [ia, ib, m, k, nn](Tape& t, const Node& self) {
      Node& pa = t.nodes_[ia];
      Node& pb = t.nodes_[ib];
      const double* g = self.grad.data();
      if (pa.needs_grad)  // dA += G * B^T
        gemm(g, pb.value.data(), pa.grad.data(), m, nn, k, false, true, true);
      if (pb.needs_grad)  // dB += A^T * G
        gemm(pa.value.data(), g, pb.grad.data(), k, m, nn, true, false, true);
    };
  }
  return push(std::move(n));
}

Var Tape::softmax_rows(Var a) {
  const DenseArray& va = node(a).value;
  if (va.rank() != 2) shape_error("softmax_rows", va);
  const std::size_t m = va.rows(), c = va.cols();
  DenseArray out = va;
  for (std::size_t i = 0; i < m; ++i) {
    double* row = out.data() + i * c;
    double mx = row[0];
    for (std::size_t j = 1; j < c; ++j) mx = std::max(mx, row[j]);
    double z = 0.0;
    for (std::size_t j = 0; j < c; ++j) {
      row[j] = std::exp(row[j] - mx);
      z += row[j];
    }
    for (std::size_t j = 0; j < c; ++j) row[j] /= z;
  }
  MAKE_NODE(std::move(out), node(a).needs_grad)
  if (n.needs_grad) {
    std::uint32_t ia = a.idx;
    n.pull = [ia, m, c](Tape& t, const Node& self) {
      Node& pa = t.nodes_[ia];
      if (!pa.needs_grad) return;
      const double* s = self.value.data();
      const double* g = self.grad.data();
      double* dst = pa.grad.data();
      for (std::size_t i = 0; i < m; ++i) {
        const double* srow = s + i * c;
        const double* grow = g + i * c;
        double dot = 0.0;
        for (std::size_t j = 0; j < c; ++j) dot += srow[j] * grow[j];
        double* drow = dst + i * c;
        for (std::size_t j = 0; j < c; ++j)
          drow[j] += srow[j] * (grow[j] - dot);
      }
    };
  }
  return push(std::move(n));
}

Var Tape::layer_norm(Var x, Var gain, Var bias, double eps) {
  const DenseArray& vx = node(x).value;
  const DenseArray& vg = node(gain).value;
  const DenseArray& vb = node(bias).value;
  if (vx.rank() != 2) shape_error("layer_norm", vx);
  const std::size_t m = vx.rows(), c = vx.cols();
  if (vg.size() != c || vb.size() != c) shape_error("layer_norm", vg, vb);

  auto xhat = std::make_shared<std::vector<double>>(m * c);
  auto inv = std::make_shared<std::vector<double>>(m);
  DenseArray out({m, c});
  for (std::size_t i = 0; i < m; ++i) {
    const double* row = vx.data() + i * c;
    double mu = 0.0;
    for (std::size_t j = 0; j < c; ++j) mu += row[j];
    mu /= static_cast<double>(c);
    double var = 0.0;
    for (std::size_t j = 0; j < c; ++j) {
      double d = row[j] - mu;
      var += d * d;
    }
    var /= static_cast<double>(c);
    double iv = 1.0 / std::sqrt(var + eps);
    (*inv)[i] = iv;
    double* orow = out.data() + i * c;
    double* hrow = xhat->data() + i * c;
    for (std::size_t j = 0; j < c; ++j) {
      hrow[j] = (row[j] - mu) * iv;
      orow[j] = hrow[j] * vg[j] + vb[j];
    }
  }
  MAKE_NODE(std::move(out), any_grad({x, gain, bias}))
  if (n.needs_grad) {
    std::uint32_t ix = x.idx, ig = gain.idx, ib = bias.idx;
    n.pull = [ix, ig, ib, m, c, xhat, inv](Tape& t, const Node& self) {
      Node& px = t.nodes_[ix];
      Node& pg = t.nodes_[ig];
      Node& pb = t.nodes_[ib];
      const double* g = self.grad.data();
      if (pg.needs_grad) {
        double* dst = pg.grad.data();
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t j = 0; j < c; ++j)
            dst[j] += g[i * c + j] * (*xhat)[i * c + j];
      }
      if (pb.needs_grad) {
        double* dst = pb.grad.data();
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t j = 0; j < c; ++j) dst[j] += g[i * c + j];
      }
      if (px.needs_grad) {
        const double* gv = pg.value.data();
        double* dst = px.grad.data();
        const double cn = static_cast<double>(c);
        for (std::size_t i = 0; i < m; ++i) {
          const double* grow = g + i * c;
          const double* hrow = xhat->data() + i * c;
          double sum_dh = 0.0, sum_dh_h = 0.0;
          for (std::size_t j = 0; j < c; ++j) {
            double dh = grow[j] * gv[j];
            sum_dh += dh;
            sum_dh_h += dh * hrow[j];
          }
          double* drow = dst + i * c;
          for (std::size_t j = 0; j < c; ++j) {
            double dh = grow[j] * gv[j];
            drow[j] += (*inv)[i] * (dh - sum_dh / cn - hrow[j] * sum_dh_h / cn);
          }
        }
      }
    };
  }
  return push(std::move(n));
}

Var Tape::sum(Var a) {
  const DenseArray& va = node(a).value;
  double s = 0.0;
  const double* p = va.data();
  for (std::size_t i = 0; i < va.size(); ++i) s += p[i];
  MAKE_NODE(DenseArray::scalar(s), node(a).needs_grad)
  if (n.needs_grad) {
    std::uint32_t ia = a.idx;
    n.pull = [ia](Tape& t, const Node& self) {
      Node& pa = t.nodes_[ia];
      if (!pa.needs_grad) return;
      double g0 = self.grad[0];
      double* dst = pa.grad.data();
      for (std::size_t i = 0; i < pa.grad.size(); ++i) dst[i] += g0;
    };
  }
  return push(std::move(n));
}

Var Tape::mean(Var a) {
  const DenseArray& va = node(a).value;
  if (va.size() == 0) shape_error("mean", va);
  double s = 0.0;
  const double* p = va.data();
  for (std::size_t i = 0; i < va.size(); ++i) s += p[i];
  const double inv_n = 1.0 / static_cast<double>(va.size());
  MAKE_NODE(DenseArray::scalar(s * inv_n), node(a).needs_grad)
  if (n.needs_grad) {
    std::uint32_t ia = a.idx;
    n.pull = [ia, inv_n](Tape& t, const Node& self) {
      Node& pa = t.nodes_[ia];
      if (!pa.needs_grad) return;
      double g0 = self.grad[0] * inv_n;
      double* dst = pa.grad.data();
      for (std::size_t i = 0; i < pa.grad.size(); ++i) dst[i] += g0;
    };
  }
  return push(std::move(n));
}

Var Tape::sum_rows(Var a) {
  const DenseArray& va = node(a).value;
  if (va.rank() != 2) shape_error("sum_rows", va);
  const std::size_t m = va.rows(), c = va.cols();
  DenseArray out({c});
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < c; ++j) out[j] += va[i * c + j];
  MAKE_NODE(std::move(out), node(a).needs_grad)
  if (n.needs_grad) {
    std::uint32_t ia = a.idx;
    n.pull = [ia, m, c](Tape& t, const Node& self) {
      Node& pa = t.nodes_[ia];
      if (!pa.needs_grad) return;
      const double* g = self.grad.data();
      double* dst = pa.grad.data();
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < c; ++j) dst[i * c + j] += g[j];
    };
  }
  return push(std::move(n));
}

Var Tape::attention(Var q, Var k, Var v, std::size_t n_seq, std::size_t seq_len,
                    std::size_t heads, bool causal) {
  const DenseArray& vq = node(q).value;
  const DenseArray& vk = node(k).value;
  const DenseArray& vv = node(v).value;
  if (!vq.same_shape(vk) || !vq.same_shape(vv)) shape_error("attention", vq, vk);
  if (vq.rank() != 2 || vq.rows() != n_seq * seq_len)
    shape_error("attention", vq);
  const std::size_t dim = vq.cols();
  if (heads == 0 || dim % heads != 0)
    throw std::invalid_argument("attention: dim not divisible by heads");
  const std::size_t hd = dim / heads;
  const double sc = 1.0 / std::sqrt(static_cast<double>(hd));

  auto probs = std::make_shared<std::vector<double>>(
      n_seq * heads * seq_len * seq_len, 0.0);
  DenseArray out({n_seq * seq_len, dim});

  std::vector<double> scores(seq_len);
  for (std::size_t s = 0; s < n_seq; ++s) {
    for (std::size_t h = 0; h < heads; ++h) {
      const std::size_t hoff = h * hd;
      double* pbase = probs->data() + (s * heads + h) * seq_len * seq_len;
      for (std::size_t i = 0; i < seq_len; ++i) {
        const std::size_t jmax = causal ? i : seq_len - 1;
        const double* qrow = vq.data() + (s * seq_len + i) * dim + hoff;
        double mx = -std::numeric_limits<double>::infinity();
        for (std::size_t j = 0; j <= jmax; ++j) {
          const double* krow = vk.data() + (s * seq_len + j) * dim + hoff;
          double acc = 0.0;
          for (std::size_t d = 0; d < hd; ++d) acc += qrow[d] * krow[d];
          scores[j] = acc * sc;
          mx = std::max(mx, scores[j]);
        }
        double z = 0.0;
        for (std::size_t j = 0; j <= jmax; ++j) {
          scores[j] = std::exp(scores[j] - mx);
          z += scores[j];
        }
        double* prow = pbase + i * seq_len;
        double* orow = out.data() + (s * seq_len + i) * dim + hoff;
        for (std::size_t j = 0; j <= jmax; ++j) {
          prow[j] = scores[j] / z;
          const double* vrow = vv.data() + (s * seq_len + j) * dim + hoff;
          for (std::size_t d = 0; d < hd; ++d) orow[d] += prow[j] * vrow[d];
        }
      }
    }
  }

  MAKE_NODE(std::move(out), any_grad({q, k, v}))
  if (n.needs_grad) {
    std::uint32_t iq = q.idx, ik = k.idx, iv = v.idx;
    n.pull = [iq, ik, iv, n_seq, seq_len, heads, hd, dim, sc, causal,
              probs](Tape& t, const Node& self) {
      Node& pq = t.nodes_[iq];
      Node& pk = t.nodes_[ik];
      Node& pv = t.nodes_[iv];
      if (!pq.needs_grad && !pk.needs_grad && !pv.needs_grad) return;
      const double* g = self.grad.data();
      std::vector<double> dp(seq_len), ds(seq_len);
      for (std::size_t s = 0; s < n_seq; ++s) {
        for (std::size_t h = 0; h < heads; ++h) {
          const std::size_t hoff = h * hd;
          const double* pbase =
              probs->data() + (s * heads + h) * seq_len * seq_len;
          for (std::size_t i = 0; i < seq_len; ++i) {
            const std::size_t jmax = causal ? i : seq_len - 1;
            const double* prow = pbase + i * seq_len;
            const double* grow = g + (s * seq_len + i) * dim + hoff;
            double dot = 0.0;
            for (std::size_t j = 0; j <= jmax; ++j) {
              const double* vrow = pv.value.data() + (s * seq_len + j) * dim + hoff;
              double acc = 0.0;
              for (std::size_t d = 0; d < hd; ++d) acc += grow[d] * vrow[d];
              dp[j] = acc;
              dot += prow[j] * acc;
              if (pv.needs_grad) {
                double* dvrow = pv.grad.data() + (s * seq_len + j) * dim + hoff;
                for (std::size_t d = 0; d < hd; ++d)
                  dvrow[d] += prow[j] * grow[d];
              }
            }
            for (std::size_t j = 0; j <= jmax; ++j)
              ds[j] = prow[j] * (dp[j] - dot);
            const double* qrow = pq.value.data() + (s * seq_len + i) * dim + hoff;
            double* dqrow =
                pq.needs_grad ? pq.grad.data() + (s * seq_len + i) * dim + hoff
                              : nullptr;
            for (std::size_t j = 0; j <= jmax; ++j) {
              const double* krow = pk.value.data() + (s * seq_len + j) * dim + hoff;
              const double w = ds[j] * sc;
              if (dqrow)
                for (std::size_t d = 0; d < hd; ++d) dqrow[d] += w * krow[d];
              if (pk.needs_grad) {
                double* dkrow = pk.grad.data() + (s * seq_len + j) * dim + hoff;
                for (std::size_t d = 0; d < hd; ++d) dkrow[d] += w * qrow[d];
              }
            }
          }
        }
      }
    };
  }
  return push(std::move(n));
}

Var Tape::gather_rows(Var a, std::vector<std::size_t> rows) {
  const DenseArray& va = node(a).value;
  if (va.rank() != 2) shape_error("gather_rows", va);
  const std::size_t c = va.cols();
  DenseArray out({rows.size(), c});
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] >= va.rows())
      throw std::invalid_argument("gather_rows: index out of range");
    for (std::size_t j = 0; j < c; ++j) out[i * c + j] = va[rows[i] * c + j];
  }
  MAKE_NODE(std::move(out), node(a).needs_grad)
  if (n.needs_grad) {
    std::uint32_t ia = a.idx;
    auto idx = std::make_shared<std::vector<std::size_t>>(std::move(rows));
    n.pull = [ia, idx, c](Tape& t, const Node& self) {
      Node& pa = t.nodes_[ia];
      if (!pa.needs_grad) return;
      const double* g = self.grad.data();
      double* dst = pa.grad.data();
      for (std::size_t i = 0; i < idx->size(); ++i)
        for (std::size_t j = 0; j < c; ++j)
          dst[(*idx)[i] * c + j] += g[i * c + j];
    };
  }
  return push(std::move(n));
}

Var Tape::scatter_to(Var x, std::vector<std::size_t> indices,
                     std::size_t out_len) {
  const DenseArray& vx = node(x).value;
  if (vx.rank() != 1 || vx.size() != indices.size())
    shape_error("scatter_to", vx);
  DenseArray out({out_len});
  for (std::size_t i = 0; i < indices.size(); ++i) {
    if (indices[i] >= out_len)
      throw std::invalid_argument("scatter_to: index out of range");
    out[indices[i]] += vx[i];
  }
  MAKE_NODE(std::move(out), node(x).needs_grad)
  if (n.needs_grad) {
    std::uint32_t ix = x.idx;
    auto idx = std::make_shared<std::vector<std::size_t>>(std::move(indices));
    n.pull = [ix, idx](Tape& t, const Node& self) {
      Node& px = t.nodes_[ix];
      if (!px.needs_grad) return;
      const double* g = self.grad.data();
      double* dst = px.grad.data();
      for (std::size_t i = 0; i < idx->size(); ++i) dst[i] += g[(*idx)[i]];
    };
  }
  return push(std::move(n));
}

Var Tape::segment_sum(Var x, std::vector<std::size_t> group,
                      std::size_t n_groups) {
  const DenseArray& vx = node(x).value;
  if (vx.rank() != 1 || vx.size() != group.size())
    shape_error("segment_sum", vx);
  DenseArray out({n_groups});
  for (std::size_t i = 0; i < group.size(); ++i) {
    if (group[i] >= n_groups)
      throw std::invalid_argument("segment_sum: group out of range");
    out[group[i]] += vx[i];
  }
  MAKE_NODE(std::move(out), node(x).needs_grad)
  if (n.needs_grad) {
    std::uint32_t ix = x.idx;
    auto idx = std::make_shared<std::vector<std::size_t>>(std::move(group));
    n.pull = [ix, idx](Tape& t, const Node& self) {
      Node& px = t.nodes_[ix];
      if (!px.needs_grad) return;
      const double* g = self.grad.data();
      double* dst = px.grad.data();
      for (std::size_t i = 0; i < idx->size(); ++i) dst[i] += g[(*idx)[i]];
    };
  }
  return push(std::move(n));
}

Var Tape::even_minus_odd(Var x) {
  const DenseArray& vx = node(x).value;
  if (vx.rank() != 1 || vx.size() % 2 != 0) shape_error("even_minus_odd", vx);
  const std::size_t half = vx.size() / 2;
  DenseArray out({half});
  for (std::size_t i = 0; i < half; ++i) out[i] = vx[2 * i] - vx[2 * i + 1];
  MAKE_NODE(std::move(out), node(x).needs_grad)
  if (n.needs_grad) {
    std::uint32_t ix = x.idx;
    n.pull = [ix, half](Tape& t, const Node& self) {
      Node& px = t.nodes_[ix];
      if (!px.needs_grad) return;
      const double* g = self.grad.data();
      double* dst = px.grad.data();
      for (std::size_t i = 0; i < half; ++i) {
        dst[2 * i] += g[i];
        dst[2 * i + 1] -= g[i];
      }
    };
  }
  return push(std::move(n));
}

Var Tape::reshape(Var x, std::vector<std::size_t> shape) {
  const DenseArray& vx = node(x).value;
  DenseArray out(std::move(shape), vx.values());
  MAKE_NODE(std::move(out), node(x).needs_grad)
  if (n.needs_grad) {
    std::uint32_t ix = x.idx;
    n.pull = [ix](Tape& t, const Node& self) {
      t.accum(ix, self.grad.data(), self.grad.size());
    };
  }
  return push(std::move(n));
}

void Tape::backward(Var root) {
  if (backward_done_)
    throw std::logic_error("Tape::backward: already ran on this tape");
  backward_done_ = true;
  Node& r = node(root);
  if (r.value.size() != 1)
    throw std::invalid_argument("Tape::backward: root must be scalar");
  if (!r.needs_grad) return;  // loss independent of parameters
  r.grad[0] = 1.0;
  for (std::size_t i = root.idx + 1; i-- > 0;) {
    Node& nd = nodes_[i];
    if (nd.needs_grad && nd.pull) nd.pull(*this, nd);
  }
}

#undef MAKE_NODE

}  // namespace lapp::num
