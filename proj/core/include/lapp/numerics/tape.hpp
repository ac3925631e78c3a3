#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "lapp/numerics/dense_array.hpp"
#include "lapp/numerics/parameter.hpp"

namespace lapp::num {

// Handle into a Tape. Only valid for the tape that produced it.
struct Var {
  std::uint32_t idx = UINT32_MAX;
  bool valid() const { return idx != UINT32_MAX; }
};

// Reverse-mode autodiff over DenseArray ops. A fresh tape is built per
// forward pass and discarded after backward; nothing is cached across passes.
// Single-threaded; node order is the topological order, so backward walks
// nodes in reverse creation order with fixed arithmetic order throughout.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  // Leaves. `leaf` takes constants (no gradient tracked); `param` routes the
  // node's gradient into p.grad during backward.
  Var leaf(DenseArray v);
  Var param(Parameter& p);

  const DenseArray& value(Var v) const { return node(v).value; }
  const DenseArray& grad(Var v) const { return node(v).grad; }
  std::size_t node_count() const { return nodes_.size(); }

  // --- elementwise / broadcast ---
  Var add(Var a, Var b);
  Var sub(Var a, Var b);
  Var mul(Var a, Var b);
  Var neg(Var a);
  Var scale(Var a, double k);
  Var add_scalar(Var a, double c);
  Var add_rowvec(Var x, Var v);  // (m,n) + (n,)
  Var mul_rowvec(Var x, Var v);  // (m,n) * (n,)
  Var gelu(Var a);
  Var elu(Var a);
  Var tanh(Var a);
  Var sigmoid(Var a);
  Var exp(Var a);
  Var log(Var a);
  Var square(Var a);
  Var minimum(Var a, Var b);
  Var clamp(Var a, double lo, double hi);

  // --- linear algebra / reductions ---
  Var matmul(Var a, Var b);           // (m,k) x (k,n)
  Var softmax_rows(Var a);            // softmax over the last axis of (m,n)
  Var layer_norm(Var x, Var gain, Var bias, double eps = 1e-5);
  Var sum(Var a);                     // -> scalar (1,)
  Var mean(Var a);                    // -> scalar (1,)
  Var sum_rows(Var a);                // (m,n) -> (n,): column sums

  // Multi-head scaled dot-product attention over `n_seq` packed sequences of
  // length `seq_len`. q,k,v are (n_seq*seq_len, dim); dim % heads == 0.
  // Causal masking keeps position i from attending to j > i.
  Var attention(Var q, Var k, Var v, std::size_t n_seq, std::size_t seq_len,
                std::size_t heads, bool causal);

  // --- indexing ---
  Var gather_rows(Var a, std::vector<std::size_t> rows);
  // x is (k,); result (out_len,) with result[indices[i]] += x[i].
  Var scatter_to(Var x, std::vector<std::size_t> indices, std::size_t out_len);
  // x is (n,); result (n_groups,) with result[g] = sum of x where group==g.
  Var segment_sum(Var x, std::vector<std::size_t> group, std::size_t n_groups);
  // x is (2n,); result (n,) with result[i] = x[2i] - x[2i+1].
  Var even_minus_odd(Var x);
  // Same flat data, new shape; element count must match.
  Var reshape(Var x, std::vector<std::size_t> shape);

  // Seeds d(root)=1 and accumulates into every reachable node and parameter.
  // root must be scalar. May be called once per tape.
  void backward(Var root);

 private:
  struct Node {
    DenseArray value;
    DenseArray grad;
    bool needs_grad = false;
    Parameter* bound = nullptr;
    std::function<void(Tape&, const Node&)> pull;  // distribute node.grad
  };

  Node& node(Var v) { return nodes_[v.idx]; }
  const Node& node(Var v) const { return nodes_[v.idx]; }
  Var push(Node n);
  void accum(std::uint32_t idx, const double* g, std::size_t len);
  bool any_grad(std::initializer_list<Var> vs) const;

  std::vector<Node> nodes_;
  bool backward_done_ = false;
};

// C = A*B (+= when accumulate), with optional transposes. Fixed ikj loop
// order: bit-deterministic regardless of buffer alignment.
void gemm(const double* a, const double* b, double* c, std::size_t m,
          std::size_t k, std::size_t n, bool trans_a, bool trans_b,
          bool accumulate);

}  // namespace lapp::num
