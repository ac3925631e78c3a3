#include <benchmark/benchmark.h>

#include "lapp/numerics/rng.hpp"
#include "lapp/numerics/tape.hpp"

using lapp::num::DenseArray;
using lapp::num::Parameter;
using lapp::num::RandomStream;
using lapp::num::Tape;

namespace {

DenseArray random_array(RandomStream& rng, std::vector<std::size_t> shape) {
  DenseArray a(std::move(shape));
  for (std::size_t i = 0; i < a.size(); ++i) a[i] = rng.gaussian();
  return a;
}

void BM_gemm(benchmark::State& state) {
  const std::size_t m = static_cast<std::size_t>(state.range(0));
  const std::size_t k = 128, n = 128;
  RandomStream rng(1);
  DenseArray a = random_array(rng, {m, k});
  DenseArray b = random_array(rng, {k, n});
  DenseArray c({m, n});
  for (auto _ : state) {
    lapp::num::gemm(a.data(), b.data(), c.data(), m, k, n, false, false, false);
    benchmark::DoNotOptimize(c.data());
  }
  state.SetItemsProcessed(state.iterations() * m * k * n * 2);
}
BENCHMARK(BM_gemm)->Arg(64)->Arg(512)->Arg(2048);

void BM_tape_mlp_backward(benchmark::State& state) {
  const std::size_t batch = static_cast<std::size_t>(state.range(0));
  RandomStream rng(2);
  Parameter w1("w1", random_array(rng, {16, 64}));
  Parameter w2("w2", random_array(rng, {64, 1}));
  DenseArray x = random_array(rng, {batch, 16});
  for (auto _ : state) {
    w1.zero_grad();
    w2.zero_grad();
    Tape t;
    auto h = t.gelu(t.matmul(t.leaf(x), t.param(w1)));
    auto loss = t.mean(t.square(t.matmul(h, t.param(w2))));
    t.backward(loss);
    benchmark::DoNotOptimize(w1.grad.data());
  }
}
BENCHMARK(BM_tape_mlp_backward)->Arg(32)->Arg(256);

}  // namespace

BENCHMARK_MAIN();
