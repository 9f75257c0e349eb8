// Serial reference vs OpenMP kernels on a fixed minibatch.
#include <benchmark/benchmark.h>

#include "duse/nnet.hpp"
#include "duse/sigsynth.hpp"

namespace {

using namespace duse;

const dataset& bench_data() {
    static const dataset ds = [] {
        sigsynth::gen_spec spec;
        spec.snr_min_db = 0;
        spec.snr_max_db = 18;
        spec.per_class_per_snr = 16;
        return sigsynth::generate_dataset(spec);
    }();
    return ds;
}

std::vector<const signal_record*> bench_batch(std::size_t n) {
    std::vector<const signal_record*> out;
    for (std::size_t i = 0; i < n; ++i) out.push_back(&bench_data().records[i % bench_data().size()]);
    return out;
}

template <auto Fn>
void run_kernel(benchmark::State& state) {
    const auto model = nnet::init_model(7, bench_data().num_classes);
    const auto batch = bench_batch(static_cast<std::size_t>(state.range(0)));
    for (auto _ : state) benchmark::DoNotOptimize(Fn(model, batch));
    state.SetItemsProcessed(state.iterations() * state.range(0));
}

void BM_generate_serial(benchmark::State& state) {
    sigsynth::gen_spec spec;
    spec.per_class_per_snr = 4;
    for (auto _ : state) benchmark::DoNotOptimize(sigsynth::generate_dataset_serial(spec));
}

void BM_generate_omp(benchmark::State& state) {
    sigsynth::gen_spec spec;
    spec.per_class_per_snr = 4;
    for (auto _ : state) benchmark::DoNotOptimize(sigsynth::generate_dataset(spec));
}

}  // namespace

BENCHMARK(run_kernel<nnet::serial::forward>)->Name("forward/serial")->Arg(128);
BENCHMARK(run_kernel<nnet::forward>)->Name("forward/omp")->Arg(128);
BENCHMARK(run_kernel<nnet::serial::loss_and_gradients>)->Name("loss_and_gradients/serial")->Arg(128);
BENCHMARK(run_kernel<nnet::loss_and_gradients>)->Name("loss_and_gradients/omp")->Arg(128);
BENCHMARK(run_kernel<nnet::serial::per_sample_gradient_norms>)->Name("grad_norms/serial")->Arg(128);
BENCHMARK(run_kernel<nnet::per_sample_gradient_norms>)->Name("grad_norms/omp")->Arg(128);
BENCHMARK(BM_generate_serial);
BENCHMARK(BM_generate_omp);

BENCHMARK_MAIN();
