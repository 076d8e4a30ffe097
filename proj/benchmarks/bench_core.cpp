#include <benchmark/benchmark.h>

#include "icafuse/ica.hpp"
#include "icafuse/mlp.hpp"
#include "icafuse/numerics.hpp"
#include "icafuse/rvgen.hpp"

using namespace icafuse;

namespace {

Matrix normal_matrix(RngStream& rng, long rows, long cols) {
    Matrix m(rows, cols);
    for (long i = 0; i < m.size(); ++i) m.data()[i] = rng.normal();
    return m;
}

void BM_SymEig(benchmark::State& state) {
    RngStream rng(1);
    const long n = state.range(0);
    const Matrix a = normal_matrix(rng, n, n);
    const Matrix s = a + a.transpose();
    for (auto _ : state) benchmark::DoNotOptimize(sym_eig(s));
}
BENCHMARK(BM_SymEig)->Arg(20)->Arg(80)->Arg(160);

// Subject x feature matrix at desk scale: 160 subjects, m features, 20 sources.
void BM_FitIca(benchmark::State& state) {
    RngStream rng(2);
    const Matrix x = normal_matrix(rng, 160, state.range(0));
    for (auto _ : state) {
        RngStream fit_rng(3);
        benchmark::DoNotOptimize(fit_ica(x, 20, {}, fit_rng));
    }
}
BENCHMARK(BM_FitIca)->Arg(500)->Arg(2000)->Unit(benchmark::kMillisecond);

void BM_RejectionSample(benchmark::State& state) {
    RngStream rng(4);
    std::vector<double> data(1000);
    for (double& v : data) v = rng.normal();
    const HistogramPdf pdf = fit_histogram(data, 20);
    for (auto _ : state) benchmark::DoNotOptimize(rejection_sample(pdf, state.range(0), rng));
    state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_RejectionSample)->Arg(1000)->Arg(50000);

// One training step on a 20-row batch of the default unimodal net.
void BM_MlpStep(benchmark::State& state) {
    RngStream rng(5);
    const auto dim = static_cast<std::size_t>(state.range(0));
    MlpModel model = init_mlp(unimodal_config(dim), rng);
    AdagradState adagrad = make_adagrad_state(model);
    const std::vector<Matrix> inputs{normal_matrix(rng, 20, state.range(0))};
    std::vector<double> targets(20);
    for (std::size_t i = 0; i < targets.size(); ++i) targets[i] = static_cast<double>(i % 2);
    for (auto _ : state) {
        const LossAndGrad g = loss_and_grad(model, inputs, targets, Mode::Train, &rng);
        adagrad_step(model, adagrad, g.gradients);
    }
}
BENCHMARK(BM_MlpStep)->Arg(300)->Arg(2000);

}  // namespace
BENCHMARK_MAIN();
