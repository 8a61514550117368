#include <vector>

#include <benchmark/benchmark.h>

#include "gcl/ago.hpp"
#include "gcl/harness/dataset.hpp"
#include "gcl/model.hpp"

namespace {

const gcl::ModelConfig kSmall{2, 64, 4, 128, 96, 4, false};
const gcl::ModelConfig kLarge{4, 96, 4, 128, 96, 4, false};

const std::vector<gcl::Example>& examples() {
  static const auto ex = gcl::to_examples(gcl::generate_dataset(1, 16, 1).train, gcl::VocabSpec{});
  return ex;
}

void BM_Forward(benchmark::State& state) {
  const auto params = gcl::init_model(state.range(0) == 0 ? kSmall : kLarge, 1);
  const auto ids = examples()[0].inputs(gcl::VocabSpec{});
  for (auto _ : state) benchmark::DoNotOptimize(gcl::forward(params, ids));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(ids.size()));
}
BENCHMARK(BM_Forward)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

void BM_SftStep(benchmark::State& state) {
  const gcl::VocabSpec vocab;
  auto m = gcl::Competitor::create(state.range(0) == 0 ? kSmall : kLarge, 1, 32, 0,
                                   {1e-3, 1u << 30, 0.0});
  const gcl::Batch batch(examples().begin(), examples().end());
  std::uint64_t t = 0;
  for (auto _ : state) benchmark::DoNotOptimize(gcl::sft_train_step(m, t++, batch, vocab));
}
BENCHMARK(BM_SftStep)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

void BM_GclStep(benchmark::State& state) {
  const gcl::VocabSpec vocab;
  const gcl::ScheduleConfig sched{1e-3, 1u << 30, 0.0};
  gcl::CompetitiveGroup group{{gcl::Competitor::create(kSmall, 1, 32, 0, sched),
                               gcl::Competitor::create(kLarge, 2, 32, 1, sched)},
                              gcl::assign_roles({0.3, 0.5}, {gcl::capacity(kSmall), gcl::capacity(kLarge)}),
                              vocab};
  const gcl::Batch batch(examples().begin(), examples().end());
  for (auto _ : state) benchmark::DoNotOptimize(gcl::gcl_train_step(group, batch, {}));
}
BENCHMARK(BM_GclStep)->Unit(benchmark::kMillisecond);

void BM_Generate(benchmark::State& state) {
  const gcl::VocabSpec vocab;
  const auto params = gcl::init_model(kSmall, 1);
  for (auto _ : state) benchmark::DoNotOptimize(gcl::generate(params, examples()[0], vocab, 24));
}
BENCHMARK(BM_Generate)->Unit(benchmark::kMillisecond);

}  // namespace
