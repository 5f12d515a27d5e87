#include <memory>
#include <random>

#include <benchmark/benchmark.h>

#include "memo/embedding.hpp"
#include "memo/skillbook.hpp"

namespace {

using memo::Vector;

Vector random_unit(std::mt19937_64& rng, size_t dim) {
  std::normal_distribution<double> gauss;
  std::vector<double> v(dim);
  for (auto& x : v) x = gauss(rng);
  return Vector(std::move(v)).normalized();
}

std::unique_ptr<memo::Skillbook> make_book(size_t n, size_t dim) {
  std::mt19937_64 rng(17);
  auto book = std::make_unique<memo::Skillbook>(
      memo::SkillbookHeader{memo::kSchemaVersion, dim, memo::HashingEmbedder(dim).id()});
  memo::Skillbook::Batch batch;
  for (size_t i = 0; i < n; ++i) {
    memo::SkillbookEntry e;
    e.key.v_act = random_unit(rng, dim);
    e.key.v_obj = random_unit(rng, dim);
    e.key.action_text = "act";
    e.payload = memo::Payload::guidance("entry " + std::to_string(i));
    batch.inserts.push_back(std::move(e));
  }
  book->publish(std::move(batch));
  return book;
}

void BM_Retrieve(benchmark::State& state) {
  const size_t n = static_cast<size_t>(state.range(0));
  const size_t dim = static_cast<size_t>(state.range(1));
  const auto book = make_book(n, dim);
  std::mt19937_64 rng(3);
  memo::RetrievalQuery q;
  q.q_act = random_unit(rng, dim);
  q.q_obj = random_unit(rng, dim);
  const memo::RetrievalParams params;
  for (auto _ : state) benchmark::DoNotOptimize(book->retrieve(q, params));
  state.SetItemsProcessed(state.iterations() * static_cast<int64_t>(n));
}
BENCHMARK(BM_Retrieve)->Args({1000, 256})->Args({10000, 256})->Args({100000, 64})->Unit(benchmark::kMicrosecond);

void BM_Snapshot(benchmark::State& state) {
  const auto book = make_book(10000, 64);
  for (auto _ : state) benchmark::DoNotOptimize(book->snapshot());
}
BENCHMARK(BM_Snapshot);

}  // namespace

BENCHMARK_MAIN();
