#include <benchmark/benchmark.h>

#include "aal/link.hpp"
#include "aal/models.hpp"
#include "aal/ops.hpp"

namespace {

aal::Tensor<float> images(std::size_t batch) {
  aal::Rng rng(11);
  aal::Tensor<float> t({batch, 3, 32, 32});
  for (auto& v : t.data()) v = static_cast<float>(rng.uniform(-2, 2));
  return t;
}

void BM_StudentForward(benchmark::State& state) {
  aal::Rng rng(1);
  const aal::Student<float> student(aal::StudentConfig{}, rng);
  const auto x = images(64);
  for (auto _ : state) benchmark::DoNotOptimize(student.forward(x));
}
BENCHMARK(BM_StudentForward)->Unit(benchmark::kMillisecond);

// One AAL training step without the optimizer update: student and teacher
// forward, augmentation, both losses and the backward pass.
void BM_AalStep(benchmark::State& state) {
  aal::Rng rng(2);
  const aal::StudentConfig sc;
  const aal::Student<float> student(sc, rng);
  aal::Teacher<float> teacher(aal::TeacherConfig{}, rng);
  auto links = aal::init_links<float>(teacher.config().total_channels(), sc.maps(), rng);
  for (auto& [n, p] : student.parameters()) p.set_requires_grad(true);
  links.W.set_requires_grad(true);
  links.b.set_requires_grad(true);
  const auto x = images(64);
  const std::vector<int> labels(64, 1);
  for (auto _ : state) {
    aal::Tape<float> tape;
    aal::TapeScope<float> scope(tape);
    const auto acts = aal::teacher_forward(teacher, x, sc.grid()).acts.maps;
    const auto out = student.forward(x);
    const auto loss = aal::total_loss(aal::cross_entropy_loss(out.logits, labels),
                                      aal::attention_loss(aal::augment(out.attn.maps, links), acts), 10.0f);
    tape.backward(loss);
    for (auto& [n, p] : student.parameters()) p.zero_grad();
  }
}
BENCHMARK(BM_AalStep)->Unit(benchmark::kMillisecond);

}  // namespace
BENCHMARK_MAIN();
