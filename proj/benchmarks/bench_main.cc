#include <random>

#include <benchmark/benchmark.h>

#include "rigkit/discovery.h"
#include "rigkit/kdtree.h"
#include "rigkit/micromodel.h"
#include "rigkit/synthetic.h"

namespace {

using namespace rigkit;

Camera SomeCamera(int size) {
  return Camera::FromPose(300.0, 280.0, size, size,
                          Pose{AxisAngle(Vec3(1, 2, 3), 0.9), Vec3(1, -2, 3)});
}

void BM_RaymapFromCamera(benchmark::State& state) {
  const int size = static_cast<int>(state.range(0));
  const Camera cam = SomeCamera(size);
  for (auto _ : state) benchmark::DoNotOptimize(RaymapFromCamera(cam, size, size));
  state.SetItemsProcessed(state.iterations() * size * size);
}
BENCHMARK(BM_RaymapFromCamera)->Arg(64)->Arg(256);

void BM_CameraFromRaymap(benchmark::State& state) {
  const int size = static_cast<int>(state.range(0));
  const Raymap r = RaymapFromCamera(SomeCamera(size), size, size);
  for (auto _ : state) benchmark::DoNotOptimize(CameraFromRaymap(r));
}
BENCHMARK(BM_CameraFromRaymap)->Arg(64)->Arg(256);

std::vector<Vec3> Cloud(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g(0.0, 1.0);
  std::vector<Vec3> pts(n);
  for (Vec3& p : pts) p = Vec3(g(rng), g(rng), g(rng));
  return pts;
}

void BM_NearestKdTree(benchmark::State& state) {
  const std::vector<Vec3> pts = Cloud(state.range(0), 1);
  const std::vector<Vec3> queries = Cloud(1000, 2);
  const KdTree tree(pts);
  for (auto _ : state) {
    double sum = 0.0;
    for (const Vec3& q : queries) sum += tree.Nearest(q).distance;
    benchmark::DoNotOptimize(sum);
  }
  state.SetItemsProcessed(state.iterations() * queries.size());
}
BENCHMARK(BM_NearestKdTree)->Arg(1000)->Arg(16384);

void BM_NearestBruteForce(benchmark::State& state) {
  const std::vector<Vec3> pts = Cloud(state.range(0), 1);
  const std::vector<Vec3> queries = Cloud(1000, 2);
  for (auto _ : state) {
    double sum = 0.0;
    for (const Vec3& q : queries) {
      double best = 1e300;
      for (const Vec3& p : pts) best = std::min(best, (p - q).squaredNorm());
      sum += best;
    }
    benchmark::DoNotOptimize(sum);
  }
  state.SetItemsProcessed(state.iterations() * queries.size());
}
BENCHMARK(BM_NearestBruteForce)->Arg(1000)->Arg(16384);

void BM_DiscoverRig(benchmark::State& state) {
  const RigCalibration rig = MakePresetRig(5, 64, 64);
  std::vector<Raymap> raymaps;
  for (int f = 0; f < 24; ++f) raymaps.push_back(RigRaymap(rig, f % 5, 64, 64));
  for (auto _ : state) benchmark::DoNotOptimize(DiscoverRig(raymaps, {}));
}
BENCHMARK(BM_DiscoverRig)->Unit(benchmark::kMillisecond);

void BM_MicroModelForward(benchmark::State& state) {
  MicroModelConfig cfg;
  cfg.frames = static_cast<int>(state.range(0));
  GenerateOptions o;
  o.num_cameras = 5;
  o.num_frames = cfg.frames;
  o.rows = cfg.rows;
  o.cols = cfg.cols;
  const TrainingSample s = SampleFromScene(GenerateScene(o).ToContainer(), cfg);
  const ModelState model = InitModel(cfg);
  for (auto _ : state) benchmark::DoNotOptimize(Forward(model, s.input));
}
BENCHMARK(BM_MicroModelForward)->Arg(2)->Arg(4)->Unit(benchmark::kMillisecond);

void BM_MicroModelBackwardTiny(benchmark::State& state) {
  const MicroModelConfig cfg = MicroModelConfig::Tiny();
  GenerateOptions o;
  o.num_cameras = 3;
  o.num_frames = 2;
  o.rows = 8;
  o.cols = 8;
  const TrainingSample s = SampleFromScene(GenerateScene(o).ToContainer(), cfg);
  const ModelState model = InitModel(cfg);
  std::vector<double> grad;
  for (auto _ : state) benchmark::DoNotOptimize(Backward(model, s.input, s.targets, &grad));
}
BENCHMARK(BM_MicroModelBackwardTiny);

}  // namespace

BENCHMARK_MAIN();
