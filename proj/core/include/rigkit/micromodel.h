#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "rigkit/container.h"
#include "rigkit/embeddings.h"
#include "rigkit/geometry.h"
#include "rigkit/losses.h"

namespace rigkit {

struct MicroModelConfig {
  int patch = 8;
  int dim = 64;
  int layers = 4;
  int heads = 4;
  int rows = 64;
  int cols = 64;
  int mlp_ratio = 4;
  // Frames taken from a scene for training/eval (0 = all).
  int frames = 4;
  // model_dim is ignored; the embedding always uses `dim`.
  EmbeddingConfig embedding;
  LossWeights weights;
  std::uint64_t seed = 0;
  // Weights start as N(0, init_scale^2 / fan_in).
  double init_scale = 1.0;
  // Zero the last layer of every head so all raw outputs start at zero.
  bool zero_init_heads = false;
  // Resample frame indices and camera ids into embedding.max_index_range
  // on every training step.
  bool resample_ids = false;
  double momentum = 0.9;

  int patches_per_frame() const { return (rows / patch) * (cols / patch); }
  int head_dim() const { return dim / heads; }
  void Validate() const;

  std::string ToJson() const;
  static MicroModelConfig FromJson(const std::string& text);
  static MicroModelConfig Tiny();
};

// Named tensors packed into one flat vector. Each tensor is a column-major
// rows x cols block.
struct ParamInfo {
  std::string name;
  int rows = 0;
  int cols = 0;
  std::size_t offset = 0;
  std::size_t size() const { return static_cast<std::size_t>(rows) * cols; }
};

class ParamLayout {
 public:
  std::size_t Add(const std::string& name, int rows, int cols);
  const ParamInfo& Get(const std::string& name) const;
  const std::vector<ParamInfo>& entries() const { return entries_; }
  std::size_t total() const { return total_; }

 private:
  std::vector<ParamInfo> entries_;
  std::map<std::string, std::size_t> index_;
  std::size_t total_ = 0;
};

struct ModelState {
  MicroModelConfig config;
  ParamLayout layout;
  std::vector<double> params;

  Eigen::Map<Eigen::MatrixXd> View(const std::string& name);
  Eigen::Map<const Eigen::MatrixXd> View(const std::string& name) const;
};

ParamLayout BuildLayout(const MicroModelConfig& config);

// Deterministic initialization from config.seed.
ModelState InitModel(const MicroModelConfig& config);

struct ModelInput {
  std::vector<Grid<double>> images;
  std::vector<MetadataTuple> metadata;
  // One mask shared by every frame, or one per frame.
  std::vector<FieldMask> drop;
};

struct FrameOutput {
  Grid<Vec3> points;
  Grid<double> conf_raw;
  Grid<Vec3> pose_dirs;
  Vec3 pose_center = Vec3::Zero();
  Grid<Vec3> rig_dirs;
  Vec3 rig_center = Vec3::Zero();
};

std::vector<FrameOutput> Forward(const ModelState& state,
                                 const ModelInput& input);

struct ModelTargets {
  std::vector<Pointmap> pointmaps;
  std::vector<Raymap> pose_raymaps;
  std::vector<Raymap> rig_raymaps;
};

struct LossBreakdown {
  double pointmap = 0.0;
  // Unweighted sum of pointmap residual norms (no confidence terms).
  double pointmap_residual = 0.0;
  double pose_raymap = 0.0;
  double rig_raymap = 0.0;
  double total = 0.0;
  double zbar = 1.0;
};

// Total loss, averaged over frames: pointmap + lambda_p * pose + lambda_r *
// rig. Pose raymap centers are compared against ground truth divided by the
// mean scene depth; rig raymaps are already in normalized rig units.
LossBreakdown EvaluateLoss(const ModelState& state, const ModelInput& input,
                           const ModelTargets& targets);

// Exact reverse-mode gradient of EvaluateLoss().total w.r.t. every
// parameter. Throws kNonFinite when the loss is not finite.
LossBreakdown Backward(const ModelState& state, const ModelInput& input,
                       const ModelTargets& targets, std::vector<double>* grad);

struct GradCheckGroup {
  std::string name;
  std::size_t checked = 0;
  double max_rel_error = 0.0;
  bool passed = false;
};

struct GradCheckReport {
  std::vector<GradCheckGroup> groups;
  double max_rel_error = 0.0;
  bool passed = false;
};

// Central finite differences on every parameter tensor (at most
// `max_per_tensor` entries each, chosen deterministically; 0 = all).
// Relative error is |analytic - numeric| / max(|analytic|, |numeric|,
// floor * max(1, |loss|)). The floor keeps parameters whose true gradient is
// zero (e.g. attention key biases) from being judged on round-off alone.
GradCheckReport CheckGradients(const ModelState& state,
                               const ModelInput& input,
                               const ModelTargets& targets, double eps = 1e-4,
                               double tolerance = 1e-4,
                               std::size_t max_per_tensor = 0,
                               double floor = 1e-6);

// Builds inputs and targets from the first config.frames frames of a scene,
// with every metadata field present.
struct TrainingSample {
  ModelInput input;
  ModelTargets targets;
  std::vector<Pose> gt_poses;
};
TrainingSample SampleFromScene(const SceneContainer& scene,
                               const MicroModelConfig& config);

struct TrainResult {
  ModelState state;
  // Training loss at every step (with that step's dropout mask).
  std::vector<double> loss_curve;
  // Losses on the sample as given, before and after training.
  LossBreakdown initial;
  LossBreakdown final;
  int steps_run = 0;
  bool diverged = false;
  std::string message;
};

// Gradient descent with momentum on one sample. Metadata dropout (and id
// resampling if enabled) is redrawn every step from config.seed. Training
// stops and reports divergence when a step loss is not finite or exceeds
// initial + 9 |initial| (ten times the initial loss when it is positive).
TrainResult TrainOverfit(const MicroModelConfig& config,
                         const TrainingSample& sample, int steps,
                         double step_size,
                         const std::function<void(int, double)>& on_step = {});

// Canonical predicted raymaps (directions renormalized).
Raymap PredictedPoseRaymap(const FrameOutput& out);
Raymap PredictedRigRaymap(const FrameOutput& out);

void SaveCheckpoint(const ModelState& state, const std::filesystem::path& dir);
ModelState LoadCheckpoint(const std::filesystem::path& dir);

}  // namespace rigkit
