#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "rigkit/geometry.h"

namespace rigkit {

using Vec6 = Eigen::Matrix<double, 6, 1>;

struct MetadataTuple {
  int frame_index = 0;
  std::optional<int> camera_id;
  std::optional<double> timestamp;
  // One 6-vector (mean direction, center) per patch, row-major over patches.
  std::optional<std::vector<Vec6>> rig_patches;
};

struct EmbeddingConfig {
  int model_dim = 64;
  double base = 10000.0;
  double time_base = 100.0;
  int max_index_range = 1000;
  double dropout_p = 0.5;
  // Draw one mask per sample (shared by all frames) rather than per frame.
  bool per_sample_dropout = true;

  int slot_dim() const { return model_dim / 4; }
  void Validate() const;
};

// true = field dropped for this sample.
struct FieldMask {
  bool camera_id = false;
  bool timestamp = false;
  bool rig = false;

  bool operator==(const FieldMask&) const = default;
};

// Linear projection of a rig patch into one D/4 slot: W * r + b.
struct RigProjection {
  Eigen::MatrixXd weight;  // (D/4) x 6
  Eigen::VectorXd bias;    // D/4
};

// Interleaved [sin(x w_0), cos(x w_0), sin(x w_1), ...] with
// w_k = base^(-2k / dim). Throws kInvalidInput on odd `dim`.
Eigen::VectorXd SincosEmbed(double value, int dim, double base);

// Injective, equality-preserving remap of the distinct ids onto
// [0, max_range). Throws kInvalidInput when there are more distinct ids than
// max_range.
std::vector<int> ResampleIds(std::span<const int> ids, int max_range,
                             std::uint64_t seed);

// Independent Bernoulli(p) drop decision per metadata field.
FieldMask DropoutMask(double p, std::uint64_t seed);

// Shifts timestamps so the earliest present one is 0.
void NormalizeTimestamps(std::span<MetadataTuple> metadata);

// Mean of the 6-channel rig raymap over each patch footprint (row-major
// patch order). Raymap dimensions must be divisible by `patch`.
std::vector<Vec6> RigPatchesFromRaymap(const Raymap& rig_raymap, int patch);

// One D-vector per patch made of four D/4 slots:
//   [sincos(frame_index) | sincos(camera_id) | sincos(timestamp) | W r + b]
// A slot is zero when its field is dropped or absent. The frame index slot is
// always present.
Eigen::MatrixXd EmbedMetadata(const MetadataTuple& meta,
                              const EmbeddingConfig& config,
                              const FieldMask& drop,
                              const RigProjection& projection,
                              int num_patches);

}  // namespace rigkit
