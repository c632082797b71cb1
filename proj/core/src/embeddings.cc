#include "rigkit/embeddings.h"

#include <algorithm>
#include <cmath>
#include <map>
#include <random>

namespace rigkit {

void EmbeddingConfig::Validate() const {
  RIGKIT_CHECK(model_dim > 0 && model_dim % 4 == 0, ErrorCode::kInvalidInput,
               "model dim must be a positive multiple of 4");
  RIGKIT_CHECK(slot_dim() % 2 == 0, ErrorCode::kInvalidInput,
               "model dim / 4 must be even for sine-cosine slots");
  RIGKIT_CHECK(dropout_p >= 0.0 && dropout_p <= 1.0, ErrorCode::kInvalidInput,
               "dropout probability must lie in [0, 1]");
  RIGKIT_CHECK(base > 1.0 && time_base > 1.0, ErrorCode::kInvalidInput,
               "sinusoid bases must exceed 1");
  RIGKIT_CHECK(max_index_range >= 1, ErrorCode::kInvalidInput,
               "index range must be positive");
}

Eigen::VectorXd SincosEmbed(double value, int dim, double base) {
  RIGKIT_CHECK(dim > 0 && dim % 2 == 0, ErrorCode::kInvalidInput,
               "sine-cosine embedding needs an even dimension");
  Eigen::VectorXd out(dim);
  for (int k = 0; k < dim / 2; ++k) {
    const double freq = std::pow(base, -2.0 * k / dim);
    out[2 * k] = std::sin(value * freq);
    out[2 * k + 1] = std::cos(value * freq);
  }
  return out;
}

std::vector<int> ResampleIds(std::span<const int> ids, int max_range,
                             std::uint64_t seed) {
  // Distinct ids in order of first appearance.
  std::vector<int> order;
  for (int id : ids) {
    if (std::find(order.begin(), order.end(), id) == order.end()) {
      order.push_back(id);
    }
  }
  RIGKIT_CHECK(static_cast<int>(order.size()) <= max_range,
               ErrorCode::kInvalidInput,
               "more distinct ids than the sampling range");

  // Partial Fisher-Yates over [0, max_range) without materializing it.
  std::mt19937_64 rng(seed);
  std::map<int, int> swapped;
  auto at = [&](int i) {
    auto it = swapped.find(i);
    return it == swapped.end() ? i : it->second;
  };
  std::map<int, int> remap;
  for (std::size_t k = 0; k < order.size(); ++k) {
    const int i = static_cast<int>(k);
    std::uniform_int_distribution<int> pick(i, max_range - 1);
    const int j = pick(rng);
    const int vi = at(i);
    const int vj = at(j);
    swapped[i] = vj;
    swapped[j] = vi;
    remap[order[k]] = vj;
  }

  std::vector<int> out;
  out.reserve(ids.size());
  for (int id : ids) out.push_back(remap[id]);
  return out;
}

FieldMask DropoutMask(double p, std::uint64_t seed) {
  RIGKIT_CHECK(p >= 0.0 && p <= 1.0, ErrorCode::kInvalidInput,
               "dropout probability must lie in [0, 1]");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> uniform(0.0, 1.0);
  FieldMask mask;
  mask.camera_id = uniform(rng) < p;
  mask.timestamp = uniform(rng) < p;
  mask.rig = uniform(rng) < p;
  return mask;
}

void NormalizeTimestamps(std::span<MetadataTuple> metadata) {
  std::optional<double> earliest;
  for (const MetadataTuple& m : metadata) {
    if (m.timestamp && (!earliest || *m.timestamp < *earliest)) {
      earliest = m.timestamp;
    }
  }
  if (!earliest) return;
  for (MetadataTuple& m : metadata) {
    if (m.timestamp) *m.timestamp -= *earliest;
  }
}

std::vector<Vec6> RigPatchesFromRaymap(const Raymap& rig_raymap, int patch) {
  const int rows = rig_raymap.rows();
  const int cols = rig_raymap.cols();
  RIGKIT_CHECK(patch >= 1 && rows % patch == 0 && cols % patch == 0,
               ErrorCode::kShapeMismatch,
               "raymap size must be divisible by the patch size");
  std::vector<Vec6> patches;
  const double inv = 1.0 / (patch * patch);
  for (int pr = 0; pr < rows / patch; ++pr) {
    for (int pc = 0; pc < cols / patch; ++pc) {
      Vec3 dir = Vec3::Zero();
      for (int r = 0; r < patch; ++r) {
        for (int c = 0; c < patch; ++c) {
          dir += rig_raymap.directions(pr * patch + r, pc * patch + c);
        }
      }
      Vec6 v;
      v << dir * inv, rig_raymap.center;
      patches.push_back(v);
    }
  }
  return patches;
}

Eigen::MatrixXd EmbedMetadata(const MetadataTuple& meta,
                              const EmbeddingConfig& config,
                              const FieldMask& drop,
                              const RigProjection& projection,
                              int num_patches) {
  config.Validate();
  RIGKIT_CHECK(meta.frame_index >= 0, ErrorCode::kInvalidInput,
               "frame index must be nonnegative");
  RIGKIT_CHECK(!meta.timestamp || std::isfinite(*meta.timestamp),
               ErrorCode::kInvalidInput, "timestamp must be finite");
  const int slot = config.slot_dim();
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(num_patches, config.model_dim);

  const Eigen::RowVectorXd frame =
      SincosEmbed(meta.frame_index, slot, config.base).transpose();
  out.middleCols(0, slot).rowwise() = frame;

  if (meta.camera_id && !drop.camera_id) {
    const Eigen::RowVectorXd cam =
        SincosEmbed(*meta.camera_id, slot, config.base).transpose();
    out.middleCols(slot, slot).rowwise() = cam;
  }
  if (meta.timestamp && !drop.timestamp) {
    const Eigen::RowVectorXd time =
        SincosEmbed(*meta.timestamp, slot, config.time_base).transpose();
    out.middleCols(2 * slot, slot).rowwise() = time;
  }
  if (meta.rig_patches && !drop.rig) {
    RIGKIT_CHECK(static_cast<int>(meta.rig_patches->size()) == num_patches,
                 ErrorCode::kShapeMismatch,
                 "rig patch count does not match the token count");
    RIGKIT_CHECK(projection.weight.rows() == slot &&
                     projection.weight.cols() == 6 &&
                     projection.bias.size() == slot,
                 ErrorCode::kShapeMismatch, "rig projection has wrong shape");
    for (int p = 0; p < num_patches; ++p) {
      out.block(p, 3 * slot, 1, slot) =
          (projection.weight * (*meta.rig_patches)[p] + projection.bias)
              .transpose();
    }
  }
  return out;
}

}  // namespace rigkit
