#include "rigkit/micromodel.h"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>
#include <set>

#include <json.hpp>

#include "rigkit/parallel.h"

namespace rigkit {
namespace {

using Eigen::MatrixXd;
using Eigen::RowVectorXd;
using Eigen::VectorXd;
using json = nlohmann::json;

constexpr double kLnEps = 1e-5;
constexpr double kGeluK = 0.7978845608028654;  // sqrt(2 / pi)
constexpr double kGeluC = 0.044715;

const char* const kHeadNames[] = {"points", "pose_dir", "rig_dir",
                                  "pose_center", "rig_center"};

double Gelu(double x) {
  return 0.5 * x * (1.0 + std::tanh(kGeluK * (x + kGeluC * x * x * x)));
}

double GeluGrad(double x) {
  const double t = std::tanh(kGeluK * (x + kGeluC * x * x * x));
  return 0.5 * (1.0 + t) +
         0.5 * x * (1.0 - t * t) * kGeluK * (1.0 + 3.0 * kGeluC * x * x);
}

MatrixXd GeluOf(const MatrixXd& x) { return x.unaryExpr(&Gelu); }

std::uint64_t Mix(std::uint64_t a, std::uint64_t b) {
  // splitmix64 finalizer over a combined word.
  std::uint64_t z = a + 0x9e3779b97f4a7c15ULL * (b + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

std::string BlockName(int l, const char* leaf) {
  return "block" + std::to_string(l) + "." + leaf;
}

EmbeddingConfig EmbeddingFor(const MicroModelConfig& config) {
  EmbeddingConfig e = config.embedding;
  e.model_dim = config.dim;
  return e;
}

class ConstParams {
 public:
  explicit ConstParams(const ModelState& s) : s_(s) {}
  Eigen::Map<const MatrixXd> operator()(const std::string& name) const {
    return s_.View(name);
  }
  RowVectorXd Row(const std::string& name) const { return s_.View(name); }

 private:
  const ModelState& s_;
};

class GradParams {
 public:
  GradParams(const ParamLayout& layout, std::vector<double>* grad)
      : layout_(layout), grad_(grad) {}
  Eigen::Map<MatrixXd> operator()(const std::string& name) {
    const ParamInfo& info = layout_.Get(name);
    return {grad_->data() + info.offset, info.rows, info.cols};
  }

 private:
  const ParamLayout& layout_;
  std::vector<double>* grad_;
};

struct LnCache {
  MatrixXd xhat;
  VectorXd inv_std;
};

MatrixXd LayerNorm(const MatrixXd& x, const RowVectorXd& gain,
                   const RowVectorXd& bias, LnCache* cache) {
  const Eigen::Index n = x.rows();
  MatrixXd xhat(n, x.cols());
  VectorXd inv(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double mu = x.row(i).mean();
    const RowVectorXd diff = x.row(i).array() - mu;
    inv[i] = 1.0 / std::sqrt(diff.squaredNorm() / x.cols() + kLnEps);
    xhat.row(i) = diff * inv[i];
  }
  MatrixXd y =
      (xhat.array().rowwise() * gain.array()).rowwise() + bias.array();
  if (cache) {
    cache->xhat = std::move(xhat);
    cache->inv_std = std::move(inv);
  }
  return y;
}

MatrixXd LayerNormBackward(const MatrixXd& dy, const LnCache& cache,
                           const RowVectorXd& gain, Eigen::Map<MatrixXd> dgain,
                           Eigen::Map<MatrixXd> dbias) {
  dgain += (dy.array() * cache.xhat.array()).colwise().sum().matrix();
  dbias += dy.colwise().sum();
  const MatrixXd dxhat = dy.array().rowwise() * gain.array();
  MatrixXd dx(dy.rows(), dy.cols());
  for (Eigen::Index i = 0; i < dy.rows(); ++i) {
    const double m1 = dxhat.row(i).mean();
    const double m2 = dxhat.row(i).cwiseProduct(cache.xhat.row(i)).mean();
    dx.row(i) = cache.inv_std[i] *
                (dxhat.row(i).array() - m1 - cache.xhat.row(i).array() * m2)
                    .matrix();
  }
  return dx;
}

MatrixXd Linear(const MatrixXd& x, const Eigen::Map<const MatrixXd>& w,
                const RowVectorXd& b) {
  return (x * w).rowwise() + b;
}

struct MlpCache {
  MatrixXd in;
  MatrixXd pre;
  MatrixXd act;
};

MatrixXd HeadForward(const ConstParams& p, const std::string& head,
                     const MatrixXd& in, MlpCache* cache) {
  MatrixXd pre = Linear(in, p(head + ".w1"), p.Row(head + ".b1"));
  MatrixXd act = GeluOf(pre);
  MatrixXd out = Linear(act, p(head + ".w2"), p.Row(head + ".b2"));
  if (cache) {
    cache->in = in;
    cache->pre = std::move(pre);
    cache->act = std::move(act);
  }
  return out;
}

MatrixXd HeadBackward(const ConstParams& p, GradParams& g,
                      const std::string& head, const MlpCache& cache,
                      const MatrixXd& dout) {
  g(head + ".w2") += cache.act.transpose() * dout;
  g(head + ".b2") += dout.colwise().sum();
  const MatrixXd dpre = (dout * p(head + ".w2").transpose())
                            .cwiseProduct(cache.pre.unaryExpr(&GeluGrad));
  g(head + ".w1") += cache.in.transpose() * dpre;
  g(head + ".b1") += dpre.colwise().sum();
  return dpre * p(head + ".w1").transpose();
}

struct BlockCache {
  MatrixXd x_in;
  LnCache ln1;
  MatrixXd a, q, k, v;
  std::vector<MatrixXd> probs;
  MatrixXd o;
  MatrixXd x_mid;
  LnCache ln2;
  MatrixXd b, h_pre, h;
};

struct Cache {
  MatrixXd patches;
  std::vector<BlockCache> blocks;
  LnCache lnf;
  MatrixXd pooled;
  MlpCache heads[5];
};

struct RawOutputs {
  MatrixXd points;       // T x 4P^2
  MatrixXd pose_dir;     // T x 3P^2
  MatrixXd rig_dir;      // T x 3P^2
  MatrixXd pose_center;  // N x 3
  MatrixXd rig_center;   // N x 3
};

MatrixXd PositionEmbedding(const MicroModelConfig& config) {
  const int pr_count = config.rows / config.patch;
  const int pc_count = config.cols / config.patch;
  const int half = config.dim / 2;
  MatrixXd pos(pr_count * pc_count, config.dim);
  for (int pr = 0; pr < pr_count; ++pr) {
    for (int pc = 0; pc < pc_count; ++pc) {
      const int p = pr * pc_count + pc;
      pos.row(p).head(half) =
          SincosEmbed(pr, half, config.embedding.base).transpose();
      pos.row(p).tail(half) =
          SincosEmbed(pc, half, config.embedding.base).transpose();
    }
  }
  return pos;
}

const FieldMask& MaskFor(const ModelInput& input, std::size_t f) {
  static const FieldMask kKeepAll;
  if (input.drop.empty()) return kKeepAll;
  return input.drop.size() == 1 ? input.drop.front() : input.drop[f];
}

RigProjection ProjectionOf(const ConstParams& p) {
  return {p("rig.w"), VectorXd(p("rig.b"))};
}

void CheckInput(const MicroModelConfig& config, const ModelInput& input) {
  const std::size_t n = input.images.size();
  RIGKIT_CHECK(n >= 1, ErrorCode::kShapeMismatch, "no input frames");
  RIGKIT_CHECK(input.metadata.size() == n, ErrorCode::kShapeMismatch,
               "metadata count differs from frame count");
  RIGKIT_CHECK(input.drop.empty() || input.drop.size() == 1 ||
                   input.drop.size() == n,
               ErrorCode::kShapeMismatch,
               "drop masks must be shared or given per frame");
  for (const Grid<double>& image : input.images) {
    RIGKIT_CHECK(image.SameShape(config.rows, config.cols),
                 ErrorCode::kShapeMismatch,
                 "image size does not match the model config");
  }
}

RawOutputs RunForward(const ModelState& state, const ModelInput& input,
                      Cache* cache) {
  const MicroModelConfig& cfg = state.config;
  CheckInput(cfg, input);
  const ConstParams p(state);
  const int P = cfg.patch;
  const int np = cfg.patches_per_frame();
  const int pc_count = cfg.cols / P;
  const int n = static_cast<int>(input.images.size());
  const int t_count = n * np;
  const int dh = cfg.head_dim();
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));

  MatrixXd patches(t_count, P * P);
  for (int f = 0; f < n; ++f) {
    for (int pi = 0; pi < np; ++pi) {
      const int pr = pi / pc_count;
      const int pc = pi % pc_count;
      for (int r = 0; r < P; ++r) {
        for (int c = 0; c < P; ++c) {
          patches(f * np + pi, r * P + c) =
              input.images[f](pr * P + r, pc * P + c);
        }
      }
    }
  }

  MatrixXd x = Linear(patches, p("patch.w"), p.Row("patch.b"));
  const MatrixXd pos = PositionEmbedding(cfg);
  const EmbeddingConfig emb = EmbeddingFor(cfg);
  const RigProjection projection = ProjectionOf(p);
  for (int f = 0; f < n; ++f) {
    x.middleRows(f * np, np) +=
        pos + EmbedMetadata(input.metadata[f], emb, MaskFor(input, f),
                            projection, np);
  }
  if (cache) {
    cache->patches = std::move(patches);
    cache->blocks.assign(cfg.layers, {});
  }

  for (int l = 0; l < cfg.layers; ++l) {
    auto name = [l](const char* leaf) { return BlockName(l, leaf); };
    LnCache ln1;
    MatrixXd a = LayerNorm(x, p.Row(name("ln1.g")), p.Row(name("ln1.b")),
                           cache ? &ln1 : nullptr);
    MatrixXd q = Linear(a, p(name("attn.wq")), p.Row(name("attn.bq")));
    MatrixXd k = Linear(a, p(name("attn.wk")), p.Row(name("attn.bk")));
    MatrixXd v = Linear(a, p(name("attn.wv")), p.Row(name("attn.bv")));
    MatrixXd o(t_count, cfg.dim);
    std::vector<MatrixXd> probs(cfg.heads);
    for (int h = 0; h < cfg.heads; ++h) {
      MatrixXd s = q.middleCols(h * dh, dh) *
                   k.middleCols(h * dh, dh).transpose() * scale;
      for (Eigen::Index i = 0; i < s.rows(); ++i) {
        const double mx = s.row(i).maxCoeff();
        s.row(i) = (s.row(i).array() - mx).exp();
        s.row(i) /= s.row(i).sum();
      }
      o.middleCols(h * dh, dh) = s * v.middleCols(h * dh, dh);
      probs[h] = std::move(s);
    }
    MatrixXd x_mid =
        x + Linear(o, p(name("attn.wo")), p.Row(name("attn.bo")));
    LnCache ln2;
    MatrixXd b = LayerNorm(x_mid, p.Row(name("ln2.g")), p.Row(name("ln2.b")),
                           cache ? &ln2 : nullptr);
    MatrixXd h_pre = Linear(b, p(name("mlp.w1")), p.Row(name("mlp.b1")));
    MatrixXd h_act = GeluOf(h_pre);
    MatrixXd x_out =
        x_mid + Linear(h_act, p(name("mlp.w2")), p.Row(name("mlp.b2")));
    if (cache) {
      BlockCache& bc = cache->blocks[l];
      bc.x_in = std::move(x);
      bc.ln1 = std::move(ln1);
      bc.a = std::move(a);
      bc.q = std::move(q);
      bc.k = std::move(k);
      bc.v = std::move(v);
      bc.probs = std::move(probs);
      bc.o = std::move(o);
      bc.x_mid = std::move(x_mid);
      bc.ln2 = std::move(ln2);
      bc.b = std::move(b);
      bc.h_pre = std::move(h_pre);
      bc.h = std::move(h_act);
    }
    x = std::move(x_out);
  }

  const MatrixXd z = LayerNorm(x, p.Row("final.g"), p.Row("final.b"),
                               cache ? &cache->lnf : nullptr);
  MatrixXd pooled(n, cfg.dim);
  for (int f = 0; f < n; ++f) {
    pooled.row(f) = z.middleRows(f * np, np).colwise().mean();
  }

  RawOutputs out;
  MlpCache* hc = cache ? cache->heads : nullptr;
  out.points = HeadForward(p, "points", z, hc ? &hc[0] : nullptr);
  out.pose_dir = HeadForward(p, "pose_dir", z, hc ? &hc[1] : nullptr);
  out.rig_dir = HeadForward(p, "rig_dir", z, hc ? &hc[2] : nullptr);
  out.pose_center =
      HeadForward(p, "pose_center", pooled, hc ? &hc[3] : nullptr);
  out.rig_center = HeadForward(p, "rig_center", pooled, hc ? &hc[4] : nullptr);
  if (cache) cache->pooled = std::move(pooled);
  return out;
}

// Pixel (row, col) of frame f <-> (token, slot within the token's patch).
struct PixelIndex {
  int token;
  int q;
};

PixelIndex IndexOf(const MicroModelConfig& cfg, int f, int row, int col) {
  const int P = cfg.patch;
  const int pc_count = cfg.cols / P;
  return {f * cfg.patches_per_frame() + (row / P) * pc_count + col / P,
          (row % P) * P + col % P};
}

std::vector<FrameOutput> Unpack(const MicroModelConfig& cfg,
                                const RawOutputs& raw, int n) {
  std::vector<FrameOutput> frames(n);
  for (int f = 0; f < n; ++f) {
    FrameOutput& out = frames[f];
    out.points = Grid<Vec3>(cfg.rows, cfg.cols, Vec3::Zero());
    out.conf_raw = Grid<double>(cfg.rows, cfg.cols, 0.0);
    out.pose_dirs = Grid<Vec3>(cfg.rows, cfg.cols, Vec3::Zero());
    out.rig_dirs = Grid<Vec3>(cfg.rows, cfg.cols, Vec3::Zero());
    for (int r = 0; r < cfg.rows; ++r) {
      for (int c = 0; c < cfg.cols; ++c) {
        const PixelIndex ix = IndexOf(cfg, f, r, c);
        for (int j = 0; j < 3; ++j) {
          out.points(r, c)[j] = raw.points(ix.token, 4 * ix.q + j);
          out.pose_dirs(r, c)[j] = raw.pose_dir(ix.token, 3 * ix.q + j);
          out.rig_dirs(r, c)[j] = raw.rig_dir(ix.token, 3 * ix.q + j);
        }
        out.conf_raw(r, c) = raw.points(ix.token, 4 * ix.q + 3);
      }
    }
    out.pose_center = raw.pose_center.row(f).transpose();
    out.rig_center = raw.rig_center.row(f).transpose();
  }
  return frames;
}

void CheckTargets(const MicroModelConfig& cfg, std::size_t n,
                  const ModelTargets& targets) {
  RIGKIT_CHECK(targets.pointmaps.size() == n &&
                   targets.pose_raymaps.size() == n &&
                   targets.rig_raymaps.size() == n,
               ErrorCode::kShapeMismatch,
               "target count differs from frame count");
  for (std::size_t f = 0; f < n; ++f) {
    RIGKIT_CHECK(targets.pointmaps[f].points.SameShape(cfg.rows, cfg.cols) &&
                     targets.pose_raymaps[f].directions.SameShape(cfg.rows,
                                                                  cfg.cols) &&
                     targets.rig_raymaps[f].directions.SameShape(cfg.rows,
                                                                 cfg.cols),
                 ErrorCode::kShapeMismatch,
                 "target size does not match the model config");
  }
}

double PointmapResidual(const Grid<Vec3>& pred, const Pointmap& gt,
                        double zbar) {
  double sum = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    if (gt.valid[i]) sum += (pred[i] - gt.points[i] / zbar).norm();
  }
  return sum;
}

struct FrameGrads {
  PointmapLossGrad pointmap;
  RaymapLossGrad pose;
  RaymapLossGrad rig;
};

LossBreakdown ComputeLoss(const MicroModelConfig& cfg,
                          const std::vector<FrameOutput>& frames,
                          const ModelTargets& targets,
                          std::vector<FrameGrads>* grads) {
  const std::size_t n = frames.size();
  CheckTargets(cfg, n, targets);
  const LossWeights& w = cfg.weights;
  LossBreakdown lb;
  lb.zbar = MeanSceneDepth(targets.pointmaps);
  if (grads) grads->assign(n, {});
  for (std::size_t f = 0; f < n; ++f) {
    const FrameOutput& out = frames[f];
    FrameGrads* g = grads ? &(*grads)[f] : nullptr;
    lb.pointmap +=
        PointmapLoss(out.points, out.conf_raw, targets.pointmaps[f], lb.zbar,
                     w.alpha, g ? &g->pointmap : nullptr);
    lb.pointmap_residual +=
        PointmapResidual(out.points, targets.pointmaps[f], lb.zbar);
    lb.pose_raymap +=
        RaymapLoss(out.pose_dirs, out.pose_center, targets.pose_raymaps[f],
                   lb.zbar, w.beta, g ? &g->pose : nullptr);
    lb.rig_raymap += RaymapLoss(out.rig_dirs, out.rig_center,
                                targets.rig_raymaps[f], 1.0, w.beta,
                                g ? &g->rig : nullptr);
  }
  const double inv = 1.0 / static_cast<double>(n);
  lb.pointmap *= inv;
  lb.pointmap_residual *= inv;
  lb.pose_raymap *= inv;
  lb.rig_raymap *= inv;
  lb.total = TotalLoss(lb.pointmap, lb.pose_raymap, lb.rig_raymap, w);
  RIGKIT_CHECK(std::isfinite(lb.total), ErrorCode::kNonFinite,
               "total loss is not finite");
  return lb;
}

json ConfigToJsonObject(const MicroModelConfig& c) {
  return {{"patch", c.patch},
          {"dim", c.dim},
          {"layers", c.layers},
          {"heads", c.heads},
          {"image_size", {c.rows, c.cols}},
          {"mlp_ratio", c.mlp_ratio},
          {"frames", c.frames},
          {"seed", c.seed},
          {"init_scale", c.init_scale},
          {"zero_init_heads", c.zero_init_heads},
          {"resample_ids", c.resample_ids},
          {"momentum", c.momentum},
          {"embedding",
           {{"base", c.embedding.base},
            {"time_base", c.embedding.time_base},
            {"max_index_range", c.embedding.max_index_range},
            {"dropout_p", c.embedding.dropout_p},
            {"per_sample_dropout", c.embedding.per_sample_dropout}}},
          {"weights",
           {{"lambda_p", c.weights.lambda_p},
            {"lambda_r", c.weights.lambda_r},
            {"alpha", c.weights.alpha},
            {"beta", c.weights.beta}}}};
}

template <typename T>
void ReadField(const json& obj, const char* key, T* out) {
  if (obj.contains(key)) *out = obj.at(key).get<T>();
}

void RejectUnknown(const json& obj, std::initializer_list<const char*> keys,
                   const std::string& where) {
  for (const auto& [key, value] : obj.items()) {
    const bool known = std::any_of(keys.begin(), keys.end(), [&](const char* k) {
      return key == k;
    });
    RIGKIT_CHECK(known, ErrorCode::kInvalidInput,
                 "unknown " + where + " key '" + key + "'");
  }
}

MicroModelConfig ConfigFromJsonObject(const json& j) {
  RIGKIT_CHECK(j.is_object(), ErrorCode::kInvalidInput,
               "micromodel config must be a JSON object");
  RejectUnknown(j,
                {"patch", "dim", "layers", "heads", "image_size", "mlp_ratio",
                 "frames", "seed", "init_scale", "zero_init_heads",
                 "resample_ids", "momentum", "embedding", "weights"},
                "config");
  MicroModelConfig c;
  ReadField(j, "patch", &c.patch);
  ReadField(j, "dim", &c.dim);
  ReadField(j, "layers", &c.layers);
  ReadField(j, "heads", &c.heads);
  if (j.contains("image_size")) {
    const json& size = j.at("image_size");
    RIGKIT_CHECK(size.is_array() && size.size() == 2,
                 ErrorCode::kInvalidInput, "image_size must be [rows, cols]");
    c.rows = size[0].get<int>();
    c.cols = size[1].get<int>();
  }
  ReadField(j, "mlp_ratio", &c.mlp_ratio);
  ReadField(j, "frames", &c.frames);
  ReadField(j, "seed", &c.seed);
  ReadField(j, "init_scale", &c.init_scale);
  ReadField(j, "zero_init_heads", &c.zero_init_heads);
  ReadField(j, "resample_ids", &c.resample_ids);
  ReadField(j, "momentum", &c.momentum);
  if (j.contains("embedding")) {
    const json& e = j.at("embedding");
    RejectUnknown(e,
                  {"base", "time_base", "max_index_range", "dropout_p",
                   "per_sample_dropout"},
                  "embedding");
    ReadField(e, "base", &c.embedding.base);
    ReadField(e, "time_base", &c.embedding.time_base);
    ReadField(e, "max_index_range", &c.embedding.max_index_range);
    ReadField(e, "dropout_p", &c.embedding.dropout_p);
    ReadField(e, "per_sample_dropout", &c.embedding.per_sample_dropout);
  }
  if (j.contains("weights")) {
    const json& w = j.at("weights");
    RejectUnknown(w, {"lambda_p", "lambda_r", "alpha", "beta"}, "weights");
    ReadField(w, "lambda_p", &c.weights.lambda_p);
    ReadField(w, "lambda_r", &c.weights.lambda_r);
    ReadField(w, "alpha", &c.weights.alpha);
    ReadField(w, "beta", &c.weights.beta);
  }
  c.embedding.model_dim = c.dim;
  c.Validate();
  return c;
}

bool IsHeadOutputLayer(const std::string& name) {
  for (const char* head : kHeadNames) {
    const std::string h(head);
    if (name == h + ".w2" || name == h + ".b2") return true;
  }
  return false;
}

std::string Leaf(const std::string& name) {
  return name.substr(name.rfind('.') + 1);
}

}  // namespace

void MicroModelConfig::Validate() const {
  RIGKIT_CHECK(patch >= 1 && dim >= 1 && layers >= 0 && heads >= 1 &&
                   rows >= 1 && cols >= 1 && mlp_ratio >= 1 && frames >= 0,
               ErrorCode::kInvalidInput, "micromodel sizes must be positive");
  RIGKIT_CHECK(dim % 4 == 0 && dim % heads == 0, ErrorCode::kInvalidInput,
               "model dim must be divisible by 4 and by the head count");
  RIGKIT_CHECK(rows % patch == 0 && cols % patch == 0,
               ErrorCode::kInvalidInput,
               "image size must be divisible by the patch size");
  RIGKIT_CHECK(init_scale >= 0.0 && std::isfinite(init_scale),
               ErrorCode::kInvalidInput, "init scale must be finite");
  RIGKIT_CHECK(momentum >= 0.0 && momentum < 1.0, ErrorCode::kInvalidInput,
               "momentum must lie in [0, 1)");
  EmbeddingFor(*this).Validate();
  weights.Validate();
}

std::string MicroModelConfig::ToJson() const {
  return ConfigToJsonObject(*this).dump(2);
}

MicroModelConfig MicroModelConfig::FromJson(const std::string& text) {
  try {
    return ConfigFromJsonObject(json::parse(text));
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kInvalidInput,
                std::string("bad micromodel config: ") + e.what());
  }
}

MicroModelConfig MicroModelConfig::Tiny() {
  MicroModelConfig c;
  c.patch = 4;
  c.dim = 16;
  c.layers = 1;
  c.heads = 2;
  c.rows = 8;
  c.cols = 8;
  c.frames = 2;
  c.embedding.model_dim = 16;
  return c;
}

std::size_t ParamLayout::Add(const std::string& name, int rows, int cols) {
  RIGKIT_CHECK(index_.count(name) == 0, ErrorCode::kInvalidInput,
               "duplicate parameter " + name);
  ParamInfo info{name, rows, cols, total_};
  total_ += info.size();
  index_[name] = entries_.size();
  entries_.push_back(info);
  return info.offset;
}

const ParamInfo& ParamLayout::Get(const std::string& name) const {
  const auto it = index_.find(name);
  RIGKIT_CHECK(it != index_.end(), ErrorCode::kInvalidInput,
               "unknown parameter " + name);
  return entries_[it->second];
}

Eigen::Map<Eigen::MatrixXd> ModelState::View(const std::string& name) {
  const ParamInfo& info = layout.Get(name);
  return {params.data() + info.offset, info.rows, info.cols};
}

Eigen::Map<const Eigen::MatrixXd> ModelState::View(
    const std::string& name) const {
  const ParamInfo& info = layout.Get(name);
  return {params.data() + info.offset, info.rows, info.cols};
}

ParamLayout BuildLayout(const MicroModelConfig& c) {
  c.Validate();
  const int d = c.dim;
  const int hidden = c.mlp_ratio * d;
  const int pp = c.patch * c.patch;
  ParamLayout layout;
  layout.Add("patch.w", pp, d);
  layout.Add("patch.b", 1, d);
  layout.Add("rig.w", d / 4, 6);
  layout.Add("rig.b", d / 4, 1);
  for (int l = 0; l < c.layers; ++l) {
    layout.Add(BlockName(l, "ln1.g"), 1, d);
    layout.Add(BlockName(l, "ln1.b"), 1, d);
    for (const char* m : {"attn.wq", "attn.wk", "attn.wv", "attn.wo"}) {
      layout.Add(BlockName(l, m), d, d);
    }
    for (const char* m : {"attn.bq", "attn.bk", "attn.bv", "attn.bo"}) {
      layout.Add(BlockName(l, m), 1, d);
    }
    layout.Add(BlockName(l, "ln2.g"), 1, d);
    layout.Add(BlockName(l, "ln2.b"), 1, d);
    layout.Add(BlockName(l, "mlp.w1"), d, hidden);
    layout.Add(BlockName(l, "mlp.b1"), 1, hidden);
    layout.Add(BlockName(l, "mlp.w2"), hidden, d);
    layout.Add(BlockName(l, "mlp.b2"), 1, d);
  }
  layout.Add("final.g", 1, d);
  layout.Add("final.b", 1, d);
  const int widths[] = {4 * pp, 3 * pp, 3 * pp, 3, 3};
  for (int h = 0; h < 5; ++h) {
    const std::string head = kHeadNames[h];
    layout.Add(head + ".w1", d, d);
    layout.Add(head + ".b1", 1, d);
    layout.Add(head + ".w2", d, widths[h]);
    layout.Add(head + ".b2", 1, widths[h]);
  }
  return layout;
}

ModelState InitModel(const MicroModelConfig& config) {
  ModelState state;
  state.config = config;
  state.config.embedding.model_dim = config.dim;
  state.layout = BuildLayout(config);
  state.params.assign(state.layout.total(), 0.0);
  std::mt19937_64 rng(config.seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (const ParamInfo& info : state.layout.entries()) {
    Eigen::Map<MatrixXd> view = state.View(info.name);
    const std::string leaf = Leaf(info.name);
    if (leaf == "g") {
      view.setOnes();
    } else if (leaf[0] == 'w') {
      // rig.w is applied as W r (fan-in = cols); the rest as x W.
      const int fan_in = info.name == "rig.w" ? info.cols : info.rows;
      const double std_dev = config.init_scale / std::sqrt(fan_in);
      for (Eigen::Index i = 0; i < view.size(); ++i) {
        view.data()[i] = std_dev * normal(rng);
      }
    }
    if (config.zero_init_heads && IsHeadOutputLayer(info.name)) {
      view.setZero();
    }
  }
  return state;
}

std::vector<FrameOutput> Forward(const ModelState& state,
                                 const ModelInput& input) {
  const RawOutputs raw = RunForward(state, input, nullptr);
  return Unpack(state.config, raw, static_cast<int>(input.images.size()));
}

LossBreakdown EvaluateLoss(const ModelState& state, const ModelInput& input,
                           const ModelTargets& targets) {
  return ComputeLoss(state.config, Forward(state, input), targets, nullptr);
}

LossBreakdown Backward(const ModelState& state, const ModelInput& input,
                       const ModelTargets& targets, std::vector<double>* grad) {
  RIGKIT_CHECK(grad != nullptr, ErrorCode::kInvalidInput,
               "gradient output is required");
  const MicroModelConfig& cfg = state.config;
  const int n = static_cast<int>(input.images.size());
  const int np = cfg.patches_per_frame();
  const int dh = cfg.head_dim();
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));

  Cache cache;
  const RawOutputs raw = RunForward(state, input, &cache);
  std::vector<FrameGrads> fg;
  const LossBreakdown lb =
      ComputeLoss(cfg, Unpack(cfg, raw, n), targets, &fg);

  grad->assign(state.params.size(), 0.0);
  const ConstParams p(state);
  GradParams g(state.layout, grad);
  const LossWeights& w = cfg.weights;
  const double inv_n = 1.0 / n;

  MatrixXd d_points = MatrixXd::Zero(raw.points.rows(), raw.points.cols());
  MatrixXd d_pose_dir = MatrixXd::Zero(raw.pose_dir.rows(), raw.pose_dir.cols());
  MatrixXd d_rig_dir = MatrixXd::Zero(raw.rig_dir.rows(), raw.rig_dir.cols());
  MatrixXd d_pose_center(n, 3);
  MatrixXd d_rig_center(n, 3);
  for (int f = 0; f < n; ++f) {
    for (int r = 0; r < cfg.rows; ++r) {
      for (int c = 0; c < cfg.cols; ++c) {
        const PixelIndex ix = IndexOf(cfg, f, r, c);
        for (int j = 0; j < 3; ++j) {
          d_points(ix.token, 4 * ix.q + j) =
              inv_n * fg[f].pointmap.d_points(r, c)[j];
          d_pose_dir(ix.token, 3 * ix.q + j) =
              w.lambda_p * inv_n * fg[f].pose.d_dirs(r, c)[j];
          d_rig_dir(ix.token, 3 * ix.q + j) =
              w.lambda_r * inv_n * fg[f].rig.d_dirs(r, c)[j];
        }
        d_points(ix.token, 4 * ix.q + 3) =
            inv_n * fg[f].pointmap.d_conf_raw(r, c);
      }
    }
    d_pose_center.row(f) = w.lambda_p * inv_n * fg[f].pose.d_center.transpose();
    d_rig_center.row(f) = w.lambda_r * inv_n * fg[f].rig.d_center.transpose();
  }

  MatrixXd dz = HeadBackward(p, g, "points", cache.heads[0], d_points);
  dz += HeadBackward(p, g, "pose_dir", cache.heads[1], d_pose_dir);
  dz += HeadBackward(p, g, "rig_dir", cache.heads[2], d_rig_dir);
  MatrixXd d_pooled =
      HeadBackward(p, g, "pose_center", cache.heads[3], d_pose_center);
  d_pooled += HeadBackward(p, g, "rig_center", cache.heads[4], d_rig_center);
  for (int f = 0; f < n; ++f) {
    dz.middleRows(f * np, np).rowwise() += d_pooled.row(f) / np;
  }

  MatrixXd dx = LayerNormBackward(dz, cache.lnf, p.Row("final.g"),
                                  g("final.g"), g("final.b"));

  for (int l = cfg.layers - 1; l >= 0; --l) {
    auto name = [l](const char* leaf) { return BlockName(l, leaf); };
    const BlockCache& bc = cache.blocks[l];

    // MLP sublayer (residual).
    g(name("mlp.w2")) += bc.h.transpose() * dx;
    g(name("mlp.b2")) += dx.colwise().sum();
    const MatrixXd dh_pre = (dx * p(name("mlp.w2")).transpose())
                                .cwiseProduct(bc.h_pre.unaryExpr(&GeluGrad));
    g(name("mlp.w1")) += bc.b.transpose() * dh_pre;
    g(name("mlp.b1")) += dh_pre.colwise().sum();
    const MatrixXd db = dh_pre * p(name("mlp.w1")).transpose();
    MatrixXd dx_mid = dx + LayerNormBackward(db, bc.ln2, p.Row(name("ln2.g")),
                                             g(name("ln2.g")),
                                             g(name("ln2.b")));

    // Attention sublayer (residual).
    g(name("attn.wo")) += bc.o.transpose() * dx_mid;
    g(name("attn.bo")) += dx_mid.colwise().sum();
    const MatrixXd d_o = dx_mid * p(name("attn.wo")).transpose();
    MatrixXd dq(bc.q.rows(), bc.q.cols());
    MatrixXd dk(bc.k.rows(), bc.k.cols());
    MatrixXd dv(bc.v.rows(), bc.v.cols());
    for (int h = 0; h < cfg.heads; ++h) {
      const MatrixXd& probs = bc.probs[h];
      const MatrixXd d_oh = d_o.middleCols(h * dh, dh);
      dv.middleCols(h * dh, dh) = probs.transpose() * d_oh;
      const MatrixXd d_probs = d_oh * bc.v.middleCols(h * dh, dh).transpose();
      const VectorXd row_dot = d_probs.cwiseProduct(probs).rowwise().sum();
      const MatrixXd ds =
          probs.cwiseProduct(d_probs.colwise() - row_dot) * scale;
      dq.middleCols(h * dh, dh) = ds * bc.k.middleCols(h * dh, dh);
      dk.middleCols(h * dh, dh) = ds.transpose() * bc.q.middleCols(h * dh, dh);
    }
    g(name("attn.wq")) += bc.a.transpose() * dq;
    g(name("attn.wk")) += bc.a.transpose() * dk;
    g(name("attn.wv")) += bc.a.transpose() * dv;
    g(name("attn.bq")) += dq.colwise().sum();
    g(name("attn.bk")) += dk.colwise().sum();
    g(name("attn.bv")) += dv.colwise().sum();
    const MatrixXd da = dq * p(name("attn.wq")).transpose() +
                        dk * p(name("attn.wk")).transpose() +
                        dv * p(name("attn.wv")).transpose();
    dx = dx_mid + LayerNormBackward(da, bc.ln1, p.Row(name("ln1.g")),
                                    g(name("ln1.g")), g(name("ln1.b")));
  }

  g("patch.w") += cache.patches.transpose() * dx;
  g("patch.b") += dx.colwise().sum();

  const int slot = cfg.dim / 4;
  Eigen::Map<MatrixXd> d_rig_w = g("rig.w");
  Eigen::Map<MatrixXd> d_rig_b = g("rig.b");
  for (int f = 0; f < n; ++f) {
    const MetadataTuple& meta = input.metadata[f];
    if (!meta.rig_patches || MaskFor(input, f).rig) continue;
    for (int pi = 0; pi < np; ++pi) {
      const VectorXd d = dx.row(f * np + pi).segment(3 * slot, slot).transpose();
      d_rig_w += d * (*meta.rig_patches)[pi].transpose();
      d_rig_b += d;
    }
  }

  for (double v : *grad) {
    RIGKIT_CHECK(std::isfinite(v), ErrorCode::kNonFinite,
                 "gradient is not finite");
  }
  return lb;
}

GradCheckReport CheckGradients(const ModelState& state,
                               const ModelInput& input,
                               const ModelTargets& targets, double eps,
                               double tolerance, std::size_t max_per_tensor,
                               double floor) {
  RIGKIT_CHECK(eps > 0.0 && tolerance > 0.0 && floor > 0.0,
               ErrorCode::kInvalidInput,
               "gradient check settings must be positive");
  std::vector<double> analytic;
  const LossBreakdown base = Backward(state, input, targets, &analytic);
  const double abs_floor = floor * std::max(1.0, std::abs(base.total));

  const std::vector<ParamInfo>& entries = state.layout.entries();
  GradCheckReport report;
  report.groups.resize(entries.size());
  ParallelFor(entries.size(), [&](std::size_t e) {
    const ParamInfo& info = entries[e];
    ModelState probe = state;
    GradCheckGroup& group = report.groups[e];
    group.name = info.name;
    const std::size_t count = (max_per_tensor == 0)
                                  ? info.size()
                                  : std::min(info.size(), max_per_tensor);
    for (std::size_t k = 0; k < count; ++k) {
      const std::size_t idx = info.offset + k * info.size() / count;
      const double original = probe.params[idx];
      probe.params[idx] = original + eps;
      const double plus = EvaluateLoss(probe, input, targets).total;
      probe.params[idx] = original - eps;
      const double minus = EvaluateLoss(probe, input, targets).total;
      probe.params[idx] = original;
      const double numeric = (plus - minus) / (2.0 * eps);
      const double a = analytic[idx];
      const double denom = std::max({std::abs(a), std::abs(numeric), abs_floor});
      group.max_rel_error =
          std::max(group.max_rel_error, std::abs(a - numeric) / denom);
    }
    group.checked = count;
    group.passed = group.max_rel_error <= tolerance;
  });
  report.passed = true;
  for (const GradCheckGroup& group : report.groups) {
    report.max_rel_error = std::max(report.max_rel_error, group.max_rel_error);
    report.passed = report.passed && group.passed;
  }
  return report;
}

TrainingSample SampleFromScene(const SceneContainer& scene,
                               const MicroModelConfig& config) {
  config.Validate();
  RIGKIT_CHECK(scene.rows == config.rows && scene.cols == config.cols,
               ErrorCode::kShapeMismatch,
               "scene image size does not match the model config");
  std::size_t n = scene.frames.size();
  if (config.frames > 0) n = std::min(n, static_cast<std::size_t>(config.frames));
  RIGKIT_CHECK(n >= 1, ErrorCode::kInvalidInput, "scene has no frames");

  TrainingSample sample;
  for (std::size_t f = 0; f < n; ++f) {
    const FrameRecord& frame = scene.frames[f];
    sample.input.images.push_back(FrameImage(frame));
    const Raymap rig_raymap = FrameRigRaymap(frame);
    MetadataTuple meta;
    meta.frame_index = static_cast<int>(f);
    meta.camera_id = frame.camera_id;
    meta.timestamp = frame.timestamp;
    meta.rig_patches = RigPatchesFromRaymap(rig_raymap, config.patch);
    sample.input.metadata.push_back(std::move(meta));
    sample.targets.pointmaps.push_back(FramePointmap(frame));
    sample.targets.pose_raymaps.push_back(FramePoseRaymap(frame));
    sample.targets.rig_raymaps.push_back(rig_raymap);
    sample.gt_poses.push_back(frame.world_pose);
  }
  NormalizeTimestamps(sample.input.metadata);
  return sample;
}

namespace {

ModelInput StepInput(const MicroModelConfig& cfg, const ModelInput& base,
                     int step) {
  ModelInput in = base;
  const std::uint64_t step_seed = Mix(cfg.seed, static_cast<std::uint64_t>(step));
  const double p = cfg.embedding.dropout_p;
  in.drop.clear();
  if (cfg.embedding.per_sample_dropout) {
    in.drop.push_back(DropoutMask(p, step_seed));
  } else {
    for (std::size_t f = 0; f < in.images.size(); ++f) {
      in.drop.push_back(DropoutMask(p, Mix(step_seed, f)));
    }
  }
  if (cfg.resample_ids) {
    std::vector<int> frames;
    std::vector<int> cams;
    for (const MetadataTuple& m : in.metadata) {
      frames.push_back(m.frame_index);
      if (m.camera_id) cams.push_back(*m.camera_id);
    }
    const int range = cfg.embedding.max_index_range;
    const std::vector<int> new_frames =
        ResampleIds(frames, range, Mix(step_seed, 101));
    const std::vector<int> new_cams = ResampleIds(cams, range, Mix(step_seed, 102));
    std::size_t ci = 0;
    for (std::size_t f = 0; f < in.metadata.size(); ++f) {
      in.metadata[f].frame_index = new_frames[f];
      if (in.metadata[f].camera_id) in.metadata[f].camera_id = new_cams[ci++];
    }
  }
  return in;
}

}  // namespace

TrainResult TrainOverfit(const MicroModelConfig& config,
                         const TrainingSample& sample, int steps,
                         double step_size,
                         const std::function<void(int, double)>& on_step) {
  RIGKIT_CHECK(steps >= 0, ErrorCode::kInvalidInput,
               "step count must be nonnegative");
  RIGKIT_CHECK(step_size > 0.0 && std::isfinite(step_size),
               ErrorCode::kInvalidInput, "step size must be positive");
  TrainResult result;
  result.state = InitModel(config);
  ModelState& state = result.state;
  result.initial = EvaluateLoss(state, sample.input, sample.targets);
  result.final = result.initial;
  const double limit =
      result.initial.total + 9.0 * std::abs(result.initial.total);

  std::vector<double> velocity(state.params.size(), 0.0);
  std::vector<double> grad;
  for (int step = 0; step < steps; ++step) {
    const ModelInput in = StepInput(state.config, sample.input, step);
    LossBreakdown lb;
    try {
      lb = Backward(state, in, sample.targets, &grad);
    } catch (const Error& e) {
      if (e.code() != ErrorCode::kNonFinite) throw;
      result.diverged = true;
      result.message = "non-finite loss or gradient at step " +
                       std::to_string(step);
      break;
    }
    result.loss_curve.push_back(lb.total);
    if (lb.total > limit) {
      result.diverged = true;
      result.message = "loss exceeded ten times its initial value at step " +
                       std::to_string(step);
      break;
    }
    for (std::size_t i = 0; i < velocity.size(); ++i) {
      velocity[i] = state.config.momentum * velocity[i] - step_size * grad[i];
      state.params[i] += velocity[i];
    }
    result.steps_run = step + 1;
    if (on_step) on_step(step, lb.total);
  }
  try {
    result.final = EvaluateLoss(state, sample.input, sample.targets);
  } catch (const Error& e) {
    if (e.code() != ErrorCode::kNonFinite) throw;
    result.diverged = true;
    if (result.message.empty()) result.message = "final loss is not finite";
  }
  return result;
}

namespace {

Raymap Normalized(const Grid<Vec3>& dirs, const Vec3& center, FrameTag tag) {
  Raymap out;
  out.directions = dirs;
  out.center = center;
  out.frame_tag = tag;
  for (Vec3& d : out.directions) {
    const double norm = d.norm();
    RIGKIT_CHECK(norm > 0.0 && std::isfinite(norm), ErrorCode::kNonFinite,
                 "predicted ray direction has no length");
    d /= norm;
  }
  return out;
}

}  // namespace

Raymap PredictedPoseRaymap(const FrameOutput& out) {
  return Normalized(out.pose_dirs, out.pose_center, FrameTag::kPose);
}

Raymap PredictedRigRaymap(const FrameOutput& out) {
  return Normalized(out.rig_dirs, out.rig_center, FrameTag::kRig);
}

void SaveCheckpoint(const ModelState& state, const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(dir / "tensors", ec);
  RIGKIT_CHECK(!ec, ErrorCode::kIo,
               "cannot create checkpoint directory " + dir.string());
  json tensors = json::array();
  for (const ParamInfo& info : state.layout.entries()) {
    Blob blob;
    blob.shape = {info.rows, info.cols};
    const Eigen::Map<const MatrixXd> view = state.View(info.name);
    for (int r = 0; r < info.rows; ++r) {
      for (int c = 0; c < info.cols; ++c) {
        blob.data.push_back(static_cast<float>(view(r, c)));
      }
    }
    const std::string rel = "tensors/" + info.name + ".f32";
    WriteBlobFile(dir / rel, blob);
    tensors.push_back(
        {{"name", info.name}, {"shape", blob.shape}, {"path", rel}});
  }
  const json manifest = {{"format_version", kContainerFormatVersion},
                         {"kind", "micromodel"},
                         {"config", ConfigToJsonObject(state.config)},
                         {"tensors", tensors}};
  std::ofstream out(dir / "manifest.json");
  out << manifest.dump(2) << "\n";
  RIGKIT_CHECK(out.good(), ErrorCode::kIo,
               "cannot write checkpoint manifest in " + dir.string());
}

ModelState LoadCheckpoint(const std::filesystem::path& dir) {
  std::ifstream in(dir / "manifest.json");
  RIGKIT_CHECK(in.good(), ErrorCode::kIo,
               "cannot open checkpoint manifest in " + dir.string());
  json manifest;
  try {
    manifest = json::parse(in);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kIo, std::string("bad checkpoint manifest: ") +
                                    e.what());
  }
  RIGKIT_CHECK(manifest.value("kind", "") == "micromodel" &&
                   manifest.value("format_version", 0) ==
                       kContainerFormatVersion,
               ErrorCode::kIo, "not a micromodel checkpoint: " + dir.string());
  ModelState state;
  state.config = ConfigFromJsonObject(manifest.at("config"));
  state.layout = BuildLayout(state.config);
  state.params.assign(state.layout.total(), 0.0);
  std::set<std::string> seen;
  for (const json& t : manifest.at("tensors")) {
    const std::string name = t.at("name").get<std::string>();
    const ParamInfo& info = state.layout.Get(name);
    const std::vector<int> shape = t.at("shape").get<std::vector<int>>();
    RIGKIT_CHECK(shape == std::vector<int>({info.rows, info.cols}),
                 ErrorCode::kIo, "tensor " + name + " has the wrong shape");
    const Blob blob =
        ReadBlobFile(dir / t.at("path").get<std::string>(), shape);
    Eigen::Map<MatrixXd> view = state.View(name);
    for (int r = 0; r < info.rows; ++r) {
      for (int c = 0; c < info.cols; ++c) {
        view(r, c) = blob.data[static_cast<std::size_t>(r) * info.cols + c];
      }
    }
    seen.insert(name);
  }
  RIGKIT_CHECK(seen.size() == state.layout.entries().size(), ErrorCode::kIo,
               "checkpoint is missing tensors");
  return state;
}

}  // namespace rigkit
