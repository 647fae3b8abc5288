// Copyright 2026 The evipan Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// A per-voxel MLP (shared trunk + semantic, embedding and center heads) with
// hand-written backpropagation, the weighted training objective and an Adam
// training loop.
//
//   h1 = relu(W1 x + b1)             D_in -> 64
//   h2 = relu(W2 h1 + b2)            64 -> 64
//   logits = Ws h2 + bs              64 -> K
//   [phi, s] = We h2 + be            64 -> F + 1, sigma^2 = softplus(s)
//   center = sigmoid(Wc h2 + bc)     64 -> 1

#pragma once

#include <Eigen/Dense>

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <vector>

#include "evipan/instance_embedding.hpp"
#include "evipan/polar_grid.hpp"

namespace evipan {

inline constexpr std::size_t kHiddenDim = 64;

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// How the semantic head turns logits into class scores.
enum class SemanticMode : std::uint32_t {
  kDirichlet = 0,  // softplus concentrations, evidential losses
  kSoftmax = 1,    // softmax + cross-entropy baseline, entropy uncertainty
};

enum class Layer { kTrunk1 = 0, kTrunk2, kSemantic, kEmbedding, kCenter };

/// All parameters in one flat buffer. Layer order (and checkpoint order):
/// trunk1.W (64 x D_in), trunk1.b, trunk2.W (64 x 64), trunk2.b,
/// semantic.W (K x 64), semantic.b, embedding.W ((F+1) x 64), embedding.b,
/// center.W (1 x 64), center.b. Weights are row-major.
class HeadParams {
 public:
  using MatrixMap = Eigen::Map<RowMatrix>;
  using ConstMatrixMap = Eigen::Map<const RowMatrix>;
  using VectorMap = Eigen::Map<Eigen::VectorXd>;
  using ConstVectorMap = Eigen::Map<const Eigen::VectorXd>;

  HeadParams(std::size_t d_in, std::size_t num_classes, std::size_t embed_dim,
             SemanticMode mode = SemanticMode::kDirichlet);

  /// Weights uniform in [-a, a], a = sqrt(6 / (fan_in + fan_out)); zero biases.
  static HeadParams glorot(std::size_t d_in, std::size_t num_classes, std::size_t embed_dim,
                           std::uint64_t seed, SemanticMode mode = SemanticMode::kDirichlet);

  std::size_t d_in() const { return d_in_; }
  std::size_t num_classes() const { return num_classes_; }
  std::size_t embed_dim() const { return embed_dim_; }
  SemanticMode mode() const { return mode_; }
  std::size_t size() const { return data_.size(); }

  std::span<double> flat() { return data_; }
  std::span<const double> flat() const { return data_; }

  MatrixMap weight(Layer l);
  ConstMatrixMap weight(Layer l) const;
  VectorMap bias(Layer l);
  ConstVectorMap bias(Layer l) const;

  friend bool operator==(const HeadParams& a, const HeadParams& b) {
    return a.d_in_ == b.d_in_ && a.num_classes_ == b.num_classes_ &&
           a.embed_dim_ == b.embed_dim_ && a.mode_ == b.mode_ && a.data_ == b.data_;
  }

 private:
  struct Slot {
    std::size_t offset, rows, cols;
  };
  std::size_t d_in_, num_classes_, embed_dim_;
  SemanticMode mode_;
  std::array<Slot, 5> weights_{};
  std::array<Slot, 5> biases_{};
  std::vector<double> data_;
};

struct HeadOutputs {
  RowMatrix logits;              // n x K
  RowMatrix embedding;           // n x F
  Eigen::VectorXd variance_pre;  // n
  Eigen::VectorXd variance;      // n, softplus(variance_pre)
  Eigen::VectorXd center;        // n, in (0, 1)

  std::size_t size() const { return static_cast<std::size_t>(logits.rows()); }
  EmbeddingView embedding_view() const {
    return {{embedding.data(), static_cast<std::size_t>(embedding.size())},
            static_cast<std::size_t>(embedding.cols())};
  }
};

struct ForwardCache {
  RowMatrix input, pre1, h1, pre2, h2;
};

/// Throws ShapeMismatchError when the feature width differs from d_in.
HeadOutputs forward(const HeadParams& params, const RowMatrix& features,
                    ForwardCache* cache = nullptr);
/// Runs the head on every non-empty voxel of the grid (EMPTY voxels have no
/// rows and therefore no outputs).
HeadOutputs forward(const HeadParams& params, const VoxelGrid& grid, ForwardCache* cache = nullptr);

RowMatrix grid_features(const VoxelGrid& grid);

/// Upstream gradients of the total loss w.r.t. the head outputs.
struct OutputGradients {
  RowMatrix d_logits;          // n x K
  RowMatrix d_embedding;       // n x F
  Eigen::VectorXd d_variance;  // n, w.r.t. sigma^2 (after softplus)
  Eigen::VectorXd d_center;    // n, w.r.t. the sigmoid output

  static OutputGradients zeros(std::size_t n, std::size_t k, std::size_t f);
};

/// Exact reverse-mode gradient w.r.t. every parameter, in flat layout.
std::vector<double> backward(const HeadParams& params, const ForwardCache& cache,
                             const HeadOutputs& outputs, const OutputGradients& upstream);

// ---------------------------------------------------------------------------
// Training objective

struct LossWeights {
  double seg = 1.0;
  double center = 200.0;
  double uniform = 0.1;
  double adaptive = 0.1;
  double contrastive = 0.7;
  double embed = 1.0;
};

struct ObjectiveConfig {
  LossWeights weights;
  EmbeddingWeights embed_weights;
  double push_margin = 1.5;
  double var_reg_weight = 0.01;
  double delta_margin = 0.1;
  double sigma_floor = 1e-6;
};

/// Per-scene training targets, precomputed once from a labeled grid.
struct TrainingSample {
  RowMatrix features;                       // n x D_in
  std::vector<std::uint32_t> semantic;      // class index | kUnknownLabel | kIgnoreLabel
  std::vector<std::size_t> known_rows;      // semantic < K
  std::vector<std::size_t> unknown_rows;    // semantic == UNKNOWN
  std::vector<double> heatmap_target;       // n
  InstancePartition partition;              // thing (+ unknown) instances
  std::vector<std::size_t> center_rows;     // one per instance

  std::size_t size() const { return semantic.size(); }
};

/// `grid` must carry remapped majority-vote targets.
TrainingSample make_training_sample(const VoxelGrid& grid, const Vocabulary& vocab,
                                    double heatmap_sigma, bool include_unknown_instances);

struct LossBreakdown {
  double seg = 0, uniform = 0, adaptive = 0, contrastive = 0, center = 0;
  double pull = 0, push = 0, proto = 0, embed = 0, var_reg = 0;
  double total = 0;
  double mu_known = 0, mu_unknown = 0, delta_u = 0;
  bool separation_active = false;  // batch had both known and unknown voxels

  // Quantities the objective treats as constants (no gradient flows through
  // them): sigma_known in the adaptive loss and the per-instance spread
  // targets of the variance regularizer, one vector per scene.
  double sigma_known = 0;
  std::vector<std::vector<double>> variance_targets;
};

/// Evaluates the weighted objective on a batch of samples (rows are
/// concatenated in order; `pairs` index the concatenated rows). When `grad`
/// is non-null it receives the flat parameter gradient. When `detached` is
/// non-null its constant quantities are reused instead of recomputed, which
/// lets finite differences see exactly the function the gradient describes.
LossBreakdown evaluate_objective(const HeadParams& params,
                                 std::span<const TrainingSample* const> batch,
                                 const ObjectiveConfig& config, double epoch_weight,
                                 std::span<const std::pair<std::size_t, std::size_t>> pairs,
                                 std::vector<double>* grad,
                                 const LossBreakdown* detached = nullptr);

/// Known / unknown row lists of a concatenated batch.
void batch_rows(std::span<const TrainingSample* const> batch, std::vector<std::size_t>& known,
                std::vector<std::size_t>& unknown);

// ---------------------------------------------------------------------------
// Training loop

struct TrainConfig {
  int epochs = 60;
  int batch_scenes = 1;
  double learning_rate = 0.01;
  std::vector<int> lr_decay_epochs{45, 55};
  double lr_decay_factor = 10.0;  // lr is divided by this at each decay epoch
  std::uint64_t seed = 0;
  int warmup_epochs = 10;
  std::size_t pairs_per_batch = 256;
  std::size_t embed_dim = 32;
  SemanticMode mode = SemanticMode::kDirichlet;
  ObjectiveConfig objective;

  void validate() const;
  double lr_at(int epoch) const;
};

struct EpochLog {
  int epoch = 0;
  double lr = 0;
  LossBreakdown mean;  // averaged over the epoch's batches
};

struct TrainResult {
  HeadParams params;
  std::vector<EpochLog> log;
};

using EpochCallback = std::function<void(const EpochLog&)>;

TrainResult train(std::span<const TrainingSample> samples, std::size_t num_classes,
                  const TrainConfig& config, const EpochCallback& on_epoch = {});

// ---------------------------------------------------------------------------
// Checkpoints
//
// Layout (all little-endian):
//   8 bytes  magic "EVPNHEAD"
//   u32      version (1)
//   u32      D_in
//   u32      K
//   u32      F
//   u32      semantic mode (0 Dirichlet, 1 softmax)
//   f64 x P  parameters in HeadParams flat order

inline constexpr std::uint32_t kCheckpointVersion = 1;

void save_checkpoint(const HeadParams& params, const std::filesystem::path& path);
HeadParams load_checkpoint(const std::filesystem::path& path);

}  // namespace evipan
