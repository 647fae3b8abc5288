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

#include "evipan/toy_head.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <string>

#include "byte_io.hpp"
#include "evipan/errors.hpp"
#include "evipan/evidential.hpp"
#include "evipan/special_functions.hpp"

namespace evipan {

// ---------------------------------------------------------------------------
// Parameters

HeadParams::HeadParams(std::size_t d_in, std::size_t num_classes, std::size_t embed_dim,
                       SemanticMode mode)
    : d_in_(d_in), num_classes_(num_classes), embed_dim_(embed_dim), mode_(mode) {
  if (d_in == 0 || num_classes < 2 || embed_dim == 0) {
    throw ConfigError("head: need D_in >= 1, K >= 2 and F >= 1");
  }
  const std::array<std::pair<std::size_t, std::size_t>, 5> shapes{{
      {kHiddenDim, d_in},
      {kHiddenDim, kHiddenDim},
      {num_classes, kHiddenDim},
      {embed_dim + 1, kHiddenDim},
      {1, kHiddenDim},
  }};
  std::size_t offset = 0;
  for (std::size_t i = 0; i < shapes.size(); ++i) {
    weights_[i] = Slot{offset, shapes[i].first, shapes[i].second};
    offset += shapes[i].first * shapes[i].second;
    biases_[i] = Slot{offset, shapes[i].first, 1};
    offset += shapes[i].first;
  }
  data_.assign(offset, 0.0);
}

HeadParams HeadParams::glorot(std::size_t d_in, std::size_t num_classes, std::size_t embed_dim,
                              std::uint64_t seed, SemanticMode mode) {
  HeadParams p(d_in, num_classes, embed_dim, mode);
  std::mt19937_64 rng(seed);
  for (const Slot& w : p.weights_) {
    const double a = std::sqrt(6.0 / static_cast<double>(w.rows + w.cols));
    std::uniform_real_distribution<double> dist(-a, a);
    for (std::size_t i = 0; i < w.rows * w.cols; ++i) {
      p.data_[w.offset + i] = dist(rng);
    }
  }
  return p;
}

HeadParams::MatrixMap HeadParams::weight(Layer l) {
  const Slot& s = weights_[static_cast<std::size_t>(l)];
  return MatrixMap(data_.data() + s.offset, static_cast<Eigen::Index>(s.rows),
                   static_cast<Eigen::Index>(s.cols));
}
HeadParams::ConstMatrixMap HeadParams::weight(Layer l) const {
  const Slot& s = weights_[static_cast<std::size_t>(l)];
  return ConstMatrixMap(data_.data() + s.offset, static_cast<Eigen::Index>(s.rows),
                        static_cast<Eigen::Index>(s.cols));
}
HeadParams::VectorMap HeadParams::bias(Layer l) {
  const Slot& s = biases_[static_cast<std::size_t>(l)];
  return VectorMap(data_.data() + s.offset, static_cast<Eigen::Index>(s.rows));
}
HeadParams::ConstVectorMap HeadParams::bias(Layer l) const {
  const Slot& s = biases_[static_cast<std::size_t>(l)];
  return ConstVectorMap(data_.data() + s.offset, static_cast<Eigen::Index>(s.rows));
}

// ---------------------------------------------------------------------------
// Forward / backward

RowMatrix grid_features(const VoxelGrid& grid) {
  RowMatrix x(static_cast<Eigen::Index>(grid.size()), static_cast<Eigen::Index>(kFeatureDim));
  std::copy(grid.features.begin(), grid.features.end(), x.data());
  return x;
}

HeadOutputs forward(const HeadParams& params, const RowMatrix& features, ForwardCache* cache) {
  if (static_cast<std::size_t>(features.cols()) != params.d_in()) {
    throw ShapeMismatchError("head: feature width " + std::to_string(features.cols()) +
                             " != D_in " + std::to_string(params.d_in()));
  }
  const auto f = static_cast<Eigen::Index>(params.embed_dim());

  RowMatrix pre1 = features * params.weight(Layer::kTrunk1).transpose();
  pre1.rowwise() += params.bias(Layer::kTrunk1).transpose();
  RowMatrix h1 = pre1.cwiseMax(0.0);
  RowMatrix pre2 = h1 * params.weight(Layer::kTrunk2).transpose();
  pre2.rowwise() += params.bias(Layer::kTrunk2).transpose();
  RowMatrix h2 = pre2.cwiseMax(0.0);

  HeadOutputs out;
  out.logits = h2 * params.weight(Layer::kSemantic).transpose();
  out.logits.rowwise() += params.bias(Layer::kSemantic).transpose();
  RowMatrix emb = h2 * params.weight(Layer::kEmbedding).transpose();
  emb.rowwise() += params.bias(Layer::kEmbedding).transpose();
  out.embedding = emb.leftCols(f);
  out.variance_pre = emb.col(f);
  out.variance = out.variance_pre.unaryExpr([](double s) { return softplus(s); });
  const Eigen::VectorXd center_pre =
      (h2 * params.weight(Layer::kCenter).transpose()).col(0).array() +
      params.bias(Layer::kCenter)(0);
  out.center = center_pre.unaryExpr([](double s) { return sigmoid(s); });

  if (cache != nullptr) {
    cache->input = features;
    cache->pre1 = std::move(pre1);
    cache->h1 = std::move(h1);
    cache->pre2 = std::move(pre2);
    cache->h2 = std::move(h2);
  }
  return out;
}

HeadOutputs forward(const HeadParams& params, const VoxelGrid& grid, ForwardCache* cache) {
  return forward(params, grid_features(grid), cache);
}

OutputGradients OutputGradients::zeros(std::size_t n, std::size_t k, std::size_t f) {
  const auto rows = static_cast<Eigen::Index>(n);
  OutputGradients g;
  g.d_logits = RowMatrix::Zero(rows, static_cast<Eigen::Index>(k));
  g.d_embedding = RowMatrix::Zero(rows, static_cast<Eigen::Index>(f));
  g.d_variance = Eigen::VectorXd::Zero(rows);
  g.d_center = Eigen::VectorXd::Zero(rows);
  return g;
}

std::vector<double> backward(const HeadParams& params, const ForwardCache& cache,
                             const HeadOutputs& outputs, const OutputGradients& upstream) {
  HeadParams grads(params.d_in(), params.num_classes(), params.embed_dim(), params.mode());
  const auto n = cache.h2.rows();
  const auto f = static_cast<Eigen::Index>(params.embed_dim());

  // Embedding head output is [phi | variance pre-activation].
  RowMatrix d_emb(n, f + 1);
  d_emb.leftCols(f) = upstream.d_embedding;
  d_emb.col(f) = upstream.d_variance.cwiseProduct(
      outputs.variance_pre.unaryExpr([](double s) { return sigmoid(s); }));
  const Eigen::VectorXd d_center_pre =
      upstream.d_center.cwiseProduct(outputs.center.cwiseProduct(
          (1.0 - outputs.center.array()).matrix()));

  grads.weight(Layer::kSemantic) = upstream.d_logits.transpose() * cache.h2;
  grads.bias(Layer::kSemantic) = upstream.d_logits.colwise().sum().transpose();
  grads.weight(Layer::kEmbedding) = d_emb.transpose() * cache.h2;
  grads.bias(Layer::kEmbedding) = d_emb.colwise().sum().transpose();
  grads.weight(Layer::kCenter) = d_center_pre.transpose() * cache.h2;
  grads.bias(Layer::kCenter)(0) = d_center_pre.sum();

  RowMatrix d_h2 = upstream.d_logits * params.weight(Layer::kSemantic) +
                   d_emb * params.weight(Layer::kEmbedding) +
                   d_center_pre * params.weight(Layer::kCenter);
  RowMatrix d_pre2 = d_h2.cwiseProduct((cache.pre2.array() > 0.0).cast<double>().matrix());
  grads.weight(Layer::kTrunk2) = d_pre2.transpose() * cache.h1;
  grads.bias(Layer::kTrunk2) = d_pre2.colwise().sum().transpose();

  RowMatrix d_h1 = d_pre2 * params.weight(Layer::kTrunk2);
  RowMatrix d_pre1 = d_h1.cwiseProduct((cache.pre1.array() > 0.0).cast<double>().matrix());
  grads.weight(Layer::kTrunk1) = d_pre1.transpose() * cache.input;
  grads.bias(Layer::kTrunk1) = d_pre1.colwise().sum().transpose();

  return {grads.flat().begin(), grads.flat().end()};
}

// ---------------------------------------------------------------------------
// Objective

TrainingSample make_training_sample(const VoxelGrid& grid, const Vocabulary& vocab,
                                    double heatmap_sigma, bool include_unknown_instances) {
  TrainingSample s;
  s.features = grid_features(grid);
  s.semantic = grid.semantic_target;
  const std::size_t k = vocab.known_count();
  for (std::size_t row = 0; row < grid.size(); ++row) {
    if (s.semantic[row] < k) {
      s.known_rows.push_back(row);
    } else if (s.semantic[row] == kUnknownLabel) {
      s.unknown_rows.push_back(row);
    }
  }
  s.heatmap_target = gather_heatmap(grid, render_center_heatmap(grid, vocab, heatmap_sigma));
  const auto instances = instance_centroids(grid, [&](std::uint32_t sem) {
    return vocab.is_thing(sem) || (include_unknown_instances && sem == kUnknownLabel);
  });
  for (const auto& inst : instances) {
    s.partition.members.push_back(inst.rows);
    s.center_rows.push_back(inst.center_row);
  }
  return s;
}

void batch_rows(std::span<const TrainingSample* const> batch, std::vector<std::size_t>& known,
                std::vector<std::size_t>& unknown) {
  known.clear();
  unknown.clear();
  std::size_t offset = 0;
  for (const TrainingSample* s : batch) {
    for (std::size_t r : s->known_rows) {
      known.push_back(offset + r);
    }
    for (std::size_t r : s->unknown_rows) {
      unknown.push_back(offset + r);
    }
    offset += s->size();
  }
}

namespace {

void add_scaled(std::span<double> dst, std::span<const double> src, double scale) {
  for (std::size_t i = 0; i < dst.size(); ++i) {
    dst[i] += scale * src[i];
  }
}

}  // namespace

LossBreakdown evaluate_objective(const HeadParams& params,
                                 std::span<const TrainingSample* const> batch,
                                 const ObjectiveConfig& config, double epoch_weight,
                                 std::span<const std::pair<std::size_t, std::size_t>> pairs,
                                 std::vector<double>* grad, const LossBreakdown* detached) {
  const std::size_t k = params.num_classes();
  const std::size_t f = params.embed_dim();
  const LossWeights& w = config.weights;

  std::size_t n = 0;
  for (const TrainingSample* s : batch) {
    n += s->size();
  }
  RowMatrix features(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(params.d_in()));
  std::vector<std::uint32_t> semantic;
  std::vector<double> heat_target;
  semantic.reserve(n);
  heat_target.reserve(n);
  {
    Eigen::Index row = 0;
    for (const TrainingSample* s : batch) {
      if (static_cast<std::size_t>(s->features.cols()) != params.d_in()) {
        throw ShapeMismatchError("training sample feature width differs from D_in");
      }
      features.middleRows(row, s->features.rows()) = s->features;
      row += s->features.rows();
      semantic.insert(semantic.end(), s->semantic.begin(), s->semantic.end());
      heat_target.insert(heat_target.end(), s->heatmap_target.begin(), s->heatmap_target.end());
    }
  }
  std::vector<std::size_t> known, unknown;
  batch_rows(batch, known, unknown);

  ForwardCache cache;
  const HeadOutputs out = forward(params, features, grad != nullptr ? &cache : nullptr);
  OutputGradients g = OutputGradients::zeros(n, k, f);
  LossBreakdown lb;

  std::vector<double> u(n);
  std::vector<double> scratch(k);
  if (params.mode() == SemanticMode::kDirichlet) {
    std::vector<double> alpha(n * k), grad_alpha(n * k, 0.0), grad_u(n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t c = 0; c < k; ++c) {
        alpha[i * k + c] = std::max(softplus(out.logits(static_cast<Eigen::Index>(i),
                                                        static_cast<Eigen::Index>(c))),
                                    kMinAlpha);
      }
      u[i] = dirichlet_uncertainty({alpha.data() + i * k, k});
    }
    auto alpha_row = [&](std::size_t i) { return std::span<const double>(alpha.data() + i * k, k); };
    auto grad_row = [&](std::size_t i) { return std::span<double>(grad_alpha.data() + i * k, k); };

    if (!known.empty()) {
      const double scale = w.seg / static_cast<double>(known.size());
      for (std::size_t i : known) {
        lb.seg += seg_loss(alpha_row(i), semantic[i], scratch);
        add_scaled(grad_row(i), scratch, scale);
      }
      lb.seg /= static_cast<double>(known.size());
    }
    if (!unknown.empty()) {
      const double scale = w.uniform / static_cast<double>(unknown.size());
      for (std::size_t i : unknown) {
        lb.uniform += uniform_evidence_loss(alpha_row(i), scratch);
        add_scaled(grad_row(i), scratch, scale);
      }
      lb.uniform /= static_cast<double>(unknown.size());
    }
    if (!known.empty() && !unknown.empty()) {
      auto stats = batch_uncertainty_stats(u, known, unknown);
      if (detached != nullptr) {
        stats.sigma_known = detached->sigma_known;
      }
      lb.separation_active = true;
      lb.mu_known = stats.mu_known;
      lb.mu_unknown = stats.mu_unknown;
      lb.delta_u = stats.delta_u;
      lb.sigma_known = stats.sigma_known;
      const auto adaptive = adaptive_separation_loss(stats, epoch_weight, config.sigma_floor);
      lb.adaptive = adaptive.value;
      const double gu = w.adaptive * adaptive.d_delta_u / static_cast<double>(stats.n_unknown);
      const double gk = -w.adaptive * adaptive.d_delta_u / static_cast<double>(stats.n_known);
      for (std::size_t i : unknown) {
        grad_u[i] += gu;
      }
      for (std::size_t i : known) {
        grad_u[i] += gk;
      }
      if (!pairs.empty()) {
        std::vector<UncertaintyPair> up(pairs.size());
        std::vector<PairGradient> pg(pairs.size());
        for (std::size_t p = 0; p < pairs.size(); ++p) {
          up[p] = {u[pairs[p].first], u[pairs[p].second]};
        }
        lb.contrastive = contrastive_uncertainty_loss(up, config.delta_margin, pg);
        for (std::size_t p = 0; p < pairs.size(); ++p) {
          grad_u[pairs[p].first] += w.contrastive * pg[p].d_u_known;
          grad_u[pairs[p].second] += w.contrastive * pg[p].d_u_unknown;
        }
      }
    }
    for (std::size_t i = 0; i < n; ++i) {
      double strength = 0.0;
      for (std::size_t c = 0; c < k; ++c) {
        strength += alpha[i * k + c];
      }
      const double du_dalpha = -static_cast<double>(k) / (strength * strength);
      for (std::size_t c = 0; c < k; ++c) {
        const double logit = out.logits(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(c));
        const double total = grad_alpha[i * k + c] + grad_u[i] * du_dalpha;
        // The kMinAlpha floor has zero slope.
        const double dsoft = softplus(logit) > kMinAlpha ? sigmoid(logit) : 0.0;
        g.d_logits(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(c)) = total * dsoft;
      }
    }
  } else {
    for (std::size_t i = 0; i < n; ++i) {
      const Eigen::VectorXd row = out.logits.row(static_cast<Eigen::Index>(i)).transpose();
      u[i] = softmax_entropy_uncertainty({row.data(), k});
    }
    if (!known.empty()) {
      const double scale = w.seg / static_cast<double>(known.size());
      for (std::size_t i : known) {
        const Eigen::VectorXd row = out.logits.row(static_cast<Eigen::Index>(i)).transpose();
        lb.seg += softmax_cross_entropy({row.data(), k}, semantic[i], scratch);
        for (std::size_t c = 0; c < k; ++c) {
          g.d_logits(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(c)) +=
              scale * scratch[c];
        }
      }
      lb.seg /= static_cast<double>(known.size());
    }
    if (!known.empty() && !unknown.empty()) {
      const auto stats = batch_uncertainty_stats(u, known, unknown);
      lb.separation_active = true;
      lb.mu_known = stats.mu_known;
      lb.mu_unknown = stats.mu_unknown;
      lb.delta_u = stats.delta_u;
    }
  }

  // Center heatmap regression over every non-empty voxel of the batch.
  {
    std::vector<double> dc(n);
    lb.center = center_loss({out.center.data(), n}, heat_target, dc);
    for (std::size_t i = 0; i < n; ++i) {
      g.d_center(static_cast<Eigen::Index>(i)) = w.center * dc[i];
    }
  }

  // Embedding losses, per scene, averaged over scenes that have instances.
  std::size_t scenes_with_instances = 0;
  for (const TrainingSample* s : batch) {
    scenes_with_instances += s->partition.size() > 0 ? 1 : 0;
  }
  if (scenes_with_instances > 0) {
    const double inv_s = 1.0 / static_cast<double>(scenes_with_instances);
    const EmbeddingView all = out.embedding_view();
    std::size_t offset = 0;
    for (std::size_t si = 0; si < batch.size(); ++si) {
      const TrainingSample* s = batch[si];
      const std::size_t ns = s->size();
      lb.variance_targets.emplace_back();
      if (s->partition.size() == 0) {
        offset += ns;
        continue;
      }
      const EmbeddingView view{all.data.subspan(offset * f, ns * f), f};
      const std::span<const double> var(out.variance.data() + offset, ns);
      const auto protos = extract_prototypes(view, var, s->center_rows);
      const std::size_t np = protos.size();

      std::vector<double> gphi(ns * f), gmu(np * f), gvar(np);
      auto flush = [&](double scale) {
        for (std::size_t r = 0; r < ns; ++r) {
          for (std::size_t d = 0; d < f; ++d) {
            g.d_embedding(static_cast<Eigen::Index>(offset + r), static_cast<Eigen::Index>(d)) +=
                scale * gphi[r * f + d];
          }
        }
        for (std::size_t c = 0; c < np; ++c) {
          const std::size_t row = offset + protos[c].center_row;
          for (std::size_t d = 0; d < f; ++d) {
            g.d_embedding(static_cast<Eigen::Index>(row), static_cast<Eigen::Index>(d)) +=
                scale * gmu[c * f + d];
          }
          g.d_variance(static_cast<Eigen::Index>(row)) += scale * gvar[c];
        }
        std::fill(gphi.begin(), gphi.end(), 0.0);
        std::fill(gmu.begin(), gmu.end(), 0.0);
        std::fill(gvar.begin(), gvar.end(), 0.0);
      };
      const EmbeddingLossGrads sinks{{gphi, f}, {gmu, f}};
      const double embed_scale = w.embed * inv_s;

      const double pull = pull_loss(view, s->partition, protos, sinks);
      flush(embed_scale * config.embed_weights.pull);
      const double push = push_loss(protos, config.push_margin, {gmu, f});
      flush(embed_scale * config.embed_weights.push);
      const double proto = prototype_loss(protos, view, s->partition, sinks);
      flush(embed_scale * config.embed_weights.proto);
      lb.variance_targets.back() = detached != nullptr
                                       ? detached->variance_targets.at(si)
                                       : variance_targets(protos, view, s->partition);
      const double var_reg = variance_regularizer(protos, lb.variance_targets.back(), gvar);
      flush(config.var_reg_weight * inv_s);

      lb.pull += pull * inv_s;
      lb.push += push * inv_s;
      lb.proto += proto * inv_s;
      lb.var_reg += var_reg * inv_s;
      offset += ns;
    }
    lb.embed = embedding_loss(lb.pull, lb.push, lb.proto, config.embed_weights);
  }

  lb.total = w.seg * lb.seg + w.uniform * lb.uniform + w.adaptive * lb.adaptive +
             w.contrastive * lb.contrastive + w.center * lb.center + w.embed * lb.embed +
             config.var_reg_weight * lb.var_reg;

  if (grad != nullptr) {
    *grad = backward(params, cache, out, g);
  }
  return lb;
}

// ---------------------------------------------------------------------------
// Training

void TrainConfig::validate() const {
  if (epochs < 0) {
    throw ConfigError("train.epochs must be nonnegative");
  }
  if (batch_scenes < 1) {
    throw ConfigError("train.batch_scenes must be at least 1");
  }
  if (!(learning_rate > 0.0) || !(lr_decay_factor > 0.0)) {
    throw ConfigError("train.learning_rate and train.lr_decay_factor must be positive");
  }
  if (embed_dim == 0) {
    throw ConfigError("embed.dim must be positive");
  }
  const LossWeights& w = objective.weights;
  for (double v : {w.seg, w.center, w.uniform, w.adaptive, w.contrastive, w.embed,
                   objective.var_reg_weight, objective.embed_weights.pull,
                   objective.embed_weights.push, objective.embed_weights.proto}) {
    if (!(v >= 0.0) || !std::isfinite(v)) {
      throw ConfigError("loss weights must be finite and nonnegative");
    }
  }
  if (objective.delta_margin < 0.0 || !(objective.sigma_floor > 0.0) ||
      !(objective.push_margin > 0.0)) {
    throw ConfigError("loss.delta_margin >= 0, loss.sigma_floor > 0, embed.push_margin > 0");
  }
}

double TrainConfig::lr_at(int epoch) const {
  double lr = learning_rate;
  for (int d : lr_decay_epochs) {
    if (epoch > d) {
      lr /= lr_decay_factor;
    }
  }
  return lr;
}

namespace {

class Adam {
 public:
  explicit Adam(std::size_t n) : m_(n, 0.0), v_(n, 0.0) {}

  void step(std::span<double> params, std::span<const double> grad, double lr) {
    ++t_;
    const double c1 = 1.0 - std::pow(kBeta1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(kBeta2, static_cast<double>(t_));
    for (std::size_t i = 0; i < params.size(); ++i) {
      m_[i] = kBeta1 * m_[i] + (1.0 - kBeta1) * grad[i];
      v_[i] = kBeta2 * v_[i] + (1.0 - kBeta2) * grad[i] * grad[i];
      params[i] -= lr * (m_[i] / c1) / (std::sqrt(v_[i] / c2) + kEps);
    }
  }

 private:
  static constexpr double kBeta1 = 0.9;
  static constexpr double kBeta2 = 0.999;
  static constexpr double kEps = 1e-8;
  std::vector<double> m_, v_;
  long t_ = 0;
};

void accumulate(LossBreakdown& acc, const LossBreakdown& b) {
  acc.seg += b.seg;
  acc.uniform += b.uniform;
  acc.adaptive += b.adaptive;
  acc.contrastive += b.contrastive;
  acc.center += b.center;
  acc.pull += b.pull;
  acc.push += b.push;
  acc.proto += b.proto;
  acc.embed += b.embed;
  acc.var_reg += b.var_reg;
  acc.total += b.total;
}

}  // namespace

TrainResult train(std::span<const TrainingSample> samples, std::size_t num_classes,
                  const TrainConfig& config, const EpochCallback& on_epoch) {
  config.validate();
  const std::size_t d_in =
      samples.empty() ? kFeatureDim : static_cast<std::size_t>(samples.front().features.cols());
  TrainResult result{HeadParams::glorot(d_in, num_classes, config.embed_dim, config.seed, config.mode),
                     {}};
  if (config.epochs == 0 || samples.empty()) {
    return result;
  }
  // Separate stream from the initializer so changing the schedule never
  // changes the initial weights.
  std::mt19937_64 rng(config.seed ^ 0x9E3779B97F4A7C15ull);
  Adam adam(result.params.size());
  std::vector<std::size_t> order(samples.size());
  for (std::size_t i = 0; i < order.size(); ++i) {
    order[i] = i;
  }
  const bool use_pairs = config.mode == SemanticMode::kDirichlet &&
                         config.objective.weights.contrastive > 0.0 && config.pairs_per_batch > 0;

  std::vector<double> grad;
  std::vector<std::size_t> known, unknown;
  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    const double lr = config.lr_at(epoch);
    const double ew = epoch_weight(epoch, config.warmup_epochs);
    std::shuffle(order.begin(), order.end(), rng);

    EpochLog log;
    log.epoch = epoch;
    log.lr = lr;
    std::size_t batches = 0, active = 0;
    for (std::size_t start = 0; start < order.size();
         start += static_cast<std::size_t>(config.batch_scenes)) {
      const std::size_t end =
          std::min(order.size(), start + static_cast<std::size_t>(config.batch_scenes));
      std::vector<const TrainingSample*> batch;
      for (std::size_t i = start; i < end; ++i) {
        batch.push_back(&samples[order[i]]);
      }
      std::vector<std::pair<std::size_t, std::size_t>> pairs;
      if (use_pairs) {
        batch_rows(batch, known, unknown);
        pairs = sample_uncertainty_pairs(known, unknown, config.pairs_per_batch, rng);
      }
      const LossBreakdown lb = evaluate_objective(result.params, batch, config.objective, ew, pairs,
                                                  &grad);
      adam.step(result.params.flat(), grad, lr);
      accumulate(log.mean, lb);
      if (lb.separation_active) {
        log.mean.mu_known += lb.mu_known;
        log.mean.mu_unknown += lb.mu_unknown;
        ++active;
      }
      ++batches;
    }
    const double inv = 1.0 / static_cast<double>(batches);
    LossBreakdown& m = log.mean;
    for (double* v : {&m.seg, &m.uniform, &m.adaptive, &m.contrastive, &m.center, &m.pull, &m.push,
                      &m.proto, &m.embed, &m.var_reg, &m.total}) {
      *v *= inv;
    }
    if (active > 0) {
      m.mu_known /= static_cast<double>(active);
      m.mu_unknown /= static_cast<double>(active);
      m.delta_u = m.mu_unknown - m.mu_known;
      m.separation_active = true;
    }
    if (on_epoch) {
      on_epoch(log);
    }
    result.log.push_back(log);
  }
  return result;
}

// ---------------------------------------------------------------------------
// Checkpoints

namespace {
constexpr char kCheckpointMagic[8] = {'E', 'V', 'P', 'N', 'H', 'E', 'A', 'D'};
constexpr std::size_t kCheckpointHeaderBytes = 8 + 5 * 4;
}  // namespace

void save_checkpoint(const HeadParams& params, const std::filesystem::path& path) {
  std::vector<unsigned char> bytes(kCheckpointMagic, kCheckpointMagic + 8);
  detail::put_le(bytes, kCheckpointVersion);
  detail::put_le(bytes, static_cast<std::uint32_t>(params.d_in()));
  detail::put_le(bytes, static_cast<std::uint32_t>(params.num_classes()));
  detail::put_le(bytes, static_cast<std::uint32_t>(params.embed_dim()));
  detail::put_le(bytes, static_cast<std::uint32_t>(params.mode()));
  for (double v : params.flat()) {
    detail::put_f64(bytes, v);
  }
  detail::write_file_bytes(path, bytes);
}

HeadParams load_checkpoint(const std::filesystem::path& path) {
  const auto bytes = detail::read_file_bytes(path);
  if (bytes.size() < kCheckpointHeaderBytes ||
      !std::equal(kCheckpointMagic, kCheckpointMagic + 8, bytes.begin())) {
    throw FormatError("not a head checkpoint: " + path.string());
  }
  const unsigned char* p = bytes.data() + 8;
  const auto version = detail::get_le<std::uint32_t>(p);
  if (version != kCheckpointVersion) {
    throw FormatError("unsupported checkpoint version " + std::to_string(version));
  }
  const auto d_in = detail::get_le<std::uint32_t>(p + 4);
  const auto k = detail::get_le<std::uint32_t>(p + 8);
  const auto f = detail::get_le<std::uint32_t>(p + 12);
  const auto mode = detail::get_le<std::uint32_t>(p + 16);
  if (mode > 1) {
    throw FormatError("unknown semantic mode in checkpoint");
  }
  HeadParams params(d_in, k, f, static_cast<SemanticMode>(mode));
  if (bytes.size() != kCheckpointHeaderBytes + 8 * params.size()) {
    throw FormatError("checkpoint size does not match its header: " + path.string());
  }
  auto flat = params.flat();
  for (std::size_t i = 0; i < flat.size(); ++i) {
    flat[i] = detail::get_f64(bytes.data() + kCheckpointHeaderBytes + 8 * i);
    if (!std::isfinite(flat[i])) {
      throw FormatError("non-finite parameter in checkpoint");
    }
  }
  return params;
}

}  // namespace evipan
