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

// Dirichlet evidential head math.
//
// A voxel's K logits become concentrations alpha_k = softplus(x_k); its
// uncertainty is u = K / sum_k alpha_k, which is 1 when the Dirichlet is flat
// (all alpha_k = 1) and falls toward 0 as evidence accumulates.
//
// Per-voxel loss functions write d(loss)/d(input) into `grad` when it is
// non-empty (overwriting it), and return the loss value.

#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <utility>
#include <vector>

namespace evipan {

/// Smallest concentration produced by alpha_from_logits. Keeps trigamma finite
/// for logits far below zero.
inline constexpr double kMinAlpha = 1e-100;

struct EvidentialOutput {
  std::size_t num_classes = 0;
  std::vector<double> alpha;        // row-major, n x K
  std::vector<double> uncertainty;  // n

  std::size_t size() const { return uncertainty.size(); }
  std::span<const double> alpha_row(std::size_t i) const {
    return {alpha.data() + i * num_classes, num_classes};
  }
};

/// Softplus concentrations and uncertainties for n voxels of K logits each.
/// Throws NumericalError on non-finite logits.
EvidentialOutput alpha_from_logits(std::span<const double> logits, std::size_t num_classes);

/// u = K / sum(alpha). With grad, writes du/dalpha_k = -K / sum(alpha)^2.
double dirichlet_uncertainty(std::span<const double> alpha, std::span<double> grad = {});

/// psi(sum alpha) - psi(alpha_y). Throws DomainError when some alpha <= 0 or
/// y is out of range.
double seg_loss(std::span<const double> alpha, std::size_t y, std::span<double> grad = {});

/// sum_k (alpha_k - 1)^2.
double uniform_evidence_loss(std::span<const double> alpha, std::span<double> grad = {});

struct UncertaintyBatchStats {
  double mu_known = 0.0;
  double mu_unknown = 0.0;
  double sigma_known = 0.0;  // population std
  double delta_u = 0.0;      // mu_unknown - mu_known
  std::size_t n_known = 0;
  std::size_t n_unknown = 0;
};

/// Throws EmptyMaskError when either index set is empty.
UncertaintyBatchStats batch_uncertainty_stats(std::span<const double> u,
                                              std::span<const std::size_t> known,
                                              std::span<const std::size_t> unknown);

struct AdaptiveLoss {
  double value = 0.0;
  double d_delta_u = 0.0;  // d value / d delta_u with sigma_known held fixed
  double sigma_used = 0.0;
};

/// epoch_weight * exp(-delta_u / max(sigma_known, sigma_floor)).
AdaptiveLoss adaptive_separation_loss(const UncertaintyBatchStats& stats, double epoch_weight,
                                      double sigma_floor = 1e-6);

/// Same loss with its gradient spread over the per-voxel uncertainties:
/// grad_u[v] += d_delta_u / n_unknown for unknown voxels and
/// -d_delta_u / n_known for known ones. sigma_known is a per-step constant.
double adaptive_separation_loss(std::span<const double> u, std::span<const std::size_t> known,
                                std::span<const std::size_t> unknown, double epoch_weight,
                                double sigma_floor, std::span<double> grad_u);

/// Linear warm-up min(1, epoch / warmup_epochs); 1 when warmup_epochs <= 0.
double epoch_weight(int epoch, int warmup_epochs);

struct UncertaintyPair {
  double u_known = 0.0;
  double u_unknown = 0.0;
};

struct PairGradient {
  double d_u_known = 0.0;
  double d_u_unknown = 0.0;
};

/// Mean over pairs of -log sigmoid(u_unknown - u_known - delta). Gradients are
/// of the mean, i.e. each pair's (+(1-s), -(1-s)) scaled by 1/P.
double contrastive_uncertainty_loss(std::span<const UncertaintyPair> pairs, double delta,
                                    std::span<PairGradient> grads = {});

/// Draws `count` (known, unknown) index pairs uniformly with replacement.
std::vector<std::pair<std::size_t, std::size_t>> sample_uncertainty_pairs(
    std::span<const std::size_t> known, std::span<const std::size_t> unknown, std::size_t count,
    std::mt19937_64& rng);

/// Shannon entropy of softmax(logits) divided by ln K, in [0, 1].
double softmax_entropy_uncertainty(std::span<const double> logits);

/// Softmax cross-entropy -log p_y with d/dlogits = p - onehot(y). Used by the
/// softmax baseline head.
double softmax_cross_entropy(std::span<const double> logits, std::size_t y,
                             std::span<double> grad = {});

}  // namespace evipan
