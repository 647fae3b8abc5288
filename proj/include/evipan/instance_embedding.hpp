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

// Embedding-space instance math: prototype association, the discriminative
// pull/push losses, prototype alignment and the center-heatmap MSE.
//
// Loss gradients are *accumulated* (+=) into the caller's buffers so a
// prototype taken from a voxel embedding can share that voxel's gradient row.

#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "evipan/polar_grid.hpp"

namespace evipan {

/// Read-only view of n embeddings of dimension F, row-major.
struct EmbeddingView {
  std::span<const double> data;
  std::size_t dim = 0;

  std::size_t size() const { return dim == 0 ? 0 : data.size() / dim; }
  std::span<const double> row(std::size_t i) const { return data.subspan(i * dim, dim); }
};

/// Mutable gradient buffer shaped like an EmbeddingView.
struct EmbeddingGrad {
  std::span<double> data;
  std::size_t dim = 0;

  bool empty() const { return data.empty(); }
  std::span<double> row(std::size_t i) const { return data.subspan(i * dim, dim); }
};

struct InstancePrototype {
  std::vector<double> mu;
  double sigma_sq = 1.0;
  std::size_t center_row = 0;  // embedding row the prototype was read from
};

/// exp(-|phi - mu|^2 / (2 sigma_c^2)). Throws DomainError for sigma_sq <= 0 or
/// a dimension mismatch.
double association_score(std::span<const double> phi, const InstancePrototype& proto);

/// One prototype per center row: mu = embedding row, sigma^2 = variance row.
/// Throws OutOfBoundsError for rows outside the embedding set.
std::vector<InstancePrototype> extract_prototypes(EmbeddingView embeddings,
                                                  std::span<const double> variance,
                                                  std::span<const std::size_t> center_rows);

/// Grid-coordinate form. Throws OutOfBoundsError when a center lies outside
/// the grid or on an empty voxel (which carries no embedding).
std::vector<InstancePrototype> extract_prototypes(const VoxelGrid& grid, EmbeddingView embeddings,
                                                  std::span<const double> variance,
                                                  std::span<const VoxelIndex> centers);

/// members[c] lists the embedding rows of instance c.
struct InstancePartition {
  std::vector<std::vector<std::size_t>> members;

  std::size_t size() const { return members.size(); }
};

/// Gradient sinks for the embedding losses; empty spans are skipped.
struct EmbeddingLossGrads {
  EmbeddingGrad phi;  // n x F
  EmbeddingGrad mu;   // N x F (one row per prototype)
};

/// (1 / sum|C_c|) sum_c sum_{v in C_c} |phi_v - mu_c|^2.
/// Throws MissingPrototypeError when prototypes do not cover the partition.
double pull_loss(EmbeddingView embeddings, const InstancePartition& partition,
                 std::span<const InstancePrototype> prototypes, const EmbeddingLossGrads& grads = {});

/// (1 / N(N-1)) sum_{c != c'} max(0, margin - |mu_c - mu_c'|^2); 0 for N < 2.
double push_loss(std::span<const InstancePrototype> prototypes, double margin,
                 EmbeddingGrad grad_mu = {});

/// (1/N) sum_c |mu_c - mean_{v in C_c} phi_v|^2. Throws EmptyInstanceError.
double prototype_loss(std::span<const InstancePrototype> prototypes, EmbeddingView embeddings,
                      const InstancePartition& partition, const EmbeddingLossGrads& grads = {});

struct EmbeddingWeights {
  double pull = 1.0;
  double push = 1.0;
  double proto = 0.001;
};

double embedding_loss(double pull, double push, double proto, const EmbeddingWeights& weights = {});

/// m_c: mean squared distance of instance c's members to mu_c.
std::vector<double> variance_targets(std::span<const InstancePrototype> prototypes,
                                     EmbeddingView embeddings, const InstancePartition& partition);

/// (1/N) sum_c (sigma_c^2 - m_c)^2 with m_c held constant. grad_sigma_sq[c]
/// receives d/dsigma_c^2.
double variance_regularizer(std::span<const InstancePrototype> prototypes,
                            std::span<const double> targets, std::span<double> grad_sigma_sq = {});
double variance_regularizer(std::span<const InstancePrototype> prototypes,
                            EmbeddingView embeddings, const InstancePartition& partition,
                            std::span<double> grad_sigma_sq = {});

/// (1/N) sum_v (predicted_v - target_v)^2 with gradient 2(predicted - target)/N
/// written into grad. Throws ShapeMismatchError on size mismatch.
double center_loss(std::span<const double> predicted, std::span<const double> target,
                   std::span<double> grad = {});
double center_loss(const CenterHeatmap& predicted, const CenterHeatmap& target,
                   std::span<double> grad = {});

}  // namespace evipan
