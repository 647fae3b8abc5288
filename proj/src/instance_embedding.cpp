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

#include "evipan/instance_embedding.hpp"

#include <cmath>
#include <string>

#include "evipan/errors.hpp"

namespace evipan {

namespace {

double squared_distance(std::span<const double> a, std::span<const double> b) {
  double d = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double t = a[i] - b[i];
    d += t * t;
  }
  return d;
}

}  // namespace

double association_score(std::span<const double> phi, const InstancePrototype& proto) {
  if (!(proto.sigma_sq > 0.0)) {
    throw DomainError("association_score: prototype variance must be positive");
  }
  if (phi.size() != proto.mu.size()) {
    throw DomainError("association_score: embedding dimension mismatch");
  }
  return std::exp(-squared_distance(phi, proto.mu) / (2.0 * proto.sigma_sq));
}

std::vector<InstancePrototype> extract_prototypes(EmbeddingView embeddings,
                                                  std::span<const double> variance,
                                                  std::span<const std::size_t> center_rows) {
  std::vector<InstancePrototype> out;
  out.reserve(center_rows.size());
  for (std::size_t row : center_rows) {
    if (row >= embeddings.size() || row >= variance.size()) {
      throw OutOfBoundsError("prototype center row " + std::to_string(row) + " out of range");
    }
    const auto phi = embeddings.row(row);
    out.push_back(InstancePrototype{{phi.begin(), phi.end()}, variance[row], row});
  }
  return out;
}

std::vector<InstancePrototype> extract_prototypes(const VoxelGrid& grid, EmbeddingView embeddings,
                                                  std::span<const double> variance,
                                                  std::span<const VoxelIndex> centers) {
  std::vector<std::size_t> rows;
  rows.reserve(centers.size());
  for (const VoxelIndex& c : centers) {
    if (!in_bounds(grid.spec, c)) {
      throw OutOfBoundsError("prototype center outside the grid");
    }
    auto row = grid.row_of(c);
    if (!row) {
      throw OutOfBoundsError("prototype center lies on an empty voxel");
    }
    rows.push_back(*row);
  }
  return extract_prototypes(embeddings, variance, rows);
}

double pull_loss(EmbeddingView embeddings, const InstancePartition& partition,
                 std::span<const InstancePrototype> prototypes, const EmbeddingLossGrads& grads) {
  if (prototypes.size() < partition.size()) {
    throw MissingPrototypeError("pull_loss: " + std::to_string(partition.size()) +
                                " instances but " + std::to_string(prototypes.size()) +
                                " prototypes");
  }
  std::size_t total = 0;
  for (const auto& m : partition.members) {
    total += m.size();
  }
  if (total == 0) {
    return 0.0;
  }
  const double inv = 1.0 / static_cast<double>(total);
  double loss = 0.0;
  for (std::size_t c = 0; c < partition.size(); ++c) {
    const auto& mu = prototypes[c].mu;
    for (std::size_t v : partition.members[c]) {
      const auto phi = embeddings.row(v);
      loss += squared_distance(phi, mu);
      for (std::size_t d = 0; d < mu.size(); ++d) {
        const double g = 2.0 * (phi[d] - mu[d]) * inv;
        if (!grads.phi.empty()) {
          grads.phi.row(v)[d] += g;
        }
        if (!grads.mu.empty()) {
          grads.mu.row(c)[d] -= g;
        }
      }
    }
  }
  return loss * inv;
}

double push_loss(std::span<const InstancePrototype> prototypes, double margin,
                 EmbeddingGrad grad_mu) {
  const std::size_t n = prototypes.size();
  if (n < 2) {
    return 0.0;
  }
  const double inv = 1.0 / static_cast<double>(n * (n - 1));
  double loss = 0.0;
  for (std::size_t a = 0; a < n; ++a) {
    for (std::size_t b = 0; b < n; ++b) {
      if (a == b) {
        continue;
      }
      const double d2 = squared_distance(prototypes[a].mu, prototypes[b].mu);
      const double hinge = margin - d2;
      if (hinge <= 0.0) {
        continue;
      }
      loss += hinge;
      if (!grad_mu.empty()) {
        // d(-|mu_a - mu_b|^2)/dmu_a = -2 (mu_a - mu_b); symmetric for mu_b.
        for (std::size_t d = 0; d < prototypes[a].mu.size(); ++d) {
          const double g = 2.0 * (prototypes[a].mu[d] - prototypes[b].mu[d]) * inv;
          grad_mu.row(a)[d] -= g;
          grad_mu.row(b)[d] += g;
        }
      }
    }
  }
  return loss * inv;
}

double prototype_loss(std::span<const InstancePrototype> prototypes, EmbeddingView embeddings,
                      const InstancePartition& partition, const EmbeddingLossGrads& grads) {
  if (prototypes.size() < partition.size()) {
    throw MissingPrototypeError("prototype_loss: missing prototypes");
  }
  const std::size_t n = partition.size();
  if (n == 0) {
    return 0.0;
  }
  const double inv_n = 1.0 / static_cast<double>(n);
  const std::size_t dim = embeddings.dim;
  std::vector<double> mean(dim);
  double loss = 0.0;
  for (std::size_t c = 0; c < n; ++c) {
    const auto& members = partition.members[c];
    if (members.empty()) {
      throw EmptyInstanceError("prototype_loss: instance " + std::to_string(c) + " is empty");
    }
    std::fill(mean.begin(), mean.end(), 0.0);
    for (std::size_t v : members) {
      const auto phi = embeddings.row(v);
      for (std::size_t d = 0; d < dim; ++d) {
        mean[d] += phi[d];
      }
    }
    const double inv_m = 1.0 / static_cast<double>(members.size());
    for (double& x : mean) {
      x *= inv_m;
    }
    loss += squared_distance(prototypes[c].mu, mean);
    for (std::size_t d = 0; d < dim; ++d) {
      const double g = 2.0 * (prototypes[c].mu[d] - mean[d]) * inv_n;
      if (!grads.mu.empty()) {
        grads.mu.row(c)[d] += g;
      }
      if (!grads.phi.empty()) {
        for (std::size_t v : members) {
          grads.phi.row(v)[d] -= g * inv_m;
        }
      }
    }
  }
  return loss * inv_n;
}

double embedding_loss(double pull, double push, double proto, const EmbeddingWeights& weights) {
  return weights.pull * pull + weights.push * push + weights.proto * proto;
}

std::vector<double> variance_targets(std::span<const InstancePrototype> prototypes,
                                     EmbeddingView embeddings, const InstancePartition& partition) {
  const std::size_t n = partition.size();
  if (prototypes.size() < n) {
    throw MissingPrototypeError("variance_targets: missing prototypes");
  }
  std::vector<double> out(n);
  for (std::size_t c = 0; c < n; ++c) {
    const auto& members = partition.members[c];
    if (members.empty()) {
      throw EmptyInstanceError("variance_targets: empty instance");
    }
    double spread = 0.0;
    for (std::size_t v : members) {
      spread += squared_distance(embeddings.row(v), prototypes[c].mu);
    }
    out[c] = spread / static_cast<double>(members.size());
  }
  return out;
}

double variance_regularizer(std::span<const InstancePrototype> prototypes,
                            std::span<const double> targets, std::span<double> grad_sigma_sq) {
  const std::size_t n = targets.size();
  if (n == 0) {
    return 0.0;
  }
  if (prototypes.size() < n) {
    throw MissingPrototypeError("variance_regularizer: missing prototypes");
  }
  const double inv_n = 1.0 / static_cast<double>(n);
  double loss = 0.0;
  for (std::size_t c = 0; c < n; ++c) {
    const double diff = prototypes[c].sigma_sq - targets[c];
    loss += diff * diff;
    if (!grad_sigma_sq.empty()) {
      grad_sigma_sq[c] += 2.0 * diff * inv_n;
    }
  }
  return loss * inv_n;
}

double variance_regularizer(std::span<const InstancePrototype> prototypes,
                            EmbeddingView embeddings, const InstancePartition& partition,
                            std::span<double> grad_sigma_sq) {
  return variance_regularizer(prototypes, variance_targets(prototypes, embeddings, partition),
                              grad_sigma_sq);
}

double center_loss(std::span<const double> predicted, std::span<const double> target,
                   std::span<double> grad) {
  if (predicted.size() != target.size() || (!grad.empty() && grad.size() != predicted.size())) {
    throw ShapeMismatchError("center_loss: predicted and target sizes differ");
  }
  if (predicted.empty()) {
    return 0.0;
  }
  const double inv = 1.0 / static_cast<double>(predicted.size());
  double loss = 0.0;
  for (std::size_t v = 0; v < predicted.size(); ++v) {
    const double d = predicted[v] - target[v];
    loss += d * d;
    if (!grad.empty()) {
      grad[v] = 2.0 * d * inv;
    }
  }
  return loss * inv;
}

double center_loss(const CenterHeatmap& predicted, const CenterHeatmap& target,
                   std::span<double> grad) {
  if (!(predicted.spec == target.spec)) {
    throw ShapeMismatchError("center_loss: heatmaps live on different grids");
  }
  return center_loss(predicted.values, target.values, grad);
}

}  // namespace evipan
