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

#include "evipan/evidential.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "evipan/errors.hpp"
#include "evipan/special_functions.hpp"

namespace evipan {

EvidentialOutput alpha_from_logits(std::span<const double> logits, std::size_t num_classes) {
  if (num_classes == 0 || logits.size() % num_classes != 0) {
    throw ShapeMismatchError("logit count is not a multiple of the class count");
  }
  EvidentialOutput out;
  out.num_classes = num_classes;
  out.alpha.resize(logits.size());
  out.uncertainty.resize(logits.size() / num_classes);
  for (std::size_t i = 0; i < logits.size(); ++i) {
    if (!std::isfinite(logits[i])) {
      throw NumericalError("non-finite logit at position " + std::to_string(i));
    }
    out.alpha[i] = std::max(softplus(logits[i]), kMinAlpha);
  }
  for (std::size_t v = 0; v < out.uncertainty.size(); ++v) {
    out.uncertainty[v] = dirichlet_uncertainty(out.alpha_row(v));
  }
  return out;
}

double dirichlet_uncertainty(std::span<const double> alpha, std::span<double> grad) {
  double strength = 0.0;
  for (double a : alpha) {
    strength += a;
  }
  const double k = static_cast<double>(alpha.size());
  if (!grad.empty()) {
    std::fill(grad.begin(), grad.end(), -k / (strength * strength));
  }
  return k / strength;
}

double seg_loss(std::span<const double> alpha, std::size_t y, std::span<double> grad) {
  if (y >= alpha.size()) {
    throw DomainError("seg_loss: target class out of range");
  }
  double strength = 0.0;
  for (double a : alpha) {
    if (!(a > 0.0)) {
      throw DomainError("seg_loss: Dirichlet concentrations must be positive");
    }
    strength += a;
  }
  if (!grad.empty()) {
    const double common = trigamma(strength);
    std::fill(grad.begin(), grad.end(), common);
    grad[y] -= trigamma(alpha[y]);
  }
  return digamma(strength) - digamma(alpha[y]);
}

double uniform_evidence_loss(std::span<const double> alpha, std::span<double> grad) {
  double loss = 0.0;
  for (std::size_t k = 0; k < alpha.size(); ++k) {
    const double d = alpha[k] - 1.0;
    loss += d * d;
    if (!grad.empty()) {
      grad[k] = 2.0 * d;
    }
  }
  return loss;
}

UncertaintyBatchStats batch_uncertainty_stats(std::span<const double> u,
                                              std::span<const std::size_t> known,
                                              std::span<const std::size_t> unknown) {
  if (known.empty() || unknown.empty()) {
    throw EmptyMaskError("batch has no known or no unknown voxels");
  }
  UncertaintyBatchStats s;
  s.n_known = known.size();
  s.n_unknown = unknown.size();
  double sum = 0.0;
  for (std::size_t i : known) {
    sum += u[i];
  }
  s.mu_known = sum / static_cast<double>(known.size());
  double sq = 0.0;
  for (std::size_t i : known) {
    sq += (u[i] - s.mu_known) * (u[i] - s.mu_known);
  }
  s.sigma_known = std::sqrt(sq / static_cast<double>(known.size()));
  sum = 0.0;
  for (std::size_t i : unknown) {
    sum += u[i];
  }
  s.mu_unknown = sum / static_cast<double>(unknown.size());
  s.delta_u = s.mu_unknown - s.mu_known;
  return s;
}

AdaptiveLoss adaptive_separation_loss(const UncertaintyBatchStats& stats, double epoch_weight,
                                      double sigma_floor) {
  AdaptiveLoss out;
  out.sigma_used = std::max(stats.sigma_known, sigma_floor);
  out.value = epoch_weight * std::exp(-stats.delta_u / out.sigma_used);
  out.d_delta_u = -out.value / out.sigma_used;
  return out;
}

double adaptive_separation_loss(std::span<const double> u, std::span<const std::size_t> known,
                                std::span<const std::size_t> unknown, double epoch_weight,
                                double sigma_floor, std::span<double> grad_u) {
  const auto stats = batch_uncertainty_stats(u, known, unknown);
  const auto loss = adaptive_separation_loss(stats, epoch_weight, sigma_floor);
  if (!grad_u.empty()) {
    const double g_unknown = loss.d_delta_u / static_cast<double>(stats.n_unknown);
    const double g_known = -loss.d_delta_u / static_cast<double>(stats.n_known);
    for (std::size_t i : unknown) {
      grad_u[i] += g_unknown;
    }
    for (std::size_t i : known) {
      grad_u[i] += g_known;
    }
  }
  return loss.value;
}

double epoch_weight(int epoch, int warmup_epochs) {
  if (warmup_epochs <= 0) {
    return 1.0;
  }
  return std::min(1.0, static_cast<double>(epoch) / static_cast<double>(warmup_epochs));
}

double contrastive_uncertainty_loss(std::span<const UncertaintyPair> pairs, double delta,
                                    std::span<PairGradient> grads) {
  if (pairs.empty()) {
    return 0.0;
  }
  const double inv_n = 1.0 / static_cast<double>(pairs.size());
  double total = 0.0;
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    const double margin = pairs[i].u_unknown - pairs[i].u_known - delta;
    total += neg_log_sigmoid(margin);
    if (!grads.empty()) {
      // d/dm [-log sigmoid(m)] = -(1 - sigmoid(m)) = -sigmoid(-m).
      const double g = sigmoid(-margin) * inv_n;
      grads[i] = PairGradient{g, -g};
    }
  }
  return total * inv_n;
}

std::vector<std::pair<std::size_t, std::size_t>> sample_uncertainty_pairs(
    std::span<const std::size_t> known, std::span<const std::size_t> unknown, std::size_t count,
    std::mt19937_64& rng) {
  std::vector<std::pair<std::size_t, std::size_t>> pairs;
  if (known.empty() || unknown.empty()) {
    return pairs;
  }
  std::uniform_int_distribution<std::size_t> pick_known(0, known.size() - 1);
  std::uniform_int_distribution<std::size_t> pick_unknown(0, unknown.size() - 1);
  pairs.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    const std::size_t a = known[pick_known(rng)];
    const std::size_t b = unknown[pick_unknown(rng)];
    pairs.emplace_back(a, b);
  }
  return pairs;
}

namespace {

std::vector<double> softmax(std::span<const double> logits) {
  const double mx = *std::max_element(logits.begin(), logits.end());
  std::vector<double> p(logits.size());
  double z = 0.0;
  for (std::size_t k = 0; k < logits.size(); ++k) {
    p[k] = std::exp(logits[k] - mx);
    z += p[k];
  }
  for (double& v : p) {
    v /= z;
  }
  return p;
}

}  // namespace

double softmax_entropy_uncertainty(std::span<const double> logits) {
  if (logits.size() < 2) {
    return 0.0;
  }
  const auto p = softmax(logits);
  double h = 0.0;
  for (double v : p) {
    if (v > 0.0) {
      h -= v * std::log(v);
    }
  }
  return std::clamp(h / std::log(static_cast<double>(logits.size())), 0.0, 1.0);
}

double softmax_cross_entropy(std::span<const double> logits, std::size_t y,
                             std::span<double> grad) {
  if (y >= logits.size()) {
    throw DomainError("softmax_cross_entropy: target class out of range");
  }
  const double mx = *std::max_element(logits.begin(), logits.end());
  double z = 0.0;
  for (double x : logits) {
    z += std::exp(x - mx);
  }
  const double log_z = mx + std::log(z);
  if (!grad.empty()) {
    for (std::size_t k = 0; k < logits.size(); ++k) {
      grad[k] = std::exp(logits[k] - log_z) - (k == y ? 1.0 : 0.0);
    }
  }
  return log_z - logits[y];
}

}  // namespace evipan
