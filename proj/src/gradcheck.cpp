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

#include "evipan/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "evipan/errors.hpp"
#include "evipan/evidential.hpp"
#include "evipan/instance_embedding.hpp"
#include "evipan/toy_head.hpp"

namespace evipan {

double gradient_relative_error(double analytic, double numeric) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), kGradCheckFloor});
  return std::abs(analytic - numeric) / denom;
}

std::vector<double> numeric_gradient(const std::function<double(std::span<const double>)>& f,
                                     std::span<const double> x, double h) {
  std::vector<double> work(x.begin(), x.end());
  std::vector<double> g(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    work[i] = x[i] + h;
    const double up = f(work);
    work[i] = x[i] - h;
    const double down = f(work);
    work[i] = x[i];
    g[i] = (up - down) / (2.0 * h);
  }
  return g;
}

namespace {

using Rng = std::mt19937_64;

constexpr double kStep = 1e-6;
// The head objective is O(1) or larger, so a wider step keeps roundoff below
// the tolerance for its smallest gradient components.
constexpr double kHeadStep = 1e-4;

double uniform(Rng& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}
std::size_t pick(Rng& rng, std::size_t lo, std::size_t hi) {
  return std::uniform_int_distribution<std::size_t>(lo, hi)(rng);
}
std::vector<double> uniform_vec(Rng& rng, std::size_t n, double lo, double hi) {
  std::vector<double> v(n);
  for (double& x : v) {
    x = uniform(rng, lo, hi);
  }
  return v;
}

void compare(GradCheckResult& r, std::span<const double> analytic, std::span<const double> numeric,
             double scale) {
  for (std::size_t i = 0; i < analytic.size(); ++i) {
    r.max_rel_error =
        std::max(r.max_rel_error, gradient_relative_error(scale * analytic[i], numeric[i]));
    ++r.components;
  }
}

// Random disjoint instances over rows [0, n), each with >= 1 member.
InstancePartition random_partition(Rng& rng, std::size_t n, std::size_t instances) {
  std::vector<std::size_t> rows(n);
  std::iota(rows.begin(), rows.end(), 0);
  std::shuffle(rows.begin(), rows.end(), rng);
  InstancePartition p;
  p.members.resize(instances);
  std::size_t next = 0;
  for (std::size_t c = 0; c < instances; ++c) {
    p.members[c].push_back(rows[next++]);
  }
  // Some rows stay unassigned (background).
  for (; next < n; ++next) {
    const std::size_t c = pick(rng, 0, instances);
    if (c < instances) {
      p.members[c].push_back(rows[next]);
    }
  }
  return p;
}

std::vector<InstancePrototype> prototypes_from(std::span<const double> mu, std::size_t dim,
                                               std::span<const double> sigma_sq) {
  std::vector<InstancePrototype> out(sigma_sq.size());
  for (std::size_t c = 0; c < out.size(); ++c) {
    out[c].mu.assign(mu.begin() + static_cast<std::ptrdiff_t>(c * dim),
                     mu.begin() + static_cast<std::ptrdiff_t>((c + 1) * dim));
    out[c].sigma_sq = sigma_sq[c];
  }
  return out;
}

void check_dirichlet_uncertainty(Rng& rng, double scale, GradCheckResult& r) {
  const auto alpha = uniform_vec(rng, pick(rng, 2, 6), 0.2, 5.0);
  std::vector<double> g(alpha.size());
  dirichlet_uncertainty(alpha, g);
  const auto n = numeric_gradient([](auto a) { return dirichlet_uncertainty(a); }, alpha, kStep);
  compare(r, g, n, scale);
}

void check_seg(Rng& rng, double scale, GradCheckResult& r) {
  const auto alpha = uniform_vec(rng, pick(rng, 2, 6), 0.3, 5.0);
  const std::size_t y = pick(rng, 0, alpha.size() - 1);
  std::vector<double> g(alpha.size());
  seg_loss(alpha, y, g);
  const auto n = numeric_gradient([&](auto a) { return seg_loss(a, y); }, alpha, kStep);
  compare(r, g, n, scale);
}

void check_uniform(Rng& rng, double scale, GradCheckResult& r) {
  const auto alpha = uniform_vec(rng, pick(rng, 2, 6), 0.1, 4.0);
  std::vector<double> g(alpha.size());
  uniform_evidence_loss(alpha, g);
  const auto n = numeric_gradient([](auto a) { return uniform_evidence_loss(a); }, alpha, kStep);
  compare(r, g, n, scale);
}

void check_adaptive(Rng& rng, double scale, GradCheckResult& r) {
  const std::size_t nk = pick(rng, 5, 20);
  const std::size_t nu = pick(rng, 3, 10);
  const auto u = uniform_vec(rng, nk + nu, 0.1, 2.0);
  std::vector<std::size_t> known(nk), unknown(nu);
  std::iota(known.begin(), known.end(), 0);
  std::iota(unknown.begin(), unknown.end(), nk);
  const double w = uniform(rng, 0.1, 1.0);
  const double sigma = batch_uncertainty_stats(u, known, unknown).sigma_known;
  std::vector<double> g(u.size(), 0.0);
  adaptive_separation_loss(u, known, unknown, w, 1e-6, g);
  // sigma_known is a constant of the loss.
  const auto n = numeric_gradient(
      [&](auto x) {
        auto s = batch_uncertainty_stats(x, known, unknown);
        s.sigma_known = sigma;
        return adaptive_separation_loss(s, w, 1e-6).value;
      },
      u, kStep);
  compare(r, g, n, scale);
}

void check_contrastive(Rng& rng, double scale, GradCheckResult& r) {
  const std::size_t p = pick(rng, 1, 30);
  const auto x = uniform_vec(rng, 2 * p, 0.0, 2.0);
  auto to_pairs = [p](std::span<const double> v) {
    std::vector<UncertaintyPair> out(p);
    for (std::size_t i = 0; i < p; ++i) {
      out[i] = {v[2 * i], v[2 * i + 1]};
    }
    return out;
  };
  std::vector<PairGradient> pg(p);
  contrastive_uncertainty_loss(to_pairs(x), 0.1, pg);
  std::vector<double> g(2 * p);
  for (std::size_t i = 0; i < p; ++i) {
    g[2 * i] = pg[i].d_u_known;
    g[2 * i + 1] = pg[i].d_u_unknown;
  }
  const auto n = numeric_gradient(
      [&](auto v) { return contrastive_uncertainty_loss(to_pairs(v), 0.1); }, x, kStep);
  compare(r, g, n, scale);
}

void check_softmax_ce(Rng& rng, double scale, GradCheckResult& r) {
  const auto logits = uniform_vec(rng, pick(rng, 2, 6), -4.0, 4.0);
  const std::size_t y = pick(rng, 0, logits.size() - 1);
  std::vector<double> g(logits.size());
  softmax_cross_entropy(logits, y, g);
  const auto n = numeric_gradient([&](auto l) { return softmax_cross_entropy(l, y); }, logits,
                                  kStep);
  compare(r, g, n, scale);
}

// x = [phi (n x F) | mu (N x F)].
template <typename Loss>
void check_embedding_pair(Rng& rng, double scale, GradCheckResult& r, Loss loss) {
  const std::size_t n = pick(rng, 10, 30);
  const std::size_t f = pick(rng, 2, 8);
  const std::size_t inst = pick(rng, 1, 4);
  const auto part = random_partition(rng, n, inst);
  const auto x = uniform_vec(rng, (n + inst) * f, -1.0, 1.0);
  const std::vector<double> sig(inst, 1.0);
  auto eval = [&](std::span<const double> v, std::span<double> gphi, std::span<double> gmu) {
    const EmbeddingView view{v.first(n * f), f};
    const auto protos = prototypes_from(v.subspan(n * f), f, sig);
    return loss(view, part, protos, EmbeddingLossGrads{{gphi, f}, {gmu, f}});
  };
  std::vector<double> g(x.size(), 0.0);
  eval(x, std::span<double>(g).first(n * f), std::span<double>(g).subspan(n * f));
  const auto num = numeric_gradient([&](auto v) { return eval(v, {}, {}); }, x, kStep);
  compare(r, g, num, scale);
}

void check_pull(Rng& rng, double scale, GradCheckResult& r) {
  check_embedding_pair(rng, scale, r, [](auto view, const auto& part, const auto& protos,
                                         const auto& sinks) {
    return pull_loss(view, part, protos, sinks);
  });
}

void check_proto(Rng& rng, double scale, GradCheckResult& r) {
  check_embedding_pair(rng, scale, r, [](auto view, const auto& part, const auto& protos,
                                         const auto& sinks) {
    return prototype_loss(protos, view, part, sinks);
  });
}

void check_push(Rng& rng, double scale, GradCheckResult& r) {
  const double margin = 1.5;
  const std::size_t inst = pick(rng, 2, 5);
  const std::size_t f = pick(rng, 2, 6);
  std::vector<double> mu;
  std::vector<double> sig(inst, 1.0);
  // Keep every pair away from the hinge so the stencil stays on one side.
  for (bool ok = false; !ok;) {
    mu = uniform_vec(rng, inst * f, -0.8, 0.8);
    ok = true;
    const auto protos = prototypes_from(mu, f, sig);
    for (std::size_t a = 0; a < inst && ok; ++a) {
      for (std::size_t b = a + 1; b < inst; ++b) {
        double d = 0.0;
        for (std::size_t k = 0; k < f; ++k) {
          d += (protos[a].mu[k] - protos[b].mu[k]) * (protos[a].mu[k] - protos[b].mu[k]);
        }
        if (std::abs(margin - d) < 1e-3) {
          ok = false;
          break;
        }
      }
    }
  }
  std::vector<double> g(mu.size(), 0.0);
  push_loss(prototypes_from(mu, f, sig), margin, {g, f});
  const auto n = numeric_gradient(
      [&](auto v) { return push_loss(prototypes_from(v, f, sig), margin); }, mu, kStep);
  compare(r, g, n, scale);
}

void check_var_reg(Rng& rng, double scale, GradCheckResult& r) {
  const std::size_t n = pick(rng, 10, 30);
  const std::size_t f = pick(rng, 2, 6);
  const std::size_t inst = pick(rng, 1, 4);
  const auto part = random_partition(rng, n, inst);
  const auto phi = uniform_vec(rng, n * f, -1.0, 1.0);
  const auto mu = uniform_vec(rng, inst * f, -1.0, 1.0);
  const auto sig = uniform_vec(rng, inst, 0.1, 2.0);
  const EmbeddingView view{phi, f};
  std::vector<double> g(inst, 0.0);
  variance_regularizer(prototypes_from(mu, f, sig), view, part, g);
  const auto num = numeric_gradient(
      [&](auto s) { return variance_regularizer(prototypes_from(mu, f, s), view, part); }, sig,
      kStep);
  compare(r, g, num, scale);
}

void check_center(Rng& rng, double scale, GradCheckResult& r) {
  const std::size_t n = pick(rng, 5, 50);
  const auto pred = uniform_vec(rng, n, 0.0, 1.0);
  const auto target = uniform_vec(rng, n, 0.0, 1.0);
  std::vector<double> g(n);
  center_loss(pred, target, g);
  const auto num = numeric_gradient([&](auto p) { return center_loss(p, target); }, pred, kStep);
  compare(r, g, num, scale);
}

// A 12-voxel micro-scene with every loss term active.
TrainingSample micro_sample(Rng& rng, std::size_t k) {
  const std::size_t n = 12;
  TrainingSample s;
  s.features = RowMatrix(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(kFeatureDim));
  for (Eigen::Index i = 0; i < s.features.size(); ++i) {
    s.features.data()[i] = uniform(rng, -1.0, 1.0);
  }
  s.semantic.resize(n);
  for (std::size_t v = 0; v < n; ++v) {
    if (v < 8) {
      s.semantic[v] = static_cast<std::uint32_t>(pick(rng, 0, k - 1));
      s.known_rows.push_back(v);
    } else if (v < 11) {
      s.semantic[v] = kUnknownLabel;
      s.unknown_rows.push_back(v);
    } else {
      s.semantic[v] = kIgnoreLabel;
    }
  }
  s.heatmap_target = uniform_vec(rng, n, 0.0, 1.0);
  s.partition.members = {{0, 1, 2}, {3, 4, 5, 6}};
  s.center_rows = {1, 4};
  return s;
}

std::vector<std::uint8_t> relu_pattern(const HeadParams& p, const RowMatrix& x) {
  ForwardCache c;
  forward(p, x, &c);
  std::vector<std::uint8_t> out;
  out.reserve(static_cast<std::size_t>(c.pre1.size() + c.pre2.size()));
  for (Eigen::Index i = 0; i < c.pre1.size(); ++i) {
    out.push_back(c.pre1.data()[i] > 0.0);
  }
  for (Eigen::Index i = 0; i < c.pre2.size(); ++i) {
    out.push_back(c.pre2.data()[i] > 0.0);
  }
  return out;
}

void check_head(Rng& rng, double scale, GradCheckResult& r, SemanticMode mode, bool full_sweep) {
  const std::size_t k = 4;
  const TrainingSample sample = micro_sample(rng, k);
  HeadParams params = HeadParams::glorot(kFeatureDim, k, 3, rng(), mode);
  for (double& v : params.flat()) {
    v += uniform(rng, -0.05, 0.05);  // nonzero biases
  }
  const TrainingSample* batch[] = {&sample};
  std::vector<std::pair<std::size_t, std::size_t>> pairs;
  for (int i = 0; i < 8; ++i) {
    pairs.emplace_back(pick(rng, 0, 7), pick(rng, 8, 10));
  }
  ObjectiveConfig cfg;
  const double ew = uniform(rng, 0.2, 1.0);
  std::vector<double> grad;
  const LossBreakdown base = evaluate_objective(params, batch, cfg, ew, pairs, &grad);
  const auto pattern = relu_pattern(params, sample.features);

  std::vector<std::size_t> idx(params.size());
  std::iota(idx.begin(), idx.end(), 0);
  if (!full_sweep) {
    std::shuffle(idx.begin(), idx.end(), rng);
    idx.resize(100);
  }
  const double h = kHeadStep;
  HeadParams work = params;
  for (std::size_t i : idx) {
    const double x0 = params.flat()[i];
    work.flat()[i] = x0 + h;
    const bool kink_up = relu_pattern(work, sample.features) != pattern;
    const double up = evaluate_objective(work, batch, cfg, ew, pairs, nullptr, &base).total;
    work.flat()[i] = x0 - h;
    const bool kink_down = relu_pattern(work, sample.features) != pattern;
    const double down = evaluate_objective(work, batch, cfg, ew, pairs, nullptr, &base).total;
    work.flat()[i] = x0;
    if (kink_up || kink_down) {
      ++r.skipped;
      continue;
    }
    const double num = (up - down) / (2.0 * h);
    r.max_rel_error = std::max(r.max_rel_error, gradient_relative_error(scale * grad[i], num));
    ++r.components;
  }
}

using CheckFn = void (*)(Rng&, double, GradCheckResult&);

struct NamedCheck {
  const char* name;
  CheckFn fn;
};

constexpr NamedCheck kChecks[] = {
    {"dirichlet_uncertainty", check_dirichlet_uncertainty},
    {"seg", check_seg},
    {"uniform", check_uniform},
    {"adaptive", check_adaptive},
    {"contrastive", check_contrastive},
    {"softmax_cross_entropy", check_softmax_ce},
    {"pull", check_pull},
    {"push", check_push},
    {"proto", check_proto},
    {"var_reg", check_var_reg},
    {"center", check_center},
};

}  // namespace

const std::vector<std::string>& gradient_check_names() {
  static const std::vector<std::string> names = [] {
    std::vector<std::string> v;
    for (const auto& c : kChecks) {
      v.emplace_back(c.name);
    }
    v.emplace_back("head_dirichlet");
    v.emplace_back("head_softmax");
    return v;
  }();
  return names;
}

std::vector<GradCheckResult> run_gradient_checks(const GradCheckConfig& cfg) {
  const auto& names = gradient_check_names();
  if (!cfg.corrupt.empty() && std::find(names.begin(), names.end(), cfg.corrupt) == names.end()) {
    throw ConfigError("gradcheck.corrupt names no check: " + cfg.corrupt);
  }
  if (cfg.cases == 0 || !(cfg.tolerance > 0.0)) {
    throw ConfigError("gradcheck needs cases >= 1 and tolerance > 0");
  }
  std::vector<GradCheckResult> results;
  std::uint64_t stream = 0;
  auto run = [&](const std::string& name, const std::function<void(Rng&, double,
                                                                     GradCheckResult&, std::size_t)>&
                                              body) {
    GradCheckResult r;
    r.name = name;
    const double scale = cfg.corrupt == name ? 1.01 : 1.0;
    Rng rng(cfg.seed * 0x9E3779B97F4A7C15ull + ++stream);
    for (std::size_t c = 0; c < cfg.cases; ++c) {
      body(rng, scale, r, c);
      ++r.cases;
    }
    r.passed = r.components > 0 && r.max_rel_error < cfg.tolerance;
    results.push_back(r);
  };
  for (const auto& check : kChecks) {
    run(check.name, [&](Rng& rng, double s, GradCheckResult& r, std::size_t) {
      check.fn(rng, s, r);
    });
  }
  run("head_dirichlet", [](Rng& rng, double s, GradCheckResult& r, std::size_t c) {
    check_head(rng, s, r, SemanticMode::kDirichlet, c == 0);
  });
  run("head_softmax", [](Rng& rng, double s, GradCheckResult& r, std::size_t c) {
    check_head(rng, s, r, SemanticMode::kSoftmax, c == 0);
  });
  return results;
}

}  // namespace evipan
