#include "rahn/rcm.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "rahn/errors.hpp"
#include "rahn/prng.hpp"

namespace rahn::rcm {

namespace {

double sq_dist(const Feature& a, const Feature& b) {
  const double dx = a[0] - b[0];
  const double dy = a[1] - b[1];
  return dx * dx + dy * dy;
}

std::vector<Feature> kmeanspp_seed(const std::vector<Feature>& pts,
                                   std::size_t k, Prng& rng) {
  std::vector<Feature> centroids;
  centroids.reserve(k);
  centroids.push_back(pts[rng.next_below(pts.size())]);
  std::vector<double> d2(pts.size());
  while (centroids.size() < k) {
    double total = 0.0;
    for (std::size_t i = 0; i < pts.size(); ++i) {
      double best = std::numeric_limits<double>::infinity();
      for (const Feature& c : centroids) best = std::min(best, sq_dist(pts[i], c));
      d2[i] = best;
      total += best;
    }
    if (total <= 0.0) {
      // all remaining mass at existing centroids; pick uniformly
      centroids.push_back(pts[rng.next_below(pts.size())]);
      continue;
    }
    double target = rng.next_double() * total;
    std::size_t pick = pts.size() - 1;
    for (std::size_t i = 0; i < pts.size(); ++i) {
      target -= d2[i];
      if (target <= 0.0) {
        pick = i;
        break;
      }
    }
    centroids.push_back(pts[pick]);
  }
  return centroids;
}

ClusterAssignment lloyd(const std::vector<Feature>& features, std::size_t k,
                        std::uint64_t seed, std::size_t max_iter,
                        bool parallel) {
  if (k < 1) throw ConfigError("kmeans: k must be >= 1");
  if (features.size() < k)
    throw ConfigError("kmeans: k exceeds number of entities");
  for (const Feature& f : features)
    if (!std::isfinite(f[0]) || !std::isfinite(f[1]))
      throw ValidationError("kmeans: non-finite feature");

  const std::size_t n = features.size();
  Prng rng(seed);
  ClusterAssignment out;
  out.k = k;
  out.centroids = kmeanspp_seed(features, k, rng);
  out.labels.assign(n, 0);

  std::vector<std::size_t> prev_labels(n, k);  // k is an invalid label
  for (std::size_t iter = 0; iter < max_iter; ++iter) {
    // Assignment step. Each point is independent; the parallel and serial
    // paths produce identical labels.
    const auto assign_one = [&](std::size_t i) {
      double best = std::numeric_limits<double>::infinity();
      std::size_t best_c = 0;
      for (std::size_t c = 0; c < k; ++c) {
        const double d = sq_dist(features[i], out.centroids[c]);
        if (d < best) {
          best = d;
          best_c = c;
        }
      }
      out.labels[i] = best_c;
    };
    if (parallel) {
#pragma omp parallel for schedule(static)
      for (long long i = 0; i < static_cast<long long>(n); ++i)
        assign_one(static_cast<std::size_t>(i));
    } else {
      for (std::size_t i = 0; i < n; ++i) assign_one(i);
    }

    // Update step (serial, so parallel runs stay bit-identical).
    std::vector<Feature> sums(k, {0.0, 0.0});
    std::vector<std::size_t> counts(k, 0);
    for (std::size_t i = 0; i < n; ++i) {
      sums[out.labels[i]][0] += features[i][0];
      sums[out.labels[i]][1] += features[i][1];
      ++counts[out.labels[i]];
    }
    for (std::size_t c = 0; c < k; ++c) {
      if (counts[c] == 0) {
        // re-seed with the point farthest from its centroid
        double worst = -1.0;
        std::size_t worst_i = 0;
        for (std::size_t i = 0; i < n; ++i) {
          const double d = sq_dist(features[i], out.centroids[out.labels[i]]);
          if (d > worst) {
            worst = d;
            worst_i = i;
          }
        }
        out.centroids[c] = features[worst_i];
        out.labels[worst_i] = c;
      } else {
        out.centroids[c] = {sums[c][0] / static_cast<double>(counts[c]),
                            sums[c][1] / static_cast<double>(counts[c])};
      }
    }

    double inertia = 0.0;
    for (std::size_t i = 0; i < n; ++i)
      inertia += sq_dist(features[i], out.centroids[out.labels[i]]);
    out.inertia = inertia;
    out.inertia_trace.push_back(inertia);

    if (out.labels == prev_labels) break;
    prev_labels = out.labels;
  }
  return out;
}

}  // namespace

std::vector<Feature> entity_features(const data::QosMatrix& m,
                                     data::EntityKind kind) {
  if (m.n_entries() == 0)
    throw ValidationError("entity_features: empty matrix");
  const std::size_t n = kind == data::EntityKind::user ? m.n_users()
                                                       : m.n_services();
  std::vector<double> sum(n, 0.0), sum2(n, 0.0);
  std::vector<std::size_t> count(n, 0);
  double gsum = 0.0, gsum2 = 0.0;
  for (const data::Entry& e : m.entries()) {
    const std::size_t i = kind == data::EntityKind::user ? e.user : e.service;
    sum[i] += e.value;
    sum2[i] += e.value * e.value;
    ++count[i];
    gsum += e.value;
    gsum2 += e.value * e.value;
  }
  const double gn = static_cast<double>(m.n_entries());
  const double gmean = gsum / gn;
  const double gstd = std::sqrt(std::max(0.0, gsum2 / gn - gmean * gmean));

  std::vector<Feature> raw(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (count[i] == 0) {
      raw[i] = {gmean, gstd};
    } else {
      const double cn = static_cast<double>(count[i]);
      const double mean = sum[i] / cn;
      raw[i] = {mean, std::sqrt(std::max(0.0, sum2[i] / cn - mean * mean))};
    }
  }

  // standardize per dimension over entities
  for (int dim = 0; dim < 2; ++dim) {
    double s = 0.0, s2 = 0.0;
    for (const Feature& f : raw) {
      s += f[dim];
      s2 += f[dim] * f[dim];
    }
    const double dn = static_cast<double>(n);
    const double mean = s / dn;
    const double sd = std::sqrt(std::max(0.0, s2 / dn - mean * mean));
    for (Feature& f : raw) f[dim] = sd > 0.0 ? (f[dim] - mean) / sd : 0.0;
  }
  return raw;
}

ClusterAssignment kmeans(const std::vector<Feature>& features, std::size_t k,
                         std::uint64_t seed, std::size_t max_iter) {
  return lloyd(features, k, seed, max_iter, true);
}

ClusterAssignment kmeans_serial(const std::vector<Feature>& features,
                                std::size_t k, std::uint64_t seed,
                                std::size_t max_iter) {
  return lloyd(features, k, seed, max_iter, false);
}

ReliableClusterStats reliable_cluster(const ClusterAssignment& a,
                                      const data::QosMatrix& m,
                                      data::EntityKind kind) {
  std::vector<std::size_t> sizes(a.k, 0);
  for (std::size_t label : a.labels) ++sizes[label];
  const std::size_t reliable = static_cast<std::size_t>(
      std::max_element(sizes.begin(), sizes.end()) - sizes.begin());

  double sum = 0.0, sum2 = 0.0;
  std::size_t count = 0;
  for (const data::Entry& e : m.entries()) {
    const std::size_t i = kind == data::EntityKind::user ? e.user : e.service;
    if (a.labels[i] == reliable) {
      sum += e.value;
      sum2 += e.value * e.value;
      ++count;
    }
  }
  if (count == 0)
    throw ValidationError("reliable cluster has no QoS observations");
  const double cn = static_cast<double>(count);
  const double mu = sum / cn;
  const double sigma = std::sqrt(std::max(0.0, sum2 / cn - mu * mu));
  return {reliable, mu, sigma};
}

std::vector<FeedbackVector> classify_feedback(const data::QosMatrix& m,
                                              const ReliableClusterStats& stats,
                                              data::EntityKind kind) {
  constexpr double kDegenerateEps = 1e-9;
  const std::size_t n = kind == data::EntityKind::user ? m.n_users()
                                                       : m.n_services();
  std::vector<FeedbackVector> out(n);
  const double lo = stats.mu_r - 3.0 * stats.sigma_r;
  const double hi = stats.mu_r + 3.0 * stats.sigma_r;
  for (const data::Entry& e : m.entries()) {
    const std::size_t i = kind == data::EntityKind::user ? e.user : e.service;
    const bool positive =
        stats.sigma_r == 0.0 ? std::abs(e.value - stats.mu_r) <= kDegenerateEps
                             : (e.value > lo && e.value < hi);
    if (positive)
      ++out[i].po;
    else
      ++out[i].ne;
  }
  return out;
}

Reputation reputation(const FeedbackVector& f, double beta) {
  if (!(beta > 0.0)) throw ConfigError("reputation: beta must be positive");
  const double x = beta * (static_cast<double>(f.po) - static_cast<double>(f.ne));
  return {1.0 / (1.0 + std::exp(-x))};
}

ReputationReport compute_reputations(const data::QosMatrix& m,
                                     data::EntityKind kind, std::size_t k,
                                     double beta, std::uint64_t seed,
                                     std::size_t max_iter) {
  const auto features = entity_features(m, kind);
  const auto clusters = kmeans(features, k, seed, max_iter);
  ReputationReport report;
  report.stats = reliable_cluster(clusters, m, kind);
  report.cluster_sizes.assign(clusters.k, 0);
  for (std::size_t label : clusters.labels) ++report.cluster_sizes[label];
  report.feedback = classify_feedback(m, report.stats, kind);
  report.reputations.reserve(report.feedback.size());
  for (const FeedbackVector& f : report.feedback)
    report.reputations.push_back(reputation(f, beta).value);
  return report;
}

}  // namespace rahn::rcm
