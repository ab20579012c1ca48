#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "rahn/data.hpp"

namespace rahn::rcm {

using Feature = std::array<double, 2>;  // standardized [mean, std] per entity

struct ClusterAssignment {
  std::size_t k;
  std::vector<std::size_t> labels;     // per entity
  std::vector<Feature> centroids;      // per cluster
  double inertia;                      // sum of squared distances
  std::vector<double> inertia_trace;   // one value per Lloyd iteration
};

struct ReliableClusterStats {
  std::size_t reliable_cluster_index;
  double mu_r;     // mean of QoS observations in the reliable cluster
  double sigma_r;  // population standard deviation of the same
};

struct FeedbackVector {
  std::uint64_t po = 0;
  std::uint64_t ne = 0;
};

struct Reputation {
  double value;  // in [0, 1]
};

// Per-entity [mean, std] of observed values, standardized per dimension.
// Entities with no observations get the global statistics before
// standardization.
std::vector<Feature> entity_features(const data::QosMatrix& m,
                                     data::EntityKind kind);

// Lloyd iterations from k-means++ seeding until assignment fixpoint or
// max_iter. Empty clusters are re-seeded with the point farthest from its
// centroid.
ClusterAssignment kmeans(const std::vector<Feature>& features, std::size_t k,
                         std::uint64_t seed, std::size_t max_iter = 100);

// Serial reference for the parallel assignment step; kept for testing.
ClusterAssignment kmeans_serial(const std::vector<Feature>& features,
                                std::size_t k, std::uint64_t seed,
                                std::size_t max_iter = 100);

// Maximal-cardinality cluster (ties -> lowest index) plus the mean and
// population std of all observations belonging to its entities.
ReliableClusterStats reliable_cluster(const ClusterAssignment& a,
                                      const data::QosMatrix& m,
                                      data::EntityKind kind);

// Positive iff mu_r - 3 sigma_r < q < mu_r + 3 sigma_r. When sigma_r == 0,
// positive iff |q - mu_r| <= 1e-9.
std::vector<FeedbackVector> classify_feedback(const data::QosMatrix& m,
                                              const ReliableClusterStats& stats,
                                              data::EntityKind kind);

// Re = e^{beta po} / (e^{beta po} + e^{beta ne}), evaluated in the
// overflow-safe sigmoid form 1 / (1 + e^{-beta (po - ne)}).
Reputation reputation(const FeedbackVector& f, double beta);

struct ReputationReport {
  ReliableClusterStats stats;
  std::vector<std::size_t> cluster_sizes;
  std::vector<FeedbackVector> feedback;
  std::vector<double> reputations;  // per entity
};

// Full RCM pipeline for one entity kind.
ReputationReport compute_reputations(const data::QosMatrix& m,
                                     data::EntityKind kind, std::size_t k,
                                     double beta, std::uint64_t seed,
                                     std::size_t max_iter = 100);

}  // namespace rahn::rcm
