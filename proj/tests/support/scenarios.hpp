#pragma once

// Synthetic experiments shared by the unit and acceptance suites.

#include <cmath>
#include <vector>

#include <Eigen/Core>

#include "oracles.hpp"
#include "repdensity/dpmm.hpp"
#include "repdensity/predictive.hpp"
#include "repdensity/representation.hpp"
#include "repdensity/synthetic.hpp"

namespace scenario {

using namespace repdensity;

inline Eigen::MatrixXd six_points() {
  Eigen::MatrixXd data(6, 1);
  data << -1.6, -1.1, -0.7, 0.9, 1.3, 2.4;
  return data;
}

inline NIWParams six_point_prior() {
  return NIWParams{Eigen::VectorXd::Zero(1), 0.5, 3.0, Eigen::MatrixXd::Constant(1, 1, 0.6)};
}

enum class Kernel { Plain, Block };

struct PartitionComparison {
  double total_variation = 0.0;
  std::size_t partitions = 0;
};

/// Collapsed Gibbs with alpha fixed at 1 on six 1-D points; compares the
/// frequency of every visited partition with the enumerated posterior. Only
/// the plain kernel and the block kernel with b = 1 target it exactly.
inline PartitionComparison exact_partition_check(std::size_t sweeps, std::uint64_t seed,
                                                 Kernel kernel = Kernel::Plain) {
  const Eigen::MatrixXd data = six_points();
  const NIWParams prior = six_point_prior();
  const double alpha = 1.0;
  const auto partitions = oracle::set_partitions(6);
  const auto exact = oracle::partition_posterior({prior.mu0, prior.kappa0, prior.nu0, prior.psi0}, data, alpha,
                                                 partitions);
  std::map<std::vector<std::size_t>, std::size_t> index;
  for (std::size_t p = 0; p < partitions.size(); ++p) index[partitions[p]] = p;

  SamplerConfig config;
  config.seed = seed;
  Rng rng = make_rng(seed);
  ChainState state = init_chain(data, prior, config, rng);
  state.alpha = alpha;
  const auto step = [&] {
    if (kernel == Kernel::Plain) {
      plain_gibbs_sweep(state, data, prior, rng);
    } else {
      block_gibbs_sweep(state, data, prior, rng, 1);
    }
  };
  for (int warm = 0; warm < 100; ++warm) step();
  std::vector<double> freq(partitions.size(), 0.0);
  for (std::size_t s = 0; s < sweeps; ++s) {
    step();
    freq[index.at(canonical_partition(state.assignments))] += 1.0;
  }
  PartitionComparison out;
  out.partitions = partitions.size();
  for (std::size_t p = 0; p < partitions.size(); ++p) {
    out.total_variation += 0.5 * std::abs(freq[p] / static_cast<double>(sweeps) - exact[p]);
  }
  return out;
}

/// Three well separated 2-D clusters, 12 points each.
inline Eigen::MatrixXd three_clusters(std::uint64_t seed) {
  std::vector<GaussianMixture> parts;
  const std::vector<Eigen::Vector2d> centers{{-6.0, 0.0}, {6.0, 0.0}, {0.0, 8.0}};
  Rng rng = make_rng(seed);
  Eigen::MatrixXd data(36, 2);
  for (int c = 0; c < 3; ++c) {
    data.middleRows(c * 12, 12) = GaussianMixture::single(centers[c], Eigen::Matrix2d::Identity()).sample(12, rng);
  }
  return data;
}

/// Average co-clustering indicator over `chains` seeded chains and their
/// retained states.
inline Eigen::MatrixXd coclustering(const Eigen::MatrixXd& data, Kernel kernel, std::size_t block_size,
                                    std::size_t chains, std::uint64_t seed_base,
                                    int sweeps = 1000) {
  const NIWParams prior = derive_prior(data);
  const auto n = data.rows();
  Eigen::MatrixXd acc = Eigen::MatrixXd::Zero(n, n);
  std::size_t states = 0;
  for (std::size_t chain = 0; chain < chains; ++chain) {
    SamplerConfig config;
    config.seed = seed_base + chain;
    Rng rng = make_rng(config.seed);
    ChainState state = init_chain(data, prior, config, rng);
    for (int sweep = 0; sweep < sweeps; ++sweep) {
      if (kernel == Kernel::Plain) {
        plain_gibbs_sweep(state, data, prior, rng);
      } else {
        block_gibbs_sweep(state, data, prior, rng, block_size);
      }
      resample_alpha(state, rng);
      if (sweep >= sweeps / 3 && sweep % 2 == 0) {
        for (Eigen::Index i = 0; i < n; ++i)
          for (Eigen::Index j = 0; j < n; ++j)
            acc(i, j) += state.assignments[static_cast<std::size_t>(i)] == state.assignments[static_cast<std::size_t>(j)];
        ++states;
      }
    }
  }
  return acc / static_cast<double>(states);
}

/// Three-component 2-D mixture used for density recovery.
inline GaussianMixture recovery_mixture() {
  Eigen::Matrix2d a, b, c;
  a << 1.0, 0.3, 0.3, 0.6;
  b << 0.5, -0.2, -0.2, 1.2;
  c << 0.8, 0.0, 0.0, 0.8;
  return GaussianMixture({0.4, 0.35, 0.25}, {Eigen::Vector2d(-4.0, 0.0), Eigen::Vector2d(3.5, 1.0), Eigen::Vector2d(0.0, 5.0)},
                         {a, b, c});
}

struct RecoveryResult {
  double fitted_heldout_ll = 0.0;
  double true_heldout_ll = 0.0;
  KLEstimate kl_to_truth;
};

inline RecoveryResult density_recovery(const SamplerConfig& config, std::uint64_t data_seed) {
  const auto truth = recovery_mixture();
  Rng rng = make_rng(data_seed);
  const Eigen::MatrixXd train = truth.sample(900, rng);
  const Eigen::MatrixXd test = truth.sample(5000, rng);
  const auto model = fit_predictive_model(train, derive_prior(train), config);
  RecoveryResult out;
  out.fitted_heldout_ll = posterior_predictive_logpdf_rows(model, test).mean();
  out.true_heldout_ll = truth.log_pdf_rows(test).mean();
  KLConfig kl;
  kl.samples_per_snapshot = 1024;
  kl.seed = data_seed + 1;
  out.kl_to_truth = kl_to_reference(model, [&](const Eigen::VectorXd& x) { return truth.log_pdf(x); }, kl);
  return out;
}

}  // namespace scenario
