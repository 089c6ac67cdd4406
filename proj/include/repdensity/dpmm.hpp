#pragma once

// Collapsed Gibbs sampling for a Dirichlet-process mixture of Gaussians with
// an NIW base measure. Component parameters are integrated out; the chain
// state is the assignment vector plus per-component sufficient statistics.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <map>
#include <vector>

#include <Eigen/Core>

#include "repdensity/niw.hpp"
#include "repdensity/random.hpp"

namespace repdensity {

using ComponentId = std::uint64_t;

struct SamplerConfig {
  std::size_t sweeps = 400;
  std::size_t burn_in = 320;
  std::size_t thin = 4;
  std::size_t block_size = 4;
  std::uint64_t seed = 0;
  bool resample_alpha = true;

  /// burn_in < sweeps, thin >= 1, block_size >= 1.
  void validate() const;
  /// Sweep s (0-based) is retained iff s >= burn_in and (s - burn_in) % thin == 0.
  bool retains(std::size_t sweep) const { return sweep >= burn_in && (sweep - burn_in) % thin == 0; }
  std::size_t retained_count() const { return sweeps <= burn_in ? 0 : (sweeps - burn_in - 1) / thin + 1; }
};

/// A component's statistics together with its cached predictive density.
struct ComponentEntry {
  ComponentStats stats;
  StudentT predictive;

  ComponentEntry(ComponentStats s, const NIWParams& prior)
      : stats(std::move(s)), predictive(predictive_distribution(stats, prior)) {}
  void refresh(const NIWParams& prior) { predictive = predictive_distribution(stats, prior); }
};

struct ChainState {
  std::vector<ComponentId> assignments;
  std::map<ComponentId, ComponentEntry> components;
  double alpha = 1.0;
  std::uint64_t step_index = 0;
  ComponentId next_id = 0;

  std::size_t size() const { return assignments.size(); }
  std::size_t component_count() const { return components.size(); }

  /// Throws NumericalError if an assignment points at a missing component,
  /// counts disagree with assignments, an empty component is retained, or
  /// alpha is not positive.
  void check_invariants() const;
};

/// Retained chain state: assignments and concentration only.
struct Snapshot {
  double alpha = 1.0;
  std::vector<ComponentId> assignments;

  bool operator==(const Snapshot&) const = default;
};

/// Id reported for the "open a new component" option.
inline constexpr ComponentId kNewComponentId = ~ComponentId{0} - 1;

/// Normalised conditional over assignment options for an observation that is
/// not currently in `state`: existing components in id order, proportional to
/// n_k t_k(x), then kNewComponentId proportional to alpha t_0(x).
struct AssignmentProbabilities {
  std::vector<ComponentId> ids;
  std::vector<double> probabilities;
};

AssignmentProbabilities assignment_probabilities(const ChainState& state, const Eigen::Ref<const Eigen::VectorXd>& x,
                                                 const NIWParams& prior);

/// All rows in one component; alpha ~ Gamma(1, 1) from `rng`.
ChainState init_chain(const Eigen::Ref<const Eigen::MatrixXd>& data, const NIWParams& prior,
                      const SamplerConfig& config, Rng& rng);
/// As above with a stream seeded from config.seed.
ChainState init_chain(const Eigen::Ref<const Eigen::MatrixXd>& data, const NIWParams& prior,
                      const SamplerConfig& config);

/// One pass in index order, resampling each assignment from its
/// Chinese-restaurant conditional given all other assignments.
void plain_gibbs_sweep(ChainState& state, const Eigen::Ref<const Eigen::MatrixXd>& data,
                       const NIWParams& prior, Rng& rng);

/// One pass over a fresh random permutation cut into consecutive blocks of
/// `block_size`. Each block is removed, its members are drawn independently
/// given the outside state (each "new" draw opening its own component), and
/// then reinserted.
void block_gibbs_sweep(ChainState& state, const Eigen::Ref<const Eigen::MatrixXd>& data,
                       const NIWParams& prior, Rng& rng, std::size_t block_size);

/// Escobar-West auxiliary-variable update of alpha under a Gamma(1, 1) prior.
void resample_alpha(ChainState& state, Rng& rng);

/// Draw of alpha from its conditional given K components and n observations;
/// exposed for testing.
double draw_alpha(double current, std::size_t components, std::size_t n, Rng& rng);

/// Largest relative deviation of any component's maintained scale factor
/// from a batch recomputation.
double stats_drift(const ChainState& state, const Eigen::Ref<const Eigen::MatrixXd>& data,
                   const NIWParams& prior);

/// Recomputes every component's statistics from its member rows.
void rebuild_stats(ChainState& state, const Eigen::Ref<const Eigen::MatrixXd>& data, const NIWParams& prior);

/// Optional per-sweep observer, called after each sweep (and alpha update).
using SweepObserver = std::function<void(std::size_t sweep, const ChainState&)>;

/// Runs `config.sweeps` block sweeps and returns the retained snapshots.
std::vector<Snapshot> run(const Eigen::Ref<const Eigen::MatrixXd>& data, const NIWParams& prior,
                          const SamplerConfig& config, const SweepObserver& observer = {});

/// Snapshots plus the (n, d) of the data they were fitted to.
struct SnapshotArchive {
  std::uint64_t n = 0;
  std::uint64_t d = 0;
  std::vector<Snapshot> snapshots;
};

void write_snapshot_archive(const SnapshotArchive& archive, std::ostream& out);
void write_snapshot_archive(const SnapshotArchive& archive, const std::filesystem::path& path);
SnapshotArchive read_snapshot_archive(std::istream& in, const std::string& source = "<stream>");
SnapshotArchive read_snapshot_archive(const std::filesystem::path& path);

/// Canonical relabelling: components numbered 0, 1, ... in order of first
/// appearance.
std::vector<std::size_t> canonical_partition(const std::vector<ComponentId>& assignments);

}  // namespace repdensity
