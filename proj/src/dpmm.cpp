#include "repdensity/dpmm.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <random>
#include <string>
#include <unordered_map>

#include "repdensity/detail/binary_io.hpp"
#include "repdensity/errors.hpp"

namespace repdensity {

namespace {

constexpr ComponentId kUnassigned = std::numeric_limits<ComponentId>::max();
constexpr ComponentId kNewComponent = kNewComponentId;
constexpr std::size_t kDriftCheckEvery = 50;
constexpr double kDriftTolerance = 1e-6;
constexpr char kArchiveMagic[5] = "DPSS";
constexpr std::uint16_t kArchiveVersion = 1;

Eigen::MatrixXd member_rows(const ChainState& state, const Eigen::Ref<const Eigen::MatrixXd>& data,
                            ComponentId id) {
  std::vector<Eigen::Index> members;
  for (std::size_t i = 0; i < state.assignments.size(); ++i) {
    if (state.assignments[i] == id) members.push_back(static_cast<Eigen::Index>(i));
  }
  Eigen::MatrixXd rows(static_cast<Eigen::Index>(members.size()), data.cols());
  for (std::size_t r = 0; r < members.size(); ++r) rows.row(static_cast<Eigen::Index>(r)) = data.row(members[r]);
  return rows;
}

// Scratch buffers reused across moves within a sweep.
struct MoveScratch {
  std::vector<ComponentId> ids;
  std::vector<double> log_weights;
  Eigen::VectorXd work;
};

// Takes observation i out of its component; empty components are dropped.
void detach(ChainState& state, const Eigen::Ref<const Eigen::MatrixXd>& data, const NIWParams& prior,
            std::size_t i) {
  const ComponentId id = state.assignments[i];
  state.assignments[i] = kUnassigned;
  auto it = state.components.find(id);
  if (it->second.stats.count() == 1) {
    state.components.erase(it);
    return;
  }
  try {
    it->second.stats.remove(data.row(static_cast<Eigen::Index>(i)).transpose(), prior);
  } catch (const NumericalError&) {
    it->second.stats = ComponentStats::from_rows(prior, member_rows(state, data, id));
  }
  it->second.refresh(prior);
}

void attach(ChainState& state, const Eigen::Ref<const Eigen::MatrixXd>& data, const NIWParams& prior,
            std::size_t i, ComponentId choice) {
  const auto x = data.row(static_cast<Eigen::Index>(i)).transpose();
  if (choice == kNewComponent) {
    choice = state.next_id++;
    ComponentStats stats(prior);
    stats.add(x, prior);
    state.components.emplace(choice, ComponentEntry(std::move(stats), prior));
  } else {
    auto& entry = state.components.at(choice);
    entry.stats.add(x, prior);
    entry.refresh(prior);
  }
  state.assignments[i] = choice;
}

std::size_t sample_from_log_weights(const std::vector<double>& log_weights, Rng& rng) {
  const double top = *std::max_element(log_weights.begin(), log_weights.end());
  double total = 0.0;
  for (double lw : log_weights) total += std::exp(lw - top);
  const double u = std::uniform_real_distribution<double>(0.0, total)(rng);
  double acc = 0.0;
  for (std::size_t k = 0; k < log_weights.size(); ++k) {
    acc += std::exp(log_weights[k] - top);
    if (u < acc) return k;
  }
  return log_weights.size() - 1;
}

void fill_log_weights(const ChainState& state, const Eigen::Ref<const Eigen::VectorXd>& x,
                      const StudentT& prior_predictive, MoveScratch& scratch) {
  scratch.ids.clear();
  scratch.log_weights.clear();
  for (const auto& [id, entry] : state.components) {
    scratch.ids.push_back(id);
    scratch.log_weights.push_back(std::log(static_cast<double>(entry.stats.count())) +
                                  entry.predictive.log_pdf(x, scratch.work));
  }
  scratch.ids.push_back(kNewComponent);
  scratch.log_weights.push_back(std::log(state.alpha) + prior_predictive.log_pdf(x, scratch.work));
}

// Draws from p(c_i = k | rest) proportional to n_k t_k(x) and alpha t_0(x).
ComponentId choose(const ChainState& state, const Eigen::Ref<const Eigen::VectorXd>& x,
                   const StudentT& prior_predictive, Rng& rng, MoveScratch& scratch) {
  fill_log_weights(state, x, prior_predictive, scratch);
  return scratch.ids[sample_from_log_weights(scratch.log_weights, rng)];
}

void check_data(const Eigen::Ref<const Eigen::MatrixXd>& data, const NIWParams& prior) {
  if (data.cols() != prior.mu0.size()) {
    throw ParameterError("data dimension " + std::to_string(data.cols()) + " does not match prior dimension " +
                         std::to_string(prior.mu0.size()));
  }
}

// Cheap per-move check: counts sum to n and no empty component survives.
void debug_check_counts([[maybe_unused]] const ChainState& state) {
#ifndef NDEBUG
  std::size_t total = 0;
  for (const auto& [id, entry] : state.components) {
    if (entry.stats.count() == 0) throw NumericalError("empty component retained");
    total += entry.stats.count();
  }
  if (total != state.size()) throw NumericalError("component counts do not sum to n");
#endif
}

}  // namespace

AssignmentProbabilities assignment_probabilities(const ChainState& state, const Eigen::Ref<const Eigen::VectorXd>& x,
                                                 const NIWParams& prior) {
  const StudentT prior_predictive = predictive_distribution(ComponentStats(prior), prior);
  MoveScratch scratch;
  fill_log_weights(state, x, prior_predictive, scratch);
  const double top = *std::max_element(scratch.log_weights.begin(), scratch.log_weights.end());
  AssignmentProbabilities out;
  out.ids = scratch.ids;
  double total = 0.0;
  for (double lw : scratch.log_weights) total += std::exp(lw - top);
  for (double lw : scratch.log_weights) out.probabilities.push_back(std::exp(lw - top) / total);
  return out;
}

void SamplerConfig::validate() const {
  if (sweeps == 0) throw ParameterError("sweeps must be positive");
  if (burn_in >= sweeps) throw ParameterError("burn_in must be smaller than sweeps");
  if (thin < 1) throw ParameterError("thin must be at least 1");
  if (block_size < 1) throw ParameterError("block_size must be at least 1");
}

void ChainState::check_invariants() const {
  if (!(alpha > 0.0) || !std::isfinite(alpha)) throw NumericalError("alpha must be positive");
  std::unordered_map<ComponentId, std::size_t> counts;
  for (auto id : assignments) {
    if (components.find(id) == components.end()) {
      throw NumericalError("assignment refers to a missing component");
    }
    ++counts[id];
  }
  for (const auto& [id, entry] : components) {
    if (entry.stats.count() == 0) throw NumericalError("empty component retained");
    if (counts[id] != entry.stats.count()) throw NumericalError("component count disagrees with assignments");
  }
}

ChainState init_chain(const Eigen::Ref<const Eigen::MatrixXd>& data, const NIWParams& prior,
                      const SamplerConfig& config, Rng& rng) {
  config.validate();
  if (data.rows() == 0) throw ParameterError("init_chain: empty data");
  check_data(data, prior);
  ChainState state;
  state.alpha = std::gamma_distribution<double>(1.0, 1.0)(rng);
  state.assignments.assign(static_cast<std::size_t>(data.rows()), ComponentId{0});
  state.components.emplace(ComponentId{0}, ComponentEntry(ComponentStats::from_rows(prior, data), prior));
  state.next_id = 1;
  return state;
}

ChainState init_chain(const Eigen::Ref<const Eigen::MatrixXd>& data, const NIWParams& prior,
                      const SamplerConfig& config) {
  Rng rng = make_rng(config.seed);
  return init_chain(data, prior, config, rng);
}

void plain_gibbs_sweep(ChainState& state, const Eigen::Ref<const Eigen::MatrixXd>& data,
                       const NIWParams& prior, Rng& rng) {
  const StudentT prior_predictive = predictive_distribution(ComponentStats(prior), prior);
  MoveScratch scratch;
  for (std::size_t i = 0; i < state.size(); ++i) {
    detach(state, data, prior, i);
    const ComponentId choice =
        choose(state, data.row(static_cast<Eigen::Index>(i)).transpose(), prior_predictive, rng, scratch);
    attach(state, data, prior, i, choice);
    debug_check_counts(state);
  }
  ++state.step_index;
}

void block_gibbs_sweep(ChainState& state, const Eigen::Ref<const Eigen::MatrixXd>& data,
                       const NIWParams& prior, Rng& rng, std::size_t block_size) {
  if (block_size < 1) throw ParameterError("block size must be at least 1");
  const StudentT prior_predictive = predictive_distribution(ComponentStats(prior), prior);
  std::vector<std::size_t> order(state.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::shuffle(order.begin(), order.end(), rng);

  MoveScratch scratch;
  std::vector<ComponentId> choices;
  for (std::size_t start = 0; start < order.size(); start += block_size) {
    const std::size_t stop = std::min(order.size(), start + block_size);
    for (std::size_t k = start; k < stop; ++k) detach(state, data, prior, order[k]);
    choices.clear();
    for (std::size_t k = start; k < stop; ++k) {
      choices.push_back(choose(state, data.row(static_cast<Eigen::Index>(order[k])).transpose(),
                               prior_predictive, rng, scratch));
    }
    for (std::size_t k = start; k < stop; ++k) attach(state, data, prior, order[k], choices[k - start]);
    debug_check_counts(state);
  }
  ++state.step_index;
}

double draw_alpha(double current, std::size_t components, std::size_t n, Rng& rng) {
  // Gamma(a, b) prior with a = b = 1 (rate parameterisation).
  constexpr double a = 1.0;
  constexpr double b = 1.0;
  const double k = static_cast<double>(components);
  const double nn = static_cast<double>(n);
  const double g1 = std::gamma_distribution<double>(current + 1.0, 1.0)(rng);
  const double g2 = std::gamma_distribution<double>(nn, 1.0)(rng);
  const double eta = g1 / (g1 + g2);
  const double rate = b - std::log(eta);
  const double odds = (a + k - 1.0) / (nn * rate);
  const bool upper = std::uniform_real_distribution<double>(0.0, 1.0)(rng) < odds / (1.0 + odds);
  const double shape = upper ? a + k : a + k - 1.0;
  const double alpha = std::gamma_distribution<double>(shape, 1.0 / rate)(rng);
  // Guard against a zero draw from a tiny-shape gamma.
  return std::max(alpha, std::numeric_limits<double>::min());
}

void resample_alpha(ChainState& state, Rng& rng) {
  if (state.components.empty()) throw ParameterError("resample_alpha needs at least one component");
  state.alpha = draw_alpha(state.alpha, state.components.size(), state.size(), rng);
}

double stats_drift(const ChainState& state, const Eigen::Ref<const Eigen::MatrixXd>& data,
                   const NIWParams& prior) {
  double worst = 0.0;
  for (const auto& [id, entry] : state.components) {
    worst = std::max(worst, entry.stats.drift_from(prior, member_rows(state, data, id)));
  }
  return worst;
}

void rebuild_stats(ChainState& state, const Eigen::Ref<const Eigen::MatrixXd>& data, const NIWParams& prior) {
  for (auto& [id, entry] : state.components) {
    entry.stats = ComponentStats::from_rows(prior, member_rows(state, data, id));
    entry.refresh(prior);
  }
}

std::vector<Snapshot> run(const Eigen::Ref<const Eigen::MatrixXd>& data, const NIWParams& prior,
                          const SamplerConfig& config, const SweepObserver& observer) {
  config.validate();
  Rng rng = make_rng(config.seed);
  ChainState state = init_chain(data, prior, config, rng);
  std::vector<Snapshot> snapshots;
  snapshots.reserve(config.retained_count());
  for (std::size_t sweep = 0; sweep < config.sweeps; ++sweep) {
    block_gibbs_sweep(state, data, prior, rng, config.block_size);
    if (config.resample_alpha) resample_alpha(state, rng);
#ifndef NDEBUG
    state.check_invariants();
#endif
    if ((sweep + 1) % kDriftCheckEvery == 0 && stats_drift(state, data, prior) > kDriftTolerance) {
      rebuild_stats(state, data, prior);
    }
    if (observer) observer(sweep, state);
    if (config.retains(sweep)) snapshots.push_back(Snapshot{state.alpha, state.assignments});
  }
  return snapshots;
}

void write_snapshot_archive(const SnapshotArchive& archive, std::ostream& out) {
  out.write(kArchiveMagic, 4);
  detail::write_le<std::uint16_t>(out, kArchiveVersion);
  detail::write_le<std::uint16_t>(out, 0);
  detail::write_le<std::uint64_t>(out, archive.n);
  detail::write_le<std::uint64_t>(out, archive.d);
  detail::write_le<std::uint64_t>(out, archive.snapshots.size());
  for (const auto& snap : archive.snapshots) {
    if (snap.assignments.size() != archive.n) {
      throw ParameterError("snapshot assignment count does not match archive n");
    }
    detail::write_le<double>(out, snap.alpha);
    for (auto id : snap.assignments) detail::write_le<std::uint64_t>(out, id);
  }
  if (!out) throw IoError("failed writing snapshot archive");
}

void write_snapshot_archive(const SnapshotArchive& archive, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  write_snapshot_archive(archive, out);
}

SnapshotArchive read_snapshot_archive(std::istream& in, const std::string& source) {
  detail::expect_magic(in, kArchiveMagic, source);
  const auto version = detail::read_le<std::uint16_t>(in, "version");
  if (version != kArchiveVersion) throw FormatError(source + ": unsupported archive version");
  detail::read_le<std::uint16_t>(in, "reserved");
  SnapshotArchive archive;
  archive.n = detail::read_le<std::uint64_t>(in, "n");
  archive.d = detail::read_le<std::uint64_t>(in, "d");
  const auto count = detail::read_le<std::uint64_t>(in, "snapshot count");
  if (archive.n > (std::uint64_t{1} << 36) || count > (std::uint64_t{1} << 32)) {
    throw CorruptionError(source + ": implausible archive header");
  }
  archive.snapshots.resize(count);
  for (auto& snap : archive.snapshots) {
    snap.alpha = detail::read_le<double>(in, "alpha");
    snap.assignments.resize(archive.n);
    for (auto& id : snap.assignments) id = detail::read_le<std::uint64_t>(in, "assignments");
  }
  return archive;
}

SnapshotArchive read_snapshot_archive(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  return read_snapshot_archive(in, path.string());
}

std::vector<std::size_t> canonical_partition(const std::vector<ComponentId>& assignments) {
  std::unordered_map<ComponentId, std::size_t> relabel;
  std::vector<std::size_t> out;
  out.reserve(assignments.size());
  for (auto id : assignments) {
    auto [it, inserted] = relabel.try_emplace(id, relabel.size());
    out.push_back(it->second);
  }
  return out;
}

}  // namespace repdensity
