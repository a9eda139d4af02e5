#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

#include "freespec/types.hpp"

namespace freespec {

// Config-driven Monte Carlo sweep over one grid parameter.  The meaning of
// the grid value depends on the kind:
//   spiked-band  spike strength theta; banded noise on `dim` sites, width `width`
//   bbp-sweep    spike strength theta; dense isotropic noise on `dim` sites
//   block-phase  scale multiplying the base variance profile `b`
//   kikuchi      signal strength in threshold units (lambda = g / sqrt(k_star))
//   decode       effective signal theta; flip probability derived from it
//   csbm         combined signal kappa = lambda^2 + mu^2/gamma, split 30/70
//   scov         spike lambda of the population covariance (norm statistics)
//   scov-error   spike lambda (error-matrix extreme eigenvalue statistics)
struct ExperimentConfig {
  std::string kind;
  std::vector<double> grid;      // nonempty
  int trials = 1;                // >= 1
  uint64_t master_seed = 0;
  std::string output = "experiment";  // stem for CSV/summary/plot files
  int threads = 0;               // 0: FREESPEC_THREADS env, else logical cores
  int dim = 0;                   // d; n for kikuchi/csbm/scov kinds
  int width = 51;                // band width (spiked-band) or graph degree (decode)
  int p_dim = 0;                 // p: tensor order / context dim / covariance rows
  int ell = 0;                   // kikuchi subset level
  RMat b;                        // block-phase base profile, q x q
  std::vector<int> block_sizes;  // block-phase partition of [dim]
  bool rademacher = true;        // spiked-band noise law (false: Gaussian)
  bool hausdorff = false;        // record spectrum/support Hausdorff distance
                                 // (spiked-band, bbp-sweep; dim <= 200)
};

struct TrialRecord {
  uint64_t config_hash = 0;
  int grid_index = 0;
  double grid_value = 0;
  int trial = 0;
  uint64_t seed = 0;  // derived stream key for (master_seed, grid, trial)
  double lambda_max = 0;
  double lambda_2 = 0;
  double overlap = 0;    // NaN when the kind has no signal-overlap notion
  double hausdorff = 0;  // NaN unless requested and supported
  double theory_value = 0;
  double theory_error_radius = 0;  // NaN when no radius is predicted
  double wall_ms = 0;
};

struct GridSummary {
  double grid_value = 0;
  int trials = 0;
  double lambda_max_mean = 0;
  double lambda_max_std = 0;
  double lambda_max_q25 = 0;
  double lambda_max_median = 0;
  double lambda_max_q75 = 0;
  double lambda_2_mean = 0;
  double overlap_mean = 0;
  double hausdorff_mean = 0;
  double theory_value = 0;
  double theory_error_radius = 0;
  double overlap_theory = 0;  // (1 - 1/theta^2)_+ where applicable, else NaN
};

struct ExperimentSummary {
  std::string kind;
  std::string output_stem;
  uint64_t config_hash = 0;
  uint64_t master_seed = 0;
  std::vector<GridSummary> grid;
  // Named spectral thresholds for the covariance kinds: per grid value, in
  // order H-, H+, S.
  std::vector<std::pair<std::string, double>> markers;
};

struct ExperimentResult {
  std::vector<TrialRecord> records;  // sorted by (grid_index, trial)
  ExperimentSummary summary;
};

ExperimentConfig config_from_json(const std::string& text);
// Canonical serialization of the scientific content (excludes output path and
// thread count, which must not change the results).
std::string config_to_json(const ExperimentConfig& cfg);
uint64_t config_hash(const ExperimentConfig& cfg);
// threads field if positive, else FREESPEC_THREADS, else logical core count.
int resolve_threads(const ExperimentConfig& cfg);

// Runs trials concurrently; every record is a pure function of
// (config, master_seed), so reruns and thread-count changes reproduce the
// same sorted record set byte for byte.
ExperimentResult run_experiment(const ExperimentConfig& cfg);

// Fixed schema: grid_value,trial,seed,lambda_max,lambda_2,overlap,hausdorff,
// theory_value,theory_error_radius.  Floats at 17 significant digits, rows
// sorted by (grid_value index, trial).
void write_csv(std::ostream& os, const std::vector<TrialRecord>& records);
std::string summary_to_json(const ExperimentSummary& s);
// Declarative gnuplot-dialect description (series, axes, threshold markers);
// nothing in the toolkit executes it.  Empty summary yields header comments only.
std::string emit_plot_script(const ExperimentSummary& s, const std::string& style);

}  // namespace freespec
