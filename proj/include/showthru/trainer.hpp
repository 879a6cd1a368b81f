#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "showthru/image.hpp"
#include "showthru/metrics.hpp"
#include "showthru/network.hpp"

namespace showthru {

struct TrainConfig {
  FKind mode = FKind::nonlinear;
  int epochs = 400;
  int priming_epochs = 100;  // nonlinear only: epochs with hidden-output
                             // weights clamped to zero
  int train_set_size = 5000;
  double learning_rate = 1e-3;
  uint64_t seed = 0;
  double det_floor = 1e-12;

  static TrainConfig defaults(FKind mode);
  void validate() const;
};

struct ObjectiveStats {
  double value = 0.0;
  int clamped_samples = 0;  // samples where |det J_F| hit the floor
};

/// Mean output-entropy objective over the batch:
///   L = (1/N) sum_n [ log|det J_F(x_n)| + sum_i log psi_i'(y_i_n) ].
/// Maximizing L maximizes H(Z) and hence minimizes I(Y): the map x -> z is a
/// composition of F with component-wise psi, so its log-Jacobian splits into
/// the two terms above, and H(X) is a constant of the data.
double objective(const PixelPairSet& batch, const SeparatorModel& model,
                 double det_floor = 1e-12);
ObjectiveStats objective_stats(const PixelPairSet& batch,
                               const SeparatorModel& model,
                               double det_floor = 1e-12);

/// Exact ascent gradient of the objective for every free parameter, in
/// get_params() layout.  Tied parameters accumulate both contributions.
std::vector<double> gradient(const PixelPairSet& batch,
                             const SeparatorModel& model,
                             double det_floor = 1e-12);

/// Full-batch gradient ascent with per-parameter adaptive step sizes on a
/// pre-sampled training set.
SeparatorModel train_on_pairs(const PixelPairSet& batch,
                              const TrainConfig& config);

/// Samples the training pairs from a co-registered, normalized mixture pair
/// (seeded) and trains.
SeparatorModel train(const ImageGray& m1, const ImageGray& m2,
                     const TrainConfig& config);

/// Reconstructs the training set used by train() for a given config and
/// mixture pair (needed to keep evaluation samples disjoint).
PixelPairSet training_set_for(const ImageGray& m1, const ImageGray& m2,
                              const TrainConfig& config);

/// Applies F pixel-wise.  Outputs are not re-ranged; display normalization
/// is a presentation concern.
std::pair<ImageGray, ImageGray> separate(const SeparatorModel& model,
                                         const ImageGray& m1,
                                         const ImageGray& m2);

struct EvalParams {
  int samples = 5000;
  int k = 3;
};

struct RunResult {
  SeparatorModel model;
  QualityReport report;
  PixelPairSet train_set;
  ImageGray y1, y2;
};

/// The ten-run protocol: runs differ only in sub-seeds derived from
/// config.seed (training-set selection and weight initialization).  Each run
/// is scored against the sources on held-out pixels.
std::vector<RunResult> run_series(const ImageGray& m1, const ImageGray& m2,
                                  const ImageGray& s1, const ImageGray& s2,
                                  const TrainConfig& config, int n_runs,
                                  const EvalParams& eval);

}  // namespace showthru
