#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "showthru/image.hpp"

namespace showthru {

/// Monotone intensity remapping in table form: one output value per distinct
/// observed input level.
struct MonotoneMap {
  std::vector<double> inputs;   // sorted ascending, unique
  std::vector<double> outputs;  // monotone along inputs per `increasing`
  bool increasing = true;

  /// Evaluates the table map; exact lookup for observed levels, linear
  /// interpolation (clamped) between them otherwise.
  double operator()(double y) const;
};

/// Q1: plain SNR of the extracted component against its source,
/// 10 log10(var(S) / var(Y - S)), capped at +150 dB.
double q1_snr(const ImageGray& extracted, const ImageGray& source);

/// Least-squares monotone table map from extracted intensities to the
/// source, fitted by weighted pool-adjacent-violators in both orientations;
/// the lower-residual orientation wins.
MonotoneMap fit_monotone_map(const ImageGray& extracted,
                             const ImageGray& source);

/// Q2: SNR after the optimal monotone remapping,
/// 10 log10(var(S) / var(f(Y) - S)), capped at +150 dB.
std::pair<double, MonotoneMap> q2_snr(const ImageGray& extracted,
                                      const ImageGray& source);

/// Kraskov-style k-nearest-neighbor mutual information estimate (the
/// digamma-average form), in bits.  Samples are de-tied with seeded uniform
/// jitter of amplitude 1e-6 before estimation.
double kraskov_mi(const PixelPairSet& samples, int k = 3);

struct Q34 {
  std::array<double, 2> q3_bits;  // MI(Y_i, S_i)
  std::array<double, 2> q4_bits;  // MI(Y_i, S_opposite)
};

/// Q3/Q4 over one set of sampled pixel locations (disjoint from `exclude`
/// when given); the same locations feed all four estimates.
Q34 q3_q4(const ImageGray& y1, const ImageGray& y2, const ImageGray& s1,
          const ImageGray& s2, int eval_samples, uint64_t seed,
          const PixelPairSet* exclude = nullptr, int k = 3);

struct QualityReport {
  struct Component {
    double q1_db = 0, q2_db = 0, q3_bits = 0, q4_bits = 0;
    // Raw MI estimates before the small-negative clamp-to-zero.
    double q3_raw = 0, q4_raw = 0;
  };
  std::array<Component, 2> comp{};
  uint64_t eval_seed = 0;
  int sample_count = 0;
  int k = 3;
};

/// All four quality measures for an extracted pair against the source pair.
QualityReport evaluate_pair(const ImageGray& y1, const ImageGray& y2,
                            const ImageGray& s1, const ImageGray& s2,
                            int eval_samples, int k, uint64_t seed,
                            const PixelPairSet* exclude = nullptr);

/// Per-run-set statistics used by the reporting protocol.
struct SeriesStats {
  std::array<double, 2> mean_q2;
  double q2_std = 0;  // std of the per-run component-mean Q2
  int best = 0;       // run index, by component-mean Q2
  int worst = 0;
};
SeriesStats series_stats(const std::vector<QualityReport>& runs);

struct ReportRow {
  std::string method;  // "baseline" | "linear" | "nonlinear"
  int component = 1;   // 1 or 2
  std::string stat;    // "mean" | "best" | "worst"
  double q1_db = 0, q2_db = 0, q3_bits = 0, q4_bits = 0;
};

struct ReportTable {
  std::vector<ReportRow> rows;
  std::string to_csv() const;
  nlohmann::json to_json() const;
};

/// Aggregates the run sets into the reporting layout: a no-separation
/// baseline row set followed by linear and nonlinear mean/best/worst rows.
ReportTable build_report(const QualityReport& baseline,
                         const std::vector<QualityReport>& linear_runs,
                         const std::vector<QualityReport>& nonlinear_runs);

}  // namespace showthru
