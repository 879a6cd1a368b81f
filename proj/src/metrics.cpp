#include "showthru/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "showthru/rng.hpp"

namespace showthru {

namespace {

constexpr double kDbCap = 150.0;
constexpr double kLn2 = 0.69314718055994530942;
constexpr double kJitterAmplitude = 1e-6;

double variance(const std::vector<double>& v) {
  const double n = double(v.size());
  double mean = 0.0;
  for (double x : v) mean += x;
  mean /= n;
  double acc = 0.0;
  for (double x : v) acc += (x - mean) * (x - mean);
  return acc / n;
}

bool is_constant(const std::vector<double>& v) {
  const auto [lo, hi] = std::minmax_element(v.begin(), v.end());
  return !(*hi > *lo);
}

double snr_db(double var_signal, double var_noise) {
  if (var_noise <= 0.0) return kDbCap;
  return std::min(10.0 * std::log10(var_signal / var_noise), kDbCap);
}

// Distinct levels of `key` with weighted means of `val`, sorted by level.
struct Grouped {
  std::vector<double> levels;
  std::vector<double> means;
  std::vector<double> weights;
};

Grouped group_by_level(const std::vector<double>& key,
                       const std::vector<double>& val) {
  std::vector<size_t> order(key.size());
  std::iota(order.begin(), order.end(), size_t(0));
  // stable: equal levels keep their original order, so grouped sums are
  // reproducible bit for bit
  std::stable_sort(order.begin(), order.end(),
                   [&](size_t i, size_t j) { return key[i] < key[j]; });
  Grouped g;
  size_t i = 0;
  while (i < order.size()) {
    const double level = key[order[i]];
    double sum = 0.0;
    double count = 0.0;
    while (i < order.size() && key[order[i]] == level) {
      sum += val[order[i]];
      count += 1.0;
      ++i;
    }
    g.levels.push_back(level);
    g.means.push_back(sum / count);
    g.weights.push_back(count);
  }
  return g;
}

// Pool-adjacent-violators pass for a non-decreasing weighted LS fit; returns
// the inclusive block ranges of the optimal partition.
std::vector<std::pair<size_t, size_t>> pava_partition(
    const std::vector<double>& means, const std::vector<double>& weights) {
  struct Block {
    double sum, weight;
    size_t first, last;
  };
  std::vector<Block> stack;
  stack.reserve(means.size());
  for (size_t i = 0; i < means.size(); ++i) {
    Block b{means[i] * weights[i], weights[i], i, i};
    while (!stack.empty() &&
           stack.back().sum * b.weight > b.sum * stack.back().weight) {
      b.sum += stack.back().sum;
      b.weight += stack.back().weight;
      b.first = stack.back().first;
      stack.pop_back();
    }
    stack.push_back(b);
  }
  std::vector<std::pair<size_t, size_t>> blocks;
  blocks.reserve(stack.size());
  for (const Block& b : stack) blocks.emplace_back(b.first, b.last);
  return blocks;
}

// Fitted values for a given partition, accumulated in ascending level order
// so equal partitions give bitwise equal fits whatever the pooling order was.
std::vector<double> fit_from_partition(
    const std::vector<double>& means, const std::vector<double>& weights,
    const std::vector<std::pair<size_t, size_t>>& blocks) {
  std::vector<double> fit(means.size());
  for (const auto& [first, last] : blocks) {
    double sum = 0.0, weight = 0.0;
    for (size_t i = first; i <= last; ++i) {
      sum += means[i] * weights[i];
      weight += weights[i];
    }
    const double value = sum / weight;
    for (size_t i = first; i <= last; ++i) fit[i] = value;
  }
  return fit;
}

double level_sse(const Grouped& g, const std::vector<double>& fit) {
  double acc = 0.0;
  for (size_t i = 0; i < g.levels.size(); ++i) {
    const double d = fit[i] - g.means[i];
    acc += g.weights[i] * d * d;
  }
  return acc;
}

double digamma(double x) {
  double r = 0.0;
  while (x < 6.0) {
    r -= 1.0 / x;
    x += 1.0;
  }
  const double f = 1.0 / (x * x);
  return r + std::log(x) - 0.5 / x -
         f * (1.0 / 12 - f * (1.0 / 120 - f * (1.0 / 252 -
                                               f * (1.0 / 240 - f / 132))));
}

PixelPairSet pair_set_at(const ImageGray& a, const ImageGray& b,
                         const std::vector<std::array<int, 2>>& indices,
                         uint64_t seed) {
  PixelPairSet set;
  set.seed = seed;
  set.indices = indices;
  set.samples.reserve(indices.size());
  for (const auto& rc : indices)
    set.samples.push_back({a.at(rc[0], rc[1]), b.at(rc[0], rc[1])});
  return set;
}

double clamp_mi_for_report(double raw) {
  if (raw < -0.1)
    throw std::runtime_error(
        "mutual information estimate below the accepted noise floor");
  return std::max(raw, 0.0);
}

}  // namespace

double MonotoneMap::operator()(double y) const {
  const auto it = std::lower_bound(inputs.begin(), inputs.end(), y);
  if (it == inputs.end()) return outputs.back();
  const size_t i = size_t(it - inputs.begin());
  if (*it == y || i == 0) return outputs[i];
  const double t = (y - inputs[i - 1]) / (inputs[i] - inputs[i - 1]);
  return outputs[i - 1] + t * (outputs[i] - outputs[i - 1]);
}

double q1_snr(const ImageGray& extracted, const ImageGray& source) {
  if (!extracted.same_size(source))
    throw std::invalid_argument("q1_snr: dimension mismatch");
  if (is_constant(source.data))
    throw std::invalid_argument("q1_snr: constant source");
  const double vs = variance(source.data);
  std::vector<double> noise(extracted.data.size());
  for (size_t i = 0; i < noise.size(); ++i)
    noise[i] = extracted.data[i] - source.data[i];
  return snr_db(vs, variance(noise));
}

MonotoneMap fit_monotone_map(const ImageGray& extracted,
                             const ImageGray& source) {
  if (!extracted.same_size(source))
    throw std::invalid_argument("fit_monotone_map: dimension mismatch");
  const Grouped g = group_by_level(extracted.data, source.data);
  const size_t m = g.levels.size();
  if (m < 2)
    throw std::invalid_argument(
        "fit_monotone_map: need at least 2 distinct extracted levels");

  const std::vector<double> inc =
      fit_from_partition(g.means, g.weights, pava_partition(g.means, g.weights));

  // Non-increasing fit = non-decreasing fit on the reversed level order;
  // compute the partition on the reversed arrays, then map it back and fit
  // in ascending order.
  std::vector<double> rmeans(g.means.rbegin(), g.means.rend());
  std::vector<double> rweights(g.weights.rbegin(), g.weights.rend());
  auto rblocks = pava_partition(rmeans, rweights);
  std::vector<std::pair<size_t, size_t>> dec_blocks;
  dec_blocks.reserve(rblocks.size());
  for (auto it = rblocks.rbegin(); it != rblocks.rend(); ++it)
    dec_blocks.emplace_back(m - 1 - it->second, m - 1 - it->first);
  const std::vector<double> dec =
      fit_from_partition(g.means, g.weights, dec_blocks);

  const double sse_inc = level_sse(g, inc);
  const double sse_dec = level_sse(g, dec);

  MonotoneMap map;
  map.inputs = g.levels;
  map.increasing = sse_inc <= sse_dec;
  map.outputs = map.increasing ? inc : dec;
  return map;
}

std::pair<double, MonotoneMap> q2_snr(const ImageGray& extracted,
                                      const ImageGray& source) {
  if (is_constant(source.data))
    throw std::invalid_argument("q2_snr: constant source");
  const double vs = variance(source.data);
  MonotoneMap map = fit_monotone_map(extracted, source);
  std::vector<double> noise(extracted.data.size());
  for (size_t i = 0; i < noise.size(); ++i)
    noise[i] = map(extracted.data[i]) - source.data[i];
  return {snr_db(vs, variance(noise)), std::move(map)};
}

double kraskov_mi(const PixelPairSet& samples, int k) {
  const int n = int(samples.samples.size());
  if (k < 1) throw std::invalid_argument("kraskov_mi: k must be >= 1");
  if (n < k + 2)
    throw std::invalid_argument("kraskov_mi: too few samples for the given k");

  // De-tie quantized intensities; the amplitude is far below one
  // quantization step, so the estimate is unaffected.
  std::vector<double> x(n), y(n);
  bool ok = false;
  for (int attempt = 1; attempt <= 3 && !ok; ++attempt) {
    Rng rng(derive_seed(samples.seed, "jitter_" + std::to_string(attempt)));
    for (int i = 0; i < n; ++i) {
      x[i] = samples.samples[i][0] + kJitterAmplitude * rng.uniform();
      y[i] = samples.samples[i][1] + kJitterAmplitude * rng.uniform();
    }
    std::vector<std::pair<double, double>> pts(n);
    for (int i = 0; i < n; ++i) pts[i] = {x[i], y[i]};
    std::sort(pts.begin(), pts.end());
    ok = std::adjacent_find(pts.begin(), pts.end()) == pts.end();
  }
  if (!ok)
    throw std::runtime_error("kraskov_mi: duplicate points after 3 jitter attempts");

  double acc = 0.0;
  std::vector<double> knn(k);
  for (int i = 0; i < n; ++i) {
    // k smallest max-norm joint distances to other points
    int filled = 0;
    for (int j = 0; j < n; ++j) {
      if (j == i) continue;
      const double d = std::max(std::fabs(x[j] - x[i]), std::fabs(y[j] - y[i]));
      if (filled < k) {
        knn[filled++] = d;
        if (filled == k) std::sort(knn.begin(), knn.end());
      } else if (d < knn[k - 1]) {
        int p = k - 1;
        while (p > 0 && knn[p - 1] > d) {
          knn[p] = knn[p - 1];
          --p;
        }
        knn[p] = d;
      }
    }
    const double eps = knn[k - 1];
    int nx = 0, ny = 0;
    for (int j = 0; j < n; ++j) {
      if (j == i) continue;
      if (std::fabs(x[j] - x[i]) < eps) ++nx;
      if (std::fabs(y[j] - y[i]) < eps) ++ny;
    }
    acc += digamma(nx + 1) + digamma(ny + 1);
  }
  const double nats = digamma(k) + digamma(n) - acc / n;
  return nats / kLn2;
}

Q34 q3_q4(const ImageGray& y1, const ImageGray& y2, const ImageGray& s1,
          const ImageGray& s2, int eval_samples, uint64_t seed,
          const PixelPairSet* exclude, int k) {
  for (const ImageGray* img : {&y2, &s1, &s2})
    if (!y1.same_size(*img))
      throw std::invalid_argument("q3_q4: dimension mismatch");
  const PixelPairSet locations =
      sample_pixel_pairs(y1, y2, eval_samples, seed, exclude);
  Q34 out;
  const std::array<const ImageGray*, 2> ys = {&y1, &y2};
  const std::array<const ImageGray*, 2> ss = {&s1, &s2};
  for (int i = 0; i < 2; ++i) {
    const PixelPairSet same =
        pair_set_at(*ys[i], *ss[i], locations.indices,
                    derive_seed(seed, "q3_" + std::to_string(i + 1)));
    const PixelPairSet opposite =
        pair_set_at(*ys[i], *ss[1 - i], locations.indices,
                    derive_seed(seed, "q4_" + std::to_string(i + 1)));
    out.q3_bits[i] = kraskov_mi(same, k);
    out.q4_bits[i] = kraskov_mi(opposite, k);
  }
  return out;
}

QualityReport evaluate_pair(const ImageGray& y1, const ImageGray& y2,
                            const ImageGray& s1, const ImageGray& s2,
                            int eval_samples, int k, uint64_t seed,
                            const PixelPairSet* exclude) {
  QualityReport report;
  report.eval_seed = seed;
  report.sample_count = eval_samples;
  report.k = k;
  const Q34 mi = q3_q4(y1, y2, s1, s2, eval_samples, seed, exclude, k);
  const std::array<const ImageGray*, 2> ys = {&y1, &y2};
  const std::array<const ImageGray*, 2> ss = {&s1, &s2};
  for (int i = 0; i < 2; ++i) {
    auto& c = report.comp[i];
    c.q1_db = q1_snr(*ys[i], *ss[i]);
    c.q2_db = q2_snr(*ys[i], *ss[i]).first;
    c.q3_raw = mi.q3_bits[i];
    c.q4_raw = mi.q4_bits[i];
    c.q3_bits = clamp_mi_for_report(c.q3_raw);
    c.q4_bits = clamp_mi_for_report(c.q4_raw);
  }
  return report;
}

SeriesStats series_stats(const std::vector<QualityReport>& runs) {
  if (runs.empty()) throw std::invalid_argument("series_stats: empty run list");
  SeriesStats st;
  std::vector<double> run_q2(runs.size());
  for (size_t r = 0; r < runs.size(); ++r)
    run_q2[r] = 0.5 * (runs[r].comp[0].q2_db + runs[r].comp[1].q2_db);
  for (int i = 0; i < 2; ++i) {
    double mean = 0.0;
    for (const auto& run : runs) mean += run.comp[i].q2_db;
    st.mean_q2[i] = mean / double(runs.size());
  }
  double mean = 0.0;
  for (double v : run_q2) mean += v;
  mean /= double(run_q2.size());
  double var = 0.0;
  for (double v : run_q2) var += (v - mean) * (v - mean);
  st.q2_std = runs.size() > 1 ? std::sqrt(var / double(runs.size() - 1)) : 0.0;
  st.best = int(std::max_element(run_q2.begin(), run_q2.end()) - run_q2.begin());
  st.worst = int(std::min_element(run_q2.begin(), run_q2.end()) - run_q2.begin());
  return st;
}

namespace {

QualityReport::Component mean_component(const std::vector<QualityReport>& runs,
                                        int i) {
  QualityReport::Component m;
  for (const auto& run : runs) {
    m.q1_db += run.comp[i].q1_db;
    m.q2_db += run.comp[i].q2_db;
    m.q3_bits += run.comp[i].q3_bits;
    m.q4_bits += run.comp[i].q4_bits;
  }
  const double n = double(runs.size());
  m.q1_db /= n;
  m.q2_db /= n;
  m.q3_bits /= n;
  m.q4_bits /= n;
  return m;
}

void append_method_rows(ReportTable& table, const std::string& method,
                        const std::vector<QualityReport>& runs) {
  if (runs.empty()) return;
  const SeriesStats st = series_stats(runs);
  for (int i = 0; i < 2; ++i) {
    const QualityReport::Component mean = mean_component(runs, i);
    table.rows.push_back({method, i + 1, "mean", mean.q1_db, mean.q2_db,
                          mean.q3_bits, mean.q4_bits});
  }
  if (runs.size() > 1) {
    for (const auto& [stat, idx] :
         {std::pair<std::string, int>{"best", st.best}, {"worst", st.worst}}) {
      for (int i = 0; i < 2; ++i) {
        const auto& c = runs[idx].comp[i];
        table.rows.push_back(
            {method, i + 1, stat, c.q1_db, c.q2_db, c.q3_bits, c.q4_bits});
      }
    }
  }
}

}  // namespace

ReportTable build_report(const QualityReport& baseline,
                         const std::vector<QualityReport>& linear_runs,
                         const std::vector<QualityReport>& nonlinear_runs) {
  ReportTable table;
  for (int i = 0; i < 2; ++i) {
    const auto& c = baseline.comp[i];
    table.rows.push_back({"baseline", i + 1, "mean", c.q1_db, c.q2_db,
                          c.q3_bits, c.q4_bits});
  }
  append_method_rows(table, "linear", linear_runs);
  append_method_rows(table, "nonlinear", nonlinear_runs);
  return table;
}

std::string ReportTable::to_csv() const {
  std::ostringstream os;
  os.precision(17);
  os << "method,component,stat,q1_db,q2_db,q3_bits,q4_bits\n";
  for (const ReportRow& r : rows)
    os << r.method << ',' << r.component << ',' << r.stat << ',' << r.q1_db
       << ',' << r.q2_db << ',' << r.q3_bits << ',' << r.q4_bits << '\n';
  return os.str();
}

nlohmann::json ReportTable::to_json() const {
  nlohmann::json rows_json = nlohmann::json::array();
  for (const ReportRow& r : rows)
    rows_json.push_back({{"method", r.method},
                         {"component", r.component},
                         {"stat", r.stat},
                         {"q1_db", r.q1_db},
                         {"q2_db", r.q2_db},
                         {"q3_bits", r.q3_bits},
                         {"q4_bits", r.q4_bits}});
  return {{"rows", rows_json}};
}

}  // namespace showthru
