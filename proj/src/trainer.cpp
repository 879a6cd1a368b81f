#include "showthru/trainer.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

#include "showthru/rng.hpp"

namespace showthru {

namespace {

constexpr double kStepUp = 1.2;
constexpr double kStepDown = 0.5;
constexpr double kStepMin = 1e-7;
constexpr double kStepMax = 1e-1;

struct BatchEval {
  double objective = 0.0;
  int clamped = 0;
  std::vector<double> grad;
};

// One pass over the batch: objective and (optionally) the exact ascent
// gradient.  The linear and nonlinear paths accumulate the shortcut
// gradients with identical expressions so that a primed nonlinear run
// reproduces a linear run bit for bit while the hidden-output weights are
// clamped to zero.
BatchEval eval_batch(const PixelPairSet& batch, const SeparatorModel& model,
                     double det_floor, bool want_grad) {
  const int n = int(batch.samples.size());
  if (n == 0) throw std::invalid_argument("objective: empty batch");
  if (!(det_floor > 0.0))
    throw std::invalid_argument("objective: det floor must be positive");

  const int f_count = model.f_param_count();
  BatchEval out;
  if (want_grad) out.grad.assign(model.param_count(), 0.0);

  const double w = 1.0 / n;
  double acc = 0.0;

  for (int idx = 0; idx < n; ++idx) {
    const double x1 = batch.samples[idx][0];
    const double x2 = batch.samples[idx][1];

    double y1, y2, j11, j12, j21, j22;
    double s1v[kFHiddenPerGroup], s2v[kFHiddenPerGroup];
    if (model.kind == FKind::linear) {
      y1 = model.lin.a * x1 + model.lin.b * x2;
      y2 = model.lin.b * x1 + model.lin.a * x2;
      j11 = model.lin.a;
      j12 = model.lin.b;
      j21 = model.lin.b;
      j22 = model.lin.a;
    } else {
      const FNonlinear& f = model.nl;
      y1 = f.c * x1 + f.d * x2;
      y2 = f.d * x1 + f.c * x2;
      j11 = f.c;
      j12 = f.d;
      j21 = f.d;
      j22 = f.c;
      for (int h = 0; h < kFHiddenPerGroup; ++h) {
        const double s1 = sigmoid(f.w1[h] * x1 + f.w2[h] * x2 + f.bias[h]);
        const double s2 = sigmoid(f.w2[h] * x1 + f.w1[h] * x2 + f.bias[h]);
        s1v[h] = s1;
        s2v[h] = s2;
        const double sp1 = s1 * (1.0 - s1);
        const double sp2 = s2 * (1.0 - s2);
        y1 += f.u[h] * s1;
        y2 += f.u[h] * s2;
        j11 += f.u[h] * f.w1[h] * sp1;
        j12 += f.u[h] * f.w2[h] * sp1;
        j21 += f.u[h] * f.w2[h] * sp2;
        j22 += f.u[h] * f.w1[h] * sp2;
      }
    }

    const double det = j11 * j22 - j12 * j21;
    const double adet = std::fabs(det);
    const bool clamped = adet < det_floor;
    if (clamped) ++out.clamped;

    double d1, d2;
    double dlog1 = 0.0, dlog2 = 0.0;
    if (want_grad) {
      auto g1 = std::span<double>(out.grad).subspan(f_count, kPsiParamCount);
      auto g2 = std::span<double>(out.grad)
                    .subspan(f_count + kPsiParamCount, kPsiParamCount);
      d1 = model.psi[0].accumulate_log_deriv_grad(y1, w, g1, &dlog1);
      d2 = model.psi[1].accumulate_log_deriv_grad(y2, w, g2, &dlog2);
    } else {
      d1 = model.psi[0].forward(y1).dz;
      d2 = model.psi[1].forward(y2).dz;
    }

    acc += std::log(clamped ? det_floor : adet) + std::log(d1) + std::log(d2);

    if (!want_grad) continue;

    // d log|det J| / dJ = adj(J)^T / det; zero when the floor clamps the term.
    double a11 = 0.0, a12 = 0.0, a21 = 0.0, a22 = 0.0;
    if (!clamped) {
      const double inv_det = 1.0 / det;
      a11 = j22 * inv_det;
      a12 = -j21 * inv_det;
      a21 = -j12 * inv_det;
      a22 = j11 * inv_det;
    }

    if (model.kind == FKind::linear) {
      out.grad[0] += w * (a11 + a22 + dlog1 * x1 + dlog2 * x2);
      out.grad[1] += w * (a12 + a21 + dlog1 * x2 + dlog2 * x1);
    } else {
      const FNonlinear& f = model.nl;
      out.grad[0] += w * (a11 + a22 + dlog1 * x1 + dlog2 * x2);
      out.grad[1] += w * (a12 + a21 + dlog1 * x2 + dlog2 * x1);
      for (int h = 0; h < kFHiddenPerGroup; ++h) {
        const double s1 = s1v[h];
        const double s2 = s2v[h];
        const double sp1 = s1 * (1.0 - s1);
        const double sp2 = s2 * (1.0 - s2);
        const double spp1 = sp1 * (1.0 - 2.0 * s1);
        const double spp2 = sp2 * (1.0 - 2.0 * s2);
        const double uw1 = f.u[h] * f.w1[h];
        const double uw2 = f.u[h] * f.w2[h];

        // w1: group-1 unit sees x1 through w1, the mirrored unit sees x2.
        out.grad[2 + h] +=
            w * (a11 * (f.u[h] * sp1 + uw1 * spp1 * x1) +
                 a12 * (uw2 * spp1 * x1) + a21 * (uw2 * spp2 * x2) +
                 a22 * (f.u[h] * sp2 + uw1 * spp2 * x2) +
                 dlog1 * (f.u[h] * sp1 * x1) + dlog2 * (f.u[h] * sp2 * x2));
        // w2: group-1 unit sees x2 through w2, the mirrored unit sees x1.
        out.grad[2 + kFHiddenPerGroup + h] +=
            w * (a11 * (uw1 * spp1 * x2) +
                 a12 * (f.u[h] * sp1 + uw2 * spp1 * x2) +
                 a21 * (f.u[h] * sp2 + uw2 * spp2 * x1) +
                 a22 * (uw1 * spp2 * x1) + dlog1 * (f.u[h] * sp1 * x2) +
                 dlog2 * (f.u[h] * sp2 * x1));
        // shared bias
        out.grad[2 + 2 * kFHiddenPerGroup + h] +=
            w * (a11 * (uw1 * spp1) + a12 * (uw2 * spp1) + a21 * (uw2 * spp2) +
                 a22 * (uw1 * spp2) + dlog1 * (f.u[h] * sp1) +
                 dlog2 * (f.u[h] * sp2));
        // shared output weight
        out.grad[2 + 3 * kFHiddenPerGroup + h] +=
            w * (a11 * (f.w1[h] * sp1) + a12 * (f.w2[h] * sp1) +
                 a21 * (f.w2[h] * sp2) + a22 * (f.w1[h] * sp2) + dlog1 * s1 +
                 dlog2 * s2);
      }
    }
  }
  out.objective = acc * w;
  return out;
}

}  // namespace

TrainConfig TrainConfig::defaults(FKind mode) {
  TrainConfig cfg;
  cfg.mode = mode;
  cfg.epochs = (mode == FKind::linear) ? 200 : 400;
  cfg.priming_epochs = (mode == FKind::linear) ? 0 : 100;
  return cfg;
}

void TrainConfig::validate() const {
  if (epochs < 1) throw std::invalid_argument("TrainConfig: epochs must be >= 1");
  if (train_set_size < 2)
    throw std::invalid_argument("TrainConfig: train_set_size must be >= 2");
  if (!(learning_rate > 0.0))
    throw std::invalid_argument("TrainConfig: learning rate must be positive");
  if (!(det_floor > 0.0))
    throw std::invalid_argument("TrainConfig: det floor must be positive");
  if (mode == FKind::nonlinear &&
      (priming_epochs < 0 || priming_epochs > epochs))
    throw std::invalid_argument(
        "TrainConfig: priming epochs must lie within the epoch budget");
}

double objective(const PixelPairSet& batch, const SeparatorModel& model,
                 double det_floor) {
  return eval_batch(batch, model, det_floor, false).objective;
}

ObjectiveStats objective_stats(const PixelPairSet& batch,
                               const SeparatorModel& model, double det_floor) {
  const BatchEval e = eval_batch(batch, model, det_floor, false);
  return {e.objective, e.clamped};
}

std::vector<double> gradient(const PixelPairSet& batch,
                             const SeparatorModel& model, double det_floor) {
  return eval_batch(batch, model, det_floor, true).grad;
}

SeparatorModel train_on_pairs(const PixelPairSet& batch,
                              const TrainConfig& config) {
  config.validate();
  SeparatorModel model;
  model.kind = config.mode;
  model.seed = config.seed;
  if (config.mode == FKind::linear) {
    model.lin = init_identity_linear();
  } else {
    model.nl = init_identity_nonlinear(derive_seed(config.seed, "f_init"));
  }
  model.psi[0] = psi_init(derive_seed(config.seed, "psi_init_1"));
  model.psi[1] = psi_init(derive_seed(config.seed, "psi_init_2"));

  std::vector<double> params = get_params(model);
  std::vector<double> step(params.size(), config.learning_rate);
  std::vector<double> prev(params.size(), 0.0);
  const auto [u_first, u_last] = nonlinear_u_param_range();

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    BatchEval eval = eval_batch(batch, model, config.det_floor, true);
    if (!std::isfinite(eval.objective))
      throw std::runtime_error("train: objective is not finite at epoch " +
                               std::to_string(epoch));
    model.objective_trace.push_back(eval.objective);

    if (config.mode == FKind::nonlinear && epoch < config.priming_epochs)
      for (int i = u_first; i < u_last; ++i) eval.grad[i] = 0.0;

    for (size_t i = 0; i < params.size(); ++i) {
      const double g = eval.grad[i];
      const double same = g * prev[i];
      if (same > 0.0)
        step[i] = std::min(step[i] * kStepUp, kStepMax);
      else if (same < 0.0)
        step[i] = std::max(step[i] * kStepDown, kStepMin);
      if (g > 0.0)
        params[i] += step[i];
      else if (g < 0.0)
        params[i] -= step[i];
      prev[i] = g;
    }
    set_params(model, params);
  }
  model.epochs = config.epochs;
  return model;
}

PixelPairSet training_set_for(const ImageGray& m1, const ImageGray& m2,
                              const TrainConfig& config) {
  return sample_pixel_pairs(m1, m2, config.train_set_size,
                            derive_seed(config.seed, "train_samples"));
}

SeparatorModel train(const ImageGray& m1, const ImageGray& m2,
                     const TrainConfig& config) {
  config.validate();
  if (!m1.same_size(m2))
    throw std::invalid_argument("train: mixture images differ in size");
  for (const ImageGray* img : {&m1, &m2})
    for (double v : img->data)
      if (!(v >= 0.0 && v <= 1.0))
        throw std::invalid_argument(
            "train: mixture images must be normalized to [0,1]");
  return train_on_pairs(training_set_for(m1, m2, config), config);
}

std::pair<ImageGray, ImageGray> separate(const SeparatorModel& model,
                                         const ImageGray& m1,
                                         const ImageGray& m2) {
  if (!m1.same_size(m2))
    throw std::invalid_argument("separate: mixture images differ in size");
  ImageGray y1(m1.width, m1.height), y2(m1.width, m1.height);
  const size_t n = m1.pixel_count();
  for (size_t i = 0; i < n; ++i) {
    const FEval e = model.f_eval(m1.data[i], m2.data[i]);
    y1.data[i] = e.y[0];
    y2.data[i] = e.y[1];
  }
  return {std::move(y1), std::move(y2)};
}

std::vector<RunResult> run_series(const ImageGray& m1, const ImageGray& m2,
                                  const ImageGray& s1, const ImageGray& s2,
                                  const TrainConfig& config, int n_runs,
                                  const EvalParams& eval) {
  if (n_runs < 1) throw std::invalid_argument("run_series: need >= 1 run");
  if (!m1.same_size(s1) || !m1.same_size(s2))
    throw std::invalid_argument("run_series: sources must match mixtures");
  std::vector<RunResult> results;
  results.reserve(n_runs);
  for (int run = 0; run < n_runs; ++run) {
    TrainConfig run_cfg = config;
    run_cfg.seed = derive_seed(config.seed, "run_" + std::to_string(run));
    RunResult r;
    r.train_set = training_set_for(m1, m2, run_cfg);
    r.model = train_on_pairs(r.train_set, run_cfg);
    std::tie(r.y1, r.y2) = separate(r.model, m1, m2);
    r.report = evaluate_pair(r.y1, r.y2, s1, s2, eval.samples, eval.k,
                             derive_seed(run_cfg.seed, "eval_samples"),
                             &r.train_set);
    results.push_back(std::move(r));
  }
  return results;
}

}  // namespace showthru
