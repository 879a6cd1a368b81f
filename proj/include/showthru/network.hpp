#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

namespace showthru {

inline double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

constexpr int kPsiHidden = 20;
constexpr int kPsiParamCount = 3 * kPsiHidden;  // [w_log | bias | v_log]
constexpr int kFHiddenPerGroup = 20;
constexpr int kFLinearParamCount = 2;  // [a, b]
// [c, d | w1[20] | w2[20] | bias[20] | u[20]]
constexpr int kFNonlinearParamCount = 2 + 4 * kFHiddenPerGroup;

/// Monotone CDF-estimator network: a normalized positive mixture of logistic
/// sigmoids,
///   psi(y) = sum_h v_h o(w_h y + b_h) / sum_h v_h,
/// with v_h = exp(v_log_h) > 0 and w_h = exp(w_log_h) > 0, so psi is strictly
/// increasing with range (0,1) by construction.  Free parameters are
/// (w_log, bias, v_log).
struct PsiNet {
  std::array<double, kPsiHidden> w_log{};
  std::array<double, kPsiHidden> bias{};
  std::array<double, kPsiHidden> v_log{};

  struct Eval {
    double z;   // psi(y), in (0,1)
    double dz;  // psi'(y), > 0
  };
  Eval forward(double y) const;

  /// Accumulates weight * d log psi'(y) / d theta into `grad` (layout
  /// [w_log | bias | v_log]) and stores d log psi'(y) / dy.  Returns psi'(y).
  double accumulate_log_deriv_grad(double y, double weight,
                                   std::span<double> grad,
                                   double* dlog_dy) const;
};

PsiNet psi_init(uint64_t seed);

inline PsiNet::Eval psi_forward(const PsiNet& psi, double y) {
  return psi.forward(y);
}

/// Symmetric 2x2 separator [[a,b],[b,a]].
struct FLinear {
  double a = 1.0;
  double b = 0.0;
};

/// Symmetric two-input/two-output MLP: linear outputs, symmetric shortcut
/// matrix [[c,d],[d,c]], and 2x20 sigmoidal hidden units where the second
/// group mirrors the first (input weights swapped, bias and output weight
/// shared), so exchange symmetry holds exactly by parameter tying.
struct FNonlinear {
  double c = 1.0;
  double d = 0.0;
  std::array<double, kFHiddenPerGroup> w1{};    // group-1 weight from x1
  std::array<double, kFHiddenPerGroup> w2{};    // group-1 weight from x2
  std::array<double, kFHiddenPerGroup> bias{};  // shared hidden bias
  std::array<double, kFHiddenPerGroup> u{};     // shared output weight
};

struct FEval {
  std::array<double, 2> y;
  std::array<double, 4> jac;  // row-major [J11, J12, J21, J22]
  double det() const { return jac[0] * jac[3] - jac[1] * jac[2]; }
};

FEval f_forward(const FLinear& f, double x1, double x2);
FEval f_forward(const FNonlinear& f, double x1, double x2);

FLinear init_identity_linear();

/// Identity initialization: shortcuts (c,d) = (1,0), hidden output weights
/// zero, hidden input weights and biases uniform in [-0.5, 0.5] / sqrt(2).
FNonlinear init_identity_nonlinear(uint64_t seed);

/// Unconstrained 2x2 map, used as input to symmetrize().
struct FLinearRaw {
  double m11 = 1, m12 = 0, m21 = 0, m22 = 1;
};

/// Fully untied nonlinear separator (independent groups, full shortcut
/// matrix).  Input to symmetrize(); also the reference structure for tied-
/// gradient checks.
struct FNonlinearRaw {
  double s11 = 1, s12 = 0, s21 = 0, s22 = 1;
  // group g drives output g; unit h of group g has weights (wg1, wg2) from
  // (x1, x2), bias bg and output weight ug.
  std::array<double, kFHiddenPerGroup> w11{}, w12{}, b1{}, u1{};
  std::array<double, kFHiddenPerGroup> w21{}, w22{}, b2{}, u2{};
};

FEval f_forward(const FNonlinearRaw& f, double x1, double x2);

/// Projection onto the tied parameterization: averaged shortcut diagonal and
/// off-diagonal; for the nonlinear net group 2 is replaced by the mirror of
/// group 1.
FLinear symmetrize(const FLinearRaw& raw);
FNonlinear symmetrize(const FNonlinearRaw& raw);

enum class FKind { linear, nonlinear };

std::string to_string(FKind kind);
FKind f_kind_from_string(const std::string& s);

/// Separator F plus the two psi networks and training metadata.
struct SeparatorModel {
  FKind kind = FKind::linear;
  FLinear lin;
  FNonlinear nl;
  std::array<PsiNet, 2> psi{};
  uint64_t seed = 0;
  int epochs = 0;
  std::vector<double> objective_trace;

  FEval f_eval(double x1, double x2) const;
  int f_param_count() const {
    return kind == FKind::linear ? kFLinearParamCount : kFNonlinearParamCount;
  }
  int param_count() const { return f_param_count() + 2 * kPsiParamCount; }
};

/// Flat free-parameter vector: [F params | psi1 | psi2].
std::vector<double> get_params(const SeparatorModel& model);
void set_params(SeparatorModel& model, std::span<const double> params);

/// Index range [first, last) of the hidden-output weights u within the flat
/// parameter vector of a nonlinear model (the weights clamped during linear
/// priming).
std::pair<int, int> nonlinear_u_param_range();

nlohmann::json serialize_model(const SeparatorModel& model);
SeparatorModel deserialize_model(const nlohmann::json& doc);

}  // namespace showthru
