#include "showthru/network.hpp"

#include <cmath>
#include <stdexcept>

#include "showthru/rng.hpp"

namespace showthru {

PsiNet::Eval PsiNet::forward(double y) const {
  double vsum = 0.0, zsum = 0.0, dsum = 0.0;
  for (int h = 0; h < kPsiHidden; ++h) {
    const double w = std::exp(w_log[h]);
    const double v = std::exp(v_log[h]);
    const double s = sigmoid(w * y + bias[h]);
    vsum += v;
    zsum += v * s;
    dsum += v * w * s * (1.0 - s);
  }
  return {zsum / vsum, dsum / vsum};
}

double PsiNet::accumulate_log_deriv_grad(double y, double weight,
                                         std::span<double> grad,
                                         double* dlog_dy) const {
  double w[kPsiHidden], v[kPsiHidden], sp[kPsiHidden], spp[kPsiHidden];
  double vsum = 0.0, dsum = 0.0, ddy = 0.0;
  for (int h = 0; h < kPsiHidden; ++h) {
    w[h] = std::exp(w_log[h]);
    v[h] = std::exp(v_log[h]);
    const double s = sigmoid(w[h] * y + bias[h]);
    sp[h] = s * (1.0 - s);
    spp[h] = sp[h] * (1.0 - 2.0 * s);
    vsum += v[h];
    dsum += v[h] * w[h] * sp[h];
    ddy += v[h] * w[h] * w[h] * spp[h];
  }
  const double deriv = dsum / vsum;  // psi'(y)
  const double inv_d = 1.0 / dsum;   // combines the 1/V and 1/deriv factors
  *dlog_dy = ddy * inv_d;
  for (int h = 0; h < kPsiHidden; ++h) {
    // d psi'/d w_log = v w (sp + w y spp) / V, etc.; dividing by psi' turns
    // the common 1/V into 1/dsum.
    grad[h] += weight * v[h] * w[h] * (sp[h] + w[h] * y * spp[h]) * inv_d;
    grad[kPsiHidden + h] += weight * v[h] * w[h] * spp[h] * inv_d;
    grad[2 * kPsiHidden + h] +=
        weight * v[h] * (w[h] * sp[h] - deriv) * inv_d;
  }
  return deriv;
}

PsiNet psi_init(uint64_t seed) {
  Rng rng(seed);
  PsiNet psi;
  for (int h = 0; h < kPsiHidden; ++h) {
    psi.w_log[h] = rng.uniform(-0.5, 0.5);
    // Spread the sigmoid centers over [-1, 2]: the separator outputs start
    // inside the unit interval and drift during training.
    const double center = rng.uniform(-1.0, 2.0);
    psi.bias[h] = -std::exp(psi.w_log[h]) * center;
    psi.v_log[h] = rng.uniform(-0.5, 0.5);
  }
  return psi;
}

FEval f_forward(const FLinear& f, double x1, double x2) {
  FEval e;
  e.y[0] = f.a * x1 + f.b * x2;
  e.y[1] = f.b * x1 + f.a * x2;
  e.jac = {f.a, f.b, f.b, f.a};
  return e;
}

FEval f_forward(const FNonlinear& f, double x1, double x2) {
  FEval e;
  double y1 = f.c * x1 + f.d * x2;
  double y2 = f.d * x1 + f.c * x2;
  double j11 = f.c, j12 = f.d, j21 = f.d, j22 = f.c;
  for (int h = 0; h < kFHiddenPerGroup; ++h) {
    const double s1 = sigmoid(f.w1[h] * x1 + f.w2[h] * x2 + f.bias[h]);
    const double s2 = sigmoid(f.w2[h] * x1 + f.w1[h] * x2 + f.bias[h]);
    const double sp1 = s1 * (1.0 - s1);
    const double sp2 = s2 * (1.0 - s2);
    y1 += f.u[h] * s1;
    y2 += f.u[h] * s2;
    j11 += f.u[h] * f.w1[h] * sp1;
    j12 += f.u[h] * f.w2[h] * sp1;
    j21 += f.u[h] * f.w2[h] * sp2;
    j22 += f.u[h] * f.w1[h] * sp2;
  }
  e.y = {y1, y2};
  e.jac = {j11, j12, j21, j22};
  return e;
}

FEval f_forward(const FNonlinearRaw& f, double x1, double x2) {
  FEval e;
  double y1 = f.s11 * x1 + f.s12 * x2;
  double y2 = f.s21 * x1 + f.s22 * x2;
  double j11 = f.s11, j12 = f.s12, j21 = f.s21, j22 = f.s22;
  for (int h = 0; h < kFHiddenPerGroup; ++h) {
    const double s1 = sigmoid(f.w11[h] * x1 + f.w12[h] * x2 + f.b1[h]);
    const double s2 = sigmoid(f.w21[h] * x1 + f.w22[h] * x2 + f.b2[h]);
    const double sp1 = s1 * (1.0 - s1);
    const double sp2 = s2 * (1.0 - s2);
    y1 += f.u1[h] * s1;
    y2 += f.u2[h] * s2;
    j11 += f.u1[h] * f.w11[h] * sp1;
    j12 += f.u1[h] * f.w12[h] * sp1;
    j21 += f.u2[h] * f.w21[h] * sp2;
    j22 += f.u2[h] * f.w22[h] * sp2;
  }
  e.y = {y1, y2};
  e.jac = {j11, j12, j21, j22};
  return e;
}

FLinear init_identity_linear() { return FLinear{1.0, 0.0}; }

FNonlinear init_identity_nonlinear(uint64_t seed) {
  Rng rng(seed);
  FNonlinear f;
  f.c = 1.0;
  f.d = 0.0;
  const double scale = 1.0 / std::sqrt(2.0);  // fan-in of a hidden unit
  for (int h = 0; h < kFHiddenPerGroup; ++h) {
    f.w1[h] = rng.uniform(-0.5, 0.5) * scale;
    f.w2[h] = rng.uniform(-0.5, 0.5) * scale;
    f.bias[h] = rng.uniform(-0.5, 0.5) * scale;
    f.u[h] = 0.0;
  }
  return f;
}

FLinear symmetrize(const FLinearRaw& raw) {
  return FLinear{0.5 * (raw.m11 + raw.m22), 0.5 * (raw.m12 + raw.m21)};
}

FNonlinear symmetrize(const FNonlinearRaw& raw) {
  FNonlinear f;
  f.c = 0.5 * (raw.s11 + raw.s22);
  f.d = 0.5 * (raw.s12 + raw.s21);
  f.w1 = raw.w11;
  f.w2 = raw.w12;
  f.bias = raw.b1;
  f.u = raw.u1;
  return f;
}

std::string to_string(FKind kind) {
  return kind == FKind::linear ? "linear" : "nonlinear";
}

FKind f_kind_from_string(const std::string& s) {
  if (s == "linear") return FKind::linear;
  if (s == "nonlinear") return FKind::nonlinear;
  throw std::invalid_argument("unknown separator kind: " + s);
}

FEval SeparatorModel::f_eval(double x1, double x2) const {
  return kind == FKind::linear ? f_forward(lin, x1, x2)
                               : f_forward(nl, x1, x2);
}

std::vector<double> get_params(const SeparatorModel& model) {
  std::vector<double> p;
  p.reserve(model.param_count());
  if (model.kind == FKind::linear) {
    p.push_back(model.lin.a);
    p.push_back(model.lin.b);
  } else {
    p.push_back(model.nl.c);
    p.push_back(model.nl.d);
    for (double v : model.nl.w1) p.push_back(v);
    for (double v : model.nl.w2) p.push_back(v);
    for (double v : model.nl.bias) p.push_back(v);
    for (double v : model.nl.u) p.push_back(v);
  }
  for (const PsiNet& psi : model.psi) {
    for (double v : psi.w_log) p.push_back(v);
    for (double v : psi.bias) p.push_back(v);
    for (double v : psi.v_log) p.push_back(v);
  }
  return p;
}

void set_params(SeparatorModel& model, std::span<const double> params) {
  if (int(params.size()) != model.param_count())
    throw std::invalid_argument("set_params: wrong parameter count");
  size_t i = 0;
  if (model.kind == FKind::linear) {
    model.lin.a = params[i++];
    model.lin.b = params[i++];
  } else {
    model.nl.c = params[i++];
    model.nl.d = params[i++];
    for (double& v : model.nl.w1) v = params[i++];
    for (double& v : model.nl.w2) v = params[i++];
    for (double& v : model.nl.bias) v = params[i++];
    for (double& v : model.nl.u) v = params[i++];
  }
  for (PsiNet& psi : model.psi) {
    for (double& v : psi.w_log) v = params[i++];
    for (double& v : psi.bias) v = params[i++];
    for (double& v : psi.v_log) v = params[i++];
  }
}

std::pair<int, int> nonlinear_u_param_range() {
  const int first = 2 + 3 * kFHiddenPerGroup;
  return {first, first + kFHiddenPerGroup};
}

namespace {

constexpr int kModelFormatVersion = 1;

nlohmann::json to_json(const PsiNet& psi) {
  return {{"w_log", psi.w_log}, {"bias", psi.bias}, {"v_log", psi.v_log}};
}

template <typename T, size_t N>
void array_from_json(const nlohmann::json& j, std::array<T, N>& out) {
  if (!j.is_array() || j.size() != N)
    throw std::runtime_error("model document: bad array length");
  for (size_t i = 0; i < N; ++i) out[i] = j[i].get<T>();
}

PsiNet psi_from_json(const nlohmann::json& j) {
  PsiNet psi;
  array_from_json(j.at("w_log"), psi.w_log);
  array_from_json(j.at("bias"), psi.bias);
  array_from_json(j.at("v_log"), psi.v_log);
  return psi;
}

}  // namespace

nlohmann::json serialize_model(const SeparatorModel& model) {
  nlohmann::json f;
  if (model.kind == FKind::linear) {
    f = {{"a", model.lin.a}, {"b", model.lin.b}};
  } else {
    f = {{"c", model.nl.c},   {"d", model.nl.d},       {"w1", model.nl.w1},
         {"w2", model.nl.w2}, {"bias", model.nl.bias}, {"u", model.nl.u}};
  }
  return {{"version", kModelFormatVersion},
          {"kind", to_string(model.kind)},
          {"seed", model.seed},
          {"F", f},
          {"psi", {to_json(model.psi[0]), to_json(model.psi[1])}},
          {"epochs", model.epochs},
          {"objective_trace", model.objective_trace}};
}

SeparatorModel deserialize_model(const nlohmann::json& doc) {
  if (!doc.is_object()) throw std::runtime_error("model document: not an object");
  if (!doc.contains("version") || doc.at("version").get<int>() != kModelFormatVersion)
    throw std::runtime_error("model document: unsupported version");
  SeparatorModel model;
  model.kind = f_kind_from_string(doc.at("kind").get<std::string>());
  model.seed = doc.at("seed").get<uint64_t>();
  model.epochs = doc.at("epochs").get<int>();
  model.objective_trace =
      doc.at("objective_trace").get<std::vector<double>>();
  const nlohmann::json& f = doc.at("F");
  if (model.kind == FKind::linear) {
    model.lin.a = f.at("a").get<double>();
    model.lin.b = f.at("b").get<double>();
  } else {
    model.nl.c = f.at("c").get<double>();
    model.nl.d = f.at("d").get<double>();
    array_from_json(f.at("w1"), model.nl.w1);
    array_from_json(f.at("w2"), model.nl.w2);
    array_from_json(f.at("bias"), model.nl.bias);
    array_from_json(f.at("u"), model.nl.u);
  }
  const nlohmann::json& psi = doc.at("psi");
  if (!psi.is_array() || psi.size() != 2)
    throw std::runtime_error("model document: expected two psi networks");
  model.psi[0] = psi_from_json(psi[0]);
  model.psi[1] = psi_from_json(psi[1]);
  return model;
}

}  // namespace showthru
