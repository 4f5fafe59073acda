// SPDX-License-Identifier: Apache-2.0
#include "compnet/model.hpp"

#include <algorithm>
#include <cassert>

#include "compnet/errors.hpp"
#include "compnet/numerics.hpp"

namespace compnet {

const char* variant_name(ModelVariant v) {
  switch (v) {
    case ModelVariant::kCompNet: return "compnet";
    case ModelVariant::kSoftmaxProduct: return "softmax_product";
    case ModelVariant::kCompositionFc: return "composition_fc";
    case ModelVariant::kBce: return "bce";
  }
  return "unknown";
}

ModelVariant variant_from_name(const std::string& name) {
  if (name == "compnet") return ModelVariant::kCompNet;
  if (name == "softmax_product") return ModelVariant::kSoftmaxProduct;
  if (name == "composition_fc") return ModelVariant::kCompositionFc;
  if (name == "bce") return ModelVariant::kBce;
  throw ConfigError("unknown model variant: " + name);
}

Vec augment_feature(const Vec& feature) {
  Vec out(feature.size() + 1);
  std::copy(feature.begin(), feature.end(), out.begin());
  out.back() = 1.0;
  return out;
}

// ---------------------------------------------------------------- encoder

void FeatureEncoder::init(const EncoderSpec& spec, std::mt19937_64& rng) {
  spec_ = spec;
  if (spec.input_dim <= 0 || spec.feature_dim <= 0)
    throw ConfigError("encoder dims must be positive");
  switch (spec.kind) {
    case EncoderKind::kIdentity:
      if (spec.input_dim != spec.feature_dim)
        throw ConfigError("identity encoder requires input_dim == feature_dim");
      break;
    case EncoderKind::kLinear:
      w1_ = Matrix(spec.feature_dim, spec.input_dim);
      he_uniform_init(w1_, spec.input_dim, rng);
      b1_.assign(spec.feature_dim, 0.0);
      break;
    case EncoderKind::kMlp:
      if (spec.hidden_dim <= 0) throw ConfigError("mlp encoder requires hidden_dim > 0");
      w1_ = Matrix(spec.hidden_dim, spec.input_dim);
      he_uniform_init(w1_, spec.input_dim, rng);
      b1_.assign(spec.hidden_dim, 0.0);
      w2_ = Matrix(spec.feature_dim, spec.hidden_dim);
      he_uniform_init(w2_, spec.hidden_dim, rng);
      b2_.assign(spec.feature_dim, 0.0);
      break;
  }
}

Vec FeatureEncoder::forward(const Vec& raw, EncoderCache* cache) const {
  if (static_cast<int>(raw.size()) != spec_.input_dim)
    throw DimensionError("encoder input size mismatch");
  if (cache) cache->input = raw;
  switch (spec_.kind) {
    case EncoderKind::kIdentity:
      return raw;
    case EncoderKind::kLinear: {
      Vec z = matvec(w1_, raw);
      for (int i = 0; i < spec_.feature_dim; ++i) z[i] += b1_[i];
      if (cache) cache->z1 = z;
      return z;
    }
    case EncoderKind::kMlp: {
      Vec z1 = matvec(w1_, raw);
      for (size_t i = 0; i < z1.size(); ++i) z1[i] += b1_[i];
      Vec h1 = leaky_relu(z1, kLeakySlope);
      Vec z2 = matvec(w2_, h1);
      for (size_t i = 0; i < z2.size(); ++i) z2[i] += b2_[i];
      if (cache) {
        cache->z1 = std::move(z1);
        cache->h1 = h1;
      }
      return z2;
    }
  }
  return raw;
}

void FeatureEncoder::backward(const EncoderCache& cache, const Vec& g_out,
                              FeatureEncoder& grad) const {
  switch (spec_.kind) {
    case EncoderKind::kIdentity:
      return;
    case EncoderKind::kLinear:
      add_outer(grad.w1_, g_out, cache.input);
      for (size_t i = 0; i < g_out.size(); ++i) grad.b1_[i] += g_out[i];
      return;
    case EncoderKind::kMlp: {
      add_outer(grad.w2_, g_out, cache.h1);
      for (size_t i = 0; i < g_out.size(); ++i) grad.b2_[i] += g_out[i];
      Vec dh1 = matvec_t(w2_, g_out);
      for (size_t i = 0; i < dh1.size(); ++i)
        dh1[i] *= leaky_relu_grad(cache.z1[i], kLeakySlope);
      add_outer(grad.w1_, dh1, cache.input);
      for (size_t i = 0; i < dh1.size(); ++i) grad.b1_[i] += dh1[i];
      return;
    }
  }
}

// ------------------------------------------------------------------ heads

void LinearHead::init(int num_classes, int feature_dim, std::mt19937_64& rng) {
  if (num_classes <= 0 || feature_dim <= 0)
    throw ConfigError("head dims must be positive");
  w = Matrix(num_classes, feature_dim);
  he_uniform_init(w, feature_dim, rng);
  b.assign(num_classes, 0.0);
}

Vec LinearHead::classifier(int c) const {
  assert(c >= 0 && c < w.rows());
  Vec out(w.cols() + 1);
  const double* r = w.row(c);
  std::copy(r, r + w.cols(), out.begin());
  out.back() = b[c];
  return out;
}

Vec LinearHead::scores(const Vec& feature) const {
  Vec s = matvec(w, feature);
  for (size_t i = 0; i < s.size(); ++i) s[i] += b[i];
  return s;
}

// -------------------------------------------------------- composition mlp

void CompositionMlp::init(int feature_dim, std::mt19937_64& rng) {
  const int d = feature_dim;
  const int in = 2 * (d + 1);
  w1 = Matrix(d, in);
  he_uniform_init(w1, in, rng);
  b1.assign(d, 0.0);
  w2 = Matrix(d, d);
  he_uniform_init(w2, d, rng);
  b2.assign(d, 0.0);
  w3 = Matrix(d + 1, d);
  he_uniform_init(w3, d, rng);
  b3.assign(d + 1, 0.0);
}

// ---------------------------------------------------------------- fc head

void CompositionFcHead::init(std::vector<Pair> pair_list, int feature_dim,
                             std::mt19937_64& rng) {
  pairs = std::move(pair_list);
  std::sort(pairs.begin(), pairs.end());
  index.clear();
  for (size_t i = 0; i < pairs.size(); ++i) index[pair_key(pairs[i])] = static_cast<int>(i);
  w = Matrix(static_cast<int>(pairs.size()), feature_dim + 1);
  he_uniform_init(w, feature_dim + 1, rng);
}

int CompositionFcHead::row_of(Pair p) const {
  auto it = index.find(pair_key(p));
  return it == index.end() ? -1 : it->second;
}

// ------------------------------------------------------------ model params

ModelParams ModelParams::init(const ModelSpec& spec, uint64_t seed) {
  std::mt19937_64 rng(seed);
  ModelParams m;
  m.variant = spec.variant;
  m.feature_dim = spec.feature_dim;
  EncoderSpec enc = spec.encoder;
  enc.feature_dim = spec.feature_dim;
  m.encoder.init(enc, rng);
  m.attr_head.init(spec.num_attrs, spec.feature_dim, rng);
  m.obj_head.init(spec.num_objs, spec.feature_dim, rng);
  m.comp.init(spec.feature_dim, rng);
  m.comp.leaky_slope = spec.leaky_slope;
  m.comp.dropout_rate = spec.dropout_rate;
  if (spec.variant == ModelVariant::kCompositionFc)
    m.fc.init(spec.fc_pairs, spec.feature_dim, rng);
  return m;
}

ModelParams ModelParams::zeros_like(const ModelParams& m) {
  ModelParams z = m;
  z.for_each_tensor([](const char*, double* p, size_t n) { std::fill(p, p + n, 0.0); });
  return z;
}

std::pair<Vec, Vec> ModelParams::head_scores(const Vec& feature) const {
  return {attr_head.scores(feature), obj_head.scores(feature)};
}

Vec ModelParams::compose_classifier(const Vec& w_attr, const Vec& w_obj, Mode mode,
                                    std::mt19937_64* rng) const {
  const int d = feature_dim;
  if (static_cast<int>(w_attr.size()) != d + 1 || static_cast<int>(w_obj.size()) != d + 1)
    throw DimensionError("constituent classifier size mismatch");
  Vec u(2 * (d + 1));
  std::copy(w_attr.begin(), w_attr.end(), u.begin());
  std::copy(w_obj.begin(), w_obj.end(), u.begin() + d + 1);

  Vec z1 = matvec(comp.w1, u);
  for (int i = 0; i < d; ++i) z1[i] += comp.b1[i];
  Vec h1 = leaky_relu(z1, comp.leaky_slope);
  if (mode == Mode::kTrain) {
    if (!rng) throw ConfigError("train-mode composition needs an rng for dropout");
    std::bernoulli_distribution keep(1.0 - comp.dropout_rate);
    const double inv = 1.0 / (1.0 - comp.dropout_rate);
    for (int i = 0; i < d; ++i) h1[i] = keep(*rng) ? h1[i] * inv : 0.0;
  }
  Vec z2 = matvec(comp.w2, h1);
  for (int i = 0; i < d; ++i) z2[i] += comp.b2[i];
  Vec h2 = leaky_relu(z2, comp.leaky_slope);
  if (mode == Mode::kTrain) {
    std::bernoulli_distribution keep(1.0 - comp.dropout_rate);
    const double inv = 1.0 / (1.0 - comp.dropout_rate);
    for (int i = 0; i < d; ++i) h2[i] = keep(*rng) ? h2[i] * inv : 0.0;
  }
  Vec out = matvec(comp.w3, h2);
  for (int i = 0; i <= d; ++i) out[i] += comp.b3[i];
  return out;
}

double ModelParams::composition_score(const Vec& w_ao, const Vec& feature) const {
  if (static_cast<int>(w_ao.size()) != feature_dim + 1 ||
      static_cast<int>(feature.size()) != feature_dim)
    throw DimensionError("composition score size mismatch");
  return dot(w_ao.data(), feature.data(), feature_dim) + w_ao.back();
}

// --------------------------------------------------------- mlp pair scorer

int MlpPairScorer::add(Pair p) {
  auto [it, inserted] = index_.try_emplace(pair_key(p), static_cast<int>(pairs_.size()));
  if (inserted) pairs_.push_back(p);
  return it->second;
}

int MlpPairScorer::slot(Pair p) const {
  auto it = index_.find(pair_key(p));
  return it == index_.end() ? -1 : it->second;
}

void MlpPairScorer::forward(const Vec& phi_aug, Mode mode, std::mt19937_64* rng) {
  const int d = model_.feature_dim;
  const int n = static_cast<int>(pairs_.size());
  train_ = (mode == Mode::kTrain);
  phi_aug_ = phi_aug;

  u_ = Matrix(n, 2 * (d + 1));
  for (int s = 0; s < n; ++s) {
    double* row = u_.row(s);
    const Pair p = pairs_[s];
    const double* wa = model_.attr_head.w.row(p.attr);
    const double* wo = model_.obj_head.w.row(p.obj);
    std::copy(wa, wa + d, row);
    row[d] = model_.attr_head.b[p.attr];
    std::copy(wo, wo + d, row + d + 1);
    row[2 * d + 1] = model_.obj_head.b[p.obj];
  }

  z1_ = Matrix(n, d);
  linear_forward_into(u_, model_.comp.w1, model_.comp.b1, z1_);
  h1d_ = Matrix(n, d);
  mask1_ = Matrix(n, d, 1.0);
  mask2_ = Matrix(n, d, 1.0);
  const double slope = model_.comp.leaky_slope;
  if (train_) {
    if (!rng) throw ConfigError("train-mode composition needs an rng for dropout");
    std::bernoulli_distribution keep(1.0 - model_.comp.dropout_rate);
    const double inv = 1.0 / (1.0 - model_.comp.dropout_rate);
    for (size_t i = 0; i < mask1_.size(); ++i) mask1_.data()[i] = keep(*rng) ? inv : 0.0;
    for (size_t i = 0; i < mask2_.size(); ++i) mask2_.data()[i] = keep(*rng) ? inv : 0.0;
  }
  for (size_t i = 0; i < z1_.size(); ++i)
    h1d_.data()[i] = leaky_relu(z1_.data()[i], slope) * mask1_.data()[i];

  z2_ = Matrix(n, d);
  linear_forward_into(h1d_, model_.comp.w2, model_.comp.b2, z2_);
  h2d_ = Matrix(n, d);
  for (size_t i = 0; i < z2_.size(); ++i)
    h2d_.data()[i] = leaky_relu(z2_.data()[i], slope) * mask2_.data()[i];

  wao_ = Matrix(n, d + 1);
  linear_forward_into(h2d_, model_.comp.w3, model_.comp.b3, wao_);

  logits_.assign(n, 0.0);
  for (int s = 0; s < n; ++s) logits_[s] = dot(wao_.row(s), phi_aug.data(), d + 1);
  dlogits_.assign(n, 0.0);
}

void MlpPairScorer::backward(ModelParams& grads, Vec& phi_grad, bool detach_constituents) {
  const int d = model_.feature_dim;
  const int n = static_cast<int>(pairs_.size());
  const double slope = model_.comp.leaky_slope;

  // d logit / d wao = phi_aug; d logit / d phi = wao (feature part only).
  Matrix dwao(n, d + 1);
  for (int s = 0; s < n; ++s) {
    const double g = dlogits_[s];
    if (g == 0.0) continue;
    double* row = dwao.row(s);
    for (int j = 0; j <= d; ++j) row[j] = g * phi_aug_[j];
    const double* w = wao_.row(s);
    for (int j = 0; j < d; ++j) phi_grad[j] += g * w[j];
  }

  gemm_tn_acc(dwao, h2d_, grads.comp.w3);
  for (int s = 0; s < n; ++s)
    for (int j = 0; j <= d; ++j) grads.comp.b3[j] += dwao(s, j);

  Matrix dh2(n, d);
  gemm_nn_into(dwao, model_.comp.w3, dh2);
  for (size_t i = 0; i < dh2.size(); ++i)
    dh2.data()[i] *= mask2_.data()[i] * leaky_relu_grad(z2_.data()[i], slope);

  gemm_tn_acc(dh2, h1d_, grads.comp.w2);
  for (int s = 0; s < n; ++s)
    for (int j = 0; j < d; ++j) grads.comp.b2[j] += dh2(s, j);

  Matrix dh1(n, d);
  gemm_nn_into(dh2, model_.comp.w2, dh1);
  for (size_t i = 0; i < dh1.size(); ++i)
    dh1.data()[i] *= mask1_.data()[i] * leaky_relu_grad(z1_.data()[i], slope);

  gemm_tn_acc(dh1, u_, grads.comp.w1);
  for (int s = 0; s < n; ++s)
    for (int j = 0; j < d; ++j) grads.comp.b1[j] += dh1(s, j);

  if (detach_constituents) return;

  Matrix du(n, 2 * (d + 1));
  gemm_nn_into(dh1, model_.comp.w1, du);
  for (int s = 0; s < n; ++s) {
    const Pair p = pairs_[s];
    const double* row = du.row(s);
    double* ga = grads.attr_head.w.row(p.attr);
    double* go = grads.obj_head.w.row(p.obj);
    for (int j = 0; j < d; ++j) ga[j] += row[j];
    grads.attr_head.b[p.attr] += row[d];
    for (int j = 0; j < d; ++j) go[j] += row[d + 1 + j];
    grads.obj_head.b[p.obj] += row[2 * d + 1];
  }
}

// ---------------------------------------------------------- fc pair scorer

int FcPairScorer::add(Pair p) {
  const int row = model_.fc.row_of(p);
  if (row < 0) throw ConfigError("pair not covered by the fc head");
  auto [it, inserted] = index_.try_emplace(pair_key(p), static_cast<int>(rows_.size()));
  if (inserted) rows_.push_back(row);
  return it->second;
}

int FcPairScorer::slot(Pair p) const {
  auto it = index_.find(pair_key(p));
  return it == index_.end() ? -1 : it->second;
}

void FcPairScorer::forward(const Vec& phi_aug, Mode, std::mt19937_64*) {
  const int d = model_.feature_dim;
  phi_aug_ = phi_aug;
  logits_.assign(rows_.size(), 0.0);
  for (size_t s = 0; s < rows_.size(); ++s)
    logits_[s] = dot(model_.fc.w.row(rows_[s]), phi_aug.data(), d + 1);
  dlogits_.assign(rows_.size(), 0.0);
}

void FcPairScorer::backward(ModelParams& grads, Vec& phi_grad, bool) {
  const int d = model_.feature_dim;
  for (size_t s = 0; s < rows_.size(); ++s) {
    const double g = dlogits_[s];
    if (g == 0.0) continue;
    double* gw = grads.fc.w.row(rows_[s]);
    for (int j = 0; j <= d; ++j) gw[j] += g * phi_aug_[j];
    const double* w = model_.fc.w.row(rows_[s]);
    for (int j = 0; j < d; ++j) phi_grad[j] += g * w[j];
  }
}

}  // namespace compnet
