// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "compnet/matrix.hpp"
#include "compnet/types.hpp"

namespace compnet {

enum class Mode { kTrain, kEval };

enum class ModelVariant : uint8_t {
  kCompNet = 0,
  kSoftmaxProduct = 1,
  kCompositionFc = 2,
  kBce = 3,
};

const char* variant_name(ModelVariant v);
ModelVariant variant_from_name(const std::string& name);

enum class EncoderKind : uint8_t { kIdentity = 0, kLinear = 1, kMlp = 2 };

struct EncoderSpec {
  EncoderKind kind = EncoderKind::kLinear;
  int input_dim = 0;
  int feature_dim = 0;
  int hidden_dim = 0;  // mlp only
};

struct EncoderCache {
  Vec input;
  Vec z1;  // pre-activation of the hidden layer (mlp) or the output (linear)
  Vec h1;  // post-activation hidden (mlp)
};

// Small trainable map from raw input vectors to D-dimensional features.
class FeatureEncoder {
 public:
  void init(const EncoderSpec& spec, std::mt19937_64& rng);

  const EncoderSpec& spec() const { return spec_; }
  Vec forward(const Vec& raw) const { return forward(raw, nullptr); }
  Vec forward(const Vec& raw, EncoderCache* cache) const;
  // Accumulates parameter gradients into grad_encoder (same shapes as *this).
  void backward(const EncoderCache& cache, const Vec& g_out, FeatureEncoder& grad_encoder) const;

  template <typename F>
  void for_each_tensor(F&& f) {
    if (spec_.kind == EncoderKind::kIdentity) return;
    f("encoder.w1", w1_.data(), w1_.size());
    f("encoder.b1", b1_.data(), b1_.size());
    if (spec_.kind == EncoderKind::kMlp) {
      f("encoder.w2", w2_.data(), w2_.size());
      f("encoder.b2", b2_.data(), b2_.size());
    }
  }

  static constexpr double kLeakySlope = 0.1;

  Matrix w1_;
  Vec b1_;
  Matrix w2_;
  Vec b2_;

 private:
  EncoderSpec spec_;
};

// Single fully-connected classifier head; row c plus bias c form the
// augmented classifier vector for class c.
struct LinearHead {
  Matrix w;  // (num_classes x D)
  Vec b;     // (num_classes)

  void init(int num_classes, int feature_dim, std::mt19937_64& rng);
  int num_classes() const { return w.rows(); }
  // Row c augmented with its bias: length D+1.
  Vec classifier(int c) const;
  Vec scores(const Vec& feature) const;

  template <typename F>
  void for_each_tensor(const char* prefix, F&& f) {
    std::string pw = std::string(prefix) + ".w";
    std::string pb = std::string(prefix) + ".b";
    f(pw.c_str(), w.data(), w.size());
    f(pb.c_str(), b.data(), b.size());
  }
};

// MLP composing two augmented classifiers into one:
// 2(D+1) -> D -> D -> D+1, leaky ReLU, inverted dropout after each hidden
// activation in train mode.
struct CompositionMlp {
  Matrix w1;
  Vec b1;
  Matrix w2;
  Vec b2;
  Matrix w3;
  Vec b3;
  double leaky_slope = 0.1;
  double dropout_rate = 0.3;

  void init(int feature_dim, std::mt19937_64& rng);
  int feature_dim() const { return w2.rows(); }

  template <typename F>
  void for_each_tensor(F&& f) {
    f("comp.w1", w1.data(), w1.size());
    f("comp.b1", b1.data(), b1.size());
    f("comp.w2", w2.data(), w2.size());
    f("comp.b2", b2.data(), b2.size());
    f("comp.w3", w3.data(), w3.size());
    f("comp.b3", b3.data(), b3.size());
  }
};

// Direct per-pair linear classifiers over a fixed pair list (seen pairs);
// rows are augmented (D+1) vectors.
struct CompositionFcHead {
  std::vector<Pair> pairs;
  Matrix w;  // (num_pairs x (D+1))
  std::unordered_map<uint64_t, int> index;

  void init(std::vector<Pair> pair_list, int feature_dim, std::mt19937_64& rng);
  int row_of(Pair p) const;
  bool empty() const { return pairs.empty(); }

  template <typename F>
  void for_each_tensor(F&& f) {
    if (!pairs.empty()) f("fc.w", w.data(), w.size());
  }
};

struct ModelSpec {
  ModelVariant variant = ModelVariant::kCompNet;
  EncoderSpec encoder;
  int num_attrs = 0;
  int num_objs = 0;
  int feature_dim = 0;
  double leaky_slope = 0.1;
  double dropout_rate = 0.3;
  std::vector<Pair> fc_pairs;  // composition_fc only
};

struct ModelParams {
  ModelVariant variant = ModelVariant::kCompNet;
  int feature_dim = 0;
  FeatureEncoder encoder;
  LinearHead attr_head;
  LinearHead obj_head;
  CompositionMlp comp;
  CompositionFcHead fc;

  static ModelParams init(const ModelSpec& spec, uint64_t seed);
  // Same shapes, all tensors zeroed; used for gradient accumulation.
  static ModelParams zeros_like(const ModelParams& m);

  int num_attrs() const { return attr_head.num_classes(); }
  int num_objs() const { return obj_head.num_classes(); }

  Vec encode(const Vec& raw) const { return encoder.forward(raw); }
  Vec encode(const Vec& raw, EncoderCache* cache) const { return encoder.forward(raw, cache); }
  // (attribute scores, object scores)
  std::pair<Vec, Vec> head_scores(const Vec& feature) const;
  Vec compose_classifier(const Vec& w_attr, const Vec& w_obj, Mode mode,
                         std::mt19937_64* rng = nullptr) const;
  double composition_score(const Vec& w_ao, const Vec& feature) const;

  template <typename F>
  void for_each_tensor(F&& f) {
    encoder.for_each_tensor(f);
    attr_head.for_each_tensor("attr", f);
    obj_head.for_each_tensor("obj", f);
    comp.for_each_tensor(f);
    fc.for_each_tensor(f);
  }
};

// Batched scoring of a set of pairs against one image feature, with
// gradient accumulation. Two implementations: the composition MLP and the
// direct FC head.
class PairScorer {
 public:
  virtual ~PairScorer() = default;
  virtual bool scorable(Pair p) const = 0;
  // Registers a pair (deduplicated); returns its slot.
  virtual int add(Pair p) = 0;
  virtual int slot(Pair p) const = 0;
  virtual size_t size() const = 0;
  virtual void forward(const Vec& phi_aug, Mode mode, std::mt19937_64* rng) = 0;
  virtual double logit(int slot) const = 0;
  virtual void add_logit_grad(int slot, double g) = 0;
  // Accumulates parameter gradients into grads and the feature-path term
  // into phi_grad (length D).
  virtual void backward(ModelParams& grads, Vec& phi_grad, bool detach_constituents) = 0;
};

class MlpPairScorer : public PairScorer {
 public:
  explicit MlpPairScorer(const ModelParams& model) : model_(model) {}
  bool scorable(Pair) const override { return true; }
  int add(Pair p) override;
  int slot(Pair p) const override;
  size_t size() const override { return pairs_.size(); }
  void forward(const Vec& phi_aug, Mode mode, std::mt19937_64* rng) override;
  double logit(int s) const override { return logits_[s]; }
  void add_logit_grad(int s, double g) override { dlogits_[s] += g; }
  void backward(ModelParams& grads, Vec& phi_grad, bool detach_constituents) override;
  // Composed classifier row for a slot, valid after forward.
  const double* classifier(int s) const { return wao_.row(s); }

 private:
  const ModelParams& model_;
  std::vector<Pair> pairs_;
  std::unordered_map<uint64_t, int> index_;
  Matrix u_, z1_, h1d_, z2_, h2d_, wao_;
  Matrix mask1_, mask2_;
  Vec phi_aug_;
  Vec logits_, dlogits_;
  bool train_ = false;
};

class FcPairScorer : public PairScorer {
 public:
  explicit FcPairScorer(const ModelParams& model) : model_(model) {}
  bool scorable(Pair p) const override { return model_.fc.row_of(p) >= 0; }
  int add(Pair p) override;
  int slot(Pair p) const override;
  size_t size() const override { return rows_.size(); }
  void forward(const Vec& phi_aug, Mode mode, std::mt19937_64* rng) override;
  double logit(int s) const override { return logits_[s]; }
  void add_logit_grad(int s, double g) override { dlogits_[s] += g; }
  void backward(ModelParams& grads, Vec& phi_grad, bool detach_constituents) override;

 private:
  const ModelParams& model_;
  std::vector<int> rows_;  // slot -> fc row
  std::unordered_map<uint64_t, int> index_;
  Vec phi_aug_;
  Vec logits_, dlogits_;
};

// Appends the bias multiplier: [feature; 1].
Vec augment_feature(const Vec& feature);

}  // namespace compnet
