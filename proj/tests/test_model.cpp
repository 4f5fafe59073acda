// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <cmath>
#include <random>

#include "compnet/checkpoint.hpp"
#include "compnet/errors.hpp"
#include "compnet/model.hpp"
#include "compnet/numerics.hpp"
#include "helpers.hpp"

using namespace compnet;

namespace {

ModelSpec small_spec(ModelVariant variant = ModelVariant::kCompNet,
                     EncoderKind enc = EncoderKind::kIdentity) {
  ModelSpec spec;
  spec.variant = variant;
  spec.num_attrs = 4;
  spec.num_objs = 5;
  spec.feature_dim = 8;
  spec.encoder.kind = enc;
  spec.encoder.input_dim = enc == EncoderKind::kIdentity ? 8 : 12;
  spec.encoder.feature_dim = 8;
  spec.encoder.hidden_dim = 10;
  if (variant == ModelVariant::kCompositionFc) {
    for (int a = 0; a < spec.num_attrs; ++a)
      for (int o = 0; o < spec.num_objs; o += 2) spec.fc_pairs.push_back({a, o});
  }
  return spec;
}

// Collects every tensor into one flat vector (and can write one back).
Vec pack(ModelParams& m) {
  Vec out;
  m.for_each_tensor([&](const char*, double* p, size_t n) {
    out.insert(out.end(), p, p + n);
  });
  return out;
}

void unpack(ModelParams& m, const Vec& flat) {
  size_t off = 0;
  m.for_each_tensor([&](const char*, double* p, size_t n) {
    for (size_t i = 0; i < n; ++i) p[i] = flat[off + i];
    off += n;
  });
  REQUIRE(off == flat.size());
}

}  // namespace

TEST_CASE("identity encoder is a passthrough") {
  EncoderSpec es;
  es.kind = EncoderKind::kIdentity;
  es.input_dim = es.feature_dim = 6;
  std::mt19937_64 rng(1);
  FeatureEncoder enc;
  enc.init(es, rng);
  const Vec x = testutil::random_vec(6, rng);
  CHECK(enc.forward(x) == x);
}

TEST_CASE("linear encoder maps zero input through zero bias to zero") {
  EncoderSpec es;
  es.kind = EncoderKind::kLinear;
  es.input_dim = 5;
  es.feature_dim = 3;
  std::mt19937_64 rng(2);
  FeatureEncoder enc;
  enc.init(es, rng);
  const Vec y = enc.forward(Vec(5, 0.0));
  for (double v : y) CHECK(v == 0.0);
}

TEST_CASE("encoder parameter gradients pass a finite-difference check") {
  for (EncoderKind kind : {EncoderKind::kLinear, EncoderKind::kMlp}) {
    EncoderSpec es;
    es.kind = kind;
    es.input_dim = 5;
    es.feature_dim = 4;
    es.hidden_dim = 6;
    std::mt19937_64 rng(3);
    FeatureEncoder enc;
    enc.init(es, rng);
    const Vec raw = testutil::random_vec(5, rng);

    // The probe point is the packed parameter vector.
    Vec point;
    enc.for_each_tensor([&](const char*, double* p, size_t n) {
      point.insert(point.end(), p, p + n);
    });

    auto load = [&](const Vec& flat) {
      FeatureEncoder e = enc;
      size_t off = 0;
      e.for_each_tensor([&](const char*, double* p, size_t n) {
        for (size_t i = 0; i < n; ++i) p[i] = flat[off + i];
        off += n;
      });
      return e;
    };

    DiffOp op;
    op.forward = [&](const Vec& flat) { return load(flat).forward(raw); };
    op.backward = [&](const Vec& flat, const Vec& up) {
      FeatureEncoder e = load(flat);
      EncoderCache cache;
      e.forward(raw, &cache);
      FeatureEncoder g = e;
      g.for_each_tensor([&](const char*, double* p, size_t n) {
        std::fill(p, p + n, 0.0);
      });
      e.backward(cache, up, g);
      Vec out;
      g.for_each_tensor([&](const char*, double* p, size_t n) {
        out.insert(out.end(), p, p + n);
      });
      return out;
    };
    CHECK(grad_check(op, point, 1e-5, rng) < 1e-4);
  }
}

TEST_CASE("head scores are the affine map they claim to be") {
  std::mt19937_64 rng(4);
  LinearHead head;
  head.init(5, 3, rng);
  for (int c = 0; c < 5; ++c) head.b[c] = 0.1 * (c + 1);

  // Zero feature isolates the biases.
  const Vec at_zero = head.scores(Vec(3, 0.0));
  for (int c = 0; c < 5; ++c) CHECK(at_zero[c] == doctest::Approx(head.b[c]).epsilon(1e-12));

  // A one-hot feature picks out one weight column plus the bias.
  Vec e1(3, 0.0);
  e1[1] = 1.0;
  const Vec col = head.scores(e1);
  for (int c = 0; c < 5; ++c)
    CHECK(col[c] == doctest::Approx(head.w(c, 1) + head.b[c]).epsilon(1e-12));

  // Random feature agrees with a naive dot product.
  const Vec x = testutil::random_vec(3, rng);
  const Vec s = head.scores(x);
  for (int c = 0; c < 5; ++c) {
    double ref = head.b[c];
    for (int d = 0; d < 3; ++d) ref += head.w(c, d) * x[d];
    CHECK(s[c] == doctest::Approx(ref).epsilon(1e-12));
  }

  // The augmented classifier row carries weights then bias.
  const Vec cl = head.classifier(2);
  REQUIRE(cl.size() == 4);
  CHECK(cl[3] == head.b[2]);
  for (int d = 0; d < 3; ++d) CHECK(cl[d] == head.w(2, d));
}

TEST_CASE("composed classifiers have the right shape and are deterministic in eval mode") {
  const ModelParams model = ModelParams::init(small_spec(), 7);
  const Vec wa = model.attr_head.classifier(1);
  const Vec wo = model.obj_head.classifier(3);

  const Vec w1 = model.compose_classifier(wa, wo, Mode::kEval);
  const Vec w2 = model.compose_classifier(wa, wo, Mode::kEval);
  REQUIRE(w1.size() == 9);  // D + 1
  CHECK(w1 == w2);

  // Training mode requires a dropout source and is reproducible under it.
  CHECK_THROWS_AS(model.compose_classifier(wa, wo, Mode::kTrain), ConfigError);
  std::mt19937_64 r1(99), r2(99);
  CHECK(model.compose_classifier(wa, wo, Mode::kTrain, &r1) ==
        model.compose_classifier(wa, wo, Mode::kTrain, &r2));

  // The map actually depends on its attribute argument.
  Vec wa_bump = wa;
  wa_bump[0] += 0.5;
  CHECK(model.compose_classifier(wa_bump, wo, Mode::kEval) != w1);
}

TEST_CASE("composition score is a plain augmented dot product") {
  const ModelParams model = ModelParams::init(small_spec(), 7);
  std::mt19937_64 rng(5);

  Vec w_ao = testutil::random_vec(9, rng);
  CHECK(model.composition_score(w_ao, Vec(8, 0.0)) ==
        doctest::Approx(w_ao[8]).epsilon(1e-12));

  Vec e1_w(9, 0.0);
  e1_w[0] = 1.0;
  Vec phi(8, 0.0);
  phi[0] = 3.0;
  CHECK(model.composition_score(e1_w, phi) == doctest::Approx(3.0).epsilon(1e-12));

  const Vec f = testutil::random_vec(8, rng);
  double ref = w_ao[8];
  for (int d = 0; d < 8; ++d) ref += w_ao[d] * f[d];
  CHECK(model.composition_score(w_ao, f) == doctest::Approx(ref).epsilon(1e-12));
}

TEST_CASE("batched pair scorer matches the single-pair path in eval mode") {
  const ModelParams model = ModelParams::init(small_spec(), 11);
  std::mt19937_64 rng(6);
  const Vec phi = testutil::random_vec(8, rng);
  const Vec phi_aug = augment_feature(phi);

  MlpPairScorer scorer(model);
  std::vector<Pair> pairs = {{0, 0}, {1, 3}, {3, 4}, {2, 2}};
  for (Pair p : pairs) scorer.add(p);
  scorer.forward(phi_aug, Mode::kEval, nullptr);

  for (Pair p : pairs) {
    const Vec w_ao = model.compose_classifier(model.attr_head.classifier(p.attr),
                                              model.obj_head.classifier(p.obj), Mode::kEval);
    CHECK(scorer.logit(scorer.slot(p)) ==
          doctest::Approx(model.composition_score(w_ao, phi)).epsilon(1e-10));
  }
}

TEST_CASE("scorer gradients through constituents and composition parameters") {
  // Finite differences over the packed model parameters with one scored pair;
  // loss = sum of logits weighted by the upstream probe.
  ModelParams base = ModelParams::init(small_spec(), 13);
  std::mt19937_64 rng(8);
  const Vec phi = testutil::random_vec(8, rng);
  const Vec point = pack(base);

  DiffOp op;
  op.forward = [&](const Vec& flat) {
    ModelParams m = base;
    unpack(m, flat);
    MlpPairScorer scorer(m);
    scorer.add({1, 2});
    scorer.add({3, 0});
    scorer.forward(augment_feature(phi), Mode::kEval, nullptr);
    return Vec{scorer.logit(0), scorer.logit(1)};
  };
  op.backward = [&](const Vec& flat, const Vec& up) {
    ModelParams m = base;
    unpack(m, flat);
    MlpPairScorer scorer(m);
    scorer.add({1, 2});
    scorer.add({3, 0});
    scorer.forward(augment_feature(phi), Mode::kEval, nullptr);
    scorer.add_logit_grad(0, up[0]);
    scorer.add_logit_grad(1, up[1]);
    ModelParams grads = ModelParams::zeros_like(m);
    Vec phi_grad(8, 0.0);
    scorer.backward(grads, phi_grad, /*detach_constituents=*/false);
    return pack(grads);
  };
  CHECK(grad_check(op, point, 1e-5, rng) < 1e-4);
}

TEST_CASE("train-mode dropout zeroes the configured fraction and rescales survivors") {
  // Hand-crafted composition weights expose the second dropout mask directly:
  // with w2 = 0 and b2 = 1 the second hidden layer is all ones before dropout,
  // and w3 = [I; 0] copies it into the output. Every output coordinate is then
  // exactly 0 (dropped) or 1/keep (kept and rescaled).
  ModelParams model = ModelParams::init(small_spec(), 21);
  const int d = model.feature_dim;
  model.comp.w2.fill(0.0);
  std::fill(model.comp.b2.begin(), model.comp.b2.end(), 1.0);
  model.comp.w3.fill(0.0);
  for (int j = 0; j < d; ++j) model.comp.w3(j, j) = 1.0;
  std::fill(model.comp.b3.begin(), model.comp.b3.end(), 0.0);

  const Vec wa = model.attr_head.classifier(0);
  const Vec wo = model.obj_head.classifier(0);

  const Vec at_eval = model.compose_classifier(wa, wo, Mode::kEval);
  for (int j = 0; j < d; ++j) CHECK(at_eval[j] == doctest::Approx(1.0).epsilon(1e-12));

  std::mt19937_64 rng(22);
  const double keep = 1.0 - model.comp.dropout_rate;
  const int trials = 5000;
  long dropped = 0;
  for (int t = 0; t < trials; ++t) {
    const Vec w = model.compose_classifier(wa, wo, Mode::kTrain, &rng);
    for (int j = 0; j < d; ++j) {
      if (w[j] == 0.0) {
        ++dropped;
      } else {
        CHECK(w[j] == doctest::Approx(1.0 / keep).epsilon(1e-12));
      }
    }
  }
  // Binomial(trials * d, 0.3): mean 12000, five sigma is about 460.
  const double rate = static_cast<double>(dropped) / (trials * d);
  CHECK(rate > 0.27);
  CHECK(rate < 0.33);
}

TEST_CASE("checkpoint round-trip preserves every tensor bit for bit") {
  testutil::TempDir tmp("ckpt");
  for (ModelVariant v : {ModelVariant::kCompNet, ModelVariant::kSoftmaxProduct,
                         ModelVariant::kCompositionFc, ModelVariant::kBce}) {
    ModelParams m = ModelParams::init(small_spec(v, EncoderKind::kMlp), 31);
    const std::string path = tmp.path(std::string("m_") + variant_name(v) + ".ckpt");
    save_checkpoint(m, path);
    ModelParams r = load_checkpoint(path);

    CHECK(r.variant == m.variant);
    CHECK(r.feature_dim == m.feature_dim);
    CHECK(r.num_attrs() == m.num_attrs());
    CHECK(r.num_objs() == m.num_objs());
    const Vec a = pack(m), b = pack(r);
    REQUIRE(a.size() == b.size());
    for (size_t i = 0; i < a.size(); ++i) CHECK(a[i] == b[i]);
    if (v == ModelVariant::kCompositionFc) {
      REQUIRE(r.fc.pairs == m.fc.pairs);
    }
  }
}

TEST_CASE("checkpoint loader rejects garbage") {
  testutil::TempDir tmp("ckpt_bad");
  {
    std::ofstream os(tmp.path("bad_magic.ckpt"), std::ios::binary);
    os << "NOPE.........................";
  }
  CHECK_THROWS_AS(load_checkpoint(tmp.path("bad_magic.ckpt")), DataFormatError);

  ModelParams m = ModelParams::init(small_spec(), 1);
  save_checkpoint(m, tmp.path("good.ckpt"));
  const std::string whole = testutil::slurp(tmp.path("good.ckpt"));
  {
    std::ofstream os(tmp.path("trunc.ckpt"), std::ios::binary);
    os.write(whole.data(), static_cast<std::streamsize>(whole.size() / 2));
  }
  CHECK_THROWS_AS(load_checkpoint(tmp.path("trunc.ckpt")), DataFormatError);
  CHECK_THROWS_AS(load_checkpoint(tmp.path("missing.ckpt")), IoError);
}
