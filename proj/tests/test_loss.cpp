// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "compnet/errors.hpp"
#include "compnet/loss.hpp"
#include "compnet/model.hpp"
#include "compnet/numerics.hpp"
#include "helpers.hpp"

using namespace compnet;

namespace {

constexpr double kLog2 = 0.6931471805599453;
constexpr double kLog4 = 1.3862943611198906;

ModelSpec loss_spec(ModelVariant v, int num_attrs, int num_objs, int d = 6) {
  ModelSpec spec;
  spec.variant = v;
  spec.num_attrs = num_attrs;
  spec.num_objs = num_objs;
  spec.feature_dim = d;
  spec.encoder.kind = EncoderKind::kIdentity;
  spec.encoder.input_dim = spec.encoder.feature_dim = d;
  return spec;
}

Vec pack(ModelParams& m) {
  Vec out;
  m.for_each_tensor(
      [&](const char*, double* p, size_t n) { out.insert(out.end(), p, p + n); });
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

// Eval-mode composed logit for one pair, via the single-pair path.
double composed_logit(const ModelParams& m, Pair p, const Vec& phi) {
  const Vec w = m.compose_classifier(m.attr_head.classifier(p.attr),
                                     m.obj_head.classifier(p.obj), Mode::kEval);
  return m.composition_score(w, phi);
}

}  // namespace

TEST_CASE("multilabel cross-entropy on uniform logits") {
  // Two classes, one positive: -log(1/2).
  CHECK(multilabel_ce({0.0, 0.0}, {0}) == doctest::Approx(kLog2).epsilon(1e-12));
  // Four classes, two positives, uniform: mean of two -log(1/4) terms.
  CHECK(multilabel_ce({0.0, 0.0, 0.0, 0.0}, {0, 2}) ==
        doctest::Approx(kLog4).epsilon(1e-12));
  // Every class positive on uniform logits: log C.
  CHECK(multilabel_ce(Vec(7, 3.25), {0, 1, 2, 3, 4, 5, 6}) ==
        doctest::Approx(std::log(7.0)).epsilon(1e-12));

  CHECK_THROWS_AS(multilabel_ce({0.0, 1.0}, {}), DataFormatError);
  CHECK_THROWS_AS(multilabel_ce({0.0, 1.0}, {5}), DimensionError);
}

TEST_CASE("multilabel cross-entropy gradient is softmax minus targets") {
  std::mt19937_64 rng(41);
  const Vec logits = testutil::random_vec(6, rng, -2.0, 2.0);
  const std::vector<int> pos = {1, 4};

  Vec grad(6, 0.0);
  multilabel_ce(logits, pos, &grad);
  const Vec p = softmax(logits);
  for (int i = 0; i < 6; ++i) {
    double target = (i == 1 || i == 4) ? 0.5 : 0.0;
    CHECK(grad[i] == doctest::Approx(p[i] - target).epsilon(1e-12));
  }

  // And it matches finite differences of the loss itself.
  DiffOp op;
  op.forward = [&](const Vec& x) { return Vec{multilabel_ce(x, pos)}; };
  op.backward = [&](const Vec& x, const Vec& up) {
    Vec g(x.size(), 0.0);
    multilabel_ce(x, pos, &g);
    for (double& v : g) v *= up[0];
    return g;
  };
  CHECK(grad_check(op, logits, 1e-5, rng) < 1e-4);
}

TEST_CASE("hard negatives: highest detached product outside the positives") {
  // p_attr = [0.9, 0.1], p_obj = [0.8, 0.2], all four pairs available,
  // (0,0) positive. Products: (0,1)=0.18, (1,0)=0.08, (1,1)=0.02.
  const Vec pa = {0.9, 0.1}, po = {0.8, 0.2};
  const std::vector<Pair> pool = {{0, 0}, {0, 1}, {1, 0}, {1, 1}};
  const std::vector<Pair> positives = {{0, 0}};

  const auto top1 = select_hard_negatives(pa, po, pool, positives, 1);
  REQUIRE(top1.size() == 1);
  CHECK(top1[0] == Pair{0, 1});

  const auto top2 = select_hard_negatives(pa, po, pool, positives, 2);
  REQUIRE(top2.size() == 2);
  CHECK(top2[0] == Pair{0, 1});
  CHECK(top2[1] == Pair{1, 0});

  // Asking for more than exists returns everything except the positives.
  const auto all = select_hard_negatives(pa, po, pool, positives, 99);
  CHECK(all.size() == 3);
  for (const Pair& p : all) CHECK(!(p == Pair{0, 0}));
}

TEST_CASE("hard negatives never leave the pool and never include positives") {
  std::mt19937_64 rng(43);
  for (int trial = 0; trial < 50; ++trial) {
    const int na = 6, no = 7;
    Vec pa = softmax(testutil::random_vec(na, rng, -2, 2));
    Vec po = softmax(testutil::random_vec(no, rng, -2, 2));
    // Pool = a random subset of the grid standing in for the seen pairs.
    std::vector<Pair> pool;
    for (int a = 0; a < na; ++a)
      for (int o = 0; o < no; ++o)
        if (rng() % 3 != 0) pool.push_back({a, o});
    if (pool.size() < 3) continue;
    std::vector<Pair> positives = {pool[rng() % pool.size()], pool[rng() % pool.size()]};

    const auto negs = select_hard_negatives(pa, po, pool, positives, 5);
    for (const Pair& n : negs) {
      CHECK(std::find(pool.begin(), pool.end(), n) != pool.end());
      CHECK(std::find(positives.begin(), positives.end(), n) == positives.end());
    }

    // Selection is a function of the candidate *set*: shuffling the pool
    // changes nothing.
    std::vector<Pair> shuffled = pool;
    std::shuffle(shuffled.begin(), shuffled.end(), rng);
    auto negs2 = select_hard_negatives(pa, po, shuffled, positives, 5);
    auto sorted = [](std::vector<Pair> v) {
      std::sort(v.begin(), v.end());
      return v;
    };
    CHECK(sorted(negs) == sorted(negs2));
  }
}

TEST_CASE("hard negative ties break toward the smallest pair") {
  const Vec pa = {0.5, 0.5}, po = {0.5, 0.5};
  const std::vector<Pair> pool = {{1, 1}, {0, 1}, {1, 0}};
  const auto negs = select_hard_negatives(pa, po, pool, {}, 2);
  REQUIRE(negs.size() == 2);
  CHECK(negs[0] == Pair{0, 1});
  CHECK(negs[1] == Pair{1, 0});
}

TEST_CASE("hard negative argument validation") {
  const Vec pa = {1.0}, po = {1.0};
  CHECK_THROWS_AS(select_hard_negatives(pa, po, {{0, 0}}, {}, 0), ConfigError);
  // Every candidate is a positive: nothing to mine.
  CHECK_THROWS_AS(select_hard_negatives(pa, po, {{0, 0}}, {{0, 0}}, 1), DataFormatError);
  // Pair ids must index into the probability vectors.
  CHECK_THROWS_AS(select_hard_negatives(pa, po, {{3, 0}}, {}, 1), DimensionError);
}

TEST_CASE("approximate joint softmax") {
  // No negatives: the positive is the whole support.
  CHECK(approx_joint_prob(1.7, {}) == doctest::Approx(1.0).epsilon(1e-12));
  // One negative with the same logit: one of two.
  CHECK(approx_joint_prob(0.3, {0.3}) == doctest::Approx(0.5).epsilon(1e-12));

  // With every other grid cell as a negative, the approximation is exact:
  // compare against a direct softmax over all 25 logits.
  std::mt19937_64 rng(47);
  const Vec grid = testutil::random_vec(25, rng, -3.0, 3.0);
  const int pos = 13;
  Vec negs;
  for (int i = 0; i < 25; ++i)
    if (i != pos) negs.push_back(grid[i]);
  double denom = 0.0;
  for (double s : grid) denom += std::exp(s);
  const double exact = std::exp(grid[pos]) / denom;
  CHECK(std::abs(approx_joint_prob(grid[pos], negs) - exact) <= 1e-9);
}

TEST_CASE("conditional probability splits the marginal across the row") {
  // Single-element vocabulary: the conditional is the marginal.
  CHECK(conditional_prob(0.37, {2.5}, 0, 1) == doctest::Approx(0.37).epsilon(1e-12));
  // Uniform row of four: a quarter of the marginal each.
  CHECK(conditional_prob(0.6, {1.0, 1.0, 1.0, 1.0}, 2, 4) ==
        doctest::Approx(0.15).epsilon(1e-12));

  std::mt19937_64 rng(53);
  const Vec row = testutil::random_vec(5, rng, -2.0, 2.0);
  const double pm = 0.42;
  const Vec sm = softmax(row);
  for (int i = 0; i < 5; ++i)
    CHECK(conditional_prob(pm, row, i, 5) == doctest::Approx(pm * sm[i]).epsilon(1e-12));

  // The conditionals must sum back to the marginal.
  double sum = 0.0;
  for (int i = 0; i < 5; ++i) sum += conditional_prob(pm, row, i, 5);
  CHECK(std::abs(sum - pm) <= 1e-9);

  // A row that does not cover the whole vocabulary is rejected.
  CHECK_THROWS_AS(conditional_prob(0.5, {1.0, 2.0}, 0, 4), DimensionError);
}

TEST_CASE("binary cross-entropy fixed points and gradient") {
  // sigmoid(0) = 1/2 against a positive label: log 2.
  CHECK(bce_loss({0.0}, {1}) == doctest::Approx(kLog2).epsilon(1e-12));
  // Saturated correct predictions cost nearly nothing.
  CHECK(bce_loss({50.0}, {1}) < 1e-9);
  CHECK(bce_loss({-50.0}, {0}) < 1e-9);

  // Two-candidate hand computation via the sigmoid definition.
  const Vec s = {1.0, -2.0};
  const std::vector<char> y = {1, 0};
  auto sigma = [](double v) { return 1.0 / (1.0 + std::exp(-v)); };
  const double ref = 0.5 * (-std::log(sigma(1.0)) - std::log(1.0 - sigma(-2.0)));
  CHECK(bce_loss(s, y) == doctest::Approx(ref).epsilon(1e-12));

  std::mt19937_64 rng(59);
  const Vec logits = testutil::random_vec(4, rng, -3.0, 3.0);
  const std::vector<char> labels = {1, 0, 0, 1};
  DiffOp op;
  op.forward = [&](const Vec& x) { return Vec{bce_loss(x, labels)}; };
  op.backward = [&](const Vec& x, const Vec& up) {
    Vec g(x.size(), 0.0);
    bce_loss(x, labels, &g);
    for (double& v : g) v *= up[0];
    return g;
  };
  CHECK(grad_check(op, logits, 1e-5, rng) < 1e-4);

  CHECK_THROWS_AS(bce_loss({0.0, 1.0}, {1}), DimensionError);
}

TEST_CASE("composition term collapses to the head losses on singleton vocabularies") {
  // One attribute, one object: all softmaxes are over single elements, so
  // every probability is 1 and every loss term vanishes.
  const ModelParams model = ModelParams::init(loss_spec(ModelVariant::kCompNet, 1, 1), 61);
  std::mt19937_64 rng(62);
  const Vec raw = testutil::random_vec(6, rng);
  ImageLabels labels;
  labels.attrs = {0};
  labels.objs = {0};
  LossConfig cfg;

  const LossTerms t =
      image_loss(model, raw, labels, {{0, 0}}, cfg, Mode::kEval, nullptr, 1.0, nullptr);
  CHECK(t.attr == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(t.obj == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(t.comp == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(t.total == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(t.num_positives == 1);
  CHECK(t.num_negatives == 0);
}

TEST_CASE("three probabilities of one half cost three bits") {
  // Composing the published example from the primitives: joint, object-given-
  // attribute and attribute-given-object all equal to 1/2 gives 3 log 2.
  const double p_joint = approx_joint_prob(0.0, {0.0});
  const double p_cond_a = conditional_prob(1.0, {0.0, 0.0}, 0, 2);
  const double p_cond_o = conditional_prob(1.0, {0.0, 0.0}, 1, 2);
  const double ell = -(std::log(p_joint) + std::log(p_cond_a) + std::log(p_cond_o));
  CHECK(ell == doctest::Approx(3 * kLog2).epsilon(1e-12));
}

TEST_CASE("image loss agrees with an external reconstruction") {
  // Independent recomputation of every term from eval-mode primitives.
  const int na = 3, no = 4, d = 6;
  const ModelParams model = ModelParams::init(loss_spec(ModelVariant::kCompNet, na, no), 67);
  std::mt19937_64 rng(68);
  const Vec raw = testutil::random_vec(d, rng);

  ImageLabels labels;
  labels.attrs = {0, 2};
  labels.objs = {1};
  std::vector<Pair> pool;
  for (int a = 0; a < na; ++a)
    for (int o = 0; o < no; ++o) pool.push_back({a, o});
  const std::vector<Pair> negs = {{1, 0}, {2, 3}};

  LossConfig cfg;
  cfg.weights = {0.7, 1.3, 2.1};
  const LossTerms t = image_loss(model, raw, labels, pool, cfg, Mode::kEval, nullptr, 1.0,
                                 nullptr, &negs);

  const Vec phi = model.encode(raw);
  const auto [sa, so] = model.head_scores(phi);
  const double la = multilabel_ce(sa, labels.attrs);
  const double lo = multilabel_ce(so, labels.objs);
  const Vec pa = softmax(sa), po = softmax(so);

  Vec neg_logits;
  for (const Pair& n : negs) neg_logits.push_back(composed_logit(model, n, phi));

  double lao = 0.0;
  const std::vector<Pair> positives = {{0, 1}, {2, 1}};
  for (const Pair& p : positives) {
    const double s_pos = composed_logit(model, p, phi);
    const double p_joint = approx_joint_prob(s_pos, neg_logits);

    Vec row_o(no), row_a(na);
    for (int o = 0; o < no; ++o) row_o[o] = composed_logit(model, {p.attr, o}, phi);
    for (int a = 0; a < na; ++a) row_a[a] = composed_logit(model, {a, p.obj}, phi);
    const double p_cond_a = conditional_prob(pa[p.attr], row_o, p.obj, no);
    const double p_cond_o = conditional_prob(po[p.obj], row_a, p.attr, na);
    lao += -(std::log(p_joint) + std::log(p_cond_a) + std::log(p_cond_o));
  }
  lao /= positives.size();

  CHECK(t.attr == doctest::Approx(la).epsilon(1e-10));
  CHECK(t.obj == doctest::Approx(lo).epsilon(1e-10));
  CHECK(t.comp == doctest::Approx(lao).epsilon(1e-10));
  CHECK(t.total ==
        doctest::Approx(0.7 * la + 1.3 * lo + 2.1 * lao).epsilon(1e-10));
  CHECK(t.num_positives == 2);
  CHECK(t.num_negatives == 2);
}

TEST_CASE("disabling the composition weight reduces to the head losses") {
  const ModelParams model = ModelParams::init(loss_spec(ModelVariant::kCompNet, 4, 5), 71);
  std::mt19937_64 rng(72);
  const Vec raw = testutil::random_vec(6, rng);
  ImageLabels labels;
  labels.attrs = {1};
  labels.objs = {0, 3};
  std::vector<Pair> pool = {{1, 0}, {1, 3}, {2, 2}, {0, 0}};

  LossConfig cfg;
  cfg.weights.lambda_ao = 0.0;
  const LossTerms t =
      image_loss(model, raw, labels, pool, cfg, Mode::kEval, nullptr, 1.0, nullptr);

  const Vec phi = model.encode(raw);
  const auto [sa, so] = model.head_scores(phi);
  CHECK(t.total == doctest::Approx(multilabel_ce(sa, labels.attrs) +
                                   multilabel_ce(so, labels.objs))
                       .epsilon(1e-10));
  CHECK(t.comp == 0.0);
}

TEST_CASE("image loss rejects empty label sets") {
  const ModelParams model = ModelParams::init(loss_spec(ModelVariant::kCompNet, 2, 2), 73);
  ImageLabels empty;
  LossConfig cfg;
  CHECK_THROWS_AS(
      image_loss(model, Vec(6, 0.0), empty, {{0, 0}}, cfg, Mode::kEval, nullptr, 1.0, nullptr),
      DataFormatError);
}

namespace {

// Central-difference error for the scalar loss over packed parameters.
// Unlike grad_check's primitive-op formula, the denominator floor is 1e-3:
// loss values are O(10), so coordinates whose true gradient is exactly zero
// (softmax rows sum to zero into the composer bias) see pure roundoff noise
// of ~1e-9 from the subtraction, which no epsilon can push below the 1e-12
// absolute bar a 1e-8 floor would demand. The floor here makes the check
// "relative 1e-4 or absolute 1e-7, whichever is looser".
double loss_fd_error(const std::function<double(const Vec&)>& f,
                     const std::function<Vec(const Vec&)>& g, const Vec& point,
                     double eps) {
  const Vec analytic = g(point);
  double worst = 0.0;
  for (size_t i = 0; i < point.size(); ++i) {
    Vec hi = point, lo = point;
    hi[i] += eps;
    lo[i] -= eps;
    const double numeric = (f(hi) - f(lo)) / (2 * eps);
    const double rel = std::abs(analytic[i] - numeric) /
                       std::max({std::abs(analytic[i]), std::abs(numeric), 1e-3});
    worst = std::max(worst, rel);
  }
  return worst;
}

// Finite-difference harness over all model parameters for the full loss.
void check_full_loss_gradient(ModelVariant variant, const LossConfig& cfg,
                              EncoderKind enc = EncoderKind::kIdentity) {
  const int na = 3, no = 4, d = 5;
  ModelSpec spec = loss_spec(variant, na, no, d);
  spec.encoder.kind = enc;
  spec.encoder.input_dim = enc == EncoderKind::kIdentity ? d : 7;
  spec.encoder.feature_dim = d;
  spec.encoder.hidden_dim = 6;
  if (variant == ModelVariant::kCompositionFc) {
    // Cover the grid minus a corner so the unscorable path is exercised too.
    for (int a = 0; a < na; ++a)
      for (int o = 0; o < no; ++o)
        if (!(a == na - 1 && o == no - 1)) spec.fc_pairs.push_back({a, o});
  }
  ModelParams base = ModelParams::init(spec, 79);
  std::mt19937_64 rng(80);
  const Vec raw = testutil::random_vec(spec.encoder.input_dim, rng);

  ImageLabels labels;
  labels.attrs = {0, 2};
  labels.objs = {1};
  std::vector<Pair> pool;
  for (int a = 0; a < na; ++a)
    for (int o = 0; o < no; ++o) pool.push_back({a, o});
  const std::vector<Pair> fixed = {{1, 0}, {2, 3}, {0, 0}};

  const Vec point = pack(base);
  auto value = [&](const Vec& flat) {
    ModelParams m = base;
    unpack(m, flat);
    return image_loss(m, raw, labels, pool, cfg, Mode::kEval, nullptr, 1.0, nullptr, &fixed)
        .total;
  };
  auto gradient = [&](const Vec& flat) {
    ModelParams m = base;
    unpack(m, flat);
    ModelParams grads = ModelParams::zeros_like(m);
    image_loss(m, raw, labels, pool, cfg, Mode::kEval, nullptr, 1.0, &grads, &fixed);
    return pack(grads);
  };
  CHECK(loss_fd_error(value, gradient, point, 1e-5) < 1e-4);
}

}  // namespace

TEST_CASE("full loss gradients pass finite differences in every configuration") {
  LossConfig cfg;
  cfg.weights = {1.0, 1.0, 1.0};

  SUBCASE("joint and conditionals") { check_full_loss_gradient(ModelVariant::kCompNet, cfg); }
  SUBCASE("uneven weights") {
    cfg.weights = {0.3, 1.7, 4.0};
    check_full_loss_gradient(ModelVariant::kCompNet, cfg);
  }
  SUBCASE("joint only") {
    cfg.use_conditionals = false;
    check_full_loss_gradient(ModelVariant::kCompNet, cfg);
  }
  SUBCASE("mlp encoder in the loop") {
    check_full_loss_gradient(ModelVariant::kCompNet, cfg, EncoderKind::kMlp);
  }
  SUBCASE("direct per-pair classifiers") {
    check_full_loss_gradient(ModelVariant::kCompositionFc, cfg);
  }
  SUBCASE("binary cross-entropy variant") {
    check_full_loss_gradient(ModelVariant::kBce, cfg);
  }
  SUBCASE("heads only") {
    cfg.weights.lambda_ao = 0.0;
    check_full_loss_gradient(ModelVariant::kSoftmaxProduct, cfg, EncoderKind::kLinear);
  }
}

TEST_CASE("detaching constituents stops composition gradients at the heads") {
  // With the head losses and conditionals off, the only route from the loss
  // to the head weights runs through the composer input. Detaching it must
  // leave the head gradients exactly zero while the composer still learns.
  const ModelParams model = ModelParams::init(loss_spec(ModelVariant::kCompNet, 3, 4), 89);
  std::mt19937_64 rng(90);
  const Vec raw = testutil::random_vec(6, rng);
  ImageLabels labels;
  labels.attrs = {1};
  labels.objs = {2};
  std::vector<Pair> pool;
  for (int a = 0; a < 3; ++a)
    for (int o = 0; o < 4; ++o) pool.push_back({a, o});

  LossConfig cfg;
  cfg.weights = {0.0, 0.0, 1.0};
  cfg.use_conditionals = false;

  auto head_grad_norm = [&](bool detach) {
    LossConfig c = cfg;
    c.detach_constituents = detach;
    ModelParams grads = ModelParams::zeros_like(model);
    image_loss(model, raw, labels, pool, c, Mode::kEval, nullptr, 1.0, &grads);
    double head = 0.0, comp = 0.0;
    grads.for_each_tensor([&](const char* name, double* p, size_t n) {
      double s = 0.0;
      for (size_t i = 0; i < n; ++i) s += p[i] * p[i];
      if (std::string(name).rfind("comp.", 0) == 0)
        comp += s;
      else
        head += s;
    });
    return std::pair<double, double>{head, comp};
  };

  const auto [head_on, comp_on] = head_grad_norm(false);
  const auto [head_off, comp_off] = head_grad_norm(true);
  CHECK(head_on > 0.0);
  CHECK(head_off == 0.0);
  CHECK(comp_on > 0.0);
  CHECK(comp_off > 0.0);
}

TEST_CASE("mined negatives for an image exclude its positives and respect the pool") {
  const int na = 5, no = 6;
  const ModelParams model = ModelParams::init(loss_spec(ModelVariant::kCompNet, na, no), 83);
  std::mt19937_64 rng(84);

  // "Seen" pool misses several grid cells; those must never be selected.
  std::vector<Pair> pool;
  for (int a = 0; a < na; ++a)
    for (int o = 0; o < no; ++o)
      if ((a + o) % 4 != 0) pool.push_back({a, o});

  for (int trial = 0; trial < 30; ++trial) {
    const Vec raw = testutil::random_vec(6, rng, -2.0, 2.0);
    const Vec phi = model.encode(raw);
    const auto [sa, so] = model.head_scores(phi);
    ImageLabels labels;
    labels.attrs = {static_cast<int>(rng() % na)};
    labels.objs = {static_cast<int>(rng() % no)};
    const Pair positive{labels.attrs[0], labels.objs[0]};

    const auto negs =
        select_hard_negatives(softmax(sa), softmax(so), pool, {positive}, 4);
    for (const Pair& n : negs) {
      CHECK(std::find(pool.begin(), pool.end(), n) != pool.end());
      CHECK(!(n == positive));
    }
    CHECK(negs.size() == 4);
  }
}
