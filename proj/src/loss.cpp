// SPDX-License-Identifier: Apache-2.0
#include "compnet/loss.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <unordered_set>

#include "compnet/errors.hpp"
#include "compnet/numerics.hpp"

namespace compnet {

void LossTerms::accumulate(const LossTerms& t, double w) {
  total += w * t.total;
  attr += w * t.attr;
  obj += w * t.obj;
  comp += w * t.comp;
  log_p_joint += w * t.log_p_joint;
  log_p_cond_attr += w * t.log_p_cond_attr;
  log_p_cond_obj += w * t.log_p_cond_obj;
  num_positives += t.num_positives;
  num_negatives += t.num_negatives;
}

double multilabel_ce(const Vec& logits, const std::vector<int>& positives, Vec* grad_logits) {
  if (positives.empty()) throw DataFormatError("multilabel_ce: empty positive set");
  for (int c : positives)
    if (c < 0 || c >= static_cast<int>(logits.size()))
      throw DimensionError("multilabel_ce: positive index out of range");
  const Vec lp = log_softmax(logits);
  const double t = 1.0 / static_cast<double>(positives.size());
  double loss = 0.0;
  for (int c : positives) loss -= t * lp[c];
  if (grad_logits) {
    if (grad_logits->size() != logits.size())
      throw DimensionError("multilabel_ce: gradient buffer size mismatch");
    for (size_t i = 0; i < logits.size(); ++i) (*grad_logits)[i] += std::exp(lp[i]);
    for (int c : positives) (*grad_logits)[c] -= t;
  }
  return loss;
}

std::vector<Pair> select_hard_negatives(const Vec& p_attr, const Vec& p_obj,
                                        const std::vector<Pair>& pool,
                                        const std::vector<Pair>& positives, int k) {
  if (k < 1) throw ConfigError("select_hard_negatives: k must be >= 1");
  std::unordered_set<uint64_t> pos;
  pos.reserve(positives.size());
  for (const Pair& p : positives) pos.insert(pair_key(p));

  std::vector<Pair> cand;
  cand.reserve(pool.size());
  for (const Pair& p : pool) {
    if (p.attr < 0 || p.attr >= static_cast<int>(p_attr.size()) || p.obj < 0 ||
        p.obj >= static_cast<int>(p_obj.size()))
      throw DimensionError("select_hard_negatives: pair id outside probability vectors");
    if (!pos.count(pair_key(p))) cand.push_back(p);
  }
  if (cand.empty())
    throw DataFormatError("select_hard_negatives: no candidates after excluding positives");

  // Highest product first; exact ties resolved by ascending (attr, obj).
  auto better = [&](const Pair& x, const Pair& y) {
    const double sx = p_attr[x.attr] * p_obj[x.obj];
    const double sy = p_attr[y.attr] * p_obj[y.obj];
    if (sx != sy) return sx > sy;
    return x < y;
  };
  const size_t take = std::min<size_t>(static_cast<size_t>(k), cand.size());
  std::partial_sort(cand.begin(), cand.begin() + take, cand.end(), better);
  cand.resize(take);
  return cand;
}

double approx_joint_prob(double s_pos, const Vec& s_negs) {
  Vec logits(1 + s_negs.size());
  logits[0] = s_pos;
  std::copy(s_negs.begin(), s_negs.end(), logits.begin() + 1);
  return softmax(logits)[0];
}

double conditional_prob(double p_marginal, const Vec& s_row, int index, int vocab_size) {
  if (static_cast<int>(s_row.size()) != vocab_size)
    throw DimensionError("conditional_prob: row does not cover the vocabulary");
  if (index < 0 || index >= vocab_size)
    throw DimensionError("conditional_prob: index out of range");
  return p_marginal * softmax(s_row)[index];
}

double bce_loss(const Vec& logits, const std::vector<char>& labels, Vec* grad_logits) {
  if (logits.size() != labels.size()) throw DimensionError("bce_loss: size mismatch");
  if (logits.empty()) throw DataFormatError("bce_loss: empty candidate set");
  const double n = static_cast<double>(logits.size());
  double loss = 0.0;
  for (size_t i = 0; i < logits.size(); ++i) {
    const double s = logits[i];
    const double y = labels[i] ? 1.0 : 0.0;
    // max(s,0) - s*y + log(1 + exp(-|s|)) is the stable form of the BCE.
    loss += std::max(s, 0.0) - s * y + std::log1p(std::exp(-std::abs(s)));
    if (grad_logits) {
      const double sigma = 1.0 / (1.0 + std::exp(-s));
      (*grad_logits)[i] += (sigma - y) / n;
    }
  }
  return loss / n;
}

namespace {

// Conditional softmax row: the opposite-axis ids scored for one fixed
// constituent, with their scorer slots.
struct CondRow {
  std::vector<int> ids;
  std::vector<int> slots;
};

CondRow build_row(PairScorer& scorer, bool fixed_is_attr, int fixed, int vocab,
                  const std::vector<int>& required, int cap, std::mt19937_64* rng) {
  CondRow row;
  if (cap > 0 && vocab > cap) {
    if (!rng) throw ConfigError("conditional row subsampling needs an rng");
    std::unordered_set<int> chosen(required.begin(), required.end());
    std::uniform_int_distribution<int> pick(0, vocab - 1);
    while (static_cast<int>(chosen.size()) < cap) chosen.insert(pick(*rng));
    row.ids.assign(chosen.begin(), chosen.end());
    std::sort(row.ids.begin(), row.ids.end());
  } else {
    row.ids.resize(vocab);
    for (int i = 0; i < vocab; ++i) row.ids[i] = i;
  }
  std::vector<int> kept;
  kept.reserve(row.ids.size());
  for (int id : row.ids) {
    const Pair p = fixed_is_attr ? Pair{fixed, id} : Pair{id, fixed};
    if (!scorer.scorable(p)) continue;
    kept.push_back(id);
    row.slots.push_back(scorer.add(p));
  }
  row.ids = std::move(kept);
  return row;
}

}  // namespace

LossTerms image_loss(const ModelParams& model, const Vec& raw, const ImageLabels& labels,
                     const std::vector<Pair>& negative_pool, const LossConfig& cfg,
                     Mode mode, std::mt19937_64* rng, double weight, ModelParams* grads,
                     const std::vector<Pair>* fixed_negatives) {
  if (labels.attrs.empty() || labels.objs.empty())
    throw DataFormatError("image_loss: image without attribute or object labels");

  EncoderCache enc_cache;
  const Vec phi = model.encode(raw, grads ? &enc_cache : nullptr);
  const Vec s_a = model.attr_head.scores(phi);
  const Vec s_o = model.obj_head.scores(phi);
  const Vec p_a = softmax(s_a);
  const Vec p_o = softmax(s_o);

  LossTerms out;
  // Head-score gradients accumulate the CE part and the conditional-marginal
  // parts, each already scaled by its lambda and by weight.
  Vec g_sa(s_a.size(), 0.0), g_so(s_o.size(), 0.0);
  out.attr = multilabel_ce(s_a, labels.attrs, grads ? &g_sa : nullptr);
  out.obj = multilabel_ce(s_o, labels.objs, grads ? &g_so : nullptr);
  if (grads) {
    for (double& g : g_sa) g *= cfg.weights.lambda_a * weight;
    for (double& g : g_so) g *= cfg.weights.lambda_o * weight;
  }

  Vec phi_grad(model.feature_dim, 0.0);
  const double l_ao = cfg.weights.lambda_ao;
  std::unique_ptr<PairScorer> scorer;
  if (l_ao > 0.0) {
    std::vector<Pair> positives;
    positives.reserve(labels.attrs.size() * labels.objs.size());
    for (int a : labels.attrs)
      for (int o : labels.objs) positives.push_back({a, o});

    if (model.variant == ModelVariant::kCompositionFc)
      scorer = std::make_unique<FcPairScorer>(model);
    else
      scorer = std::make_unique<MlpPairScorer>(model);

    // The FC head can only score pairs it has rows for; unscorable
    // positives drop out of the composition term.
    std::vector<Pair> scored_pos;
    for (const Pair& p : positives)
      if (scorer->scorable(p)) scored_pos.push_back(p);

    if (!scored_pos.empty()) {
      std::vector<Pair> negs;
      if (fixed_negatives) {
        for (const Pair& p : *fixed_negatives)
          if (scorer->scorable(p)) negs.push_back(p);
      } else if (cfg.num_negatives != 0) {
        std::unordered_set<uint64_t> pos_keys;
        for (const Pair& p : positives) pos_keys.insert(pair_key(p));
        std::vector<Pair> cand;
        cand.reserve(negative_pool.size());
        for (const Pair& p : negative_pool)
          if (!pos_keys.count(pair_key(p)) && scorer->scorable(p)) cand.push_back(p);
        if (!cand.empty()) {
          const int k = cfg.num_negatives < 0 ? static_cast<int>(cand.size())
                                              : std::min<int>(cfg.num_negatives, cand.size());
          negs = select_hard_negatives(p_a, p_o, cand, {}, k);
        }
      }
      out.num_positives = static_cast<int>(scored_pos.size());
      out.num_negatives = static_cast<int>(negs.size());

      std::vector<int> pos_slots, neg_slots;
      for (const Pair& p : scored_pos) pos_slots.push_back(scorer->add(p));
      for (const Pair& p : negs) neg_slots.push_back(scorer->add(p));

      const bool bce_variant = model.variant == ModelVariant::kBce;
      const bool conds = cfg.use_conditionals && !bce_variant;

      // One conditional row per distinct constituent of a scored positive.
      std::unordered_map<int, CondRow> attr_rows, obj_rows;
      if (conds) {
        std::unordered_map<int, std::vector<int>> objs_of_attr, attrs_of_obj;
        for (const Pair& p : scored_pos) {
          objs_of_attr[p.attr].push_back(p.obj);
          attrs_of_obj[p.obj].push_back(p.attr);
        }
        for (auto& [a, objs] : objs_of_attr)
          attr_rows.emplace(a, build_row(*scorer, true, a, model.num_objs(), objs,
                                         cfg.conditional_row_cap, rng));
        for (auto& [o, attrs] : attrs_of_obj)
          obj_rows.emplace(o, build_row(*scorer, false, o, model.num_attrs(), attrs,
                                        cfg.conditional_row_cap, rng));
      }

      scorer->forward(augment_feature(phi), mode, rng);

      const double k_pos = static_cast<double>(scored_pos.size());
      const double cscale = l_ao * weight / k_pos;

      if (bce_variant) {
        Vec logits;
        std::vector<char> lab;
        for (int s : pos_slots) {
          logits.push_back(scorer->logit(s));
          lab.push_back(1);
        }
        for (int s : neg_slots) {
          logits.push_back(scorer->logit(s));
          lab.push_back(0);
        }
        Vec g(logits.size(), 0.0);
        out.comp = bce_loss(logits, lab, grads ? &g : nullptr);
        if (grads) {
          for (size_t i = 0; i < pos_slots.size(); ++i)
            scorer->add_logit_grad(pos_slots[i], l_ao * weight * g[i]);
          for (size_t i = 0; i < neg_slots.size(); ++i)
            scorer->add_logit_grad(neg_slots[i], l_ao * weight * g[pos_slots.size() + i]);
        }
      } else {
        for (size_t i = 0; i < scored_pos.size(); ++i) {
          const Pair ao = scored_pos[i];
          const int s_pos = pos_slots[i];

          // Joint term: softmax over this positive plus the shared negatives.
          Vec joint(1 + neg_slots.size());
          joint[0] = scorer->logit(s_pos);
          for (size_t j = 0; j < neg_slots.size(); ++j) joint[1 + j] = scorer->logit(neg_slots[j]);
          const Vec lq = log_softmax(joint);
          double ell = -lq[0];
          out.log_p_joint += lq[0] / k_pos;
          if (grads) {
            scorer->add_logit_grad(s_pos, cscale * (std::exp(lq[0]) - 1.0));
            for (size_t j = 0; j < neg_slots.size(); ++j)
              scorer->add_logit_grad(neg_slots[j], cscale * std::exp(lq[1 + j]));
          }

          if (conds) {
            // Object-given-attribute row times the attribute marginal.
            const CondRow& ra = attr_rows.at(ao.attr);
            Vec row(ra.slots.size());
            for (size_t j = 0; j < ra.slots.size(); ++j) row[j] = scorer->logit(ra.slots[j]);
            const Vec lr = log_softmax(row);
            const auto ita = std::find(ra.ids.begin(), ra.ids.end(), ao.obj);
            if (ita == ra.ids.end())
              throw DataFormatError("image_loss: positive object missing from conditional row");
            const size_t ja = static_cast<size_t>(ita - ra.ids.begin());
            const double lp_a = std::log(p_a[ao.attr]) + lr[ja];
            ell -= lp_a;
            out.log_p_cond_attr += lp_a / k_pos;
            if (grads) {
              for (size_t j = 0; j < ra.slots.size(); ++j)
                scorer->add_logit_grad(ra.slots[j],
                                       cscale * (std::exp(lr[j]) - (j == ja ? 1.0 : 0.0)));
              for (size_t t = 0; t < g_sa.size(); ++t)
                g_sa[t] += cscale * (p_a[t] - (static_cast<int>(t) == ao.attr ? 1.0 : 0.0));
            }

            // Attribute-given-object row times the object marginal.
            const CondRow& ro = obj_rows.at(ao.obj);
            Vec row2(ro.slots.size());
            for (size_t j = 0; j < ro.slots.size(); ++j) row2[j] = scorer->logit(ro.slots[j]);
            const Vec lr2 = log_softmax(row2);
            const auto ito = std::find(ro.ids.begin(), ro.ids.end(), ao.attr);
            if (ito == ro.ids.end())
              throw DataFormatError("image_loss: positive attribute missing from conditional row");
            const size_t jo = static_cast<size_t>(ito - ro.ids.begin());
            const double lp_o = std::log(p_o[ao.obj]) + lr2[jo];
            ell -= lp_o;
            out.log_p_cond_obj += lp_o / k_pos;
            if (grads) {
              for (size_t j = 0; j < ro.slots.size(); ++j)
                scorer->add_logit_grad(ro.slots[j],
                                       cscale * (std::exp(lr2[j]) - (j == jo ? 1.0 : 0.0)));
              for (size_t t = 0; t < g_so.size(); ++t)
                g_so[t] += cscale * (p_o[t] - (static_cast<int>(t) == ao.obj ? 1.0 : 0.0));
            }
          }
          out.comp += ell / k_pos;
        }
      }

      if (grads) scorer->backward(*grads, phi_grad, cfg.detach_constituents);
    }
  }

  if (grads) {
    // Head-score path into the feature, then head parameters, then encoder.
    Vec dphi_a = matvec_t(model.attr_head.w, g_sa);
    Vec dphi_o = matvec_t(model.obj_head.w, g_so);
    for (int i = 0; i < model.feature_dim; ++i) phi_grad[i] += dphi_a[i] + dphi_o[i];
    add_outer(grads->attr_head.w, g_sa, phi);
    for (size_t i = 0; i < g_sa.size(); ++i) grads->attr_head.b[i] += g_sa[i];
    add_outer(grads->obj_head.w, g_so, phi);
    for (size_t i = 0; i < g_so.size(); ++i) grads->obj_head.b[i] += g_so[i];
    model.encoder.backward(enc_cache, phi_grad, grads->encoder);
  }

  out.total = cfg.weights.lambda_a * out.attr + cfg.weights.lambda_o * out.obj + l_ao * out.comp;
  return out;
}

}  // namespace compnet
