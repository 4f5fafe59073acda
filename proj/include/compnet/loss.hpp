// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <random>
#include <vector>

#include "compnet/matrix.hpp"
#include "compnet/model.hpp"
#include "compnet/types.hpp"

namespace compnet {

struct LossWeights {
  double lambda_a = 1.0;
  double lambda_o = 1.0;
  double lambda_ao = 1.0;
};

struct LossConfig {
  LossWeights weights;
  // Hard negatives per image; < 0 means every available candidate, 0 disables
  // negative mining entirely.
  int num_negatives = 25;
  // Conditional probability terms (object-given-attribute and
  // attribute-given-object rows) on top of the joint term.
  bool use_conditionals = true;
  // Stop gradients at the constituent classifiers fed into the composer.
  bool detach_constituents = false;
  // When > 0, conditional softmax rows longer than the cap are subsampled
  // (always keeping the positive's own column). Off by default.
  int conditional_row_cap = 0;
};

// Per-image label sets; ids sorted and unique.
struct ImageLabels {
  std::vector<int> attrs;
  std::vector<int> objs;
};

// Loss components for one image (or accumulated means over a batch).
struct LossTerms {
  double total = 0.0;
  double attr = 0.0;
  double obj = 0.0;
  double comp = 0.0;
  double log_p_joint = 0.0;     // mean log p_ao over positives
  double log_p_cond_attr = 0.0; // mean log p_ao^a
  double log_p_cond_obj = 0.0;  // mean log p_ao^o
  int num_positives = 0;
  int num_negatives = 0;

  void accumulate(const LossTerms& t, double w);
};

// Softmax cross-entropy with uniform 1/|positives| targets.
// grad_logits, if non-null, receives p - t added in place (must be sized).
double multilabel_ce(const Vec& logits, const std::vector<int>& positives,
                     Vec* grad_logits = nullptr);

// Top-k pairs of pool \ positives by p_attr[a]*p_obj[o], ties broken by
// ascending (attribute id, object id). Returns all of pool \ positives when
// it has fewer than k elements. Selection is not differentiated.
std::vector<Pair> select_hard_negatives(const Vec& p_attr, const Vec& p_obj,
                                        const std::vector<Pair>& pool,
                                        const std::vector<Pair>& positives, int k);

// Softmax over {s_pos} ∪ s_negs, the positive's coordinate.
double approx_joint_prob(double s_pos, const Vec& s_negs);

// p_marginal * softmax(s_row)[index]; s_row must cover the full opposite
// vocabulary (vocab_size) for the fixed constituent.
double conditional_prob(double p_marginal, const Vec& s_row, int index, int vocab_size);

// Mean binary cross-entropy of sigmoid(logits[i]) against labels[i] ∈ {0,1}.
// grad_logits, if non-null, receives (sigma - y)/n added in place.
double bce_loss(const Vec& logits, const std::vector<char>& labels,
                Vec* grad_logits = nullptr);

// Full per-image loss (weighted heads + composition term per variant).
// Gradients, scaled by `weight`, are accumulated into *grads when non-null;
// mode selects dropout behaviour (kTrain needs rng). negative_pool is the
// candidate set for hard-negative mining (normally the seen pairs);
// fixed_negatives, when non-null, bypasses selection (used by gradient
// checks so the discrete selection cannot flip under perturbation).
LossTerms image_loss(const ModelParams& model, const Vec& raw, const ImageLabels& labels,
                     const std::vector<Pair>& negative_pool, const LossConfig& cfg,
                     Mode mode, std::mt19937_64* rng, double weight, ModelParams* grads,
                     const std::vector<Pair>* fixed_negatives = nullptr);

}  // namespace compnet
