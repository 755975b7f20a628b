#pragma once

#include <Eigen/Core>
#include <string>
#include <vector>

#include "skelssl/autodiff.hpp"

namespace skelssl {

struct LossWeights {
  double lambda_m = 1.0;
  double lambda_kd = 1.0;
  double tau = 0.07;   // InfoNCE temperature
  double tau_q = 0.1;  // distillation student temperature
  double tau_k = 0.05; // distillation teacher temperature (sharper)

  void validate() const;
};

enum class Stage { kJointTraining, kPostDistillation };
const char* stage_name(Stage stage);
Stage stage_from_name(const std::string& name);

// All losses take batched embeddings ([B x D] rows) and return the batch
// mean as a 1x1 Var. Queue anchors enter as a constant [N x D] matrix.

// -log( exp(zq.zk/tau) / (exp(zq.zk/tau) + sum_i exp(zq.m_i/tau)) ),
// computed with a stable log-sum-exp. Differentiable in z_q and z_k.
ad::Var info_nce(const ad::Var& z_q, const ad::Var& z_k, const Eigen::MatrixXd& queue,
                 double tau);

// Softmax similarity distribution over the queue anchors, one row per input
// row. Non-differentiating helper used by evaluation and tests.
Eigen::MatrixXd kd_distribution(const Eigen::MatrixXd& z, const Eigen::MatrixXd& queue,
                                double tau);

// Cross-entropy between teacher p(z_k, tau_k) and student p(z_q, tau_q);
// gradient flows only through z_q.
ad::Var kd_loss(const ad::Var& z_q, const ad::Var& z_k, const Eigen::MatrixXd& queue,
                double tau_q, double tau_k);

// L_CL = L_Info + L_KD (unit weights inside; lambda_kd scales the aggregate
// in the total objective).
ad::Var contrastive_loss(const ad::Var& z_q, const ad::Var& z_k, const Eigen::MatrixXd& queue,
                         const LossWeights& weights);

// Mean squared residual over masked entries (mask_channels == 0) across all
// channels. Invariant to s_hat values at visible entries.
ad::Var mask_loss(const ad::Var& s, const ad::Var& s_hat, const Eigen::MatrixXd& mask_channels);

// Per-positive-pair terms feeding the staged total objective.
struct PairLosses {
  std::string name;  // view tag: intra/inter/clip/mask/predict
  ad::Var info;
  ad::Var kd;
};

// joint stage:  sum Info + lambda_m * Mask + lambda_kd * sum KD
// post stage:   lambda_m * Mask + lambda_kd * sum KD
ad::Var total_loss(const std::vector<PairLosses>& pairs, const ad::Var& mask_term,
                   const LossWeights& weights, Stage stage);

}  // namespace skelssl
