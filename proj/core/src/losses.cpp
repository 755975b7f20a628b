#include "skelssl/losses.hpp"

#include <cmath>

#include "skelssl/errors.hpp"

namespace skelssl {

using ad::Var;

void LossWeights::validate() const {
  if (lambda_m < 0 || lambda_kd < 0) throw ShapeError("LossWeights: negative loss weight");
  if (tau <= 0 || tau_q <= 0 || tau_k <= 0) throw ShapeError("LossWeights: temperatures must be > 0");
  if (tau_k > tau_q) throw ShapeError("LossWeights: teacher temperature must not exceed tau_q");
}

const char* stage_name(Stage stage) {
  return stage == Stage::kJointTraining ? "joint_training" : "post_distillation";
}

Stage stage_from_name(const std::string& name) {
  if (name == "joint_training") return Stage::kJointTraining;
  if (name == "post_distillation") return Stage::kPostDistillation;
  throw ParseError("unknown stage '" + name + "'");
}

namespace {

void check_embedding_pair(const Var& z_q, const Var& z_k, const Eigen::MatrixXd& queue,
                          const char* op) {
  if (z_q.rows() != z_k.rows() || z_q.cols() != z_k.cols())
    throw ShapeError(std::string(op) + ": z_q/z_k shape mismatch");
  if (queue.rows() == 0) throw ShapeError(std::string(op) + ": empty queue");
  if (queue.cols() != z_q.cols())
    throw ShapeError(std::string(op) + ": queue dimension mismatch");
}

}  // namespace

Var info_nce(const Var& z_q, const Var& z_k, const Eigen::MatrixXd& queue, double tau) {
  if (tau <= 0) throw ShapeError("info_nce: tau must be > 0");
  check_embedding_pair(z_q, z_k, queue, "info_nce");

  // logits = [ zq.zk | zq.m_1 ... zq.m_N ] / tau ; loss = lse(logits) - logits[0]
  const Var pos = ad::scale(ad::rows_dot(z_q, z_k), 1.0 / tau);
  const Var negs = ad::scale(ad::matmul(z_q, ad::constant(queue.transpose())), 1.0 / tau);
  const Var logits = ad::concat_cols(pos, negs);
  const Var lse = ad::logsumexp_rows(logits);
  return ad::mean(ad::sub(lse, pos));
}

Eigen::MatrixXd kd_distribution(const Eigen::MatrixXd& z, const Eigen::MatrixXd& queue,
                                double tau) {
  if (tau <= 0) throw ShapeError("kd_distribution: tau must be > 0");
  if (queue.rows() == 0) throw ShapeError("kd_distribution: empty queue");
  if (queue.cols() != z.cols()) throw ShapeError("kd_distribution: dimension mismatch");
  Eigen::MatrixXd logits = (z * queue.transpose()) / tau;
  for (Eigen::Index r = 0; r < logits.rows(); ++r) {
    const double m = logits.row(r).maxCoeff();
    const Eigen::ArrayXd e = (logits.row(r).array() - m).exp();
    logits.row(r) = (e / e.sum()).matrix();
  }
  return logits;
}

Var kd_loss(const Var& z_q, const Var& z_k, const Eigen::MatrixXd& queue, double tau_q,
            double tau_k) {
  if (tau_q <= 0 || tau_k <= 0) throw ShapeError("kd_loss: temperatures must be > 0");
  check_embedding_pair(z_q, z_k, queue, "kd_loss");

  // Teacher carries no gradient by construction.
  const Eigen::MatrixXd teacher = kd_distribution(z_k.value(), queue, tau_k);

  const Var logits = ad::scale(ad::matmul(z_q, ad::constant(queue.transpose())), 1.0 / tau_q);
  const Var log_probs = ad::sub_colvec(logits, ad::logsumexp_rows(logits));
  const Var weighted = ad::mul(ad::constant(teacher), log_probs);
  // Mean over rows of the per-row cross-entropies.
  return ad::scale(ad::sum(weighted), -1.0 / static_cast<double>(z_q.rows()));
}

Var contrastive_loss(const Var& z_q, const Var& z_k, const Eigen::MatrixXd& queue,
                     const LossWeights& weights) {
  weights.validate();
  return ad::add(info_nce(z_q, z_k, queue, weights.tau),
                 kd_loss(z_q, z_k, queue, weights.tau_q, weights.tau_k));
}

Var mask_loss(const Var& s, const Var& s_hat, const Eigen::MatrixXd& mask_channels) {
  if (s.rows() != s_hat.rows() || s.cols() != s_hat.cols())
    throw ShapeError("mask_loss: shape mismatch");
  if (mask_channels.rows() != s.rows() || mask_channels.cols() != s.cols())
    throw ShapeError("mask_loss: mask expansion shape mismatch");
  const Eigen::MatrixXd inverse =
      Eigen::MatrixXd::Ones(mask_channels.rows(), mask_channels.cols()) - mask_channels;
  const double masked_count = inverse.sum();
  if (masked_count < 1.0) throw ShapeError("mask_loss: mask selects no masked entry");

  const Var residual = ad::mul(ad::sub(s, s_hat), ad::constant(inverse));
  return ad::scale(ad::sum(ad::mul(residual, residual)), 1.0 / masked_count);
}

Var total_loss(const std::vector<PairLosses>& pairs, const Var& mask_term,
               const LossWeights& weights, Stage stage) {
  weights.validate();
  Var kd_sum(0.0);
  for (const auto& p : pairs) kd_sum = ad::add(kd_sum, p.kd);

  Var total = ad::scale(mask_term, weights.lambda_m);
  total = ad::add(total, ad::scale(kd_sum, weights.lambda_kd));
  if (stage == Stage::kJointTraining) {
    Var info_sum(0.0);
    for (const auto& p : pairs) info_sum = ad::add(info_sum, p.info);
    total = ad::add(total, info_sum);
  }
  return total;
}

}  // namespace skelssl
