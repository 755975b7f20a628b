#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "skelssl/archive.hpp"
#include "skelssl/augment.hpp"
#include "skelssl/autodiff.hpp"
#include "skelssl/checkpoint.hpp"
#include "skelssl/losses.hpp"
#include "skelssl/model.hpp"

namespace skelssl {

// View toggles for ablation runs; all on reproduces the full five-pair set.
struct ViewToggles {
  bool clip = true;
  bool mask_view = true;
  bool predict_view = true;
  bool semantic_guidance = true;  // off: stop-gradient on s_predict
};

struct TrainConfig {
  int epochs_joint = 50;  // E1 >= 1
  int epochs_post = 10;   // E2 >= 0
  int batch_size = 16;
  double lr = 0.01;
  double sgd_momentum = 0.9;
  std::uint64_t seed = 7;
  int root_joint = 0;
  int frames = 0;  // 0: keep archive length, else resample on load
  AugmentParams augment;
  LossWeights weights;
  ModelConfig model;
  ViewToggles views;
  std::string train_archive;
  std::string out_dir;

  void validate() const;
  int total_epochs() const { return epochs_joint + epochs_post; }
};

// One positive (query, key) embedding pair.
struct ViewPair {
  std::string name;        // intra / inter / clip / mask / predict
  ad::Var z_query;         // [B x D], in the gradient graph
  Eigen::MatrixXd z_key;   // [B x D], gradient-free
};

// Everything one step's view construction produces. Query embeddings stay
// attached to the autodiff graph so that the contrastive terms can push
// gradients into the encoder, prompts, and (through s_predict) the decoder.
struct ViewBundle {
  int batch = 0;
  int frames = 0;

  std::vector<ViewPair> pairs;     // the positive pairs, intra first
  ad::Var mask_term;               // masked-reconstruction loss term
  Eigen::MatrixXd z_key;           // z' batch, enqueued after the step
  ad::Var s_hat;                   // decoder output [T*B x V*C]
  ad::Var s_predict;               // composed prediction view

  // Bookkeeping exposed for tests and invariants.
  std::vector<SkeletonSequence> key_views;  // s' per sample (pre-prompt)
  std::vector<MaskMatrix> masks;
  std::vector<double> lambdas;
  std::vector<std::size_t> pairing;         // inter-mix derangement
  std::vector<ClipWindow> clip_windows;     // pre-resize window per sample
  std::vector<SkeletonSequence> clip_views; // resized clip per sample (pre-prompt)
  Eigen::MatrixXd raw_batch;                // normalized inputs, stacked
};

// Stacks sequences into the [T*B x V*C] block layout used by the model.
Eigen::MatrixXd stack_batch(const std::vector<SkeletonSequence>& batch);
// Per-sample mask expansion matching stack_batch's layout.
Eigen::MatrixXd expand_masks(const std::vector<MaskMatrix>& masks, int channels);

// Builds the full positive-pair set for one batch of normalized sequences.
ViewBundle build_views(const std::vector<SkeletonSequence>& batch, const AugmentParams& params,
                       EncoderBundle& model, const ViewToggles& toggles, Rng& rng);

struct StepMetrics {
  std::uint64_t step = 0;
  int epoch = 0;
  Stage stage = Stage::kJointTraining;
  double lr = 0;
  std::map<std::string, double> terms;  // per-view info/kd, mask, totals, grad norms

  std::string to_json_line(std::uint64_t config_hash) const;
};

class SgdOptimizer {
 public:
  SgdOptimizer(double lr, double momentum) : lr_(lr), momentum_(momentum) {}

  void set_lr(double lr) { lr_ = lr; }
  double lr() const { return lr_; }

  // v <- mu*v + g; theta <- theta - lr*v; grads cleared afterwards.
  void step(std::vector<NamedParam> params);

  std::map<std::string, Eigen::MatrixXd>& velocities() { return velocity_; }
  const std::map<std::string, Eigen::MatrixXd>& velocities() const { return velocity_; }

 private:
  double lr_;
  double momentum_;
  std::map<std::string, Eigen::MatrixXd> velocity_;
};

// Loss assembly, backprop, optimizer step, momentum update, enqueue.
// Throws NumericalError naming the first non-finite term.
StepMetrics train_step(EncoderBundle& model, ViewBundle& views, MemoryQueue& queue,
                       const LossWeights& weights, Stage stage, SgdOptimizer& optimizer);

struct PretrainResult {
  std::string final_checkpoint;
  std::string metrics_path;
  std::uint64_t config_hash = 0;
};

// E1 joint epochs then E2 post-distillation epochs over the train split.
// Checkpoint per epoch under config.out_dir, metrics appended per step.
// resume_from, when non-empty, restores a mid-run checkpoint.
PretrainResult run_pretraining(const TrainConfig& config, const std::string& config_json,
                               std::uint64_t config_hash,
                               const std::string& resume_from = {});

// Loads the train split, root-centers every sample, optionally resamples to
// config.frames. Shared by pretraining and the evaluation drivers.
std::vector<SkeletonSequence> load_training_set(const TrainConfig& config);

// Cosine decay from lr0 over total_epochs, evaluated at epoch index.
double cosine_lr(double lr0, int epoch, int total_epochs);

// Restores model/optimizer/queue state from a checkpoint produced by
// run_pretraining. Returns the stored epoch count.
int restore_from_checkpoint(const CheckpointData& data, EncoderBundle& model,
                            SgdOptimizer* optimizer, MemoryQueue* queue);

// Snapshot of the mutable training state, used for per-epoch checkpoints.
CheckpointData snapshot_checkpoint(EncoderBundle& model, const SgdOptimizer& optimizer,
                                   const MemoryQueue& queue, Stage stage, int epoch,
                                   std::uint64_t step, const std::string& config_json,
                                   std::uint64_t config_hash);

}  // namespace skelssl
