#pragma once

#include <Eigen/Core>
#include <string>
#include <vector>

#include "skelssl/augment.hpp"
#include "skelssl/autodiff.hpp"
#include "skelssl/rng.hpp"
#include "skelssl/skeleton.hpp"

namespace skelssl {

struct ModelConfig {
  int joints = 25;
  int channels = 3;
  int hidden = 64;        // GRU hidden size (paper-scale preset: 1024)
  int layers = 2;
  int embed_dim = 128;    // projector output D
  int decoder_hidden = 64;
  int queue_capacity = 8192;  // paper-scale preset: 32768
  double momentum = 0.999;    // key-encoder EMA coefficient

  int input_dim() const { return joints * channels; }
  void validate() const;
};

// weight is [in x out] so batched inputs multiply as x * weight.
struct LinearLayer {
  ad::Var weight;
  ad::Var bias;  // [1 x out]
};

// Gates packed r|z|n along the output axis.
struct GruLayer {
  ad::Var w_ih;  // [in x 3H]
  ad::Var b_ih;  // [1 x 3H]
  ad::Var w_hh;  // [H x 3H]
  ad::Var b_hh;  // [1 x 3H]
};

struct GruStack {
  std::vector<GruLayer> layers;
  int hidden = 0;
};

struct Projector {
  LinearLayer hidden;  // H -> H, ReLU
  LinearLayer out;     // H -> D
};

struct Decoder {
  GruStack gru;       // H -> decoder_hidden
  LinearLayer out;    // decoder_hidden -> V*C per frame
};

// Learnable additive per-domain prompts, one V x C field per view tag,
// stored as 1 x (V*C) rows so they broadcast over time and batch.
struct PromptBank {
  std::vector<ad::Var> prompts;  // indexed by DomainTag, size kNumDomainTags

  const ad::Var& at(DomainTag tag) const;
  ad::Var& at(DomainTag tag);
};

struct NamedParam {
  std::string name;
  ad::Var var;
};

// FIFO bank of unit-norm key embeddings used as negatives / anchors.
class MemoryQueue {
 public:
  MemoryQueue(int capacity, int dim);

  // Overwrites oldest entries; rows must be unit-norm D-vectors.
  void enqueue(const Eigen::MatrixXd& batch);
  // Entries in enqueue order (oldest first); size() rows.
  Eigen::MatrixXd contents() const;
  // Entries in unspecified order, cheapest view for similarity computations.
  const Eigen::MatrixXd& storage() const { return storage_; }
  Eigen::MatrixXd& mutable_storage() { return storage_; }

  int size() const { return size_; }
  int capacity() const { return capacity_; }
  int dim() const { return dim_; }
  int cursor() const { return cursor_; }
  void restore(const Eigen::MatrixXd& storage, int size, int cursor);

 private:
  int capacity_;
  int dim_;
  int size_ = 0;
  int cursor_ = 0;
  Eigen::MatrixXd storage_;  // capacity x dim
};

// Query/key encoder pair plus reconstruction decoder and prompt bank. Key
// weights start as a copy of the query weights and are only ever moved by
// momentum_update.
struct EncoderBundle {
  ModelConfig config;
  GruStack query_encoder;
  Projector query_projector;
  GruStack key_encoder;
  Projector key_projector;
  Decoder decoder;
  PromptBank prompts;

  std::vector<NamedParam> query_params();   // gradient-trained encoder+projector
  std::vector<NamedParam> key_params();     // EMA-tracked mirror
  std::vector<NamedParam> decoder_params();
  std::vector<NamedParam> prompt_params();
  // Everything the optimizer updates: query + decoder + prompts.
  std::vector<NamedParam> trainable_params();
  std::vector<NamedParam> all_params();

  std::size_t parameter_count() const;
};

EncoderBundle make_bundle(const ModelConfig& config, Rng& rng);

// theta_k <- m * theta_k + (1 - m) * theta_q for every key parameter.
void momentum_update(EncoderBundle& bundle, double m);
inline void momentum_update(EncoderBundle& bundle) {
  momentum_update(bundle, bundle.config.momentum);
}

// --- forward passes -------------------------------------------------------
// Batched sequences are [T*B x F] matrices laid out as T blocks of B rows
// (block t holds frame t of every sample).

struct EncodeResult {
  ad::Var embedding;  // [B x D], rows unit-norm (when projected)
  ad::Var pooled;     // [B x H], mean over time
  ad::Var frames;     // [T*B x H] per-timestep hidden states
};

ad::Var gru_forward(const GruStack& stack, const ad::Var& input, int frames, int batch);

EncodeResult encode_batch(const GruStack& encoder, const Projector* projector,
                          const ad::Var& input, int frames, int batch);

// FrameFeatures -> per-frame coordinates, [T*B x V*C].
ad::Var decode_frames(const Decoder& decoder, const ad::Var& frames, int T, int batch);

// --- single-sequence convenience (inference mode) --------------------------

struct SequenceEncoding {
  Eigen::VectorXd embedding;    // unit-norm D-vector
  Eigen::MatrixXd pooled;       // 1 x H
  Eigen::MatrixXd frame_features;  // T x H
};

// Spec-level encode: runs without gradient, validates the sequence shape
// against the model config.
SequenceEncoding encode(const EncoderBundle& bundle, const SkeletonSequence& seq,
                        bool use_projector = true);

// --- view composition ------------------------------------------------------

// output[t][v][c] = seq[t][v][c] + prompt[v][c] for every t.
SkeletonSequence add_prompt(const SkeletonSequence& seq, const PromptBank& bank, DomainTag tag);
// Differentiable variant over a batched [rows x V*C] matrix.
ad::Var add_prompt(const ad::Var& input, const PromptBank& bank, DomainTag tag);

// s_predict = s (*) M + s_hat (*) (1 - M): visible entries from the original,
// masked entries from the decoder output.
SkeletonSequence compose_prediction(const SkeletonSequence& s, const SkeletonSequence& s_hat,
                                    const MaskMatrix& mask);
// Differentiable variant; mask_channels is the [rows x V*C] expansion of M.
ad::Var compose_prediction(const ad::Var& original, const ad::Var& predicted,
                           const Eigen::MatrixXd& mask_channels);

// Expands a T x V mask to [T*B x V*C] (channel-replicated, tiled over the
// batch blocks).
Eigen::MatrixXd expand_mask(const MaskMatrix& mask, int batch, int channels);

}  // namespace skelssl
