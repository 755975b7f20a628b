#include "skelssl/model.hpp"

#include <cmath>

#include "skelssl/errors.hpp"

namespace skelssl {

using ad::Var;

void ModelConfig::validate() const {
  if (joints < 1 || channels != 3) throw ShapeError("ModelConfig: bad joint/channel counts");
  if (hidden < 1 || layers < 1 || embed_dim < 1 || decoder_hidden < 1)
    throw ShapeError("ModelConfig: sizes must be positive");
  if (queue_capacity < 1) throw ShapeError("ModelConfig: queue capacity must be positive");
  if (momentum < 0 || momentum > 1) throw ShapeError("ModelConfig: momentum outside [0,1]");
}

const Var& PromptBank::at(DomainTag tag) const {
  const auto idx = static_cast<std::size_t>(tag);
  if (idx >= prompts.size()) throw ShapeError("PromptBank: unknown tag");
  return prompts[idx];
}

Var& PromptBank::at(DomainTag tag) {
  const auto idx = static_cast<std::size_t>(tag);
  if (idx >= prompts.size()) throw ShapeError("PromptBank: unknown tag");
  return prompts[idx];
}

MemoryQueue::MemoryQueue(int capacity, int dim)
    : capacity_(capacity), dim_(dim), storage_(Eigen::MatrixXd::Zero(capacity, dim)) {
  if (capacity < 1 || dim < 1) throw ShapeError("MemoryQueue: capacity and dim must be positive");
}

void MemoryQueue::enqueue(const Eigen::MatrixXd& batch) {
  if (batch.cols() != dim_)
    throw ShapeError("MemoryQueue::enqueue: dimension mismatch, expected " +
                     std::to_string(dim_) + ", got " + std::to_string(batch.cols()));
  for (Eigen::Index r = 0; r < batch.rows(); ++r) {
    const double norm = batch.row(r).norm();
    if (std::abs(norm - 1.0) > 1e-6)
      throw ShapeError("MemoryQueue::enqueue: row " + std::to_string(r) +
                       " is not unit-norm (|v| = " + std::to_string(norm) + ")");
    storage_.row(cursor_) = batch.row(r);
    cursor_ = (cursor_ + 1) % capacity_;
    if (size_ < capacity_) ++size_;
  }
}

Eigen::MatrixXd MemoryQueue::contents() const {
  Eigen::MatrixXd out(size_, dim_);
  const int oldest = (size_ < capacity_) ? 0 : cursor_;
  for (int i = 0; i < size_; ++i) out.row(i) = storage_.row((oldest + i) % capacity_);
  return out;
}

void MemoryQueue::restore(const Eigen::MatrixXd& storage, int size, int cursor) {
  if (storage.rows() != capacity_ || storage.cols() != dim_)
    throw ShapeError("MemoryQueue::restore: storage shape mismatch");
  if (size < 0 || size > capacity_ || cursor < 0 || cursor >= capacity_)
    throw ShapeError("MemoryQueue::restore: bookkeeping out of range");
  storage_ = storage;
  size_ = size;
  cursor_ = cursor;
}

namespace {

Var make_param(int rows, int cols, double bound, Rng& rng) {
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r)
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = rng.uniform(-bound, bound);
  return Var(std::move(m), /*requires_grad=*/true);
}

GruStack make_gru(int input_dim, int hidden, int layers, Rng& rng) {
  GruStack stack;
  stack.hidden = hidden;
  const double bound = 1.0 / std::sqrt(static_cast<double>(hidden));
  int in = input_dim;
  for (int l = 0; l < layers; ++l) {
    GruLayer layer;
    layer.w_ih = make_param(in, 3 * hidden, bound, rng);
    layer.b_ih = make_param(1, 3 * hidden, bound, rng);
    layer.w_hh = make_param(hidden, 3 * hidden, bound, rng);
    layer.b_hh = make_param(1, 3 * hidden, bound, rng);
    stack.layers.push_back(std::move(layer));
    in = hidden;
  }
  return stack;
}

LinearLayer make_linear(int in, int out, Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(in));
  return {make_param(in, out, bound, rng), make_param(1, out, bound, rng)};
}

Var clone_param(const Var& v) { return Var(v.value(), /*requires_grad=*/true); }

GruStack clone_gru(const GruStack& src) {
  GruStack out;
  out.hidden = src.hidden;
  for (const auto& l : src.layers)
    out.layers.push_back({clone_param(l.w_ih), clone_param(l.b_ih), clone_param(l.w_hh),
                          clone_param(l.b_hh)});
  return out;
}

Projector clone_projector(const Projector& src) {
  return {{clone_param(src.hidden.weight), clone_param(src.hidden.bias)},
          {clone_param(src.out.weight), clone_param(src.out.bias)}};
}

void collect_gru(std::vector<NamedParam>& out, const std::string& prefix, const GruStack& gru) {
  for (std::size_t l = 0; l < gru.layers.size(); ++l) {
    const std::string base = prefix + ".gru" + std::to_string(l) + ".";
    out.push_back({base + "w_ih", gru.layers[l].w_ih});
    out.push_back({base + "b_ih", gru.layers[l].b_ih});
    out.push_back({base + "w_hh", gru.layers[l].w_hh});
    out.push_back({base + "b_hh", gru.layers[l].b_hh});
  }
}

void collect_projector(std::vector<NamedParam>& out, const std::string& prefix,
                       const Projector& proj) {
  out.push_back({prefix + ".hidden.weight", proj.hidden.weight});
  out.push_back({prefix + ".hidden.bias", proj.hidden.bias});
  out.push_back({prefix + ".out.weight", proj.out.weight});
  out.push_back({prefix + ".out.bias", proj.out.bias});
}

}  // namespace

std::vector<NamedParam> EncoderBundle::query_params() {
  std::vector<NamedParam> out;
  collect_gru(out, "query", query_encoder);
  collect_projector(out, "query.proj", query_projector);
  return out;
}

std::vector<NamedParam> EncoderBundle::key_params() {
  std::vector<NamedParam> out;
  collect_gru(out, "key", key_encoder);
  collect_projector(out, "key.proj", key_projector);
  return out;
}

std::vector<NamedParam> EncoderBundle::decoder_params() {
  std::vector<NamedParam> out;
  collect_gru(out, "decoder", decoder.gru);
  out.push_back({"decoder.out.weight", decoder.out.weight});
  out.push_back({"decoder.out.bias", decoder.out.bias});
  return out;
}

std::vector<NamedParam> EncoderBundle::prompt_params() {
  std::vector<NamedParam> out;
  for (int i = 0; i < kNumDomainTags; ++i)
    out.push_back({std::string("prompt.") + domain_tag_name(static_cast<DomainTag>(i)),
                   prompts.prompts[static_cast<std::size_t>(i)]});
  return out;
}

std::vector<NamedParam> EncoderBundle::trainable_params() {
  auto out = query_params();
  for (auto& p : decoder_params()) out.push_back(p);
  for (auto& p : prompt_params()) out.push_back(p);
  return out;
}

std::vector<NamedParam> EncoderBundle::all_params() {
  auto out = trainable_params();
  for (auto& p : key_params()) out.push_back(p);
  return out;
}

std::size_t EncoderBundle::parameter_count() const {
  std::size_t n = 0;
  auto& self = const_cast<EncoderBundle&>(*this);
  for (const auto& p : self.all_params()) n += static_cast<std::size_t>(p.var.value().size());
  return n;
}

EncoderBundle make_bundle(const ModelConfig& config, Rng& rng) {
  config.validate();
  EncoderBundle b;
  b.config = config;
  b.query_encoder = make_gru(config.input_dim(), config.hidden, config.layers, rng);
  b.query_projector = {make_linear(config.hidden, config.hidden, rng),
                       make_linear(config.hidden, config.embed_dim, rng)};
  // Key branch starts as an exact copy; it then only moves by EMA.
  b.key_encoder = clone_gru(b.query_encoder);
  b.key_projector = clone_projector(b.query_projector);

  Decoder dec;
  dec.gru = make_gru(config.hidden, config.decoder_hidden, 1, rng);
  dec.out = make_linear(config.decoder_hidden, config.input_dim(), rng);
  b.decoder = std::move(dec);

  // Zero prompts: training starts at the unprompted baseline.
  b.prompts.prompts.reserve(kNumDomainTags);
  for (int i = 0; i < kNumDomainTags; ++i)
    b.prompts.prompts.emplace_back(Eigen::MatrixXd::Zero(1, config.input_dim()),
                                   /*requires_grad=*/true);
  return b;
}

void momentum_update(EncoderBundle& bundle, double m) {
  if (m < 0 || m > 1) throw ShapeError("momentum_update: m outside [0,1]");
  auto q = bundle.query_params();
  auto k = bundle.key_params();
  if (q.size() != k.size()) throw ShapeError("momentum_update: parameter list mismatch");
  for (std::size_t i = 0; i < q.size(); ++i) {
    Eigen::MatrixXd& key = k[i].var.mutable_value();
    const Eigen::MatrixXd& query = q[i].var.value();
    if (key.rows() != query.rows() || key.cols() != query.cols())
      throw ShapeError("momentum_update: shape mismatch at " + q[i].name);
    key = m * key + (1.0 - m) * query;
  }
}

Var gru_forward(const GruStack& stack, const Var& input, int frames, int batch) {
  if (input.rows() != static_cast<Eigen::Index>(frames) * batch)
    throw ShapeError("gru_forward: input rows != frames * batch");
  Var x = input;
  for (const auto& layer : stack.layers) {
    const int H = stack.hidden;
    // One fused input projection for all timesteps and gates.
    const Var gates_in = add_rowvec(ad::matmul(x, layer.w_ih), layer.b_ih);
    Var h = ad::constant(Eigen::MatrixXd::Zero(batch, H));
    std::vector<Var> outputs;
    outputs.reserve(static_cast<std::size_t>(frames));
    for (int t = 0; t < frames; ++t) {
      const Var gi = ad::slice_rows(gates_in, static_cast<Eigen::Index>(t) * batch, batch);
      const Var gh = add_rowvec(ad::matmul(h, layer.w_hh), layer.b_hh);
      const Var r = ad::sigmoid(ad::add(ad::slice_cols(gi, 0, H), ad::slice_cols(gh, 0, H)));
      const Var z = ad::sigmoid(ad::add(ad::slice_cols(gi, H, H), ad::slice_cols(gh, H, H)));
      const Var n = ad::tanh_v(
          ad::add(ad::slice_cols(gi, 2 * H, H), ad::mul(r, ad::slice_cols(gh, 2 * H, H))));
      // h' = (1 - z) * n + z * h
      h = ad::add(ad::sub(n, ad::mul(z, n)), ad::mul(z, h));
      outputs.push_back(h);
    }
    x = ad::concat_rows(outputs);
  }
  return x;
}

EncodeResult encode_batch(const GruStack& encoder, const Projector* projector, const Var& input,
                          int frames, int batch) {
  EncodeResult result;
  result.frames = gru_forward(encoder, input, frames, batch);
  result.pooled = ad::mean_over_blocks(result.frames, frames);
  if (projector) {
    const Var h = ad::relu(
        add_rowvec(ad::matmul(result.pooled, projector->hidden.weight), projector->hidden.bias));
    const Var z = add_rowvec(ad::matmul(h, projector->out.weight), projector->out.bias);
    result.embedding = ad::l2_normalize_rows(z);
  } else {
    result.embedding = ad::l2_normalize_rows(result.pooled);
  }
  return result;
}

Var decode_frames(const Decoder& decoder, const Var& frames, int T, int batch) {
  const Var hidden = gru_forward(decoder.gru, frames, T, batch);
  return add_rowvec(ad::matmul(hidden, decoder.out.weight), decoder.out.bias);
}

SequenceEncoding encode(const EncoderBundle& bundle, const SkeletonSequence& seq,
                        bool use_projector) {
  seq.validate();
  if (seq.num_joints != bundle.config.joints || seq.num_channels != bundle.config.channels)
    throw ShapeError("encode: sequence V/C does not match model config (" +
                     std::to_string(seq.num_joints) + "x" + std::to_string(seq.num_channels) +
                     " vs " + std::to_string(bundle.config.joints) + "x" +
                     std::to_string(bundle.config.channels) + ")");
  ad::NoGradGuard no_grad;
  const Var input = ad::constant(seq.data);
  const EncodeResult r = encode_batch(bundle.query_encoder,
                                      use_projector ? &bundle.query_projector : nullptr, input,
                                      seq.frames(), 1);
  SequenceEncoding out;
  out.embedding = r.embedding.value().row(0).transpose();
  out.pooled = r.pooled.value();
  out.frame_features = r.frames.value();
  return out;
}

SkeletonSequence add_prompt(const SkeletonSequence& seq, const PromptBank& bank, DomainTag tag) {
  const Var& p = bank.at(tag);
  if (p.cols() != seq.data.cols())
    throw ShapeError("add_prompt: prompt width does not match sequence V*C");
  SkeletonSequence out = seq;
  out.data.rowwise() += p.value().row(0);
  return out;
}

Var add_prompt(const Var& input, const PromptBank& bank, DomainTag tag) {
  const Var& p = bank.at(tag);
  if (p.cols() != input.cols())
    throw ShapeError("add_prompt: prompt width does not match input columns");
  return add_rowvec(input, p);
}

Eigen::MatrixXd expand_mask(const MaskMatrix& mask, int batch, int channels) {
  const int T = mask.frames();
  const int V = mask.joints();
  Eigen::MatrixXd out(static_cast<Eigen::Index>(T) * batch, static_cast<Eigen::Index>(V) * channels);
  for (int t = 0; t < T; ++t)
    for (int b = 0; b < batch; ++b)
      for (int v = 0; v < V; ++v)
        out.row(static_cast<Eigen::Index>(t) * batch + b)
            .segment(static_cast<Eigen::Index>(v) * channels, channels)
            .setConstant(mask.bits(t, v));
  return out;
}

SkeletonSequence compose_prediction(const SkeletonSequence& s, const SkeletonSequence& s_hat,
                                    const MaskMatrix& mask) {
  if (s.data.rows() != s_hat.data.rows() || s.data.cols() != s_hat.data.cols())
    throw ShapeError("compose_prediction: shape mismatch");
  if (mask.frames() != s.frames() || mask.joints() != s.num_joints)
    throw ShapeError("compose_prediction: mask shape mismatch");
  const Eigen::MatrixXd mc = expand_mask(mask, 1, s.num_channels);
  SkeletonSequence out = s;
  out.data = s.data.cwiseProduct(mc) + s_hat.data.cwiseProduct(Eigen::MatrixXd::Ones(
                                           mc.rows(), mc.cols()) - mc);
  return out;
}

Var compose_prediction(const Var& original, const Var& predicted,
                       const Eigen::MatrixXd& mask_channels) {
  if (original.rows() != predicted.rows() || original.cols() != predicted.cols())
    throw ShapeError("compose_prediction: shape mismatch");
  if (mask_channels.rows() != original.rows() || mask_channels.cols() != original.cols())
    throw ShapeError("compose_prediction: mask expansion shape mismatch");
  const Var m = ad::constant(mask_channels);
  const Var inv = ad::constant(Eigen::MatrixXd::Ones(mask_channels.rows(), mask_channels.cols()) -
                               mask_channels);
  return ad::add(ad::mul(original, m), ad::mul(predicted, inv));
}

}  // namespace skelssl
