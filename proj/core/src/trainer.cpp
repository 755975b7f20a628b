#include "skelssl/trainer.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <sstream>

#include "nlohmann/json.hpp"
#include "skelssl/errors.hpp"

namespace skelssl {

using ad::Var;

void TrainConfig::validate() const {
  if (epochs_joint < 1) throw ShapeError("TrainConfig: epochs_joint must be >= 1");
  if (epochs_post < 0) throw ShapeError("TrainConfig: epochs_post must be >= 0");
  if (batch_size < 2) throw ShapeError("TrainConfig: batch_size must be >= 2 (mixing needs pairs)");
  if (lr <= 0) throw ShapeError("TrainConfig: lr must be > 0");
  if (sgd_momentum < 0 || sgd_momentum >= 1)
    throw ShapeError("TrainConfig: sgd_momentum outside [0,1)");
  weights.validate();
  model.validate();
}

Eigen::MatrixXd stack_batch(const std::vector<SkeletonSequence>& batch) {
  if (batch.empty()) throw ShapeError("stack_batch: empty batch");
  const int B = static_cast<int>(batch.size());
  const int T = batch.front().frames();
  const Eigen::Index width = batch.front().data.cols();
  Eigen::MatrixXd out(static_cast<Eigen::Index>(T) * B, width);
  for (int b = 0; b < B; ++b) {
    if (batch[static_cast<std::size_t>(b)].frames() != T ||
        batch[static_cast<std::size_t>(b)].data.cols() != width)
      throw ShapeError("stack_batch: inconsistent sample shapes");
    for (int t = 0; t < T; ++t)
      out.row(static_cast<Eigen::Index>(t) * B + b) =
          batch[static_cast<std::size_t>(b)].data.row(t);
  }
  return out;
}

Eigen::MatrixXd expand_masks(const std::vector<MaskMatrix>& masks, int channels) {
  if (masks.empty()) throw ShapeError("expand_masks: no masks");
  const int B = static_cast<int>(masks.size());
  const int T = masks.front().frames();
  const int V = masks.front().joints();
  Eigen::MatrixXd out(static_cast<Eigen::Index>(T) * B,
                      static_cast<Eigen::Index>(V) * channels);
  for (int b = 0; b < B; ++b) {
    const auto& m = masks[static_cast<std::size_t>(b)];
    if (m.frames() != T || m.joints() != V) throw ShapeError("expand_masks: shape mismatch");
    for (int t = 0; t < T; ++t)
      for (int v = 0; v < V; ++v)
        out.row(static_cast<Eigen::Index>(t) * B + b)
            .segment(static_cast<Eigen::Index>(v) * channels, channels)
            .setConstant(m.bits(t, v));
  }
  return out;
}

namespace {

Eigen::MatrixXd encode_key_batch(EncoderBundle& model, const Eigen::MatrixXd& batch, int frames,
                                 int batch_size, DomainTag tag) {
  ad::NoGradGuard no_grad;
  const Var input = add_prompt(ad::constant(batch), model.prompts, tag);
  return encode_batch(model.key_encoder, &model.key_projector, input, frames, batch_size)
      .embedding.value();
}

Var encode_query_view(EncoderBundle& model, const Var& data, int frames, int batch_size,
                      DomainTag tag) {
  const Var input = add_prompt(data, model.prompts, tag);
  return encode_batch(model.query_encoder, &model.query_projector, input, frames, batch_size)
      .embedding;
}

}  // namespace

ViewBundle build_views(const std::vector<SkeletonSequence>& batch, const AugmentParams& params,
                       EncoderBundle& model, const ViewToggles& toggles, Rng& rng) {
  if (batch.size() < 2) throw ShapeError("build_views: batch must hold >= 2 samples for mixing");
  const int B = static_cast<int>(batch.size());
  const int T = batch.front().frames();
  AugmentParams aug = params;
  aug.validate_for(batch.front().num_joints);

  ViewBundle views;
  views.batch = B;
  views.frames = T;
  views.raw_batch = stack_batch(batch);

  // Key branch: intra-augmented anchor s', embedded without gradient.
  views.key_views.reserve(static_cast<std::size_t>(B));
  for (int b = 0; b < B; ++b) {
    Rng key_rng = rng.fork("key").fork(static_cast<std::uint64_t>(b));
    views.key_views.push_back(intra_augment(batch[static_cast<std::size_t>(b)], aug, key_rng));
  }
  views.z_key = encode_key_batch(model, stack_batch(views.key_views), T, B, DomainTag::kIntra);

  // Query views.
  std::vector<SkeletonSequence> intra_views;
  intra_views.reserve(static_cast<std::size_t>(B));
  for (int b = 0; b < B; ++b) {
    Rng intra_rng = rng.fork("intra").fork(static_cast<std::uint64_t>(b));
    intra_views.push_back(intra_augment(batch[static_cast<std::size_t>(b)], aug, intra_rng));
  }

  Rng pair_rng = rng.fork("pairing");
  views.pairing = pair_rng.derangement(static_cast<std::size_t>(B));
  std::vector<SkeletonSequence> inter_views;
  inter_views.reserve(static_cast<std::size_t>(B));
  views.lambdas.reserve(static_cast<std::size_t>(B));
  Eigen::MatrixXd inter_target(B, views.z_key.cols());
  for (int b = 0; b < B; ++b) {
    Rng mix_rng = rng.fork("lambda").fork(static_cast<std::uint64_t>(b));
    const double lambda = sample_mix_lambda(aug.mix_alpha, mix_rng);
    const auto partner = views.pairing[static_cast<std::size_t>(b)];
    views.lambdas.push_back(lambda);
    inter_views.push_back(
        mix(batch[static_cast<std::size_t>(b)], batch[partner], lambda));
    // z'_inter = (1-lambda) z'_a + lambda z'_b, renormalized onto the sphere.
    Eigen::RowVectorXd target = (1.0 - lambda) * views.z_key.row(b) +
                                lambda * views.z_key.row(static_cast<Eigen::Index>(partner));
    const double norm = target.norm();
    inter_target.row(b) = norm > 0 ? (target / norm).eval() : target;
  }

  std::vector<SkeletonSequence> clip_views;
  if (toggles.clip) {
    clip_views.reserve(static_cast<std::size_t>(B));
    views.clip_windows.resize(static_cast<std::size_t>(B));
    for (int b = 0; b < B; ++b) {
      Rng clip_rng = rng.fork("clip").fork(static_cast<std::uint64_t>(b));
      clip_views.push_back(sample_clip(views.key_views[static_cast<std::size_t>(b)], aug,
                                       clip_rng, &views.clip_windows[static_cast<std::size_t>(b)]));
    }
    views.clip_views = clip_views;
  }

  views.masks.reserve(static_cast<std::size_t>(B));
  std::vector<SkeletonSequence> masked_views;
  masked_views.reserve(static_cast<std::size_t>(B));
  for (int b = 0; b < B; ++b) {
    Rng mask_rng = rng.fork("mask").fork(static_cast<std::uint64_t>(b));
    views.masks.push_back(
        make_mask(T, batch.front().num_joints, aug, mask_rng));
    masked_views.push_back(
        apply_mask(batch[static_cast<std::size_t>(b)], views.masks.back()));
  }
  const Eigen::MatrixXd mask_channels = expand_masks(views.masks, batch.front().num_channels);

  // Query-side graph. Raw data enters as constants; prompts and weights are
  // the gradient roots.
  views.pairs.push_back({"intra",
                         encode_query_view(model, ad::constant(stack_batch(intra_views)), T, B,
                                           DomainTag::kIntra),
                         views.z_key});
  views.pairs.push_back({"inter",
                         encode_query_view(model, ad::constant(stack_batch(inter_views)), T, B,
                                           DomainTag::kInter),
                         inter_target});
  if (toggles.clip) {
    views.pairs.push_back({"clip",
                           encode_query_view(model, ad::constant(stack_batch(clip_views)), T, B,
                                             DomainTag::kClip),
                           views.z_key});
  }

  // Masked view: one encoder pass feeds both the embedding and the decoder.
  const Var masked_input =
      add_prompt(ad::constant(stack_batch(masked_views)), model.prompts, DomainTag::kMask);
  const EncodeResult masked_enc =
      encode_batch(model.query_encoder, &model.query_projector, masked_input, T, B);
  if (toggles.mask_view) views.pairs.push_back({"mask", masked_enc.embedding, views.z_key});

  views.s_hat = decode_frames(model.decoder, masked_enc.frames, T, B);
  const Var raw = ad::constant(views.raw_batch);
  const Var prediction_source =
      toggles.semantic_guidance ? views.s_hat : ad::detach(views.s_hat);
  views.s_predict = compose_prediction(raw, prediction_source, mask_channels);
  if (toggles.predict_view) {
    views.pairs.push_back(
        {"predict", encode_query_view(model, views.s_predict, T, B, DomainTag::kPredict),
         views.z_key});
  }

  views.mask_term = mask_loss(raw, views.s_hat, mask_channels);
  return views;
}

void SgdOptimizer::step(std::vector<NamedParam> params) {
  for (auto& p : params) {
    if (!p.var.requires_grad()) continue;
    const Eigen::MatrixXd& g = p.var.grad();
    auto [it, inserted] = velocity_.try_emplace(
        p.name, Eigen::MatrixXd::Zero(g.rows(), g.cols()));
    if (it->second.rows() != g.rows() || it->second.cols() != g.cols())
      throw ShapeError("SgdOptimizer: velocity shape mismatch for " + p.name);
    it->second = momentum_ * it->second + g;
    p.var.mutable_value() -= lr_ * it->second;
    p.var.zero_grad();
  }
}

std::string StepMetrics::to_json_line(std::uint64_t config_hash) const {
  nlohmann::json j;
  j["step"] = step;
  j["epoch"] = epoch;
  j["stage"] = stage_name(stage);
  j["lr"] = lr;
  char hash_hex[20];
  std::snprintf(hash_hex, sizeof(hash_hex), "%016llx",
                static_cast<unsigned long long>(config_hash));
  j["config_hash"] = hash_hex;
  for (const auto& [k, v] : terms) j[k] = v;
  return j.dump();
}

StepMetrics train_step(EncoderBundle& model, ViewBundle& views, MemoryQueue& queue,
                       const LossWeights& weights, Stage stage, SgdOptimizer& optimizer) {
  if (queue.size() == 0) throw ShapeError("train_step: memory queue is empty");
  const Eigen::MatrixXd anchors = queue.contents();

  StepMetrics metrics;
  metrics.stage = stage;
  metrics.lr = optimizer.lr();

  std::vector<PairLosses> pair_losses;
  pair_losses.reserve(views.pairs.size());
  for (const auto& pair : views.pairs) {
    PairLosses losses;
    losses.name = pair.name;
    const Var z_k = ad::constant(pair.z_key);
    losses.info = info_nce(pair.z_query, z_k, anchors, weights.tau);
    losses.kd = kd_loss(pair.z_query, z_k, anchors, weights.tau_q, weights.tau_k);
    pair_losses.push_back(losses);
  }

  const Var total = total_loss(pair_losses, views.mask_term, weights, stage);

  auto record = [&metrics](const std::string& name, double value) {
    if (!std::isfinite(value))
      throw NumericalError("non-finite loss term '" + name + "' at step " +
                           std::to_string(metrics.step));
    metrics.terms[name] = value;
  };
  for (const auto& l : pair_losses) {
    record("loss_info_" + l.name, l.info.scalar());
    record("loss_kd_" + l.name, l.kd.scalar());
  }
  record("loss_mask", views.mask_term.scalar());
  record("loss_total", total.scalar());

  ad::backward(total);

  double decoder_grad = 0;
  for (const auto& p : model.decoder_params())
    decoder_grad += p.var.grad().array().abs().sum();
  metrics.terms["grad_norm_decoder"] = decoder_grad;

  optimizer.step(model.trainable_params());
  momentum_update(model);
  queue.enqueue(views.z_key);
  return metrics;
}

double cosine_lr(double lr0, int epoch, int total_epochs) {
  if (total_epochs <= 0) return lr0;
  const double frac = static_cast<double>(epoch) / total_epochs;
  return lr0 * 0.5 * (1.0 + std::cos(std::numbers::pi * frac));
}

std::vector<SkeletonSequence> load_training_set(const TrainConfig& config) {
  const SplitArchive archive = read_archive(config.train_archive);
  std::vector<SkeletonSequence> out;
  out.reserve(archive.samples.size());
  for (const auto& raw : archive.samples) {
    SkeletonSequence seq = normalize(raw, config.root_joint);
    if (config.frames > 0 && seq.frames() != config.frames)
      seq.data = resample_rows(seq.data, config.frames);
    out.push_back(std::move(seq));
  }
  if (out.empty()) throw DataError("training archive has no samples: " + config.train_archive);
  return out;
}

namespace {

void warm_fill_queue(MemoryQueue& queue, Rng rng) {
  // Seeded random unit vectors so the first step already sees a full bank of
  // negatives; real keys then displace them FIFO.
  Eigen::MatrixXd init(queue.capacity(), queue.dim());
  for (Eigen::Index r = 0; r < init.rows(); ++r) {
    for (Eigen::Index c = 0; c < init.cols(); ++c) init(r, c) = rng.normal();
    init.row(r) /= std::max(init.row(r).norm(), 1e-12);
  }
  queue.enqueue(init);
}

}  // namespace

CheckpointData snapshot_checkpoint(EncoderBundle& model, const SgdOptimizer& optimizer,
                                   const MemoryQueue& queue, Stage stage, int epoch,
                                   std::uint64_t step, const std::string& config_json,
                                   std::uint64_t config_hash) {
  CheckpointData data;
  data.config_json = config_json;
  data.config_hash = config_hash;
  data.stage = stage_name(stage);
  data.epoch = epoch;
  data.step = step;
  data.queue_size = queue.size();
  data.queue_cursor = queue.cursor();
  for (const auto& p : model.all_params()) data.tensors.emplace_back(p.name, p.var.value());
  for (const auto& [name, v] : optimizer.velocities())
    data.tensors.emplace_back("opt." + name, v);
  data.tensors.emplace_back("queue.storage", queue.storage());
  return data;
}

int restore_from_checkpoint(const CheckpointData& data, EncoderBundle& model,
                            SgdOptimizer* optimizer, MemoryQueue* queue) {
  for (auto& p : model.all_params()) {
    const Eigen::MatrixXd* stored = data.find(p.name);
    if (!stored) throw ParseError("checkpoint missing parameter tensor '" + p.name + "'");
    if (stored->rows() != p.var.rows() || stored->cols() != p.var.cols())
      throw ShapeError("checkpoint tensor shape mismatch for '" + p.name + "'");
    p.var.mutable_value() = *stored;
  }
  if (optimizer) {
    optimizer->velocities().clear();
    for (const auto& [name, tensor] : data.tensors) {
      if (name.rfind("opt.", 0) == 0) optimizer->velocities()[name.substr(4)] = tensor;
    }
  }
  if (queue) {
    const Eigen::MatrixXd* storage = data.find("queue.storage");
    if (!storage) throw ParseError("checkpoint missing section 'queue.storage'");
    queue->restore(*storage, data.queue_size, data.queue_cursor);
  }
  return data.epoch;
}

PretrainResult run_pretraining(const TrainConfig& config, const std::string& config_json,
                               std::uint64_t config_hash, const std::string& resume_from) {
  config.validate();
  namespace fs = std::filesystem;
  fs::create_directories(config.out_dir);

  std::vector<SkeletonSequence> train_set = load_training_set(config);
  ModelConfig model_cfg = config.model;
  model_cfg.joints = train_set.front().num_joints;
  model_cfg.channels = train_set.front().num_channels;

  const Rng master(config.seed);
  Rng init_rng = master.fork("init");
  EncoderBundle model = make_bundle(model_cfg, init_rng);
  MemoryQueue queue(model_cfg.queue_capacity, model_cfg.embed_dim);
  warm_fill_queue(queue, master.fork("queue-init"));
  SgdOptimizer optimizer(config.lr, config.sgd_momentum);

  int start_epoch = 0;
  std::uint64_t global_step = 0;
  if (!resume_from.empty()) {
    const CheckpointData data = read_checkpoint(resume_from);
    start_epoch = restore_from_checkpoint(data, model, &optimizer, &queue);
    global_step = data.step;
  }

  const std::string metrics_path = (fs::path(config.out_dir) / "metrics.jsonl").string();
  std::ofstream metrics_out(metrics_path, std::ios::app);
  if (!metrics_out) throw IoError("cannot open metrics log: " + metrics_path);

  const int batches_per_epoch =
      static_cast<int>(train_set.size()) / config.batch_size;
  if (batches_per_epoch < 1)
    throw DataError("training set smaller than one batch (" +
                    std::to_string(train_set.size()) + " samples, batch " +
                    std::to_string(config.batch_size) + ")");

  std::string last_checkpoint;
  for (int epoch = start_epoch; epoch < config.total_epochs(); ++epoch) {
    const Stage stage =
        epoch < config.epochs_joint ? Stage::kJointTraining : Stage::kPostDistillation;
    optimizer.set_lr(cosine_lr(config.lr, epoch, config.total_epochs()));

    Rng epoch_rng = master.fork("epoch").fork(static_cast<std::uint64_t>(epoch));
    const auto order = epoch_rng.fork("shuffle").permutation(train_set.size());

    for (int step = 0; step < batches_per_epoch; ++step) {
      std::vector<SkeletonSequence> batch;
      batch.reserve(static_cast<std::size_t>(config.batch_size));
      for (int b = 0; b < config.batch_size; ++b)
        batch.push_back(
            train_set[order[static_cast<std::size_t>(step) * config.batch_size + b]]);

      Rng step_rng = epoch_rng.fork("step").fork(static_cast<std::uint64_t>(step));
      ViewBundle views = build_views(batch, config.augment, model, config.views, step_rng);
      StepMetrics metrics = train_step(model, views, queue, config.weights, stage, optimizer);
      metrics.step = ++global_step;
      metrics.epoch = epoch;
      metrics_out << metrics.to_json_line(config_hash) << "\n";
    }
    metrics_out.flush();

    char name[32];
    std::snprintf(name, sizeof(name), "epoch-%04d.ckpt", epoch + 1);
    const std::string ckpt_path = (fs::path(config.out_dir) / name).string();
    const CheckpointData snapshot = snapshot_checkpoint(
        model, optimizer, queue, stage, epoch + 1, global_step, config_json, config_hash);
    write_checkpoint(snapshot, ckpt_path);
    last_checkpoint = ckpt_path;
  }

  PretrainResult result;
  result.final_checkpoint = last_checkpoint;
  result.metrics_path = metrics_path;
  result.config_hash = config_hash;
  return result;
}

}  // namespace skelssl
