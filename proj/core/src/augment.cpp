#include "skelssl/augment.hpp"

#include <algorithm>
#include <cmath>

#include "skelssl/errors.hpp"

namespace skelssl {

const char* domain_tag_name(DomainTag tag) {
  switch (tag) {
    case DomainTag::kIntra: return "intra";
    case DomainTag::kInter: return "inter";
    case DomainTag::kClip: return "clip";
    case DomainTag::kMask: return "mask";
    case DomainTag::kPredict: return "predict";
  }
  throw ShapeError("unknown domain tag");
}

void AugmentParams::validate_for(int num_joints) {
  if (shear_beta < 0 || jitter_sigma < 0) throw ShapeError("AugmentParams: negative magnitude");
  if (jitter_joint_fraction < 0 || jitter_joint_fraction > 1)
    throw ShapeError("AugmentParams: jitter_joint_fraction outside [0,1]");
  if (!(crop_ratio_range[0] <= crop_ratio_range[1]) || crop_ratio_range[0] <= 0 ||
      crop_ratio_range[1] > 1)
    throw ShapeError("AugmentParams: crop_ratio_range must be ordered within (0,1]");
  if (!(clip_ratio_range[0] <= clip_ratio_range[1]) || clip_ratio_range[0] <= 0 ||
      clip_ratio_range[1] > 1)
    throw ShapeError("AugmentParams: clip_ratio_range must be ordered within (0,1]");
  if (mix_alpha <= 0) throw ShapeError("AugmentParams: mix_alpha must be > 0");
  if (mask_ratio < 0 || mask_ratio > 1) throw ShapeError("AugmentParams: mask_ratio outside [0,1]");
  if (segment_len < 1) throw ShapeError("AugmentParams: segment_len must be >= 1");

  if (part_partition.empty()) part_partition = contiguous_parts(num_joints);
  std::vector<int> seen(static_cast<std::size_t>(num_joints), 0);
  for (const auto& part : part_partition) {
    if (part.empty()) throw ShapeError("AugmentParams: empty body part");
    for (int v : part) {
      if (v < 0 || v >= num_joints) throw ShapeError("AugmentParams: part joint outside [0,V)");
      if (seen[static_cast<std::size_t>(v)]++)
        throw ShapeError("AugmentParams: joint in two parts");
    }
  }
  for (int v = 0; v < num_joints; ++v)
    if (!seen[static_cast<std::size_t>(v)])
      throw ShapeError("AugmentParams: partition does not cover joint " + std::to_string(v));
}

double MaskMatrix::masked_fraction() const {
  return 1.0 - bits.sum() / static_cast<double>(bits.size());
}

namespace {

SkeletonSequence crop_window_and_resize(const SkeletonSequence& seq, int window_len, Rng& rng,
                                        ClipWindow* window_out) {
  const int T = seq.frames();
  if (window_len < 2)
    throw ShapeError("temporal crop: window must keep at least 2 frames");
  const int max_start = T - window_len;
  const int start = max_start > 0 ? static_cast<int>(rng.below(
                                        static_cast<std::uint64_t>(max_start + 1)))
                                  : 0;
  if (window_out) *window_out = {start, window_len};

  SkeletonSequence out = seq;
  out.data = resample_rows(seq.data.middleRows(start, window_len), T);
  return out;
}

}  // namespace

SkeletonSequence temporal_crop_resize(const SkeletonSequence& seq, double ratio, Rng& rng) {
  seq.validate();
  if (ratio <= 0 || ratio > 1) throw ShapeError("temporal_crop_resize: ratio outside (0,1]");
  const int window = static_cast<int>(std::ceil(ratio * seq.frames()));
  return crop_window_and_resize(seq, window, rng, nullptr);
}

SkeletonSequence shear_with_matrix(const SkeletonSequence& seq, double beta, Rng& rng,
                                   Eigen::Matrix3d& matrix_out) {
  seq.validate();
  if (beta < 0) throw ShapeError("shear: beta must be >= 0");
  Eigen::Matrix3d a = Eigen::Matrix3d::Identity();
  // Fixed draw order keeps the transform reproducible for a given stream.
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c)
      if (r != c) a(r, c) = rng.uniform(-beta, beta);
  matrix_out = a;

  SkeletonSequence out = seq;
  const int C = seq.num_channels;
  for (int v = 0; v < seq.num_joints; ++v) {
    // Rows of the block are per-frame coordinate vectors: x' = A x.
    out.data.middleCols(v * C, C) = seq.data.middleCols(v * C, C) * a.transpose();
  }
  return out;
}

SkeletonSequence shear(const SkeletonSequence& seq, double beta, Rng& rng) {
  Eigen::Matrix3d unused;
  return shear_with_matrix(seq, beta, rng, unused);
}

SkeletonSequence joint_jitter(const SkeletonSequence& seq, double sigma, double fraction,
                              Rng& rng) {
  seq.validate();
  if (sigma < 0) throw ShapeError("joint_jitter: sigma must be >= 0");
  if (fraction < 0 || fraction > 1) throw ShapeError("joint_jitter: fraction outside [0,1]");

  const int count = static_cast<int>(std::ceil(fraction * seq.num_joints));
  if (count == 0 || sigma == 0) return seq;

  const auto chosen = rng.sample_without_replacement(
      static_cast<std::size_t>(seq.num_joints), static_cast<std::size_t>(count));
  SkeletonSequence out = seq;
  const int C = seq.num_channels;
  for (const auto v : chosen) {
    for (int t = 0; t < seq.frames(); ++t)
      for (int c = 0; c < C; ++c)
        out.at(t, static_cast<int>(v), c) += rng.normal(0.0, sigma);
  }
  return out;
}

SkeletonSequence mix(const SkeletonSequence& a, const SkeletonSequence& b, double lambda) {
  if (a.data.rows() != b.data.rows() || a.data.cols() != b.data.cols())
    throw ShapeError("mix: shape mismatch");
  if (lambda < 0 || lambda > 1) throw ShapeError("mix: lambda outside [0,1]");
  SkeletonSequence out = a;
  out.data = (1.0 - lambda) * a.data + lambda * b.data;
  out.label.reset();
  return out;
}

double sample_mix_lambda(double alpha, Rng& rng) {
  if (alpha <= 0) throw ShapeError("sample_mix_lambda: alpha must be > 0");
  // Beta(a, a) via two gamma draws (Marsaglia-Tsang with boosting for a < 1).
  auto gamma_draw = [&rng](double shape) {
    double boost = 1.0;
    double a = shape;
    if (a < 1.0) {
      boost = std::pow(rng.uniform() + 1e-300, 1.0 / a);
      a += 1.0;
    }
    const double d = a - 1.0 / 3.0;
    const double c = 1.0 / std::sqrt(9.0 * d);
    while (true) {
      double x = rng.normal();
      double v = 1.0 + c * x;
      if (v <= 0) continue;
      v = v * v * v;
      const double u = rng.uniform();
      if (u < 1.0 - 0.0331 * x * x * x * x) return boost * d * v;
      if (std::log(u + 1e-300) < 0.5 * x * x + d * (1.0 - v + std::log(v))) return boost * d * v;
    }
  };
  const double ga = gamma_draw(alpha);
  const double gb = gamma_draw(alpha);
  const double denom = ga + gb;
  return denom > 0 ? ga / denom : 0.5;
}

SkeletonSequence sample_clip(const SkeletonSequence& anchor, const AugmentParams& params,
                             Rng& rng, ClipWindow* window_out) {
  anchor.validate();
  const double ratio = rng.uniform(params.clip_ratio_range[0], params.clip_ratio_range[1]);
  const int window = static_cast<int>(std::ceil(ratio * anchor.frames()));
  if (window < 2) throw ShapeError("sample_clip: sequence too short for a 2-frame clip");
  return crop_window_and_resize(anchor, window, rng, window_out);
}

MaskMatrix make_mask(int frames, int joints, const AugmentParams& params, Rng& rng) {
  if (frames < 1 || joints < 1) throw ShapeError("make_mask: empty mask shape");
  AugmentParams p = params;
  p.validate_for(joints);

  MaskMatrix mask;
  mask.bits = Eigen::MatrixXd::Ones(frames, joints);
  if (p.mask_ratio <= 0) return mask;

  const int seg_len = std::min(p.segment_len, frames);
  const double total = static_cast<double>(frames) * joints;
  double masked = 0;
  while (masked / total < p.mask_ratio) {
    const auto& part =
        p.part_partition[static_cast<std::size_t>(rng.below(p.part_partition.size()))];
    const int start = static_cast<int>(rng.below(static_cast<std::uint64_t>(frames)));
    const int len = std::min(seg_len, frames - start);
    for (int t = start; t < start + len; ++t) {
      for (int v : part) {
        if (mask.bits(t, v) != 0.0) {
          mask.bits(t, v) = 0.0;
          masked += 1.0;
        }
      }
    }
  }
  return mask;
}

SkeletonSequence apply_mask(const SkeletonSequence& seq, const MaskMatrix& mask) {
  if (mask.frames() != seq.frames() || mask.joints() != seq.num_joints)
    throw ShapeError("apply_mask: mask shape does not match sequence");
  SkeletonSequence out = seq;
  const int C = seq.num_channels;
  for (int v = 0; v < seq.num_joints; ++v)
    for (int c = 0; c < C; ++c)
      out.data.col(v * C + c).array() *= mask.bits.col(v).array();
  return out;
}

SkeletonSequence synth_occlusion(const SkeletonSequence& seq, OcclusionMode mode, Rng& rng,
                                 const std::vector<std::vector<int>>& parts) {
  seq.validate();
  const double ratio = rng.uniform(0.3, 0.7);
  SkeletonSequence out = seq;

  if (mode == OcclusionMode::kTemporal) {
    const int block = std::min(seq.frames(),
                               static_cast<int>(std::ceil(ratio * seq.frames())));
    const int max_start = seq.frames() - block;
    const int start = max_start > 0 ? static_cast<int>(rng.below(
                                          static_cast<std::uint64_t>(max_start + 1)))
                                    : 0;
    out.data.middleRows(start, block).setZero();
    return out;
  }

  if (parts.empty()) throw ShapeError("synth_occlusion: spatial mode needs a part partition");
  const auto order = rng.permutation(parts.size());
  const int C = seq.num_channels;
  int zeroed = 0;
  for (const auto pi : order) {
    if (static_cast<double>(zeroed) / seq.num_joints >= ratio) break;
    for (int v : parts[pi]) {
      out.data.middleCols(v * C, C).setZero();
      ++zeroed;
    }
  }
  return out;
}

SkeletonSequence intra_augment(const SkeletonSequence& seq, const AugmentParams& params,
                               Rng& rng) {
  AugmentParams p = params;
  p.validate_for(seq.num_joints);
  const double ratio = rng.uniform(p.crop_ratio_range[0], p.crop_ratio_range[1]);
  SkeletonSequence out = temporal_crop_resize(seq, ratio, rng);
  out = shear(out, p.shear_beta, rng);
  out = joint_jitter(out, p.jitter_sigma, p.jitter_joint_fraction, rng);
  return out;
}

}  // namespace skelssl
