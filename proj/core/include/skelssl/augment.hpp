#pragma once

#include <Eigen/Core>
#include <array>
#include <utility>
#include <vector>

#include "skelssl/rng.hpp"
#include "skelssl/skeleton.hpp"

namespace skelssl {

// Which view a sequence was built for; indexes the prompt bank.
enum class DomainTag { kIntra = 0, kInter = 1, kClip = 2, kMask = 3, kPredict = 4 };
constexpr int kNumDomainTags = 5;
const char* domain_tag_name(DomainTag tag);

struct AugmentParams {
  double shear_beta = 0.5;
  double jitter_sigma = 0.05;          // meters
  double jitter_joint_fraction = 0.15;
  std::array<double, 2> crop_ratio_range = {0.5, 1.0};
  double mix_alpha = 1.0;              // Beta(alpha, alpha)
  std::array<double, 2> clip_ratio_range = {0.10, 0.40};
  double mask_ratio = 0.5;             // rho
  int segment_len = 8;                 // frames per masked temporal segment
  std::vector<std::vector<int>> part_partition;  // defaults to NTU 5 parts

  // Throws ShapeError if ranges are unordered or the partition does not
  // cover [0, V) disjointly. Fills in the default partition when empty.
  void validate_for(int num_joints);
};

// Binary visibility map: 1 = visible, 0 = masked. Stored as doubles so it
// multiplies straight into sequence tensors.
struct MaskMatrix {
  Eigen::MatrixXd bits;  // T x V

  int frames() const { return static_cast<int>(bits.rows()); }
  int joints() const { return static_cast<int>(bits.cols()); }
  double masked_fraction() const;
};

// --- intra-sample augmentations ---

// Contiguous window of ceil(ratio*T) frames at a uniform-random start,
// linearly interpolated back to length T.
SkeletonSequence temporal_crop_resize(const SkeletonSequence& seq, double ratio, Rng& rng);

// One shared 3x3 shear (unit diagonal, off-diagonals ~ U[-beta, beta])
// applied to every joint of every frame.
SkeletonSequence shear(const SkeletonSequence& seq, double beta, Rng& rng);
// Variant exposing the sampled matrix, for tests that invert it.
SkeletonSequence shear_with_matrix(const SkeletonSequence& seq, double beta, Rng& rng,
                                   Eigen::Matrix3d& matrix_out);

// Gaussian noise on a random ceil(fraction*V) subset of joints.
SkeletonSequence joint_jitter(const SkeletonSequence& seq, double sigma, double fraction,
                              Rng& rng);

// --- inter-sample ---

// Elementwise (1-lambda)*a + lambda*b.
SkeletonSequence mix(const SkeletonSequence& a, const SkeletonSequence& b, double lambda);

// Beta(alpha, alpha) draw for the mixing coefficient.
double sample_mix_lambda(double alpha, Rng& rng);

// --- temporal asymmetric clip ---

struct ClipWindow {
  int start = 0;
  int length = 0;
};

// Short clip (ratio ~ U over clip_ratio_range) of an already-augmented
// anchor, resized to the anchor's length. No further spatial transform, so
// clip and anchor share spatial views. window_out reports the pre-resize
// frame range.
SkeletonSequence sample_clip(const SkeletonSequence& anchor, const AugmentParams& params,
                             Rng& rng, ClipWindow* window_out = nullptr);

// --- masking ---

// Segment-wise body-part masking: draws (part, segment start) blocks until
// the masked fraction reaches params.mask_ratio.
MaskMatrix make_mask(int frames, int joints, const AugmentParams& params, Rng& rng);

// s_mask[t][v] = s[t][v] * M[t][v], all channels of a joint zeroed together.
SkeletonSequence apply_mask(const SkeletonSequence& seq, const MaskMatrix& mask);

// --- occlusion synthesis for evaluation ---

enum class OcclusionMode { kSpatial = 1, kTemporal = 2 };

// Ratio ~ U[0.3, 0.7]; spatial mode zeroes whole body parts until the joint
// fraction reaches the ratio, temporal mode zeroes one contiguous frame
// block of ceil(ratio*T) frames.
SkeletonSequence synth_occlusion(const SkeletonSequence& seq, OcclusionMode mode, Rng& rng,
                                 const std::vector<std::vector<int>>& parts);

// Full intra-augmentation chain (crop-resize, shear, jitter) used by both
// branches of the contrastive pipeline.
SkeletonSequence intra_augment(const SkeletonSequence& seq, const AugmentParams& params, Rng& rng);

}  // namespace skelssl
