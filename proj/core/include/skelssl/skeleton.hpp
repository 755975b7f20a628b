#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "skelssl/rng.hpp"

namespace skelssl {

// One body's 3D joint trajectory. Frames are rows of a T x (V*C) matrix;
// entry (t, v*C + c) is channel c of joint v at frame t, in meters.
struct SkeletonSequence {
  Eigen::MatrixXd data;  // T x (V*C)
  int num_joints = 0;    // V
  int num_channels = 3;  // C
  std::optional<int> label;
  std::string sample_id;
  std::optional<std::string> split_tag;

  SkeletonSequence() = default;
  SkeletonSequence(int frames, int joints, int channels = 3)
      : data(Eigen::MatrixXd::Zero(frames, joints * channels)),
        num_joints(joints),
        num_channels(channels) {}

  int frames() const { return static_cast<int>(data.rows()); }
  double& at(int t, int v, int c) { return data(t, v * num_channels + c); }
  double at(int t, int v, int c) const { return data(t, v * num_channels + c); }

  // Throws ShapeError when the invariants (T >= 2, V >= 1, C == 3, finite
  // entries, consistent storage width) do not hold.
  void validate() const;
};

enum class ModalityKind { kJoint, kBone, kMotion };

struct ModalityView {
  ModalityKind kind = ModalityKind::kJoint;
  Eigen::MatrixXd data;  // same T x (V*C) layout as the source
  int num_joints = 0;
  int num_channels = 3;
};

// (child, parent) pairs; every joint except the root appears exactly once
// as a child.
using EdgeList = std::vector<std::pair<int, int>>;

// The canonical NTU 25-joint kinematic tree, rooted at the spine base
// (joint 0). 24 edges.
const EdgeList& ntu25_edges();

// Five-part body partition for the NTU 25-joint layout:
// torso+head, left arm, right arm, left leg, right leg.
const std::vector<std::vector<int>>& ntu25_parts();

// Fallback partition for other joint counts: up to five contiguous chunks.
std::vector<std::vector<int>> contiguous_parts(int num_joints, int num_parts = 5);

struct DatasetManifest {
  std::vector<SkeletonSequence> samples;
  int num_classes = 0;

  std::vector<std::size_t> split_indices(const std::string& tag) const;
};

struct SyntheticSpec {
  int num_classes = 4;       // K >= 2
  int samples_per_class = 40;
  int frames = 64;           // T
  int joints = 25;           // V
  double noise_sigma = 0.01; // meters
  std::uint64_t seed = 7;
  // Trajectory generators are indexed by (seed, class_offset + k, joint), so
  // a nonzero offset yields classes disjoint from the base set. Used to build
  // held-out few-shot classes.
  int class_offset = 0;

  void validate() const;
};

// --- operations -----------------------------------------------------------

// Parses the NTU `.skeleton` text layout and keeps the first tracked body.
// Frames with body count 0 are zero-filled. Throws ParseError naming the
// offending line.
SkeletonSequence parse_ntu_skeleton(const std::string& raw_text);

// Writes a sequence back to the NTU text layout (single body, x y z per
// joint line, coordinates printed exactly). parse(serialize(s)) round-trips
// coordinates bit-exactly.
std::string serialize_ntu_skeleton(const SkeletonSequence& seq);

// bone[t][child] = joint[t][child] - joint[t][parent]; root bone is zero.
ModalityView to_bone(const SkeletonSequence& seq, const EdgeList& edges);

// motion[t] = joint[t] - joint[t-1] for t >= 1; motion[0] = 0.
ModalityView to_motion(const SkeletonSequence& seq);

// Translates the whole sequence so the root joint of frame 0 is the origin.
SkeletonSequence normalize(const SkeletonSequence& seq, int root_joint);

// Class-coded sinusoids with per-sample phase jitter and Gaussian noise.
// Pure function of the spec: identical spec => bit-identical manifest.
// Samples carry split tags "train"/"test" (deterministic 80/20 per class).
DatasetManifest generate_synthetic(const SyntheticSpec& spec);

// Untrimmed sequences for the detection protocol: labeled class segments
// separated by near-still background. Per-frame labels use 0 = background,
// 1..K = spec classes. Returned manifest has num_classes = K + 1 and each
// sample stores its frame labels in `frame_labels`.
struct UntrimmedSample {
  SkeletonSequence seq;
  std::vector<int> frame_labels;  // length T, values in [0, K]
};

struct UntrimmedSpec {
  SyntheticSpec base;          // class generators and noise
  int num_sequences = 12;
  int total_frames = 256;      // length of each untrimmed sequence
  int min_segment = 24;
  int max_segment = 56;
  int min_gap = 8;
  int max_gap = 24;
};

struct UntrimmedSet {
  std::vector<UntrimmedSample> train;
  std::vector<UntrimmedSample> test;
  int num_classes = 0;  // including background
};

UntrimmedSet generate_untrimmed(const UntrimmedSpec& spec);

// Linear interpolation of a sequence window to a target length; shared by
// the temporal augmentations and batch-uniform loading.
Eigen::MatrixXd resample_rows(const Eigen::MatrixXd& rows, int target_len);

}  // namespace skelssl
