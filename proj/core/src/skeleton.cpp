#include "skelssl/skeleton.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <sstream>

#include "skelssl/errors.hpp"

namespace skelssl {

void SkeletonSequence::validate() const {
  if (num_channels != 3) throw ShapeError("SkeletonSequence: C must be 3");
  if (num_joints < 1) throw ShapeError("SkeletonSequence: V must be >= 1");
  if (frames() < 2) throw ShapeError("SkeletonSequence: T must be >= 2");
  if (data.cols() != static_cast<Eigen::Index>(num_joints) * num_channels)
    throw ShapeError("SkeletonSequence: storage width != V*C");
  if (!data.allFinite()) throw ShapeError("SkeletonSequence: non-finite entry");
}

void SyntheticSpec::validate() const {
  if (num_classes < 2) throw ShapeError("SyntheticSpec: K must be >= 2");
  if (samples_per_class < 1) throw ShapeError("SyntheticSpec: samples_per_class must be >= 1");
  if (frames < 2) throw ShapeError("SyntheticSpec: T must be >= 2");
  if (joints < 1) throw ShapeError("SyntheticSpec: V must be >= 1");
  if (noise_sigma < 0) throw ShapeError("SyntheticSpec: noise_sigma must be >= 0");
}

const EdgeList& ntu25_edges() {
  // (child, parent), 0-indexed, rooted at the spine base.
  static const EdgeList edges = {
      {1, 0},   {20, 1},  {2, 20},  {3, 2},           // spine, neck, head
      {4, 20},  {5, 4},   {6, 5},   {7, 6},   {21, 7},  {22, 7},   // left arm
      {8, 20},  {9, 8},   {10, 9},  {11, 10}, {23, 11}, {24, 11},  // right arm
      {12, 0},  {13, 12}, {14, 13}, {15, 14},          // left leg
      {16, 0},  {17, 16}, {18, 17}, {19, 18},          // right leg
  };
  return edges;
}

const std::vector<std::vector<int>>& ntu25_parts() {
  static const std::vector<std::vector<int>> parts = {
      {0, 1, 20, 2, 3},          // torso + head
      {4, 5, 6, 7, 21, 22},      // left arm
      {8, 9, 10, 11, 23, 24},    // right arm
      {12, 13, 14, 15},          // left leg
      {16, 17, 18, 19},          // right leg
  };
  return parts;
}

std::vector<std::vector<int>> contiguous_parts(int num_joints, int num_parts) {
  if (num_joints == 25 && num_parts == 5) return ntu25_parts();
  const int parts = std::min(num_parts, num_joints);
  std::vector<std::vector<int>> out(parts);
  for (int v = 0; v < num_joints; ++v) out[v * parts / num_joints].push_back(v);
  return out;
}

std::vector<std::size_t> DatasetManifest::split_indices(const std::string& tag) const {
  std::vector<std::size_t> idx;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    if (samples[i].split_tag && *samples[i].split_tag == tag) idx.push_back(i);
  }
  return idx;
}

namespace {

// Line-oriented tokenizer that tracks line numbers for parse diagnostics.
class LineReader {
 public:
  explicit LineReader(const std::string& text) : text_(text) {}

  bool next_line(std::string_view& line) {
    if (pos_ >= text_.size()) return false;
    std::size_t end = text_.find('\n', pos_);
    if (end == std::string::npos) end = text_.size();
    line = std::string_view(text_).substr(pos_, end - pos_);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    pos_ = end + 1;
    ++line_no_;
    return true;
  }

  int line_no() const { return line_no_; }

 private:
  const std::string& text_;
  std::size_t pos_ = 0;
  int line_no_ = 0;
};

std::vector<std::string_view> split_fields(std::string_view line) {
  std::vector<std::string_view> fields;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && (line[i] == ' ' || line[i] == '\t')) ++i;
    std::size_t j = i;
    while (j < line.size() && line[j] != ' ' && line[j] != '\t') ++j;
    if (j > i) fields.push_back(line.substr(i, j - i));
    i = j;
  }
  return fields;
}

long parse_count_line(LineReader& reader, const char* what) {
  std::string_view line;
  if (!reader.next_line(line))
    throw ParseError(std::string("unexpected end of file, expected ") + what);
  const auto fields = split_fields(line);
  if (fields.size() != 1)
    throw ParseError(std::string("line ") + std::to_string(reader.line_no()) +
                     ": expected a single integer (" + what + ")");
  long value = 0;
  const auto res = std::from_chars(fields[0].data(), fields[0].data() + fields[0].size(), value);
  if (res.ec != std::errc() || res.ptr != fields[0].data() + fields[0].size() || value < 0)
    throw ParseError(std::string("line ") + std::to_string(reader.line_no()) +
                     ": malformed count for " + what);
  return value;
}

double parse_real(std::string_view field, int line_no) {
  double value = 0;
  const auto res = std::from_chars(field.data(), field.data() + field.size(), value);
  if (res.ec != std::errc() || res.ptr != field.data() + field.size())
    throw ParseError("line " + std::to_string(line_no) + ": non-numeric coordinate '" +
                     std::string(field) + "'");
  return value;
}

}  // namespace

SkeletonSequence parse_ntu_skeleton(const std::string& raw_text) {
  LineReader reader(raw_text);
  const long num_frames = parse_count_line(reader, "frame count");
  if (num_frames < 2)
    throw ParseError("line 1: frame count must be >= 2, got " + std::to_string(num_frames));

  constexpr int kJoints = 25;
  SkeletonSequence seq(static_cast<int>(num_frames), kJoints, 3);

  for (long t = 0; t < num_frames; ++t) {
    long bodies;
    try {
      bodies = parse_count_line(reader, "body count");
    } catch (const ParseError& e) {
      throw ParseError(std::string(e.what()) + " (frame " + std::to_string(t) + ")");
    }
    for (long b = 0; b < bodies; ++b) {
      std::string_view meta;
      if (!reader.next_line(meta))
        throw ParseError("unexpected end of file: truncated body metadata in frame " +
                         std::to_string(t));
      if (split_fields(meta).size() != 10)
        throw ParseError("line " + std::to_string(reader.line_no()) +
                         ": body metadata must have 10 fields");
      const long joint_count = parse_count_line(reader, "joint count");
      if (joint_count != kJoints)
        throw ParseError("line " + std::to_string(reader.line_no()) + ": expected " +
                         std::to_string(kJoints) + " joints, got " + std::to_string(joint_count));
      for (long v = 0; v < joint_count; ++v) {
        std::string_view joint_line;
        if (!reader.next_line(joint_line))
          throw ParseError("unexpected end of file: truncated joint block in frame " +
                           std::to_string(t));
        const auto fields = split_fields(joint_line);
        if (fields.size() < 3)
          throw ParseError("line " + std::to_string(reader.line_no()) +
                           ": joint line needs at least 3 values");
        if (b == 0) {
          // First tracked body only; auxiliary fields past x y z are dropped.
          for (int c = 0; c < 3; ++c)
            seq.at(static_cast<int>(t), static_cast<int>(v), c) =
                parse_real(fields[c], reader.line_no());
        }
      }
    }
    // bodies == 0 leaves the frame zero-filled.
  }

  // Anything after the declared frames means the header undercounted.
  std::string_view extra;
  while (reader.next_line(extra)) {
    if (!split_fields(extra).empty())
      throw ParseError("line " + std::to_string(reader.line_no()) +
                       ": trailing content after declared frame count");
  }

  seq.validate();
  return seq;
}

std::string serialize_ntu_skeleton(const SkeletonSequence& seq) {
  seq.validate();
  std::string out;
  char buf[96];
  auto put_coord = [&](double x) {
    // 17 significant digits round-trip IEEE doubles exactly.
    std::snprintf(buf, sizeof(buf), "%.17g", x);
    out += buf;
  };
  out += std::to_string(seq.frames());
  out += '\n';
  for (int t = 0; t < seq.frames(); ++t) {
    out += "1\n";
    out += "0 0 0 0 0 0 0 0 0 2\n";
    out += std::to_string(seq.num_joints);
    out += '\n';
    for (int v = 0; v < seq.num_joints; ++v) {
      put_coord(seq.at(t, v, 0));
      out += ' ';
      put_coord(seq.at(t, v, 1));
      out += ' ';
      put_coord(seq.at(t, v, 2));
      out += '\n';
    }
  }
  return out;
}

ModalityView to_bone(const SkeletonSequence& seq, const EdgeList& edges) {
  seq.validate();
  const int V = seq.num_joints;
  const int C = seq.num_channels;
  std::vector<int> seen(V, 0);
  for (const auto& [child, parent] : edges) {
    if (child < 0 || child >= V || parent < 0 || parent >= V)
      throw ShapeError("to_bone: edge references joint outside [0, V)");
    if (seen[child]++)
      throw ShapeError("to_bone: joint " + std::to_string(child) + " appears twice as child");
  }
  int roots = 0;
  for (int v = 0; v < V; ++v) roots += (seen[v] == 0);
  if (roots != 1) throw ShapeError("to_bone: edges must leave exactly one root joint");

  ModalityView view;
  view.kind = ModalityKind::kBone;
  view.num_joints = V;
  view.num_channels = C;
  view.data = Eigen::MatrixXd::Zero(seq.frames(), seq.data.cols());
  for (const auto& [child, parent] : edges) {
    view.data.middleCols(child * C, C) =
        seq.data.middleCols(child * C, C) - seq.data.middleCols(parent * C, C);
  }
  return view;
}

ModalityView to_motion(const SkeletonSequence& seq) {
  seq.validate();
  ModalityView view;
  view.kind = ModalityKind::kMotion;
  view.num_joints = seq.num_joints;
  view.num_channels = seq.num_channels;
  view.data = Eigen::MatrixXd::Zero(seq.frames(), seq.data.cols());
  view.data.bottomRows(seq.frames() - 1) =
      seq.data.bottomRows(seq.frames() - 1) - seq.data.topRows(seq.frames() - 1);
  return view;
}

SkeletonSequence normalize(const SkeletonSequence& seq, int root_joint) {
  seq.validate();
  if (root_joint < 0 || root_joint >= seq.num_joints)
    throw ShapeError("normalize: root joint outside [0, V)");
  SkeletonSequence out = seq;
  const int C = seq.num_channels;
  const Eigen::RowVectorXd origin = seq.data.block(0, root_joint * C, 1, C);
  for (int v = 0; v < seq.num_joints; ++v)
    out.data.middleCols(v * C, C).rowwise() -= origin;
  return out;
}

namespace {

// Per-(seed, class, joint) trajectory parameters. Mixing through splitmix
// keeps nearby indices uncorrelated.
struct JointWave {
  double freq;   // cycles per sequence, in [0.5, 4.0)
  double phase;  // [0, 2*pi)
};

JointWave wave_params(std::uint64_t seed, int klass, int joint) {
  Rng r = Rng(seed).fork("wave").fork(static_cast<std::uint64_t>(klass)).fork(
      static_cast<std::uint64_t>(joint) + 1000003ULL);
  JointWave w;
  w.freq = 0.5 + 3.5 * r.uniform();
  w.phase = 2.0 * std::numbers::pi * r.uniform();
  return w;
}

constexpr double kAmplitude = 0.5;  // meters

SkeletonSequence synth_sample(const SyntheticSpec& spec, int klass, int effective_class,
                              double phase_jitter, Rng& noise_rng) {
  SkeletonSequence seq(spec.frames, spec.joints, 3);
  seq.label = klass;
  for (int v = 0; v < spec.joints; ++v) {
    const JointWave w = wave_params(spec.seed, effective_class, v);
    for (int t = 0; t < spec.frames; ++t) {
      const double base = kAmplitude * std::sin(2.0 * std::numbers::pi * w.freq * t /
                                                    spec.frames +
                                                w.phase + phase_jitter);
      for (int c = 0; c < 3; ++c) {
        const double noise = spec.noise_sigma > 0 ? noise_rng.normal(0.0, spec.noise_sigma) : 0.0;
        seq.at(t, v, c) = base + noise;
      }
    }
  }
  return seq;
}

}  // namespace

DatasetManifest generate_synthetic(const SyntheticSpec& spec) {
  spec.validate();
  DatasetManifest manifest;
  manifest.num_classes = spec.num_classes;
  manifest.samples.reserve(static_cast<std::size_t>(spec.num_classes) * spec.samples_per_class);

  const int test_per_class = std::max(1, spec.samples_per_class / 5);  // 80/20
  for (int k = 0; k < spec.num_classes; ++k) {
    for (int s = 0; s < spec.samples_per_class; ++s) {
      Rng sample_rng = Rng(spec.seed)
                           .fork("sample")
                           .fork(static_cast<std::uint64_t>(spec.class_offset + k))
                           .fork(static_cast<std::uint64_t>(s));
      const double jitter = sample_rng.uniform(-0.5, 0.5);
      Rng noise_rng = sample_rng.fork("noise");
      SkeletonSequence seq = synth_sample(spec, k, spec.class_offset + k, jitter, noise_rng);
      seq.sample_id = "synthetic-k" + std::to_string(spec.class_offset + k) + "-s" +
                      std::to_string(s);
      seq.split_tag = (s >= spec.samples_per_class - test_per_class) ? "test" : "train";
      manifest.samples.push_back(std::move(seq));
    }
  }
  return manifest;
}

UntrimmedSet generate_untrimmed(const UntrimmedSpec& spec) {
  spec.base.validate();
  if (spec.total_frames < spec.min_segment + spec.min_gap)
    throw ShapeError("generate_untrimmed: total_frames too small for one segment");
  if (spec.min_segment < 2 || spec.max_segment < spec.min_segment ||
      spec.min_gap < 1 || spec.max_gap < spec.min_gap)
    throw ShapeError("generate_untrimmed: malformed segment/gap ranges");

  UntrimmedSet set;
  set.num_classes = spec.base.num_classes + 1;  // plus background

  const int test_count = std::max(1, spec.num_sequences / 4);
  for (int i = 0; i < spec.num_sequences; ++i) {
    Rng rng = Rng(spec.base.seed).fork("untrimmed").fork(static_cast<std::uint64_t>(i));
    UntrimmedSample sample;
    sample.seq = SkeletonSequence(spec.total_frames, spec.base.joints, 3);
    sample.seq.sample_id = "untrimmed-" + std::to_string(i);
    sample.frame_labels.assign(spec.total_frames, 0);

    Rng noise_rng = rng.fork("bg-noise");
    const double bg_sigma = std::max(spec.base.noise_sigma, 1e-3);
    for (int t = 0; t < spec.total_frames; ++t)
      for (int v = 0; v < spec.base.joints; ++v)
        for (int c = 0; c < 3; ++c) sample.seq.at(t, v, c) = noise_rng.normal(0.0, bg_sigma);

    int cursor = static_cast<int>(rng.below(static_cast<std::uint64_t>(spec.min_gap + 1)));
    while (cursor + spec.min_segment <= spec.total_frames) {
      const int max_len = std::min(spec.max_segment, spec.total_frames - cursor);
      const int len = spec.min_segment +
                      static_cast<int>(rng.below(
                          static_cast<std::uint64_t>(max_len - spec.min_segment + 1)));
      const int klass = static_cast<int>(rng.below(
          static_cast<std::uint64_t>(spec.base.num_classes)));
      const double jitter = rng.uniform(-0.5, 0.5);

      SyntheticSpec seg_spec = spec.base;
      seg_spec.frames = len;
      Rng seg_noise = rng.fork("seg-noise");
      const SkeletonSequence seg =
          synth_sample(seg_spec, klass, spec.base.class_offset + klass, jitter, seg_noise);
      sample.seq.data.middleRows(cursor, len) = seg.data;
      for (int t = 0; t < len; ++t) sample.frame_labels[cursor + t] = klass + 1;

      const int gap = spec.min_gap + static_cast<int>(rng.below(
                                         static_cast<std::uint64_t>(spec.max_gap - spec.min_gap + 1)));
      cursor += len + gap;
    }

    sample.seq.split_tag = (i >= spec.num_sequences - test_count) ? "test" : "train";
    if (*sample.seq.split_tag == "test")
      set.test.push_back(std::move(sample));
    else
      set.train.push_back(std::move(sample));
  }
  return set;
}

Eigen::MatrixXd resample_rows(const Eigen::MatrixXd& rows, int target_len) {
  const int src_len = static_cast<int>(rows.rows());
  if (src_len < 1) throw ShapeError("resample_rows: empty input");
  if (target_len < 1) throw ShapeError("resample_rows: target length must be >= 1");
  if (src_len == target_len) return rows;

  Eigen::MatrixXd out(target_len, rows.cols());
  if (src_len == 1) {
    out.rowwise() = rows.row(0);
    return out;
  }
  for (int i = 0; i < target_len; ++i) {
    const double pos = (target_len == 1)
                           ? 0.0
                           : static_cast<double>(i) * (src_len - 1) / (target_len - 1);
    const int lo = std::min(static_cast<int>(std::floor(pos)), src_len - 1);
    const int hi = std::min(lo + 1, src_len - 1);
    const double frac = pos - lo;
    out.row(i) = (1.0 - frac) * rows.row(lo) + frac * rows.row(hi);
  }
  return out;
}

}  // namespace skelssl
