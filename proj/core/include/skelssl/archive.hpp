#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "skelssl/skeleton.hpp"

namespace skelssl {

// One split of a dataset, persisted as a single binary file.
//
// Layout (all integers little-endian):
//   magic  "SKL1"           4 bytes
//   T, V, C, sample count   4 x int32
//   label_mode              int32   0 = one label per sample, 1 = per frame
//   num_classes             int32
//   occlusion_mode          int32   0 = none, 1 = spatial, 2 = temporal
//   build_seed              uint64  seed the set was built with (0 if n/a)
//   config_hash             uint64  hash of the producing run/spec
//   data                    count x T x V x C float32
//   labels                  count int32 (mode 0) or count x T int32 (mode 1)
//
// Full description in docs/formats.md.
struct SplitArchive {
  int frames = 0;
  int joints = 0;
  int channels = 3;
  int label_mode = 0;
  int num_classes = 0;
  int occlusion_mode = 0;           // 0 none, 1 spatial, 2 temporal
  std::uint64_t build_seed = 0;
  std::uint64_t config_hash = 0;
  std::vector<SkeletonSequence> samples;
  std::vector<std::vector<int>> frame_labels;  // used when label_mode == 1

  void validate() const;
};

void write_archive(const SplitArchive& archive, const std::string& path);
SplitArchive read_archive(const std::string& path);

// Convenience bridges between manifests and per-split archives.
SplitArchive archive_from_manifest(const DatasetManifest& manifest, const std::string& split,
                                   std::uint64_t build_seed, std::uint64_t config_hash);
SplitArchive archive_from_untrimmed(const std::vector<UntrimmedSample>& samples, int num_classes,
                                    std::uint64_t build_seed, std::uint64_t config_hash);

}  // namespace skelssl
