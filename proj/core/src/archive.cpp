#include "skelssl/archive.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include "skelssl/errors.hpp"

static_assert(std::endian::native == std::endian::little,
              "archive i/o assumes a little-endian host");

namespace skelssl {

namespace {

constexpr char kMagic[4] = {'S', 'K', 'L', '1'};

template <typename T>
void write_pod(std::ofstream& out, T value) {
  out.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <typename T>
T read_pod(std::ifstream& in, const char* section) {
  T value;
  in.read(reinterpret_cast<char*>(&value), sizeof(T));
  if (!in) throw ParseError(std::string("archive truncated while reading ") + section);
  return value;
}

}  // namespace

void SplitArchive::validate() const {
  if (frames < 2 || joints < 1 || channels != 3)
    throw ShapeError("archive: invalid tensor dimensions");
  if (label_mode != 0 && label_mode != 1) throw ShapeError("archive: bad label_mode");
  if (occlusion_mode < 0 || occlusion_mode > 2) throw ShapeError("archive: bad occlusion_mode");
  for (const auto& s : samples) {
    if (s.frames() != frames || s.num_joints != joints || s.num_channels != channels)
      throw ShapeError("archive: sample shape differs from header");
  }
  if (label_mode == 1 && frame_labels.size() != samples.size())
    throw ShapeError("archive: per-frame label table size mismatch");
}

void write_archive(const SplitArchive& archive, const std::string& path) {
  archive.validate();
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open for writing: " + path);

  out.write(kMagic, 4);
  write_pod<std::int32_t>(out, archive.frames);
  write_pod<std::int32_t>(out, archive.joints);
  write_pod<std::int32_t>(out, archive.channels);
  write_pod<std::int32_t>(out, static_cast<std::int32_t>(archive.samples.size()));
  write_pod<std::int32_t>(out, archive.label_mode);
  write_pod<std::int32_t>(out, archive.num_classes);
  write_pod<std::int32_t>(out, archive.occlusion_mode);
  write_pod<std::uint64_t>(out, archive.build_seed);
  write_pod<std::uint64_t>(out, archive.config_hash);

  std::vector<float> row(static_cast<std::size_t>(archive.joints) * archive.channels);
  for (const auto& s : archive.samples) {
    for (int t = 0; t < archive.frames; ++t) {
      for (Eigen::Index j = 0; j < s.data.cols(); ++j)
        row[static_cast<std::size_t>(j)] = static_cast<float>(s.data(t, j));
      out.write(reinterpret_cast<const char*>(row.data()),
                static_cast<std::streamsize>(row.size() * sizeof(float)));
    }
  }

  if (archive.label_mode == 0) {
    for (const auto& s : archive.samples)
      write_pod<std::int32_t>(out, s.label ? *s.label : -1);
  } else {
    for (const auto& labels : archive.frame_labels) {
      if (static_cast<int>(labels.size()) != archive.frames)
        throw ShapeError("archive: per-frame label row length mismatch");
      for (int label : labels) write_pod<std::int32_t>(out, label);
    }
  }
  if (!out) throw IoError("short write: " + path);
}

SplitArchive read_archive(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open: " + path);

  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, kMagic, 4) != 0)
    throw ParseError("not a SKL1 archive: " + path);

  SplitArchive archive;
  archive.frames = read_pod<std::int32_t>(in, "header.frames");
  archive.joints = read_pod<std::int32_t>(in, "header.joints");
  archive.channels = read_pod<std::int32_t>(in, "header.channels");
  const auto count = read_pod<std::int32_t>(in, "header.count");
  archive.label_mode = read_pod<std::int32_t>(in, "header.label_mode");
  archive.num_classes = read_pod<std::int32_t>(in, "header.num_classes");
  archive.occlusion_mode = read_pod<std::int32_t>(in, "header.occlusion_mode");
  archive.build_seed = read_pod<std::uint64_t>(in, "header.build_seed");
  archive.config_hash = read_pod<std::uint64_t>(in, "header.config_hash");
  if (archive.frames < 2 || archive.joints < 1 || archive.channels != 3 || count < 0)
    throw ParseError("archive header out of range: " + path);

  const std::size_t width = static_cast<std::size_t>(archive.joints) * archive.channels;
  std::vector<float> row(width);
  archive.samples.reserve(static_cast<std::size_t>(count));
  for (std::int32_t i = 0; i < count; ++i) {
    SkeletonSequence seq(archive.frames, archive.joints, archive.channels);
    seq.sample_id = "archived-" + std::to_string(i);
    for (int t = 0; t < archive.frames; ++t) {
      in.read(reinterpret_cast<char*>(row.data()),
              static_cast<std::streamsize>(width * sizeof(float)));
      if (!in)
        throw ParseError("archive truncated while reading tensor of sample " + std::to_string(i));
      for (std::size_t j = 0; j < width; ++j)
        seq.data(t, static_cast<Eigen::Index>(j)) = static_cast<double>(row[j]);
    }
    archive.samples.push_back(std::move(seq));
  }

  if (archive.label_mode == 0) {
    for (std::int32_t i = 0; i < count; ++i) {
      const auto label = read_pod<std::int32_t>(in, "label table");
      if (label >= 0) archive.samples[static_cast<std::size_t>(i)].label = label;
    }
  } else {
    archive.frame_labels.resize(static_cast<std::size_t>(count));
    for (std::int32_t i = 0; i < count; ++i) {
      auto& labels = archive.frame_labels[static_cast<std::size_t>(i)];
      labels.resize(static_cast<std::size_t>(archive.frames));
      for (int t = 0; t < archive.frames; ++t)
        labels[static_cast<std::size_t>(t)] = read_pod<std::int32_t>(in, "frame label table");
    }
  }
  return archive;
}

SplitArchive archive_from_manifest(const DatasetManifest& manifest, const std::string& split,
                                   std::uint64_t build_seed, std::uint64_t config_hash) {
  SplitArchive archive;
  archive.num_classes = manifest.num_classes;
  archive.build_seed = build_seed;
  archive.config_hash = config_hash;
  for (const auto idx : manifest.split_indices(split)) {
    const auto& s = manifest.samples[idx];
    if (archive.samples.empty()) {
      archive.frames = s.frames();
      archive.joints = s.num_joints;
      archive.channels = s.num_channels;
    }
    archive.samples.push_back(s);
  }
  if (archive.samples.empty())
    throw DataError("archive_from_manifest: split '" + split + "' has no samples");
  return archive;
}

SplitArchive archive_from_untrimmed(const std::vector<UntrimmedSample>& samples, int num_classes,
                                    std::uint64_t build_seed, std::uint64_t config_hash) {
  if (samples.empty()) throw DataError("archive_from_untrimmed: empty sample list");
  SplitArchive archive;
  archive.label_mode = 1;
  archive.num_classes = num_classes;
  archive.build_seed = build_seed;
  archive.config_hash = config_hash;
  archive.frames = samples.front().seq.frames();
  archive.joints = samples.front().seq.num_joints;
  archive.channels = samples.front().seq.num_channels;
  for (const auto& s : samples) {
    archive.samples.push_back(s.seq);
    archive.frame_labels.push_back(s.frame_labels);
  }
  return archive;
}

}  // namespace skelssl
