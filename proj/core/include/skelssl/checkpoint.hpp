#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

namespace skelssl {

// Versioned training snapshot: every parameter tensor (query, key, decoder,
// prompts), optimizer velocity buffers, memory-queue contents, stage marker,
// and the full resolved run config. Layout documented in docs/formats.md.
struct CheckpointData {
  std::uint32_t version = 1;
  std::string config_json;
  std::uint64_t config_hash = 0;
  std::string stage;        // "joint_training" or "post_distillation"
  std::int32_t epoch = 0;   // epochs completed
  std::uint64_t step = 0;   // optimizer steps completed
  std::int32_t queue_size = 0;
  std::int32_t queue_cursor = 0;
  std::vector<std::pair<std::string, Eigen::MatrixXd>> tensors;

  const Eigen::MatrixXd* find(const std::string& name) const;
};

void write_checkpoint(const CheckpointData& data, const std::string& path);

// Throws ParseError naming the missing/truncated section on corrupt input.
CheckpointData read_checkpoint(const std::string& path);

}  // namespace skelssl
