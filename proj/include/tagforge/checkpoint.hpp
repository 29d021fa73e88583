#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "tagforge/biencoder.hpp"
#include "tagforge/classifier.hpp"

namespace tagforge {

// Binary container: magic "TAGF", format version u32, kind u32, vocabulary
// reference (file name + content hash), then the parameter sections as
// little-endian 64-bit floats in declared field order.
enum class CheckpointKind : uint32_t { BiEncoder = 2, Classifier = 3 };

struct TrainMeta {
  std::string config_echo;  // JSON echo of the training configuration
  uint64_t epochs = 0;
  double final_loss = 0.0;
};

std::vector<uint8_t> serialize(const BiEncoder& model, const TrainMeta& meta);
std::vector<uint8_t> serialize(const ClassifierModel& model, const TrainMeta& meta);

void save_checkpoint(const std::filesystem::path& path, const BiEncoder& model,
                     const TrainMeta& meta);
void save_checkpoint(const std::filesystem::path& path, const ClassifierModel& model,
                     const TrainMeta& meta);

CheckpointKind peek_kind(const std::filesystem::path& path);
BiEncoder load_biencoder(const std::filesystem::path& path, TrainMeta* meta = nullptr);
ClassifierModel load_classifier(const std::filesystem::path& path, TrainMeta* meta = nullptr);

// Content identity of a model; equals the hash of its checkpoint file bytes.
uint64_t model_content_hash(const BiEncoder& model, const TrainMeta& meta);

}  // namespace tagforge
