#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "bidshade/models.hpp"
#include "bidshade/segmented_baseline.hpp"

namespace bidshade {

inline constexpr char kModelMagic[8] = {'B', 'I', 'D', 'S', 'H', 'A', 'D', 'E'};
inline constexpr std::uint32_t kModelFormatVersion = 1;

class ModelFormatError : public std::runtime_error {
 public:
  enum class Reason { Io, BadMagic, UnsupportedVersion, ChecksumMismatch, Truncated, Invalid };

  ModelFormatError(Reason reason, const std::string& what) : std::runtime_error(what), reason_(reason) {}
  Reason reason() const { return reason_; }

 private:
  Reason reason_;
};

/// Everything a model file can hold. Exactly one of `model` / `store` is set.
struct LoadedModel {
  ModelKind kind = ModelKind::Linear;
  std::optional<ShadingModel> model;
  std::shared_ptr<SegmentStore> store;
  TrainingMetadata metadata;
  std::uint64_t checksum = 0;

  /// Short version tag: kind plus the low 48 bits of the checksum in hex.
  std::string version_tag() const;
};

/// Binary layout (little-endian) is documented in docs/formats.md. Parameters are
/// written as float32; training keeps float64 and rounds once here.
std::vector<std::uint8_t> serialize_model(const ShadingModel& model);
std::vector<std::uint8_t> serialize_segment_store(const SegmentStore& store, const TrainingMetadata& metadata = {});

/// Validates magic, version and checksum before decoding anything else.
LoadedModel deserialize_model(std::span<const std::uint8_t> bytes);

void save_model(const ShadingModel& model, const std::string& path);
void save_segment_store(const SegmentStore& store, const std::string& path, const TrainingMetadata& metadata = {});
LoadedModel load_model_file(const std::string& path);

/// Linear or FM model; throws ModelFormatError if the file holds a segment store.
ShadingModel load_model(const std::string& path);
SegmentStore load_segment_store(const std::string& path);

}  // namespace bidshade
