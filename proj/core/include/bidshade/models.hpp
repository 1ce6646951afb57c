#pragma once

#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include "bidshade/auction_record.hpp"
#include "bidshade/feature_encoder.hpp"

namespace bidshade {

class ModelMismatch : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ServingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Provenance carried into the model file.
struct TrainingMetadata {
  std::uint64_t seed = 0;
  double gamma = 0.0;
  std::uint32_t epochs = 0;
  std::string train_window;

  bool operator==(const TrainingMetadata&) const = default;
};

struct LinearModel {
  EncoderConfig encoder;
  double w0 = 0.0;
  std::vector<double> w;
  TrainingMetadata metadata;

  static LinearModel zeros(const EncoderConfig& encoder);
};

/// Second-order factorization machine. `v` holds one K-dim embedding per feature
/// index, row-major: v[i * k + f].
struct FmModel {
  EncoderConfig encoder;
  std::uint32_t k = 10;
  double w0 = 0.0;
  std::vector<double> w;
  std::vector<double> v;
  TrainingMetadata metadata;

  static FmModel zeros(const EncoderConfig& encoder, std::uint32_t k);

  std::span<const double> embedding(std::uint32_t index) const { return {v.data() + std::size_t{index} * k, k}; }
  std::span<double> embedding(std::uint32_t index) { return {v.data() + std::size_t{index} * k, k}; }
};

using ShadingModel = std::variant<LinearModel, FmModel>;

enum class ModelKind : std::uint32_t { Linear = 0, Fm = 1, Segmented = 2 };

std::string_view to_string(ModelKind kind);

/// w0 + sum_i x_i w_i
double linear_predict(const LinearModel& model, std::span<const FeatureEntry> x);

/// w0 + sum_i x_i w_i + sum_{i<j} x_i x_j <v_i, v_j>, evaluated in O(m K) as
/// 0.5 * sum_f [(sum_i x_i v_if)^2 - sum_i x_i^2 v_if^2].
double fm_predict(const FmModel& model, std::span<const FeatureEntry> x);

inline double linear_predict(const LinearModel& m, const SparseFeatureVector& x) { return linear_predict(m, x.entries); }
inline double fm_predict(const FmModel& m, const SparseFeatureVector& x) { return fm_predict(m, x.entries); }

const EncoderConfig& encoder_of(const ShadingModel& model);
ModelKind kind_of(const ShadingModel& model);
double predict(const ShadingModel& model, const SparseFeatureVector& x);

/// Lower clamp on served shading ratios.
inline constexpr double kMinShadeRatio = 0.01;

/// clamp(prediction, kMinShadeRatio, 1). Throws ServingError for non-finite predictions.
double clamp_ratio(double prediction);

struct ShadeResult {
  double prediction = 0.0;  // raw model output
  double ratio = 1.0;       // clamped ratio actually applied
  double shaded_bid = 0.0;  // ratio * unshaded_bid, in (0, unshaded_bid]
};

/// Encodes, predicts and clamps. Throws ServingError on non-finite predictions;
/// callers fall back to the unshaded bid.
ShadeResult shade(const ShadingModel& model, const AuctionRecord& record);

/// Applies an already computed prediction to an unshaded bid.
ShadeResult shade_with_prediction(double prediction, double unshaded_bid);

/// Rounds every parameter through float32, the precision stored in model files.
void round_to_float32(ShadingModel& model);

}  // namespace bidshade
