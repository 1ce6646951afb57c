#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <stdexcept>
#include <vector>

#include "bidshade/asym_loss.hpp"
#include "bidshade/auction_record.hpp"
#include "bidshade/feature_encoder.hpp"
#include "bidshade/models.hpp"

namespace bidshade {

class TrainingDiverged : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Minibatch SGD with per-coordinate AdaGrad step sizes:
///   G += g^2;  theta -= learning_rate * g / (sqrt(G) + adagrad_epsilon)
/// where g is the minibatch-mean loss gradient plus the L2 term.
struct TrainConfig {
  double learning_rate = 0.05;
  double adagrad_epsilon = 1e-8;
  std::uint32_t epochs = 5;
  std::uint32_t batch_size = 256;
  double l2_w = 1e-6;
  double l2_v = 1e-6;
  double init_sigma = 0.01;
  std::uint32_t k = 10;
  std::uint64_t seed = 1;
  bool shuffle = true;
  /// Plain squared error (alpha = 0 for every example) instead of the asymmetric loss.
  bool symmetric_loss = false;
};

void validate(const TrainConfig& config);

struct EpochStats {
  std::uint32_t epoch = 0;
  double mean_asym_loss = 0.0;
  double mean_squared_error = 0.0;
};

struct TrainResult {
  ShadingModel model;
  std::vector<EpochStats> trace;
};

/// Trains on won-bid records (the caller filters lost auctions). Embeddings start from
/// N(0, init_sigma^2), weights and bias from zero. Deterministic for a fixed seed.
/// The per-epoch losses are means over the epoch computed with pre-update predictions.
TrainResult train(const std::vector<AuctionRecord>& records, ModelKind kind, const TrainConfig& config,
                  const AsymLossConfig& loss, const EncoderConfig& encoder = {});

/// "epoch,mean_asym_loss,mean_mse" CSV table.
void write_loss_trace(std::ostream& out, const std::vector<EpochStats>& trace);

}  // namespace bidshade
