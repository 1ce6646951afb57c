#include "bidshade/models.hpp"

#include <algorithm>
#include <cmath>

namespace bidshade {

namespace {

void check_index(std::uint64_t index, std::uint64_t space) {
  if (index >= space) {
    throw ModelMismatch("feature index " + std::to_string(index) + " outside model index space " +
                        std::to_string(space));
  }
}

}  // namespace

LinearModel LinearModel::zeros(const EncoderConfig& encoder) {
  validate(encoder);
  LinearModel m;
  m.encoder = encoder;
  m.w.assign(encoder.total_space(), 0.0);
  return m;
}

FmModel FmModel::zeros(const EncoderConfig& encoder, std::uint32_t k) {
  validate(encoder);
  if (k < 1) throw std::invalid_argument("FM embedding dimension must be >= 1");
  FmModel m;
  m.encoder = encoder;
  m.k = k;
  m.w.assign(encoder.total_space(), 0.0);
  m.v.assign(encoder.total_space() * k, 0.0);
  return m;
}

std::string_view to_string(ModelKind kind) {
  switch (kind) {
    case ModelKind::Linear: return "linear";
    case ModelKind::Fm: return "fm";
    case ModelKind::Segmented: return "segmented";
  }
  return "unknown";
}

double linear_predict(const LinearModel& model, std::span<const FeatureEntry> x) {
  double acc = model.w0;
  for (const auto& e : x) {
    check_index(e.index, model.w.size());
    acc += e.value * model.w[e.index];
  }
  return acc;
}

double fm_predict(const FmModel& model, std::span<const FeatureEntry> x) {
  double acc = model.w0;
  for (const auto& e : x) {
    check_index(e.index, model.w.size());
    acc += e.value * model.w[e.index];
  }
  double pairwise = 0.0;
  for (std::uint32_t f = 0; f < model.k; ++f) {
    double sum = 0.0;
    double sum_sq = 0.0;
    for (const auto& e : x) {
      const double t = e.value * model.v[std::size_t{e.index} * model.k + f];
      sum += t;
      sum_sq += t * t;
    }
    pairwise += sum * sum - sum_sq;
  }
  return acc + 0.5 * pairwise;
}

const EncoderConfig& encoder_of(const ShadingModel& model) {
  return std::visit([](const auto& m) -> const EncoderConfig& { return m.encoder; }, model);
}

ModelKind kind_of(const ShadingModel& model) {
  return std::holds_alternative<FmModel>(model) ? ModelKind::Fm : ModelKind::Linear;
}

double predict(const ShadingModel& model, const SparseFeatureVector& x) {
  if (const auto* fm = std::get_if<FmModel>(&model)) return fm_predict(*fm, x);
  return linear_predict(std::get<LinearModel>(model), x);
}

double clamp_ratio(double prediction) {
  if (!std::isfinite(prediction)) throw ServingError("non-finite shading prediction");
  return std::clamp(prediction, kMinShadeRatio, 1.0);
}

ShadeResult shade_with_prediction(double prediction, double unshaded_bid) {
  if (!(unshaded_bid > 0.0)) throw InvalidRecord("unshaded_bid must be > 0");
  ShadeResult out;
  out.prediction = prediction;
  out.ratio = clamp_ratio(prediction);
  out.shaded_bid = std::min(out.ratio * unshaded_bid, unshaded_bid);
  return out;
}

ShadeResult shade(const ShadingModel& model, const AuctionRecord& record) {
  return shade_with_prediction(predict(model, encode(record, encoder_of(model))), record.unshaded_bid);
}

void round_to_float32(ShadingModel& model) {
  auto round_all = [](std::vector<double>& xs) {
    for (double& x : xs) x = static_cast<double>(static_cast<float>(x));
  };
  std::visit(
      [&](auto& m) {
        m.w0 = static_cast<double>(static_cast<float>(m.w0));
        round_all(m.w);
        if constexpr (std::is_same_v<std::decay_t<decltype(m)>, FmModel>) round_all(m.v);
      },
      model);
}

}  // namespace bidshade
