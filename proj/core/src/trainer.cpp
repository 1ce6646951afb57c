#include "bidshade/trainer.hpp"

#include <cmath>
#include <numeric>
#include <ostream>
#include <sstream>
#include <unordered_map>

#include "bidshade/random.hpp"

namespace bidshade {

namespace {

struct Example {
  SparseFeatureVector x;
  double y = 0.0;
  double alpha = 0.0;
};

// Per-coordinate AdaGrad step. Returns the updated parameter.
inline double adagrad_step(double param, double grad, double& accum, double lr, double eps) {
  accum += grad * grad;
  return param - lr * grad / (std::sqrt(accum) + eps);
}

[[noreturn]] void diverged(std::uint32_t epoch, double lr, const char* what) {
  std::ostringstream msg;
  msg << "training diverged in epoch " << epoch << " (learning_rate=" << lr << "): " << what;
  throw TrainingDiverged(msg.str());
}

// Gradient accumulator for the coordinates touched by one minibatch.
class BatchGradient {
 public:
  explicit BatchGradient(std::uint32_t k) : k_(k) {}

  void clear() {
    slot_of_.clear();
    indices_.clear();
    grad_w_.clear();
    grad_v_.clear();
    grad_w0_ = 0.0;
  }

  std::size_t slot(std::uint32_t index) {
    auto [it, inserted] = slot_of_.try_emplace(index, indices_.size());
    if (inserted) {
      indices_.push_back(index);
      grad_w_.push_back(0.0);
      grad_v_.resize(grad_v_.size() + k_, 0.0);
    }
    return it->second;
  }

  double& w0() { return grad_w0_; }
  double& w(std::size_t slot) { return grad_w_[slot]; }
  double* v(std::size_t slot) { return grad_v_.data() + slot * k_; }
  const std::vector<std::uint32_t>& indices() const { return indices_; }

 private:
  std::uint32_t k_;
  std::unordered_map<std::uint32_t, std::size_t> slot_of_;
  std::vector<std::uint32_t> indices_;
  std::vector<double> grad_w_;
  std::vector<double> grad_v_;
  double grad_w0_ = 0.0;
};

struct Params {
  double* w0;
  std::vector<double>* w;
  std::vector<double>* v;  // null for the linear model
  std::uint32_t k;
};

Params params_of(ShadingModel& model) {
  if (auto* fm = std::get_if<FmModel>(&model)) return {&fm->w0, &fm->w, &fm->v, fm->k};
  auto& lm = std::get<LinearModel>(model);
  return {&lm.w0, &lm.w, nullptr, 1};
}

TrainResult run(const std::vector<Example>& data, ShadingModel model, const TrainConfig& cfg) {
  TrainResult result{std::move(model), {}};
  const Params p = params_of(result.model);
  const bool has_v = p.v != nullptr;
  double acc_w0 = 0.0;
  std::vector<double> acc_w(p.w->size(), 0.0);
  std::vector<double> acc_v(has_v ? p.v->size() : 0, 0.0);

  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng shuffle_rng(splitmix64(cfg.seed ^ 0x5u));

  BatchGradient grad(p.k);
  std::vector<double> sums(p.k);

  for (std::uint32_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    if (cfg.shuffle) {
      for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[shuffle_rng.index(i)]);
    }
    double loss_sum = 0.0;
    double sq_sum = 0.0;

    for (std::size_t begin = 0; begin < order.size(); begin += cfg.batch_size) {
      const std::size_t end = std::min(order.size(), begin + cfg.batch_size);
      const double inv_batch = 1.0 / static_cast<double>(end - begin);
      grad.clear();

      for (std::size_t b = begin; b < end; ++b) {
        const Example& ex = data[order[b]];
        const auto& entries = ex.x.entries;

        double phi = *p.w0;
        for (const auto& e : entries) phi += e.value * (*p.w)[e.index];
        if (has_v) {
          double pairwise = 0.0;
          for (std::uint32_t f = 0; f < p.k; ++f) {
            double s = 0.0;
            double s2 = 0.0;
            for (const auto& e : entries) {
              const double t = e.value * (*p.v)[std::size_t{e.index} * p.k + f];
              s += t;
              s2 += t * t;
            }
            sums[f] = s;
            pairwise += s * s - s2;
          }
          phi += 0.5 * pairwise;
        }

        const double loss = asym_loss(ex.y, phi, ex.alpha);
        if (!std::isfinite(loss)) diverged(epoch, cfg.learning_rate, "non-finite loss");
        loss_sum += loss;
        sq_sum += (ex.y - phi) * (ex.y - phi);

        const double g = asym_loss_grad(ex.y, phi, ex.alpha) * inv_batch;
        if (g == 0.0) continue;
        grad.w0() += g;
        for (const auto& e : entries) {
          const std::size_t s = grad.slot(e.index);
          grad.w(s) += g * e.value;
          if (has_v) {
            const double* vi = p.v->data() + std::size_t{e.index} * p.k;
            double* gv = grad.v(s);
            for (std::uint32_t f = 0; f < p.k; ++f) gv[f] += g * e.value * (sums[f] - e.value * vi[f]);
          }
        }
      }

      *p.w0 = adagrad_step(*p.w0, grad.w0(), acc_w0, cfg.learning_rate, cfg.adagrad_epsilon);
      bool finite = std::isfinite(*p.w0);
      const auto& touched = grad.indices();
      for (std::size_t s = 0; s < touched.size(); ++s) {
        const std::uint32_t i = touched[s];
        double& wi = (*p.w)[i];
        wi = adagrad_step(wi, grad.w(s) + cfg.l2_w * wi, acc_w[i], cfg.learning_rate, cfg.adagrad_epsilon);
        finite = finite && std::isfinite(wi);
        if (has_v) {
          double* vi = p.v->data() + std::size_t{i} * p.k;
          double* ai = acc_v.data() + std::size_t{i} * p.k;
          const double* gv = grad.v(s);
          for (std::uint32_t f = 0; f < p.k; ++f) {
            vi[f] = adagrad_step(vi[f], gv[f] + cfg.l2_v * vi[f], ai[f], cfg.learning_rate, cfg.adagrad_epsilon);
            finite = finite && std::isfinite(vi[f]);
          }
        }
      }
      if (!finite) diverged(epoch, cfg.learning_rate, "non-finite parameter after update");
    }

    const double n = static_cast<double>(data.size());
    result.trace.push_back({epoch, loss_sum / n, sq_sum / n});
  }
  return result;
}

}  // namespace

void validate(const TrainConfig& c) {
  if (!(c.learning_rate > 0.0)) throw std::invalid_argument("learning_rate must be > 0");
  if (c.epochs < 1) throw std::invalid_argument("epochs must be >= 1");
  if (c.batch_size < 1) throw std::invalid_argument("batch_size must be >= 1");
  if (!(c.init_sigma > 0.0)) throw std::invalid_argument("init_sigma must be > 0");
  if (!(c.l2_w >= 0.0) || !(c.l2_v >= 0.0)) throw std::invalid_argument("L2 strengths must be >= 0");
  if (c.k < 1) throw std::invalid_argument("k must be >= 1");
  if (!(c.adagrad_epsilon > 0.0)) throw std::invalid_argument("adagrad_epsilon must be > 0");
}

TrainResult train(const std::vector<AuctionRecord>& records, ModelKind kind, const TrainConfig& cfg,
                  const AsymLossConfig& loss, const EncoderConfig& encoder) {
  validate(cfg);
  validate(loss);
  validate(encoder);
  if (records.empty()) throw std::invalid_argument("training set is empty");

  std::vector<Example> data;
  data.reserve(records.size());
  for (const auto& r : records) {
    validate(r);
    data.push_back({encode(r, encoder), target_ratio(r), cfg.symmetric_loss ? 0.0 : example_alpha(r, loss)});
  }

  TrainingMetadata meta{cfg.seed, cfg.symmetric_loss ? 0.0 : loss.gamma, cfg.epochs, {}};
  meta.train_window = std::to_string(records.front().timestamp_ms) + "-" + std::to_string(records.back().timestamp_ms);

  switch (kind) {
    case ModelKind::Linear: {
      LinearModel lm = LinearModel::zeros(encoder);
      lm.metadata = meta;
      return run(data, std::move(lm), cfg);
    }
    case ModelKind::Fm: {
      ShadingModel holder = FmModel::zeros(encoder, cfg.k);
      auto& fm = std::get<FmModel>(holder);
      fm.metadata = meta;
      Rng init_rng(splitmix64(cfg.seed));
      for (double& x : fm.v) x = cfg.init_sigma * init_rng.normal();
      return run(data, std::move(holder), cfg);
    }
    case ModelKind::Segmented: break;
  }
  throw std::invalid_argument("train() supports linear and fm models; use fit_segment_store for the baseline");
}

void write_loss_trace(std::ostream& out, const std::vector<EpochStats>& trace) {
  out << "epoch,mean_asym_loss,mean_mse\n";
  for (const auto& e : trace) out << e.epoch << ',' << e.mean_asym_loss << ',' << e.mean_squared_error << '\n';
}

}  // namespace bidshade
