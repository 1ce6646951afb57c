// bidshade: command-line front end for data generation, training, replay, sweeps,
// baseline fitting, serving and latency benchmarking.

#include <algorithm>
#include <chrono>
#include <cctype>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "bidshade/auction_record.hpp"
#include "bidshade/model_file.hpp"
#include "bidshade/replay.hpp"
#include "bidshade/segmented_baseline.hpp"
#include "bidshade/shading_service.hpp"
#include "bidshade/synthetic.hpp"
#include "bidshade/trainer.hpp"
#include "json.hpp"

using namespace bidshade;
using nlohmann::json;

namespace {

constexpr const char* kEnvPrefix = "BIDSHADE_";

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

void print_summary(const std::string& command, json fields) {
  fields["command"] = command;
  fields["status"] = "ok";
  std::cout << fields.dump() << std::endl;
}

// Every long option of a subcommand can also be set from BIDSHADE_<SUBCOMMAND>_<OPTION>.
void bind_env(CLI::App* sub) {
  std::string prefix = std::string(kEnvPrefix) + sub->get_name() + "_";
  for (CLI::Option* opt : sub->get_options()) {
    const auto& lnames = opt->get_lnames();
    if (lnames.empty() || lnames.front() == "help") continue;
    std::string env = prefix + lnames.front();
    for (char& c : env) c = c == '-' ? '_' : static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
    opt->envname(env);
  }
}

std::vector<AuctionRecord> read_log(const std::string& path, bool won_only) {
  ParseResult parsed = parse_log_file(path);
  if (parsed.skipped > 0) {
    std::cerr << "warning: " << path << ": skipped " << parsed.skipped << " malformed line(s)";
    if (!parsed.skipped_lines.empty()) std::cerr << " (first at line " << parsed.skipped_lines.front() << ")";
    std::cerr << '\n';
  }
  return won_only ? filter_won(parsed.records) : std::move(parsed.records);
}

struct TrainFlags {
  std::string kind = "fm";
  double gamma = 0.2;
  bool symmetric = false;
  TrainConfig cfg;
  EncoderConfig enc;

  // sweep picks kind and gamma itself
  void add(CLI::App* sub, bool single_model) {
    if (single_model) {
      sub->add_option("--kind", kind, "Model kind")->check(CLI::IsMember({"fm", "linear"}))->capture_default_str();
      sub->add_option("--gamma", gamma, "Floor for the per-example asymmetry alpha")->check(CLI::Range(0.0, 1.0))->capture_default_str();
    }
    sub->add_flag("--symmetric", symmetric, "Train with plain squared error instead of the asymmetric loss");
    sub->add_option("--seed", cfg.seed, "Random seed")->capture_default_str();
    sub->add_option("--epochs", cfg.epochs, "Training epochs")->check(CLI::PositiveNumber)->capture_default_str();
    sub->add_option("--learning-rate", cfg.learning_rate, "AdaGrad base learning rate")->check(CLI::PositiveNumber)->capture_default_str();
    sub->add_option("--batch-size", cfg.batch_size, "Minibatch size")->check(CLI::PositiveNumber)->capture_default_str();
    sub->add_option("--k", cfg.k, "FM embedding dimension")->check(CLI::PositiveNumber)->capture_default_str();
    sub->add_option("--l2-w", cfg.l2_w, "L2 strength on linear weights")->capture_default_str();
    sub->add_option("--l2-v", cfg.l2_v, "L2 strength on embeddings")->capture_default_str();
    sub->add_option("--init-sigma", cfg.init_sigma, "Embedding init standard deviation")->check(CLI::PositiveNumber)->capture_default_str();
    sub->add_option("--hash-bits", enc.bits_per_field, "log2 of the hash space per field")->check(CLI::Range(1, 28))->capture_default_str();
    sub->add_option("--hash-seed", enc.hash_seed, "Feature hash seed")->capture_default_str();
  }

  ModelKind model_kind() const { return kind == "linear" ? ModelKind::Linear : ModelKind::Fm; }
  TrainConfig config() const {
    TrainConfig c = cfg;
    c.symmetric_loss = symmetric;
    return c;
  }
};

std::shared_ptr<const Shader> shader_from_file(const std::string& name, const std::string& path) {
  LoadedModel loaded = load_model_file(path);
  if (loaded.store) return std::make_shared<SegmentedShader>(name, loaded.store);
  return std::make_shared<ModelShader>(name, std::make_shared<const ShadingModel>(std::move(*loaded.model)));
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
  out << text;
  if (!out) throw std::runtime_error("write failed: " + path);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"bidshade: bid shading for open first-price auctions"};
  app.set_config("--config", "", "TOML/INI config file; [subcommand] sections set subcommand options");
  app.require_subcommand(1);

  // generate
  std::string gen_spec, gen_out, gen_train_out, gen_test_out, gen_dump_spec;
  std::size_t gen_records = 60000;
  std::uint64_t gen_seed = 42;
  int gen_train_days = 7, gen_test_days = 1;
  auto* gen = app.add_subcommand("generate", "Generate a synthetic auction log");
  gen->add_option("--spec", gen_spec, "Synthetic landscape spec (JSON); default built-in landscape")->check(CLI::ExistingFile);
  gen->add_option("--records", gen_records, "Record count (overrides the landscape spec)");
  gen->add_option("--seed", gen_seed, "Seed (overrides the landscape spec)");
  gen->add_option("--out", gen_out, "Write the full log here");
  gen->add_option("--train-out", gen_train_out, "Write the first --train-days days here");
  gen->add_option("--test-out", gen_test_out, "Write the following --test-days days here");
  gen->add_option("--train-days", gen_train_days, "Days in the training window")->capture_default_str();
  gen->add_option("--test-days", gen_test_days, "Days in the test window")->capture_default_str();
  gen->add_option("--dump-spec", gen_dump_spec, "Write the effective spec as JSON");
  bind_env(gen);

  // train
  std::string train_log, train_out, train_trace;
  bool train_all_bids = false;
  TrainFlags train_flags;
  auto* tr = app.add_subcommand("train", "Train an FM or linear shading model");
  tr->add_option("--log", train_log, "Training log")->required()->check(CLI::ExistingFile);
  tr->add_option("--out", train_out, "Model file to write")->required();
  tr->add_option("--trace", train_trace, "Per-epoch loss trace CSV");
  tr->add_flag("--all-bids", train_all_bids, "Keep lost-at-full-bid records (default: won bids only)");
  train_flags.add(tr, true);
  bind_env(tr);

  // baseline-fit
  std::string bf_log, bf_out;
  BaselineConfig bf_cfg;
  auto* bf = app.add_subcommand("baseline-fit", "Fit the segmented non-linear baseline from a feedback log");
  bf->add_option("--log", bf_log, "Feedback log")->required()->check(CLI::ExistingFile);
  bf->add_option("--out", bf_out, "Segment store file to write")->required();
  bf->add_option("--forgetting", bf_cfg.forgetting, "RLS forgetting factor")->check(CLI::Range(1e-9, 1.0))->capture_default_str();
  bf->add_option("--batch-size", bf_cfg.batch_size, "Feedback pairs per segment update")->check(CLI::PositiveNumber)->capture_default_str();
  bf->add_option("--capacity", bf_cfg.capacity, "Maximum number of segments")->check(CLI::PositiveNumber)->capture_default_str();
  bf->add_option("--u1-step", bf_cfg.u1_step, "Grid step for u1")->check(CLI::PositiveNumber)->capture_default_str();
  bf->add_option("--u2-step", bf_cfg.u2_step, "Grid step for u2")->check(CLI::PositiveNumber)->capture_default_str();
  bind_env(bf);

  // replay
  std::string rp_log, rp_baseline, rp_csv, rp_table;
  std::vector<std::string> rp_models;
  double rp_gamma = 0.2;
  bool rp_all_bids = false, rp_oracle = false;
  auto* rp = app.add_subcommand("replay", "Replay a log through models and the baseline");
  rp->add_option("--log", rp_log, "Test log")->required()->check(CLI::ExistingFile);
  rp->add_option("--baseline", rp_baseline, "Baseline model or segment store file (delta denominator)")->required();
  rp->add_option("--model", rp_models, "name=path of a model to evaluate (repeatable)");
  rp->add_option("--gamma", rp_gamma, "Gamma used for the reported mean asymmetric loss")->capture_default_str();
  rp->add_option("--csv", rp_csv, "Write the machine-readable report here");
  rp->add_option("--table", rp_table, "Write the human-readable table here (default: stdout)");
  rp->add_flag("--oracle", rp_oracle, "Include the oracle (min-bid-to-win) shader");
  rp->add_flag("--all-bids", rp_all_bids, "Keep lost-at-full-bid records (default: won bids only)");
  bind_env(rp);

  // sweep
  std::string sw_train, sw_test, sw_baseline, sw_csv;
  std::vector<double> sw_gammas = {0.0, 0.2, 0.4, 0.6, 0.8, 1.0};
  TrainFlags sw_flags;
  auto* sw = app.add_subcommand("sweep", "Train one FM per gamma and replay each against the baseline");
  sw->add_option("--train-log", sw_train, "Training log")->required()->check(CLI::ExistingFile);
  sw->add_option("--test-log", sw_test, "Test log")->required()->check(CLI::ExistingFile);
  sw->add_option("--baseline", sw_baseline, "Baseline file; fitted from --train-log when omitted");
  sw->add_option("--gammas", sw_gammas, "Gamma grid")->delimiter(',')->capture_default_str();
  sw->add_option("--csv", sw_csv, "Write the sweep table here (default: stdout)");
  sw_flags.add(sw, false);
  bind_env(sw);

  // serve
  std::string sv_model, sv_host = "127.0.0.1";
  int sv_port = 8080;
  auto* sv = app.add_subcommand("serve", "Serve shading requests over HTTP");
  sv->add_option("--model", sv_model, "Model file")->required()->check(CLI::ExistingFile);
  sv->add_option("--host", sv_host, "Listen address")->capture_default_str();
  sv->add_option("--port", sv_port, "Listen port")->check(CLI::Range(0, 65535))->capture_default_str();
  bind_env(sv);

  // bench
  std::string bn_model, bn_log;
  std::size_t bn_requests = 10000;
  auto* bn = app.add_subcommand("bench", "Measure shading compute latency");
  bn->add_option("--model", bn_model, "Model file")->required()->check(CLI::ExistingFile);
  bn->add_option("--log", bn_log, "Requests are drawn from this log (default: synthetic)");
  bn->add_option("--requests", bn_requests, "Number of sequential requests")->check(CLI::PositiveNumber)->capture_default_str();
  bind_env(bn);

  CLI11_PARSE(app, argc, argv);

  try {
    if (*gen) {
      SyntheticLandscapeSpec spec = gen_spec.empty() ? default_landscape_spec(gen_records, gen_seed) : load_landscape_spec(gen_spec);
      if (gen->count("--records")) spec.record_count = gen_records;
      if (gen->count("--seed")) spec.seed = gen_seed;
      if (gen_out.empty() && gen_train_out.empty() && gen_test_out.empty() && gen_dump_spec.empty()) {
        throw UsageError("generate needs at least one of --out, --train-out, --test-out, --dump-spec");
      }
      if (!gen_dump_spec.empty()) write_text(gen_dump_spec, dump_landscape_spec(spec));
      const auto records = generate_synthetic(spec);
      json summary{{"records", records.size()}, {"seed", spec.seed}};
      if (!gen_out.empty()) write_log_file(gen_out, records);
      if (!gen_train_out.empty() || !gen_test_out.empty()) {
        const auto split = split_by_day(records, gen_train_days, gen_test_days);
        if (!gen_train_out.empty()) write_log_file(gen_train_out, split.train);
        if (!gen_test_out.empty()) write_log_file(gen_test_out, split.test);
        summary["train_records"] = split.train.size();
        summary["test_records"] = split.test.size();
      }
      print_summary("generate", summary);
    } else if (*tr) {
      const auto records = read_log(train_log, !train_all_bids);
      const auto t0 = std::chrono::steady_clock::now();
      TrainResult result = train(records, train_flags.model_kind(), train_flags.config(), {train_flags.gamma}, train_flags.enc);
      const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      save_model(result.model, train_out);
      if (!train_trace.empty()) {
        std::ostringstream ss;
        write_loss_trace(ss, result.trace);
        write_text(train_trace, ss.str());
      }
      print_summary("train", {{"kind", train_flags.kind},
                              {"records", records.size()},
                              {"gamma", train_flags.symmetric ? 0.0 : train_flags.gamma},
                              {"final_mean_asym_loss", result.trace.back().mean_asym_loss},
                              {"final_mean_mse", result.trace.back().mean_squared_error},
                              {"train_seconds", secs},
                              {"model", train_out}});
    } else if (*bf) {
      const auto records = read_log(bf_log, false);
      const SegmentStore store = fit_segment_store(records, bf_cfg);
      save_segment_store(store, bf_out);
      print_summary("baseline-fit", {{"records", records.size()}, {"segments", store.size()}, {"out", bf_out}});
    } else if (*rp) {
      const auto records = read_log(rp_log, !rp_all_bids);
      std::vector<std::shared_ptr<const Shader>> shaders = {shader_from_file("baseline", rp_baseline)};
      for (const auto& spec : rp_models) {
        const auto eq = spec.find('=');
        if (eq == std::string::npos || eq == 0 || eq + 1 == spec.size()) {
          throw UsageError("--model expects name=path, got '" + spec + "'");
        }
        shaders.push_back(shader_from_file(spec.substr(0, eq), spec.substr(eq + 1)));
      }
      if (rp_oracle) shaders.push_back(std::make_shared<OracleShader>());
      const ReplayReport report = run_replay(records, shaders, "baseline", {rp_gamma});
      std::ostringstream table;
      write_report_table(table, report);
      if (rp_table.empty()) {
        std::cout << table.str();
      } else {
        write_text(rp_table, table.str());
      }
      if (!rp_csv.empty()) {
        std::ostringstream csv;
        write_report_csv(csv, report);
        write_text(rp_csv, csv.str());
      }
      json deltas = json::object();
      for (const auto& s : report.shaders) {
        deltas[s.name] = s.overall_delta.surplus_pct ? json(*s.overall_delta.surplus_pct) : json(nullptr);
      }
      print_summary("replay", {{"records", records.size()}, {"surplus_delta_pct", deltas}});
    } else if (*sw) {
      const auto train_records = read_log(sw_train, true);
      const auto test_records = read_log(sw_test, true);
      std::shared_ptr<const Shader> baseline;
      if (sw_baseline.empty()) {
        baseline = std::make_shared<SegmentedShader>("baseline", std::make_shared<const SegmentStore>(fit_segment_store(train_records)));
      } else {
        baseline = shader_from_file("baseline", sw_baseline);
      }
      const auto rows = gamma_sweep(train_records, test_records, sw_gammas, sw_flags.config(), sw_flags.enc, baseline);
      std::ostringstream csv;
      write_sweep_csv(csv, rows);
      if (sw_csv.empty()) {
        std::cout << csv.str();
      } else {
        write_text(sw_csv, csv.str());
      }
      std::size_t failed = static_cast<std::size_t>(std::count_if(rows.begin(), rows.end(), [](const SweepRow& r) { return !r.fm; }));
      print_summary("sweep", {{"gammas", sw_gammas.size()}, {"failed", failed}});
    } else if (*sv) {
      ShadingService service = ShadingService::from_file(sv_model);
      ShadingHttpServer server(service);
      const int port = server.bind(sv_host, sv_port);
      print_summary("serve", {{"host", sv_host}, {"port", port}, {"model_version", service.snapshot()->version_tag()}});
      server.run();
    } else if (*bn) {
      ShadingService service = ShadingService::from_file(bn_model);
      std::vector<AuctionRecord> records;
      if (bn_log.empty()) {
        records = generate_synthetic(default_landscape_spec(bn_requests, 7));
      } else {
        records = read_log(bn_log, false);
      }
      if (records.empty()) throw UsageError("bench needs at least one record");
      std::vector<ShadeRequest> requests;
      requests.reserve(records.size());
      for (const auto& r : records) requests.push_back(ShadeRequest::from_record(r));
      std::vector<double> lat;
      lat.reserve(bn_requests);
      for (std::size_t i = 0; i < bn_requests; ++i) lat.push_back(service.shade(requests[i % requests.size()]).latency_us);
      std::sort(lat.begin(), lat.end());
      auto q = [&lat](double p) { return lat[std::min(lat.size() - 1, static_cast<std::size_t>(p * static_cast<double>(lat.size())))]; };
      print_summary("bench", {{"requests", bn_requests}, {"p50_us", q(0.50)}, {"p99_us", q(0.99)}, {"max_us", lat.back()}});
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
