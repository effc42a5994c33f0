// must: simulate UAV snapshot sequences, train and evaluate the link predictor.
//
//   must simulate --config C [--out DATASET] [--seed N]
//   must train    --config C [--dataset D] [--checkpoint CK] [--out LOSS_CSV] [--seed N]
//   must evaluate --checkpoint CK [--dataset D] [--config C] [--out REPORT_CSV]
//   must ablate   --config C [--dataset D] [--out TABLE_CSV] [--seed N]

#include "must/config.hpp"
#include "must/evaluation.hpp"
#include "must/mobility.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

namespace {

using namespace must;

struct Options {
  std::string config;
  std::string dataset;
  std::string checkpoint;
  std::string out;
  std::optional<std::uint64_t> seed;
  bool quiet = false;
};

RunConfig effective_config(const Options& o, bool required) {
  RunConfig c;
  if (!o.config.empty()) c = load_config(o.config);
  else if (required) throw ConfigError("--config is required for this command");
  if (o.seed) c.set_seed(*o.seed);
  if (!o.dataset.empty()) c.paths.dataset = o.dataset;
  if (!o.checkpoint.empty()) c.paths.checkpoint = o.checkpoint;
  c.validate();
  return c;
}

std::string need(const std::string& path, const char* what) {
  if (path.empty()) throw ConfigError(std::string("no ") + what + " path (pass it on the command line or under [paths])");
  return path;
}

std::ofstream open_out(const std::string& path) {
  std::ofstream f(path);
  if (!f) throw DataError("cannot open '" + path + "' for writing");
  return f;
}

SequencePtr load_sequence(const std::string& path, std::vector<std::string>* notes = nullptr) {
  Dataset ds = read_dataset(need(path, "dataset"));
  if (ds.snapshots.empty()) throw DataError("dataset '" + path + "' has no snapshots");
  if (notes) *notes = ds.notes;
  return std::make_shared<const std::vector<WeightedSnapshot>>(std::move(ds.snapshots));
}

void print_stats(const ScenarioConfig& sc, const Dataset& ds) {
  const SequenceStats st = sequence_stats(ds.snapshots);
  std::printf("%-6s %-10s %-6s %-10s %-10s %-10s %-10s %-10s\n", "model", "snapshots", "nodes", "radius_m", "min_edges",
              "max_edges", "avg_edges", "density");
  std::printf("%-6s %-10zu %-6d %-10.1f %-10d %-10d %-10.1f %-10.4f\n", std::string(to_string(sc.mobility_model)).c_str(),
              ds.snapshots.size(), ds.n, ds.comm_radius, st.min_edges, st.max_edges, st.avg_edges, st.avg_density);
}

int cmd_simulate(const Options& o) {
  RunConfig c = effective_config(o, true);
  const std::string out = need(o.out.empty() ? c.paths.dataset : o.out, "output dataset");
  Dataset ds = run_scenario(c.scenario);
  ds.notes = config_echo(c);
  write_dataset(ds, out);
  print_stats(c.scenario, ds);
  return exit_code::ok;
}

std::map<std::string, std::string> train_hyper(const TrainConfig& t) {
  return {{"window", std::to_string(t.window)},
          {"train_samples", std::to_string(t.train_samples)},
          {"epochs", std::to_string(t.epochs)},
          {"learning_rate", format_g(t.adam.learning_rate, 17)},
          {"epsilon", format_g(t.loss.epsilon, 17)},
          {"beta", format_g(t.loss.beta, 17)},
          {"eta", format_g(t.loss.eta, 17)},
          {"lambda", format_g(t.loss.lambda, 17)}};
}

int cmd_train(const Options& o) {
  RunConfig c = effective_config(o, true);
  const std::string ck_path = need(c.paths.checkpoint, "checkpoint");
  std::string log_path = !o.out.empty() ? o.out : c.paths.loss_log;
  if (log_path.empty()) log_path = ck_path + ".loss.csv";

  SequencePtr seq = load_sequence(c.paths.dataset);
  c.model.num_nodes = seq->front().n();
  const DatasetSplit sp = protocol_split(seq, c.train);
  if (!o.quiet)
    std::fprintf(stderr, "%zu snapshots, %zu windows of length %d: %zu train / %zu test\n", seq->size(),
                 sp.train.size() + sp.test.size(), c.train.window, sp.train.size(), sp.test.size());
  const PreparedSequence prep(seq, c.model.seed);
  MustModel model(c.model);
  const TrainResult tr = train(model, prep, sp.train, c.train, [&](int e, double mean) {
    if (!o.quiet) std::fprintf(stderr, "epoch %d/%d  mean window loss %.6g\n", e + 1, c.train.epochs, mean);
  });
  const auto echo = config_echo(c);
  write_checkpoint(model, train_hyper(c.train), echo, ck_path);
  auto log = open_out(log_path);
  write_loss_log(tr.log, echo, log);
  std::printf("trained %d epochs%s; final mean window loss %.6g\ncheckpoint: %s\nloss log: %s\n", tr.epochs_run,
              tr.early_stopped ? " (early stop)" : "", tr.epoch_mean.back(), ck_path.c_str(), log_path.c_str());
  return exit_code::ok;
}

void print_reports(const std::vector<MetricReport>& reports) {
  std::printf("%-16s %-8s %-10s %-10s\n", "method", "sample", "auc", "auprc");
  for (const auto& r : reports)
    for (const auto& s : r.samples)
      std::printf("%-16s %-8zu %-10s %-10s\n", r.tag.c_str(), s.target_index, format_metric(s.auc).c_str(),
                  format_metric(s.auprc).c_str());
  std::printf("\n%-16s %-10s %-10s %-8s\n", "method", "mean_auc", "mean_auprc", "samples");
  for (const auto& r : reports)
    std::printf("%-16s %-10.4f %-10.4f %-8zu\n", r.tag.c_str(), r.mean_auc, r.mean_auprc, r.samples.size());
}

int cmd_evaluate(const Options& o) {
  RunConfig c = effective_config(o, false);
  const Checkpoint ck = read_checkpoint(need(c.paths.checkpoint, "checkpoint"));
  TrainConfig tc = c.train;
  try {
    if (ck.extra.count("window")) tc.window = std::stoi(ck.extra.at("window"));
    if (ck.extra.count("train_samples")) tc.train_samples = std::stoi(ck.extra.at("train_samples"));
  } catch (const std::exception&) {
    throw DataError("checkpoint: malformed window/train_samples");
  }
  SequencePtr seq = load_sequence(c.paths.dataset);
  if (seq->front().n() != ck.model.num_nodes)
    throw DataError("checkpoint was trained on " + std::to_string(ck.model.num_nodes) + " nodes, dataset has " +
                    std::to_string(seq->front().n()));
  MustModel model = model_from_checkpoint(ck);
  const DatasetSplit sp = protocol_split(seq, tc);
  const PreparedSequence prep(seq, ck.model.seed);
  std::vector<MetricReport> reps = {evaluate_model(model, prep, sp.test, "must_" + std::string(to_string(ck.model.variant))),
                                    evaluate_baseline(Baseline::CommonNeighbor, sp.test),
                                    evaluate_baseline(Baseline::Persistence, sp.test)};
  print_reports(reps);
  if (!o.out.empty()) {
    auto f = open_out(o.out);
    for (const auto& n : ck.notes) f << "# " << n << '\n';
    write_report_csv(reps, f);
  }
  return exit_code::ok;
}

int cmd_ablate(const Options& o) {
  RunConfig c = effective_config(o, true);
  SequencePtr seq = load_sequence(c.paths.dataset);
  std::vector<MetricReport> rows;
  for (Variant v : kAllVariants) {
    if (!o.quiet) std::fprintf(stderr, "variant %s\n", std::string(to_string(v)).c_str());
    rows.push_back(run_ablation(seq, v, c.model, c.train, [&](int e, double mean) {
      if (!o.quiet) std::fprintf(stderr, "  epoch %d/%d  mean window loss %.6g\n", e + 1, c.train.epochs, mean);
    }));
  }
  std::printf("%-12s %-10s %-10s\n", "variant", "auc", "auprc");
  for (const auto& r : rows) std::printf("%-12s %-10.4f %-10.4f\n", r.tag.c_str(), r.mean_auc, r.mean_auprc);
  const std::string out = !o.out.empty() ? o.out : c.paths.report;
  if (!out.empty()) {
    auto f = open_out(out);
    for (const auto& n : config_echo(c)) f << "# " << n << '\n';
    f << "variant,auc,auprc\n";
    for (const auto& r : rows) f << r.tag << ',' << format_g(r.mean_auc, 6) << ',' << format_g(r.mean_auprc, 6) << '\n';
  }
  return exit_code::ok;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"UAV network link prediction: simulate, train, evaluate, ablate"};
  app.require_subcommand(1);
  Options o;
  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", o.config, "configuration file");
    sub->add_option("--dataset", o.dataset, "UANET v1 dataset file");
    sub->add_option("--checkpoint", o.checkpoint, "model checkpoint file");
    sub->add_option("--out", o.out, "output file");
    sub->add_option("--seed", o.seed, "override every seed in the configuration");
    sub->add_flag("-q,--quiet", o.quiet, "no progress output");
  };
  CLI::App* sim = app.add_subcommand("simulate", "generate a snapshot sequence");
  CLI::App* trn = app.add_subcommand("train", "train on the first windows of a dataset");
  CLI::App* evl = app.add_subcommand("evaluate", "score a checkpoint on the held-out windows");
  CLI::App* abl = app.add_subcommand("ablate", "train and score every scale variant");
  for (CLI::App* s : {sim, trn, evl, abl}) add_common(s);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? exit_code::ok : exit_code::usage;
  }
  try {
    if (sim->parsed()) return cmd_simulate(o);
    if (trn->parsed()) return cmd_train(o);
    if (evl->parsed()) return cmd_evaluate(o);
    return cmd_ablate(o);
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return exit_code::config;
  } catch (const DataError& e) {
    std::fprintf(stderr, "data error: %s\n", e.what());
    return exit_code::data;
  } catch (const NumericError& e) {
    std::fprintf(stderr, "numeric failure: %s\n", e.what());
    return exit_code::numeric;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return exit_code::usage;
  }
}
