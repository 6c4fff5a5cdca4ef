// Copyright 2026 The mvlip Authors
// SPDX-License-Identifier: Apache-2.0

// mvlip command-line driver.
//
// Exit codes: 0 success, 1 usage or configuration error, 2 data or file
// format error, 3 numeric failure, 4 gradient check failure.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <random>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "mvlip/checkpoint.hpp"
#include "mvlip/config.hpp"
#include "mvlip/data.hpp"
#include "mvlip/gradcheck.hpp"
#include "mvlip/sweep.hpp"
#include "mvlip/synth.hpp"
#include "mvlip/train.hpp"

namespace fs = std::filesystem;
using namespace mvlip;

namespace {

enum Exit { kOk = 0, kUsage = 1, kData = 2, kNumeric = 3, kGradcheck = 4 };

struct Options {
  std::string config_file;
  std::vector<std::string> overrides;
  std::string out_dir;
  std::string data;
  std::string views;
  std::string encoder;
  std::vector<std::string> models;
  std::size_t jobs = 0;
  bool nondeterministic = false;
};

void write_file(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write " + path.string());
  out << text;
}

std::string percent(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f%%", 100.0 * v);
  return buf;
}

ExperimentConfig effective_config(const Options& opt) {
  ExperimentConfig cfg = load_config(opt.config_file, opt.overrides);
  if (opt.jobs > 0) cfg.jobs = opt.jobs;
  if (opt.nondeterministic) {
    cfg.deterministic = false;
    cfg.seed = std::random_device{}();
  }
  return cfg;
}

fs::path prepare_out(const Options& opt, const ExperimentConfig& cfg) {
  if (opt.out_dir.empty()) throw ConfigError("--out is required");
  fs::create_directories(opt.out_dir);
  write_file(fs::path(opt.out_dir) / "config.txt", cfg.to_text());
  return opt.out_dir;
}

DatasetManifest manifest_for(const Options& opt, ExperimentConfig& cfg) {
  if (opt.data.empty()) throw ConfigError("--data <manifest.tsv> is required");
  DatasetManifest m = read_manifest(opt.data);
  if (cfg.resplit) {
    m = split_subjects(m, cfg.split_train, cfg.split_val, cfg.split_test, cfg.seed);
  }
  cfg.pipeline.model.frame_sizes = m.view_sizes;
  cfg.pipeline.model.num_classes = m.num_classes;
  return m;
}

std::vector<ViewId> requested_views(const Options& opt, const ExperimentConfig& cfg,
                                    const DatasetManifest& m) {
  if (!opt.views.empty()) return parse_views(opt.views);
  if (!cfg.pipeline.model.views.empty()) return cfg.pipeline.model.views;
  return m.views();
}

void write_eval(const fs::path& dir, const EvalResult& r, std::size_t classes) {
  nlohmann::ordered_json j;
  j["loss"] = r.loss;
  j["accuracy"] = r.accuracy;
  j["utterances"] = r.predictions.labels.size();
  write_file(dir / "metrics.json", j.dump(2) + '\n');
  write_file(dir / "confusion.csv",
             confusion_csv(confusion_matrix(r.predictions.predicted, r.predictions.labels, classes)));
  std::string subjects = "subject,accuracy\n";
  for (const auto& [s, st] : per_subject_accuracy({r.predictions})) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.6f", st.mean);
    subjects += std::to_string(s) + ',' + buf + '\n';
  }
  write_file(dir / "per_subject.csv", subjects);
}

int cmd_synth(const Options& opt) {
  ExperimentConfig cfg = effective_config(opt);
  const fs::path out = prepare_out(opt, cfg);
  SynthConfig sc = cfg.synth;
  sc.seed = cfg.seed;
  const DatasetManifest m = synth_generate(sc, out);
  std::cout << "wrote " << m.entries.size() << " utterances to " << (out / "manifest.tsv").string()
            << '\n';
  for (const auto& [name, acc] : m.oracle_accuracies) {
    std::cout << "template oracle " << name << ": " << percent(acc) << '\n';
  }
  return kOk;
}

template <typename T>
int cmd_pretrain(const Options& opt, ExperimentConfig cfg) {
  const DatasetManifest m = manifest_for(opt, cfg);
  const fs::path out = prepare_out(opt, cfg);
  const std::vector<ViewId> views = requested_views(opt, cfg, m);
  const DatasetSplits<T> data = load_dataset<T>(m, views);
  nlohmann::ordered_json log;
  for (const ViewId v : views) {
    Rng rng = Rng(cfg.seed).fork(0x100 + static_cast<std::uint64_t>(v.degrees()));
    const PretrainResult<T> r = pretrain_view(data, cfg.pipeline.model, v, cfg.pipeline.rbm, rng);
    save_checkpoint(r.encoder, v, out / ("encoder_" + subset_label({v}) + ".mvlm"));
    log[subset_label({v})] = r.reconstruction_errors;
    std::cout << "view " << to_string(v) << ": final reconstruction error per layer";
    for (const auto& layer : r.reconstruction_errors) std::cout << ' ' << layer.back();
    std::cout << '\n';
  }
  write_file(out / "reconstruction.json", log.dump(2) + '\n');
  return kOk;
}

template <typename T>
int cmd_train(const Options& opt, ExperimentConfig cfg) {
  const DatasetManifest m = manifest_for(opt, cfg);
  const fs::path out = prepare_out(opt, cfg);
  const std::vector<ViewId> views = requested_views(opt, cfg, m);
  if (views.size() != 1) throw ConfigError("train needs exactly one view (--views)");
  const ViewId view = views[0];
  const DatasetSplits<T> data = load_dataset<T>(m, views);
  cfg.pipeline.model.views = views;
  StreamRun<T> run;
  if (!opt.encoder.empty()) {
    const Rng root(cfg.seed);
    Rng build = root.fork(0x200 + static_cast<std::uint64_t>(view.degrees()));
    StreamParams<T> stream =
        build_stream<T>(cfg.pipeline.model, view, load_encoder<T>(opt.encoder, view), build);
    TrainConfig tc = cfg.pipeline.train;
    tc.seed = root.fork(0x300 + static_cast<std::uint64_t>(view.degrees())).seed();
    auto [model, record] = train_single_stream(std::move(stream), data, tc);
    run = {std::move(model), std::move(record)};
  } else {
    run = run_single_stream<T>(cfg.pipeline, data, view, cfg.seed);
  }
  run.record.config = cfg.to_text();
  save_checkpoint(run.model, out / "stream.mvlm");
  write_file(out / "run.jsonl", to_jsonl(run.record));
  std::cout << "view " << to_string(view) << ": best epoch " << run.record.best_epoch
            << " of " << run.record.stopped_epoch;
  if (run.record.test) std::cout << ", test accuracy " << percent(run.record.test->accuracy);
  std::cout << '\n';
  return kOk;
}

template <typename T>
int cmd_fuse(const Options& opt, ExperimentConfig cfg) {
  const DatasetManifest m = manifest_for(opt, cfg);
  const fs::path out = prepare_out(opt, cfg);
  if (opt.models.size() < 2) throw ConfigError("fuse needs at least two --model stream checkpoints");
  std::map<ViewId, StreamParams<T>> streams;
  std::vector<ViewId> views;
  for (const std::string& path : opt.models) {
    StreamParams<T> s = load_stream<T>(path);
    views.push_back(s.view);
    if (!streams.emplace(s.view, std::move(s)).second) {
      throw ConfigError("two stream checkpoints for the same view");
    }
  }
  std::sort(views.begin(), views.end());
  const DatasetSplits<T> data = load_dataset<T>(m, views);
  FusedRun<T> run = run_fusion<T>(cfg.pipeline, data, streams, views, cfg.seed);
  run.record.config = cfg.to_text();
  save_checkpoint(run.model, out / "fused.mvlm");
  write_file(out / "run.jsonl", to_jsonl(run.record));
  std::cout << "views " << subset_label(views) << ": best epoch " << run.record.best_epoch
            << " of " << run.record.stopped_epoch;
  if (run.record.test) std::cout << ", test accuracy " << percent(run.record.test->accuracy);
  std::cout << '\n';
  return kOk;
}

template <typename T>
int cmd_eval(const Options& opt, ExperimentConfig cfg) {
  const DatasetManifest m = manifest_for(opt, cfg);
  const fs::path out = prepare_out(opt, cfg);
  if (opt.models.size() != 1) throw ConfigError("eval needs exactly one --model checkpoint");
  const Checkpoint ckpt = read_checkpoint(opt.models[0]);
  EvalResult r;
  if (ckpt.kind() == ModelKind::stream) {
    const StreamParams<T> model = stream_from_checkpoint<T>(ckpt);
    r = evaluate(model, load_dataset<T>(m, {model.view}).test);
  } else if (ckpt.kind() == ModelKind::multiview) {
    const MultiViewParams<T> model = multiview_from_checkpoint<T>(ckpt);
    r = evaluate(model, load_dataset<T>(m, model.views()).test);
  } else {
    throw ConfigError("eval needs a stream or multi-view checkpoint, not an encoder");
  }
  write_eval(out, r, m.num_classes);
  std::cout << "test accuracy " << percent(r.accuracy) << " over " << r.predictions.labels.size()
            << " utterances, loss " << r.loss << '\n';
  return kOk;
}

template <typename T>
int cmd_sweep(const Options& opt, ExperimentConfig cfg) {
  const DatasetManifest m = manifest_for(opt, cfg);
  const fs::path out = prepare_out(opt, cfg);
  std::vector<ViewId> views = requested_views(opt, cfg, m);
  SweepSpec spec;
  spec.subsets = cfg.sweep_subsets;
  if (spec.subsets.empty()) spec.subsets = nonempty_subsets(views);
  std::set<ViewId> needed;
  for (const auto& s : spec.subsets) needed.insert(s.begin(), s.end());
  spec.runs = cfg.sweep_runs;
  spec.base_seed = cfg.seed;
  spec.pipeline = cfg.pipeline;
  spec.jobs = cfg.jobs;
  spec.config_text = cfg.to_text();
  const DatasetSplits<T> data = load_dataset<T>(m, {needed.begin(), needed.end()});
  const SweepReport report =
      run_sweep(spec, data, out, [](const std::string& line) { std::cerr << line << '\n'; });
  write_report(report, out);
  std::cout << format_report_text(report);
  return kOk;
}

int cmd_gradcheck(const Options& opt) {
  const ExperimentConfig cfg = effective_config(opt);
  if (!opt.out_dir.empty()) prepare_out(opt, cfg);
  const GradcheckReport report = run_gradcheck(cfg.gradcheck);
  std::map<std::string, double> worst;
  for (const GradcheckCase& c : report.cases) worst[c.component] = std::max(worst[c.component], c.max_rel_error);
  for (const std::string& name : gradcheck_components()) {
    std::printf("%-13s max relative error %.3e\n", name.c_str(), worst[name]);
  }
  std::printf("max relative error %.3e over %zu cases, %zu entries, %zu skipped at relu kinks "
              "(tolerance %.1e): %s\n",
              report.max_rel_error, report.cases.size(), report.entries, report.skipped_kinks,
              cfg.gradcheck.tolerance, report.passed ? "PASS" : "FAIL");
  return report.passed ? kOk : kGradcheck;
}

template <template <typename> class Cmd>
int dispatch(const Options& opt) {
  ExperimentConfig cfg = effective_config(opt);
  return cfg.precision == Precision::f64 ? Cmd<double>::run(opt, cfg) : Cmd<float>::run(opt, cfg);
}

#define MVLIP_COMMAND(name, fn)                                                   \
  template <typename T>                                                           \
  struct name {                                                                   \
    static int run(const Options& o, ExperimentConfig c) { return fn<T>(o, c); }  \
  };
MVLIP_COMMAND(Pretrain, cmd_pretrain)
MVLIP_COMMAND(Train, cmd_train)
MVLIP_COMMAND(Fuse, cmd_fuse)
MVLIP_COMMAND(Eval, cmd_eval)
MVLIP_COMMAND(Sweep, cmd_sweep)

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multi-view lipreading: synthetic data, training, fusion and evaluation"};
  app.require_subcommand(1);
  Options opt;
  auto common = [&](CLI::App* sub) {
    sub->add_option("-c,--config", opt.config_file, "key = value configuration file");
    sub->add_option("-s,--set", opt.overrides, "override one key, e.g. --set train.max_epochs=20");
    sub->add_option("-o,--out", opt.out_dir, "output directory");
    sub->add_flag("--nondeterministic", opt.nondeterministic,
                  "draw the root seed from the system entropy source (recorded in config.txt)");
  };
  auto with_data = [&](CLI::App* sub) {
    common(sub);
    sub->add_option("-d,--data", opt.data, "dataset manifest (manifest.tsv)")->required();
  };

  CLI::App* synth = app.add_subcommand("synth", "generate a synthetic multi-view dataset");
  common(synth);
  CLI::App* pretrain = app.add_subcommand("pretrain", "RBM-pretrain the encoder of each view");
  with_data(pretrain);
  pretrain->add_option("--views", opt.views, "views to pretrain, e.g. 0,90");
  CLI::App* train = app.add_subcommand("train", "train one single-view stream");
  with_data(train);
  train->add_option("--views", opt.views, "the stream's view")->required();
  train->add_option("--encoder", opt.encoder, "pretrained encoder checkpoint");
  CLI::App* fuse = app.add_subcommand("fuse", "fuse trained streams and fine-tune jointly");
  with_data(fuse);
  fuse->add_option("-m,--model", opt.models, "stream checkpoints, one per view")->required();
  CLI::App* eval = app.add_subcommand("eval", "score a checkpoint on the test split");
  with_data(eval);
  eval->add_option("-m,--model", opt.models, "stream or multi-view checkpoint")->required();
  CLI::App* sweep = app.add_subcommand("sweep", "evaluate view combinations over several runs");
  with_data(sweep);
  sweep->add_option("--views", opt.views, "views whose non-empty subsets are swept");
  sweep->add_option("-j,--jobs", opt.jobs, "parallel runs");
  CLI::App* gradcheck = app.add_subcommand("gradcheck", "finite-difference gradient checks");
  common(gradcheck);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }

  try {
    if (synth->parsed()) return cmd_synth(opt);
    if (pretrain->parsed()) return dispatch<Pretrain>(opt);
    if (train->parsed()) return dispatch<Train>(opt);
    if (fuse->parsed()) return dispatch<Fuse>(opt);
    if (eval->parsed()) return dispatch<Eval>(opt);
    if (sweep->parsed()) return dispatch<Sweep>(opt);
    if (gradcheck->parsed()) return cmd_gradcheck(opt);
  } catch (const NumericFailure& e) {
    std::cerr << "numeric failure: " << e.what() << '\n';
    return kNumeric;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return kData;
  } catch (const FormatError& e) {
    std::cerr << "format error: " << e.what() << '\n';
    return kData;
  } catch (const InvalidArgument& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kData;
  }
  return kUsage;
}
