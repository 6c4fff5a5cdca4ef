// Copyright 2026 The mvlip Authors
// SPDX-License-Identifier: Apache-2.0

#include "mvlip/sweep.hpp"

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <exception>
#include <fstream>
#include <mutex>
#include <set>
#include <thread>

#include <json.hpp>

#include "mvlip/checkpoint.hpp"

namespace mvlip {

namespace {

std::uint64_t view_mask(const std::vector<ViewId>& views) {
  std::uint64_t mask = 0;
  for (const ViewId v : views) mask |= std::uint64_t{1} << (v.degrees() / 15);
  return mask;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write " + path.string());
  out << text;
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

// Rethrows `error` with `context` prefixed, keeping its category.
[[noreturn]] void rethrow_annotated(std::exception_ptr error, const std::string& context) {
  try {
    std::rethrow_exception(error);
  } catch (const NumericFailure& e) {
    throw NumericFailure(context + ": " + e.what());
  } catch (const FormatError& e) {
    throw DataError(context + ": " + e.what());
  } catch (const DataError& e) {
    throw DataError(context + ": " + e.what());
  } catch (const ViewMismatch& e) {
    throw ViewMismatch(context + ": " + e.what());
  } catch (const InvalidArgument& e) {
    throw InvalidArgument(context + ": " + e.what());
  } catch (const std::exception& e) {
    throw std::runtime_error(context + ": " + e.what());
  }
}

double best_val_accuracy(const RunRecord& r) {
  for (const EpochRecord& e : r.epochs) {
    if (e.epoch == r.best_epoch) return e.val_accuracy;
  }
  return 0.0;
}

// Runs task(i) for i in [0, n) on `jobs` threads. Results must be written to
// disjoint slots; the first failure by index is rethrown.
void parallel_for(std::size_t n, std::size_t jobs, const std::function<void(std::size_t)>& task,
                  const std::function<std::string(std::size_t)>& describe) {
  std::vector<std::exception_ptr> errors(n);
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < n; i = next++) {
      try {
        task(i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const std::size_t threads = std::min(std::max<std::size_t>(jobs, 1), n);
  if (threads <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (errors[i]) rethrow_annotated(errors[i], describe(i));
  }
}

}  // namespace

template <typename T>
Matrix<T> stack_frames(const std::vector<Example<T>>& examples, ViewId view) {
  Eigen::Index rows = 0, cols = -1;
  for (const Example<T>& ex : examples) {
    const auto it = ex.views.find(view);
    if (it == ex.views.end()) throw ViewMismatch("no frames for view " + to_string(view));
    rows += it->second.rows();
    cols = it->second.cols();
  }
  if (rows == 0) throw InvalidArgument("stack_frames: no frames");
  Matrix<T> out(rows, cols);
  Eigen::Index at = 0;
  for (const Example<T>& ex : examples) {
    const Matrix<T>& f = ex.views.at(view);
    out.middleRows(at, f.rows()) = f;
    at += f.rows();
  }
  return out;
}

template <typename T>
PretrainResult<T> pretrain_view(const DatasetSplits<T>& data, const ModelConfig& model,
                                ViewId view, const CdConfig& rbm, Rng& rng) {
  if (data.train.empty()) throw InvalidArgument("pretrain: the training split is empty");
  const std::vector<std::size_t> widths = model.encoder_widths(view);
  const Matrix<T> frames = stack_frames(data.train, view);
  if (static_cast<std::size_t>(frames.cols()) != widths.front()) {
    throw InvalidArgument("pretrain: view " + to_string(view) + " frames have " +
                          std::to_string(frames.cols()) + " pixels, model expects " +
                          std::to_string(widths.front()));
  }
  return pretrain_stack<T>(frames, {widths.begin() + 1, widths.end()}, rbm, rng);
}

template <typename T>
StreamRun<T> run_single_stream(const PipelineConfig& cfg, const DatasetSplits<T>& data,
                               ViewId view, std::uint64_t seed) {
  const Rng root(seed);
  const auto deg = static_cast<std::uint64_t>(view.degrees());
  ModelConfig mc = cfg.model;
  mc.views = {view};
  std::optional<EncoderParams<T>> encoder;
  if (cfg.pretrain) {
    Rng rng = root.fork(0x100 + deg);
    encoder = pretrain_view(data, mc, view, cfg.rbm, rng).encoder;
  }
  Rng build = root.fork(0x200 + deg);
  StreamParams<T> stream = build_stream<T>(mc, view, encoder, build);
  TrainConfig tc = cfg.train;
  tc.seed = root.fork(0x300 + deg).seed();
  auto [trained, record] = train_single_stream(std::move(stream), data, tc);
  return {std::move(trained), std::move(record)};
}

template <typename T>
FusedRun<T> run_fusion(const PipelineConfig& cfg, const DatasetSplits<T>& data,
                       const std::map<ViewId, StreamParams<T>>& streams,
                       const std::vector<ViewId>& views, std::uint64_t seed) {
  const Rng root(seed);
  const std::uint64_t mask = view_mask(views);
  ModelConfig mc = cfg.model;
  mc.views = views;
  Rng build = root.fork(0x400 + mask);
  MultiViewParams<T> model = build_multiview(streams, mc, build);
  TrainConfig tc = cfg.train;
  tc.seed = root.fork(0x500 + mask).seed();
  auto [trained, record] = train_multiview(std::move(model), data, tc);
  return {std::move(trained), std::move(record)};
}

void SweepSpec::validate() const {
  if (runs == 0) throw InvalidArgument("sweep: runs must be >= 1");
  for (const auto& s : subsets) {
    if (s.empty()) throw InvalidArgument("sweep: empty view subset");
    std::set<ViewId> unique(s.begin(), s.end());
    if (unique.size() != s.size()) throw InvalidArgument("sweep: duplicate view in a subset");
  }
  pipeline.train.validate();
  if (pipeline.pretrain) pipeline.rbm.validate();
}

std::uint64_t run_seed(std::uint64_t base_seed, std::size_t run) {
  return Rng(base_seed).fork(0x52554e0000ULL + run).seed();
}

template <typename T>
SweepReport run_sweep(const SweepSpec& spec, const DatasetSplits<T>& data,
                      const std::filesystem::path& out_dir,
                      const std::function<void(const std::string&)>& log) {
  spec.validate();
  std::vector<ViewId> available;
  for (const auto& [v, size] : data.view_sizes) available.push_back(v);
  std::vector<std::vector<ViewId>> subsets = spec.subsets;
  if (subsets.empty()) subsets = nonempty_subsets(available);
  for (auto& s : subsets) std::sort(s.begin(), s.end());
  std::set<ViewId> needed;
  for (const auto& s : subsets) {
    for (const ViewId v : s) {
      if (!data.view_sizes.contains(v)) {
        throw ViewMismatch("sweep: dataset has no view " + to_string(v) + " (subset " +
                           subset_label(s) + ")");
      }
      needed.insert(v);
    }
  }
  const std::vector<ViewId> views(needed.begin(), needed.end());
  const std::size_t runs = spec.runs;
  std::mutex log_mutex;
  auto say = [&](const std::string& line) {
    if (!log) return;
    std::lock_guard lock(log_mutex);
    log(line);
  };
  if (!out_dir.empty()) {
    std::filesystem::create_directories(out_dir / "checkpoints");
    std::filesystem::create_directories(out_dir / "runs");
  }
  auto save_run = [&](const std::string& stem, const auto& model, RunRecord record) {
    if (out_dir.empty()) return;
    record.config = spec.config_text;
    save_checkpoint(model, out_dir / "checkpoints" / (stem + ".mvlm"));
    write_text(out_dir / "runs" / (stem + ".jsonl"), to_jsonl(record));
  };

  // Single streams, shared by every subset that contains their view.
  std::vector<std::optional<StreamRun<T>>> streams(views.size() * runs);
  parallel_for(
      streams.size(), spec.jobs,
      [&](std::size_t i) {
        const ViewId v = views[i / runs];
        const std::size_t r = i % runs;
        streams[i] = run_single_stream<T>(spec.pipeline, data, v, run_seed(spec.base_seed, r));
        const std::string stem = "stream_" + subset_label({v}) + "_run" + std::to_string(r);
        save_run(stem, streams[i]->model, streams[i]->record);
        say("stream " + subset_label({v}) + " run " + std::to_string(r) + ": test accuracy " +
            fmt(streams[i]->record.test ? streams[i]->record.test->accuracy : 0.0));
      },
      [&](std::size_t i) {
        return "view " + to_string(views[i / runs]) + ", run " + std::to_string(i % runs) +
               " (seed " + std::to_string(run_seed(spec.base_seed, i % runs)) + ")";
      });
  auto stream_of = [&](ViewId v, std::size_t r) -> const StreamRun<T>& {
    const auto k = static_cast<std::size_t>(std::find(views.begin(), views.end(), v) - views.begin());
    return *streams[k * runs + r];
  };

  std::vector<std::size_t> multi;
  for (std::size_t s = 0; s < subsets.size(); ++s) {
    if (subsets[s].size() > 1) multi.push_back(s);
  }
  std::vector<std::optional<RunRecord>> fused(multi.size() * runs);
  parallel_for(
      fused.size(), spec.jobs,
      [&](std::size_t i) {
        const auto& subset = subsets[multi[i / runs]];
        const std::size_t r = i % runs;
        std::map<ViewId, StreamParams<T>> trained;
        for (const ViewId v : subset) trained.emplace(v, stream_of(v, r).model);
        FusedRun<T> run = run_fusion<T>(spec.pipeline, data, trained, subset,
                                        run_seed(spec.base_seed, r));
        save_run("fused_" + subset_label(subset) + "_run" + std::to_string(r), run.model,
                 run.record);
        say("fused " + subset_label(subset) + " run " + std::to_string(r) + ": test accuracy " +
            fmt(run.record.test ? run.record.test->accuracy : 0.0));
        fused[i] = std::move(run.record);
      },
      [&](std::size_t i) {
        return "subset " + subset_label(subsets[multi[i / runs]]) + ", run " +
               std::to_string(i % runs) + " (seed " +
               std::to_string(run_seed(spec.base_seed, i % runs)) + ")";
      });

  SweepReport report;
  report.runs = runs;
  report.num_classes = data.num_classes;
  for (std::size_t s = 0; s < subsets.size(); ++s) {
    SubsetResult row;
    row.views = subsets[s];
    row.label = subset_label(subsets[s]);
    std::vector<const RunRecord*> records;
    if (row.views.size() == 1) {
      for (std::size_t r = 0; r < runs; ++r) records.push_back(&stream_of(row.views[0], r).record);
    } else {
      const auto m = static_cast<std::size_t>(std::find(multi.begin(), multi.end(), s) - multi.begin());
      for (std::size_t r = 0; r < runs; ++r) records.push_back(&*fused[m * runs + r]);
    }
    std::vector<Predictions> predictions;
    for (const RunRecord* rec : records) {
      if (!rec->test) throw DataError("sweep: the dataset has no test split");
      row.test_accuracy.push_back(rec->test->accuracy);
      row.val_accuracy.push_back(best_val_accuracy(*rec));
      predictions.push_back(rec->test->predictions);
    }
    row.stats = run_stats(row.test_accuracy);
    for (std::size_t r = 1; r < runs; ++r) {
      if (row.test_accuracy[r] > row.test_accuracy[row.best_run_by_test]) row.best_run_by_test = r;
      if (row.val_accuracy[r] > row.val_accuracy[row.best_run_by_val]) row.best_run_by_val = r;
    }
    row.max_by_val = row.test_accuracy[row.best_run_by_val];
    row.per_subject = per_subject_accuracy(predictions);
    const Predictions& best = predictions[row.best_run_by_test];
    row.confusion = confusion_matrix(best.predicted, best.labels, data.num_classes);
    report.rows.push_back(std::move(row));
  }
  const auto baseline = std::find_if(report.rows.begin(), report.rows.end(), [](const auto& r) {
    return r.views == std::vector<ViewId>{ViewId::from_degrees(0)};
  });
  if (baseline != report.rows.end() && runs >= 3) {
    for (SubsetResult& row : report.rows) {
      if (&row == &*baseline) continue;
      row.vs_baseline = significance_test(row.test_accuracy, baseline->test_accuracy);
    }
  }
  return report;
}

std::string format_report_text(const SweepReport& report) {
  std::string out = "View-combination sweep, " + std::to_string(report.runs) +
                    " runs per subset, utterance-level test accuracy (%)\n\n";
  char line[256];
  std::snprintf(line, sizeof line, "%-16s %8s %8s %9s %9s %10s %4s\n", "views", "mean", "std",
                "max(test)", "max(val)", "p vs 0", "sig");
  out += line;
  for (const SubsetResult& r : report.rows) {
    const std::string sd = r.stats.stddev ? fmt(100.0 * *r.stats.stddev).substr(0, 6) : "-";
    const std::string p = r.vs_baseline ? fmt(r.vs_baseline->welch_p) : "-";
    const char* sig = r.vs_baseline ? (r.vs_baseline->significant ? "*" : "") : "";
    std::snprintf(line, sizeof line, "%-16s %8.2f %8s %9.2f %9.2f %10s %4s\n", r.label.c_str(),
                  100.0 * r.stats.mean, sd.c_str(), 100.0 * r.stats.max, 100.0 * r.max_by_val,
                  p.c_str(), sig);
    out += line;
  }
  out += "\nmax(val): test accuracy of the run with the highest validation accuracy.\n";
  out += "sig: Welch t-test against the 0 degree row at alpha 0.05.\n";
  return out;
}

std::string format_report_tsv(const SweepReport& report) {
  std::string out =
      "subset\tnum_views\truns\tmean\tstd\tmax_by_test\tmax_by_val\tbest_run_test\tbest_run_val\t"
      "welch_t\twelch_df\twelch_p\tmann_whitney_u\tmann_whitney_p\tsignificant\n";
  for (const SubsetResult& r : report.rows) {
    out += r.label + '\t' + std::to_string(r.views.size()) + '\t' + std::to_string(r.stats.count) +
           '\t' + fmt(r.stats.mean) + '\t' + (r.stats.stddev ? fmt(*r.stats.stddev) : "-") + '\t' +
           fmt(r.stats.max) + '\t' + fmt(r.max_by_val) + '\t' + std::to_string(r.best_run_by_test) +
           '\t' + std::to_string(r.best_run_by_val) + '\t';
    if (r.vs_baseline) {
      const SignificanceResult& s = *r.vs_baseline;
      out += fmt(s.welch_t) + '\t' + fmt(s.welch_df) + '\t' + fmt(s.welch_p) + '\t' +
             fmt(s.mann_whitney_u) + '\t' + fmt(s.mann_whitney_p) + '\t' +
             (s.significant ? "yes" : "no") + '\n';
    } else {
      out += "-\t-\t-\t-\t-\t-\n";
    }
  }
  return out;
}

std::string format_report_json(const SweepReport& report) {
  using nlohmann::ordered_json;
  ordered_json j;
  j["runs"] = report.runs;
  j["num_classes"] = report.num_classes;
  j["subsets"] = ordered_json::array();
  for (const SubsetResult& r : report.rows) {
    ordered_json row;
    row["subset"] = r.label;
    std::vector<int> angles;
    for (const ViewId v : r.views) angles.push_back(v.degrees());
    row["views"] = angles;
    row["test_accuracy"] = r.test_accuracy;
    row["val_accuracy"] = r.val_accuracy;
    row["mean"] = r.stats.mean;
    row["std"] = r.stats.stddev ? ordered_json(*r.stats.stddev) : ordered_json(nullptr);
    row["max_by_test"] = r.stats.max;
    row["max_by_val"] = r.max_by_val;
    row["best_run_by_test"] = r.best_run_by_test;
    row["best_run_by_val"] = r.best_run_by_val;
    if (r.vs_baseline) {
      const SignificanceResult& s = *r.vs_baseline;
      row["significance"] = {{"welch_t", s.welch_t},         {"welch_df", s.welch_df},
                             {"welch_p", s.welch_p},         {"mann_whitney_u", s.mann_whitney_u},
                             {"mann_whitney_p", s.mann_whitney_p}, {"significant", s.significant}};
    }
    ordered_json subjects = ordered_json::object();
    for (const auto& [subject, st] : r.per_subject) {
      subjects[std::to_string(subject)] = {
          {"mean", st.mean}, {"std", st.stddev ? ordered_json(*st.stddev) : ordered_json(nullptr)}};
    }
    row["per_subject"] = subjects;
    row["confusion"] = ordered_json::array();
    for (std::size_t t = 0; t < r.confusion.classes(); ++t) {
      std::vector<std::size_t> counts;
      for (std::size_t p = 0; p < r.confusion.classes(); ++p) counts.push_back(r.confusion.at(t, p));
      row["confusion"].push_back(counts);
    }
    j["subsets"].push_back(row);
  }
  return j.dump(2) + '\n';
}

std::string confusion_csv(const ConfusionMatrix& confusion) {
  std::string out = "true\\predicted";
  for (std::size_t p = 0; p < confusion.classes(); ++p) out += ',' + std::to_string(p);
  out += '\n';
  for (std::size_t t = 0; t < confusion.classes(); ++t) {
    out += std::to_string(t);
    for (std::size_t p = 0; p < confusion.classes(); ++p) out += ',' + std::to_string(confusion.at(t, p));
    out += '\n';
  }
  return out;
}

void write_report(const SweepReport& report, const std::filesystem::path& out_dir) {
  std::filesystem::create_directories(out_dir / "confusion");
  std::filesystem::create_directories(out_dir / "per_subject");
  write_text(out_dir / "report.txt", format_report_text(report));
  write_text(out_dir / "report.tsv", format_report_tsv(report));
  write_text(out_dir / "report.json", format_report_json(report));
  for (const SubsetResult& r : report.rows) {
    write_text(out_dir / "confusion" / (r.label + ".csv"), confusion_csv(r.confusion));
    std::string subjects = "subject,mean,std\n";
    for (const auto& [subject, st] : r.per_subject) {
      subjects += std::to_string(subject) + ',' + fmt(st.mean) + ',' +
                  (st.stddev ? fmt(*st.stddev) : "") + '\n';
    }
    write_text(out_dir / "per_subject" / (r.label + ".csv"), subjects);
  }
}

#define MVLIP_INSTANTIATE(T)                                                                   \
  template Matrix<T> stack_frames<T>(const std::vector<Example<T>>&, ViewId);                  \
  template PretrainResult<T> pretrain_view<T>(const DatasetSplits<T>&, const ModelConfig&,     \
                                              ViewId, const CdConfig&, Rng&);                  \
  template StreamRun<T> run_single_stream<T>(const PipelineConfig&, const DatasetSplits<T>&,   \
                                             ViewId, std::uint64_t);                           \
  template FusedRun<T> run_fusion<T>(const PipelineConfig&, const DatasetSplits<T>&,           \
                                     const std::map<ViewId, StreamParams<T>>&,                 \
                                     const std::vector<ViewId>&, std::uint64_t);               \
  template SweepReport run_sweep<T>(const SweepSpec&, const DatasetSplits<T>&,                 \
                                    const std::filesystem::path&,                              \
                                    const std::function<void(const std::string&)>&);

MVLIP_INSTANTIATE(float)
MVLIP_INSTANTIATE(double)

}  // namespace mvlip
