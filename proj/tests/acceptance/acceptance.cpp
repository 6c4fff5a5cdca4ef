// Copyright 2026 The mvlip Authors
// SPDX-License-Identifier: Apache-2.0

// Acceptance checks. Prints one PASS/FAIL line per criterion and exits
// non-zero if any fails. Arguments select a subset, e.g. `acceptance 2 6`.

#include <sys/wait.h>
#include <unistd.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iterator>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "mvlip/checkpoint.hpp"
#include "mvlip/data.hpp"
#include "mvlip/gradcheck.hpp"
#include "mvlip/metrics.hpp"
#include "mvlip/net.hpp"
#include "mvlip/rbm.hpp"
#include "mvlip/sweep.hpp"
#include "mvlip/synth.hpp"
#include "mvlip/train.hpp"

namespace fs = std::filesystem;
using namespace mvlip;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("mvlip_acceptance_" + std::to_string(::getpid())) / name;
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void spit(const fs::path& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

int run_cli(const std::string& args) {
  const std::string cmd = std::string(MVLIP_CLI) + " " + args + " > /dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

// Model and training settings for the synthetic tasks: the full-size
// encoder would take hours per run on one core.
PipelineConfig synthetic_pipeline(const DatasetManifest& m) {
  PipelineConfig p;
  p.model.frame_sizes = m.view_sizes;
  p.model.num_classes = m.num_classes;
  p.model.encoder_sizes = {64, 32, 16};
  p.model.bottleneck_dim = 8;
  p.model.stream_hidden = 16;
  p.model.fusion_hidden = 16;
  p.pretrain = false;
  p.train.lr_single = 1e-3;
  p.train.lr_fusion = 3e-4;
  p.train.max_epochs = 60;
  return p;
}

// ---------------------------------------------------------------------------

Outcome gradient_checks() {
  const GradcheckReport r = run_gradcheck(GradcheckConfig{});
  std::set<std::uint64_t> seeds;
  for (const auto& c : r.cases) seeds.insert(c.seed);
  Outcome o;
  o.pass = r.passed && r.max_rel_error < 1e-5 && seeds.size() >= 20;
  o.detail = "max rel error " + fmt("%.2e", r.max_rel_error) + " over " +
             std::to_string(r.cases.size()) + " cases, " + std::to_string(seeds.size()) +
             " seeds, " + std::to_string(r.entries) + " entries, " +
             std::to_string(r.skipped_kinks) + " skipped at relu kinks";
  return o;
}

std::size_t ref_majority(const std::vector<std::size_t>& v) {
  std::size_t best = 0, best_count = 0;
  for (std::size_t c = 0; c < 16; ++c) {
    const auto n = static_cast<std::size_t>(std::count(v.begin(), v.end(), c));
    if (n > best_count) {
      best = c;
      best_count = n;
    }
  }
  return best;
}

// Recomputes the stop decision from the full history at every epoch.
std::pair<std::size_t, std::size_t> ref_early_stop(const std::vector<double>& losses, std::size_t delay) {
  for (std::size_t e = 1; e <= losses.size(); ++e) {
    std::size_t best = 1;
    for (std::size_t i = 2; i <= e; ++i) {
      bool strictly_lower = true;
      for (std::size_t j = 1; j < i; ++j) strictly_lower = strictly_lower && losses[i - 1] < losses[j - 1];
      if (strictly_lower) best = i;
    }
    if (e - best >= delay) return {e, best};
  }
  std::size_t best = 1;
  for (std::size_t i = 2; i <= losses.size(); ++i) {
    if (losses[i - 1] < *std::min_element(losses.begin(), losses.begin() + static_cast<long>(i - 1))) best = i;
  }
  return {0, best};
}

Outcome exact_oracles() {
  double delta_err = 0.0;
  for (std::size_t window : {1u, 2u, 3u}) {
    for (int T : {1, 3, 8, 15}) {
      const MatrixD c = MatrixD::Constant(T, 4, 2.25);
      const MatrixD out = delta_features(c, DeltaConfig{window});
      delta_err = std::max(delta_err, out.rightCols(8).cwiseAbs().maxCoeff());
      delta_err = std::max(delta_err, (out.leftCols(4) - c).cwiseAbs().maxCoeff());
    }
  }
  {
    const int T = 14;
    MatrixD ramp(T, 2);
    for (int t = 0; t < T; ++t) ramp.row(t) << 0.4 * t, -1.5 * t;
    const MatrixD out = delta_features(ramp, DeltaConfig{2});
    for (int t = 2; t < T - 2; ++t) {
      delta_err = std::max({delta_err, std::abs(out(t, 2) - 0.4), std::abs(out(t, 3) + 1.5)});
    }
    for (int t = 4; t < T - 4; ++t) {
      delta_err = std::max({delta_err, std::abs(out(t, 4)), std::abs(out(t, 5))});
    }
  }

  Rng rng(2026);
  std::size_t mismatches = 0;
  for (int i = 0; i < 1000; ++i) {
    std::vector<std::size_t> frames(1 + rng.below(12));
    for (auto& f : frames) f = rng.below(4);
    if (majority_vote(frames) != ref_majority(frames)) ++mismatches;
  }
  for (int i = 0; i < 1000; ++i) {
    const std::size_t n = 1 + rng.below(30), k = 2 + rng.below(5);
    std::vector<std::size_t> labels(n), pred(n);
    for (std::size_t j = 0; j < n; ++j) {
      labels[j] = rng.below(k);
      pred[j] = rng.below(k);
    }
    std::size_t hits = 0;
    for (std::size_t j = 0; j < n; ++j) hits += labels[j] == pred[j];
    if (utterance_accuracy(pred, labels) != static_cast<double>(hits) / static_cast<double>(n)) ++mismatches;
    const ConfusionMatrix cm = confusion_matrix(pred, labels, k);
    for (std::size_t a = 0; a < k; ++a) {
      for (std::size_t b = 0; b < k; ++b) {
        std::size_t count = 0;
        for (std::size_t j = 0; j < n; ++j) count += labels[j] == a && pred[j] == b;
        if (cm.at(a, b) != count) ++mismatches;
      }
    }
  }
  for (int i = 0; i < 1000; ++i) {
    const std::size_t delay = 1 + rng.below(5);
    std::vector<double> losses(1 + rng.below(25));
    // Small integer levels so ties happen often.
    for (auto& l : losses) l = static_cast<double>(rng.below(6));
    EarlyStopper stopper(delay);
    std::size_t stopped = 0;
    for (std::size_t e = 0; e < losses.size() && stopped == 0; ++e) {
      if (stopper.update(losses[e])) stopped = e + 1;
    }
    const auto [ref_stop, ref_best] = ref_early_stop(losses, delay);
    if (stopped != ref_stop || stopper.best_epoch() != ref_best) ++mismatches;
  }

  Outcome o;
  o.pass = delta_err <= 1e-12 && mismatches == 0;
  o.detail = "delta max error " + fmt("%.1e", delta_err) + ", " + std::to_string(mismatches) +
             " mismatches in 4000 brute-force instances";
  return o;
}

Outcome rbm_trend() {
  constexpr std::size_t kDim = 50, kSamples = 2000, kComponents = 4, kHidden = 100;
  int improved = 0;
  std::string errs;
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    Rng rng(seed);
    MatrixD centers(kComponents, kDim);
    for (Eigen::Index i = 0; i < centers.size(); ++i) centers.data()[i] = 1.5 * rng.normal();
    MatrixD x(kSamples, kDim);
    for (std::size_t i = 0; i < kSamples; ++i) {
      x.row(i) = centers.row(static_cast<Eigen::Index>(rng.below(kComponents)));
      for (std::size_t j = 0; j < kDim; ++j) x(i, j) += 0.5 * rng.normal();
    }
    x.rowwise() -= x.colwise().mean();
    const RowVector<double> sd = (x.colwise().squaredNorm() / double(kSamples)).cwiseSqrt();
    x.array().rowwise() /= sd.array();

    auto rbm = make_rbm<double>(kDim, kHidden, HiddenKind::noisy_relu, CdConfig{}.init_stddev, rng);
    const auto e = train_rbm(rbm, x, CdConfig{}, rng);
    if (e.back() < e.front()) ++improved;
    if (seed <= 3) errs += (errs.empty() ? "" : ", ") + fmt("%.3f", e.front()) + "->" + fmt("%.3f", e.back());
  }
  Outcome o;
  o.pass = improved >= 9;
  o.detail = std::to_string(improved) + "/10 seeds reduced reconstruction error (first seeds: " + errs + ")";
  return o;
}

Outcome single_stream() {
  const fs::path dir = scratch("separable");
  SynthConfig synth;  // separable, 10 classes, 20/5/10 subjects, 3 takes, 29x50
  synth.seed = 1;
  const DatasetManifest m = synth_generate(synth, dir);
  const ViewId v0 = ViewId::from_degrees(0);
  const DatasetSplits<float> data = load_dataset<float>(m, {v0});
  PipelineConfig p = synthetic_pipeline(m);
  p.model.views = {v0};

  int reached = 0;
  std::string accs;
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    const StreamRun<float> run = run_single_stream<float>(p, data, v0, seed);
    const double acc = run.record.test->accuracy;
    if (acc >= 0.95) ++reached;
    accs += (accs.empty() ? "" : " ") + fmt("%.3f", acc);
  }
  fs::remove_all(dir);
  Outcome o;
  o.pass = reached >= 8;
  o.detail = std::to_string(reached) + "/10 seeds >= 95% test accuracy (" + accs + "; template oracle " +
             fmt("%.3f", *m.oracle("view:0")) + ")";
  return o;
}

Outcome fusion_gain() {
  const fs::path dir = scratch("complementary");
  SynthConfig synth;
  synth.mode = SynthMode::complementary;
  synth.views = parse_views("0,90");
  synth.seed = 1;
  const DatasetManifest m = synth_generate(synth, dir);
  const DatasetSplits<float> data = load_dataset<float>(m, synth.views);

  SweepSpec spec;
  spec.subsets = {parse_views("0"), parse_views("90"), parse_views("0,90")};
  spec.runs = 5;
  spec.base_seed = 1;
  spec.pipeline = synthetic_pipeline(m);
  const SweepReport report = run_sweep<float>(spec, data);
  fs::remove_all(dir);

  const SubsetResult* best_single = nullptr;
  const SubsetResult* fused = nullptr;
  for (const auto& row : report.rows) {
    if (row.views.size() == 1 && (!best_single || row.stats.mean > best_single->stats.mean)) best_single = &row;
    if (row.views.size() == 2) fused = &row;
  }
  const double gain = fused->stats.mean - best_single->stats.mean;
  const SignificanceResult sig = significance_test(fused->test_accuracy, best_single->test_accuracy);
  Outcome o;
  o.pass = gain >= 0.02 && sig.significant;
  o.detail = "fused " + fmt("%.2f%%", 100 * fused->stats.mean) + " vs best single view (" +
             best_single->label + ") " + fmt("%.2f%%", 100 * best_single->stats.mean) + ", gain " +
             fmt("%.2f", 100 * gain) + " points, Welch p " + fmt("%.2e", sig.welch_p);
  return o;
}

Outcome protocol_arithmetic() {
  DatasetManifest m;
  const ViewId v0 = ViewId::from_degrees(0);
  m.view_sizes[v0] = roi_size(v0);
  for (std::uint32_t s = 1; s <= 52; ++s) {
    for (std::uint16_t c = 0; c < 10; ++c) {
      for (std::uint16_t t = 1; t <= 3; ++t) {
        m.entries.push_back({"u" + std::to_string(m.entries.size()), s, c, v0, t, Split::unassigned});
      }
    }
  }
  const DatasetManifest split = split_subjects(m, 35, 5, 12, 2026);
  std::vector<std::size_t> labels, predicted;
  Rng rng(7);
  for (const auto& e : split.entries) {
    if (e.split != Split::test) continue;
    labels.push_back(e.label);
    predicted.push_back(rng.below(10));
  }
  const ConfusionMatrix cm = confusion_matrix(predicted, labels, 10);
  bool rows_ok = true;
  for (std::size_t c = 0; c < 10; ++c) rows_ok = rows_ok && cm.row_sum(c) == 36;
  const std::size_t tr = split.count(Split::train), va = split.count(Split::val), te = split.count(Split::test);
  Outcome o;
  o.pass = tr == 1050 && va == 150 && te == 360 && rows_ok && split.subjects(Split::test).size() == 12;
  o.detail = std::to_string(tr) + "/" + std::to_string(va) + "/" + std::to_string(te) +
             " utterances, confusion rows " + (rows_ok ? "all 36" : "not all 36");
  return o;
}

std::map<std::string, std::string> tree_bytes(const fs::path& root) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(root)) {
    if (e.is_regular_file()) out[fs::relative(e.path(), root).string()] = slurp(e.path());
  }
  return out;
}

Outcome determinism() {
  const fs::path dir = scratch("determinism");
  const std::string small =
      " --set model.encoder_sizes=16,8,8 --set model.bottleneck=4 --set model.stream_hidden=4"
      " --set model.fusion_hidden=4 --set rbm.epochs=2 --set train.max_epochs=4 --set sweep.runs=3"
      " --set seed=77";
  int code = run_cli("synth -o " + (dir / "data").string() +
                     " --set synth.views=0,90 --set synth.mode=complementary --set synth.scale=0.3"
                     " --set synth.train_subjects=4 --set synth.val_subjects=2 --set synth.test_subjects=2");
  const std::string manifest = (dir / "data" / "manifest.tsv").string();
  for (const char* name : {"a", "b"}) {
    if (code == 0) code = run_cli("sweep -d " + manifest + " -o " + (dir / name).string() + small);
  }
  Outcome o;
  if (code != 0) {
    o.detail = "cli exited with " + std::to_string(code);
    return o;
  }
  const auto a = tree_bytes(dir / "a");
  const auto b = tree_bytes(dir / "b");
  std::size_t ckpts = 0;
  for (const auto& [name, bytes] : a) ckpts += fs::path(name).extension() == ".mvlm";
  fs::remove_all(dir);
  o.pass = a == b && ckpts > 0 && a.contains("report.json");
  o.detail = std::to_string(a.size()) + " files (" + std::to_string(ckpts) + " checkpoints) " +
             (a == b ? "bitwise identical" : "differ");
  return o;
}

template <typename Model>
bool same_tensors(Model& a, Model& b) {
  bool same = true;
  for_each_tensor(
      [&](const std::string&, TensorInfo, const auto& x, const auto& y) {
        same = same && x.rows() == y.rows() && x.cols() == y.cols() &&
               std::memcmp(x.data(), y.data(), sizeof(*x.data()) * x.size()) == 0;
      },
      a, b);
  return same;
}

template <typename T>
bool model_round_trip(const fs::path& dir, Rng& rng) {
  fs::create_directories(dir);
  ModelConfig cfg;
  cfg.views = parse_views("0,45,90");
  cfg.encoder_sizes = {12, 8, 6};
  cfg.bottleneck_dim = 4;
  cfg.stream_hidden = 3;
  cfg.fusion_hidden = 5;
  std::map<ViewId, StreamParams<T>> streams;
  for (ViewId v : cfg.views) streams.emplace(v, build_stream<T>(cfg, v, std::nullopt, rng));
  auto mv = build_multiview<T>(streams, cfg, rng);
  auto stream = streams.begin()->second;
  save_checkpoint(mv, dir / "mv.mvlm");
  save_checkpoint(stream, dir / "s.mvlm");
  auto mv_back = load_multiview<T>(dir / "mv.mvlm");
  auto s_back = load_stream<T>(dir / "s.mvlm");
  save_checkpoint(mv_back, dir / "mv2.mvlm");
  return same_tensors(mv, mv_back) && same_tensors(stream, s_back) &&
         slurp(dir / "mv.mvlm") == slurp(dir / "mv2.mvlm");
}

Outcome round_trips() {
  const fs::path dir = scratch("roundtrip");
  Rng rng(99);
  bool ok = model_round_trip<float>(dir / "f32", rng) && model_round_trip<double>(dir / "f64", rng);

  SynthConfig synth;
  synth.views = parse_views("0,30");
  synth.scale = 0.3;
  synth.train_subjects = 2;
  synth.val_subjects = 1;
  synth.test_subjects = 1;
  synth.seed = 3;
  const DatasetManifest m = synth_generate(synth, dir / "data");
  for (const auto& e : m.entries) {
    const Utterance u = read_utterance(m.root / e.path);
    write_utterance(u, dir / "copy.mvlu");
    ok = ok && slurp(dir / "copy.mvlu") == slurp(m.root / e.path);
  }
  write_manifest(read_manifest(dir / "data" / "manifest.tsv"), dir / "copy.tsv");
  ok = ok && slurp(dir / "copy.tsv") == slurp(dir / "data" / "manifest.tsv");

  // Each corruption must map to its own error code.
  const std::string utt = slurp(m.root / m.entries.front().path);
  // Float checkpoint, read back as double below.
  const std::string ckpt = slurp(dir / "f32" / "s.mvlm");
  auto code = [&](const std::string& bytes, bool checkpoint) -> std::string {
    const fs::path p = dir / (checkpoint ? "bad.mvlm" : "bad.mvlu");
    spit(p, bytes);
    try {
      if (checkpoint) {
        load_stream<double>(p);
      } else {
        read_utterance(p);
      }
    } catch (const FormatError& e) {
      return to_string(e.code());
    }
    return "none";
  };
  auto patched = [](std::string s, std::size_t at, char c) {
    s[at] = c;
    return s;
  };
  const std::vector<std::pair<std::string, std::string>> cases{
      {to_string(FormatErrc::bad_magic), code(patched(utt, 0, 'X'), false)},
      {to_string(FormatErrc::unsupported_version), code(patched(utt, 4, 7), false)},
      {to_string(FormatErrc::invalid_view), code(patched(utt, 12, 17), false)},
      {to_string(FormatErrc::truncated), code(utt.substr(0, utt.size() - 1), false)},
      {to_string(FormatErrc::malformed), code(utt + "!", false)},
      {to_string(FormatErrc::bad_magic), code(patched(ckpt, 3, 'X'), true)},
      {to_string(FormatErrc::unsupported_version), code(patched(ckpt, 4, 3), true)},
      {to_string(FormatErrc::truncated), code(ckpt.substr(0, ckpt.size() / 2), true)},
      {to_string(FormatErrc::precision_mismatch), code(ckpt, true)},
  };
  std::size_t wrong = 0;
  std::string misses;
  for (const auto& [want, got] : cases) {
    if (want != got) {
      ++wrong;
      misses += " " + want + "->" + got;
    }
  }
  spit(dir / "bad.mvlm", patched(ckpt, 0, 'X'));
  const int exit_code = run_cli("eval -d " + (dir / "data" / "manifest.tsv").string() + " -m " +
                                (dir / "bad.mvlm").string() + " -o " + (dir / "eval").string());
  fs::remove_all(dir);
  Outcome o;
  o.pass = ok && wrong == 0 && exit_code == 2;
  o.detail = std::string(ok ? "round trips bitwise" : "round trip mismatch") + ", " +
             std::to_string(cases.size() - wrong) + "/" + std::to_string(cases.size()) +
             " corruptions gave the expected code" + misses + ", cli exit " + std::to_string(exit_code);
  return o;
}

struct Criterion {
  int id;
  const char* name;
  double budget_seconds;
  std::function<Outcome()> check;
};

}  // namespace

int main(int argc, char** argv) {
  const std::vector<Criterion> criteria{
      {1, "gradient checks", 120, gradient_checks},
      {2, "exact oracles", 60, exact_oracles},
      {3, "rbm reconstruction trend", 180, rbm_trend},
      {4, "single-stream synthetic task", 900, single_stream},
      {5, "fusion beats single view", 1800, fusion_gain},
      {6, "protocol arithmetic", 60, protocol_arithmetic},
      {7, "sweep determinism", 600, determinism},
      {8, "round trips and error codes", 60, round_trips},
  };
  std::set<int> selected;
  for (int i = 1; i < argc; ++i) selected.insert(std::atoi(argv[i]));

  int failures = 0;
  for (const Criterion& c : criteria) {
    if (!selected.empty() && !selected.contains(c.id)) continue;
    const auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.check();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    const bool in_time = secs <= c.budget_seconds;
    const bool pass = o.pass && in_time;
    failures += !pass;
    std::printf("criterion %d %-30s %s  %s  [%.1fs of %.0fs]\n", c.id, c.name, pass ? "PASS" : "FAIL",
                o.detail.c_str(), secs, c.budget_seconds);
    std::fflush(stdout);
  }
  std::error_code ec;
  fs::remove_all(fs::temp_directory_path() / ("mvlip_acceptance_" + std::to_string(::getpid())), ec);
  return failures == 0 ? 0 : 1;
}
