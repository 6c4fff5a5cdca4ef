// Copyright 2026 The mvlip Authors
// SPDX-License-Identifier: Apache-2.0

#include "mvlip/config.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <functional>
#include <sstream>

namespace mvlip {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

double to_real(const std::string& key, const std::string& v) {
  double out = 0.0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size() || v.empty()) {
    throw ConfigError(key + ": expected a number, got '" + v + "'");
  }
  return out;
}

std::uint64_t to_count(const std::string& key, const std::string& v) {
  std::uint64_t out = 0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size() || v.empty()) {
    throw ConfigError(key + ": expected a non-negative integer, got '" + v + "'");
  }
  return out;
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw ConfigError(key + ": expected true or false, got '" + v + "'");
}

std::string real_text(double v) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

std::string views_text(const std::vector<ViewId>& views) {
  if (views.empty()) return "all";
  std::string out;
  for (const ViewId v : views) out += (out.empty() ? "" : ",") + std::to_string(v.degrees());
  return out;
}

std::vector<ViewId> views_value(const std::string& key, const std::string& v) {
  if (v == "all") return {};
  try {
    return parse_views(v);
  } catch (const InvalidArgument& e) {
    throw ConfigError(key + ": " + e.what());
  }
}

struct Field {
  const char* key;
  std::function<void(ExperimentConfig&, const std::string&, const std::string&)> set;
  std::function<std::string(const ExperimentConfig&)> get;
};

#define COUNT_FIELD(name, member)                                                         \
  Field {                                                                                 \
    name, [](ExperimentConfig& c, const std::string& k, const std::string& v) {           \
      c.member = static_cast<decltype(c.member)>(to_count(k, v));                         \
    },                                                                                    \
        [](const ExperimentConfig& c) { return std::to_string(c.member); }                \
  }
#define REAL_FIELD(name, member)                                                          \
  Field {                                                                                 \
    name, [](ExperimentConfig& c, const std::string& k, const std::string& v) {           \
      c.member = to_real(k, v);                                                           \
    },                                                                                    \
        [](const ExperimentConfig& c) { return real_text(c.member); }                     \
  }
#define BOOL_FIELD(name, member)                                                          \
  Field {                                                                                 \
    name, [](ExperimentConfig& c, const std::string& k, const std::string& v) {           \
      c.member = to_bool(k, v);                                                           \
    },                                                                                    \
        [](const ExperimentConfig& c) { return std::string(c.member ? "true" : "false"); } \
  }

const std::vector<Field>& fields() {
  static const std::vector<Field> table = {
      Field{"precision",
            [](ExperimentConfig& c, const std::string& k, const std::string& v) {
              try {
                c.precision = parse_precision(v);
              } catch (const InvalidArgument& e) {
                throw ConfigError(k + ": " + e.what());
              }
            },
            [](const ExperimentConfig& c) { return std::string(to_string(c.precision)); }},
      COUNT_FIELD("seed", seed),
      BOOL_FIELD("deterministic", deterministic),
      COUNT_FIELD("jobs", jobs),

      Field{"model.views",
            [](ExperimentConfig& c, const std::string& k, const std::string& v) {
              c.pipeline.model.views = views_value(k, v);
            },
            [](const ExperimentConfig& c) { return views_text(c.pipeline.model.views); }},
      Field{"model.encoder_sizes",
            [](ExperimentConfig& c, const std::string& k, const std::string& v) {
              std::stringstream in(v);
              std::string part;
              std::vector<std::size_t> sizes;
              while (std::getline(in, part, ',')) sizes.push_back(to_count(k, trim(part)));
              if (sizes.size() != 3) throw ConfigError(k + ": expected three comma-separated sizes");
              std::copy(sizes.begin(), sizes.end(), c.pipeline.model.encoder_sizes.begin());
            },
            [](const ExperimentConfig& c) {
              const auto& s = c.pipeline.model.encoder_sizes;
              return std::to_string(s[0]) + "," + std::to_string(s[1]) + "," + std::to_string(s[2]);
            }},
      COUNT_FIELD("model.bottleneck", pipeline.model.bottleneck_dim),
      COUNT_FIELD("model.stream_hidden", pipeline.model.stream_hidden),
      COUNT_FIELD("model.fusion_hidden", pipeline.model.fusion_hidden),
      COUNT_FIELD("model.num_classes", pipeline.model.num_classes),
      COUNT_FIELD("model.delta_window", pipeline.model.delta.window),
      REAL_FIELD("model.forget_bias", pipeline.model.forget_bias),

      BOOL_FIELD("rbm.enabled", pipeline.pretrain),
      COUNT_FIELD("rbm.epochs", pipeline.rbm.epochs),
      COUNT_FIELD("rbm.batch", pipeline.rbm.batch_size),
      REAL_FIELD("rbm.l2", pipeline.rbm.l2),
      REAL_FIELD("rbm.lr", pipeline.rbm.lr),
      COUNT_FIELD("rbm.cd_steps", pipeline.rbm.cd_steps),
      REAL_FIELD("rbm.momentum_early", pipeline.rbm.momentum.early),
      REAL_FIELD("rbm.momentum_late", pipeline.rbm.momentum.late),
      COUNT_FIELD("rbm.momentum_switch", pipeline.rbm.momentum.switch_epoch),
      REAL_FIELD("rbm.init_stddev", pipeline.rbm.init_stddev),

      REAL_FIELD("train.lr_single", pipeline.train.lr_single),
      REAL_FIELD("train.lr_fusion", pipeline.train.lr_fusion),
      COUNT_FIELD("train.batch", pipeline.train.batch_utterances),
      COUNT_FIELD("train.delay", pipeline.train.early_stop_delay),
      REAL_FIELD("train.clip", pipeline.train.clip_magnitude),
      REAL_FIELD("train.beta1", pipeline.train.adam.beta1),
      REAL_FIELD("train.beta2", pipeline.train.adam.beta2),
      REAL_FIELD("train.eps", pipeline.train.adam.eps),
      COUNT_FIELD("train.max_epochs", pipeline.train.max_epochs),

      Field{"synth.mode",
            [](ExperimentConfig& c, const std::string& k, const std::string& v) {
              try {
                c.synth.mode = parse_synth_mode(v);
              } catch (const InvalidArgument& e) {
                throw ConfigError(k + ": " + e.what());
              }
            },
            [](const ExperimentConfig& c) { return to_string(c.synth.mode); }},
      Field{"synth.views",
            [](ExperimentConfig& c, const std::string& k, const std::string& v) {
              c.synth.views = views_value(k, v);
              if (c.synth.views.empty()) {
                const auto all = ViewId::all();
                c.synth.views.assign(all.begin(), all.end());
              }
            },
            [](const ExperimentConfig& c) { return views_text(c.synth.views); }},
      COUNT_FIELD("synth.classes", synth.num_classes),
      COUNT_FIELD("synth.train_subjects", synth.train_subjects),
      COUNT_FIELD("synth.val_subjects", synth.val_subjects),
      COUNT_FIELD("synth.test_subjects", synth.test_subjects),
      COUNT_FIELD("synth.takes", synth.takes),
      COUNT_FIELD("synth.min_frames", synth.min_frames),
      COUNT_FIELD("synth.max_frames", synth.max_frames),
      REAL_FIELD("synth.scale", synth.scale),
      REAL_FIELD("synth.noise", synth.noise),
      REAL_FIELD("synth.variation", synth.variation),

      BOOL_FIELD("split.resplit", resplit),
      COUNT_FIELD("split.train", split_train),
      COUNT_FIELD("split.val", split_val),
      COUNT_FIELD("split.test", split_test),

      Field{"sweep.subsets",
            [](ExperimentConfig& c, const std::string& k, const std::string& v) {
              c.sweep_subsets.clear();
              if (v == "all") return;
              std::stringstream in(v);
              std::string part;
              while (std::getline(in, part, ';')) {
                c.sweep_subsets.push_back(views_value(k, trim(part)));
                if (c.sweep_subsets.back().empty()) throw ConfigError(k + ": empty subset");
              }
            },
            [](const ExperimentConfig& c) {
              if (c.sweep_subsets.empty()) return std::string("all");
              std::string out;
              for (const auto& s : c.sweep_subsets) out += (out.empty() ? "" : ";") + subset_label(s);
              return out;
            }},
      COUNT_FIELD("sweep.runs", sweep_runs),

      COUNT_FIELD("gradcheck.seeds", gradcheck.seeds),
      REAL_FIELD("gradcheck.step", gradcheck.step),
      REAL_FIELD("gradcheck.tolerance", gradcheck.tolerance),
      REAL_FIELD("gradcheck.floor", gradcheck.floor),
  };
  return table;
}

}  // namespace

void ExperimentConfig::set(const std::string& key, const std::string& value) {
  for (const Field& f : fields()) {
    if (key == f.key) {
      f.set(*this, key, trim(value));
      return;
    }
  }
  throw ConfigError("unknown configuration key '" + key + "'");
}

std::string ExperimentConfig::to_text() const {
  std::string out;
  for (const Field& f : fields()) out += std::string(f.key) + " = " + f.get(*this) + '\n';
  return out;
}

void ExperimentConfig::validate() const {
  try {
    pipeline.train.validate();
    pipeline.rbm.validate();
    pipeline.model.delta.validate();
    synth.validate();
  } catch (const InvalidArgument& e) {
    throw ConfigError(e.what());
  }
  if (pipeline.model.bottleneck_dim == 0 || pipeline.model.stream_hidden == 0 ||
      pipeline.model.fusion_hidden == 0 || pipeline.model.num_classes < 2) {
    throw ConfigError("model sizes must be positive and num_classes >= 2");
  }
  for (const std::size_t s : pipeline.model.encoder_sizes) {
    if (s == 0) throw ConfigError("model.encoder_sizes must be positive");
  }
  if (sweep_runs == 0) throw ConfigError("sweep.runs must be >= 1");
  if (jobs == 0) throw ConfigError("jobs must be >= 1");
}

std::vector<std::string> config_keys() {
  std::vector<std::string> keys;
  for (const Field& f : fields()) keys.emplace_back(f.key);
  return keys;
}

void apply_config_text(ExperimentConfig& cfg, const std::string& text, const std::string& source) {
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(source + ":" + std::to_string(line_no) + ": expected key = value");
    }
    try {
      cfg.set(trim(line.substr(0, eq)), line.substr(eq + 1));
    } catch (const ConfigError& e) {
      throw ConfigError(source + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
}

ExperimentConfig load_config(const std::filesystem::path& path,
                             const std::vector<std::string>& overrides) {
  ExperimentConfig cfg;
  if (!path.empty()) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot read config file " + path.string());
    std::stringstream buf;
    buf << in.rdbuf();
    apply_config_text(cfg, buf.str(), path.string());
  }
  for (const std::string& o : overrides) {
    const auto eq = o.find('=');
    if (eq == std::string::npos) throw ConfigError("override '" + o + "' is not key=value");
    cfg.set(trim(o.substr(0, eq)), o.substr(eq + 1));
  }
  cfg.validate();
  return cfg;
}

}  // namespace mvlip
