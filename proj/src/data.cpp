// Copyright 2026 The mvlip Authors
// SPDX-License-Identifier: Apache-2.0

#include "mvlip/data.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <set>
#include <sstream>
#include <tuple>

#include "mvlip/rng.hpp"

namespace mvlip {

namespace {

static_assert(std::endian::native == std::endian::little);

template <typename U>
void put(std::vector<char>& buf, U v) {
  const char* p = reinterpret_cast<const char*>(&v);
  buf.insert(buf.end(), p, p + sizeof v);
}

template <typename U>
U get(const std::vector<char>& buf, std::size_t offset) {
  U v;
  std::memcpy(&v, buf.data() + offset, sizeof v);
  return v;
}

std::vector<std::string> split_tabs(const std::string& line) {
  std::vector<std::string> fields;
  std::string field;
  std::istringstream in(line);
  while (std::getline(in, field, '\t')) fields.push_back(field);
  return fields;
}

template <typename U>
U parse_uint(const std::string& text, const std::string& what) {
  std::size_t used = 0;
  unsigned long long v = 0;
  try {
    v = std::stoull(text, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used != text.size() || text.empty() || text[0] == '-' || v > std::numeric_limits<U>::max()) {
    throw DataError("manifest: cannot parse " + what + " '" + text + "'");
  }
  return static_cast<U>(v);
}

}  // namespace

void write_utterance(const Utterance& utt, const std::filesystem::path& path) {
  if (static_cast<std::size_t>(utt.frames.cols()) != utt.size.pixels()) {
    throw InvalidArgument("write_utterance: frame width does not match H x W");
  }
  if (utt.frames.rows() == 0) throw InvalidArgument("write_utterance: no frames");
  std::vector<char> buf;
  buf.reserve(kUtteranceHeaderBytes + utt.frames.size() * 4);
  buf.insert(buf.end(), kUtteranceMagic, kUtteranceMagic + 4);
  put<std::uint16_t>(buf, kUtteranceVersion);
  put<std::uint32_t>(buf, utt.subject);
  put<std::uint16_t>(buf, utt.label);
  put<std::uint16_t>(buf, static_cast<std::uint16_t>(utt.view.degrees()));
  put<std::uint16_t>(buf, utt.take);
  put<std::uint32_t>(buf, static_cast<std::uint32_t>(utt.frames.rows()));
  put<std::uint16_t>(buf, static_cast<std::uint16_t>(utt.size.height));
  put<std::uint16_t>(buf, static_cast<std::uint16_t>(utt.size.width));
  const char* data = reinterpret_cast<const char*>(utt.frames.data());
  buf.insert(buf.end(), data, data + utt.frames.size() * sizeof(float));
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError(FormatErrc::io, 0, "cannot write " + path.string());
  out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
  if (!out) throw FormatError(FormatErrc::io, 0, "write failed for " + path.string());
}

Utterance read_utterance(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError(FormatErrc::io, 0, "cannot open " + path.string());
  const std::vector<char> buf((std::istreambuf_iterator<char>(in)), {});
  if (buf.size() < 4) {
    throw FormatError(FormatErrc::truncated, buf.size(),
                      "header needs " + std::to_string(kUtteranceHeaderBytes) + " bytes, file has " +
                          std::to_string(buf.size()));
  }
  for (std::size_t i = 0; i < 4; ++i) {
    if (buf[i] != kUtteranceMagic[i]) {
      throw FormatError(FormatErrc::bad_magic, i, "expected \"MVLU\" in " + path.string());
    }
  }
  if (buf.size() < kUtteranceHeaderBytes) {
    throw FormatError(FormatErrc::truncated, buf.size(),
                      "header needs " + std::to_string(kUtteranceHeaderBytes) + " bytes, file has " +
                          std::to_string(buf.size()));
  }
  const auto version = get<std::uint16_t>(buf, 4);
  if (version != kUtteranceVersion) {
    throw FormatError(FormatErrc::unsupported_version, 4,
                      "version " + std::to_string(version) + ", expected " +
                          std::to_string(kUtteranceVersion));
  }
  Utterance utt;
  utt.subject = get<std::uint32_t>(buf, 6);
  utt.label = get<std::uint16_t>(buf, 10);
  const auto angle = get<std::uint16_t>(buf, 12);
  if (!ViewId::is_valid(angle)) {
    throw FormatError(FormatErrc::invalid_view, 12,
                      "view angle " + std::to_string(angle) + " is not one of 0, 30, 45, 60, 90");
  }
  utt.view = ViewId::from_degrees(angle);
  utt.take = get<std::uint16_t>(buf, 14);
  const auto frames = get<std::uint32_t>(buf, 16);
  utt.size.height = get<std::uint16_t>(buf, 20);
  utt.size.width = get<std::uint16_t>(buf, 22);
  if (frames == 0 || utt.size.pixels() == 0) {
    throw FormatError(FormatErrc::malformed, 16, "empty frame stack");
  }
  const std::uint64_t expected =
      kUtteranceHeaderBytes + std::uint64_t{frames} * utt.size.pixels() * sizeof(float);
  if (buf.size() < expected) {
    throw FormatError(FormatErrc::truncated, buf.size(),
                      "expected " + std::to_string(expected) + " bytes, got " +
                          std::to_string(buf.size()));
  }
  if (buf.size() > expected) {
    throw FormatError(FormatErrc::malformed, expected, "trailing bytes after pixel data");
  }
  utt.frames.resize(frames, static_cast<Eigen::Index>(utt.size.pixels()));
  std::memcpy(utt.frames.data(), buf.data() + kUtteranceHeaderBytes,
              utt.frames.size() * sizeof(float));
  return utt;
}

std::string to_string(Split split) {
  switch (split) {
    case Split::train: return "train";
    case Split::val: return "val";
    case Split::test: return "test";
    case Split::unassigned: break;
  }
  return "-";
}

Split parse_split(const std::string& text) {
  if (text == "train") return Split::train;
  if (text == "val") return Split::val;
  if (text == "test") return Split::test;
  if (text == "-" || text.empty()) return Split::unassigned;
  throw DataError("manifest: unknown split '" + text + "'");
}

std::vector<std::uint32_t> DatasetManifest::subjects() const {
  std::set<std::uint32_t> s;
  for (const auto& e : entries) s.insert(e.subject);
  return {s.begin(), s.end()};
}

std::vector<std::uint32_t> DatasetManifest::subjects(Split split) const {
  std::set<std::uint32_t> s;
  for (const auto& e : entries) {
    if (e.split == split) s.insert(e.subject);
  }
  return {s.begin(), s.end()};
}

std::vector<ViewId> DatasetManifest::views() const {
  std::set<ViewId> s;
  for (const auto& e : entries) s.insert(e.view);
  return {s.begin(), s.end()};
}

std::size_t DatasetManifest::count(Split split) const {
  return static_cast<std::size_t>(
      std::count_if(entries.begin(), entries.end(), [&](const auto& e) { return e.split == split; }));
}

std::size_t DatasetManifest::count(Split split, ViewId view) const {
  return static_cast<std::size_t>(std::count_if(entries.begin(), entries.end(), [&](const auto& e) {
    return e.split == split && e.view == view;
  }));
}

std::optional<double> DatasetManifest::oracle(const std::string& name) const {
  for (const auto& [n, acc] : oracle_accuracies) {
    if (n == name) return acc;
  }
  return std::nullopt;
}

void DatasetManifest::validate() const {
  std::map<std::uint32_t, Split> subject_split;
  std::set<std::tuple<int, std::uint32_t, std::uint16_t, std::uint16_t>> seen;
  for (std::size_t i = 0; i < entries.size(); ++i) {
    const ManifestEntry& e = entries[i];
    const std::string row = "manifest row " + std::to_string(i + 1) + " (" + e.path + ")";
    if (e.label >= num_classes) {
      throw DataError(row + ": label " + std::to_string(e.label) + " outside " +
                      std::to_string(num_classes) + " classes");
    }
    if (!view_sizes.contains(e.view)) {
      throw DataError(row + ": view " + to_string(e.view) + " has no declared frame size");
    }
    if (!seen.insert({e.view.degrees(), e.subject, e.label, e.take}).second) {
      throw DataError(row + ": duplicate (subject, label, take) for view " + to_string(e.view));
    }
    const auto [it, inserted] = subject_split.emplace(e.subject, e.split);
    if (!inserted && it->second != e.split) {
      throw DataError(row + ": subject " + std::to_string(e.subject) + " appears in both " +
                      to_string(it->second) + " and " + to_string(e.split));
    }
  }
}

void write_manifest(const DatasetManifest& manifest, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw DataError("cannot write manifest " + path.string());
  out << "# mvlip manifest v1\n";
  out << "#classes\t" << manifest.num_classes << '\n';
  for (const auto& [view, size] : manifest.view_sizes) {
    out << "#view\t" << view.degrees() << '\t' << size.height << '\t' << size.width << '\n';
  }
  char buf[64];
  for (const auto& [name, acc] : manifest.oracle_accuracies) {
    std::snprintf(buf, sizeof buf, "%.6f", acc);
    out << "#oracle\t" << name << '\t' << buf << '\n';
  }
  out << "path\tsubject\tlabel\tview\ttake\tsplit\n";
  for (const auto& e : manifest.entries) {
    out << e.path << '\t' << e.subject << '\t' << e.label << '\t' << e.view.degrees() << '\t'
        << e.take << '\t' << to_string(e.split) << '\n';
  }
  if (!out) throw DataError("write failed for manifest " + path.string());
}

DatasetManifest read_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open manifest " + path.string());
  DatasetManifest m;
  m.root = path.parent_path();
  std::string line;
  bool header_seen = false;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const std::vector<std::string> f = split_tabs(line);
    const std::string where = path.string() + ":" + std::to_string(line_no);
    if (line[0] == '#') {
      if (f[0] == "#classes" && f.size() == 2) {
        m.num_classes = parse_uint<std::uint32_t>(f[1], "class count");
      } else if (f[0] == "#view" && f.size() == 4) {
        const int angle = parse_uint<std::uint16_t>(f[1], "view");
        if (!ViewId::is_valid(angle)) throw DataError(where + ": invalid view " + f[1]);
        m.view_sizes[ViewId::from_degrees(angle)] = {parse_uint<std::uint16_t>(f[2], "height"),
                                                     parse_uint<std::uint16_t>(f[3], "width")};
      } else if (f[0] == "#oracle" && f.size() == 3) {
        m.oracle_accuracies.emplace_back(f[1], std::stod(f[2]));
      }
      continue;
    }
    if (!header_seen) {
      const std::vector<std::string> expected{"path", "subject", "label", "view", "take", "split"};
      if (f != expected) throw DataError(where + ": expected column header");
      header_seen = true;
      continue;
    }
    if (f.size() != 6) {
      throw DataError(where + ": expected 6 columns, found " + std::to_string(f.size()));
    }
    ManifestEntry e;
    e.path = f[0];
    e.subject = parse_uint<std::uint32_t>(f[1], "subject");
    e.label = parse_uint<std::uint16_t>(f[2], "label");
    const int angle = parse_uint<std::uint16_t>(f[3], "view");
    if (!ViewId::is_valid(angle)) throw DataError(where + ": invalid view " + f[3]);
    e.view = ViewId::from_degrees(angle);
    e.take = parse_uint<std::uint16_t>(f[4], "take");
    e.split = parse_split(f[5]);
    m.entries.push_back(std::move(e));
  }
  if (!header_seen) throw DataError(path.string() + ": missing column header");
  m.validate();
  return m;
}

template <typename T>
Matrix<T> preprocess(const Utterance& utt) {
  if (utt.frames.rows() == 0) throw InvalidArgument("preprocess: utterance has no frames");
  const MatrixD frames = utt.frames.cast<double>();
  const RowVector<double> mean_image = frames.colwise().mean();
  MatrixD centred = frames.rowwise() - mean_image;
  const double n = static_cast<double>(centred.cols());
  for (Eigen::Index t = 0; t < centred.rows(); ++t) {
    auto row = centred.row(t);
    const double mu = row.mean();
    row.array() -= mu;
    const double sd = std::sqrt(row.squaredNorm() / n);
    row /= std::max(sd, kStddevFloor);
  }
  return centred.cast<T>();
}

template Matrix<float> preprocess<float>(const Utterance&);
template Matrix<double> preprocess<double>(const Utterance&);

DatasetManifest split_subjects(const DatasetManifest& manifest, std::size_t n_train,
                               std::size_t n_val, std::size_t n_test, std::uint64_t seed) {
  DatasetManifest out = manifest;
  const std::vector<std::uint32_t> all = manifest.subjects();
  std::vector<std::uint32_t> test = manifest.subjects(Split::test);
  if (all.size() < n_train + n_val + n_test) {
    throw InvalidArgument("split_subjects: " + std::to_string(all.size()) +
                          " subjects, need at least " +
                          std::to_string(n_train + n_val + n_test));
  }
  Rng rng(seed);
  std::vector<std::uint32_t> pool;
  if (!test.empty()) {
    if (test.size() != n_test) {
      throw InvalidArgument("split_subjects: manifest designates " + std::to_string(test.size()) +
                            " test subjects, expected " + std::to_string(n_test));
    }
    std::set_difference(all.begin(), all.end(), test.begin(), test.end(),
                        std::back_inserter(pool));
    rng.shuffle(pool);
  } else {
    pool = all;
    rng.shuffle(pool);
    test.assign(pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(n_test));
    pool.erase(pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(n_test));
  }
  const std::set<std::uint32_t> test_set(test.begin(), test.end());
  const std::set<std::uint32_t> val_set(pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(n_val));
  for (auto& e : out.entries) {
    e.split = test_set.contains(e.subject)  ? Split::test
              : val_set.contains(e.subject) ? Split::val
                                            : Split::train;
  }
  out.validate();
  return out;
}

template <typename T>
DatasetSplits<T> load_dataset(const DatasetManifest& manifest, const std::vector<ViewId>& views) {
  manifest.validate();
  if (views.empty()) throw InvalidArgument("load_dataset: no views requested");
  const std::set<ViewId> wanted(views.begin(), views.end());
  const std::vector<ViewId> present = manifest.views();
  for (const ViewId v : views) {
    if (std::find(present.begin(), present.end(), v) == present.end()) {
      throw DataError("dataset has no utterances for view " + to_string(v));
    }
  }
  using Key = std::tuple<std::uint32_t, std::uint16_t, std::uint16_t>;
  std::map<Key, std::pair<Split, Example<T>>> grouped;
  std::map<Key, std::size_t> first_row;
  for (std::size_t i = 0; i < manifest.entries.size(); ++i) {
    const ManifestEntry& e = manifest.entries[i];
    if (!wanted.contains(e.view) || e.split == Split::unassigned) continue;
    const std::string row = "manifest row " + std::to_string(i + 1) + " (" + e.path + ", subject " +
                            std::to_string(e.subject) + ", label " + std::to_string(e.label) +
                            ", view " + to_string(e.view) + ", take " + std::to_string(e.take) +
                            ")";
    const std::filesystem::path file = manifest.root / e.path;
    if (!std::filesystem::exists(file)) throw DataError(row + ": file not found");
    Utterance utt;
    try {
      utt = read_utterance(file);
    } catch (const FormatError& err) {
      throw DataError(row + ": " + err.what());
    }
    if (utt.subject != e.subject || utt.label != e.label || utt.view != e.view ||
        utt.take != e.take) {
      throw DataError(row + ": file header disagrees with manifest");
    }
    if (utt.size != manifest.view_sizes.at(e.view)) {
      throw DataError(row + ": frame size differs from the declared view size");
    }
    const Key key{e.subject, e.label, e.take};
    auto& [split, ex] = grouped[key];
    split = e.split;
    ex.label = e.label;
    ex.subject = e.subject;
    ex.take = e.take;
    ex.views.emplace(e.view, preprocess<T>(utt));
    first_row.try_emplace(key, i + 1);
    if (ex.views.begin()->second.rows() != ex.views.at(e.view).rows()) {
      throw DataError(row + ": frame count differs across views of the same utterance");
    }
  }
  DatasetSplits<T> out;
  out.num_classes = manifest.num_classes;
  for (const ViewId v : views) out.view_sizes[v] = manifest.view_sizes.at(v);
  for (auto& [key, value] : grouped) {
    auto& [split, ex] = value;
    if (ex.views.size() != wanted.size()) {
      throw DataError("manifest row " + std::to_string(first_row.at(key)) + ": subject " +
                      std::to_string(ex.subject) + " label " + std::to_string(ex.label) +
                      " take " + std::to_string(ex.take) + " is missing some requested views");
    }
    (split == Split::train ? out.train : split == Split::val ? out.val : out.test)
        .push_back(std::move(ex));
  }
  return out;
}

template DatasetSplits<float> load_dataset<float>(const DatasetManifest&, const std::vector<ViewId>&);
template DatasetSplits<double> load_dataset<double>(const DatasetManifest&,
                                                    const std::vector<ViewId>&);

}  // namespace mvlip
