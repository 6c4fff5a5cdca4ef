// Copyright 2026 The mvlip Authors
// SPDX-License-Identifier: Apache-2.0

#include "mvlip/checkpoint.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <set>

namespace mvlip {

namespace {

static_assert(std::endian::native == std::endian::little,
              "checkpoint and utterance I/O assume a little-endian host");

class Writer {
 public:
  void bytes(const void* p, std::size_t n) {
    const auto* c = static_cast<const char*>(p);
    buf_.insert(buf_.end(), c, c + n);
  }
  template <typename U>
  void pod(U v) {
    bytes(&v, sizeof v);
  }
  const std::vector<char>& buffer() const { return buf_; }

 private:
  std::vector<char> buf_;
};

class Reader {
 public:
  explicit Reader(std::vector<char> data) : data_(std::move(data)) {}

  void bytes(void* out, std::size_t n, const char* what) {
    if (data_.size() - pos_ < n) {
      throw FormatError(FormatErrc::truncated, pos_,
                        std::string("need ") + std::to_string(n) + " bytes for " + what +
                            ", " + std::to_string(data_.size() - pos_) + " available");
    }
    std::memcpy(out, data_.data() + pos_, n);
    pos_ += n;
  }
  template <typename U>
  U pod(const char* what) {
    U v;
    bytes(&v, sizeof v, what);
    return v;
  }
  std::size_t pos() const { return pos_; }
  std::size_t remaining() const { return data_.size() - pos_; }

 private:
  std::vector<char> data_;
  std::size_t pos_ = 0;
};

std::vector<char> slurp(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError(FormatErrc::io, 0, "cannot open " + path.string());
  return std::vector<char>(std::istreambuf_iterator<char>(in), {});
}

template <typename Derived>
TensorRecord make_record(const std::string& name, int rank, const Eigen::MatrixBase<Derived>& t) {
  using T = typename Derived::Scalar;
  TensorRecord r;
  r.name = name;
  if (rank == 2) {
    r.dims = {static_cast<std::uint32_t>(t.rows()), static_cast<std::uint32_t>(t.cols())};
  } else if (rank == 1) {
    r.dims = {static_cast<std::uint32_t>(t.size())};
  }
  r.precision = precision_of<T>();
  r.values.reserve(t.size());
  for (Eigen::Index i = 0; i < t.rows(); ++i) {
    for (Eigen::Index j = 0; j < t.cols(); ++j) r.values.push_back(static_cast<double>(t(i, j)));
  }
  return r;
}

template <typename T>
TensorRecord scalar_record(const std::string& name, double value) {
  TensorRecord r;
  r.name = name;
  r.precision = precision_of<T>();
  r.values = {value};
  return r;
}

template <typename T>
class TensorSource {
 public:
  explicit TensorSource(const Checkpoint& ckpt) : ckpt_(ckpt) {
    if (!ckpt.tensors.empty() && ckpt.precision() != precision_of<T>()) {
      throw FormatError(FormatErrc::precision_mismatch, 0,
                        "checkpoint holds " + std::string(to_string(ckpt.precision())) +
                            " tensors, requested " +
                            std::string(to_string(precision_of<T>())));
    }
  }

  bool has(const std::string& name) const { return ckpt_.find(name) != nullptr; }

  const TensorRecord& get(const std::string& name) const {
    const TensorRecord* r = ckpt_.find(name);
    if (!r) throw FormatError(FormatErrc::malformed, 0, "missing tensor " + name);
    return *r;
  }

  Matrix<T> matrix(const std::string& name) const {
    const TensorRecord& r = get(name);
    if (r.dims.size() != 2) throw FormatError(FormatErrc::malformed, 0, name + " is not rank 2");
    Matrix<T> m(r.dims[0], r.dims[1]);
    std::transform(r.values.begin(), r.values.end(), m.data(),
                   [](double v) { return static_cast<T>(v); });
    return m;
  }

  RowVector<T> vector(const std::string& name) const {
    const TensorRecord& r = get(name);
    if (r.dims.size() != 1) throw FormatError(FormatErrc::malformed, 0, name + " is not rank 1");
    RowVector<T> v(r.dims[0]);
    std::transform(r.values.begin(), r.values.end(), v.data(),
                   [](double x) { return static_cast<T>(x); });
    return v;
  }

  double scalar(const std::string& name) const {
    const TensorRecord& r = get(name);
    if (!r.dims.empty()) throw FormatError(FormatErrc::malformed, 0, name + " is not a scalar");
    return r.values.at(0);
  }

  DenseLayer<T> dense(const std::string& prefix, Activation act) const {
    DenseLayer<T> d;
    d.weight = matrix(prefix + "/weight");
    d.bias = vector(prefix + "/bias");
    d.activation = act;
    if (d.bias.size() != d.weight.cols()) {
      throw FormatError(FormatErrc::malformed, 0, prefix + ": bias/weight shape mismatch");
    }
    return d;
  }

  LstmParams<T> lstm(const std::string& prefix) const {
    LstmParams<T> p;
    p.w_input = matrix(prefix + "/w_input");
    p.w_hidden = matrix(prefix + "/w_hidden");
    p.bias = vector(prefix + "/bias");
    const auto h = p.w_hidden.rows();
    if (p.w_hidden.cols() != 4 * h || p.w_input.cols() != 4 * h || p.bias.size() != 4 * h) {
      throw FormatError(FormatErrc::malformed, 0, prefix + ": inconsistent LSTM shapes");
    }
    return p;
  }

  EncoderParams<T> encoder(const std::string& prefix) const {
    EncoderParams<T> e;
    std::size_t n = 0;
    while (has(prefix + "/encoder/" + std::to_string(n) + "/weight")) ++n;
    if (n == 0) throw FormatError(FormatErrc::malformed, 0, "missing encoder under " + prefix);
    for (std::size_t k = 0; k < n; ++k) {
      e.layers.push_back(dense(prefix + "/encoder/" + std::to_string(k),
                               k + 1 == n ? Activation::linear : Activation::relu));
    }
    return e;
  }

  StreamParams<T> stream(ViewId view, bool with_head) const {
    const std::string prefix = "view/" + to_string(view);
    StreamParams<T> s;
    s.view = view;
    s.encoder = encoder(prefix);
    s.blstm.forward = lstm(prefix + "/blstm/forward");
    s.blstm.backward = lstm(prefix + "/blstm/backward");
    const std::string meta = "meta/" + prefix + "/delta_window";
    if (has(meta)) s.delta.window = static_cast<std::size_t>(scalar(meta));
    if (with_head) s.head = dense(prefix + "/head", Activation::linear);
    return s;
  }

 private:
  const Checkpoint& ckpt_;
};

template <typename T>
void append_stream(Checkpoint& ckpt, const StreamParams<T>& s) {
  for_each_tensor(
      [&](const std::string& name, TensorInfo info, const auto& t) {
        ckpt.tensors.push_back(make_record(name, info.rank, t));
      },
      s);
  ckpt.tensors.push_back(scalar_record<T>("meta/view/" + to_string(s.view) + "/delta_window",
                                          static_cast<double>(s.delta.window)));
}

}  // namespace

ModelKind Checkpoint::kind() const {
  bool head = false;
  for (const auto& t : tensors) {
    if (t.name.starts_with("fusion/")) return ModelKind::multiview;
    if (t.name.find("/head/") != std::string::npos) head = true;
  }
  return head ? ModelKind::stream : ModelKind::encoder;
}

Precision Checkpoint::precision() const {
  if (tensors.empty()) throw FormatError(FormatErrc::malformed, 0, "checkpoint has no tensors");
  return tensors.front().precision;
}

std::vector<ViewId> Checkpoint::views() const {
  std::set<int> angles;
  for (const auto& t : tensors) {
    if (!t.name.starts_with("view/")) continue;
    const std::size_t end = t.name.find('/', 5);
    const int angle = std::stoi(t.name.substr(5, end - 5));
    if (!ViewId::is_valid(angle)) {
      throw FormatError(FormatErrc::invalid_view, 0, "tensor " + t.name + " names an invalid view");
    }
    angles.insert(angle);
  }
  std::vector<ViewId> views;
  for (const int a : angles) views.push_back(ViewId::from_degrees(a));
  return views;
}

const TensorRecord* Checkpoint::find(const std::string& name) const {
  for (const auto& t : tensors) {
    if (t.name == name) return &t;
  }
  return nullptr;
}

void write_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  Writer w;
  w.bytes(kCheckpointMagic, 4);
  w.pod<std::uint32_t>(kCheckpointVersion);
  w.pod<std::uint32_t>(static_cast<std::uint32_t>(ckpt.tensors.size()));
  for (const auto& t : ckpt.tensors) {
    w.pod<std::uint32_t>(static_cast<std::uint32_t>(t.name.size()));
    w.bytes(t.name.data(), t.name.size());
    w.pod<std::uint32_t>(static_cast<std::uint32_t>(t.dims.size()));
    for (const auto d : t.dims) w.pod<std::uint32_t>(d);
    w.pod<std::uint8_t>(static_cast<std::uint8_t>(t.precision));
    for (const double v : t.values) {
      if (t.precision == Precision::f32) {
        w.pod<float>(static_cast<float>(v));
      } else {
        w.pod<double>(v);
      }
    }
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError(FormatErrc::io, 0, "cannot write " + path.string());
  out.write(w.buffer().data(), static_cast<std::streamsize>(w.buffer().size()));
  if (!out) throw FormatError(FormatErrc::io, 0, "write failed for " + path.string());
}

Checkpoint read_checkpoint(const std::filesystem::path& path) {
  Reader r(slurp(path));
  char magic[4];
  r.bytes(magic, 4, "magic");
  for (std::size_t i = 0; i < 4; ++i) {
    if (magic[i] != kCheckpointMagic[i]) {
      throw FormatError(FormatErrc::bad_magic, i, "expected \"MVLM\" in " + path.string());
    }
  }
  const auto version_at = r.pos();
  const auto version = r.pod<std::uint32_t>("version");
  if (version != kCheckpointVersion) {
    throw FormatError(FormatErrc::unsupported_version, version_at,
                      "version " + std::to_string(version) + ", expected " +
                          std::to_string(kCheckpointVersion));
  }
  const auto count = r.pod<std::uint32_t>("tensor count");
  Checkpoint ckpt;
  for (std::uint32_t i = 0; i < count; ++i) {
    TensorRecord t;
    const auto name_len = r.pod<std::uint32_t>("name length");
    if (name_len > r.remaining()) {
      throw FormatError(FormatErrc::truncated, r.pos(), "tensor name runs past end of file");
    }
    t.name.resize(name_len);
    r.bytes(t.name.data(), name_len, "tensor name");
    const auto rank_at = r.pos();
    const auto rank = r.pod<std::uint32_t>("rank");
    if (rank > 2) {
      throw FormatError(FormatErrc::malformed, rank_at, "rank " + std::to_string(rank));
    }
    std::uint64_t n = 1;
    for (std::uint32_t d = 0; d < rank; ++d) {
      t.dims.push_back(r.pod<std::uint32_t>("dimension"));
      n *= t.dims.back();
    }
    const auto prec_at = r.pos();
    const auto prec = r.pod<std::uint8_t>("precision");
    if (prec != 1 && prec != 2) {
      throw FormatError(FormatErrc::malformed, prec_at, "precision code " + std::to_string(prec));
    }
    t.precision = static_cast<Precision>(prec);
    const std::uint64_t width = t.precision == Precision::f32 ? 4 : 8;
    if (n * width > r.remaining()) {
      throw FormatError(FormatErrc::truncated, r.pos(),
                        "tensor " + t.name + " needs " + std::to_string(n * width) + " bytes, " +
                            std::to_string(r.remaining()) + " available");
    }
    t.values.reserve(n);
    for (std::uint64_t k = 0; k < n; ++k) {
      t.values.push_back(t.precision == Precision::f32 ? r.pod<float>("value")
                                                       : r.pod<double>("value"));
    }
    ckpt.tensors.push_back(std::move(t));
  }
  if (r.remaining() != 0) {
    throw FormatError(FormatErrc::malformed, r.pos(), "trailing bytes after last tensor");
  }
  return ckpt;
}

template <typename T>
Checkpoint to_checkpoint(const StreamParams<T>& model) {
  Checkpoint ckpt;
  append_stream(ckpt, model);
  return ckpt;
}

template <typename T>
Checkpoint to_checkpoint(const MultiViewParams<T>& model) {
  Checkpoint ckpt;
  for_each_tensor(
      [&](const std::string& name, TensorInfo info, const auto& t) {
        ckpt.tensors.push_back(make_record(name, info.rank, t));
      },
      model);
  for (const auto& [view, stream] : model.streams) {
    ckpt.tensors.push_back(scalar_record<T>("meta/view/" + to_string(view) + "/delta_window",
                                            static_cast<double>(stream.delta.window)));
  }
  return ckpt;
}

template <typename T>
Checkpoint to_checkpoint(const EncoderParams<T>& encoder, ViewId view) {
  Checkpoint ckpt;
  for (std::size_t k = 0; k < encoder.layers.size(); ++k) {
    const std::string prefix = "view/" + to_string(view) + "/encoder/" + std::to_string(k);
    ckpt.tensors.push_back(make_record(prefix + "/weight", 2, encoder.layers[k].weight));
    ckpt.tensors.push_back(make_record(prefix + "/bias", 1, encoder.layers[k].bias));
  }
  return ckpt;
}

template <typename T>
StreamParams<T> stream_from_checkpoint(const Checkpoint& ckpt) {
  if (ckpt.kind() != ModelKind::stream) {
    throw FormatError(FormatErrc::malformed, 0, "checkpoint does not hold a single-stream model");
  }
  const std::vector<ViewId> views = ckpt.views();
  if (views.size() != 1) {
    throw FormatError(FormatErrc::malformed, 0, "single-stream checkpoint names several views");
  }
  return TensorSource<T>(ckpt).stream(views.front(), true);
}

template <typename T>
MultiViewParams<T> multiview_from_checkpoint(const Checkpoint& ckpt) {
  if (ckpt.kind() != ModelKind::multiview) {
    throw FormatError(FormatErrc::malformed, 0, "checkpoint does not hold a multi-view model");
  }
  TensorSource<T> src(ckpt);
  MultiViewParams<T> m;
  for (const ViewId v : ckpt.views()) m.streams.emplace(v, src.stream(v, false));
  m.fusion.forward = src.lstm("fusion/blstm/forward");
  m.fusion.backward = src.lstm("fusion/blstm/backward");
  m.head = src.dense("head", Activation::linear);
  return m;
}

template <typename T>
EncoderParams<T> encoder_from_checkpoint(const Checkpoint& ckpt, ViewId view) {
  return TensorSource<T>(ckpt).encoder("view/" + to_string(view));
}

template <typename T>
MultiViewParams<T> load_multiview(const std::filesystem::path& path,
                                  const std::optional<std::vector<ViewId>>& expected_views) {
  const Checkpoint ckpt = read_checkpoint(path);
  if (expected_views) require_views(ckpt.views(), *expected_views, "load " + path.string());
  return multiview_from_checkpoint<T>(ckpt);
}

#define MVLIP_INSTANTIATE(T)                                                                  \
  template Checkpoint to_checkpoint<T>(const StreamParams<T>&);                               \
  template Checkpoint to_checkpoint<T>(const MultiViewParams<T>&);                            \
  template Checkpoint to_checkpoint<T>(const EncoderParams<T>&, ViewId);                      \
  template StreamParams<T> stream_from_checkpoint<T>(const Checkpoint&);                      \
  template MultiViewParams<T> multiview_from_checkpoint<T>(const Checkpoint&);                \
  template EncoderParams<T> encoder_from_checkpoint<T>(const Checkpoint&, ViewId);            \
  template MultiViewParams<T> load_multiview<T>(const std::filesystem::path&,                 \
                                                const std::optional<std::vector<ViewId>>&);

MVLIP_INSTANTIATE(float)
MVLIP_INSTANTIATE(double)

}  // namespace mvlip
