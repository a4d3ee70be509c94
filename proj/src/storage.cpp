#include "cape/storage.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <limits>

#include "cape/errors.hpp"

namespace cape {
namespace {

class ByteWriter {
 public:
  void bytes(const char* data, std::size_t n) { out_.insert(out_.end(), data, data + n); }
  void u8(std::uint8_t v) { out_.push_back(v); }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void f32(double v) { u32(std::bit_cast<std::uint32_t>(static_cast<float>(v))); }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
  std::vector<std::uint8_t> take() { return std::move(out_); }

 private:
  std::vector<std::uint8_t> out_;
};

class ByteReader {
 public:
  ByteReader(const std::vector<std::uint8_t>& in, const char* what) : in_(in), what_(what) {}

  void need(std::size_t n) const {
    if (in_.size() - pos_ < n) {
      throw FormatError(std::string(what_) + ": truncated at byte " + std::to_string(pos_));
    }
  }
  void bytes(char* dst, std::size_t n) {
    need(n);
    std::memcpy(dst, in_.data() + pos_, n);
    pos_ += n;
  }
  std::uint8_t u8() {
    need(1);
    return in_[pos_++];
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(in_[pos_ + i]) << (8 * i);
    pos_ += 4;
    return v;
  }
  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(in_[pos_ + i]) << (8 * i);
    pos_ += 8;
    return v;
  }
  double f32() { return static_cast<double>(std::bit_cast<float>(u32())); }
  double f64() { return std::bit_cast<double>(u64()); }
  std::size_t remaining() const { return in_.size() - pos_; }

 private:
  const std::vector<std::uint8_t>& in_;
  const char* what_;
  std::size_t pos_ = 0;
};

std::uint32_t checked_u32(std::size_t v, const char* field) {
  if (v > std::numeric_limits<std::uint32_t>::max()) {
    throw FormatError(std::string("dataset ") + field + " does not fit in 32 bits");
  }
  return static_cast<std::uint32_t>(v);
}

DatasetHeader read_header(ByteReader& r) {
  char magic[8];
  r.bytes(magic, sizeof magic);
  if (!std::equal(std::begin(magic), std::end(magic), std::begin(kDatasetMagic))) {
    throw FormatError("dataset: bad magic, expected CAPESEG1");
  }
  DatasetHeader h;
  h.version = r.u32();
  if (h.version != kDatasetVersion) {
    throw FormatError("dataset: unsupported format version " + std::to_string(h.version));
  }
  h.n_samples = r.u32();
  h.channels = r.u32();
  h.height = r.u32();
  h.width = r.u32();
  h.flags = r.u32();
  if (h.n_samples == 0 || h.channels == 0 || h.height == 0 || h.width == 0) {
    throw FormatError("dataset: header has a zero extent");
  }
  if ((h.flags & ~kFlagTrueP) != 0) throw FormatError("dataset: unknown flag bits set");
  return h;
}

}  // namespace

std::uint64_t DatasetHeader::file_bytes() const {
  const std::uint64_t plane = std::uint64_t{height} * width;
  std::uint64_t per_sample = std::uint64_t{4} * channels * plane + plane;
  if (flags & kFlagTrueP) per_sample += std::uint64_t{4} * plane;
  return kDatasetHeaderBytes + per_sample * n_samples;
}

std::vector<std::uint8_t> encode_dataset(const Dataset& dataset) {
  dataset.validate();
  ByteWriter w;
  w.bytes(kDatasetMagic, sizeof kDatasetMagic);
  w.u32(kDatasetVersion);
  w.u32(checked_u32(dataset.size(), "sample count"));
  w.u32(checked_u32(dataset.channels(), "channel count"));
  w.u32(checked_u32(dataset.height(), "height"));
  w.u32(checked_u32(dataset.width(), "width"));
  const bool with_p = dataset.has_true_p();
  w.u32(with_p ? kFlagTrueP : 0u);
  for (const auto& s : dataset.samples) {
    for (double v : s.inputs.data()) w.f32(v);
    for (double y : s.outcomes.data()) w.u8(y != 0.0 ? 1 : 0);
    if (with_p) {
      for (double p : s.true_p->data()) w.f32(p);
    }
  }
  return w.take();
}

DatasetHeader decode_dataset_header(const std::vector<std::uint8_t>& bytes) {
  ByteReader r(bytes, "dataset");
  return read_header(r);
}

Dataset decode_dataset(const std::vector<std::uint8_t>& bytes) {
  ByteReader r(bytes, "dataset");
  const DatasetHeader h = read_header(r);
  if (bytes.size() != h.file_bytes()) {
    throw FormatError("dataset: file is " + std::to_string(bytes.size()) + " bytes, header implies " +
                      std::to_string(h.file_bytes()));
  }
  Dataset ds;
  ds.format_version = h.version;
  ds.config.channels = h.channels;
  ds.config.height = h.height;
  ds.config.width = h.width;
  const bool with_p = (h.flags & kFlagTrueP) != 0;
  const std::size_t plane = std::size_t{h.height} * h.width;
  ds.samples.reserve(h.n_samples);
  for (std::uint32_t i = 0; i < h.n_samples; ++i) {
    Sample s{Tensor({h.channels, h.height, h.width}), Tensor({h.height, h.width}), std::nullopt};
    for (auto& v : s.inputs.data()) v = r.f32();
    for (std::size_t j = 0; j < plane; ++j) {
      const std::uint8_t y = r.u8();
      if (y > 1) {
        throw FormatError("dataset: sample " + std::to_string(i) + " has non-binary outcome " +
                          std::to_string(y));
      }
      s.outcomes[j] = y;
    }
    if (with_p) {
      Tensor p({h.height, h.width});
      for (auto& v : p.data()) v = r.f32();
      s.true_p = std::move(p);
    }
    ds.samples.push_back(std::move(s));
  }
  ds.validate();
  return ds;
}

void write_dataset(const std::filesystem::path& path, const Dataset& dataset) {
  write_file(path, encode_dataset(dataset));
}

Dataset read_dataset(const std::filesystem::path& path) { return decode_dataset(read_file(path)); }

std::vector<std::uint8_t> encode_checkpoint(const ModelParams& params) {
  params.validate();
  ByteWriter w;
  w.bytes(kCheckpointMagic, sizeof kCheckpointMagic);
  w.u32(kCheckpointVersion);
  const auto blocks = params.blocks();
  w.u32(static_cast<std::uint32_t>(blocks.size()));
  for (std::size_t b = 0; b < blocks.size(); ++b) {
    const auto name = ModelParams::kBlockNames[b];
    w.u32(static_cast<std::uint32_t>(name.size()));
    w.bytes(name.data(), name.size());
    w.u32(static_cast<std::uint32_t>(blocks[b]->rank()));
    for (auto extent : blocks[b]->shape()) w.u32(static_cast<std::uint32_t>(extent));
    for (double v : blocks[b]->data()) w.f64(v);
  }
  return w.take();
}

ModelParams decode_checkpoint(const std::vector<std::uint8_t>& bytes) {
  ByteReader r(bytes, "checkpoint");
  char magic[8];
  r.bytes(magic, sizeof magic);
  if (!std::equal(std::begin(magic), std::end(magic), std::begin(kCheckpointMagic))) {
    throw FormatError("checkpoint: bad magic, expected CAPECKP1");
  }
  const std::uint32_t version = r.u32();
  if (version != kCheckpointVersion) {
    throw FormatError("checkpoint: unsupported format version " + std::to_string(version));
  }
  const std::uint32_t count = r.u32();
  if (count != ModelParams::kBlockNames.size()) {
    throw FormatError("checkpoint: expected 4 parameter blocks, found " + std::to_string(count));
  }
  std::array<Tensor, 4> blocks;
  for (std::uint32_t b = 0; b < count; ++b) {
    const std::uint32_t name_len = r.u32();
    if (name_len > 64) throw FormatError("checkpoint: block name too long");
    std::string name(name_len, '\0');
    r.bytes(name.data(), name_len);
    if (name != ModelParams::kBlockNames[b]) {
      throw FormatError("checkpoint: unexpected block '" + name + "' at position " + std::to_string(b));
    }
    const std::uint32_t rank = r.u32();
    if (rank == 0 || rank > 4) throw FormatError("checkpoint: block '" + name + "' has bad rank");
    Shape shape(rank);
    for (auto& extent : shape) {
      extent = r.u32();
      if (extent == 0) throw FormatError("checkpoint: block '" + name + "' has a zero extent");
    }
    Tensor t(shape);
    r.need(8 * t.size());
    for (auto& v : t.data()) v = r.f64();
    blocks[b] = std::move(t);
  }
  if (r.remaining() != 0) throw FormatError("checkpoint: trailing bytes after last block");
  ModelParams p;
  p.k1 = std::move(blocks[0]);
  p.b1 = std::move(blocks[1]);
  p.k2 = std::move(blocks[2]);
  p.b2 = std::move(blocks[3]);
  try {
    p.validate();
  } catch (const std::invalid_argument& e) {
    throw FormatError(std::string("checkpoint: ") + e.what());
  }
  return p;
}

void write_checkpoint(const std::filesystem::path& path, const ModelParams& params) {
  write_file(path, encode_checkpoint(params));
}

ModelParams read_checkpoint(const std::filesystem::path& path) {
  return decode_checkpoint(read_file(path));
}

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path.string());
  return std::vector<std::uint8_t>(std::istreambuf_iterator<char>(in), {});
}

void write_file(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw FormatError("write failed for " + path.string());
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError("cannot write " + path.string());
  out << text;
  if (!out) throw FormatError("write failed for " + path.string());
}

}  // namespace cape
