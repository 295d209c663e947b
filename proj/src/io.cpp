#include "lga/io.hpp"

#include <bit>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>

#include "lga/errors.hpp"

static_assert(std::endian::native == std::endian::little,
              "file formats are little-endian; serialize on a LE host");

namespace lga {

namespace {

constexpr std::uint32_t kFileVersion = 1;

class Writer {
 public:
  explicit Writer(const std::string& path) : path_(path), tmp_(path + ".tmp") {
    out_.open(tmp_, std::ios::binary | std::ios::trunc);
    if (!out_) throw IoError("cannot open " + tmp_ + " for writing");
  }
  void bytes(const void* p, std::size_t n) {
    out_.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
  }
  void u32(std::uint32_t v) { bytes(&v, 4); }
  void u64(std::uint64_t v) { bytes(&v, 8); }
  void f64(double v) { bytes(&v, 8); }
  void f64s(const double* p, std::size_t n) { bytes(p, 8 * n); }
  void commit() {
    out_.flush();
    if (!out_) throw IoError("write failure on " + tmp_);
    out_.close();
    if (std::rename(tmp_.c_str(), path_.c_str()) != 0)
      throw IoError("cannot rename " + tmp_ + " to " + path_);
  }

 private:
  std::string path_, tmp_;
  std::ofstream out_;
};

class Reader {
 public:
  explicit Reader(const std::string& path) : path_(path), in_(path, std::ios::binary) {
    if (!in_) throw IoError("cannot open " + path + " for reading");
  }
  void bytes(void* p, std::size_t n) {
    in_.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
    if (static_cast<std::size_t>(in_.gcount()) != n)
      throw IoError(path_ + ": truncated payload");
  }
  std::uint32_t u32() { std::uint32_t v; bytes(&v, 4); return v; }
  std::uint64_t u64() { std::uint64_t v; bytes(&v, 8); return v; }
  double f64() { double v; bytes(&v, 8); return v; }
  void f64s(double* p, std::size_t n) { bytes(p, 8 * n); }
  void expect_magic(const char magic[4]) {
    char got[4];
    bytes(got, 4);
    if (std::memcmp(got, magic, 4) != 0) throw IoError(path_ + ": bad magic");
  }
  void expect_version() {
    std::uint32_t v = u32();
    if (v != kFileVersion)
      throw IoError(path_ + ": version mismatch (got " + std::to_string(v) + ")");
  }

 private:
  std::string path_;
  std::ifstream in_;
};

}  // namespace

void save_dataset(const Dataset& dataset, const std::string& path) {
  Writer w(path);
  w.bytes("LGAF", 4);
  w.u32(kFileVersion);
  w.u64(dataset.seed);
  const TaskConfig& c = dataset.config;
  w.u32(static_cast<std::uint32_t>(c.channels));
  w.u32(static_cast<std::uint32_t>(c.height));
  w.u32(static_cast<std::uint32_t>(c.width));
  w.u32(static_cast<std::uint32_t>(c.classes));
  w.u32(static_cast<std::uint32_t>(c.patch));
  w.f64(c.strength);
  w.f64(c.noise);
  w.u32(static_cast<std::uint32_t>(c.distractors));
  w.u64(dataset.instances.size());
  for (const Instance& inst : dataset.instances) {
    w.u32(inst.label);
    w.f64s(inst.patch_center.data(), 2);
    w.f64s(inst.patch_box.data(), 4);
    w.f64s(inst.features.data(), inst.features.size());
  }
  w.commit();
}

Dataset load_dataset(const std::string& path) {
  Reader r(path);
  r.expect_magic("LGAF");
  r.expect_version();
  Dataset ds;
  ds.seed = r.u64();
  TaskConfig& c = ds.config;
  c.channels = r.u32();
  c.height = r.u32();
  c.width = r.u32();
  c.classes = r.u32();
  c.patch = r.u32();
  c.strength = r.f64();
  c.noise = r.f64();
  c.distractors = r.u32();
  std::uint64_t count = r.u64();
  std::size_t hw = c.height * c.width;
  ds.instances.reserve(count);
  for (std::uint64_t i = 0; i < count; ++i) {
    Instance inst;
    inst.label = r.u32();
    r.f64s(inst.patch_center.data(), 2);
    r.f64s(inst.patch_box.data(), 4);
    std::vector<double> feat(c.channels * hw);
    r.f64s(feat.data(), feat.size());
    inst.features = Tensor({c.channels, c.height, c.width}, std::move(feat));
    ds.instances.push_back(std::move(inst));
  }
  return ds;
}

void save_model(const LgaModel& model, bool lga_enabled, const std::string& path) {
  Writer w(path);
  w.bytes("LGAM", 4);
  w.u32(kFileVersion);
  const LgaConfig& c = model.config;
  w.u32(static_cast<std::uint32_t>(c.channels));
  w.u32(static_cast<std::uint32_t>(c.height));
  w.u32(static_cast<std::uint32_t>(c.width));
  w.u32(static_cast<std::uint32_t>(c.masks));
  w.u32(static_cast<std::uint32_t>(c.classes));
  w.u32(static_cast<std::uint32_t>(c.hidden));
  w.u32(static_cast<std::uint32_t>(c.down_channels));
  w.u32(lga_enabled ? 1 : 0);
  w.f64(c.s_ratio);
  w.f64(c.lambda_reg);
  w.f64(c.lambda_lga);
  model.for_each_weight([&](const char*, const Tensor& t) {
    w.u32(static_cast<std::uint32_t>(t.rank()));
    for (std::size_t e : t.shape()) w.u32(static_cast<std::uint32_t>(e));
    w.f64s(t.data(), t.size());
  });
  w.commit();
}

SavedModel load_model(const std::string& path) {
  Reader r(path);
  r.expect_magic("LGAM");
  r.expect_version();
  SavedModel sm;
  LgaConfig& c = sm.model.config;
  c.channels = r.u32();
  c.height = r.u32();
  c.width = r.u32();
  c.masks = r.u32();
  c.classes = r.u32();
  c.hidden = r.u32();
  c.down_channels = r.u32();
  sm.lga_enabled = r.u32() != 0;
  c.s_ratio = r.f64();
  c.lambda_reg = r.f64();
  c.lambda_lga = r.f64();
  sm.model.for_each_weight([&](const char* name, Tensor& t) {
    std::uint32_t rank = r.u32();
    if (rank < 1 || rank > 4) throw IoError(path + ": bad tensor rank for " + name);
    std::vector<std::size_t> shape(rank);
    for (auto& e : shape) e = r.u32();
    std::vector<double> data(Tensor::extent_product(shape));
    r.f64s(data.data(), data.size());
    t = Tensor(std::move(shape), std::move(data));
  });
  return sm;
}

void write_pgm(const Tensor& mask, const std::string& path) {
  if (mask.rank() != 2) throw std::invalid_argument("write_pgm: mask must be rank-2");
  std::size_t h = mask.shape()[0], w = mask.shape()[1];
  std::ostringstream out;
  out << "P2\n" << w << " " << h << "\n255\n";
  for (std::size_t i = 0; i < h; ++i) {
    for (std::size_t j = 0; j < w; ++j) {
      int px = static_cast<int>(std::floor(255.0 * mask[i * w + j] + 0.5));
      out << (j ? " " : "") << px;
    }
    out << "\n";
  }
  write_text_atomic(path, out.str());
}

void write_text_atomic(const std::string& path, const std::string& content) {
  std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open " + tmp + " for writing");
    out << content;
    out.flush();
    if (!out) throw IoError("write failure on " + tmp);
  }
  if (std::rename(tmp.c_str(), path.c_str()) != 0)
    throw IoError("cannot rename " + tmp + " to " + path);
}

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.12g", v);
  return buf;
}

}  // namespace lga
