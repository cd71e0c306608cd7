#include <bit>
#include <cmath>
#include <fstream>
#include <iterator>
#include <string>

#include "fkp/error.hpp"
#include "fkp/flow.hpp"

// FKP1 layout, all integers and doubles little-endian:
//   "FKP1" | scale u8 | D u32 | blocks u8 |
//   per block:
//     log_scale f64[D] | shift f64[D] | running_mean f64[D] | running_var f64[D] |
//     perm u32[D] |
//     scale-net then shift-net, each layer: rows u32 | cols u32 | weight f64[rows*cols] | bias f64[cols] |
//     cap count u32 | scale_cap f64[count]

namespace fkp::flow {

namespace {

class Writer {
 public:
  void bytes(std::string_view s) { out_.insert(out_.end(), s.begin(), s.end()); }
  void u8(std::uint8_t v) { out_.push_back(v); }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void f64(double v) {
    const auto bits = std::bit_cast<std::uint64_t>(v);
    for (int i = 0; i < 8; ++i) out_.push_back(static_cast<std::uint8_t>(bits >> (8 * i)));
  }
  void f64s(const std::vector<double>& values) {
    for (double v : values) f64(v);
  }
  std::vector<std::uint8_t> take() { return std::move(out_); }

 private:
  std::vector<std::uint8_t> out_;
};

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> data) : data_(data) {}

  std::size_t offset() const { return pos_; }

  void need(std::size_t n, const char* what) {
    if (data_.size() - pos_ < n) throw FormatError(std::string("model file truncated while reading ") + what, pos_);
  }
  std::uint8_t u8(const char* what) {
    need(1, what);
    return data_[pos_++];
  }
  std::uint32_t u32(const char* what) {
    need(4, what);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(data_[pos_ + i]) << (8 * i);
    pos_ += 4;
    return v;
  }
  double f64(const char* what) {
    need(8, what);
    std::uint64_t bits = 0;
    for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(data_[pos_ + i]) << (8 * i);
    pos_ += 8;
    const double v = std::bit_cast<double>(bits);
    if (!std::isfinite(v)) throw FormatError(std::string("non-finite value in ") + what, pos_ - 8);
    return v;
  }
  std::vector<double> f64s(std::size_t n, const char* what) {
    need(n * 8, what);
    std::vector<double> out(n);
    for (double& v : out) v = f64(what);
    return out;
  }

 private:
  std::span<const std::uint8_t> data_;
  std::size_t pos_ = 0;
};

void write_fcn(Writer& w, const Fcn& net) {
  for (const Linear& layer : net.layers) {
    w.u32(static_cast<std::uint32_t>(layer.in));
    w.u32(static_cast<std::uint32_t>(layer.out));
    w.f64s(layer.weight);
    w.f64s(layer.bias);
  }
}

Fcn read_fcn(Reader& r, std::size_t expected_in, std::size_t expected_out) {
  Fcn net;
  std::size_t in = expected_in;
  for (std::size_t l = 0; l < kFcnDepth; ++l) {
    const std::size_t at = r.offset();
    Linear& layer = net.layers[l];
    layer.in = r.u32("layer rows");
    layer.out = r.u32("layer cols");
    if (layer.in != in || layer.out == 0 || layer.out > (1u << 20) || (l + 1 == kFcnDepth && layer.out != expected_out))
      throw FormatError("FCN layer dimensions do not chain", at);
    layer.weight = r.f64s(layer.in * layer.out, "layer weights");
    layer.bias = r.f64s(layer.out, "layer biases");
    in = layer.out;
  }
  return net;
}

}  // namespace

std::vector<std::uint8_t> save(const FlowModel& model) {
  if (!model.frozen()) throw ContractError("save: model must be frozen");
  if (model.scale() < 0 || model.scale() > 255 || model.blocks().size() > 255)
    throw ContractError("save: scale or block count does not fit the file format");
  Writer w;
  w.bytes("FKP1");
  w.u8(static_cast<std::uint8_t>(model.scale()));
  w.u32(static_cast<std::uint32_t>(model.dim()));
  w.u8(static_cast<std::uint8_t>(model.blocks().size()));
  for (const FlowBlock& blk : model.blocks()) {
    w.f64s(blk.log_scale);
    w.f64s(blk.shift);
    w.f64s(blk.running_mean);
    w.f64s(blk.running_var);
    for (std::size_t p : blk.perm) w.u32(static_cast<std::uint32_t>(p));
    write_fcn(w, blk.scale_net);
    write_fcn(w, blk.shift_net);
    w.u32(static_cast<std::uint32_t>(blk.scale_cap.size()));
    w.f64s(blk.scale_cap);
  }
  return w.take();
}

FlowModel load(std::span<const std::uint8_t> bytes) {
  Reader r(bytes);
  r.need(4, "magic");
  if (!(bytes[0] == 'F' && bytes[1] == 'K' && bytes[2] == 'P' && bytes[3] == '1')) throw FormatError("bad magic, expected FKP1", 0);
  for (int i = 0; i < 4; ++i) r.u8("magic");
  const int scale = r.u8("scale");
  const std::size_t dim_at = r.offset();
  const std::size_t dim = r.u32("dimension");
  if (dim < 2 || dim > (1u << 20)) throw FormatError("implausible latent dimension " + std::to_string(dim), dim_at);
  const std::size_t block_count = r.u8("block count");
  if (block_count == 0) throw FormatError("model has no blocks", r.offset() - 1);

  std::vector<FlowBlock> blocks;
  for (std::size_t b = 0; b < block_count; ++b) {
    FlowBlock blk;
    blk.log_scale = r.f64s(dim, "log scales");
    blk.shift = r.f64s(dim, "shifts");
    blk.running_mean = r.f64s(dim, "running means");
    const std::size_t var_at = r.offset();
    blk.running_var = r.f64s(dim, "running variances");
    for (double v : blk.running_var)
      if (!(v + kNormEpsilon > 0.0)) throw FormatError("negative running variance", var_at);
    const std::size_t perm_at = r.offset();
    blk.perm.resize(dim);
    std::vector<bool> seen(dim, false);
    for (std::size_t& p : blk.perm) {
      p = r.u32("permutation");
      if (p >= dim || seen[p]) throw FormatError("permutation is not a permutation of 0..D-1", perm_at);
      seen[p] = true;
    }
    const std::size_t cond = FlowModel::transforms_second_half(b) ? (dim + 1) / 2 : dim / 2;
    blk.scale_net = read_fcn(r, cond, dim - cond);
    blk.shift_net = read_fcn(r, cond, dim - cond);
    const std::size_t cap_at = r.offset();
    const std::size_t caps = r.u32("cap count");
    if (caps != dim - cond) throw FormatError("scale cap count does not match the coupling half", cap_at);
    blk.scale_cap = r.f64s(caps, "scale caps");
    blocks.push_back(std::move(blk));
  }
  if (r.offset() != bytes.size()) throw FormatError("trailing bytes after model", r.offset());
  return FlowModel(scale, dim, std::move(blocks), true);
}

void write_model(std::ostream& out, const FlowModel& model) {
  const auto bytes = save(model);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

FlowModel read_model(std::istream& in) {
  const std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return load(bytes);
}

void save_model(const std::filesystem::path& path, const FlowModel& model) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot write model file " + path.string());
  write_model(out, model);
}

FlowModel load_model(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot read model file " + path.string());
  return read_model(in);
}

}  // namespace fkp::flow
