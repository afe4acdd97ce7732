#include "dsn/layers.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <stdexcept>

#include "dsn/losses.hpp"

namespace dsn {

namespace {

// Standard deviation of a unit normal truncated to [-2, 2]; dividing the
// parent sigma by this makes the realized std equal the requested one.
constexpr double kTruncStdCorrection = 0.87962566103423978;

double truncated_normal(SplitMix64& rng) {
  for (;;) {
    double z = rng.normal();
    if (z >= -2.0 && z <= 2.0) return z;
  }
}

int64_t flat_features(const Shape& s) { return shape_numel(s); }

[[noreturn]] void layer_fail(size_t idx, const std::string& what) {
  throw std::invalid_argument("layer " + std::to_string(idx) + ": " + what);
}

}  // namespace

LayerSpec LayerSpec::dense(int units) {
  LayerSpec l{LayerKind::dense};
  l.units = units;
  return l;
}
LayerSpec LayerSpec::conv(int kh, int kw, int cin, int cout, Pad pad) {
  LayerSpec l{LayerKind::conv2d};
  l.kh = kh;
  l.kw = kw;
  l.cin = cin;
  l.cout = cout;
  l.pad = pad;
  return l;
}
LayerSpec LayerSpec::maxpool() { return LayerSpec{LayerKind::maxpool}; }
LayerSpec LayerSpec::upsample() { return LayerSpec{LayerKind::upsample}; }
LayerSpec LayerSpec::relu() { return LayerSpec{LayerKind::relu}; }
LayerSpec LayerSpec::softmax() { return LayerSpec{LayerKind::softmax}; }
LayerSpec LayerSpec::sigmoid() { return LayerSpec{LayerKind::sigmoid}; }
LayerSpec LayerSpec::grl() { return LayerSpec{LayerKind::grl}; }
LayerSpec LayerSpec::reshape(Shape per_sample) {
  LayerSpec l{LayerKind::reshape};
  l.target = std::move(per_sample);
  return l;
}
LayerSpec LayerSpec::quat_normalize() { return LayerSpec{LayerKind::quat_normalize}; }

std::vector<Param*> ParameterSet::all() {
  std::vector<Param*> out;
  for (auto* group : {&theta_c, &theta_p_s, &theta_p_t, &theta_d, &theta_g, &theta_z})
    for (auto& p : *group) out.push_back(&p);
  return out;
}

std::vector<const Param*> ParameterSet::all() const {
  std::vector<const Param*> out;
  for (auto* group : {&theta_c, &theta_p_s, &theta_p_t, &theta_d, &theta_g, &theta_z})
    for (auto& p : *group) out.push_back(&p);
  return out;
}

int64_t ParameterSet::total_count() const {
  int64_t n = 0;
  for (const Param* p : all()) n += p->value.size();
  return n;
}

Param* ParameterSet::find(const std::string& name) {
  for (Param* p : all())
    if (p->name == name) return p;
  return nullptr;
}

Shape stack_output_shape(const StackSpec& spec, const Shape& input_sample_shape) {
  Shape s = input_sample_shape;
  for (size_t i = 0; i < spec.size(); ++i) {
    const LayerSpec& l = spec[i];
    switch (l.kind) {
      case LayerKind::dense:
        if (l.units <= 0) layer_fail(i, "dense needs positive units");
        s = {static_cast<int>(l.units)};
        break;
      case LayerKind::conv2d: {
        if (s.size() != 3) layer_fail(i, "conv2d needs an HWC input, got " + shape_str(s));
        if (s[2] != l.cin) layer_fail(i, "conv2d expects " + std::to_string(l.cin) + " channels, input has " + std::to_string(s[2]));
        int h = l.pad == Pad::same ? s[0] : s[0] - l.kh + 1;
        int w = l.pad == Pad::same ? s[1] : s[1] - l.kw + 1;
        if (h <= 0 || w <= 0) layer_fail(i, "conv2d kernel larger than input " + shape_str(s));
        s = {h, w, l.cout};
        break;
      }
      case LayerKind::maxpool:
        if (s.size() != 3 || s[0] % 2 || s[1] % 2) layer_fail(i, "maxpool needs even HWC input, got " + shape_str(s));
        s = {s[0] / 2, s[1] / 2, s[2]};
        break;
      case LayerKind::upsample:
        if (s.size() != 3) layer_fail(i, "upsample needs an HWC input, got " + shape_str(s));
        s = {s[0] * 2, s[1] * 2, s[2]};
        break;
      case LayerKind::reshape:
        if (shape_numel(l.target) != flat_features(s))
          layer_fail(i, "reshape to " + shape_str(l.target) + " from " + shape_str(s));
        s = l.target;
        break;
      case LayerKind::softmax:
      case LayerKind::quat_normalize:
        if (s.size() != 1) layer_fail(i, "row op needs a flat input, got " + shape_str(s));
        break;
      case LayerKind::relu:
      case LayerKind::sigmoid:
      case LayerKind::grl:
        break;
    }
  }
  return s;
}

int64_t stack_param_count(const StackSpec& spec, const Shape& input_sample_shape) {
  Shape s = input_sample_shape;
  int64_t count = 0;
  for (const LayerSpec& l : spec) {
    if (l.kind == LayerKind::dense) {
      int64_t in = flat_features(s);
      count += in * l.units + l.units;
    } else if (l.kind == LayerKind::conv2d) {
      count += static_cast<int64_t>(l.kh) * l.kw * l.cin * l.cout + l.cout;
    }
    s = stack_output_shape({l}, s);
  }
  return count;
}

Shape init_stack(const StackSpec& spec, const Shape& input_sample_shape, const std::string& prefix, SplitMix64& rng,
                 std::vector<Param>& out) {
  Shape s = input_sample_shape;
  for (size_t i = 0; i < spec.size(); ++i) {
    const LayerSpec& l = spec[i];
    if (l.kind == LayerKind::dense) {
      int in = static_cast<int>(flat_features(s));
      Tensor w({in, l.units});
      double sigma = std::sqrt(2.0 / in) / kTruncStdCorrection;
      for (double& v : w.data) v = truncated_normal(rng) * sigma;
      out.push_back({prefix + std::to_string(i) + ".w", std::move(w)});
      out.push_back({prefix + std::to_string(i) + ".b", Tensor({l.units}, 0.0)});
    } else if (l.kind == LayerKind::conv2d) {
      Tensor w({l.kh, l.kw, l.cin, l.cout});
      double sigma = std::sqrt(2.0 / (l.kh * l.kw * l.cin)) / kTruncStdCorrection;
      for (double& v : w.data) v = truncated_normal(rng) * sigma;
      out.push_back({prefix + std::to_string(i) + ".w", std::move(w)});
      out.push_back({prefix + std::to_string(i) + ".b", Tensor({l.cout}, 0.0)});
    }
    s = stack_output_shape({l}, s);
  }
  return s;
}

Var apply_stack(const StackSpec& spec, const std::vector<Var>& params, Var input) {
  Var x = input;
  size_t pi = 0;
  auto next_param = [&](size_t layer) {
    if (pi >= params.size()) layer_fail(layer, "ran out of bound parameters");
    return params[pi++];
  };
  for (size_t i = 0; i < spec.size(); ++i) {
    const LayerSpec& l = spec[i];
    try {
      switch (l.kind) {
        case LayerKind::dense: {
          const Tensor& t = x.graph->value(x);
          if (t.rank() > 2) x = reshape(x, {t.shape[0], static_cast<int>(t.size() / t.shape[0])});
          Var w = next_param(i);
          Var b = next_param(i);
          x = add_row(matmul(x, w), b);
          break;
        }
        case LayerKind::conv2d: {
          Var w = next_param(i);
          Var b = next_param(i);
          x = add_channel_bias(conv2d(x, w, l.pad), b);
          break;
        }
        case LayerKind::maxpool:
          x = maxpool2x2(x);
          break;
        case LayerKind::upsample:
          x = upsample2x2(x);
          break;
        case LayerKind::relu:
          x = relu(x);
          break;
        case LayerKind::softmax:
          x = softmax_rows(x);
          break;
        case LayerKind::sigmoid:
          x = sigmoid(x);
          break;
        case LayerKind::grl:
          x = gradient_reversal(x);
          break;
        case LayerKind::reshape: {
          Shape target = l.target;
          target.insert(target.begin(), x.graph->value(x).shape[0]);
          x = reshape(x, target);
          break;
        }
        case LayerKind::quat_normalize:
          x = quat_normalize_rows(x);
          break;
      }
    } catch (const std::invalid_argument& e) {
      layer_fail(i, e.what());
    }
  }
  if (pi != params.size())
    throw std::invalid_argument("apply_stack: " + std::to_string(params.size()) + " parameters bound, " +
                                std::to_string(pi) + " consumed");
  return x;
}

// ---------------------------------------------------------------------------
// checkpoint container

namespace {

constexpr char kMagic[8] = {'D', 'S', 'N', 'C', 'K', 'P', 'T', '1'};

template <typename T>
void write_pod(std::ofstream& f, T v) {
  f.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_pod(std::ifstream& f) {
  T v{};
  f.read(reinterpret_cast<char*>(&v), sizeof(T));
  return v;
}

}  // namespace

void save_checkpoint(const ParameterSet& params, const std::string& bin_path, const std::string& index_path) {
  std::ofstream bin(bin_path, std::ios::binary | std::ios::trunc);
  if (!bin) throw std::runtime_error("save_checkpoint: cannot open " + bin_path);
  std::ofstream idx(index_path, std::ios::trunc);
  if (!idx) throw std::runtime_error("save_checkpoint: cannot open " + index_path);

  auto all = params.all();
  bin.write(kMagic, sizeof(kMagic));
  write_pod<uint64_t>(bin, all.size());
  for (const Param* p : all) {
    int64_t offset = bin.tellp();
    write_pod<uint32_t>(bin, static_cast<uint32_t>(p->name.size()));
    bin.write(p->name.data(), static_cast<std::streamsize>(p->name.size()));
    write_pod<uint32_t>(bin, static_cast<uint32_t>(p->value.rank()));
    for (int d : p->value.shape) write_pod<int64_t>(bin, d);
    bin.write(reinterpret_cast<const char*>(p->value.data.data()),
              static_cast<std::streamsize>(p->value.data.size() * sizeof(double)));
    idx << p->name << " " << shape_str(p->value.shape) << " offset=" << offset << " count=" << p->value.size() << "\n";
  }
  if (!bin || !idx) throw std::runtime_error("save_checkpoint: write failed for " + bin_path);
}

void load_checkpoint(ParameterSet& params, const std::string& bin_path) {
  std::ifstream bin(bin_path, std::ios::binary);
  if (!bin) throw std::runtime_error("load_checkpoint: cannot open " + bin_path);
  char magic[8];
  bin.read(magic, 8);
  if (!bin || std::memcmp(magic, kMagic, 8) != 0)
    throw std::runtime_error("load_checkpoint: " + bin_path + " is not a parameter container");
  uint64_t count = read_pod<uint64_t>(bin);

  std::map<std::string, Tensor> records;
  for (uint64_t r = 0; r < count; ++r) {
    uint32_t name_len = read_pod<uint32_t>(bin);
    std::string name(name_len, '\0');
    bin.read(name.data(), name_len);
    uint32_t rank = read_pod<uint32_t>(bin);
    Shape shape(rank);
    for (uint32_t d = 0; d < rank; ++d) shape[d] = static_cast<int>(read_pod<int64_t>(bin));
    Tensor t(shape);
    bin.read(reinterpret_cast<char*>(t.data.data()), static_cast<std::streamsize>(t.data.size() * sizeof(double)));
    if (!bin) throw std::runtime_error("load_checkpoint: truncated container " + bin_path);
    records.emplace(std::move(name), std::move(t));
  }

  for (Param* p : params.all()) {
    auto it = records.find(p->name);
    if (it == records.end())
      throw std::runtime_error("load_checkpoint: incompatible checkpoint, missing " + p->name);
    if (it->second.shape != p->value.shape)
      throw std::runtime_error("load_checkpoint: incompatible checkpoint, " + p->name + " has shape " +
                               shape_str(it->second.shape) + ", expected " + shape_str(p->value.shape));
    p->value = it->second;
  }
}

}  // namespace dsn
