#pragma once

#include <string>
#include <vector>

#include "dsn/graph.hpp"
#include "dsn/rng.hpp"

namespace dsn {

enum class LayerKind { dense, conv2d, maxpool, upsample, relu, softmax, sigmoid, grl, reshape, quat_normalize };

struct LayerSpec {
  LayerKind kind;
  int units = 0;                     // dense
  int kh = 0, kw = 0, cin = 0, cout = 0;  // conv2d
  Pad pad = Pad::same;
  Shape target;                      // reshape (per-sample shape)

  static LayerSpec dense(int units);
  static LayerSpec conv(int kh, int kw, int cin, int cout, Pad pad = Pad::same);
  static LayerSpec maxpool();
  static LayerSpec upsample();
  static LayerSpec relu();
  static LayerSpec softmax();
  static LayerSpec sigmoid();
  static LayerSpec grl();
  static LayerSpec reshape(Shape per_sample);
  static LayerSpec quat_normalize();
};

using StackSpec = std::vector<LayerSpec>;

struct Param {
  std::string name;
  Tensor value;
};

// The six trainable groups. Membership is disjoint and total; shapes never
// change after construction.
struct ParameterSet {
  std::vector<Param> theta_c;    // shared encoder
  std::vector<Param> theta_p_s;  // source private encoder
  std::vector<Param> theta_p_t;  // target private encoder
  std::vector<Param> theta_d;    // decoder
  std::vector<Param> theta_g;    // task head
  std::vector<Param> theta_z;    // domain classifier

  std::vector<Param*> all();
  std::vector<const Param*> all() const;
  int64_t total_count() const;
  Param* find(const std::string& name);
};

// Per-sample output shape of a stack; validates the spec against the input.
Shape stack_output_shape(const StackSpec& spec, const Shape& input_sample_shape);

// Closed-form trainable-value count for one stack given its input shape.
int64_t stack_param_count(const StackSpec& spec, const Shape& input_sample_shape);

// He-style init: weights from a truncated normal whose realized standard
// deviation is sqrt(2 / fan_in) (truncation at two parent deviations, with the
// variance correction folded in); biases zero. Deterministic in rng state.
// Appends (name, tensor) pairs to `out` and returns the output sample shape.
Shape init_stack(const StackSpec& spec, const Shape& input_sample_shape, const std::string& prefix, SplitMix64& rng,
                 std::vector<Param>& out);

// Applies the stack on the graph. `params` must hold one Var per trainable
// tensor in stack order; shape errors name the layer index.
Var apply_stack(const StackSpec& spec, const std::vector<Var>& params, Var input);

// Flat binary container of (name, shape, raw little-endian doubles) records
// plus a plain-text index; round trips bit-exactly.
void save_checkpoint(const ParameterSet& params, const std::string& bin_path, const std::string& index_path);
// Loads by name; every parameter in `params` must be present with a matching
// shape. Extra records in the file are ignored.
void load_checkpoint(ParameterSet& params, const std::string& bin_path);

}  // namespace dsn
